//! Finite graphs with optional semi-infinite tails.
//!
//! The core of a graph is a finite set of named vertices joined by oriented
//! unit-length edges. A tail is an implicit ray of unit edges hanging off one
//! core vertex; site 0 of the ray is identified with that vertex and the ray
//! is oriented outward.
//!
//! Chains carry one coefficient per core edge and one per tail. A locally
//! finite 1-cycle must be constant along a ray (the boundary cancels at every
//! interior site), so a single scalar per tail is enough to represent the
//! open homology of the whole graph.

use std::collections::{BTreeMap, HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type VertexId = usize;
pub type EdgeId = usize;
pub type TailId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("duplicate vertex name `{0}`")]
    DuplicateVertex(String),
    #[error("duplicate tail name `{0}`")]
    DuplicateTail(String),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("self-loop at vertex `{0}`")]
    SelfLoop(String),
    #[error("multiple edges between `{0}` and `{1}`")]
    MultiEdge(String, String),
    #[error("no path between `{0}` and `{1}`")]
    NoPath(String, String),
    #[error("graph is disconnected")]
    Disconnected,
    #[error("empty vertex set")]
    EmptySet,
    #[error("chain is not a cycle (boundary norm {0:e})")]
    NotACycle(f64),
    #[error("chain is not in the span of the basis (residual {0:e})")]
    NotInSpan(f64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TailSpec {
    pub name: String,
    pub attach: VertexId,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Graph {
    names: Vec<String>,
    index: HashMap<String, VertexId>,
    edges: Vec<(VertexId, VertexId)>,
    tails: Vec<TailSpec>,
    /// Neighbors of each vertex with the connecting edge, sorted by neighbor index.
    adjacency: Vec<Vec<(VertexId, EdgeId)>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, name: &str) -> Result<VertexId, GraphError> {
        if self.index.contains_key(name) || self.tails.iter().any(|t| t.name == name) {
            return Err(GraphError::DuplicateVertex(name.to_string()));
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.adjacency.push(Vec::new());
        Ok(id)
    }

    pub fn add_edge(&mut self, from: VertexId, to: VertexId) -> Result<EdgeId, GraphError> {
        for v in [from, to] {
            if v >= self.names.len() {
                return Err(GraphError::UnknownVertex(format!("#{v}")));
            }
        }
        if from == to {
            return Err(GraphError::SelfLoop(self.names[from].clone()));
        }
        if self.edge_between(from, to).is_some() {
            return Err(GraphError::MultiEdge(
                self.names[from].clone(),
                self.names[to].clone(),
            ));
        }
        let id = self.edges.len();
        self.edges.push((from, to));
        for (a, b) in [(from, to), (to, from)] {
            let adj = &mut self.adjacency[a];
            let pos = adj.partition_point(|&(n, _)| n < b);
            adj.insert(pos, (b, id));
        }
        Ok(id)
    }

    pub fn add_tail(&mut self, name: &str, attach: VertexId) -> Result<TailId, GraphError> {
        if attach >= self.names.len() {
            return Err(GraphError::UnknownVertex(format!("#{attach}")));
        }
        if self.index.contains_key(name) {
            return Err(GraphError::DuplicateVertex(name.to_string()));
        }
        if self.tails.iter().any(|t| t.name == name) {
            return Err(GraphError::DuplicateTail(name.to_string()));
        }
        self.tails.push(TailSpec {
            name: name.to_string(),
            attach,
        });
        Ok(self.tails.len() - 1)
    }

    pub fn vertex_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn tail_count(&self) -> usize {
        self.tails.len()
    }

    pub fn vertex_name(&self, v: VertexId) -> &str {
        &self.names[v]
    }

    pub fn vertex_id(&self, name: &str) -> Option<VertexId> {
        self.index.get(name).copied()
    }

    pub fn edge(&self, e: EdgeId) -> (VertexId, VertexId) {
        self.edges[e]
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn tails(&self) -> &[TailSpec] {
        &self.tails
    }

    pub fn tail_id(&self, name: &str) -> Option<TailId> {
        self.tails.iter().position(|t| t.name == name)
    }

    pub fn neighbors(&self, v: VertexId) -> &[(VertexId, EdgeId)] {
        &self.adjacency[v]
    }

    pub fn edge_between(&self, a: VertexId, b: VertexId) -> Option<EdgeId> {
        self.adjacency[a]
            .binary_search_by_key(&b, |&(n, _)| n)
            .ok()
            .map(|i| self.adjacency[a][i].1)
    }

    /// Core degree plus the number of tails attached at `v`.
    pub fn degree(&self, v: VertexId) -> usize {
        self.adjacency[v].len() + self.tails.iter().filter(|t| t.attach == v).count()
    }

    /// Vertices of total degree below two.
    pub fn ends(&self) -> Vec<VertexId> {
        (0..self.vertex_count()).filter(|&v| self.degree(v) < 2).collect()
    }

    /// Breadth-first search from `root`: hop distance and (parent, edge) for every reached vertex.
    pub fn bfs(&self, root: VertexId) -> Vec<Option<(usize, Option<(VertexId, EdgeId)>)>> {
        let mut out = vec![None; self.vertex_count()];
        let mut queue = VecDeque::new();
        out[root] = Some((0, None));
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            let d = out[v].map(|(d, _)| d).unwrap_or(0);
            for &(n, e) in &self.adjacency[v] {
                if out[n].is_none() {
                    out[n] = Some((d + 1, Some((v, e))));
                    queue.push_back(n);
                }
            }
        }
        out
    }

    pub fn distance(&self, u: VertexId, v: VertexId) -> Result<usize, GraphError> {
        self.bfs(u)[v]
            .map(|(d, _)| d)
            .ok_or_else(|| self.no_path(u, v))
    }

    /// Maximal pairwise distance of a vertex set.
    pub fn set_diameter(&self, set: &[VertexId]) -> Result<usize, GraphError> {
        if set.is_empty() {
            return Err(GraphError::EmptySet);
        }
        let mut diameter = 0;
        for (i, &u) in set.iter().enumerate() {
            let dist = self.bfs(u);
            for &v in &set[i + 1..] {
                let d = dist[v].map(|(d, _)| d).ok_or_else(|| self.no_path(u, v))?;
                diameter = diameter.max(d);
            }
        }
        Ok(diameter)
    }

    /// Vertices of one BFS geodesic from `u` to `v`, endpoints included.
    pub fn shortest_path(&self, u: VertexId, v: VertexId) -> Result<Vec<VertexId>, GraphError> {
        let tree = self.bfs(u);
        if tree[v].is_none() {
            return Err(self.no_path(u, v));
        }
        let mut path = vec![v];
        let mut cur = v;
        while let Some((_, Some((parent, _)))) = tree[cur] {
            path.push(parent);
            cur = parent;
        }
        path.reverse();
        Ok(path)
    }

    pub fn is_connected(&self) -> bool {
        self.vertex_count() == 0 || self.bfs(0).iter().all(Option::is_some)
    }

    /// Signed chain of the walk through consecutive adjacent vertices.
    pub fn walk_chain(&self, walk: &[VertexId]) -> Option<Chain1> {
        let mut chain = Chain1::zero();
        for w in walk.windows(2) {
            let e = self.edge_between(w[0], w[1])?;
            let sign = if self.edges[e].0 == w[0] { 1.0 } else { -1.0 };
            chain.add_edge(e, sign);
        }
        Some(chain)
    }

    pub fn boundary(&self, chain: &Chain1) -> Chain0 {
        let mut out = Chain0::zero();
        for (&e, &a) in &chain.core {
            let (p, q) = self.edges[e];
            out.add(q, a);
            out.add(p, -a);
        }
        for (&t, &a) in &chain.tails {
            out.add(self.tails[t].attach, -a);
        }
        out
    }

    /// Basis of the cycle space (equal to open first homology for graphs).
    ///
    /// Fundamental cycles of the BFS spanning tree rooted at vertex 0, one
    /// per non-tree edge in edge order, followed by one cycle per tail after
    /// the first: in along tail 0, through the tree, out along tail `i`.
    pub fn cycle_basis(&self) -> Result<Vec<Chain1>, GraphError> {
        if self.vertex_count() == 0 {
            return Ok(Vec::new());
        }
        let tree = self.bfs(0);
        if tree.iter().any(Option::is_none) {
            return Err(GraphError::Disconnected);
        }
        let to_root = |mut v: VertexId| {
            let mut chain = Chain1::zero();
            while let Some((_, Some((parent, e)))) = tree[v] {
                let sign = if self.edges[e].0 == v { 1.0 } else { -1.0 };
                chain.add_edge(e, sign);
                v = parent;
            }
            chain
        };
        let tree_path = |from: VertexId, to: VertexId| to_root(from).sub(&to_root(to));
        let tree_edges: Vec<bool> = {
            let mut mark = vec![false; self.edge_count()];
            for (_, parent) in tree.iter().flatten() {
                if let Some((_, e)) = parent {
                    mark[*e] = true;
                }
            }
            mark
        };

        let mut basis = Vec::new();
        for (e, &(p, q)) in self.edges.iter().enumerate() {
            if tree_edges[e] {
                continue;
            }
            let mut cycle = tree_path(q, p);
            cycle.add_edge(e, 1.0);
            basis.push(cycle);
        }
        if let Some(first) = self.tails.first() {
            for (t, tail) in self.tails.iter().enumerate().skip(1) {
                let mut cycle = tree_path(first.attach, tail.attach);
                cycle.add_tail(0, -1.0);
                cycle.add_tail(t, 1.0);
                basis.push(cycle);
            }
        }
        Ok(basis)
    }

    /// Coordinates of a cycle in `basis`, i.e. its homology class.
    pub fn cycle_coordinates(
        &self,
        basis: &[Chain1],
        chain: &Chain1,
        tol: f64,
    ) -> Result<Vec<f64>, GraphError> {
        let bnorm = self.boundary(chain).norm_inf();
        if bnorm > tol {
            return Err(GraphError::NotACycle(bnorm));
        }
        if basis.is_empty() {
            let r = chain.norm_inf();
            return if r > tol {
                Err(GraphError::NotInSpan(r))
            } else {
                Ok(Vec::new())
            };
        }
        let rows = self.edge_count() + self.tail_count();
        let flatten = |c: &Chain1| {
            let mut v = DVector::zeros(rows);
            for (&e, &a) in &c.core {
                v[e] = a;
            }
            for (&t, &a) in &c.tails {
                v[self.edge_count() + t] = a;
            }
            v
        };
        let mut a = DMatrix::zeros(rows, basis.len());
        for (j, b) in basis.iter().enumerate() {
            a.set_column(j, &flatten(b));
        }
        let target = flatten(chain);
        let x = a
            .clone()
            .svd(true, true)
            .solve(&target, 1e-12)
            .map_err(|_| GraphError::NotInSpan(f64::INFINITY))?;
        let residual = (&a * &x - &target).amax();
        if residual > tol {
            return Err(GraphError::NotInSpan(residual));
        }
        Ok(x.iter().copied().collect())
    }

    fn no_path(&self, u: VertexId, v: VertexId) -> GraphError {
        GraphError::NoPath(self.names[u].clone(), self.names[v].clone())
    }
}

/// Real 1-chain: finitely supported on core edges plus one constant per tail.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Chain1 {
    core: BTreeMap<EdgeId, f64>,
    tails: BTreeMap<TailId, f64>,
}

impl Chain1 {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn edge(e: EdgeId, coefficient: f64) -> Self {
        let mut c = Self::zero();
        c.add_edge(e, coefficient);
        c
    }

    pub fn add_edge(&mut self, e: EdgeId, coefficient: f64) {
        accumulate(&mut self.core, e, coefficient);
    }

    pub fn add_tail(&mut self, t: TailId, coefficient: f64) {
        accumulate(&mut self.tails, t, coefficient);
    }

    pub fn coefficient(&self, e: EdgeId) -> f64 {
        self.core.get(&e).copied().unwrap_or(0.0)
    }

    pub fn tail_coefficient(&self, t: TailId) -> f64 {
        self.tails.get(&t).copied().unwrap_or(0.0)
    }

    pub fn core(&self) -> &BTreeMap<EdgeId, f64> {
        &self.core
    }

    pub fn tail_map(&self) -> &BTreeMap<TailId, f64> {
        &self.tails
    }

    pub fn is_zero(&self) -> bool {
        self.core.is_empty() && self.tails.is_empty()
    }

    pub fn add(&self, other: &Chain1) -> Chain1 {
        let mut out = self.clone();
        for (&e, &a) in &other.core {
            out.add_edge(e, a);
        }
        for (&t, &a) in &other.tails {
            out.add_tail(t, a);
        }
        out
    }

    pub fn sub(&self, other: &Chain1) -> Chain1 {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Chain1 {
        let mut out = Chain1::zero();
        for (&e, &a) in &self.core {
            out.add_edge(e, s * a);
        }
        for (&t, &a) in &self.tails {
            out.add_tail(t, s * a);
        }
        out
    }

    pub fn norm_inf(&self) -> f64 {
        self.core
            .values()
            .chain(self.tails.values())
            .fold(0.0, |m, a| m.max(a.abs()))
    }
}

/// Real 0-chain with finite support.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Chain0 {
    coefficients: BTreeMap<VertexId, f64>,
}

impl Chain0 {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: VertexId, a: f64) {
        accumulate(&mut self.coefficients, v, a);
    }

    pub fn get(&self, v: VertexId) -> f64 {
        self.coefficients.get(&v).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VertexId, f64)> + '_ {
        self.coefficients.iter().map(|(&v, &a)| (v, a))
    }

    pub fn norm_inf(&self) -> f64 {
        self.coefficients.values().fold(0.0, |m, a| m.max(a.abs()))
    }
}

fn accumulate(map: &mut BTreeMap<usize, f64>, key: usize, a: f64) {
    if a == 0.0 {
        return;
    }
    let entry = map.entry(key).or_insert(0.0);
    *entry += a;
    if *entry == 0.0 {
        map.remove(&key);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(n: usize, edges: &[(usize, usize)]) -> Graph {
        let mut g = Graph::new();
        for i in 0..n {
            g.add_vertex(&format!("v{i}")).unwrap();
        }
        for &(a, b) in edges {
            g.add_edge(a, b).unwrap();
        }
        g
    }

    fn triangle() -> Graph {
        build(3, &[(0, 1), (1, 2), (2, 0)])
    }

    #[test]
    fn distances() {
        let t = triangle();
        assert_eq!(t.distance(0, 1).unwrap(), 1);
        let p = build(3, &[(0, 1), (1, 2)]);
        assert_eq!(p.distance(0, 2).unwrap(), 2);
        let split = build(4, &[(0, 1), (2, 3)]);
        assert!(matches!(split.distance(0, 3), Err(GraphError::NoPath(..))));
    }

    #[test]
    fn diameters() {
        let p = build(3, &[(0, 1), (1, 2)]);
        assert_eq!(p.set_diameter(&[0]).unwrap(), 0);
        assert_eq!(p.set_diameter(&[0, 2]).unwrap(), 2);
        assert_eq!(triangle().set_diameter(&[0, 1, 2]).unwrap(), 1);
        let split = build(4, &[(0, 1), (2, 3)]);
        assert!(split.set_diameter(&[0, 3]).is_err());
    }

    #[test]
    fn rejects_bad_edges() {
        let mut g = build(2, &[(0, 1)]);
        assert!(matches!(g.add_edge(1, 0), Err(GraphError::MultiEdge(..))));
        assert!(matches!(g.add_edge(1, 1), Err(GraphError::SelfLoop(_))));
        assert!(matches!(g.add_vertex("v0"), Err(GraphError::DuplicateVertex(_))));
        g.add_tail("t", 0).unwrap();
        assert!(matches!(g.add_tail("t", 1), Err(GraphError::DuplicateTail(_))));
    }

    #[test]
    fn boundary_examples() {
        let t = triangle();
        let b = t.boundary(&Chain1::edge(0, 1.0));
        assert_eq!(b.get(1), 1.0);
        assert_eq!(b.get(0), -1.0);
        let mut cycle = Chain1::zero();
        for e in 0..3 {
            cycle.add_edge(e, 1.0);
        }
        assert!(t.boundary(&cycle).is_zero());

        let mut g = build(4, &[(0, 1), (1, 2), (2, 3)]);
        let t0 = g.add_tail("t0", 3).unwrap();
        let mut c = Chain1::zero();
        c.add_tail(t0, 1.0);
        let b = g.boundary(&c);
        assert_eq!(b.get(3), -1.0);
        assert_eq!(b.iter().count(), 1);
    }

    #[test]
    fn basis_of_tree_is_empty() {
        let g = build(4, &[(0, 1), (1, 2), (1, 3)]);
        assert!(g.cycle_basis().unwrap().is_empty());
    }

    #[test]
    fn discretized_line_has_one_class() {
        let mut g = build(2, &[(0, 1)]);
        g.add_tail("left", 0).unwrap();
        g.add_tail("right", 1).unwrap();
        let basis = g.cycle_basis().unwrap();
        assert_eq!(basis.len(), 1);
        let b = &basis[0];
        assert_eq!(b.coefficient(0), 1.0);
        // outward tail orientation: flow enters along `left`, leaves along `right`
        assert_eq!(b.tail_coefficient(0), -1.0);
        assert_eq!(b.tail_coefficient(1), 1.0);
        assert!(g.boundary(b).is_zero());
    }

    #[test]
    fn star_with_three_tails() {
        let mut g = build(1, &[]);
        for name in ["a", "b", "c"] {
            g.add_tail(name, 0).unwrap();
        }
        let basis = g.cycle_basis().unwrap();
        assert_eq!(basis.len(), 2);
        for b in &basis {
            assert!(g.boundary(b).is_zero());
        }
    }

    #[test]
    fn disconnected_basis_fails() {
        let g = build(4, &[(0, 1), (2, 3)]);
        assert_eq!(g.cycle_basis(), Err(GraphError::Disconnected));
    }

    #[test]
    fn coordinates() {
        let t = triangle();
        let basis = t.cycle_basis().unwrap();
        assert_eq!(basis.len(), 1);
        assert_eq!(t.cycle_coordinates(&basis, &Chain1::zero(), 1e-12).unwrap(), vec![0.0]);
        let x = t.cycle_coordinates(&basis, &basis[0], 1e-12).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        let x = t.cycle_coordinates(&basis, &basis[0].scale(2.0), 1e-12).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!(matches!(
            t.cycle_coordinates(&basis, &Chain1::edge(0, 1.0), 1e-12),
            Err(GraphError::NotACycle(_))
        ));
    }

    #[test]
    fn walks() {
        let t = triangle();
        let c = t.walk_chain(&[0, 2, 1]).unwrap();
        assert_eq!(c.coefficient(2), -1.0);
        assert_eq!(c.coefficient(1), -1.0);
        let b = t.boundary(&c);
        assert_eq!(b.get(1), 1.0);
        assert_eq!(b.get(0), -1.0);
        assert!(build(3, &[(0, 1)]).walk_chain(&[0, 2]).is_none());
    }
}
