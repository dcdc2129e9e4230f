//! Tree-like normalization of local interaction terms.
//!
//! Each interaction set α is enlarged to α′ by geodesics between its
//! members, the induced subgraph on α′ is cut down to a BFS spanning tree
//! Γ_α, and every ordered pair of vertices in α′ gets the unique oriented
//! tree path between them as a 1-chain. The potential is extended to the
//! added vertices trivially: it simply does not depend on them.
//!
//! All tie-breaking follows the canonical vertex order, so the output is
//! reproducible. The resulting form depends on these choices; closedness
//! and the boundary identity do not.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::graph::{Chain1, EdgeId, Graph, GraphError, VertexId};
use crate::model::LagrangianSystem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeformError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("vertex set does not induce a connected subgraph")]
    Disconnected,
    #[error("vertex `{vertex}` is not in the support of term `{term}`")]
    VertexNotInTerm { term: String, vertex: String },
    #[error("term `{term}` has explicit paths but none joining `{from}` and `{to}`")]
    IncompletePaths {
        term: String,
        from: String,
        to: String,
    },
}

/// Enlarges `set` by one BFS geodesic per pair, pairs taken in canonical order.
pub fn connect_set(g: &Graph, set: &[VertexId]) -> Result<Vec<VertexId>, GraphError> {
    let mut sorted: Vec<VertexId> = set.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut out: BTreeSet<VertexId> = sorted.iter().copied().collect();
    for (i, &u) in sorted.iter().enumerate() {
        for &v in &sorted[i + 1..] {
            out.extend(g.shortest_path(u, v)?);
        }
    }
    Ok(out.into_iter().collect())
}

/// BFS spanning tree of the subgraph induced on `set`, rooted at its lowest-index vertex.
pub fn induced_subtree(g: &Graph, set: &[VertexId]) -> Result<Vec<EdgeId>, TreeformError> {
    let members: BTreeSet<VertexId> = set.iter().copied().collect();
    let Some(&root) = members.first() else {
        return Ok(Vec::new());
    };
    let mut seen = BTreeSet::from([root]);
    let mut queue = VecDeque::from([root]);
    let mut tree = Vec::new();
    while let Some(v) = queue.pop_front() {
        for &(n, e) in g.neighbors(v) {
            if members.contains(&n) && seen.insert(n) {
                tree.push(e);
                queue.push_back(n);
            }
        }
    }
    if seen.len() != members.len() {
        return Err(TreeformError::Disconnected);
    }
    tree.sort_unstable();
    Ok(tree)
}

/// A term together with its subtree and oriented paths.
#[derive(Debug, Clone)]
pub struct TreeLikeTerm {
    pub term: usize,
    /// α′, sorted.
    pub support: Vec<VertexId>,
    /// Edges of Γ_α, sorted.
    pub tree_edges: Vec<EdgeId>,
    /// Whether Γ_α is a tree spanning α′. Always true unless paths were given explicitly.
    pub is_tree: bool,
    /// Whether the paths came from explicit walks rather than normalization.
    pub explicit: bool,
    /// Walk from `j` to `k` and its chain, for `j < k`.
    paths: BTreeMap<(VertexId, VertexId), (Vec<VertexId>, Chain1)>,
}

impl TreeLikeTerm {
    /// Builds the term from a tree on `support`, computing all pairwise tree paths.
    pub fn from_tree(
        g: &Graph,
        term: usize,
        support: Vec<VertexId>,
        tree_edges: Vec<EdgeId>,
    ) -> Self {
        let mut adjacency: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
        for &e in &tree_edges {
            let (a, b) = g.edge(e);
            adjacency.entry(a).or_default().push(b);
            adjacency.entry(b).or_default().push(a);
        }
        let mut paths = BTreeMap::new();
        for (i, &j) in support.iter().enumerate() {
            // parent pointers of the tree rooted at j
            let mut parent: BTreeMap<VertexId, VertexId> = BTreeMap::new();
            let mut queue = VecDeque::from([j]);
            let mut seen = BTreeSet::from([j]);
            while let Some(v) = queue.pop_front() {
                for &n in adjacency.get(&v).into_iter().flatten() {
                    if seen.insert(n) {
                        parent.insert(n, v);
                        queue.push_back(n);
                    }
                }
            }
            for &k in &support[i + 1..] {
                let mut walk = vec![k];
                let mut cur = k;
                while let Some(&p) = parent.get(&cur) {
                    walk.push(p);
                    cur = p;
                }
                walk.reverse();
                let chain = g.walk_chain(&walk).expect("tree edges are graph edges");
                paths.insert((j, k), (walk, chain));
            }
        }
        let is_tree = tree_edges.len() + 1 == support.len();
        Self {
            term,
            support,
            tree_edges,
            is_tree,
            explicit: false,
            paths,
        }
    }

    /// Builds the term from explicit walks, one per pair of `vertices`.
    ///
    /// This bypasses normalization: the walks need not lie in a common tree,
    /// which is how non-closed forms are reproduced.
    pub fn from_walks(
        g: &Graph,
        term: usize,
        name: &str,
        vertices: &[VertexId],
        walks: &[Vec<VertexId>],
    ) -> Result<Self, TreeformError> {
        let mut support: BTreeSet<VertexId> = vertices.iter().copied().collect();
        let mut edges = BTreeSet::new();
        let mut paths = BTreeMap::new();
        for walk in walks {
            let (first, last) = (walk[0], walk[walk.len() - 1]);
            let oriented: Vec<VertexId> = if first <= last {
                walk.clone()
            } else {
                walk.iter().rev().copied().collect()
            };
            let chain = g.walk_chain(&oriented).ok_or(GraphError::NoPath(
                g.vertex_name(first).to_string(),
                g.vertex_name(last).to_string(),
            ))?;
            for w in oriented.windows(2) {
                edges.insert(g.edge_between(w[0], w[1]).expect("walk checked"));
            }
            support.extend(oriented.iter().copied());
            paths.insert((oriented[0], oriented[oriented.len() - 1]), (oriented, chain));
        }
        let mut sorted: Vec<VertexId> = vertices.to_vec();
        sorted.sort_unstable();
        for (i, &j) in sorted.iter().enumerate() {
            for &k in &sorted[i + 1..] {
                if !paths.contains_key(&(j, k)) {
                    return Err(TreeformError::IncompletePaths {
                        term: name.to_string(),
                        from: g.vertex_name(j).to_string(),
                        to: g.vertex_name(k).to_string(),
                    });
                }
            }
        }
        let support: Vec<VertexId> = support.into_iter().collect();
        let tree_edges: Vec<EdgeId> = edges.into_iter().collect();
        let is_tree = tree_edges.len() + 1 == support.len()
            && induced_tree_connected(g, &support, &tree_edges);
        Ok(Self {
            term,
            support,
            tree_edges,
            is_tree,
            explicit: true,
            paths,
        })
    }

    /// Oriented path from `j` to `k` as a chain; `l_kj = -l_jk`.
    pub fn tree_path(&self, j: VertexId, k: VertexId) -> Option<Chain1> {
        if !self.support.contains(&j) || !self.support.contains(&k) {
            return None;
        }
        if j == k {
            return Some(Chain1::zero());
        }
        if j < k {
            self.paths.get(&(j, k)).map(|(_, c)| c.clone())
        } else {
            self.paths.get(&(k, j)).map(|(_, c)| c.scale(-1.0))
        }
    }

    /// All stored paths `(j, k, walk, chain)` with `j < k`.
    pub fn paths(&self) -> impl Iterator<Item = (VertexId, VertexId, &[VertexId], &Chain1)> {
        self.paths
            .iter()
            .map(|(&(j, k), (w, c))| (j, k, w.as_slice(), c))
    }
}

fn induced_tree_connected(g: &Graph, support: &[VertexId], edges: &[EdgeId]) -> bool {
    let Some(&root) = support.first() else {
        return true;
    };
    let mut seen = BTreeSet::from([root]);
    let mut changed = true;
    while changed {
        changed = false;
        for &e in edges {
            let (a, b) = g.edge(e);
            if seen.contains(&a) != seen.contains(&b) {
                seen.insert(a);
                seen.insert(b);
                changed = true;
            }
        }
    }
    seen.len() == support.len()
}

/// A system with every term in tree-like form.
#[derive(Debug, Clone)]
pub struct TreeLikeSystem<'a> {
    pub system: &'a LagrangianSystem,
    pub terms: Vec<TreeLikeTerm>,
}

impl TreeLikeSystem<'_> {
    pub fn tree_path(
        &self,
        term: usize,
        j: VertexId,
        k: VertexId,
    ) -> Result<Chain1, TreeformError> {
        let g = &self.system.graph;
        let t = &self.terms[term];
        t.tree_path(j, k).ok_or_else(|| TreeformError::VertexNotInTerm {
            term: self.system.terms[t.term].name.clone(),
            vertex: g.vertex_name(if t.support.contains(&j) { k } else { j }).to_string(),
        })
    }

    /// Largest diameter among the enlarged supports α′.
    pub fn locality_bound(&self) -> Result<usize, GraphError> {
        self.terms.iter().try_fold(0, |m, t| {
            Ok(m.max(self.system.graph.set_diameter(&t.support)?))
        })
    }

    /// Walks for every pair of each term's original vertex set, for writing back to a system file.
    pub fn annotations(&self) -> Vec<Vec<Vec<VertexId>>> {
        self.terms
            .iter()
            .map(|t| {
                let alpha = &self.system.terms[t.term].vertices;
                t.paths()
                    .filter(|(j, k, _, _)| alpha.contains(j) && alpha.contains(k))
                    .map(|(_, _, w, _)| w.to_vec())
                    .collect()
            })
            .collect()
    }

    pub fn all_trees(&self) -> bool {
        self.terms.iter().all(|t| t.is_tree)
    }
}

/// Puts every term of `sys` in tree-like form; terms with explicit walks keep them.
pub fn normalize(sys: &LagrangianSystem) -> Result<TreeLikeSystem<'_>, TreeformError> {
    let g = &sys.graph;
    let terms = sys
        .terms
        .iter()
        .enumerate()
        .map(|(i, term)| {
            if term.paths.is_empty() {
                let support = connect_set(g, &term.vertices)?;
                let tree = induced_subtree(g, &support)?;
                Ok(TreeLikeTerm::from_tree(g, i, support, tree))
            } else {
                TreeLikeTerm::from_walks(g, i, &term.name, &term.vertices, &term.paths)
            }
        })
        .collect::<Result<Vec<_>, TreeformError>>()?;
    Ok(TreeLikeSystem { system: sys, terms })
}
