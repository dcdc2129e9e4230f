//! Lagrangian systems on graphs: fibers, interaction terms, fields, and the
//! total Lagrangian together with its finite-difference oracles.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::{Expr, ExprError, Var};
use crate::graph::{Graph, GraphError, TailId, VertexId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown vertex `{name}`")]
    UnknownVertex { line: usize, name: String },
    #[error("line {line}: {message}")]
    FiberMismatch { line: usize, message: String },
    #[error("vertices of degree < 2 (pass --allow-ends to accept): {}", .0.join(", "))]
    DegreeViolation(Vec<String>),
    #[error("line {line}: {source}")]
    Graph { line: usize, source: GraphError },
    #[error("line {line}: {source}")]
    Expr { line: usize, source: ExprError },
    #[error("term `{0}` spans several graph components")]
    TermSpansComponents(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FiberKind {
    Euclidean,
    /// The circle in its angle chart.
    Circle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fiber {
    pub kind: FiberKind,
    pub dim: usize,
}

impl Fiber {
    pub fn euclidean(dim: usize) -> Self {
        assert!(dim >= 1, "fiber dimension must be positive");
        Self {
            kind: FiberKind::Euclidean,
            dim,
        }
    }

    pub fn circle() -> Self {
        Self {
            kind: FiberKind::Circle,
            dim: 1,
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            FiberKind::Euclidean => format!("R{}", self.dim),
            FiberKind::Circle => "S1".to_string(),
        }
    }
}

/// Flattening of per-vertex coordinates into one index range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    offsets: Vec<usize>,
    dims: Vec<usize>,
    total: usize,
}

impl Layout {
    pub fn new(dims: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0;
        for &d in dims {
            offsets.push(total);
            total += d;
        }
        Self {
            offsets,
            dims: dims.to_vec(),
            total,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn offset(&self, v: VertexId) -> usize {
        self.offsets[v]
    }

    pub fn dim(&self, v: VertexId) -> usize {
        self.dims[v]
    }

    pub fn range(&self, v: VertexId) -> std::ops::Range<usize> {
        self.offsets[v]..self.offsets[v] + self.dims[v]
    }

    pub fn coord(&self, v: VertexId, i: usize) -> usize {
        debug_assert!(i < self.dims[v]);
        self.offsets[v] + i
    }

    pub fn vertex_of(&self, coord: usize) -> (VertexId, usize) {
        let v = self.offsets.partition_point(|&o| o <= coord) - 1;
        (v, coord - self.offsets[v])
    }
}

/// Values attached to every core vertex, plus optional values at the first
/// site of each tail.
///
/// Used for configurations, tangent directions and covectors alike; the
/// core values are stored flattened in [`Layout`] order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VertexField {
    pub values: Vec<f64>,
    pub tail_sites: BTreeMap<TailId, Vec<f64>>,
}

pub type FieldConfig = VertexField;
pub type TangentField = VertexField;
pub type Covector = VertexField;

impl VertexField {
    pub fn zeros(layout: &Layout) -> Self {
        Self::from_flat(vec![0.0; layout.total()])
    }

    pub fn from_flat(values: Vec<f64>) -> Self {
        Self {
            values,
            tail_sites: BTreeMap::new(),
        }
    }

    pub fn at<'a>(&'a self, layout: &Layout, v: VertexId) -> &'a [f64] {
        &self.values[layout.range(v)]
    }

    pub fn with_tail_site(mut self, t: TailId, values: Vec<f64>) -> Self {
        self.tail_sites.insert(t, values);
        self
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// One interaction: a finite vertex set with a scalar potential.
///
/// Gradient and Hessian expressions over the set's coordinates are derived
/// once at construction. Mixed partials are always taken in sorted variable
/// order so that equal derivatives are equal trees.
#[derive(Debug, Clone)]
pub struct InteractionTerm {
    pub name: String,
    pub vertices: Vec<VertexId>,
    pub potential: Expr,
    /// Explicit walks replacing the automatic tree-like paths.
    pub paths: Vec<Vec<VertexId>>,
    coords: Vec<usize>,
    vars: Vec<Var>,
    gradient: Vec<Expr>,
    hessian: Vec<Vec<Expr>>,
}

impl InteractionTerm {
    /// Global coordinates of the term's vertices, in vertex-list order.
    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Symbolic first derivative in the `i`th local coordinate.
    pub fn gradient_expr(&self, i: usize) -> &Expr {
        &self.gradient[i]
    }

    /// Symbolic second derivative in local coordinates `i`, `j`.
    pub fn hessian_expr(&self, i: usize, j: usize) -> &Expr {
        &self.hessian[i][j]
    }

    pub fn local_index(&self, coord: usize) -> Option<usize> {
        self.coords.iter().position(|&c| c == coord)
    }

    /// Mixed partial over local coordinates, differentiated in sorted variable order.
    pub fn derivative(&self, locals: &[usize]) -> Expr {
        let mut vars: Vec<Var> = locals.iter().map(|&i| self.vars[i].clone()).collect();
        vars.sort();
        self.potential.differentiate_all(&vars)
    }
}

/// Translation-invariant nearest-neighbour potential along a tail, written
/// in the variables of the attach vertex and of the tail itself (the next
/// site outward).
#[derive(Debug, Clone)]
pub struct TailPotential {
    pub potential: Expr,
    /// `cross[i][j]` = second derivative in attach coordinate `i` and site coordinate `j`.
    cross: Vec<Vec<Expr>>,
    attach_diag: Vec<Vec<Expr>>,
}

#[derive(Debug, Clone)]
pub struct LagrangianSystem {
    pub graph: Graph,
    pub fibers: Vec<Fiber>,
    pub layout: Layout,
    pub terms: Vec<InteractionTerm>,
    pub tail_potentials: Vec<Option<TailPotential>>,
    pub configs: Vec<(String, FieldConfig)>,
    pub warnings: Vec<String>,
}

impl LagrangianSystem {
    pub fn new(graph: Graph, fibers: Vec<Fiber>) -> Self {
        assert_eq!(graph.vertex_count(), fibers.len());
        let dims: Vec<usize> = fibers.iter().map(|f| f.dim).collect();
        let tails = graph.tail_count();
        Self {
            layout: Layout::new(&dims),
            graph,
            fibers,
            terms: Vec::new(),
            tail_potentials: vec![None; tails],
            configs: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Adds a term after checking that every variable belongs to the set and its fiber.
    pub fn add_term(
        &mut self,
        name: &str,
        vertices: Vec<VertexId>,
        potential: Expr,
    ) -> Result<usize, ModelError> {
        let mut sorted = vertices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if vertices.is_empty() || sorted.len() != vertices.len() {
            return Err(ModelError::Parse {
                line: 0,
                message: format!("term `{name}` needs a nonempty list of distinct vertices"),
            });
        }
        for var in potential.variables() {
            let v = self
                .graph
                .vertex_id(&var.vertex)
                .ok_or_else(|| ModelError::UnknownVertex {
                    line: 0,
                    name: var.vertex.clone(),
                })?;
            if !vertices.contains(&v) {
                return Err(ModelError::FiberMismatch {
                    line: 0,
                    message: format!("term `{name}` uses {var} outside its vertex set"),
                });
            }
            if var.index >= self.fibers[v].dim {
                return Err(ModelError::FiberMismatch {
                    line: 0,
                    message: format!(
                        "{var} exceeds fiber {} of `{}`",
                        self.fibers[v].label(),
                        var.vertex
                    ),
                });
            }
        }
        if self.graph.set_diameter(&vertices).is_err() {
            return Err(ModelError::TermSpansComponents(name.to_string()));
        }

        let mut coords = Vec::new();
        let mut vars = Vec::new();
        for &v in &vertices {
            for i in 0..self.fibers[v].dim {
                coords.push(self.layout.coord(v, i));
                vars.push(Var::new(self.graph.vertex_name(v), i));
            }
        }
        let gradient: Vec<Expr> = vars.iter().map(|v| potential.differentiate(v)).collect();
        let n = vars.len();
        let mut hessian = vec![vec![Expr::Num(0.0); n]; n];
        for i in 0..n {
            for j in i..n {
                let mut pair = [vars[i].clone(), vars[j].clone()];
                pair.sort();
                let h = potential.differentiate_all(&pair);
                hessian[j][i] = h.clone();
                hessian[i][j] = h;
            }
        }
        self.terms.push(InteractionTerm {
            name: name.to_string(),
            vertices,
            potential,
            paths: Vec::new(),
            coords,
            vars,
            gradient,
            hessian,
        });
        Ok(self.terms.len() - 1)
    }

    pub fn set_tail_potential(&mut self, tail: TailId, potential: Expr) -> Result<(), ModelError> {
        let spec = &self.graph.tails()[tail];
        let attach_name = self.graph.vertex_name(spec.attach).to_string();
        let dim = self.fibers[spec.attach].dim;
        for var in potential.variables() {
            if (var.vertex != attach_name && var.vertex != spec.name) || var.index >= dim {
                return Err(ModelError::FiberMismatch {
                    line: 0,
                    message: format!(
                        "tail `{}` potential may only use x({attach_name},i) and x({},i) with i < {dim}, found {var}",
                        spec.name, spec.name
                    ),
                });
            }
        }
        let attach_vars: Vec<Var> = (0..dim).map(|i| Var::new(&attach_name, i)).collect();
        let site_vars: Vec<Var> = (0..dim).map(|i| Var::new(&spec.name, i)).collect();
        let second = |a: &Var, b: &Var| {
            let mut pair = [a.clone(), b.clone()];
            pair.sort();
            potential.differentiate_all(&pair)
        };
        let cross = attach_vars
            .iter()
            .map(|a| site_vars.iter().map(|s| second(a, s)).collect())
            .collect();
        let attach_diag = attach_vars
            .iter()
            .map(|a| attach_vars.iter().map(|b| second(a, b)).collect())
            .collect();
        self.tail_potentials[tail] = Some(TailPotential {
            potential,
            cross,
            attach_diag,
        });
        Ok(())
    }

    /// Checks the no-ends condition; degree-1 and isolated vertices become warnings when `allow_ends`.
    pub fn check_degrees(&mut self, allow_ends: bool) -> Result<(), ModelError> {
        let ends: Vec<String> = self
            .graph
            .ends()
            .into_iter()
            .map(|v| self.graph.vertex_name(v).to_string())
            .collect();
        if ends.is_empty() {
            return Ok(());
        }
        if !allow_ends {
            return Err(ModelError::DegreeViolation(ends));
        }
        for name in ends {
            self.warnings
                .push(format!("vertex `{name}` has degree < 2"));
        }
        Ok(())
    }

    pub fn zero_config(&self) -> FieldConfig {
        FieldConfig::zeros(&self.layout)
    }

    pub fn config(&self, name: &str) -> Option<&FieldConfig> {
        self.configs.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    /// Resolves expression variables against a configuration. Tail variables
    /// read the configuration's first tail site, defaulting to the attach value.
    pub fn lookup<'a>(&'a self, config: &'a FieldConfig) -> impl Fn(&Var) -> Option<f64> + 'a {
        move |var: &Var| {
            if let Some(v) = self.graph.vertex_id(&var.vertex) {
                return (var.index < self.layout.dim(v))
                    .then(|| config.values[self.layout.coord(v, var.index)]);
            }
            let t = self.graph.tail_id(&var.vertex)?;
            match config.tail_sites.get(&t) {
                Some(site) => site.get(var.index).copied(),
                None => {
                    let attach = self.graph.tails()[t].attach;
                    (var.index < self.layout.dim(attach))
                        .then(|| config.values[self.layout.coord(attach, var.index)])
                }
            }
        }
    }

    pub fn check_config(&self, config: &FieldConfig) -> bool {
        config.values.len() == self.layout.total()
            && config.tail_sites.iter().all(|(&t, v)| {
                t < self.graph.tail_count() && v.len() == self.layout.dim(self.graph.tails()[t].attach)
            })
    }

    pub fn term_value(&self, term: usize, config: &FieldConfig) -> Result<f64, ExprError> {
        self.terms[term].potential.evaluate(&self.lookup(config))
    }

    /// Tail-edge Hessian blocks at the configuration: (attach-attach, attach-site).
    pub fn tail_blocks(
        &self,
        tail: TailId,
        config: &FieldConfig,
    ) -> Result<Option<(DMatrix<f64>, DMatrix<f64>)>, ExprError> {
        let Some(tp) = &self.tail_potentials[tail] else {
            return Ok(None);
        };
        let lookup = self.lookup(config);
        let dim = tp.cross.len();
        let mut cross = DMatrix::zeros(dim, dim);
        let mut diag = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                cross[(i, j)] = tp.cross[i][j].evaluate(&lookup)?;
                diag[(i, j)] = tp.attach_diag[i][j].evaluate(&lookup)?;
            }
        }
        Ok(Some((diag, cross)))
    }

    /// Largest interaction-set diameter; the system is local with `M = bound + 1`.
    pub fn locality_bound(&self) -> Result<usize, GraphError> {
        self.terms.iter().try_fold(0, |m, t| {
            Ok(m.max(self.graph.set_diameter(&t.vertices)?))
        })
    }
}

/// Sum of all term potentials, accumulated in term order.
pub fn total_lagrangian(sys: &LagrangianSystem, config: &FieldConfig) -> Result<f64, ExprError> {
    (0..sys.terms.len()).try_fold(0.0, |acc, t| Ok(acc + sys.term_value(t, config)?))
}

fn shifted(config: &FieldConfig, moves: &[(usize, f64)]) -> FieldConfig {
    let mut c = config.clone();
    for &(i, h) in moves {
        c.values[i] += h;
    }
    c
}

/// Central-difference gradient of the total Lagrangian.
pub fn fd_gradient(
    sys: &LagrangianSystem,
    config: &FieldConfig,
    step: f64,
) -> Result<Vec<f64>, ExprError> {
    assert!(step > 0.0);
    (0..sys.layout.total())
        .map(|i| {
            let plus = total_lagrangian(sys, &shifted(config, &[(i, step)]))?;
            let minus = total_lagrangian(sys, &shifted(config, &[(i, -step)]))?;
            Ok((plus - minus) / (2.0 * step))
        })
        .collect()
}

/// Central-difference Hessian of the total Lagrangian, symmetrized by construction.
pub fn fd_hessian(
    sys: &LagrangianSystem,
    config: &FieldConfig,
    step: f64,
) -> Result<DMatrix<f64>, ExprError> {
    assert!(step > 0.0);
    let n = sys.layout.total();
    let mut h = DMatrix::zeros(n, n);
    let l = |moves: &[(usize, f64)]| total_lagrangian(sys, &shifted(config, moves));
    for i in 0..n {
        for j in i..n {
            let v = (l(&[(i, step), (j, step)])? - l(&[(i, step), (j, -step)])?
                - l(&[(i, -step), (j, step)])?
                + l(&[(i, -step), (j, -step)])?)
                / (4.0 * step * step);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

pub fn load_system(path: &Path, allow_ends: bool) -> Result<LagrangianSystem, ModelError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
    crate::sysfile::parse_system(&text, allow_ends)
}
