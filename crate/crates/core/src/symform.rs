//! The chain-valued symplectic 2-form: assembly, closedness and boundary checks.
//!
//! Every edge `e` carries an antisymmetric bilinear form
//! `B_e(u, v) = Σ_{j<k} u_jᵀ M^e_{jk} v_k − v_jᵀ M^e_{jk} u_k`, where
//! `M^e_{jk}` accumulates `σ_e(l_jk) · ∂²Λ/∂x_j∂x_k` over all terms. Tails
//! with a potential carry one form coupling the attach vertex to the first
//! tail site.
//!
//! Forms act on extended tangents: core coordinates followed by the first
//! site of every tail that carries a potential. Missing tangent tail
//! values are zero.

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::{diff, Expr, ExprError};
use crate::graph::{Chain1, EdgeId, TailId, VertexId};
use crate::model::{FieldConfig, InteractionTerm, Layout, LagrangianSystem, TangentField, VertexField};
use crate::treeform::{TreeLikeSystem, TreeformError};
use crate::variational;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymformError {
    #[error("tree-like system does not match its Lagrangian system")]
    NotNormalized,
    #[error("form does not belong to this system: {0}")]
    MismatchedSystem(String),
    #[error("field does not match the system layout")]
    InvalidField,
    #[error(transparent)]
    Eval(#[from] ExprError),
    #[error(transparent)]
    Treeform(#[from] TreeformError),
}

/// Where a coefficient of Ω lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Support {
    Edge(EdgeId),
    Tail(TailId),
}

/// Core coordinates followed by the first site of each tail with a potential.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedLayout {
    core: Layout,
    sites: BTreeMap<TailId, (VertexId, usize)>,
    total: usize,
}

impl ExtendedLayout {
    pub fn new(sys: &LagrangianSystem) -> Self {
        let mut total = sys.layout.total();
        let mut sites = BTreeMap::new();
        for (t, tp) in sys.tail_potentials.iter().enumerate() {
            if tp.is_some() {
                let attach = sys.graph.tails()[t].attach;
                sites.insert(t, (attach, total));
                total += sys.layout.dim(attach);
            }
        }
        Self {
            core: sys.layout.clone(),
            sites,
            total,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn core(&self) -> &Layout {
        &self.core
    }

    pub fn vertex_range(&self, v: VertexId) -> Range<usize> {
        self.core.range(v)
    }

    pub fn site_range(&self, t: TailId) -> Option<Range<usize>> {
        self.sites
            .get(&t)
            .map(|&(attach, off)| off..off + self.core.dim(attach))
    }

    pub fn sites(&self) -> impl Iterator<Item = TailId> + '_ {
        self.sites.keys().copied()
    }

    /// Flattens a tangent; absent tail sites are zero.
    pub fn tangent(&self, f: &TangentField) -> Vec<f64> {
        self.flatten(f, |_, _| 0.0)
    }

    /// Flattens a configuration; absent tail sites repeat the attach value.
    pub fn config(&self, f: &FieldConfig) -> Vec<f64> {
        self.flatten(f, |attach, i| f.values[self.core.coord(attach, i)])
    }

    fn flatten(&self, f: &VertexField, default: impl Fn(VertexId, usize) -> f64) -> Vec<f64> {
        let mut out = f.values.clone();
        out.resize(self.total, 0.0);
        for (&t, &(attach, off)) in &self.sites {
            for i in 0..self.core.dim(attach) {
                out[off + i] = match f.tail_sites.get(&t) {
                    Some(site) => site[i],
                    None => default(attach, i),
                };
            }
        }
        out
    }

    pub fn unflatten(&self, flat: &[f64]) -> VertexField {
        let mut f = VertexField::from_flat(flat[..self.core.total()].to_vec());
        for (&t, &(attach, off)) in &self.sites {
            f = f.with_tail_site(t, flat[off..off + self.core.dim(attach)].to_vec());
        }
        f
    }
}

/// `xᵀ M y`, summed row by row.
pub(crate) fn bilinear(x: &[f64], m: &DMatrix<f64>, y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        let mut row = 0.0;
        for j in 0..m.ncols() {
            row += m[(i, j)] * y[j];
        }
        acc += x[i] * row;
    }
    acc
}

/// Signed blocks `M_{jk}` for vertex pairs `j < k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeForm {
    pub blocks: BTreeMap<(VertexId, VertexId), DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailForm {
    pub attach: VertexId,
    /// Second derivatives in (attach coordinate, first-site coordinate).
    pub cross: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainValued2Form {
    pub layout: ExtendedLayout,
    pub edges: BTreeMap<EdgeId, EdgeForm>,
    pub tails: BTreeMap<TailId, TailForm>,
}

impl ChainValued2Form {
    pub fn supports(&self) -> Vec<Support> {
        self.edges
            .keys()
            .map(|&e| Support::Edge(e))
            .chain(self.tails.keys().map(|&t| Support::Tail(t)))
            .collect()
    }

    /// `B_s(u, v)` on flattened extended tangents.
    pub fn evaluate_flat(&self, s: Support, u: &[f64], v: &[f64]) -> f64 {
        match s {
            Support::Edge(e) => {
                let Some(form) = self.edges.get(&e) else {
                    return 0.0;
                };
                let mut acc = 0.0;
                for (&(j, k), m) in &form.blocks {
                    acc += self.pair_value(j, k, m, u, v);
                }
                acc
            }
            Support::Tail(t) => match (self.tails.get(&t), self.layout.site_range(t)) {
                (Some(tf), Some(site)) => {
                    let p = self.layout.vertex_range(tf.attach);
                    bilinear(&u[p.clone()], &tf.cross, &v[site.clone()])
                        - bilinear(&v[p], &tf.cross, &u[site])
                }
                _ => 0.0,
            },
        }
    }

    pub(crate) fn pair_value(&self, j: VertexId, k: VertexId, m: &DMatrix<f64>, u: &[f64], v: &[f64]) -> f64 {
        let (rj, rk) = (self.layout.vertex_range(j), self.layout.vertex_range(k));
        bilinear(&u[rj.clone()], m, &v[rk.clone()]) - bilinear(&v[rj], m, &u[rk])
    }

    pub fn evaluate(&self, s: Support, u: &TangentField, v: &TangentField) -> f64 {
        self.evaluate_flat(s, &self.layout.tangent(u), &self.layout.tangent(v))
    }

    /// Antisymmetric matrix `A` over extended coordinates with `B_s(u, v) = uᵀ A v`.
    pub fn coefficient_matrix(&self, s: Support) -> DMatrix<f64> {
        let n = self.layout.total();
        let mut a = DMatrix::zeros(n, n);
        let mut put = |rows: Range<usize>, cols: Range<usize>, m: &DMatrix<f64>| {
            for (i, r) in rows.clone().enumerate() {
                for (j, c) in cols.clone().enumerate() {
                    a[(r, c)] += m[(i, j)];
                    a[(c, r)] -= m[(i, j)];
                }
            }
        };
        match s {
            Support::Edge(e) => {
                if let Some(form) = self.edges.get(&e) {
                    for (&(j, k), m) in &form.blocks {
                        put(self.layout.vertex_range(j), self.layout.vertex_range(k), m);
                    }
                }
            }
            Support::Tail(t) => {
                if let (Some(tf), Some(site)) = (self.tails.get(&t), self.layout.site_range(t)) {
                    put(self.layout.vertex_range(tf.attach), site, &tf.cross);
                }
            }
        }
        a
    }
}

fn local_start(sys: &LagrangianSystem, term: &InteractionTerm, v: VertexId) -> usize {
    term.local_index(sys.layout.coord(v, 0))
        .expect("vertex belongs to the term")
}

/// `∂²Λ/∂x_j∂x_k` as a `dim(j) × dim(k)` block.
pub(crate) fn hessian_block(
    sys: &LagrangianSystem,
    term: &InteractionTerm,
    j: VertexId,
    k: VertexId,
    lookup: &impl Fn(&crate::expr::Var) -> Option<f64>,
) -> Result<DMatrix<f64>, ExprError> {
    let (lj, lk) = (local_start(sys, term, j), local_start(sys, term, k));
    let (dj, dk) = (sys.layout.dim(j), sys.layout.dim(k));
    let mut h = DMatrix::zeros(dj, dk);
    for a in 0..dj {
        for b in 0..dk {
            let e = term.hessian_expr(lj + a, lk + b);
            if !e.is_zero() {
                h[(a, b)] = e.evaluate(lookup)?;
            }
        }
    }
    Ok(h)
}

fn check_normalized(tsys: &TreeLikeSystem) -> Result<(), SymformError> {
    let ok = tsys.terms.len() == tsys.system.terms.len()
        && tsys.terms.iter().enumerate().all(|(i, t)| t.term == i);
    if ok {
        Ok(())
    } else {
        Err(SymformError::NotNormalized)
    }
}

/// Assembles Ω at a configuration, summing each unordered pair `j < k` once.
pub fn assemble_omega(
    tsys: &TreeLikeSystem,
    config: &FieldConfig,
) -> Result<ChainValued2Form, SymformError> {
    check_normalized(tsys)?;
    let sys = tsys.system;
    if !sys.check_config(config) {
        return Err(SymformError::InvalidField);
    }
    let lookup = sys.lookup(config);
    let mut edges: BTreeMap<EdgeId, EdgeForm> = BTreeMap::new();
    for (ti, term) in sys.terms.iter().enumerate() {
        let mut alpha = term.vertices.clone();
        alpha.sort_unstable();
        for (i, &j) in alpha.iter().enumerate() {
            for &k in &alpha[i + 1..] {
                let h = hessian_block(sys, term, j, k, &lookup)?;
                let path = tsys.tree_path(ti, j, k)?;
                for (&e, &s) in path.core() {
                    let block = edges
                        .entry(e)
                        .or_default()
                        .blocks
                        .entry((j, k))
                        .or_insert_with(|| DMatrix::zeros(h.nrows(), h.ncols()));
                    *block += &h * s;
                }
            }
        }
    }
    let mut tails = BTreeMap::new();
    for t in 0..sys.graph.tail_count() {
        if let Some((_, cross)) = sys.tail_blocks(t, config)? {
            let attach = sys.graph.tails()[t].attach;
            tails.insert(t, TailForm { attach, cross });
        }
    }
    Ok(ChainValued2Form {
        layout: ExtendedLayout::new(sys),
        edges,
        tails,
    })
}

/// The 1-chain `s ↦ B_s(u, v)`.
pub fn omega_on_tangents(form: &ChainValued2Form, u: &TangentField, v: &TangentField) -> Chain1 {
    let (u, v) = (form.layout.tangent(u), form.layout.tangent(v));
    let mut c = Chain1::zero();
    for s in form.supports() {
        let b = form.evaluate_flat(s, &u, &v);
        match s {
            Support::Edge(e) => c.add_edge(e, b),
            Support::Tail(t) => c.add_tail(t, b),
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosednessMode {
    /// Integer path multiplicities times symbolic third derivatives.
    Analytic,
    /// Central differences of the assembled coefficients.
    FiniteDifference { step: f64 },
}

/// One component `dB_s(∂_a, ∂_b, ∂_c)`, `a < b < c`, in symbolic form.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosednessEntry {
    pub support: Support,
    pub coords: [usize; 3],
    pub expr: Expr,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosednessReport {
    pub mode: ClosednessMode,
    /// max over coordinate triples of |dB_s|.
    pub per_support: BTreeMap<Support, f64>,
    /// Nonvanishing path multiplicities (analytic mode only).
    pub entries: Vec<ClosednessEntry>,
}

impl ClosednessReport {
    pub fn max(&self) -> f64 {
        self.per_support.values().fold(0.0, |m, &x| m.max(x))
    }

    pub fn worst(&self) -> Option<(Support, f64)> {
        self.per_support
            .iter()
            .fold(None, |best: Option<(Support, f64)>, (&s, &x)| match best {
                Some((_, b)) if b >= x => best,
                _ => Some((s, x)),
            })
    }

    /// Whether dΩ is the zero expression: every component simplified to the literal 0.
    pub fn symbolic_zero(&self) -> bool {
        self.entries.iter().all(|e| e.expr.is_zero())
    }
}

/// Evaluates dB_s(a, b, c) = ∂_a B_s(b,c) − ∂_b B_s(a,c) + ∂_c B_s(a,b) for every support.
pub fn check_closedness(
    tsys: &TreeLikeSystem,
    config: &FieldConfig,
    mode: ClosednessMode,
) -> Result<ClosednessReport, SymformError> {
    let base = assemble_omega(tsys, config)?;
    let mut per_support: BTreeMap<Support, f64> =
        base.supports().into_iter().map(|s| (s, 0.0)).collect();
    match mode {
        ClosednessMode::Analytic => {
            let entries = analytic_entries(tsys, config)?;
            for e in &entries {
                let m = per_support.entry(e.support).or_insert(0.0);
                *m = m.max(e.value.abs());
            }
            Ok(ClosednessReport {
                mode,
                per_support,
                entries,
            })
        }
        ClosednessMode::FiniteDifference { step } => {
            assert!(step > 0.0);
            let ext = &base.layout;
            let x0 = ext.config(config);
            let n = ext.total();
            let supports: Vec<Support> = per_support.keys().copied().collect();
            // derivative[a][s] = ∂_a of the coefficient matrix of s
            let mut derivative: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(n);
            for a in 0..n {
                let mut xp = x0.clone();
                let mut xm = x0.clone();
                xp[a] += step;
                xm[a] -= step;
                let fp = assemble_omega(tsys, &ext.unflatten(&xp))?;
                let fm = assemble_omega(tsys, &ext.unflatten(&xm))?;
                derivative.push(
                    supports
                        .iter()
                        .map(|&s| (fp.coefficient_matrix(s) - fm.coefficient_matrix(s)) / (2.0 * step))
                        .collect(),
                );
            }
            for (si, &s) in supports.iter().enumerate() {
                let mut worst = 0.0_f64;
                for a in 0..n {
                    for b in a + 1..n {
                        for c in b + 1..n {
                            let d = derivative[a][si][(b, c)] - derivative[b][si][(a, c)]
                                + derivative[c][si][(a, b)];
                            worst = worst.max(d.abs());
                        }
                    }
                }
                per_support.insert(s, worst);
            }
            Ok(ClosednessReport {
                mode,
                per_support,
                entries: Vec::new(),
            })
        }
    }
}

/// For each term, a coordinate triple contributes `σ_s(l_ab + l_bc + l_ca) · ∂³Λ`,
/// which vanishes identically when the three paths close up in a tree.
fn analytic_entries(
    tsys: &TreeLikeSystem,
    config: &FieldConfig,
) -> Result<Vec<ClosednessEntry>, SymformError> {
    let sys = tsys.system;
    let lookup = sys.lookup(config);
    let mut acc: BTreeMap<(Support, [usize; 3]), Expr> = BTreeMap::new();
    for (ti, term) in sys.terms.iter().enumerate() {
        let coords = term.coords();
        let mut order: Vec<usize> = (0..coords.len()).collect();
        order.sort_by_key(|&i| coords[i]);
        for (x, &la) in order.iter().enumerate() {
            for (y, &lb) in order.iter().enumerate().skip(x + 1) {
                for &lc in &order[y + 1..] {
                    let [va, vb, vc] =
                        [la, lb, lc].map(|l| sys.layout.vertex_of(coords[l]).0);
                    let cycle = tsys
                        .tree_path(ti, va, vb)?
                        .add(&tsys.tree_path(ti, vb, vc)?)
                        .add(&tsys.tree_path(ti, vc, va)?);
                    if cycle.is_zero() {
                        continue;
                    }
                    let third = term.derivative(&[la, lb, lc]);
                    let key3 = [coords[la], coords[lb], coords[lc]];
                    for (&e, &n) in cycle.core() {
                        let slot = acc
                            .entry((Support::Edge(e), key3))
                            .or_insert(Expr::Num(0.0));
                        *slot = diff::add(slot.clone(), diff::mul(Expr::Num(n), third.clone()));
                    }
                }
            }
        }
    }
    acc.into_iter()
        .map(|((support, coords), expr)| {
            let value = expr.evaluate(&lookup)?;
            Ok(ClosednessEntry {
                support,
                coords,
                expr,
                value,
            })
        })
        .collect()
}

/// Hessian over extended coordinates: the core Hessian plus the first tail edge of
/// every tail carrying a potential.
pub fn extended_hessian(
    sys: &LagrangianSystem,
    config: &FieldConfig,
) -> Result<DMatrix<f64>, ExprError> {
    let ext = ExtendedLayout::new(sys);
    let core = variational::hessian(sys, config)?.matrix;
    let n = ext.total();
    let mut h = DMatrix::zeros(n, n);
    h.view_mut((0, 0), (core.nrows(), core.ncols())).copy_from(&core);
    for t in ext.sites().collect::<Vec<_>>() {
        let Some((diag, cross)) = sys.tail_blocks(t, config)? else {
            continue;
        };
        let p = ext.vertex_range(sys.graph.tails()[t].attach);
        let s = ext.site_range(t).expect("site registered");
        for (i, r) in p.clone().enumerate() {
            for (j, c) in p.clone().enumerate() {
                h[(r, c)] += diag[(i, j)];
            }
            for (j, c) in s.clone().enumerate() {
                h[(r, c)] += cross[(i, j)];
                h[(c, r)] += cross[(i, j)];
            }
        }
    }
    Ok(h)
}

/// Orthonormal tangents `u` over extended coordinates with `(L u)_P = 0` at
/// every core vertex, `L` being the extended Hessian. Tail sites are free,
/// so each tail adds one dimension per fiber coordinate. Without tails this
/// is the kernel of the Hessian.
pub fn tangent_solutions(
    sys: &LagrangianSystem,
    config: &FieldConfig,
    tol: f64,
) -> Result<Vec<TangentField>, ExprError> {
    let ext = ExtendedLayout::new(sys);
    let n = ext.total();
    if n == 0 {
        return Ok(Vec::new());
    }
    let h = extended_hessian(sys, config)?;
    let core = sys.layout.total();
    let mut rows = DMatrix::zeros(n, n);
    rows.view_mut((0, 0), (core, n)).copy_from(&h.rows(0, core));
    let svd = rows.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let scale = svd.singular_values.amax();
    Ok((0..n)
        .filter(|&i| svd.singular_values[i] <= tol * scale)
        .map(|i| {
            let row = v_t.row(i);
            let pivot = row.iter().fold(0.0_f64, |m, &x| if x.abs() > m.abs() { x } else { m });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            let flat: Vec<f64> = row.iter().map(|x| sign * x).collect();
            ext.unflatten(&flat)
        })
        .collect())
}

/// Per-vertex boundary forms `A_P` and the comparison forms `G_P`, as matrices
/// over extended coordinates (`A_P(u, v) = uᵀ A_P v`).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryForms {
    pub layout: ExtendedLayout,
    pub a: Vec<DMatrix<f64>>,
    pub g: Vec<DMatrix<f64>>,
}

impl BoundaryForms {
    /// max over vertices and entries of |A_P − G_P|.
    pub fn defect(&self) -> f64 {
        self.a
            .iter()
            .zip(&self.g)
            .fold(0.0, |m, (a, g)| m.max((a - g).amax()))
    }

    /// `A_P(u, v)` at every vertex, summed over `i < j` as `A_ij (u_i v_j − u_j v_i)`.
    pub fn evaluate(&self, u: &TangentField, v: &TangentField) -> Vec<f64> {
        let (u, v) = (self.layout.tangent(u), self.layout.tangent(v));
        self.a
            .iter()
            .map(|a| {
                let mut acc = 0.0;
                for i in 0..a.nrows() {
                    for j in i + 1..a.ncols() {
                        acc += a[(i, j)] * (u[i] * v[j] - u[j] * v[i]);
                    }
                }
                acc
            })
            .collect()
    }

    pub fn max_on(&self, u: &TangentField, v: &TangentField) -> f64 {
        self.evaluate(u, v).iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// `A_P = Σ_s (∂s)(P) · B_s` and `G_P(u, v) = v_Pᵀ(L u)_P − u_Pᵀ(L v)_P`.
pub fn boundary_omega(
    form: &ChainValued2Form,
    tsys: &TreeLikeSystem,
    config: &FieldConfig,
) -> Result<BoundaryForms, SymformError> {
    let sys = tsys.system;
    let ext = ExtendedLayout::new(sys);
    if form.layout != ext {
        return Err(SymformError::MismatchedSystem(
            "coordinate layouts differ".to_string(),
        ));
    }
    if let Some(&e) = form.edges.keys().find(|&&e| e >= sys.graph.edge_count()) {
        return Err(SymformError::MismatchedSystem(format!("edge {e} out of range")));
    }
    let g_count = sys.graph.vertex_count();
    let n = ext.total();
    let mut a = vec![DMatrix::zeros(n, n); g_count];
    for s in form.supports() {
        let m = form.coefficient_matrix(s);
        match s {
            Support::Edge(e) => {
                let (from, to) = sys.graph.edge(e);
                a[to] += &m;
                a[from] -= &m;
            }
            Support::Tail(t) => a[sys.graph.tails()[t].attach] -= &m,
        }
    }
    let l = extended_hessian(sys, config)?;
    let mut g = vec![DMatrix::zeros(n, n); g_count];
    for (p, gp) in g.iter_mut().enumerate() {
        for i in ext.vertex_range(p) {
            for c in 0..n {
                gp[(c, i)] += l[(i, c)];
                gp[(i, c)] -= l[(i, c)];
            }
        }
    }
    Ok(BoundaryForms { layout: ext, a, g })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysfile::parse_system;
    use crate::treeform::normalize;

    const TRIANGLE: &str = "[graph]
vertex v0
vertex v1
vertex v2
edge v0 v1
edge v1 v2
edge v2 v0
[term t]
vertices = v0,v1,v2
expr = \"x(v0,0)*x(v1,0)*x(v2,0)\"
";

    fn with_paths(paths: &str) -> LagrangianSystem {
        parse_system(&format!("{TRIANGLE}{paths}"), false).unwrap()
    }

    fn tangent(values: &[f64]) -> TangentField {
        TangentField::from_flat(values.to_vec())
    }

    #[test]
    fn single_pair_term() {
        let src = "[graph]\nvertex a\nvertex b\nvertex c\nedge a b\nedge b c\n[term t]\nvertices = a,b\nexpr = \"2.5*x(a,0)*x(b,0)\"\n";
        let sys = parse_system(src, true).unwrap();
        let ts = normalize(&sys).unwrap();
        let f = assemble_omega(&ts, &sys.zero_config()).unwrap();
        assert_eq!(f.supports(), vec![Support::Edge(0)]);
        let (u, v) = (tangent(&[1.0, 2.0, 7.0]), tangent(&[3.0, -1.0, 5.0]));
        assert_eq!(f.evaluate(Support::Edge(0), &u, &v), 2.5 * (1.0 * -1.0 - 3.0 * 2.0));
        assert_eq!(f.evaluate(Support::Edge(1), &u, &v), 0.0);
    }

    #[test]
    fn three_body_triangle_blocks() {
        let sys = with_paths("path = v0,v1\npath = v1,v2\npath = v0,v1,v2\n");
        let ts = normalize(&sys).unwrap();
        let f = assemble_omega(&ts, &FieldConfig::from_flat(vec![1.0, 2.0, 3.0])).unwrap();
        let a01 = f.coefficient_matrix(Support::Edge(0));
        assert_eq!((a01[(0, 1)], a01[(0, 2)], a01[(1, 2)]), (3.0, 2.0, 0.0));
        let a12 = f.coefficient_matrix(Support::Edge(1));
        assert_eq!((a12[(0, 1)], a12[(0, 2)], a12[(1, 2)]), (0.0, 2.0, 1.0));
        assert!(!f.edges.contains_key(&2));
        assert_eq!(a01.transpose(), -a01);
    }

    #[test]
    fn tree_paths_are_closed() {
        let sys = with_paths("");
        let ts = normalize(&sys).unwrap();
        let cfg = FieldConfig::from_flat(vec![1.0, 2.0, 3.0]);
        let r = check_closedness(&ts, &cfg, ClosednessMode::Analytic).unwrap();
        assert_eq!(r.max(), 0.0);
        assert!(r.entries.is_empty() && r.symbolic_zero());
        let fd = check_closedness(&ts, &cfg, ClosednessMode::FiniteDifference { step: 1e-4 }).unwrap();
        assert!(fd.max() < 1e-9);
    }

    #[test]
    fn non_tree_paths_are_not_closed() {
        let sys = with_paths("path = v0,v1\npath = v1,v2\npath = v0,v2\n");
        let ts = normalize(&sys).unwrap();
        assert!(!ts.all_trees());
        let cfg = FieldConfig::from_flat(vec![1.0, 2.0, 3.0]);
        let r = check_closedness(&ts, &cfg, ClosednessMode::Analytic).unwrap();
        assert_eq!(r.per_support[&Support::Edge(0)], 1.0);
        assert_eq!(r.max(), 1.0);
        assert!(!r.symbolic_zero());
        let fd = check_closedness(&ts, &cfg, ClosednessMode::FiniteDifference { step: 1e-4 }).unwrap();
        assert!((fd.per_support[&Support::Edge(0)] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn on_site_terms_give_zero_form() {
        let src = "[graph]\nvertex a\nvertex b\nedge a b\n[term p]\nvertices = a\nexpr = \"x(a,0)^4\"\n";
        let sys = parse_system(src, true).unwrap();
        let f = assemble_omega(&normalize(&sys).unwrap(), &sys.zero_config()).unwrap();
        assert!(f.supports().is_empty());
    }

    fn laplacian_2d() -> LagrangianSystem {
        let mut s = String::from("[graph]\n");
        for i in 0..4 {
            s += &format!("vertex v{i} fiber=R2\n");
        }
        for i in 0..4 {
            s += &format!("edge v{i} v{}\n", (i + 1) % 4);
        }
        for i in 0..4 {
            let j = (i + 1) % 4;
            s += &format!(
                "[term e{i}]\nvertices = v{i},v{j}\nexpr = \"((x(v{j},0)-x(v{i},0))^2+(x(v{j},1)-x(v{i},1))^2)/2\"\n"
            );
        }
        parse_system(&s, false).unwrap()
    }

    #[test]
    fn constant_fields_on_2d_laplacian() {
        let sys = laplacian_2d();
        let ts = normalize(&sys).unwrap();
        let cfg = sys.zero_config();
        let f = assemble_omega(&ts, &cfg).unwrap();
        let e1 = tangent(&[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let e2 = tangent(&[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!(omega_on_tangents(&f, &e1, &e2).is_zero());
        let b = boundary_omega(&f, &ts, &cfg).unwrap();
        assert_eq!(b.max_on(&e1, &e2), 0.0);
        assert_eq!(b.defect(), 0.0);
    }

    #[test]
    fn boundary_identity_off_shell() {
        let sys = with_paths("");
        let ts = normalize(&sys).unwrap();
        let cfg = FieldConfig::from_flat(vec![0.7, -1.3, 2.2]);
        let f = assemble_omega(&ts, &cfg).unwrap();
        let b = boundary_omega(&f, &ts, &cfg).unwrap();
        assert!(b.defect() < 1e-12);
        let (u, v) = (tangent(&[0.3, 1.0, -2.0]), tangent(&[1.5, 0.2, 0.4]));
        let chain = omega_on_tangents(&f, &u, &v);
        let bd = sys.graph.boundary(&chain);
        for (p, x) in b.evaluate(&u, &v).into_iter().enumerate() {
            assert!((bd.get(p) - x).abs() < 1e-12);
        }
        let uu = b.evaluate(&u, &u);
        assert!(uu.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn free_line_wronskian_chain() {
        let mut s = String::from("[graph]\n");
        for j in 0..=3 {
            s += &format!("vertex v{j}\n");
        }
        for j in 0..3 {
            s += &format!("edge v{j} v{}\n", j + 1);
        }
        s += "tail L attach=v0 expr=\"(x(L,0)-x(v0,0))^2/2\"\n";
        s += "tail R attach=v3 expr=\"(x(R,0)-x(v3,0))^2/2\"\n";
        for j in 0..3 {
            s += &format!(
                "[term e{j}]\nvertices = v{j},v{k}\nexpr = \"(x(v{k},0)-x(v{j},0))^2/2\"\n",
                k = j + 1
            );
        }
        let sys = parse_system(&s, false).unwrap();
        let ts = normalize(&sys).unwrap();
        let cfg = sys.zero_config();
        let f = assemble_omega(&ts, &cfg).unwrap();
        let u = tangent(&[1.0; 4]).with_tail_site(0, vec![1.0]).with_tail_site(1, vec![1.0]);
        let v = tangent(&[0.0, 1.0, 2.0, 3.0])
            .with_tail_site(0, vec![-1.0])
            .with_tail_site(1, vec![4.0]);
        let c = omega_on_tangents(&f, &u, &v);
        for e in 0..3 {
            assert_eq!(c.coefficient(e), -1.0);
        }
        assert_eq!((c.tail_coefficient(0), c.tail_coefficient(1)), (1.0, -1.0));
        assert!(sys.graph.boundary(&c).is_zero());
        let b = boundary_omega(&f, &ts, &cfg).unwrap();
        assert_eq!(b.defect(), 0.0);
        assert_eq!(b.max_on(&u, &v), 0.0);

        let sols = tangent_solutions(&sys, &cfg, 1e-10).unwrap();
        assert_eq!(sols.len(), 2);
        let w = omega_on_tangents(&f, &sols[0], &sols[1]);
        let c0 = w.coefficient(0);
        assert!(c0.abs() > 1e-3);
        for e in 1..3 {
            assert!((w.coefficient(e) - c0).abs() < 1e-12);
        }
        assert!((w.tail_coefficient(0) + c0).abs() < 1e-12);
    }
}
