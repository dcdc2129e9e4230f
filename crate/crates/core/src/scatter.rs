//! Nearest-neighbour scattering on graphs with tails.
//!
//! The operator is `Σ_Q c_PQ ψ_Q + q_P ψ_P` on core vertices and the free
//! `ψ_{n+1} + ψ_{n−1}` along tails, at energy `E = 2 cos k`. On tail `b`
//! the field is `δ_ba e^{−ikn} + S_ba e^{ikn}` for incoming tail `a`, with
//! site 0 being the attach vertex.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::expr::ExprError;
use crate::graph::{Graph, VertexId};
use crate::model::{FieldConfig, LagrangianSystem};
use crate::variational::hessian;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScatterError {
    #[error("scattering needs at least one tail")]
    NoTails,
    #[error("vertex `{0}` does not have a scalar fiber")]
    NotScalar(String),
    #[error("potential is not quadratic: Hessian varies with the configuration")]
    NotLinear,
    #[error("term `{0}` is not a nearest-neighbour or on-site interaction")]
    NotNearestNeighbor(String),
    #[error("couplings are not symmetric between `{0}` and `{1}`")]
    Asymmetric(String, String),
    #[error("coupling between non-adjacent vertices `{0}` and `{1}`")]
    NonLocalCoupling(String, String),
    #[error("k = {0} is outside (0, π)")]
    InvalidEnergy(f64),
    #[error("singular scattering system at k = {k} (pivot ratio {pivot_ratio:e})")]
    SingularSystem { k: f64, pivot_ratio: f64 },
    #[error(transparent)]
    Eval(#[from] ExprError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterProblem {
    pub graph: Graph,
    /// Core couplings `c_PQ`; the diagonal is ignored.
    pub couplings: DMatrix<f64>,
    pub onsite: Vec<f64>,
}

impl ScatterProblem {
    /// Checks symmetry, locality and the presence of tails.
    pub fn new(graph: Graph, couplings: DMatrix<f64>, onsite: Vec<f64>) -> Result<Self, ScatterError> {
        let n = graph.vertex_count();
        assert_eq!((couplings.nrows(), couplings.ncols(), onsite.len()), (n, n, n));
        if graph.tail_count() == 0 {
            return Err(ScatterError::NoTails);
        }
        for p in 0..n {
            for q in p + 1..n {
                let (a, b) = (couplings[(p, q)], couplings[(q, p)]);
                let names = || (graph.vertex_name(p).to_string(), graph.vertex_name(q).to_string());
                if a != b {
                    let (x, y) = names();
                    return Err(ScatterError::Asymmetric(x, y));
                }
                if a != 0.0 && graph.edge_between(p, q).is_none() {
                    let (x, y) = names();
                    return Err(ScatterError::NonLocalCoupling(x, y));
                }
            }
        }
        Ok(Self::new_unchecked(graph, couplings, onsite))
    }

    /// Skips every check; used to feed non-self-adjoint operators to the solver.
    pub fn new_unchecked(graph: Graph, couplings: DMatrix<f64>, onsite: Vec<f64>) -> Self {
        Self {
            graph,
            couplings,
            onsite,
        }
    }

    /// Reads `c` and `q` from the constant Hessian of a scalar quadratic
    /// nearest-neighbour system: `c_PQ = ∂²L/∂x_P∂x_Q`, `q_P = ∂²L/∂x_P²`.
    /// Tail potentials are ignored; tails are always free.
    pub fn from_system(sys: &LagrangianSystem) -> Result<Self, ScatterError> {
        let g = &sys.graph;
        if let Some(v) = (0..g.vertex_count()).find(|&v| sys.layout.dim(v) != 1) {
            return Err(ScatterError::NotScalar(g.vertex_name(v).to_string()));
        }
        for term in &sys.terms {
            let nn = match term.vertices.as_slice() {
                [_] => true,
                [a, b] => g.edge_between(*a, *b).is_some(),
                _ => false,
            };
            if !nn {
                return Err(ScatterError::NotNearestNeighbor(term.name.clone()));
            }
        }
        let h = hessian(sys, &sys.zero_config())?.matrix;
        let n = g.vertex_count();
        for probe in [0.37, -1.9] {
            let cfg = FieldConfig::from_flat((0..n).map(|i| probe * (i as f64 + 1.0)).collect());
            let h2 = hessian(sys, &cfg)?.matrix;
            if (&h2 - &h).amax() > 1e-12 * h.amax().max(1.0) {
                return Err(ScatterError::NotLinear);
            }
        }
        let onsite = (0..n).map(|p| h[(p, p)]).collect();
        Self::new(g.clone(), h, onsite)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SMatrix {
    pub k: f64,
    /// `s[(b, a)]`: outgoing amplitude on tail `b` for a wave incoming on tail `a`.
    pub s: DMatrix<Complex64>,
    /// Core field of each scattering solution, one column per incoming tail.
    pub core: DMatrix<Complex64>,
    /// Smallest LU pivot relative to the largest matrix entry.
    pub pivot_ratio: f64,
    pub warning: Option<String>,
}

const SINGULAR: f64 = 1e-12;
const ILL_CONDITIONED: f64 = 1e-6;

/// Solves for S column by column: core values plus one amplitude per tail.
pub fn scatter(p: &ScatterProblem, k: f64) -> Result<SMatrix, ScatterError> {
    if !(k > 0.0 && k < PI) {
        return Err(ScatterError::InvalidEnergy(k));
    }
    let g = &p.graph;
    let n = g.vertex_count();
    let t = g.tail_count();
    let size = n + t;
    let out = Complex64::from_polar(1.0, k);
    let inc = out.conj();
    let energy = 2.0 * k.cos();

    let mut m = DMatrix::<Complex64>::zeros(size, size);
    // core rows
    for row in 0..n {
        for q in 0..n {
            if q != row {
                m[(row, q)] = p.couplings[(row, q)].into();
            }
        }
        m[(row, row)] = (p.onsite[row] - energy).into();
    }
    for (b, spec) in g.tails().iter().enumerate() {
        m[(spec.attach, n + b)] += out;
        // continuity: ψ_attach − S_b = δ_ba
        m[(n + b, spec.attach)] = 1.0.into();
        m[(n + b, n + b)] = (-1.0).into();
    }

    let scale = m.iter().fold(0.0_f64, |s, z| s.max(z.norm()));
    let lu = m.full_piv_lu();
    let min_pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |s, z| s.min(z.norm()));
    let pivot_ratio = min_pivot / scale;
    if pivot_ratio < SINGULAR {
        return Err(ScatterError::SingularSystem { k, pivot_ratio });
    }
    let warning = (pivot_ratio < ILL_CONDITIONED)
        .then(|| format!("ill-conditioned at k = {k} (pivot ratio {pivot_ratio:e})"));

    let mut s = DMatrix::zeros(t, t);
    let mut core = DMatrix::zeros(n, t);
    for (a, spec) in g.tails().iter().enumerate() {
        let mut rhs = DVector::<Complex64>::zeros(size);
        rhs[spec.attach] = -inc;
        rhs[n + a] = 1.0.into();
        let x = lu
            .solve(&rhs)
            .ok_or(ScatterError::SingularSystem { k, pivot_ratio })?;
        for v in 0..n {
            core[(v, a)] = x[v];
        }
        for b in 0..t {
            s[(b, a)] = x[n + b];
        }
    }
    Ok(SMatrix {
        k,
        s,
        core,
        pivot_ratio,
        warning,
    })
}

impl SMatrix {
    /// max |(S*S − I)_ij|.
    pub fn unitarity_defect(&self) -> f64 {
        let d = self.s.adjoint() * &self.s - DMatrix::identity(self.s.nrows(), self.s.ncols());
        d.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// max |S − Sᵀ|.
    pub fn reciprocity_defect(&self) -> f64 {
        let d = &self.s - self.s.transpose();
        d.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Field at site `n` of tail `b` for incoming tail `a`.
    pub fn tail_field(&self, b: usize, a: usize, n: usize) -> Complex64 {
        let phase = Complex64::from_polar(1.0, self.k * n as f64);
        let incoming = if a == b { phase.conj() } else { Complex64::new(0.0, 0.0) };
        incoming + self.s[(b, a)] * phase
    }
}

/// Wronskian flux `u_n v̄_{n+1} − u_{n+1} v̄_n` of two scattering solutions on tail `b`.
///
/// Site 0 reads the solved core value at the attach vertex, so the flux at
/// `n = 0` also tests continuity.
pub fn tail_flux(sm: &SMatrix, attach: VertexId, b: usize, a1: usize, a2: usize, n: usize) -> Complex64 {
    let field = |a: usize, m: usize| {
        if m == 0 {
            sm.core[(attach, a)]
        } else {
            sm.tail_field(b, a, m)
        }
    };
    field(a1, n) * field(a2, n + 1).conj() - field(a1, n + 1) * field(a2, n).conj()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitarityReport {
    pub smatrix: SMatrix,
    pub tol: f64,
    /// max |(S*S − I)_ij|.
    pub unitarity_defect: f64,
    /// max over solution pairs of |Σ_b J_b| at the attach sites.
    pub flux_balance: f64,
    /// max over tails and solution pairs of |J_b(0) − J_b(far)|.
    pub flux_drift: f64,
    pub reciprocity_defect: f64,
}

/// Site used to check that the flux is constant along each tail.
pub const FAR_SITE: usize = 50;

impl UnitarityReport {
    pub fn direct_passed(&self) -> bool {
        self.unitarity_defect <= self.tol
    }

    pub fn symplectic_passed(&self) -> bool {
        self.flux_balance <= self.tol && self.flux_drift <= self.tol
    }

    pub fn passed(&self) -> bool {
        self.direct_passed() && self.symplectic_passed()
    }
}

/// Checks S*S = I directly and through conservation of the Wronskian flux.
pub fn verify_unitarity(p: &ScatterProblem, k: f64, tol: f64) -> Result<UnitarityReport, ScatterError> {
    let sm = scatter(p, k)?;
    let t = p.graph.tail_count();
    let mut flux_balance = 0.0_f64;
    let mut flux_drift = 0.0_f64;
    for a1 in 0..t {
        for a2 in 0..t {
            let mut total = Complex64::new(0.0, 0.0);
            for (b, spec) in p.graph.tails().iter().enumerate() {
                let near = tail_flux(&sm, spec.attach, b, a1, a2, 0);
                let far = tail_flux(&sm, spec.attach, b, a1, a2, FAR_SITE);
                total += near;
                flux_drift = flux_drift.max((near - far).norm());
            }
            flux_balance = flux_balance.max(total.norm());
        }
    }
    Ok(UnitarityReport {
        unitarity_defect: sm.unitarity_defect(),
        reciprocity_defect: sm.reciprocity_defect(),
        smatrix: sm,
        tol,
        flux_balance,
        flux_drift,
    })
}
