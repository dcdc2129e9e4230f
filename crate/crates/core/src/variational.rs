//! Euler–Lagrange residuals, the linearized operator, Newton solving and
//! kernel extraction.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::expr::ExprError;
use crate::model::{Covector, FieldConfig, LagrangianSystem, TangentField};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VariationalError {
    #[error(transparent)]
    Eval(#[from] ExprError),
    #[error("configuration does not match the system layout")]
    InvalidConfig,
    #[error("singular Jacobian at iteration {iteration} (pivot ratio {pivot_ratio:e}); try --ridge")]
    SingularJacobian { iteration: usize, pivot_ratio: f64 },
    #[error("no convergence after {iterations} iterations (best residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Box<FieldConfig>,
    },
}

/// ∂L/∂x_P at every vertex, summed over the terms containing P.
pub fn el_residual(sys: &LagrangianSystem, config: &FieldConfig) -> Result<Covector, ExprError> {
    let mut out = vec![0.0; sys.layout.total()];
    let lookup = sys.lookup(config);
    for term in &sys.terms {
        for (i, &c) in term.coords().iter().enumerate() {
            let g = term.gradient_expr(i);
            if !g.is_zero() {
                out[c] += g.evaluate(&lookup)?;
            }
        }
    }
    Ok(Covector::from_flat(out))
}

/// Hessian of the total Lagrangian at a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedOperator {
    pub matrix: DMatrix<f64>,
}

impl LinearizedOperator {
    pub fn apply(&self, u: &TangentField) -> Vec<f64> {
        let v = &self.matrix * DVector::from_column_slice(&u.values);
        v.iter().copied().collect()
    }

    /// max |H - Hᵀ|.
    pub fn asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }
}

/// Blockwise assembly of second derivatives; blocks vanish unless the vertices share a term.
pub fn hessian(
    sys: &LagrangianSystem,
    config: &FieldConfig,
) -> Result<LinearizedOperator, ExprError> {
    let n = sys.layout.total();
    let mut m = DMatrix::zeros(n, n);
    let lookup = sys.lookup(config);
    for term in &sys.terms {
        let coords = term.coords();
        for (i, &ci) in coords.iter().enumerate() {
            for (j, &cj) in coords.iter().enumerate().skip(i) {
                let h = term.hessian_expr(i, j);
                if h.is_zero() {
                    continue;
                }
                let v = h.evaluate(&lookup)?;
                m[(ci, cj)] += v;
                if ci != cj {
                    m[(cj, ci)] += v;
                }
            }
        }
    }
    Ok(LinearizedOperator { matrix: m })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Tikhonov shift added to the Hessian; moves iterates only along near-zero modes.
    pub ridge: Option<f64>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            ridge: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub config: FieldConfig,
    pub iterations: usize,
    /// ‖el_residual‖∞ before the first step and after every step.
    pub residuals: Vec<f64>,
}

impl NewtonOutcome {
    pub fn residual(&self) -> f64 {
        *self.residuals.last().expect("at least the initial residual")
    }
}

const PIVOT_RATIO: f64 = 1e-12;

/// Full Newton steps on the Euler–Lagrange equations, no line search.
pub fn solve_newton(
    sys: &LagrangianSystem,
    init: &FieldConfig,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome, VariationalError> {
    assert!(opts.tol > 0.0);
    if !sys.check_config(init) {
        return Err(VariationalError::InvalidConfig);
    }
    let mut x = init.clone();
    let mut r = el_residual(sys, &x)?;
    let mut residuals = vec![r.norm_inf()];
    let mut best = (residuals[0], x.clone());
    if residuals[0] <= opts.tol {
        return Ok(NewtonOutcome {
            config: x,
            iterations: 0,
            residuals,
        });
    }
    for iteration in 1..=opts.max_iter {
        let mut h = hessian(sys, &x)?.matrix;
        if let Some(lambda) = opts.ridge {
            for i in 0..h.nrows() {
                h[(i, i)] += lambda;
            }
        }
        let scale = h.amax();
        let lu = h.full_piv_lu();
        let min_pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |m, p| m.min(p.abs()));
        let ratio = if scale > 0.0 { min_pivot / scale } else { 0.0 };
        if ratio < PIVOT_RATIO {
            return Err(VariationalError::SingularJacobian {
                iteration,
                pivot_ratio: ratio,
            });
        }
        let rhs = -DVector::from_column_slice(&r.values);
        let step = lu.solve(&rhs).ok_or(VariationalError::SingularJacobian {
            iteration,
            pivot_ratio: ratio,
        })?;
        for (xi, di) in x.values.iter_mut().zip(step.iter()) {
            *xi += di;
        }
        r = el_residual(sys, &x)?;
        let norm = r.norm_inf();
        residuals.push(norm);
        if norm < best.0 {
            best = (norm, x.clone());
        }
        if norm <= opts.tol {
            return Ok(NewtonOutcome {
                config: x,
                iterations: iteration,
                residuals,
            });
        }
    }
    Err(VariationalError::NoConvergence {
        iterations: opts.max_iter,
        residual: best.0,
        best: Box::new(best.1),
    })
}

/// Orthonormal basis of eigenvectors with |λ| ≤ tol · max|λ|.
///
/// Each vector is signed so that its largest-magnitude entry is positive.
pub fn kernel_basis(op: &LinearizedOperator, tol: f64) -> Vec<TangentField> {
    let n = op.matrix.nrows();
    if n == 0 {
        return Vec::new();
    }
    let eig = SymmetricEigen::new(op.matrix.clone());
    let scale = eig.eigenvalues.amax();
    let mut idx: Vec<usize> = (0..n)
        .filter(|&i| eig.eigenvalues[i].abs() <= tol * scale)
        .collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].abs().total_cmp(&eig.eigenvalues[b].abs()));
    idx.into_iter()
        .map(|i| {
            let col = eig.eigenvectors.column(i);
            let pivot = col.iter().fold(0.0_f64, |m, &x| if x.abs() > m.abs() { x } else { m });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            TangentField::from_flat(col.iter().map(|x| sign * x).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysfile::parse_system;

    fn cycle(n: usize, fiber: &str, expr: impl Fn(usize, usize) -> String) -> String {
        let mut s = String::from("[graph]\n");
        for i in 0..n {
            s += &format!("vertex v{i} fiber={fiber}\n");
        }
        for i in 0..n {
            s += &format!("edge v{i} v{}\n", (i + 1) % n);
        }
        for i in 0..n {
            let j = (i + 1) % n;
            s += &format!("[term e{i}]\nvertices = v{i},v{j}\nexpr = \"{}\"\n", expr(i, j));
        }
        s
    }

    #[test]
    fn triangle_residuals() {
        let sys = parse_system(&cycle(3, "R1", |i, j| format!("x(v{i},0)*x(v{j},0)")), false).unwrap();
        let r = el_residual(&sys, &FieldConfig::from_flat(vec![1.0; 3])).unwrap();
        assert_eq!(r.values, vec![2.0; 3]);
        let r = el_residual(&sys, &sys.zero_config()).unwrap();
        assert_eq!(r.values, vec![0.0; 3]);
    }

    #[test]
    fn product_hessian_on_an_edge() {
        let src = "[graph]\nvertex a\nvertex b\nedge a b\n[term t]\nvertices = a,b\nexpr = \"x(a,0)*x(b,0)\"\n";
        let sys = parse_system(src, true).unwrap();
        let h = hessian(&sys, &sys.zero_config()).unwrap().matrix;
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn spring_hessian_is_laplacian() {
        let sys = parse_system(
            &cycle(4, "R1", |i, j| format!("(x(v{j},0)-x(v{i},0))^2/2")),
            false,
        )
        .unwrap();
        let h = hessian(&sys, &FieldConfig::from_flat(vec![0.3, -1.0, 2.0, 0.1])).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j {
                    2.0
                } else if (i + 1) % 4 == j || (j + 1) % 4 == i {
                    -1.0
                } else {
                    0.0
                };
                assert_eq!(h.matrix[(i, j)], want);
            }
        }
        assert_eq!(h.asymmetry(), 0.0);
    }

    #[test]
    fn laplacian_kernels() {
        let sys = parse_system(
            &cycle(5, "R1", |i, j| format!("(x(v{j},0)-x(v{i},0))^2/2")),
            false,
        )
        .unwrap();
        let h = hessian(&sys, &sys.zero_config()).unwrap();
        let k = kernel_basis(&h, 1e-10);
        assert_eq!(k.len(), 1);
        let c = 1.0 / 5f64.sqrt();
        assert!(k[0].values.iter().all(|x| (x - c).abs() < 1e-12));

        let sys2 = parse_system(
            &cycle(4, "R2", |i, j| {
                format!("((x(v{j},0)-x(v{i},0))^2+(x(v{j},1)-x(v{i},1))^2)/2")
            }),
            false,
        )
        .unwrap();
        let h2 = hessian(&sys2, &sys2.zero_config()).unwrap();
        assert_eq!(kernel_basis(&h2, 1e-10).len(), 2);

        let pd = LinearizedOperator {
            matrix: DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]),
        };
        assert!(kernel_basis(&pd, 1e-10).is_empty());
    }

    #[test]
    fn newton_on_quadratic_takes_one_step() {
        let src = cycle(4, "R1", |i, j| {
            format!("(x(v{j},0)-x(v{i},0))^2/2 + 0.5*x(v{i},0)^2 - 0.3*x(v{i},0)")
        });
        let sys = parse_system(&src, false).unwrap();
        let init = FieldConfig::from_flat(vec![0.4, -2.0, 1.5, 3.0]);
        let out = solve_newton(&sys, &init, &NewtonOptions::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.residual() <= 1e-10);
    }

    #[test]
    fn translation_mode_is_singular() {
        let sys = parse_system(
            &cycle(5, "R1", |i, j| format!("(x(v{j},0)-x(v{i},0))^2/2 + 0.1*(x(v{j},0)-x(v{i},0))^4")),
            false,
        )
        .unwrap();
        let init = FieldConfig::from_flat(vec![0.1, -0.2, 0.3, 0.0, 0.05]);
        let opts = NewtonOptions::default();
        assert!(matches!(
            solve_newton(&sys, &init, &opts),
            Err(VariationalError::SingularJacobian { .. })
        ));
        let ridged = NewtonOptions {
            ridge: Some(1e-9),
            ..opts
        };
        let out = solve_newton(&sys, &init, &ridged).unwrap();
        assert!(out.residual() <= 1e-10);
        let r = el_residual(&sys, &out.config).unwrap();
        assert!(r.norm_inf() <= 1e-10);
    }

    #[test]
    fn no_convergence_reports_best_iterate() {
        // exp has no stationary point; each step moves a by -1
        let src = "[graph]\nvertex a\nvertex b\nedge a b\n[term t]\nvertices = a\nexpr = \"exp(x(a,0))\"\n[term u]\nvertices = b\nexpr = \"x(b,0)^2/2\"\n";
        let sys = parse_system(src, true).unwrap();
        let opts = NewtonOptions {
            max_iter: 5,
            ..NewtonOptions::default()
        };
        match solve_newton(&sys, &FieldConfig::from_flat(vec![0.0, 0.0]), &opts) {
            Err(VariationalError::SingularJacobian { .. }) => {}
            Err(VariationalError::NoConvergence { best, residual, .. }) => {
                assert_eq!(best.values.len(), 2);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
