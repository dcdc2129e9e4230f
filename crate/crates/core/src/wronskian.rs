//! Symplectic Wronskian of tangent fields.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::graph::{Chain1, EdgeId};
use crate::model::{FieldConfig, TangentField};
use crate::symform::{assemble_omega, bilinear, hessian_block, omega_on_tangents, ExtendedLayout, SymformError};
use crate::treeform::TreeLikeSystem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WronskianError {
    #[error("term `{0}` is not a nearest-neighbour or on-site interaction")]
    NotNearestNeighbor(String),
    #[error("edge {0} out of range")]
    UnknownEdge(EdgeId),
    #[error(transparent)]
    Symform(#[from] SymformError),
}

/// `e ↦ B_e(u, v)`, the form Ω at `psi` evaluated on a pair of tangents.
pub fn wronskian(
    tsys: &TreeLikeSystem,
    psi: &FieldConfig,
    u: &TangentField,
    v: &TangentField,
) -> Result<Chain1, SymformError> {
    Ok(omega_on_tangents(&assemble_omega(tsys, psi)?, u, v))
}

/// `u_jᵀ H_jk v_k − v_jᵀ H_jk u_k` for the edge `e = (j, k)`, summing the
/// Hessians of every term on that edge.
pub fn nn_wronskian(
    tsys: &TreeLikeSystem,
    psi: &FieldConfig,
    u: &TangentField,
    v: &TangentField,
    e: EdgeId,
) -> Result<f64, WronskianError> {
    let sys = tsys.system;
    let g = &sys.graph;
    for term in &sys.terms {
        let nn = match term.vertices.as_slice() {
            [_] => true,
            [a, b] => g.edge_between(*a, *b).is_some(),
            _ => false,
        };
        if !nn {
            return Err(WronskianError::NotNearestNeighbor(term.name.clone()));
        }
    }
    if e >= g.edge_count() {
        return Err(WronskianError::UnknownEdge(e));
    }
    if !sys.check_config(psi) {
        return Err(SymformError::InvalidField.into());
    }
    let (from, to) = g.edge(e);
    let (j, k) = (from.min(to), from.max(to));
    let sign = if from == j { 1.0 } else { -1.0 };
    let lookup = sys.lookup(psi);
    let mut m = DMatrix::zeros(sys.layout.dim(j), sys.layout.dim(k));
    for term in &sys.terms {
        let mut alpha = term.vertices.clone();
        alpha.sort_unstable();
        if alpha == [j, k] {
            let h = hessian_block(sys, term, j, k, &lookup).map_err(SymformError::from)?;
            m += &h * sign;
        }
    }
    let ext = ExtendedLayout::new(sys);
    let (u, v) = (ext.tangent(u), ext.tangent(v));
    let (rj, rk) = (ext.vertex_range(j), ext.vertex_range(k));
    Ok(bilinear(&u[rj.clone()], &m, &v[rk.clone()]) - bilinear(&v[rj], &m, &u[rk]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysfile::parse_system;
    use crate::treeform::normalize;

    #[test]
    fn single_spring() {
        let src = "[graph]\nvertex a\nvertex b\nedge a b\n[term s]\nvertices = a,b\nexpr = \"(x(b,0)-x(a,0))^2/2\"\n";
        let sys = parse_system(src, true).unwrap();
        let ts = normalize(&sys).unwrap();
        let psi = sys.zero_config();
        let u = TangentField::from_flat(vec![1.0, 1.0]);
        let v = TangentField::from_flat(vec![0.0, 1.0]);
        assert_eq!(nn_wronskian(&ts, &psi, &u, &v, 0).unwrap(), -1.0);
        assert_eq!(nn_wronskian(&ts, &psi, &u, &u, 0).unwrap(), 0.0);
        let w = wronskian(&ts, &psi, &u, &v).unwrap();
        assert_eq!(w.coefficient(0), -1.0);
        assert_eq!(wronskian(&ts, &psi, &v, &u).unwrap(), w.scale(-1.0));
        assert!(wronskian(&ts, &psi, &u, &u).unwrap().is_zero());
    }

    #[test]
    fn reversed_edge_matches_omega() {
        let src = "[graph]\nvertex a fiber=R2\nvertex b fiber=R2\nedge b a\n[term s]\nvertices = b,a\nexpr = \"x(a,0)*x(b,1) + 3*x(a,1)*x(b,0)^2 - x(a,1)*x(b,1)\"\n";
        let sys = parse_system(src, true).unwrap();
        let ts = normalize(&sys).unwrap();
        let psi = FieldConfig::from_flat(vec![0.3, -1.1, 0.8, 2.0]);
        let u = TangentField::from_flat(vec![1.0, 0.5, -2.0, 0.25]);
        let v = TangentField::from_flat(vec![0.1, 3.0, 1.5, -0.75]);
        let nn = nn_wronskian(&ts, &psi, &u, &v, 0).unwrap();
        assert_eq!(nn, wronskian(&ts, &psi, &u, &v).unwrap().coefficient(0));
    }

    #[test]
    fn rejects_long_range_terms() {
        let src = "[graph]\nvertex a\nvertex b\nvertex c\nedge a b\nedge b c\n[term s]\nvertices = a,c\nexpr = \"x(a,0)*x(c,0)\"\n";
        let sys = parse_system(src, true).unwrap();
        let ts = normalize(&sys).unwrap();
        let z = sys.zero_config();
        assert_eq!(
            nn_wronskian(&ts, &z, &z, &z, 0),
            Err(WronskianError::NotNearestNeighbor("s".into()))
        );
    }
}
