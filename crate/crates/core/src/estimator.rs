//! Residual a posteriori error estimator
//!
//! `eta_T^2 = h_T^2 ||f + div(A grad v - f_vec) - b . grad v - c(v)||_T^2
//!          + h_T sum_{E interior edge of T} ||[(A grad v - f_vec) . n]||_E^2`
//!
//! with `h_T` the longest edge of `T`. Each interior edge counts in full for
//! both of its triangles. The flux load is a global polynomial, so it drops
//! out of the jump.

use crate::fespace::{edge_rule, CoefVec, FESpace, Tabulation};
use crate::mesh::MarkedSet;
use crate::problem::SemilinearProblem;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalEstimators {
    pub eta_sq: Vec<f64>,
    pub total: f64,
}

impl LocalEstimators {
    pub fn from_squares(eta_sq: Vec<f64>) -> Self {
        let total = eta_sq.iter().sum::<f64>().sqrt();
        LocalEstimators { eta_sq, total }
    }

    pub fn len(&self) -> usize {
        self.eta_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta_sq.is_empty()
    }
}

/// `sqrt(sum_{t in subset} eta_sq[t])`.
pub fn restricted_total(est: &LocalEstimators, subset: &MarkedSet) -> f64 {
    subset.indices().iter().map(|&t| est.eta_sq[t]).sum::<f64>().sqrt()
}

const REF_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

pub fn local_estimators(prob: &SemilinearProblem, space: &FESpace, v: &CoefVec) -> LocalEstimators {
    let mesh = space.mesh();
    let nt = mesh.n_triangles();
    let n = space.n_local();
    let full = space.extend(v);
    let mut local = vec![0.0; n];
    let mut eta_sq = vec![0.0; nt];

    // Volume residual.
    let rule = space.quad_rule();
    let tab = space.tabulation();
    let b = prob.convection;
    for (t, eta) in eta_sq.iter_mut().enumerate() {
        let a = prob.diffusion.at(mesh.root(t));
        let map = space.element_map(t);
        space.gather(&full, t, &mut local);
        let h = mesh.diameter(t);
        let mut sum = 0.0;
        for q in 0..rule.len() {
            let (mut u, mut g, mut hs) = (0.0, [0.0; 2], [0.0; 3]);
            for (k, &c) in local.iter().enumerate() {
                u += c * tab.value(q, k);
                let gk = tab.grad(q, k);
                g[0] += c * gk[0];
                g[1] += c * gk[1];
                let hk = tab.hessian(q, k);
                for d in 0..3 {
                    hs[d] += c * hk[d];
                }
            }
            let g = map.grad(g);
            let hs = map.hessian(hs);
            let x = map.to_physical(rule.points[q]);
            let div_adu = a[0][0] * hs[0] + (a[0][1] + a[1][0]) * hs[1] + a[1][1] * hs[2];
            let div_fv = prob.flux[0].grad(x)[0] + prob.flux[1].grad(x)[1];
            let r = prob.load.eval(x) + div_adu - div_fv - b[0] * g[0] - b[1] * g[1] - prob.reaction.value(u);
            sum += rule.weights[q] * r * r;
        }
        *eta = h * h * map.area * sum;
    }

    // Normal-flux jumps across interior edges.
    let erule = edge_rule(2 * space.degree());
    let s_points: Vec<f64> = erule.iter().map(|&(s, _)| s).collect();
    let edge_tabs: Vec<Vec<Tabulation>> = (0..3)
        .map(|i| {
            (0..3)
                .map(|j| {
                    let (p, q) = (REF_VERTICES[i], REF_VERTICES[j]);
                    let pts: Vec<[f64; 2]> =
                        s_points.iter().map(|&s| [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]).collect();
                    space.basis().tabulate(&pts)
                })
                .collect()
        })
        .collect();

    let mut fluxes = [vec![[0.0; 2]; erule.len()], vec![[0.0; 2]; erule.len()]];
    for (e, &[va, vb]) in mesh.edges().iter().enumerate() {
        let [Some(t1), Some(t2)] = mesh.edge_triangles(e) else { continue };
        for (side, &t) in [t1, t2].iter().enumerate() {
            let tri = mesh.triangle(t);
            let la = tri.iter().position(|&x| x == va).expect("edge vertex in triangle");
            let lb = tri.iter().position(|&x| x == vb).expect("edge vertex in triangle");
            let etab = &edge_tabs[la][lb];
            let map = space.element_map(t);
            let a = prob.diffusion.at(mesh.root(t));
            space.gather(&full, t, &mut local);
            for (q, out) in fluxes[side].iter_mut().enumerate() {
                let mut g = [0.0; 2];
                for (k, &c) in local.iter().enumerate() {
                    let gk = etab.grad(q, k);
                    g[0] += c * gk[0];
                    g[1] += c * gk[1];
                }
                let g = map.grad(g);
                *out = [a[0][0] * g[0] + a[0][1] * g[1], a[1][0] * g[0] + a[1][1] * g[1]];
            }
        }
        let (pa, pb) = (mesh.vertex(va), mesh.vertex(vb));
        let len = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
        let normal = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
        let mut jump_sq = 0.0;
        for (q, &(_, w)) in erule.iter().enumerate() {
            let d = [fluxes[0][q][0] - fluxes[1][q][0], fluxes[0][q][1] - fluxes[1][q][1]];
            let j = d[0] * normal[0] + d[1] * normal[1];
            jump_sq += w * j * j;
        }
        jump_sq *= len;
        eta_sq[t1] += mesh.diameter(t1) * jump_sq;
        eta_sq[t2] += mesh.diameter(t2) * jump_sq;
    }
    LocalEstimators::from_squares(eta_sq)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn restricted_totals() {
        let est = LocalEstimators::from_squares(vec![1.0, 4.0, 4.0]);
        assert_eq!(est.total, 3.0);
        assert_eq!(restricted_total(&est, &MarkedSet::all(3)), est.total);
        assert_eq!(restricted_total(&est, &MarkedSet::empty()), 0.0);
        let a = restricted_total(&est, &MarkedSet::new(vec![0], 3).unwrap());
        let b = restricted_total(&est, &MarkedSet::new(vec![1, 2], 3).unwrap());
        assert!((a * a + b * b - est.total * est.total).abs() < 1e-14);
    }
}
