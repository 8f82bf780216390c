//! Nodal Lagrange basis of degree `p` on the reference triangle.
//!
//! Local nodes are ordered: the three vertices, then `p - 1` nodes on each of
//! edges 0, 1, 2 (edge `i` opposite vertex `i`, traversed counter-clockwise),
//! then interior nodes.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    degree: usize,
    /// Barycentric lattice indices `(a0, a1, a2)` with `a0 + a1 + a2 = p`.
    nodes: Vec<[usize; 3]>,
    monomials: Vec<(usize, usize)>,
    /// `coeffs[k * n + m]`: coefficient of monomial `m` in basis function `k`.
    coeffs: Vec<f64>,
}

/// Values, reference gradients and reference Hessians `(xx, xy, yy)` of all
/// basis functions at a set of points, stored point-major.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub n_points: usize,
    pub n_basis: usize,
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
    pub hessians: Vec<[f64; 3]>,
}

impl Tabulation {
    #[inline]
    pub fn value(&self, q: usize, i: usize) -> f64 {
        self.values[q * self.n_basis + i]
    }

    #[inline]
    pub fn grad(&self, q: usize, i: usize) -> [f64; 2] {
        self.grads[q * self.n_basis + i]
    }

    #[inline]
    pub fn hessian(&self, q: usize, i: usize) -> [f64; 3] {
        self.hessians[q * self.n_basis + i]
    }
}

impl LagrangeBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if !(1..=4).contains(&degree) {
            return Err(Error::UnsupportedDegree(degree));
        }
        let p = degree;
        let mut nodes = vec![[p, 0, 0], [0, p, 0], [0, 0, p]];
        for s in 1..p {
            nodes.push([0, p - s, s]);
        }
        for s in 1..p {
            nodes.push([s, 0, p - s]);
        }
        for s in 1..p {
            nodes.push([p - s, s, 0]);
        }
        for a2 in 1..p {
            for a1 in 1..p - a2 {
                nodes.push([p - a1 - a2, a1, a2]);
            }
        }
        let monomials: Vec<(usize, usize)> =
            (0..=p).flat_map(|d| (0..=d).map(move |j| (d - j, j))).collect();
        let n = nodes.len();
        debug_assert_eq!(n, monomials.len());
        let vander = DMatrix::from_fn(n, n, |r, c| {
            let [_, a1, a2] = nodes[r];
            let (x, y) = (a1 as f64 / p as f64, a2 as f64 / p as f64);
            let (i, j) = monomials[c];
            x.powi(i as i32) * y.powi(j as i32)
        });
        let inv = vander.try_inverse().ok_or(Error::UnsupportedDegree(degree))?;
        let mut coeffs = vec![0.0; n * n];
        for k in 0..n {
            for m in 0..n {
                coeffs[k * n + m] = inv[(m, k)];
            }
        }
        Ok(LagrangeBasis { degree, nodes, monomials, coeffs })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[[usize; 3]] {
        &self.nodes
    }

    /// Reference coordinates of local node `k`.
    pub fn node_point(&self, k: usize) -> [f64; 2] {
        let [_, a1, a2] = self.nodes[k];
        [a1 as f64 / self.degree as f64, a2 as f64 / self.degree as f64]
    }

    /// Values of all basis functions at reference point `x`.
    pub fn values_at(&self, x: [f64; 2], out: &mut [f64]) {
        let n = self.len();
        let mono: Vec<f64> = self
            .monomials
            .iter()
            .map(|&(i, j)| x[0].powi(i as i32) * x[1].powi(j as i32))
            .collect();
        for k in 0..n {
            out[k] = self.coeffs[k * n..(k + 1) * n].iter().zip(&mono).map(|(c, m)| c * m).sum();
        }
    }

    pub fn tabulate(&self, points: &[[f64; 2]]) -> Tabulation {
        let n = self.len();
        let mut values = Vec::with_capacity(points.len() * n);
        let mut grads = Vec::with_capacity(points.len() * n);
        let mut hessians = Vec::with_capacity(points.len() * n);
        let pw = |v: f64, e: usize| if e == 0 { 1.0 } else { v.powi(e as i32) };
        for &[x, y] in points {
            let mut m_val = Vec::with_capacity(n);
            let mut m_grad = Vec::with_capacity(n);
            let mut m_hess = Vec::with_capacity(n);
            for &(i, j) in &self.monomials {
                let (fi, fj) = (i as f64, j as f64);
                m_val.push(pw(x, i) * pw(y, j));
                let dx = if i >= 1 { fi * pw(x, i - 1) * pw(y, j) } else { 0.0 };
                let dy = if j >= 1 { fj * pw(x, i) * pw(y, j - 1) } else { 0.0 };
                m_grad.push([dx, dy]);
                let dxx = if i >= 2 { fi * (fi - 1.0) * pw(x, i - 2) * pw(y, j) } else { 0.0 };
                let dxy = if i >= 1 && j >= 1 { fi * fj * pw(x, i - 1) * pw(y, j - 1) } else { 0.0 };
                let dyy = if j >= 2 { fj * (fj - 1.0) * pw(x, i) * pw(y, j - 2) } else { 0.0 };
                m_hess.push([dxx, dxy, dyy]);
            }
            for k in 0..n {
                let c = &self.coeffs[k * n..(k + 1) * n];
                let mut v = 0.0;
                let mut g = [0.0; 2];
                let mut h = [0.0; 3];
                for m in 0..n {
                    v += c[m] * m_val[m];
                    g[0] += c[m] * m_grad[m][0];
                    g[1] += c[m] * m_grad[m][1];
                    for d in 0..3 {
                        h[d] += c[m] * m_hess[m][d];
                    }
                }
                values.push(v);
                grads.push(g);
                hessians.push(h);
            }
        }
        Tabulation { n_points: points.len(), n_basis: n, values, grads, hessians }
    }
}
