//! Semilinear operator `A u = -div(A grad u) + b . grad u + c(u)`, its
//! derivative, the load `F = f + div f_vec`, and their Galerkin discretizations.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::fespace::{CoefVec, FESpace};
use crate::mesh::Domain;
use crate::poly::Poly2;
use crate::sparse::SparseMatrix;

pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

/// `sum_{n=0}^{order} x^n / n!`, evaluated by Horner's scheme.
pub fn truncated_exp(order: usize, x: f64) -> f64 {
    let mut s = 1.0;
    for k in (1..=order).rev() {
        s = 1.0 + x / k as f64 * s;
    }
    s
}

/// `sum_{n=1}^{order} x^n / n!`, without cancellation for small `x`.
fn truncated_exp_tail(order: usize, x: f64) -> f64 {
    if order == 0 {
        return 0.0;
    }
    let mut s = 1.0;
    for k in (2..=order).rev() {
        s = 1.0 + x / k as f64 * s;
    }
    x * s
}

/// Diffusion coefficient, constant on each initial element.
#[derive(Debug, Clone, PartialEq)]
pub enum Diffusion {
    Constant(Mat2),
    PerInitialElement(Vec<Mat2>),
}

impl Diffusion {
    #[inline]
    pub fn at(&self, root: usize) -> Mat2 {
        match self {
            Diffusion::Constant(a) => *a,
            Diffusion::PerInitialElement(v) => v[root],
        }
    }

    fn matrices(&self) -> Vec<Mat2> {
        match self {
            Diffusion::Constant(a) => vec![*a],
            Diffusion::PerInitialElement(v) => v.clone(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.matrices().iter().all(|a| *a == IDENTITY)
    }
}

fn eigenvalues(a: Mat2) -> (f64, f64) {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    (0.5 * tr - disc, 0.5 * tr + disc)
}

/// Reaction term `c(u)` with closed-form derivative and antiderivative.
#[derive(Debug, Clone, PartialEq)]
pub enum Reaction {
    Zero,
    /// `c(u) = sum_n a_n u^n`.
    Polynomial(Vec<f64>),
    /// `c(u) = exp_order(scale * u)`.
    TruncatedExp { order: usize, scale: f64 },
}

impl Reaction {
    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        match self {
            Reaction::Zero => 0.0,
            Reaction::Polynomial(a) => a.iter().rev().fold(0.0, |acc, &c| acc * u + c),
            Reaction::TruncatedExp { order, scale } => truncated_exp(*order, scale * u),
        }
    }

    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        match self {
            Reaction::Zero => 0.0,
            Reaction::Polynomial(a) => a
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (n, &c)| acc * u + n as f64 * c),
            Reaction::TruncatedExp { order, scale } => {
                if *order == 0 {
                    0.0
                } else {
                    scale * truncated_exp(order - 1, scale * u)
                }
            }
        }
    }

    /// `int_0^u c(s) ds`.
    #[inline]
    pub fn antiderivative(&self, u: f64) -> f64 {
        match self {
            Reaction::Zero => 0.0,
            Reaction::Polynomial(a) => a
                .iter()
                .enumerate()
                .rev()
                .fold(0.0, |acc, (n, &c)| acc * u + c / (n + 1) as f64)
                * u,
            Reaction::TruncatedExp { order, scale } => truncated_exp_tail(order + 1, scale * u) / scale,
        }
    }

    /// Order `N` of the highest nonvanishing derivative.
    pub fn truncation_order(&self) -> usize {
        match self {
            Reaction::Zero => 0,
            Reaction::Polynomial(a) => a.iter().rposition(|&c| c != 0.0).unwrap_or(0),
            Reaction::TruncatedExp { order, .. } => *order,
        }
    }

    /// Bound `R` on `|c^{(N)}|`; the `N`-th derivative is constant here.
    pub fn growth_bound(&self) -> f64 {
        let n = self.truncation_order();
        let fact: f64 = (1..=n).map(|k| k as f64).product();
        match self {
            Reaction::Zero => 0.0,
            Reaction::Polynomial(a) => (fact * a.get(n).copied().unwrap_or(0.0)).abs(),
            Reaction::TruncatedExp { scale, .. } => scale.abs().powi(n as i32),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SemilinearProblem {
    pub name: String,
    pub domain: Domain,
    pub diffusion: Diffusion,
    pub convection: [f64; 2],
    pub reaction: Reaction,
    pub load: Poly2,
    pub flux: [Poly2; 2],
    alpha_min: f64,
    alpha_max: f64,
}

impl SemilinearProblem {
    /// Validate coefficients: symmetric positive definite diffusion and a
    /// monotone reaction (`c' >= 0` on sampled arguments in `[-1, 1]`).
    pub fn new(
        name: impl Into<String>,
        domain: Domain,
        diffusion: Diffusion,
        convection: [f64; 2],
        reaction: Reaction,
        load: Poly2,
        flux: [Poly2; 2],
    ) -> Result<Self> {
        let mats = diffusion.matrices();
        if mats.is_empty() {
            return Err(Error::InvalidProblem("no diffusion coefficient given".into()));
        }
        let (mut alpha_min, mut alpha_max) = (f64::INFINITY, 0.0_f64);
        for a in &mats {
            if (a[0][1] - a[1][0]).abs() > 1e-14 * (a[0][0].abs() + a[1][1].abs()) {
                return Err(Error::InvalidProblem("diffusion matrix is not symmetric".into()));
            }
            let (lo, hi) = eigenvalues(*a);
            alpha_min = alpha_min.min(lo);
            alpha_max = alpha_max.max(hi);
        }
        if !(alpha_min > 0.0) || !alpha_max.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "diffusion must be uniformly positive definite (smallest eigenvalue {alpha_min})"
            )));
        }
        if !convection.iter().all(|b| b.is_finite()) {
            return Err(Error::InvalidProblem("convection must be finite".into()));
        }
        for k in 0..=200 {
            let xi = -1.0 + k as f64 / 100.0;
            let d = reaction.derivative(xi);
            if !(d >= 0.0) {
                return Err(Error::InvalidProblem(format!(
                    "reaction is not monotone: c'({xi}) = {d}"
                )));
            }
        }
        Ok(SemilinearProblem {
            name: name.into(),
            domain,
            diffusion,
            convection,
            reaction,
            load,
            flux,
            alpha_min,
            alpha_max,
        })
    }

    /// L-shape, `f = 2`, `A = I`, `b = 0`, `c(u) = exp_11(40 u)`.
    pub fn case1() -> Self {
        Self::benchmark("case1", [0.0, 0.0])
    }

    /// As [`SemilinearProblem::case1`] with convection `b = (-50, 0)`.
    pub fn case2() -> Self {
        Self::benchmark("case2", [-50.0, 0.0])
    }

    fn benchmark(name: &str, convection: [f64; 2]) -> Self {
        Self::new(
            name,
            Domain::LShape,
            Diffusion::Constant(IDENTITY),
            convection,
            Reaction::TruncatedExp { order: 11, scale: 40.0 },
            Poly2::constant(2.0),
            [Poly2::zero(), Poly2::zero()],
        )
        .expect("benchmark data is valid")
    }

    /// `-div(A grad u) + sigma u = f` with constant data.
    pub fn linear(domain: Domain, sigma: f64, f: f64) -> Self {
        let reaction = if sigma == 0.0 { Reaction::Zero } else { Reaction::Polynomial(vec![0.0, sigma]) };
        Self::new(
            "linear",
            domain,
            Diffusion::Constant(IDENTITY),
            [0.0, 0.0],
            reaction,
            Poly2::constant(f),
            [Poly2::zero(), Poly2::zero()],
        )
        .expect("linear data is valid")
    }

    pub fn alpha_min(&self) -> f64 {
        self.alpha_min
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_max
    }

    pub fn has_convection(&self) -> bool {
        self.convection != [0.0, 0.0]
    }

    /// The Jacobian is symmetric exactly when there is no convection.
    pub fn is_symmetric(&self) -> bool {
        !self.has_convection()
    }
}

/// Residual functional `<F - A v, phi_i>` on the free dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVec(pub Vec<f64>);

impl DualVec {
    pub fn zeros(n: usize) -> Self {
        DualVec(vec![0.0; n])
    }
}

impl Deref for DualVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DualVec {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Per-element quadrature data shared by all assembly routines.
struct ElementValues {
    /// Physical points.
    x: Vec<[f64; 2]>,
    /// `area * weight`.
    jxw: Vec<f64>,
    /// Physical gradients, point-major.
    grads: Vec<[f64; 2]>,
    u: Vec<f64>,
    du: Vec<[f64; 2]>,
}

fn element_values(space: &FESpace, full: Option<&[f64]>, t: usize, local: &mut [f64]) -> ElementValues {
    let rule = space.quad_rule();
    let tab = space.tabulation();
    let map = space.element_map(t);
    let n = space.n_local();
    if let Some(full) = full {
        space.gather(full, t, local);
    }
    let nq = rule.len();
    let mut ev = ElementValues {
        x: Vec::with_capacity(nq),
        jxw: Vec::with_capacity(nq),
        grads: Vec::with_capacity(nq * n),
        u: Vec::with_capacity(nq),
        du: Vec::with_capacity(nq),
    };
    for q in 0..nq {
        ev.x.push(map.to_physical(rule.points[q]));
        ev.jxw.push(map.area * rule.weights[q]);
        let (mut u, mut du) = (0.0, [0.0; 2]);
        for k in 0..n {
            let g = map.grad(tab.grad(q, k));
            ev.grads.push(g);
            if full.is_some() {
                u += local[k] * tab.value(q, k);
                du[0] += local[k] * g[0];
                du[1] += local[k] * g[1];
            }
        }
        ev.u.push(u);
        ev.du.push(du);
    }
    ev
}

#[inline]
fn matvec(a: Mat2, g: [f64; 2]) -> [f64; 2] {
    [a[0][0] * g[0] + a[0][1] * g[1], a[1][0] * g[0] + a[1][1] * g[1]]
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn check_len(space: &FESpace, v: &CoefVec) -> Result<()> {
    if v.len() != space.n_free() {
        return Err(Error::DimensionMismatch { expected: space.n_free(), got: v.len() });
    }
    Ok(())
}

/// `<F - A v, phi_i> = int f phi_i + f_vec . grad phi_i - A grad v . grad phi_i
/// - (b . grad v) phi_i - c(v) phi_i`, summed in element order.
pub fn residual_vector(prob: &SemilinearProblem, space: &FESpace, v: &CoefVec) -> Result<DualVec> {
    check_len(space, v)?;
    let full = space.extend(v);
    let mesh = space.mesh();
    let tab = space.tabulation();
    let n = space.n_local();
    let b = prob.convection;
    let mut local = vec![0.0; n];
    let mut r_loc = vec![0.0; n];
    let mut out = DualVec::zeros(space.n_free());
    for t in 0..mesh.n_triangles() {
        let a = prob.diffusion.at(mesh.root(t));
        let ev = element_values(space, Some(&full), t, &mut local);
        r_loc.iter_mut().for_each(|r| *r = 0.0);
        for q in 0..ev.x.len() {
            let x = ev.x[q];
            let f = prob.load.eval(x);
            let fv = [prob.flux[0].eval(x), prob.flux[1].eval(x)];
            let adu = matvec(a, ev.du[q]);
            let flux = [fv[0] - adu[0], fv[1] - adu[1]];
            let zeroth = f - dot(b, ev.du[q]) - prob.reaction.value(ev.u[q]);
            for k in 0..n {
                r_loc[k] += ev.jxw[q] * (zeroth * tab.value(q, k) + dot(flux, ev.grads[q * n + k]));
            }
        }
        for (k, &g) in space.element_dofs(t).iter().enumerate() {
            if let Some(i) = space.free_index(g) {
                out[i] += r_loc[k];
            }
        }
    }
    Ok(out)
}

/// `J_ij = int A grad phi_j . grad phi_i + (b . grad phi_j) phi_i + c'(v) phi_j phi_i`.
pub fn jacobian_matrix(prob: &SemilinearProblem, space: &FESpace, v: &CoefVec) -> Result<SparseMatrix> {
    check_len(space, v)?;
    let full = space.extend(v);
    assemble_bilinear(prob, space, Some(&full), true)
}

/// Gram matrix of the energy inner product `<A grad u, grad w>`.
pub fn energy_matrix(prob: &SemilinearProblem, space: &FESpace) -> SparseMatrix {
    assemble_bilinear(prob, space, None, false).expect("energy assembly has no failure modes")
}

fn assemble_bilinear(
    prob: &SemilinearProblem,
    space: &FESpace,
    full: Option<&[f64]>,
    lower_order: bool,
) -> Result<SparseMatrix> {
    let mesh = space.mesh();
    let tab = space.tabulation();
    let n = space.n_local();
    let b = prob.convection;
    let symmetric = !lower_order || prob.is_symmetric();
    let mut m = SparseMatrix::zeros(space.pattern().clone(), symmetric);
    let mut local = vec![0.0; n];
    let mut k_loc = vec![0.0; n * n];
    for t in 0..mesh.n_triangles() {
        let a = prob.diffusion.at(mesh.root(t));
        let ev = element_values(space, full, t, &mut local);
        k_loc.iter_mut().for_each(|k| *k = 0.0);
        for q in 0..ev.x.len() {
            let w = ev.jxw[q];
            let dc = if lower_order { prob.reaction.derivative(ev.u[q]) } else { 0.0 };
            let g = &ev.grads[q * n..(q + 1) * n];
            for j in 0..n {
                let agj = matvec(a, g[j]);
                let phij = tab.value(q, j);
                let bgj = if lower_order { dot(b, g[j]) } else { 0.0 };
                for i in 0..n {
                    let phii = tab.value(q, i);
                    k_loc[i * n + j] += w * (dot(agj, g[i]) + (bgj + dc * phij) * phii);
                }
            }
        }
        let vals = m.values_mut();
        for i in 0..n {
            for j in 0..n {
                if let Some(pos) = space.scatter(t, i, j) {
                    vals[pos] += k_loc[i * n + j];
                }
            }
        }
    }
    Ok(m)
}

/// `E(v) = 1/2 int A grad v . grad v + int int_0^v c - int f v - int f_vec . grad v`.
pub fn energy(prob: &SemilinearProblem, space: &FESpace, v: &CoefVec) -> Result<f64> {
    if prob.has_convection() {
        return Err(Error::UnsupportedCase("no energy functional exists with convection".into()));
    }
    check_len(space, v)?;
    let full = space.extend(v);
    let mesh = space.mesh();
    let mut local = vec![0.0; space.n_local()];
    let mut e = 0.0;
    for t in 0..mesh.n_triangles() {
        let a = prob.diffusion.at(mesh.root(t));
        let ev = element_values(space, Some(&full), t, &mut local);
        for q in 0..ev.x.len() {
            let x = ev.x[q];
            let du = ev.du[q];
            let fv = [prob.flux[0].eval(x), prob.flux[1].eval(x)];
            e += ev.jxw[q]
                * (0.5 * dot(matvec(a, du), du) + prob.reaction.antiderivative(ev.u[q])
                    - prob.load.eval(x) * ev.u[q]
                    - dot(fv, du));
        }
    }
    Ok(e)
}
