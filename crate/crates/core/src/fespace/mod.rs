//! Conforming Lagrange spaces `S^p_0` with homogeneous Dirichlet conditions.

mod basis;
mod quadrature;

use std::ops::{Deref, DerefMut};
use std::sync::Arc;

pub use basis::{LagrangeBasis, Tabulation};
pub use quadrature::{edge_rule, gauss_legendre, QuadRule};

use crate::error::{Error, Result};
use crate::mesh::{Point, Triangulation};
use crate::sparse::{Pattern, SparseMatrix};

/// Coefficients of a discrete function, one per free dof.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefVec(pub Vec<f64>);

impl CoefVec {
    pub fn zeros(n: usize) -> Self {
        CoefVec(vec![0.0; n])
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &CoefVec) -> CoefVec {
        CoefVec(self.0.iter().zip(&other.0).map(|(a, b)| a + alpha * b).collect())
    }
}

impl Deref for CoefVec {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for CoefVec {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Affine map from the reference triangle onto one element.
#[derive(Debug, Clone, Copy)]
pub struct ElementMap {
    pub origin: Point,
    /// Columns are `x1 - x0` and `x2 - x0`.
    pub jac: [[f64; 2]; 2],
    /// Inverse transpose of `jac`.
    pub inv_t: [[f64; 2]; 2],
    pub area: f64,
}

impl ElementMap {
    pub fn new(corners: [Point; 3]) -> Self {
        let [x0, x1, x2] = corners;
        let jac = [[x1[0] - x0[0], x2[0] - x0[0]], [x1[1] - x0[1], x2[1] - x0[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        // (J^-1)^T
        let inv_t = [[jac[1][1] / det, -jac[1][0] / det], [-jac[0][1] / det, jac[0][0] / det]];
        ElementMap { origin: x0, jac, inv_t, area: 0.5 * det }
    }

    #[inline]
    pub fn to_physical(&self, r: [f64; 2]) -> Point {
        [
            self.origin[0] + self.jac[0][0] * r[0] + self.jac[0][1] * r[1],
            self.origin[1] + self.jac[1][0] * r[0] + self.jac[1][1] * r[1],
        ]
    }

    #[inline]
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
            self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
        ]
    }

    /// Physical Hessian `(xx, xy, yy)` from a reference Hessian.
    #[inline]
    pub fn hessian(&self, h: [f64; 3]) -> [f64; 3] {
        let k = self.inv_t;
        let href = [[h[0], h[1]], [h[1], h[2]]];
        // H_x = K H_ref K^T with K = J^-T
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        s += k[i][a] * href[a][b] * k[j][b];
                    }
                }
                out[i][j] = s;
            }
        }
        [out[0][0], out[0][1], out[1][1]]
    }
}

const NOT_FREE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct FESpace {
    mesh: Arc<Triangulation>,
    basis: LagrangeBasis,
    n_dofs: usize,
    dof_coords: Vec<Point>,
    free_index: Vec<usize>,
    free_dofs: Vec<usize>,
    element_dofs: Vec<usize>,
    pattern: Arc<Pattern>,
    scatter: Vec<usize>,
    rule: QuadRule,
    tab: Tabulation,
}

impl FESpace {
    pub fn new(mesh: Arc<Triangulation>, degree: usize) -> Result<Self> {
        let basis = LagrangeBasis::new(degree)?;
        let p = degree;
        let nv = mesh.n_vertices();
        let ne = mesh.n_edges();
        let nt = mesh.n_triangles();
        let n_int = (p - 1) * p.saturating_sub(2) / 2;
        let n_dofs = nv + ne * (p - 1) + nt * n_int;
        let nloc = basis.len();

        let mut element_dofs = Vec::with_capacity(nt * nloc);
        let mut dof_coords = vec![[0.0; 2]; n_dofs];
        for t in 0..nt {
            let tri = mesh.triangle(t);
            let edges = mesh.triangle_edges(t);
            let map = ElementMap::new(mesh.corners(t));
            let mut interior = 0;
            for (k, &a) in basis.nodes().iter().enumerate() {
                let dof = if let Some(i) = (0..3).find(|&i| a[i] == p) {
                    tri[i]
                } else if let Some(i) = (0..3).find(|&i| a[i] == 0) {
                    let (j, l) = ((i + 1) % 3, (i + 2) % 3);
                    let hi = if tri[j] > tri[l] { j } else { l };
                    nv + edges[i] * (p - 1) + (a[hi] - 1)
                } else {
                    interior += 1;
                    nv + ne * (p - 1) + t * n_int + interior - 1
                };
                dof_coords[dof] = map.to_physical(basis.node_point(k));
                element_dofs.push(dof);
            }
        }

        let mut constrained = vec![false; n_dofs];
        for e in 0..ne {
            if mesh.is_boundary_edge(e) {
                let [a, b] = mesh.edges()[e];
                constrained[a] = true;
                constrained[b] = true;
                for s in 0..p - 1 {
                    constrained[nv + e * (p - 1) + s] = true;
                }
            }
        }
        let mut free_index = vec![NOT_FREE; n_dofs];
        let mut free_dofs = Vec::new();
        for g in 0..n_dofs {
            if !constrained[g] {
                free_index[g] = free_dofs.len();
                free_dofs.push(g);
            }
        }

        let nfree = free_dofs.len();
        let mut rows = vec![Vec::new(); nfree];
        for t in 0..nt {
            let dofs = &element_dofs[t * nloc..(t + 1) * nloc];
            for &gi in dofs {
                let i = free_index[gi];
                if i == NOT_FREE {
                    continue;
                }
                rows[i].extend(dofs.iter().map(|&g| free_index[g]).filter(|&j| j != NOT_FREE));
            }
        }
        let pattern = Arc::new(Pattern::from_rows(nfree, rows));
        let mut scatter = Vec::with_capacity(nt * nloc * nloc);
        for t in 0..nt {
            let dofs = &element_dofs[t * nloc..(t + 1) * nloc];
            for &gi in dofs {
                for &gj in dofs {
                    let (i, j) = (free_index[gi], free_index[gj]);
                    scatter.push(if i == NOT_FREE || j == NOT_FREE {
                        NOT_FREE
                    } else {
                        pattern.find(i, j).expect("pattern covers element couplings")
                    });
                }
            }
        }

        let rule = QuadRule::triangle(2 * p + 2);
        let tab = basis.tabulate(&rule.points);
        Ok(FESpace {
            mesh,
            basis,
            n_dofs,
            dof_coords,
            free_index,
            free_dofs,
            element_dofs,
            pattern,
            scatter,
            rule,
            tab,
        })
    }

    pub fn mesh(&self) -> &Arc<Triangulation> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn basis(&self) -> &LagrangeBasis {
        &self.basis
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn n_local(&self) -> usize {
        self.basis.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    pub fn free_index(&self, global: usize) -> Option<usize> {
        let i = self.free_index[global];
        (i != NOT_FREE).then_some(i)
    }

    pub fn dof_coords(&self) -> &[Point] {
        &self.dof_coords
    }

    pub fn element_dofs(&self, t: usize) -> &[usize] {
        let n = self.n_local();
        &self.element_dofs[t * n..(t + 1) * n]
    }

    pub fn element_map(&self, t: usize) -> ElementMap {
        ElementMap::new(self.mesh.corners(t))
    }

    /// Sparsity pattern over free dofs.
    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    /// Value-array position of local pair `(i, j)` of element `t`, if both are free.
    #[inline]
    pub fn scatter(&self, t: usize, i: usize, j: usize) -> Option<usize> {
        let n = self.n_local();
        let k = self.scatter[(t * n + i) * n + j];
        (k != NOT_FREE).then_some(k)
    }

    /// Default element quadrature, exact to degree `2p + 2`.
    pub fn quad_rule(&self) -> &QuadRule {
        &self.rule
    }

    pub fn tabulation(&self) -> &Tabulation {
        &self.tab
    }

    /// Expand free-dof coefficients to all dofs (zeros on the boundary).
    pub fn extend(&self, v: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_dofs];
        for (i, &g) in self.free_dofs.iter().enumerate() {
            full[g] = v[i];
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> CoefVec {
        CoefVec(self.free_dofs.iter().map(|&g| full[g]).collect())
    }

    /// Nodal interpolant over all dofs, boundary included.
    pub fn interpolate_full(&self, g: impl Fn(Point) -> f64) -> Vec<f64> {
        self.dof_coords.iter().map(|&x| g(x)).collect()
    }

    /// Local coefficients of element `t` gathered from a full dof vector.
    pub fn gather(&self, full: &[f64], t: usize, out: &mut [f64]) {
        for (o, &g) in out.iter_mut().zip(self.element_dofs(t)) {
            *o = full[g];
        }
    }

    /// Values and physical gradients of `v` at the mapped points of `rule` on `t`.
    pub fn evaluate(&self, v: &CoefVec, t: usize, rule: &QuadRule) -> (Vec<f64>, Vec<[f64; 2]>) {
        self.evaluate_full(&self.extend(v), t, rule)
    }

    pub fn evaluate_full(&self, full: &[f64], t: usize, rule: &QuadRule) -> (Vec<f64>, Vec<[f64; 2]>) {
        let tab = self.basis.tabulate(&rule.points);
        let map = self.element_map(t);
        let mut local = vec![0.0; self.n_local()];
        self.gather(full, t, &mut local);
        let mut vals = Vec::with_capacity(rule.len());
        let mut grads = Vec::with_capacity(rule.len());
        for q in 0..rule.len() {
            let mut u = 0.0;
            let mut g = [0.0; 2];
            for (k, &c) in local.iter().enumerate() {
                u += c * tab.value(q, k);
                let gk = tab.grad(q, k);
                g[0] += c * gk[0];
                g[1] += c * gk[1];
            }
            vals.push(u);
            grads.push(map.grad(g));
        }
        (vals, grads)
    }

    /// Value of `full` at physical point `x` known to lie in element `t`.
    pub fn value_at(&self, full: &[f64], t: usize, x: Point) -> f64 {
        let l = self.mesh.barycentric(t, x);
        let mut phi = vec![0.0; self.n_local()];
        self.basis.values_at([l[1], l[2]], &mut phi);
        self.element_dofs(t).iter().zip(&phi).map(|(&g, p)| full[g] * p).sum()
    }
}

fn same_mesh(a: &Triangulation, b: &Triangulation) -> bool {
    a.triangles() == b.triangles() && a.vertices() == b.vertices()
}

/// Matrix mapping coarse free coefficients to fine free coefficients of the
/// same function; `fine` must be a refinement of `coarse` created by one
/// call to [`Triangulation::refine`].
pub fn prolongation_matrix(coarse: &FESpace, fine: &FESpace) -> Result<SparseMatrix> {
    if fine.degree() < coarse.degree() {
        return Err(Error::NotNested(format!(
            "fine degree {} below coarse degree {}",
            fine.degree(),
            coarse.degree()
        )));
    }
    let (cm, fm) = (coarse.mesh(), fine.mesh());
    if Arc::ptr_eq(cm, fm) || same_mesh(cm, fm) {
        if fine.degree() == coarse.degree() {
            return Ok(SparseMatrix::identity(coarse.n_free()));
        }
    }
    let parent_of = |t: usize| -> Result<usize> {
        if Arc::ptr_eq(cm, fm) || same_mesh(cm, fm) {
            return Ok(t);
        }
        match fm.parent(t) {
            Some(p) if p < cm.n_triangles() => Ok(p),
            Some(p) => Err(Error::NotNested(format!("parent index {p} out of range"))),
            None => Err(Error::NotNested("fine mesh carries no parent links".into())),
        }
    };
    if fm.n_vertices() < cm.n_vertices() || fm.vertices()[..cm.n_vertices()] != *cm.vertices() {
        return Err(Error::NotNested("coarse vertices are not a prefix of the fine vertices".into()));
    }

    let nloc = coarse.n_local();
    let mut phi = vec![0.0; nloc];
    let mut seen = vec![false; fine.n_free()];
    let mut triplets = Vec::new();
    for t in 0..fm.n_triangles() {
        let parent = parent_of(t)?;
        for x in fm.corners(t) {
            let l = cm.barycentric(parent, x);
            if l.iter().any(|&c| c < -1e-10) {
                return Err(Error::NotNested(format!("fine triangle {t} not inside coarse triangle {parent}")));
            }
        }
        for &g in fine.element_dofs(t) {
            let Some(i) = fine.free_index(g) else { continue };
            if seen[i] {
                continue;
            }
            seen[i] = true;
            let l = cm.barycentric(parent, fine.dof_coords()[g]);
            coarse.basis().values_at([l[1], l[2]], &mut phi);
            for (k, &cg) in coarse.element_dofs(parent).iter().enumerate() {
                if let Some(j) = coarse.free_index(cg) {
                    if phi[k].abs() > 1e-14 {
                        triplets.push((i, j, phi[k]));
                    }
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(fine.n_free(), coarse.n_free(), &triplets, false))
}

/// Coefficients on `fine` of the coarse function `v` (nested iteration).
pub fn prolongate(coarse: &FESpace, fine: &FESpace, v: &CoefVec) -> Result<CoefVec> {
    if v.len() != coarse.n_free() {
        return Err(Error::DimensionMismatch { expected: coarse.n_free(), got: v.len() });
    }
    let p = prolongation_matrix(coarse, fine)?;
    Ok(CoefVec(p.mul_vec(v)))
}
