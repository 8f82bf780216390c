//! Direct solvers on a reverse Cuthill-McKee ordered envelope: Cholesky for
//! matrices flagged symmetric, Doolittle LU without pivoting otherwise.
//!
//! LU without pivoting is safe for the systems assembled here because their
//! symmetric part is positive definite.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

const PIVOT_TOL: f64 = 1e-14;
const REFINE_TOL: f64 = 1e-13;
const MAX_REFINE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Cholesky,
    Lu,
}

/// Reusable factorization of a square [`SparseMatrix`].
#[derive(Debug, Clone)]
pub struct Factorization {
    kind: Kind,
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// First column of the envelope in each (permuted) row.
    first: Vec<usize>,
    /// Offsets into `lower` / `upper` per row / column.
    offset: Vec<usize>,
    /// Strict lower envelope of `L`, row-wise.
    lower: Vec<f64>,
    /// Strict upper envelope of `U`, column-wise (unused for Cholesky).
    upper: Vec<f64>,
    diag: Vec<f64>,
    matrix: SparseMatrix,
}

/// Deterministic reverse Cuthill-McKee ordering of the symmetrized pattern.
pub fn rcm_ordering(m: &SparseMatrix) -> Vec<usize> {
    let n = m.nrows();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for (j, _) in m.row(i) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(&adj, &degree, seed);
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Breadth-first level structure rooted at `root`: (eccentricity, last level).
fn level_structure(adj: &[Vec<usize>], root: usize) -> (usize, Vec<usize>) {
    let mut depth = vec![usize::MAX; adj.len()];
    depth[root] = 0;
    let mut frontier = vec![root];
    let mut ecc = 0;
    loop {
        let mut next = Vec::new();
        for &v in &frontier {
            for &w in &adj[v] {
                if depth[w] == usize::MAX {
                    depth[w] = ecc + 1;
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            return (ecc, frontier);
        }
        ecc += 1;
        frontier = next;
    }
}

/// George-Liu search for a node of (nearly) maximal eccentricity.
fn pseudo_peripheral(adj: &[Vec<usize>], degree: &[usize], seed: usize) -> usize {
    let mut root = seed;
    let (mut ecc, mut last) = level_structure(adj, root);
    loop {
        let candidate = *last.iter().min_by_key(|&&v| (degree[v], v)).expect("nonempty level");
        let (e, l) = level_structure(adj, candidate);
        if e <= ecc {
            return root;
        }
        root = candidate;
        ecc = e;
        last = l;
    }
}

impl Factorization {
    /// Cholesky if the matrix carries the symmetry flag, LU otherwise.
    pub fn factor(m: &SparseMatrix) -> Result<Self> {
        if m.is_symmetric() {
            Self::cholesky(m)
        } else {
            Self::lu(m)
        }
    }

    pub fn cholesky(m: &SparseMatrix) -> Result<Self> {
        if !m.is_symmetric() {
            return Err(Error::NotSymmetric);
        }
        Self::build(m, Kind::Cholesky)
    }

    pub fn lu(m: &SparseMatrix) -> Result<Self> {
        Self::build(m, Kind::Lu)
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored envelope entries (fill measure).
    pub fn envelope_size(&self) -> usize {
        self.lower.len()
    }

    fn build(m: &SparseMatrix, kind: Kind) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        let n = m.nrows();
        let perm = rcm_ordering(m);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        let mut first: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for (j, _) in m.row(i) {
                let (a, b) = (inv[i], inv[j]);
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                first[hi] = first[hi].min(lo);
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + (i - first[i]));
        }
        let size = offset[n];
        let mut lower = vec![0.0; size];
        let mut upper = if kind == Kind::Lu { vec![0.0; size] } else { Vec::new() };
        let mut diag = vec![0.0; n];
        for i in 0..n {
            for (j, v) in m.row(i) {
                let (a, b) = (inv[i], inv[j]);
                if a == b {
                    diag[a] += v;
                } else if a > b {
                    lower[offset[a] + b - first[a]] += v;
                } else if kind == Kind::Lu {
                    upper[offset[b] + a - first[b]] += v;
                }
            }
        }
        let max_diag = diag.iter().fold(0.0_f64, |acc, d| acc.max(d.abs()));
        let tol = PIVOT_TOL * max_diag.max(f64::MIN_POSITIVE);

        let mut f = Factorization { kind, n, perm, first, offset, lower, upper, diag, matrix: m.clone() };
        match kind {
            Kind::Cholesky => f.factor_cholesky(tol)?,
            Kind::Lu => f.factor_lu(tol)?,
        }
        Ok(f)
    }

    fn factor_cholesky(&mut self, tol: f64) -> Result<()> {
        let (first, offset) = (&self.first, &self.offset);
        for i in 0..self.n {
            let fi = first[i];
            let (done, rest) = self.lower.split_at_mut(offset[i]);
            let row = &mut rest[..i - fi];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let s = row[j - fi] - dot(&row[k0 - fi..j - fi], &done[offset[j] + k0 - fj..offset[j] + j - fj]);
                row[j - fi] = s / self.diag[j];
            }
            let d = self.diag[i] - dot(row, row);
            if !(d > tol) {
                return Err(Error::Singular { dof: self.perm[i], pivot: d });
            }
            self.diag[i] = d.sqrt();
        }
        Ok(())
    }

    fn factor_lu(&mut self, tol: f64) -> Result<()> {
        let (first, offset) = (&self.first, &self.offset);
        for i in 0..self.n {
            let fi = first[i];
            let (l_done, l_rest) = self.lower.split_at_mut(offset[i]);
            let (u_done, u_rest) = self.upper.split_at_mut(offset[i]);
            let lrow = &mut l_rest[..i - fi];
            let ucol = &mut u_rest[..i - fi];
            // Column i of U above the diagonal.
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                ucol[j - fi] -= dot(&l_done[offset[j] + k0 - fj..offset[j] + j - fj], &ucol[k0 - fi..j - fi]);
            }
            // Row i of L left of the diagonal.
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let s = lrow[j - fi] - dot(&lrow[k0 - fi..j - fi], &u_done[offset[j] + k0 - fj..offset[j] + j - fj]);
                lrow[j - fi] = s / self.diag[j];
            }
            let d = self.diag[i] - dot(lrow, ucol);
            if !(d.abs() > tol) {
                return Err(Error::Singular { dof: self.perm[i], pivot: d });
            }
            self.diag[i] = d;
        }
        Ok(())
    }

    /// One pass of the triangular solves in the permuted ordering.
    fn solve_permuted(&self, y: &mut [f64]) {
        let (first, offset) = (&self.first, &self.offset);
        let n = self.n;
        // Forward: L z = y (unit diagonal for LU).
        for i in 0..n {
            let fi = first[i];
            let mut s = y[i];
            for (k, l) in (fi..i).zip(&self.lower[offset[i]..offset[i + 1]]) {
                s -= l * y[k];
            }
            y[i] = if self.kind == Kind::Cholesky { s / self.diag[i] } else { s };
        }
        // Backward, column-oriented: U x = z with U = L^T for Cholesky.
        let upper = if self.kind == Kind::Cholesky { &self.lower } else { &self.upper };
        for i in (0..n).rev() {
            y[i] /= self.diag[i];
            let xi = y[i];
            let fi = first[i];
            for (k, u) in (fi..i).zip(&upper[offset[i]..offset[i + 1]]) {
                y[k] -= u * xi;
            }
        }
    }

    fn apply_inverse(&self, b: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        self.solve_permuted(&mut y);
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Solve `M x = b`, with a few steps of iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: b.len() });
        }
        let bnorm = norm(b);
        let mut x = self.apply_inverse(b);
        if bnorm == 0.0 {
            return Ok(x);
        }
        for _ in 0..MAX_REFINE {
            let mx = self.matrix.mul_vec(&x);
            let r: Vec<f64> = b.iter().zip(&mx).map(|(bi, mi)| bi - mi).collect();
            if norm(&r) <= REFINE_TOL * bnorm {
                break;
            }
            let dx = self.apply_inverse(&r);
            x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
        }
        Ok(x)
    }
}

/// Dot product with four independent accumulators (fixed summation order).
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Factor and solve once.
pub fn solve(m: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    Factorization::factor(m)?.solve(b)
}
