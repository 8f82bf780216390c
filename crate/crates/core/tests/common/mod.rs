#![allow(dead_code)]

use std::sync::Arc;

use nailfem::fespace::{CoefVec, FESpace};
use nailfem::mesh::{Domain, Triangulation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Initial mesh of `domain` after `levels` uniform refinements.
pub fn refined(domain: &Domain, levels: usize) -> Arc<Triangulation> {
    let mut m = Triangulation::initial(domain).unwrap();
    for _ in 0..levels {
        m = m.uniform_refine().unwrap();
    }
    Arc::new(m)
}

pub fn space(domain: &Domain, levels: usize, p: usize) -> FESpace {
    FESpace::new(refined(domain, levels), p).unwrap()
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Vec<f64> {
    (0..n).map(|_| amp * rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_coef(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> CoefVec {
    CoefVec(random_vec(rng, n, amp))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Criss-cross square `(0,1)^2`: four triangles around the center vertex 4,
/// refinement edges on the boundary.
pub fn criss_cross() -> Triangulation {
    let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
    Triangulation::new(v, &[([0, 1, 4], 2), ([1, 2, 4], 2), ([2, 3, 4], 2), ([3, 0, 4], 2)]).unwrap()
}
