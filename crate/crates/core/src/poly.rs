//! Bivariate polynomials used for loads and flux loads.

use serde::{Deserialize, Serialize};

use crate::mesh::Point;

/// `sum_k c_k x^{i_k} y^{j_k}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Poly2 {
    terms: Vec<(u32, u32, f64)>,
}

impl Poly2 {
    pub fn zero() -> Self {
        Poly2::default()
    }

    pub fn constant(c: f64) -> Self {
        Poly2 { terms: vec![(0, 0, c)] }
    }

    pub fn from_terms(terms: Vec<(u32, u32, f64)>) -> Self {
        Poly2 { terms: terms.into_iter().filter(|t| t.2 != 0.0).collect() }
    }

    /// Coefficients in graded order `1, x, y, x^2, xy, y^2, x^3, ...`.
    pub fn from_graded(coeffs: &[f64]) -> Self {
        let mut terms = Vec::new();
        let mut k = 0;
        'outer: for d in 0u32.. {
            for j in 0..=d {
                let Some(&c) = coeffs.get(k) else { break 'outer };
                terms.push((d - j, j, c));
                k += 1;
            }
        }
        Poly2::from_terms(terms)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.0 + t.1).max().unwrap_or(0)
    }

    pub fn eval(&self, x: Point) -> f64 {
        self.terms.iter().map(|&(i, j, c)| c * x[0].powi(i as i32) * x[1].powi(j as i32)).sum()
    }

    pub fn grad(&self, x: Point) -> [f64; 2] {
        let mut g = [0.0; 2];
        for &(i, j, c) in &self.terms {
            if i > 0 {
                g[0] += c * i as f64 * x[0].powi(i as i32 - 1) * x[1].powi(j as i32);
            }
            if j > 0 {
                g[1] += c * j as f64 * x[0].powi(i as i32) * x[1].powi(j as i32 - 1);
            }
        }
        g
    }
}
