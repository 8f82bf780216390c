//! Gauss rules on the unit interval and collapsed (Duffy) rules on the
//! reference triangle `{(x, y) : x, y >= 0, x + y <= 1}`.

/// Gauss-Legendre nodes and weights on `[0, 1]`, exact up to degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-like initial guess for the i-th root of P_n on [-1, 1].
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Quadrature on the reference triangle with weights normalized to sum 1,
/// so that `integral over T = area(T) * sum_q w_q f(x_q)`.
#[derive(Debug, Clone)]
pub struct QuadRule {
    /// Reference coordinates `(x, y)`; barycentric `(1 - x - y, x, y)`.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadRule {
    /// Collapsed Gauss rule exact for polynomials of total degree `degree`.
    pub fn triangle(degree: usize) -> QuadRule {
        // x^a y^b maps to a polynomial of degree a + b + 1 in the collapsed
        // direction, so n points with 2n - 1 >= degree + 1 suffice.
        let n = (degree + 2).div_ceil(2).max(1);
        let gl = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for &(s, ws) in &gl {
            for &(t, wt) in &gl {
                points.push([s, t * (1.0 - s)]);
                weights.push(2.0 * ws * wt * (1.0 - s));
            }
        }
        QuadRule { points, weights, degree }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn barycentric(&self, q: usize) -> [f64; 3] {
        let [x, y] = self.points[q];
        [1.0 - x - y, x, y]
    }
}

/// Gauss rule on `[0, 1]` exact for polynomials of degree `degree`.
pub fn edge_rule(degree: usize) -> Vec<(f64, f64)> {
    gauss_legendre((degree + 2).div_ceil(2).max(1))
}
