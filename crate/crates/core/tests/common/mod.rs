#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
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
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

/// Physicists' Gauss–Hermite rule (weight e^{-x²}) via Golub–Welsch.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], PI.sqrt() * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

pub struct Quad {
    xs: Vec<f64>,
    ws: Vec<f64>,
}

impl Quad {
    pub fn new() -> Self {
        let (xs, ws) = gauss_legendre(12);
        Quad { xs, ws }
    }

    fn panel<F: FnMut(f64) -> f64>(&self, f: &mut F, a: f64, b: f64) -> f64 {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        self.xs.iter().zip(&self.ws).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
    }

    fn refine<F: FnMut(f64) -> f64>(&self, f: &mut F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = self.panel(f, a, m);
        let right = self.panel(f, m, b);
        let diff = (left + right - whole).abs();
        if depth == 0 || diff <= tol || diff <= 1e-14 * (left.abs() + right.abs()) {
            return left + right;
        }
        self.refine(f, a, m, left, 0.5 * tol, depth - 1) + self.refine(f, m, b, right, 0.5 * tol, depth - 1)
    }

    /// Adaptive bisection with absolute tolerance `tol` on [a, b], starting
    /// from `pieces` equal panels.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64, tol: f64, pieces: usize) -> f64 {
        let h = (b - a) / pieces as f64;
        (0..pieces)
            .map(|i| {
                let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
                let whole = self.panel(&mut f, lo, hi);
                self.refine(&mut f, lo, hi, whole, tol / pieces as f64, 24)
            })
            .sum()
    }
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Density of a 2-D Gaussian with covariance `[[a, b], [b, c]]`.
pub fn normal_pdf_2d(x: [f64; 2], mean: [f64; 2], cov: [f64; 3]) -> f64 {
    let [a, b, c] = cov;
    let det = a * c - b * b;
    let (dx, dy) = (x[0] - mean[0], x[1] - mean[1]);
    let q = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
    (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
}
