//! Reference computations that share no code with the library.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..300 {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    0.5 * (a + b)
}

/// Scalar prox by golden-section search on a bracket around `x`.
pub fn scalar_prox(psi: impl Fn(f64) -> f64, x: f64, lambda: f64) -> f64 {
    let r = 10.0 * (1.0 + x.abs());
    golden(|y| psi(y) + (y - x) * (y - x) / (2.0 * lambda), x - r, x + r)
}

/// `(lambda Omega^{-1} + I)^{-1} x` by LU on the dense system.
pub fn gaussian_prox(omega: &DMatrix<f64>, x: &[f64], lambda: f64) -> Vec<f64> {
    let n = x.len();
    let inv = omega.clone().try_inverse().unwrap();
    let a = inv * lambda + DMatrix::identity(n, n);
    a.lu().solve(&DVector::from_column_slice(x)).unwrap().iter().copied().collect()
}

/// `x' (Omega + lambda I)^{-1} x / 2`.
pub fn gaussian_envelope(omega: &DMatrix<f64>, x: &[f64], lambda: f64) -> f64 {
    let n = x.len();
    let a = omega + DMatrix::identity(n, n) * lambda;
    let v = DVector::from_column_slice(x);
    let sol = a.lu().solve(&v).unwrap();
    0.5 * v.dot(&sol)
}

/// Singular value soft-thresholding through the eigendecomposition of `B'B`.
pub fn svt_via_eigen(b: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let eig = (b.transpose() * b).symmetric_eigen();
    let mut out = DMatrix::zeros(b.nrows(), b.ncols());
    for k in 0..b.ncols() {
        let s = eig.eigenvalues[k].max(0.0).sqrt();
        if s <= t {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        let u = b * v / s;
        out += (u * v.transpose()) * (s - t);
    }
    out
}

pub fn diff_rows(m: usize, order: usize) -> DMatrix<f64> {
    let mut d = DMatrix::<f64>::identity(m, m);
    for k in 0..order {
        let rows = m - k;
        let mut first = DMatrix::zeros(rows - 1, rows);
        for i in 0..rows - 1 {
            first[(i, i)] = -1.0;
            first[(i, i + 1)] = 1.0;
        }
        d = first * d;
    }
    d
}

/// Accelerated projected gradient on the box-constrained dual of
/// `min |eta - z|^2 / 2 + tau |D eta|_1`, where `D` has order `k + 1`.
pub fn generalized_lasso_oracle(z: &[f64], tau: f64, k: usize, iterations: usize) -> Vec<f64> {
    let m = z.len();
    let d = diff_rows(m, k + 1);
    let zv = DVector::from_column_slice(z);
    let ddt = &d * d.transpose();
    let dz = &d * &zv;
    let step = 1.0 / ddt.clone().symmetric_eigen().eigenvalues.max();
    let clip = |u: DVector<f64>| u.map(|v| v.clamp(-tau, tau));
    let mut u = DVector::zeros(d.nrows());
    let mut y = u.clone();
    let mut t = 1.0f64;
    for _ in 0..iterations {
        let next = clip(&y - (&ddt * &y - &dz) * step);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &next + (&next - &u) * ((t - 1.0) / t_next);
        u = next;
        t = t_next;
    }
    (zv - d.transpose() * u).iter().copied().collect()
}

pub fn generalized_lasso_objective(eta: &[f64], z: &[f64], tau: f64, k: usize) -> f64 {
    let d = diff_rows(z.len(), k + 1);
    let de = d * DVector::from_column_slice(eta);
    let fit: f64 = eta.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    fit / 2.0 + tau * de.iter().map(|v| v.abs()).sum::<f64>()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Variance of the sample mean by non-overlapping batch means, batch size
/// `floor(sqrt(n))`.
pub fn batch_mean_variance(x: &[f64]) -> f64 {
    let b = (x.len() as f64).sqrt() as usize;
    let a = x.len() / b;
    let means: Vec<f64> = (0..a).map(|k| mean(&x[k * b..(k + 1) * b])).collect();
    b as f64 * variance(&means) / x.len() as f64
}

/// Number of adjacent pairs where `later > earlier` (for a sequence
/// expected to be nonincreasing).
pub fn increases(x: &[f64]) -> usize {
    x.windows(2).filter(|w| w[1] > w[0]).count()
}
