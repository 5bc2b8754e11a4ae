#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Mat = DMatrix<f64>;

pub fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Largest singular value from the symmetric eigenproblem of `MᵀM`.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let g = m.transpose() * m;
    g.symmetric_eigenvalues().max().max(0.0).sqrt()
}

pub fn condition(m: &Mat) -> f64 {
    let s = m.singular_values();
    s.max() / s.min()
}

/// Haar-ish orthogonal matrix from QR with sign fix.
pub fn orthogonal(rng: &mut ChaCha8Rng, m: usize) -> Mat {
    let qr = gaussian(rng, m, m).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Gaussian matrix rescaled to operator norm `norm`.
pub fn with_norm(rng: &mut ChaCha8Rng, m: usize, norm: f64) -> Mat {
    let g = gaussian(rng, m, m);
    let s = spectral_norm(&g);
    g * (norm / s)
}

/// Well-conditioned invertible matrix.
pub fn invertible(rng: &mut ChaCha8Rng, m: usize) -> Mat {
    loop {
        let g = gaussian(rng, m, m);
        if condition(&g) < 1e3 {
            return g;
        }
    }
}

/// `W1 = G(I+V)/2`, `W2 = G(I-V)/2`, so `(W1 + W2) V = W1 - W2`.
pub fn spec_from_v(g: &Mat, v: &Mat) -> (Mat, Mat) {
    let m = v.nrows();
    let eye = Mat::identity(m, m);
    (g * (&eye + v) * 0.5, g * (&eye - v) * 0.5)
}

/// `(W1 + W2)^{-1} (W1 - W2)` through an explicit inverse.
pub fn v_by_inverse(w1: &Mat, w2: &Mat) -> Option<Mat> {
    (w1 + w2).try_inverse().map(|s| s * (w1 - w2))
}

/// Minimum eigenvalue of the symmetric part.
pub fn min_sym(m: &Mat) -> f64 {
    ((m + m.transpose()) * 0.5).symmetric_eigenvalues().min()
}

/// `e^{At}` by Taylor series with scaling and squaring.
pub fn taylor_expm(a: &Mat, t: f64) -> Mat {
    let n = a.nrows();
    let at = a * t;
    let norm = at.abs().row_sum().max().max(at.abs().column_sum().max());
    let mut s = 0u32;
    while norm / 2f64.powi(s as i32) > 0.25 {
        s += 1;
    }
    let b = at / 2f64.powi(s as i32);
    let mut term = Mat::identity(n, n);
    let mut sum = Mat::identity(n, n);
    for k in 1..30 {
        term = &term * &b / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Cosines of principal angles are the singular values of `QaᵀQb`; this
/// returns the sine of the largest angle via the projector difference.
pub fn projector_gap(a: &Mat, b: &Mat) -> f64 {
    let proj = |m: &Mat| {
        let q = m.clone().qr().q();
        let q = q.columns(0, m.ncols()).into_owned();
        &q * q.transpose()
    };
    spectral_norm(&(proj(a) - proj(b)))
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Gaussian matrix with operator norm drawn uniformly from `[lo, hi)`.
pub fn with_norm_in(rng: &mut ChaCha8Rng, m: usize, lo: f64, hi: f64) -> Mat {
    let norm = uniform(rng, lo, hi);
    with_norm(rng, m, norm)
}
