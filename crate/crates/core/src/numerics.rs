//! Dense-matrix kernels and the brute-force semigroup oracle.
//!
//! Everything in the crate is small enough (a few thousand unknowns at
//! most) to be handled with dense factorizations. The matrix exponential
//! here is the independent check against which the algebraic generation
//! criteria are validated.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Real dense matrix used for every finite-dimensional operator.
pub type DenseMatrix = DMatrix<f64>;

/// Absolute floor applied under every relative tolerance.
pub const ABS_FLOOR: f64 = 1e-14;

/// Default relative rank tolerance.
pub const RANK_TOL: f64 = 1e-10;

/// Acceptance margin of the contraction certificate.
pub const CONTRACTION_MARGIN: f64 = 1e-9;

pub(crate) fn threshold(tol: f64, scale: f64) -> f64 {
    (tol * scale).max(ABS_FLOOR)
}

pub fn check_finite(m: &DenseMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what })
    }
}

fn check_square(m: &DenseMatrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

/// Singular values in descending order. Empty matrices have none.
pub fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Largest singular value.
pub fn operator_norm(m: &DenseMatrix) -> Result<f64> {
    check_finite(m, "matrix")?;
    Ok(singular_values(m).first().copied().unwrap_or(0.0))
}

/// Numerical rank with threshold `max(tol * sigma_max, ABS_FLOOR)`.
pub fn rank(m: &DenseMatrix, tol: f64) -> usize {
    let s = singular_values(m);
    let Some(&top) = s.first() else { return 0 };
    let cut = threshold(tol, top);
    s.iter().filter(|&&x| x > cut).count()
}

/// Rank of `m` measured against an externally supplied scale.
pub(crate) fn rank_with_scale(m: &DenseMatrix, tol: f64, scale: f64) -> usize {
    let cut = threshold(tol, scale);
    singular_values(m).iter().filter(|&&x| x > cut).count()
}

/// Full SVD (square `V`) of `m`, padding with zero rows when `m` is wide.
fn full_right_svd(m: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let (r, c) = m.shape();
    let work = if r < c {
        let mut padded = DenseMatrix::zeros(c, c);
        padded.rows_mut(0, r).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = SVD::new(work, false, true);
    let v_t = svd.v_t.expect("requested V^T");
    // columns of V, with their singular values
    let mut pairs: Vec<(f64, DVector<f64>)> = svd
        .singular_values
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, v_t.row(i).transpose()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let sv: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let cols: Vec<DVector<f64>> = pairs.into_iter().map(|p| p.1).collect();
    (sv, DenseMatrix::from_columns(&cols))
}

/// Orthonormal basis (as columns) of the kernel of `m`.
pub fn nullspace(m: &DenseMatrix, tol: f64) -> DenseMatrix {
    let c = m.ncols();
    if c == 0 {
        return DenseMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DenseMatrix::identity(c, c);
    }
    let (sv, v) = full_right_svd(m);
    let top = sv.first().copied().unwrap_or(0.0);
    let cut = threshold(tol, top);
    let r = sv.iter().filter(|&&s| s > cut).count();
    v.columns(r, c - r).into_owned()
}

/// Orthonormal basis of the column span of `m`.
pub fn orthonormal_range(m: &DenseMatrix, tol: f64) -> DenseMatrix {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DenseMatrix::zeros(r, 0);
    }
    let svd = SVD::new(m.clone(), true, false);
    let u = svd.u.expect("requested U");
    let top = svd.singular_values.max();
    let cut = threshold(tol, top);
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > cut)
        .map(|(i, _)| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DenseMatrix::zeros(r, 0)
    } else {
        DenseMatrix::from_columns(&cols)
    }
}

/// Sine of the largest principal angle between two column spans.
///
/// Returns 1 when the spans have different dimensions.
pub fn subspace_distance(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let qa = orthonormal_range(a, RANK_TOL);
    let qb = orthonormal_range(b, RANK_TOL);
    if qa.ncols() != qb.ncols() {
        return 1.0;
    }
    if qa.ncols() == 0 {
        return 0.0;
    }
    let resid = |q1: &DenseMatrix, q2: &DenseMatrix| {
        let proj = q2 - q1 * (q1.transpose() * q2);
        singular_values(&proj).first().copied().unwrap_or(0.0)
    };
    resid(&qa, &qb).max(resid(&qb, &qa)).min(1.0)
}

/// True iff the symmetric matrix `m` is positive semidefinite up to
/// `tol * (1 + ||m||)`.
pub fn is_psd(m: &DenseMatrix, tol: f64) -> Result<bool> {
    check_square(m)?;
    check_finite(m, "matrix")?;
    if m.nrows() == 0 {
        return Ok(true);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let norm = eig.eigenvalues.amax();
    let allowed = threshold(tol, 1.0 + norm);
    let asymmetry = operator_norm(&(m - m.transpose()))?;
    if asymmetry > allowed {
        return Err(Error::Asymmetric { asymmetry, allowed });
    }
    Ok(eig.eigenvalues.min() >= -tol * (1.0 + norm))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &DenseMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new((m + m.transpose()) * 0.5)
        .eigenvalues
        .min()
}

/// Padé(13,13) coefficients of the exponential.
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Scaling threshold for the degree-13 approximant (1-norm).
const THETA13: f64 = 5.371_920_351_148_152;

fn one_norm(m: &DenseMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^{A t}` by scaling and squaring around a Padé(13,13) core.
pub fn matrix_exponential(a: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    check_square(a)?;
    check_finite(a, "generator")?;
    if !t.is_finite() || t < 0.0 {
        return Err(Error::DimensionMismatch(format!(
            "exponential time must be finite and nonnegative, got {t}"
        )));
    }
    expm_signed(a, t)
}

/// Same as [`matrix_exponential`] but accepts negative times.
pub(crate) fn expm_signed(a: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    let n = a.nrows();
    let eye = DenseMatrix::identity(n, n);
    if n == 0 || t == 0.0 {
        return Ok(eye);
    }
    let at = a * t;
    let norm = one_norm(&at);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let x = at * 2f64.powi(-squarings);

    let b = &PADE13;
    let x2 = &x * &x;
    let x4 = &x2 * &x2;
    let x6 = &x4 * &x2;
    let u_inner = &x6 * (&x6 * b[13] + &x4 * b[11] + &x2 * b[9])
        + &x6 * b[7]
        + &x4 * b[5]
        + &x2 * b[3]
        + &eye * b[1];
    let u = &x * u_inner;
    let v = &x6 * (&x6 * b[12] + &x4 * b[10] + &x2 * b[8])
        + &x6 * b[6]
        + &x4 * b[4]
        + &x2 * b[2]
        + &eye * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or(Error::NonFinite { what: "Padé denominator" })?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// `n` logarithmically spaced points in `[lo, hi]`.
pub fn log_spaced(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// Sample times used when the caller does not supply any.
pub fn default_certificate_times() -> Vec<f64> {
    log_spaced(20, 1e-3, 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub max_norm: f64,
    pub pass: bool,
    /// `(t, ||e^{At}||_weight)` for every sampled time.
    pub samples: Vec<(f64, f64)>,
}

/// Weighted operator norm `||R M R^{-1}||` with `weight = R^T R`.
pub struct WeightedNorm {
    r: DenseMatrix,
    r_inv: DenseMatrix,
}

impl WeightedNorm {
    pub fn new(weight: &DenseMatrix) -> Result<Self> {
        check_square(weight)?;
        check_finite(weight, "weight")?;
        let asym = operator_norm(&(weight - weight.transpose()))?;
        if asym > threshold(1e-12, 1.0 + operator_norm(weight)?) {
            return Err(Error::IndefiniteWeight);
        }
        let chol = Cholesky::new(weight.clone()).ok_or(Error::IndefiniteWeight)?;
        let r = chol.l().transpose();
        let n = r.nrows();
        let r_inv = r
            .clone()
            .solve_upper_triangular(&DenseMatrix::identity(n, n))
            .ok_or(Error::IndefiniteWeight)?;
        Ok(WeightedNorm { r, r_inv })
    }

    pub fn norm(&self, m: &DenseMatrix) -> Result<f64> {
        operator_norm(&(&self.r * m * &self.r_inv))
    }
}

/// Samples `||e^{At}||` in the norm induced by `weight` and checks it never
/// exceeds `1 + CONTRACTION_MARGIN`.
pub fn contraction_certificate(
    a: &DenseMatrix,
    weight: &DenseMatrix,
    times: &[f64],
) -> Result<ContractionReport> {
    check_square(a)?;
    if weight.shape() != a.shape() {
        return Err(Error::DimensionMismatch(format!(
            "weight is {:?}, generator is {:?}",
            weight.shape(),
            a.shape()
        )));
    }
    let wn = WeightedNorm::new(weight)?;
    let mut samples = Vec::with_capacity(times.len());
    for &t in times {
        let e = matrix_exponential(a, t)?;
        samples.push((t, wn.norm(&e)?));
    }
    let max_norm = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    Ok(ContractionReport {
        max_norm,
        pass: max_norm <= 1.0 + CONTRACTION_MARGIN,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{E, FRAC_PI_2};

    #[test]
    fn exponential_at_zero_is_identity() {
        let a = DenseMatrix::from_row_slice(2, 2, &[3.0, -1.0, 7.0, 0.5]);
        assert_eq!(matrix_exponential(&a, 0.0).unwrap(), DenseMatrix::identity(2, 2));
    }

    #[test]
    fn exponential_scalar_decay() {
        let a = DenseMatrix::from_element(1, 1, -1.0);
        let e = matrix_exponential(&a, 1.0).unwrap();
        assert_relative_eq!(e[(0, 0)], 1.0 / E, max_relative = 1e-14);
    }

    #[test]
    fn exponential_rotation_quarter_turn() {
        let a = DenseMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let e = matrix_exponential(&a, FRAC_PI_2).unwrap();
        let expect = DenseMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((e - expect).amax() < 1e-14);
    }

    #[test]
    fn exponential_matches_eigendecomposition_for_symmetric() {
        // independent route: e^{S} = Q diag(e^λ) Q^T
        let s = DenseMatrix::from_row_slice(
            3,
            3,
            &[2.0, -1.0, 0.5, -1.0, 3.0, 1.5, 0.5, 1.5, -4.0],
        );
        let eig = SymmetricEigen::new(s.clone());
        let d = DenseMatrix::from_diagonal(&eig.eigenvalues.map(f64::exp));
        let reference = &eig.eigenvectors * d * eig.eigenvectors.transpose();
        let e = matrix_exponential(&s, 1.0).unwrap();
        assert!((&e - &reference).amax() <= 1e-12 * reference.amax());
    }

    #[test]
    fn exponential_rejects_bad_input() {
        let rect = DenseMatrix::zeros(2, 3);
        assert!(matches!(
            matrix_exponential(&rect, 1.0),
            Err(Error::NotSquare { .. })
        ));
        let nan = DenseMatrix::from_element(1, 1, f64::NAN);
        assert!(matches!(
            matrix_exponential(&nan, 1.0),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn norms_of_simple_matrices() {
        assert_relative_eq!(operator_norm(&DenseMatrix::identity(3, 3)).unwrap(), 1.0);
        let d = DenseMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        assert_relative_eq!(operator_norm(&d).unwrap(), 2.0, max_relative = 1e-15);
        assert_eq!(operator_norm(&DenseMatrix::zeros(3, 2)).unwrap(), 0.0);
        let nan = DenseMatrix::from_element(1, 1, f64::INFINITY);
        assert!(operator_norm(&nan).is_err());
    }

    #[test]
    fn psd_examples() {
        assert!(is_psd(&DenseMatrix::identity(3, 3), 1e-12).unwrap());
        let d = DenseMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(!is_psd(&d, 1e-12).unwrap());
        assert!(is_psd(&DenseMatrix::zeros(2, 2), 1e-12).unwrap());
        let asym = DenseMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(is_psd(&asym, 1e-12), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn certificate_examples() {
        let times = [0.0, 1.0, 10.0];
        let eye = DenseMatrix::identity(2, 2);
        let r = contraction_certificate(&(-&eye), &eye, &times).unwrap();
        assert_relative_eq!(r.max_norm, 1.0, max_relative = 1e-15);
        assert!(r.pass);

        let one = DenseMatrix::identity(1, 1);
        let r = contraction_certificate(&one, &one, &times).unwrap();
        assert_relative_eq!(r.max_norm, 10f64.exp(), max_relative = 1e-12);
        assert!(!r.pass);

        let skew = DenseMatrix::from_row_slice(3, 3, &[0.0, 2.0, -1.0, -2.0, 0.0, 0.5, 1.0, -0.5, 0.0]);
        let r = contraction_certificate(&skew, &DenseMatrix::identity(3, 3), &default_certificate_times())
            .unwrap();
        assert!((r.max_norm - 1.0).abs() <= 1e-9);
        assert!(r.pass);
    }

    #[test]
    fn certificate_rejects_indefinite_weight() {
        let a = DenseMatrix::identity(2, 2);
        let w = DenseMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(
            contraction_certificate(&a, &w, &[1.0]),
            Err(Error::IndefiniteWeight)
        ));
    }

    #[test]
    fn weighted_norm_uses_congruence() {
        // diag weight w: ||M||_w = ||W^{1/2} M W^{-1/2}||
        let w = DenseMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let m = DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let wn = WeightedNorm::new(&w).unwrap();
        assert_relative_eq!(wn.norm(&m).unwrap(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn nullspace_and_distance() {
        let m = DenseMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let k = nullspace(&m, RANK_TOL);
        assert_eq!(k.ncols(), 2);
        assert!((&m * &k).amax() < 1e-15);
        let expect = DenseMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0]);
        assert!(subspace_distance(&k, &expect) < 1e-14);
        assert_eq!(subspace_distance(&k, &expect.columns(0, 1).into_owned()), 1.0);
    }

    #[test]
    fn log_spacing_endpoints() {
        let t = default_certificate_times();
        assert_eq!(t.len(), 20);
        assert_relative_eq!(t[0], 1e-3, max_relative = 1e-14);
        assert_relative_eq!(t[19], 10.0, max_relative = 1e-14);
    }
}
