//! Generation criteria for boundary conditions `W1 B1 x + W2 B2 x = 0`.
//!
//! Given the pair `(W1, W2)` this module decides whether the restricted
//! operator generates a contraction semigroup or a unitary group, builds the
//! associated contraction `V` with `(W1 + W2) V = W1 - W2`, and checks the
//! algebraic verdict against the matrix-exponential oracle on an assembled
//! discrete model.
//!
//! The boundary space carries the Euclidean inner product; the identification
//! between the boundary space and its dual is the identity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    self, check_finite, contraction_certificate, default_certificate_times, operator_norm,
    singular_values, ContractionReport, DenseMatrix, RANK_TOL,
};
use crate::relation::BoundaryRelation;
use crate::triplet::{restrict_generator, DiscreteTriplet};
use crate::wave::HamiltonianOperator;

/// Deviation of `||e^{At}||` from 1 tolerated for unitary verdicts.
pub const UNITARY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryConditionSpec {
    w1: DenseMatrix,
    w2: DenseMatrix,
}

impl BoundaryConditionSpec {
    pub fn new(w1: DenseMatrix, w2: DenseMatrix) -> Result<Self> {
        if w1.shape() != w2.shape() {
            return Err(Error::DimensionMismatch(format!(
                "W1 is {:?} but W2 is {:?}",
                w1.shape(),
                w2.shape()
            )));
        }
        check_finite(&w1, "W1")?;
        check_finite(&w2, "W2")?;
        Ok(BoundaryConditionSpec { w1, w2 })
    }

    pub fn w1(&self) -> &DenseMatrix {
        &self.w1
    }

    pub fn w2(&self) -> &DenseMatrix {
        &self.w2
    }

    /// Dimension of the target space `K`.
    pub fn target_dim(&self) -> usize {
        self.w1.nrows()
    }

    /// Dimension of the boundary space `B`.
    pub fn boundary_dim(&self) -> usize {
        self.w1.ncols()
    }

    /// `[W1 W2]`.
    pub fn stacked(&self) -> DenseMatrix {
        let (k, m) = self.w1.shape();
        let mut w = DenseMatrix::zeros(k, 2 * m);
        w.columns_mut(0, m).copy_from(&self.w1);
        w.columns_mut(m, m).copy_from(&self.w2);
        w
    }

    pub fn sum(&self) -> DenseMatrix {
        &self.w1 + &self.w2
    }

    pub fn difference(&self) -> DenseMatrix {
        &self.w1 - &self.w2
    }

    /// `W1 W2ᵀ + W2 W1ᵀ`.
    pub fn symmetrized_product(&self) -> DenseMatrix {
        let p = &self.w1 * self.w2.transpose();
        &p + p.transpose()
    }

    /// Smallest over largest singular value of `W1 + W2`; zero when the sum
    /// cannot be injective for shape reasons.
    pub fn sum_conditioning(&self) -> f64 {
        let (k, m) = self.w1.shape();
        if m == 0 {
            return 1.0;
        }
        if k < m {
            return 0.0;
        }
        let s = singular_values(&self.sum());
        match (s.first(), s.get(m - 1)) {
            (Some(&top), Some(&low)) if top > 0.0 => low / top,
            _ => 0.0,
        }
    }

    pub fn sum_injective(&self) -> bool {
        self.boundary_dim() == 0 || self.sum_conditioning() >= RANK_TOL
    }

    /// `ran(W1 - W2) ⊂ ran(W1 + W2)`, decided by comparing ranks.
    pub fn check_range_condition(&self, tol: f64) -> bool {
        let (k, m) = self.w1.shape();
        if k == 0 || m == 0 {
            return true;
        }
        let sum = self.sum();
        let mut aug = DenseMatrix::zeros(k, 2 * m);
        aug.columns_mut(0, m).copy_from(&sum);
        aug.columns_mut(m, m).copy_from(&self.difference());
        let scale = singular_values(&aug).first().copied().unwrap_or(0.0);
        numerics::rank_with_scale(&sum, tol, scale) == numerics::rank_with_scale(&aug, tol, scale)
    }

    /// Solves `(W1 + W2) V = W1 - W2` by QR least squares and verifies the
    /// residual.
    pub fn build_contraction_v(&self, tol: f64) -> Result<ContractionV> {
        let m = self.boundary_dim();
        if !self.sum_injective() {
            return Err(Error::SumNotInjective {
                ratio: self.sum_conditioning(),
            });
        }
        if !self.check_range_condition(RANK_TOL) {
            return Err(Error::RangeConditionViolated);
        }
        if m == 0 {
            return Ok(ContractionV {
                v: DenseMatrix::zeros(0, 0),
                residual: 0.0,
                contractive: true,
            });
        }
        let sum = self.sum();
        let diff = self.difference();
        let qr = sum.clone().qr();
        let rhs = qr.q().transpose() * &diff;
        let v = qr
            .r()
            .solve_upper_triangular(&rhs)
            .ok_or(Error::SumNotInjective { ratio: 0.0 })?;
        let residual = operator_norm(&(&sum * &v - &diff))?;
        let scale = operator_norm(&sum)? * operator_norm(&v)? + operator_norm(&diff)?;
        let allowed = numerics::threshold(tol, scale.max(1.0));
        if residual > allowed {
            return Err(Error::SolveResidual {
                residual,
                tol: allowed,
            });
        }
        let eye = DenseMatrix::identity(m, m);
        let contractive = numerics::is_psd(&(&eye - &v * v.transpose()), tol)?;
        Ok(ContractionV {
            v,
            residual,
            contractive,
        })
    }

    /// The relation `ker [W1 W2]`.
    pub fn kernel_relation(&self) -> Result<BoundaryRelation> {
        BoundaryRelation::from_kernel(&self.stacked())
    }

    pub fn classify_generator(&self, tol: f64) -> GenerationVerdict {
        classify_generator(self, tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionV {
    pub v: DenseMatrix,
    pub residual: f64,
    /// `V Vᵀ ⪯ I`.
    pub contractive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    NotDissipative,
    ContractionSemigroup,
    UnitaryGroup,
    RangeConditionFails,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::NotDissipative => "not_dissipative",
            Classification::ContractionSemigroup => "contraction_semigroup",
            Classification::UnitaryGroup => "unitary_group",
            Classification::RangeConditionFails => "range_condition_fails",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationVerdict {
    pub classification: Classification,
    pub sum_injective: bool,
    pub symmetrized_psd: bool,
    pub symmetrized_zero: bool,
    pub kernel_dissipative: bool,
    pub kernel_skew: bool,
    pub v: Option<DenseMatrix>,
    pub diagnostics: String,
}

impl GenerationVerdict {
    /// Whether the verdict predicts a contraction semigroup for the
    /// assembled finite-dimensional model.
    ///
    /// When the range condition fails the criterion based on `W1 + W2` is not
    /// applicable; the restricted operator is then dissipative exactly when
    /// the kernel relation is, which is what the projected model sees.
    pub fn predicts_contraction(&self) -> bool {
        match self.classification {
            Classification::ContractionSemigroup | Classification::UnitaryGroup => true,
            Classification::NotDissipative => false,
            Classification::RangeConditionFails => self.kernel_dissipative,
        }
    }

    pub fn v_norm(&self) -> Option<f64> {
        self.v.as_ref().and_then(|v| operator_norm(v).ok())
    }
}

pub fn classify_generator(spec: &BoundaryConditionSpec, tol: f64) -> GenerationVerdict {
    let sym = spec.symmetrized_product();
    let sym_norm = operator_norm(&sym).unwrap_or(f64::INFINITY);
    let scale = 1.0
        + operator_norm(spec.w1()).unwrap_or(0.0) * operator_norm(spec.w2()).unwrap_or(0.0);
    let symmetrized_zero = sym_norm <= numerics::threshold(tol, scale);
    let symmetrized_psd = numerics::is_psd(&sym, tol).unwrap_or(false);
    let sum_injective = spec.sum_injective();
    let range_ok = spec.check_range_condition(RANK_TOL);

    let (kernel_dissipative, kernel_skew, kernel_dim) = match spec.kernel_relation() {
        Ok(c) => (c.is_dissipative(tol), c.is_skew_symmetric(tol), c.dim()),
        Err(_) => (false, false, 0),
    };

    let v = if sum_injective && range_ok {
        spec.build_contraction_v(tol).ok().map(|c| c.v)
    } else {
        None
    };

    let mut notes = Vec::new();
    notes.push(format!(
        "ker[W1 W2] has dimension {kernel_dim} in B^2 with dim B = {}; dissipative: {kernel_dissipative}, skew: {kernel_skew}",
        spec.boundary_dim()
    ));

    let classification = if !range_ok {
        notes.push(
            "range condition fails, the W1+W2 criterion does not apply; \
             verdict on dissipativity rests on the kernel relation alone"
                .into(),
        );
        Classification::RangeConditionFails
    } else if !kernel_dissipative {
        Classification::NotDissipative
    } else if sum_injective && symmetrized_psd {
        if kernel_skew && symmetrized_zero {
            Classification::UnitaryGroup
        } else {
            Classification::ContractionSemigroup
        }
    } else {
        notes.push(format!(
            "kernel is dissipative but W1+W2 injective = {sum_injective}, \
             W1W2^T+W2W1^T >= 0 = {symmetrized_psd}; criteria disagree at this tolerance"
        ));
        Classification::NotDissipative
    };

    GenerationVerdict {
        classification,
        sum_injective,
        symmetrized_psd,
        symmetrized_zero,
        kernel_dissipative,
        kernel_skew,
        v,
        diagnostics: notes.join("; "),
    }
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub verdict: GenerationVerdict,
    pub verdict_agrees: bool,
    pub max_norm: f64,
    pub certificate: ContractionReport,
}

/// Assembles the restricted generator on `triplet` and compares the
/// exponential oracle with [`classify_generator`].
pub fn certify_against_oracle(
    spec: &BoundaryConditionSpec,
    triplet: &DiscreteTriplet,
    h: &HamiltonianOperator,
    tol: f64,
) -> Result<OracleReport> {
    let m = triplet.boundary_dim();
    if spec.boundary_dim() != m {
        return Err(Error::DimensionMismatch(format!(
            "spec acts on a boundary space of dimension {}, triplet has {m}",
            spec.boundary_dim()
        )));
    }
    let verdict = classify_generator(spec, tol);
    let restricted = restrict_generator(triplet, h, spec)?;
    let a = restricted.matrix;
    let n = a.nrows();
    // the restricted basis is orthonormal in the energy inner product
    let certificate =
        contraction_certificate(&a, &DenseMatrix::identity(n, n), &default_certificate_times())?;
    let mut agrees = certificate.pass == verdict.predicts_contraction();
    if verdict.classification == Classification::UnitaryGroup {
        agrees &= certificate
            .samples
            .iter()
            .all(|&(_, norm)| (norm - 1.0).abs() <= UNITARY_TOL);
    }
    Ok(OracleReport {
        max_norm: certificate.max_norm,
        verdict,
        verdict_agrees: agrees,
        certificate,
    })
}
