//! Finite-dimensional boundary relations `C ⊆ B × B`.
//!
//! A relation is stored as a basis matrix of shape `2m × k` whose columns
//! span `C`; the top `m` rows carry the flow components `f` and the bottom
//! `m` rows the effort components `e`. The pairing `<f, e>` decides
//! dissipativity, and maximal dissipative relations are in one-to-one
//! correspondence with contractions `V` through `C = ker [I+V, I-V]`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics::{
    self, check_finite, nullspace, operator_norm, orthonormal_range, subspace_distance,
    DenseMatrix, RANK_TOL,
};

/// Principal-angle threshold for subspace equality.
pub const SUBSPACE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRelation {
    m: usize,
    basis: DenseMatrix,
}

impl BoundaryRelation {
    /// Validates shape and full column rank of `basis` (`2m × k`, `k ≤ 2m`).
    pub fn new(m: usize, basis: DenseMatrix) -> Result<Self> {
        if basis.nrows() != 2 * m {
            return Err(Error::DimensionMismatch(format!(
                "relation basis has {} rows, expected 2m = {}",
                basis.nrows(),
                2 * m
            )));
        }
        check_finite(&basis, "relation basis")?;
        let k = basis.ncols();
        if k > 0 {
            let r = numerics::rank(&basis, RANK_TOL);
            if r < k {
                return Err(Error::RankDeficient { rank: r, cols: k });
            }
        }
        Ok(BoundaryRelation { m, basis })
    }

    /// The zero relation `{0}`.
    pub fn zero(m: usize) -> Self {
        BoundaryRelation {
            m,
            basis: DenseMatrix::zeros(2 * m, 0),
        }
    }

    /// `ker W` for a `K × 2m` matrix `W`.
    pub fn from_kernel(w: &DenseMatrix) -> Result<Self> {
        if !w.ncols().is_multiple_of(2) {
            return Err(Error::DimensionMismatch(format!(
                "kernel map must have an even number of columns, got {}",
                w.ncols()
            )));
        }
        check_finite(w, "kernel map")?;
        let m = w.ncols() / 2;
        let basis = if m == 0 {
            DenseMatrix::zeros(0, 0)
        } else {
            nullspace(w, RANK_TOL)
        };
        Ok(BoundaryRelation { m, basis })
    }

    pub fn space_dim(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DenseMatrix {
        &self.basis
    }

    fn orthonormal(&self) -> DenseMatrix {
        if self.dim() == 0 {
            return DenseMatrix::zeros(2 * self.m, 0);
        }
        orthonormal_range(&self.basis, RANK_TOL)
    }

    fn split(q: &DenseMatrix, m: usize) -> (DenseMatrix, DenseMatrix) {
        (q.rows(0, m).into_owned(), q.rows(m, m).into_owned())
    }

    /// Symmetrized pairing `FᵀE + EᵀF` on an orthonormal basis of `C`.
    pub fn pairing_form(&self) -> DenseMatrix {
        let q = self.orthonormal();
        let (f, e) = Self::split(&q, self.m);
        let fe = f.transpose() * e;
        &fe + fe.transpose()
    }

    /// `<f, e> ≤ 0` on all of `C`.
    pub fn is_dissipative(&self, tol: f64) -> bool {
        if self.dim() == 0 {
            return true;
        }
        numerics::is_psd(&(-self.pairing_form()), tol).unwrap_or(false)
    }

    /// `<f, e> = 0` on all of `C`.
    pub fn is_skew_symmetric(&self, tol: f64) -> bool {
        if self.dim() == 0 {
            return true;
        }
        let form = self.pairing_form();
        // the orthonormal basis has unit norm
        operator_norm(&form).map(|n| n <= tol * 2.0).unwrap_or(false)
    }

    /// Dissipative with `dim C = m`; nonpositive subspaces of the
    /// `(m, m)`-signature pairing cannot be larger.
    pub fn is_maximal_dissipative(&self, tol: f64) -> bool {
        self.dim() == self.m && self.is_dissipative(tol)
    }

    /// `[0 I; I 0] C^⊥`, of dimension `2m - k`.
    pub fn flip_orthogonal_complement(&self) -> BoundaryRelation {
        let m = self.m;
        let perp = if self.dim() == 0 {
            DenseMatrix::identity(2 * m, 2 * m)
        } else {
            nullspace(&self.basis.transpose(), RANK_TOL)
        };
        let mut flipped = DenseMatrix::zeros(2 * m, perp.ncols());
        flipped.rows_mut(0, m).copy_from(&perp.rows(m, m));
        flipped.rows_mut(m, m).copy_from(&perp.rows(0, m));
        BoundaryRelation { m, basis: flipped }
    }

    /// The contraction `V: e - f ↦ e + f` of a maximal dissipative relation.
    pub fn to_contraction(&self, tol: f64) -> Result<DenseMatrix> {
        if self.dim() != self.m {
            return Err(Error::NotMaximalDissipative(format!(
                "dim C = {} but dim B = {}",
                self.dim(),
                self.m
            )));
        }
        if !self.is_dissipative(tol) {
            return Err(Error::NotMaximalDissipative(
                "relation is not dissipative".into(),
            ));
        }
        if self.m == 0 {
            return Ok(DenseMatrix::zeros(0, 0));
        }
        let q = self.orthonormal();
        let (f, e) = Self::split(&q, self.m);
        let diff = &e - &f;
        let sum = &e + &f;
        // V (E - F) = E + F  <=>  (E - F)^T V^T = (E + F)^T
        let vt = diff
            .transpose()
            .lu()
            .solve(&sum.transpose())
            .ok_or_else(|| {
                Error::NotMaximalDissipative("e - f does not cover B".into())
            })?;
        Ok(vt.transpose())
    }

    /// Same subspace of `B²` up to principal angle `tol`.
    pub fn same_subspace(&self, other: &BoundaryRelation, tol: f64) -> bool {
        self.m == other.m
            && self.dim() == other.dim()
            && (self.dim() == 0 || subspace_distance(&self.basis, &other.basis) <= tol)
    }
}

/// `ker [I+V, I-V]`, spanned by the columns of `[I - V; -(I + V)]`.
pub fn contraction_to_relation(v: &DenseMatrix, tol: f64) -> Result<BoundaryRelation> {
    if !v.is_square() {
        return Err(Error::NotSquare {
            rows: v.nrows(),
            cols: v.ncols(),
        });
    }
    let norm = operator_norm(v)?;
    if norm > 1.0 + tol {
        return Err(Error::NotContraction { norm, tol });
    }
    let m = v.nrows();
    let eye = DMatrix::<f64>::identity(m, m);
    let mut basis = DenseMatrix::zeros(2 * m, m);
    basis.rows_mut(0, m).copy_from(&(&eye - v));
    basis.rows_mut(m, m).copy_from(&(-(&eye + v)));
    BoundaryRelation::new(m, basis)
}

/// Convenience wrapper for [`BoundaryRelation::to_contraction`].
pub fn relation_to_contraction(c: &BoundaryRelation, tol: f64) -> Result<DenseMatrix> {
    c.to_contraction(tol)
}
