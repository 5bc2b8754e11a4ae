//! Boundary-controlled, damped wave system on a staggered triplet.
//!
//! The state is `x = (g, f_R)`: momentum per cell and strain on the retained
//! faces (interior and `Γ0`). Strain on `Γ1 ∪ Γ2` faces is not a state; the
//! corresponding stresses enter as boundary inputs after summation by parts,
//! which turns the boundary value problem into an ODE
//!
//! ```text
//! ẋ = A x + B u,    y = C x + D u
//! ```
//!
//! Boundary signals live on the scaled boundary space where `M_bdry` has been
//! absorbed, so that the power supplied through `Γ2` is `2 uᵀy`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::numerics::{min_sym_eigenvalue, operator_norm, DenseMatrix};
use crate::sim::SimulationTrace;
use crate::triplet::{BoundaryLabel, DiscreteTriplet};

/// Accretivity threshold for `Q + Qᵀ`.
pub const ACCRETIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    pub rho: Vec<f64>,
    pub tcoef: Vec<f64>,
    pub delta: f64,
}

impl MaterialField {
    pub fn new(rho: Vec<f64>, tcoef: Vec<f64>, delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::Material(format!("delta must be positive, got {delta}")));
        }
        for (name, vals) in [("rho", &rho), ("T", &tcoef)] {
            if let Some((i, v)) = vals.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= delta)) {
                return Err(Error::Material(format!(
                    "{name}[{i}] = {v} is below the positivity floor delta = {delta}"
                )));
            }
        }
        Ok(MaterialField { rho, tcoef, delta })
    }

    pub fn uniform(triplet: &DiscreteTriplet, rho: f64, tcoef: f64) -> Result<Self> {
        let delta = rho.min(tcoef);
        Self::new(
            vec![rho; triplet.n_cells()],
            vec![tcoef; triplet.n_faces()],
            if delta > 0.0 { delta } else { 1.0 },
        )
    }

    fn check_sizes(&self, triplet: &DiscreteTriplet) -> Result<()> {
        if self.rho.len() != triplet.n_cells() || self.tcoef.len() != triplet.n_faces() {
            return Err(Error::DimensionMismatch(format!(
                "material has {} densities and {} moduli, grid has {} cells and {} faces",
                self.rho.len(),
                self.tcoef.len(),
                triplet.n_cells(),
                triplet.n_faces()
            )));
        }
        Ok(())
    }

    /// Largest wave speed `sqrt(T/ρ)` bound.
    pub fn max_wave_speed(&self) -> f64 {
        let tmax = self.tcoef.iter().copied().fold(0.0, f64::max);
        let rmin = self.rho.iter().copied().fold(f64::INFINITY, f64::min);
        (tmax / rmin).sqrt()
    }
}

/// `diag(1/ρ, T)` together with the volume weights of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianOperator {
    pub cell_scale: DVector<f64>,
    pub face_scale: DVector<f64>,
    pub m_cell: DVector<f64>,
    pub m_face: DVector<f64>,
}

impl HamiltonianOperator {
    pub fn new(triplet: &DiscreteTriplet, material: &MaterialField) -> Result<Self> {
        material.check_sizes(triplet)?;
        Ok(HamiltonianOperator {
            cell_scale: DVector::from_iterator(material.rho.len(), material.rho.iter().map(|r| 1.0 / r)),
            face_scale: DVector::from_column_slice(&material.tcoef),
            m_cell: triplet.m_cell.clone(),
            m_face: triplet.m_face.clone(),
        })
    }

    pub fn identity(triplet: &DiscreteTriplet) -> Self {
        HamiltonianOperator {
            cell_scale: DVector::from_element(triplet.n_cells(), 1.0),
            face_scale: DVector::from_element(triplet.n_faces(), 1.0),
            m_cell: triplet.m_cell.clone(),
            m_face: triplet.m_face.clone(),
        }
    }

    /// Diagonal of `diag(M)·H` on the full state `(g, f)`.
    pub fn weight(&self) -> DVector<f64> {
        let nc = self.m_cell.len();
        DVector::from_fn(nc + self.m_face.len(), |i, _| {
            if i < nc {
                self.m_cell[i] * self.cell_scale[i]
            } else {
                self.m_face[i - nc] * self.face_scale[i - nc]
            }
        })
    }

    pub fn energy(&self, x: &DVector<f64>) -> f64 {
        x.component_mul(x).dot(&self.weight())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DampingSpec {
    /// Interior damping on the scaled cell space.
    pub qi: Option<DenseMatrix>,
    /// Boundary damping on the scaled `Γ1` dofs.
    pub qb: Option<DenseMatrix>,
}

impl DampingSpec {
    pub fn none() -> Self {
        DampingSpec::default()
    }

    pub fn boundary(qb: DenseMatrix) -> Self {
        DampingSpec { qi: None, qb: Some(qb) }
    }

    fn checked(q: &Option<DenseMatrix>, n: usize, name: &str) -> Result<DenseMatrix> {
        let Some(q) = q else {
            return Ok(DenseMatrix::zeros(n, n));
        };
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::Damping(format!(
                "{name} is {}x{}, expected {n}x{n}",
                q.nrows(),
                q.ncols()
            )));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::Damping(format!("{name} contains non-finite entries")));
        }
        if n > 0 {
            let lam = min_sym_eigenvalue(&(q + q.transpose()));
            if lam < -ACCRETIVE_TOL {
                return Err(Error::Damping(format!(
                    "{name} must be bounded and accretive: {name} + {name}ᵀ has eigenvalue {lam:e}"
                )));
            }
        }
        Ok(q.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    #[default]
    Impedance,
    Scattering,
}

impl Representation {
    pub fn as_str(self) -> &'static str {
        match self {
            Representation::Impedance => "impedance",
            Representation::Scattering => "scattering",
        }
    }
}

#[derive(Debug, Clone)]
pub struct WaveBoundarySystem {
    pub representation: Representation,
    pub dim: usize,
    pub n_cells: usize,
    pub retained_faces: Vec<usize>,
    pub rho: DVector<f64>,
    /// Diagonal energy weight: `E(x) = Σ w_i x_i²`.
    pub energy_weight: DVector<f64>,
    pub a: DenseMatrix,
    pub b_in: DenseMatrix,
    pub c_out: DenseMatrix,
    pub d_out: DenseMatrix,
    /// Lossless part of `a` (no damping, no output feedback).
    pub a_lossless: DenseMatrix,
    /// Control map of the `Γ2` stress in the impedance form.
    pub b_control: DenseMatrix,
    /// Scaled velocity trace on `Γ2`.
    pub c_velocity: DenseMatrix,
    /// Scaled velocity trace on `Γ1`.
    pub c_gamma1: DenseMatrix,
    pub qb: DenseMatrix,
    /// `w = M_cell^{1/2} v` on cells.
    pub interior_map: DenseMatrix,
    pub qi: Option<DenseMatrix>,
    pub gamma0_faces: usize,
    pub n_faces: usize,
    /// `Grad` restricted to the retained faces.
    pub grad_r: DenseMatrix,
    /// `(face, factor)` per `Γ2` dof: scaled outward stress is `factor·f[face]`.
    pub stress_gamma2: Vec<(usize, f64)>,
    /// Same for the `Γ1` dofs.
    pub stress_gamma1: Vec<(usize, f64)>,
}

impl WaveBoundarySystem {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b_in.ncols()
    }

    pub fn gamma1_dim(&self) -> usize {
        self.c_gamma1.nrows()
    }

    pub fn has_interior_damping(&self) -> bool {
        self.qi.is_some()
    }

    pub fn energy(&self, x: &DVector<f64>) -> f64 {
        x.component_mul(x).dot(&self.energy_weight)
    }

    pub fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.c_out * x + &self.d_out * u
    }

    pub fn gamma1_velocity(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c_gamma1 * x
    }

    /// `wᵀ Qi w`, or zero without interior damping.
    pub fn interior_power(&self, x: &DVector<f64>) -> f64 {
        match &self.qi {
            Some(qi) => {
                let w = &self.interior_map * x;
                w.dot(&(qi * &w))
            }
            None => 0.0,
        }
    }

    pub fn boundary_dissipation(&self, v1: &DVector<f64>) -> f64 {
        v1.dot(&(&self.qb * v1))
    }

    /// Largest entry of `W J + (W J)ᵀ` relative to the largest entry of `W J`.
    pub fn skew_defect(&self) -> f64 {
        let wj = DenseMatrix::from_fn(self.state_dim(), self.state_dim(), |i, j| {
            self.energy_weight[i] * self.a_lossless[(i, j)]
        });
        let scale = wj.amax().max(f64::MIN_POSITIVE);
        (&wj + wj.transpose()).amax() / scale
    }

    pub fn momentum<'a>(&self, x: &'a DVector<f64>) -> nalgebra::DVectorView<'a, f64> {
        x.rows(0, self.n_cells)
    }

    pub fn strain<'a>(&self, x: &'a DVector<f64>) -> nalgebra::DVectorView<'a, f64> {
        x.rows(self.n_cells, self.retained_faces.len())
    }

    pub fn manifest(&self) -> serde_json::Value {
        let norm = |m: &DenseMatrix| {
            if m.is_empty() {
                0.0
            } else {
                operator_norm(m).unwrap_or(f64::NAN)
            }
        };
        let qb_sym = &self.qb + self.qb.transpose();
        let qb_skew = self.qb.is_empty() || qb_sym.amax() <= ACCRETIVE_TOL;
        let qi_skew = self
            .qi
            .as_ref()
            .map(|q| (q + q.transpose()).amax() <= ACCRETIVE_TOL)
            .unwrap_or(true);
        json!({
            "representation": self.representation.as_str(),
            "dimensions": {
                "spatial": self.dim,
                "state": self.state_dim(),
                "cells": self.n_cells,
                "retained_faces": self.retained_faces.len(),
                "inputs": self.input_dim(),
                "outputs": self.c_out.nrows(),
            },
            "partition": {
                "gamma0_faces": self.gamma0_faces,
                "gamma1_dofs": self.gamma1_dim(),
                "gamma2_dofs": self.b_control.ncols(),
            },
            "damping": {
                "qb_accretive": true,
                "qb_skew": qb_skew,
                "qi_present": self.qi.is_some(),
                "qi_accretive": true,
                "qi_skew": qi_skew,
                "conservative": qb_skew && qi_skew,
            },
            "norms": {
                "a": norm(&self.a),
                "b": norm(&self.b_in),
                "c": norm(&self.c_out),
                "d": norm(&self.d_out),
            },
            "skew_defect": self.skew_defect(),
        })
    }
}

/// Impedance form: `u` is the scaled outward stress on `Γ2`, `y` the scaled
/// velocity trace there, and `Γ1` is closed by `u1 = -Qb y1`.
pub fn assemble_impedance_system(
    triplet: &DiscreteTriplet,
    material: &MaterialField,
    damping: &DampingSpec,
) -> Result<WaveBoundarySystem> {
    material.check_sizes(triplet)?;
    let nc = triplet.n_cells();
    let retained = triplet.retained_faces();
    let n = nc + retained.len();
    let d1 = triplet.dofs_with(BoundaryLabel::Gamma1);
    let d2 = triplet.dofs_with(BoundaryLabel::Gamma2);
    let qb = DampingSpec::checked(&damping.qb, d1.len(), "Qb")?;
    let qi = match &damping.qi {
        Some(_) => Some(DampingSpec::checked(&damping.qi, nc, "Qi")?),
        None => None,
    };

    let rinv: Vec<f64> = material.rho.iter().map(|r| 1.0 / r).collect();
    let h = HamiltonianOperator::new(triplet, material)?;
    let full_weight = h.weight();
    let mut weight = DVector::zeros(n);
    weight.rows_mut(0, nc).copy_from(&full_weight.rows(0, nc));
    for (k, &f) in retained.iter().enumerate() {
        weight[nc + k] = full_weight[nc + f];
    }

    let mut a = DenseMatrix::zeros(n, n);
    for (k, &f) in retained.iter().enumerate() {
        for c in 0..nc {
            let d = triplet.div[(c, f)];
            if d != 0.0 {
                a[(c, nc + k)] = d * material.tcoef[f];
            }
            let g = triplet.grad[(f, c)];
            if g != 0.0 {
                a[(nc + k, c)] = g * rinv[c];
            }
        }
    }
    let a_lossless = a.clone();

    // control and observation maps of a set of boundary dofs
    let maps = |dofs: &[usize]| {
        let mut b = DenseMatrix::zeros(n, dofs.len());
        let mut c = DenseMatrix::zeros(dofs.len(), n);
        for (j, &d) in dofs.iter().enumerate() {
            let face = triplet.dof_face(d);
            let s = triplet.m_bdry[d].sqrt();
            b[(face.cell, j)] = s / triplet.m_cell[face.cell];
            c[(j, face.cell)] = s * rinv[face.cell];
        }
        (b, c)
    };
    let (b1, c1) = maps(&d1);
    let (b2, c2) = maps(&d2);

    if !d1.is_empty() {
        a -= &b1 * &qb * &c1;
    }
    let sqrt_m: Vec<f64> = triplet.m_cell.iter().map(|m| m.sqrt()).collect();
    let mut interior_map = DenseMatrix::zeros(nc, n);
    for c in 0..nc {
        interior_map[(c, c)] = sqrt_m[c] * rinv[c];
    }
    if let Some(qi) = &qi {
        for i in 0..nc {
            for j in 0..nc {
                a[(i, j)] -= qi[(i, j)] * sqrt_m[j] / sqrt_m[i] * rinv[j];
            }
        }
    }

    let stress = |dofs: &[usize]| -> Vec<(usize, f64)> {
        dofs.iter()
            .map(|&d| {
                let face = triplet.dof_face(d);
                (face.face, triplet.m_bdry[d].sqrt() * face.normal * material.tcoef[face.face])
            })
            .collect()
    };
    let grad_r = DenseMatrix::from_fn(retained.len(), nc, |k, c| triplet.grad[(retained[k], c)]);

    let k = d2.len();
    Ok(WaveBoundarySystem {
        n_faces: triplet.n_faces(),
        grad_r,
        stress_gamma2: stress(&d2),
        stress_gamma1: stress(&d1),
        representation: Representation::Impedance,
        dim: triplet.geometry.dim,
        n_cells: nc,
        retained_faces: retained,
        rho: DVector::from_column_slice(&material.rho),
        energy_weight: weight,
        a,
        b_in: b2.clone(),
        c_out: c2.clone(),
        d_out: DenseMatrix::zeros(k, k),
        a_lossless,
        b_control: b2,
        c_velocity: c2,
        c_gamma1: c1,
        qb,
        interior_map,
        qi,
        gamma0_faces: triplet
            .geometry
            .boundary_faces
            .iter()
            .filter(|b| b.label == BoundaryLabel::Gamma0)
            .count(),
    })
}

/// `u_s = (u + y)/√2`, `y_s = (u - y)/√2`. The map is an involution.
pub fn external_cayley_signals(
    u: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if u.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} entries, output has {}",
            u.len(),
            y.len()
        )));
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    Ok(((u + y) * r, (u - y) * r))
}

/// Scattering form with input `u_s`: `ẋ = (A - B C) x + √2 B u_s`,
/// `y_s = u_s - √2 C x`.
pub fn assemble_scattering_system(impedance: &WaveBoundarySystem) -> Result<WaveBoundarySystem> {
    if impedance.representation != Representation::Impedance {
        return Err(Error::Representation(
            "scattering form must be built from an impedance system".into(),
        ));
    }
    let s2 = std::f64::consts::SQRT_2;
    let b = &impedance.b_control;
    let c = &impedance.c_velocity;
    let k = b.ncols();
    let mut out = impedance.clone();
    out.representation = Representation::Scattering;
    out.a = &impedance.a - b * c;
    out.b_in = b * s2;
    out.c_out = c * (-s2);
    out.d_out = DenseMatrix::identity(k, k);
    Ok(out)
}

/// Displacement from the momentum snapshots of a trace, integrating
/// `ż = g/ρ` with the trapezoid rule so that `z` advances exactly with the
/// midpoint velocity of each step.
pub fn reconstruct_displacement(
    trace: &SimulationTrace,
    z0: &DVector<f64>,
    material: &MaterialField,
) -> Result<Vec<DVector<f64>>> {
    let nc = material.rho.len();
    if z0.len() != nc {
        return Err(Error::DimensionMismatch(format!(
            "z0 has {} entries, expected {nc}",
            z0.len()
        )));
    }
    let snaps = &trace.snapshots;
    let steps = trace.times.len().saturating_sub(1);
    if snaps.len() != steps + 1 || snaps.iter().enumerate().any(|(i, s)| s.step != i) {
        return Err(Error::Trace(
            "displacement reconstruction needs a state snapshot at every step".into(),
        ));
    }
    let velocity = |x: &DVector<f64>| {
        DVector::from_fn(nc, |c, _| x[c] / material.rho[c])
    };
    let mut out = Vec::with_capacity(snaps.len());
    let mut z = z0.clone();
    let mut v_prev = velocity(&snaps[0].state);
    out.push(z.clone());
    for (n, snap) in snaps.iter().enumerate().skip(1) {
        let dt = trace.times[n] - trace.times[n - 1];
        let v = velocity(&snap.state);
        z += (&v_prev + &v) * (0.5 * dt);
        out.push(z.clone());
        v_prev = v;
    }
    Ok(out)
}
