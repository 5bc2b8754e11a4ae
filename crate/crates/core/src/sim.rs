//! Implicit midpoint integration with per-step energy bookkeeping.
//!
//! Inputs and outputs are sampled at interval midpoints. Because the energy
//! is a quadratic form and the slope is evaluated at the midpoint, the change
//! of energy over one step equals `dt` times the midpoint power, up to the
//! residual of the linear solve. The audit checks this step by step.

use std::path::{Path, PathBuf};

use nalgebra::linalg::LU;
use nalgebra::{DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::wave::{external_cayley_signals, Representation, WaveBoundarySystem};

/// Relative tolerance for `u(0) = G x0`.
pub const COMPATIBILITY_TOL: f64 = 1e-8;
/// Per-step balance tolerance relative to `E0 + max |u|²`.
pub const BALANCE_TOL: f64 = 1e-10;
pub const DEFAULT_SOLVER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSignal {
    Zero,
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    GaussianPulse {
        amplitude: f64,
        center: f64,
        width: f64,
    },
}

impl InputSignal {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            InputSignal::Zero => 0.0,
            InputSignal::Sinusoid { amplitude, frequency, phase } => {
                amplitude * (std::f64::consts::TAU * frequency * t + phase).sin()
            }
            InputSignal::GaussianPulse { amplitude, center, width } => {
                let s = (t - center) / width;
                amplitude * (-0.5 * s * s).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            InputSignal::Zero => true,
            InputSignal::Sinusoid { amplitude, frequency, phase } => {
                amplitude.is_finite() && frequency.is_finite() && phase.is_finite()
            }
            InputSignal::GaussianPulse { amplitude, center, width } => {
                amplitude.is_finite() && center.is_finite() && width.is_finite() && width > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid input signal {self:?}")))
        }
    }
}

/// Boundary input: one sum of signals per `Γ2` dof, or a single sum shared
/// by all of them. An empty list means zero input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct InputSpec(pub Vec<Vec<InputSignal>>);

impl InputSpec {
    pub fn broadcast(signals: Vec<InputSignal>) -> Self {
        InputSpec(vec![signals])
    }

    fn validate(&self, k: usize) -> Result<()> {
        let n = self.0.len();
        if n > 1 && n != k {
            return Err(Error::Config(format!(
                "{n} input channels given for {k} controlled boundary dofs"
            )));
        }
        self.0.iter().flatten().try_for_each(InputSignal::validate)
    }

    pub fn sample(&self, t: f64, k: usize) -> DVector<f64> {
        let sum = |sig: &[InputSignal]| sig.iter().map(|s| s.value(t)).sum::<f64>();
        match self.0.len() {
            0 => DVector::zeros(k),
            1 => DVector::from_element(k, sum(&self.0[0])),
            _ => DVector::from_fn(k, |i, _| sum(&self.0[i])),
        }
    }
}

fn default_energy() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Zero,
    Random {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_energy")]
        energy: f64,
    },
    /// Momentum per cell and strain on every face.
    Explicit { g0: Vec<f64>, f0: Vec<f64> },
    /// Displacement and velocity per cell: `g0 = ρ w0`, `f0 = Grad z0`.
    Displacement { z0: Vec<f64>, w0: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub inputs: InputSpec,
    #[serde(default)]
    pub initial_state: InitialState,
    /// Keep the state every `snapshot_every` steps; zero keeps none.
    #[serde(default)]
    pub snapshot_every: usize,
    pub linear_solver_tol: f64,
}

impl SimulationConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        SimulationConfig {
            dt,
            t_end,
            inputs: InputSpec::default(),
            initial_state: InitialState::Zero,
            snapshot_every: 0,
            linear_solver_tol: DEFAULT_SOLVER_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return Err(Error::Config(format!(
                "t_end = {} must be at least dt = {}",
                self.t_end, self.dt
            )));
        }
        if !(self.linear_solver_tol.is_finite() && self.linear_solver_tol > 0.0) {
            return Err(Error::Config(format!(
                "linear_solver_tol must be positive, got {}",
                self.linear_solver_tol
            )));
        }
        if let InitialState::Random { energy, .. } = self.initial_state {
            if !(energy.is_finite() && energy >= 0.0) {
                return Err(Error::Config(format!("random initial energy must be nonnegative, got {energy}")));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.t_end / self.dt).round() as usize).max(1)
    }

    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).unwrap_or_default();
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }
}

/// `(I - dt/2 A) x' = (I + dt/2 A) x + dt B u`, factored once.
pub struct MidpointStepper {
    lhs: DenseMatrix,
    rhs: DenseMatrix,
    lu: LU<f64, Dyn, Dyn>,
    b_dt: DenseMatrix,
    tol: f64,
}

impl MidpointStepper {
    /// `dt` may be negative to integrate backwards.
    pub fn new(a: &DenseMatrix, b: &DenseMatrix, dt: f64, tol: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
        }
        if b.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "input map has {} rows, state has {}",
                b.nrows(),
                a.nrows()
            )));
        }
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::Config(format!("time step must be finite and nonzero, got {dt}")));
        }
        let n = a.nrows();
        let eye = DenseMatrix::identity(n, n);
        let lhs = &eye - a * (0.5 * dt);
        let rhs = &eye + a * (0.5 * dt);
        let lu = lhs.clone().lu();
        let diag = lu.u().diagonal().abs();
        if n > 0 {
            let big = diag.max();
            let small = diag.min();
            if !(small > f64::EPSILON * n as f64 * big) {
                return Err(Error::SingularImplicitMatrix { dt });
            }
        }
        Ok(MidpointStepper { lhs, rhs, lu, b_dt: b * dt, tol })
    }

    pub fn step(&self, x: &DVector<f64>, u_mid: &DVector<f64>) -> Result<DVector<f64>> {
        let mut r = &self.rhs * x;
        if self.b_dt.ncols() > 0 {
            r += &self.b_dt * u_mid;
        }
        let scale = r.norm();
        let mut next = self.lu.solve(&r).ok_or(Error::SolveResidual {
            residual: f64::INFINITY,
            tol: self.tol,
        })?;
        let mut residual = (&r - &self.lhs * &next).norm();
        for _ in 0..3 {
            if residual <= self.tol * scale {
                return Ok(next);
            }
            let res = &r - &self.lhs * &next;
            if let Some(corr) = self.lu.solve(&res) {
                next += corr;
            }
            residual = (&r - &self.lhs * &next).norm();
        }
        if residual <= self.tol * scale {
            Ok(next)
        } else {
            Err(Error::SolveResidual { residual: residual / scale, tol: self.tol })
        }
    }
}

/// One implicit midpoint step of `system`.
pub fn step_midpoint(
    system: &WaveBoundarySystem,
    x: &DVector<f64>,
    u_mid: &DVector<f64>,
    dt: f64,
    tol: f64,
) -> Result<DVector<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    if x.len() != system.state_dim() || u_mid.len() != system.input_dim() {
        return Err(Error::DimensionMismatch("state or input has the wrong length".into()));
    }
    MidpointStepper::new(&system.a, &system.b_in, dt, tol)?.step(x, u_mid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub state: DVector<f64>,
}

/// Row `n > 0` holds the midpoint samples of the step ending at `times[n]`;
/// row 0 holds the values at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub representation: Representation,
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub v_gamma1: Vec<DVector<f64>>,
    /// `wᵀ Qi w` per row when interior damping is present.
    pub p_int: Option<Vec<f64>>,
    /// Outputs at the step points.
    pub y_step: Vec<DVector<f64>>,
    pub snapshots: Vec<Snapshot>,
    pub n_cells: usize,
    pub config_hash: String,
}

impl SimulationTrace {
    pub fn steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn input_dim(&self) -> usize {
        self.u.first().map_or(0, |v| v.len())
    }

    pub fn gamma1_dim(&self) -> usize {
        self.v_gamma1.first().map_or(0, |v| v.len())
    }

    pub fn final_state(&self) -> Option<&DVector<f64>> {
        self.snapshots.last().map(|s| &s.state)
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string(), "E".to_string()];
        h.extend((1..=self.input_dim()).map(|i| format!("u_{i}")));
        h.extend((1..=self.input_dim()).map(|i| format!("y_{i}")));
        h.extend((1..=self.gamma1_dim()).map(|i| format!("v_gamma1_{i}")));
        if self.p_int.is_some() {
            h.push("p_int".into());
        }
        h
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        for n in 0..self.times.len() {
            let mut row = vec![fmt(self.times[n]), fmt(self.energy[n])];
            row.extend(self.u[n].iter().map(|&v| fmt(v)));
            row.extend(self.y[n].iter().map(|&v| fmt(v)));
            row.extend(self.v_gamma1[n].iter().map(|&v| fmt(v)));
            if let Some(p) = &self.p_int {
                row.push(fmt(p[n]));
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes `<stem>.g.csv` and `<stem>.f.csv` next to `path`.
    pub fn write_snapshots(&self, path: &Path) -> Result<Vec<PathBuf>> {
        let nc = self.n_cells;
        let mut out = Vec::new();
        for (suffix, prefix, range) in [("g", "g", 0..nc), ("f", "f", nc..usize::MAX)] {
            let p = path.with_extension(format!("{suffix}.csv"));
            let mut w = csv::Writer::from_path(&p)?;
            let width = self.snapshots.first().map_or(0, |s| s.state.len().min(range.end) - range.start);
            let mut header = vec!["step".to_string(), "t".to_string()];
            header.extend((1..=width).map(|i| format!("{prefix}_{i}")));
            w.write_record(&header)?;
            for s in &self.snapshots {
                let mut row = vec![s.step.to_string(), fmt(s.time)];
                row.extend(s.state.rows(range.start, width).iter().map(|&v| fmt(v)));
                w.write_record(&row)?;
            }
            w.flush().map_err(|e| Error::io(&p, e))?;
            out.push(p);
        }
        Ok(out)
    }

    pub fn read_csv(path: &Path, representation: Representation) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let count = |p: &str| header.iter().filter(|h| h.starts_with(p)).count();
        let (k, k_y, m1) = (count("u_"), count("y_"), count("v_gamma1_"));
        let has_p = header.iter().any(|h| h == "p_int");
        let expected = 2 + k + k_y + m1 + usize::from(has_p);
        if header.len() < 2 || header[0] != "t" || header[1] != "E" || k != k_y || expected != header.len() {
            return Err(Error::Trace(format!("unrecognized trace header in {}", path.display())));
        }
        let mut trace = SimulationTrace {
            representation,
            times: Vec::new(),
            energy: Vec::new(),
            u: Vec::new(),
            y: Vec::new(),
            v_gamma1: Vec::new(),
            p_int: has_p.then(Vec::new),
            y_step: Vec::new(),
            snapshots: Vec::new(),
            n_cells: 0,
            config_hash: String::new(),
        };
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Trace(format!("row {}: {e}", line + 1)))?;
            if vals.len() != expected {
                return Err(Error::Trace(format!("row {} has {} fields, expected {expected}", line + 1, vals.len())));
            }
            trace.times.push(vals[0]);
            trace.energy.push(vals[1]);
            trace.u.push(DVector::from_column_slice(&vals[2..2 + k]));
            trace.y.push(DVector::from_column_slice(&vals[2 + k..2 + 2 * k]));
            trace.v_gamma1.push(DVector::from_column_slice(&vals[2 + 2 * k..2 + 2 * k + m1]));
            if let Some(p) = &mut trace.p_int {
                p.push(vals[expected - 1]);
            }
        }
        if trace.times.is_empty() {
            return Err(Error::Trace(format!("{} has no rows", path.display())));
        }
        Ok(trace)
    }

    /// Applies the external Cayley transform to every `(u, y)` row.
    pub fn cayley(&self) -> Result<Self> {
        let mut out = self.clone();
        for n in 0..self.times.len() {
            let (u, y) = external_cayley_signals(&self.u[n], &self.y[n])?;
            out.u[n] = u;
            out.y[n] = y;
        }
        out.y_step.clear();
        out.representation = match self.representation {
            Representation::Impedance => Representation::Scattering,
            Representation::Scattering => Representation::Impedance,
        };
        Ok(out)
    }
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn initial_state(system: &WaveBoundarySystem, config: &SimulationConfig) -> Result<DVector<f64>> {
    let n = system.state_dim();
    let nc = system.n_cells;
    let len_err = |what: &str, got: usize, want: usize| {
        Error::Incompatible(format!("{what} has {got} entries, expected {want}"))
    };
    match &config.initial_state {
        InitialState::Zero => Ok(DVector::zeros(n)),
        InitialState::Random { seed, energy } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let x = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let e = system.energy(&x);
            Ok(if e > 0.0 { x * (energy / e).sqrt() } else { x })
        }
        InitialState::Displacement { z0, w0 } => {
            if z0.len() != nc {
                return Err(len_err("z0", z0.len(), nc));
            }
            if w0.len() != nc {
                return Err(len_err("w0", w0.len(), nc));
            }
            let z = DVector::from_column_slice(z0);
            let f = &system.grad_r * z;
            let mut x = DVector::zeros(n);
            for c in 0..nc {
                x[c] = system.rho[c] * w0[c];
            }
            x.rows_mut(nc, f.len()).copy_from(&f);
            Ok(x)
        }
        InitialState::Explicit { g0, f0 } => {
            if g0.len() != nc {
                return Err(len_err("g0", g0.len(), nc));
            }
            if f0.len() != system.n_faces {
                return Err(len_err("f0", f0.len(), system.n_faces));
            }
            let mut x = DVector::zeros(n);
            x.rows_mut(0, nc).copy_from_slice(g0);
            for (k, &face) in system.retained_faces.iter().enumerate() {
                x[nc + k] = f0[face];
            }
            check_compatibility(system, config, &x, f0)?;
            Ok(x)
        }
    }
}

/// `u(0) = G x0` on `Γ2` and `Qb v1 + σ1 = 0` on `Γ1`.
fn check_compatibility(
    system: &WaveBoundarySystem,
    config: &SimulationConfig,
    x: &DVector<f64>,
    f0: &[f64],
) -> Result<()> {
    let stress = |list: &[(usize, f64)]| {
        DVector::from_iterator(list.len(), list.iter().map(|&(face, s)| s * f0[face]))
    };
    let sigma2 = stress(&system.stress_gamma2);
    let u0 = config.inputs.sample(0.0, system.input_dim());
    let expected = match system.representation {
        Representation::Impedance => sigma2,
        Representation::Scattering => external_cayley_signals(&sigma2, &(&system.c_velocity * x))?.0,
    };
    let gap = (&u0 - &expected).amax();
    if gap > COMPATIBILITY_TOL * (1.0 + u0.amax()) {
        return Err(Error::Incompatible(format!(
            "boundary stress of the initial state differs from u(0) by {gap:e}"
        )));
    }
    let v1 = system.gamma1_velocity(x);
    let residual = &system.qb * &v1 + stress(&system.stress_gamma1);
    let gap = residual.amax();
    if gap > COMPATIBILITY_TOL * (1.0 + v1.amax()) {
        return Err(Error::Incompatible(format!(
            "initial state violates the damped boundary condition by {gap:e}"
        )));
    }
    Ok(())
}

pub fn simulate(system: &WaveBoundarySystem, config: &SimulationConfig) -> Result<SimulationTrace> {
    config.validate()?;
    let k = system.input_dim();
    config.inputs.validate(k)?;
    let x0 = initial_state(system, config)?;
    simulate_from(system, config, x0)
}

/// Runs from an explicit state, bypassing `initial_state`.
pub fn simulate_from(
    system: &WaveBoundarySystem,
    config: &SimulationConfig,
    x0: DVector<f64>,
) -> Result<SimulationTrace> {
    config.validate()?;
    let k = system.input_dim();
    config.inputs.validate(k)?;
    if x0.len() != system.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has {} entries, system has {}",
            x0.len(),
            system.state_dim()
        )));
    }
    let dt = config.dt;
    let steps = config.steps();
    let stepper = MidpointStepper::new(&system.a, &system.b_in, dt, config.linear_solver_tol)?;
    let keep = |n: usize| config.snapshot_every > 0 && (n.is_multiple_of(config.snapshot_every) || n == steps);

    let mut trace = SimulationTrace {
        representation: system.representation,
        times: Vec::with_capacity(steps + 1),
        energy: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        v_gamma1: Vec::with_capacity(steps + 1),
        p_int: system.has_interior_damping().then(|| Vec::with_capacity(steps + 1)),
        y_step: Vec::with_capacity(steps + 1),
        snapshots: Vec::new(),
        n_cells: system.n_cells,
        config_hash: config.hash(),
    };
    let record = |trace: &mut SimulationTrace, t: f64, e: f64, x_s: &DVector<f64>, u_s: DVector<f64>| {
        trace.times.push(t);
        trace.energy.push(e);
        trace.y.push(system.output(x_s, &u_s));
        trace.v_gamma1.push(system.gamma1_velocity(x_s));
        if let Some(p) = &mut trace.p_int {
            p.push(system.interior_power(x_s));
        }
        trace.u.push(u_s);
    };

    let mut x = x0;
    let u0 = config.inputs.sample(0.0, k);
    trace.y_step.push(system.output(&x, &u0));
    record(&mut trace, 0.0, system.energy(&x), &x, u0);
    if keep(0) {
        trace.snapshots.push(Snapshot { step: 0, time: 0.0, state: x.clone() });
    }
    for n in 1..=steps {
        let t0 = (n - 1) as f64 * dt;
        let t1 = n as f64 * dt;
        let u_mid = config.inputs.sample(t0 + 0.5 * dt, k);
        let next = stepper.step(&x, &u_mid)?;
        let x_mid = (&x + &next) * 0.5;
        x = next;
        trace.y_step.push(system.output(&x, &config.inputs.sample(t1, k)));
        record(&mut trace, t1, system.energy(&x), &x_mid, u_mid);
        if keep(n) {
            trace.snapshots.push(Snapshot { step: n, time: t1, state: x.clone() });
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub representation: Representation,
    pub steps: usize,
    pub e0: f64,
    pub e_max: f64,
    pub max_input_sq: f64,
    /// Per-step tolerance `1e-10 (E0 + max |u|²)`.
    pub tolerance: f64,
    pub per_step_max_residual: f64,
    pub cumulative_residual: f64,
    pub total_supply: f64,
    pub total_dissipated: f64,
    pub energy_change: f64,
    /// `total_supply - energy_change`: zero exactly when the run is lossless.
    pub supply_gap: f64,
    pub passivity_violations: usize,
    pub pass: bool,
}

/// Step-by-step check of `ΔE = supply - dissipation`.
pub fn audit_energy_balance(trace: &SimulationTrace, system: &WaveBoundarySystem) -> Result<AuditReport> {
    if trace.representation != system.representation {
        return Err(Error::Representation(format!(
            "trace is in {} form, system in {} form",
            trace.representation.as_str(),
            system.representation.as_str()
        )));
    }
    let rows = trace.times.len();
    if rows == 0 || [trace.energy.len(), trace.u.len(), trace.y.len(), trace.v_gamma1.len()].iter().any(|&l| l != rows) {
        return Err(Error::Trace("trace columns have inconsistent lengths".into()));
    }
    if trace.input_dim() != system.input_dim() || trace.gamma1_dim() != system.gamma1_dim() {
        return Err(Error::Trace("trace does not match the system's boundary dimensions".into()));
    }
    if system.has_interior_damping() && trace.p_int.is_none() {
        return Err(Error::Trace("trace lacks the interior dissipation column".into()));
    }
    if let Some(n) = trace.energy.iter().position(|e| !(*e >= 0.0)) {
        return Err(Error::Trace(format!("negative or non-finite energy at row {n}")));
    }
    let e0 = trace.energy[0];
    let e_max = trace.energy.iter().copied().fold(0.0, f64::max);
    let max_input_sq = trace.u.iter().map(|u| u.norm_squared()).fold(0.0, f64::max);
    let tolerance = BALANCE_TOL * (e0 + max_input_sq);

    let mut worst = 0.0f64;
    let (mut supply_sum, mut diss_sum, mut signed) = (0.0, 0.0, 0.0);
    let mut violations = 0;
    for n in 1..rows {
        let dt = trace.times[n] - trace.times[n - 1];
        let (u, y) = (&trace.u[n], &trace.y[n]);
        let supply = match trace.representation {
            Representation::Impedance => 2.0 * dt * u.dot(y),
            Representation::Scattering => dt * (u.norm_squared() - y.norm_squared()),
        };
        let p_int = trace.p_int.as_ref().map_or(0.0, |p| p[n]);
        let diss = 2.0 * dt * (system.boundary_dissipation(&trace.v_gamma1[n]) + p_int);
        let de = trace.energy[n] - trace.energy[n - 1];
        let r = de - supply + diss;
        worst = worst.max(r.abs());
        signed += r;
        supply_sum += supply;
        diss_sum += diss;
        if de - supply > tolerance {
            violations += 1;
        }
    }
    let energy_change = trace.energy[rows - 1] - e0;
    Ok(AuditReport {
        representation: trace.representation,
        steps: rows - 1,
        e0,
        e_max,
        max_input_sq,
        tolerance,
        per_step_max_residual: worst,
        cumulative_residual: signed.abs(),
        total_supply: supply_sum,
        total_dissipated: diss_sum,
        energy_change,
        supply_gap: supply_sum - energy_change,
        passivity_violations: violations,
        pass: worst <= tolerance && violations == 0,
    })
}

/// One point of a sweep: dotted JSON paths and the values to put there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variation {
    pub overrides: Vec<(String, serde_json::Value)>,
}

impl Variation {
    /// Cartesian product of `key -> values` lists, first key slowest.
    pub fn grid(axes: &[(String, Vec<serde_json::Value>)]) -> Vec<Variation> {
        if axes.is_empty() {
            return Vec::new();
        }
        let mut out = vec![Variation { overrides: Vec::new() }];
        for (key, values) in axes {
            out = out
                .into_iter()
                .flat_map(|v| {
                    values.iter().map(move |val| {
                        let mut o = v.overrides.clone();
                        o.push((key.clone(), val.clone()));
                        Variation { overrides: o }
                    })
                })
                .collect();
        }
        out
    }

    pub fn apply(&self, base: &serde_json::Value) -> Result<serde_json::Value> {
        let mut v = base.clone();
        for (key, val) in &self.overrides {
            set_path(&mut v, key, val.clone())?;
        }
        Ok(v)
    }
}

fn set_path(root: &mut serde_json::Value, key: &str, val: serde_json::Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        if let Ok(idx) = part.parse::<usize>() {
            let arr = cur
                .as_array_mut()
                .ok_or_else(|| Error::Config(format!("`{key}`: `{part}` indexes a non-array")))?;
            let slot = arr
                .get_mut(idx)
                .ok_or_else(|| Error::Config(format!("`{key}`: index {idx} out of range")))?;
            if last {
                *slot = val;
                return Ok(());
            }
            cur = slot;
        } else {
            // scalars such as "zero" are replaced by the object being built
            if !cur.is_object() && !cur.is_array() {
                *cur = serde_json::Value::Object(Default::default());
            }
            let obj = cur
                .as_object_mut()
                .ok_or_else(|| Error::Config(format!("`{key}`: `{part}` is not inside an object")))?;
            if last {
                obj.insert(part.to_string(), val);
                return Ok(());
            }
            cur = obj.entry(part.to_string()).or_insert(serde_json::Value::Null);
        }
    }
    Ok(())
}

#[derive(Debug)]
pub struct SweepRun {
    pub variation: Variation,
    pub result: Result<(ModelConfig, SimulationTrace, AuditReport)>,
}

/// Runs every variation of `base` independently and in parallel; failures
/// are reported per run.
pub fn sweep(base: &serde_json::Value, base_dir: &Path, variations: &[Variation]) -> Vec<SweepRun> {
    variations
        .par_iter()
        .map(|var| {
            let result = (|| {
                let value = var.apply(base)?;
                let config = ModelConfig::from_value(value, base_dir)?;
                let model = config.build()?;
                let trace = simulate(&model.system, &model.simulation)?;
                let audit = audit_energy_balance(&trace, &model.system)?;
                Ok((config, trace, audit))
            })();
            SweepRun { variation: var.clone(), result }
        })
        .collect()
}
