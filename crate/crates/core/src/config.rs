//! JSON model configuration: geometry, partition, material, damping,
//! simulation settings and representation in one file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::report::read_matrix_csv;
use crate::sim::{InitialState, InputSpec, SimulationConfig, DEFAULT_SOLVER_TOL};
use crate::triplet::{build_staggered_1d, build_staggered_2d, BoundaryLabel, DiscreteTriplet, Edge, Partition, Segment};
use crate::wave::{
    assemble_impedance_system, assemble_scattering_system, DampingSpec, HamiltonianOperator, MaterialField,
    Representation, WaveBoundarySystem,
};

pub const DEFAULT_T_END: f64 = 1.0;
/// Default `dt` as a fraction of the shortest crossing time of one cell.
pub const DEFAULT_CFL_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub dim: usize,
    #[serde(default)]
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SegmentSpec {
    Whole(Edge),
    Range { edge: Edge, from: f64, to: f64 },
}

impl SegmentSpec {
    fn to_segment(&self, label: BoundaryLabel) -> Result<Segment> {
        match *self {
            SegmentSpec::Whole(edge) => Ok(Segment::whole(edge, label)),
            SegmentSpec::Range { edge, from, to } => {
                if !(0.0..=1.0).contains(&from) || !(0.0..=1.0).contains(&to) || from >= to {
                    return Err(Error::Partition(format!(
                        "segment [{from}, {to}] on {edge} must satisfy 0 <= from < to <= 1"
                    )));
                }
                Ok(Segment { edge, from, to, label })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    #[serde(default)]
    pub gamma0: Vec<SegmentSpec>,
    #[serde(default)]
    pub gamma1: Vec<SegmentSpec>,
    #[serde(default)]
    pub gamma2: Vec<SegmentSpec>,
}

impl PartitionConfig {
    pub fn to_partition(&self) -> Result<Partition> {
        let mut segments = Vec::new();
        for (label, list) in [
            (BoundaryLabel::Gamma0, &self.gamma0),
            (BoundaryLabel::Gamma1, &self.gamma1),
            (BoundaryLabel::Gamma2, &self.gamma2),
        ] {
            for s in list {
                segments.push(s.to_segment(label)?);
            }
        }
        Ok(Partition { segments })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    List(Vec<f64>),
}

impl FieldSpec {
    fn expand(&self, n: usize, name: &str) -> Result<Vec<f64>> {
        match self {
            FieldSpec::Constant(v) => Ok(vec![*v; n]),
            FieldSpec::List(v) if v.len() == n => Ok(v.clone()),
            FieldSpec::List(v) => Err(Error::Material(format!(
                "{name} has {} values, expected {n}",
                v.len()
            ))),
        }
    }

    fn min(&self) -> f64 {
        match self {
            FieldSpec::Constant(v) => *v,
            FieldSpec::List(v) => v.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Constant(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    #[serde(default)]
    pub rho: FieldSpec,
    #[serde(default)]
    pub t: FieldSpec,
    /// Positivity floor; defaults to the smallest value given.
    #[serde(default)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MatrixSpec {
    #[default]
    Zero,
    /// `s·I`.
    Scalar(f64),
    /// 2×2 blocks `[[0, ω], [-ω, 0]]` down the diagonal.
    Skew(f64),
    /// Dense CSV, relative paths resolved against the config file.
    File(PathBuf),
    Matrix(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn resolve(&mut self, base_dir: &Path) {
        if let MatrixSpec::File(p) = self {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
    }

    /// `None` for `Zero`.
    pub fn to_matrix(&self, n: usize) -> Result<Option<DenseMatrix>> {
        Ok(match self {
            MatrixSpec::Zero => None,
            MatrixSpec::Scalar(s) => Some(DenseMatrix::identity(n, n) * *s),
            MatrixSpec::Skew(w) => {
                let mut m = DenseMatrix::zeros(n, n);
                for k in (0..n.saturating_sub(1)).step_by(2) {
                    m[(k, k + 1)] = *w;
                    m[(k + 1, k)] = -*w;
                }
                Some(m)
            }
            MatrixSpec::File(p) => Some(read_matrix_csv(p)?),
            MatrixSpec::Matrix(rows) => {
                let r = rows.len();
                let c = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|row| row.len() != c) {
                    return Err(Error::Damping("matrix rows have different lengths".into()));
                }
                Some(DenseMatrix::from_fn(r, c, |i, j| rows[i][j]))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DampingConfig {
    #[serde(default)]
    pub qi: MatrixSpec,
    #[serde(default)]
    pub qb: MatrixSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub inputs: InputSpec,
    #[serde(default)]
    pub initial_state: InitialState,
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default)]
    pub linear_solver_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub geometry: GeometryConfig,
    pub partition: PartitionConfig,
    #[serde(default)]
    pub material: MaterialConfig,
    #[serde(default)]
    pub damping: DampingConfig,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub representation: Representation,
}

/// Everything assembled from a validated config.
#[derive(Debug, Clone)]
pub struct Model {
    pub triplet: DiscreteTriplet,
    pub material: MaterialField,
    pub damping: DampingSpec,
    pub system: WaveBoundarySystem,
    pub simulation: SimulationConfig,
}

impl Model {
    pub fn hamiltonian(&self) -> Result<HamiltonianOperator> {
        HamiltonianOperator::new(&self.triplet, &self.material)
    }
}

/// Reads and validates a config file, applying defaults.
pub fn parse_config(path: &Path) -> Result<ModelConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    ModelConfig::from_value(value, &dir)
}

impl ModelConfig {
    pub fn from_value(value: serde_json::Value, base_dir: &Path) -> Result<Self> {
        let mut cfg: ModelConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.damping.qi.resolve(base_dir);
        cfg.damping.qb.resolve(base_dir);
        cfg.apply_defaults()?;
        cfg.build()?;
        Ok(cfg)
    }

    pub fn from_str(text: &str, base_dir: &Path) -> Result<Self> {
        Self::from_value(serde_json::from_str(text)?, base_dir)
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    fn apply_defaults(&mut self) -> Result<()> {
        let g = &mut self.geometry;
        if g.dim != 1 && g.dim != 2 {
            return Err(Error::Geometry(format!("dim must be 1 or 2, got {}", g.dim)));
        }
        if g.extents.is_empty() {
            g.extents = vec![1.0; g.dim];
        }
        if g.extents.len() != g.dim || g.cells.len() != g.dim {
            return Err(Error::Geometry(format!(
                "{}-D geometry needs {} extents and cell counts",
                g.dim, g.dim
            )));
        }
        if self.material.delta.is_none() {
            let floor = self.material.rho.min().min(self.material.t.min());
            self.material.delta = Some(if floor > 0.0 { floor } else { 1.0 });
        }
        let sim = &mut self.simulation;
        sim.t_end.get_or_insert(DEFAULT_T_END);
        sim.linear_solver_tol.get_or_insert(DEFAULT_SOLVER_TOL);
        if sim.dt.is_none() {
            let h = g
                .extents
                .iter()
                .zip(&g.cells)
                .map(|(l, &n)| l / n.max(1) as f64)
                .fold(f64::INFINITY, f64::min);
            let rho_min = self.material.rho.min();
            let t_max = match &self.material.t {
                FieldSpec::Constant(v) => *v,
                FieldSpec::List(v) => v.iter().copied().fold(0.0, f64::max),
            };
            let c = (t_max / rho_min).sqrt();
            if c.is_finite() && c > 0.0 {
                sim.dt = Some(DEFAULT_CFL_FRACTION * h / c);
            }
        }
        Ok(())
    }

    pub fn triplet(&self) -> Result<DiscreteTriplet> {
        let g = &self.geometry;
        let partition = self.partition.to_partition()?;
        match g.dim {
            1 => build_staggered_1d(g.cells[0], g.extents[0], &partition),
            2 => build_staggered_2d(g.cells[0], g.cells[1], g.extents[0], g.extents[1], &partition),
            d => Err(Error::Geometry(format!("dim must be 1 or 2, got {d}"))),
        }
    }

    pub fn simulation_config(&self) -> Result<SimulationConfig> {
        let s = &self.simulation;
        let cfg = SimulationConfig {
            dt: s.dt.ok_or_else(|| Error::Config("dt could not be determined".into()))?,
            t_end: s.t_end.unwrap_or(DEFAULT_T_END),
            inputs: s.inputs.clone(),
            initial_state: s.initial_state.clone(),
            snapshot_every: s.snapshot_every,
            linear_solver_tol: s.linear_solver_tol.unwrap_or(DEFAULT_SOLVER_TOL),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn build(&self) -> Result<Model> {
        let triplet = self.triplet()?;
        let m = &self.material;
        let material = MaterialField::new(
            m.rho.expand(triplet.n_cells(), "rho")?,
            m.t.expand(triplet.n_faces(), "T")?,
            m.delta.unwrap_or(1.0),
        )?;
        let m1 = triplet.dofs_with(BoundaryLabel::Gamma1).len();
        let damping = DampingSpec {
            qi: self.damping.qi.to_matrix(triplet.n_cells())?,
            qb: self.damping.qb.to_matrix(m1)?,
        };
        let impedance = assemble_impedance_system(&triplet, &material, &damping)?;
        let system = match self.representation {
            Representation::Impedance => impedance,
            Representation::Scattering => assemble_scattering_system(&impedance)?,
        };
        let simulation = self.simulation_config()?;
        Ok(Model { triplet, material, damping, system, simulation })
    }
}
