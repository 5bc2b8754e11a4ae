//! Staggered discretization of `(div, grad)` with discrete trace maps.
//!
//! Scalar unknowns (momentum, velocity) live at cell centres and vector
//! unknowns (strain, stress) on cell faces. With the volume weights
//! `M_cell`, `M_face` and the boundary quadrature `M_bdry`, the operators
//! satisfy
//!
//! ```text
//! (Div f)ᵀ M_cell g + fᵀ M_face (Grad g) = (Tperp f)ᵀ M_bdry (T0 g)
//! ```
//!
//! for all `f`, `g`. Faces on the Dirichlet part `Γ0` get a half-cell
//! gradient against a zero boundary value, so they drop out of the boundary
//! pairing; faces on `Γ1 ∪ Γ2` carry an explicit boundary degree of freedom
//! and a zero gradient row.

use std::fmt;

use nalgebra::{Cholesky, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::certify::BoundaryConditionSpec;
use crate::error::{Error, Result};
use crate::numerics::{nullspace, DenseMatrix, RANK_TOL};
use crate::wave::HamiltonianOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryLabel {
    /// Velocity held at zero.
    #[serde(rename = "gamma0")]
    Gamma0,
    /// Damped: `ν·σ + Qb v = 0`.
    #[serde(rename = "gamma1")]
    Gamma1,
    /// Controlled: stress input, velocity output.
    #[serde(rename = "gamma2")]
    Gamma2,
}

impl fmt::Display for BoundaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryLabel::Gamma0 => "gamma0",
            BoundaryLabel::Gamma1 => "gamma1",
            BoundaryLabel::Gamma2 => "gamma2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Edge::Left => "left",
            Edge::Right => "right",
            Edge::Bottom => "bottom",
            Edge::Top => "top",
        })
    }
}

/// A labelled piece of one edge, in normalized arc length `[from, to]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub edge: Edge,
    pub from: f64,
    pub to: f64,
    pub label: BoundaryLabel,
}

impl Segment {
    pub fn whole(edge: Edge, label: BoundaryLabel) -> Self {
        Segment {
            edge,
            from: 0.0,
            to: 1.0,
            label,
        }
    }

    /// Half-open in the normalized edge coordinate, closed at the far end.
    fn covers(&self, edge: Edge, s: f64) -> bool {
        self.edge == edge && self.from <= s && (s < self.to || (s == self.to && self.to >= 1.0))
    }
}

/// Assignment of boundary labels to edge segments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Partition {
    pub segments: Vec<Segment>,
}

impl Partition {
    pub fn ends(left: BoundaryLabel, right: BoundaryLabel) -> Self {
        Partition {
            segments: vec![Segment::whole(Edge::Left, left), Segment::whole(Edge::Right, right)],
        }
    }

    pub fn edges(left: BoundaryLabel, right: BoundaryLabel, bottom: BoundaryLabel, top: BoundaryLabel) -> Self {
        Partition {
            segments: vec![
                Segment::whole(Edge::Left, left),
                Segment::whole(Edge::Right, right),
                Segment::whole(Edge::Bottom, bottom),
                Segment::whole(Edge::Top, top),
            ],
        }
    }

    pub fn uniform(dim: usize, label: BoundaryLabel) -> Self {
        if dim == 1 {
            Self::ends(label, label)
        } else {
            Self::edges(label, label, label, label)
        }
    }

    /// The unique label covering position `s` of `edge`.
    fn label_at(&self, edge: Edge, s: f64) -> Result<BoundaryLabel> {
        let mut hits = self.segments.iter().filter(|seg| seg.covers(edge, s));
        let first = hits
            .next()
            .ok_or_else(|| Error::Partition(format!("boundary face on {edge} at s = {s} is unlabeled")))?;
        if let Some(second) = hits.next() {
            return Err(Error::Partition(format!(
                "boundary face on {edge} at s = {s} is labeled twice ({} and {})",
                first.label, second.label
            )));
        }
        Ok(first.label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFace {
    pub face: usize,
    pub cell: usize,
    pub edge: Edge,
    pub label: BoundaryLabel,
    /// Sign of the outward normal relative to the face orientation.
    pub normal: f64,
    /// Surface measure carried by the face.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteGeometry {
    pub dim: usize,
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
    pub spacings: Vec<f64>,
    /// Every boundary face: left, right, then bottom, top; along each edge
    /// in increasing coordinate.
    pub boundary_faces: Vec<BoundaryFace>,
}

impl DiscreteGeometry {
    pub fn n_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacings.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn boundary_measure(&self) -> f64 {
        self.boundary_faces.iter().map(|b| b.weight).sum()
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteTriplet {
    pub geometry: DiscreteGeometry,
    pub div: DenseMatrix,
    pub grad: DenseMatrix,
    pub m_cell: DVector<f64>,
    pub m_face: DVector<f64>,
    pub t0: DenseMatrix,
    pub tperp: DenseMatrix,
    pub m_bdry: DVector<f64>,
    /// Index into `geometry.boundary_faces` of every retained boundary dof.
    pub boundary_dofs: Vec<usize>,
}

impl DiscreteTriplet {
    pub fn n_cells(&self) -> usize {
        self.div.nrows()
    }

    pub fn n_faces(&self) -> usize {
        self.div.ncols()
    }

    pub fn state_dim(&self) -> usize {
        self.n_cells() + self.n_faces()
    }

    /// Number of boundary dofs on `Γ1 ∪ Γ2`.
    pub fn boundary_dim(&self) -> usize {
        self.boundary_dofs.len()
    }

    pub fn dof_face(&self, dof: usize) -> &BoundaryFace {
        &self.geometry.boundary_faces[self.boundary_dofs[dof]]
    }

    /// Boundary dof indices carrying `label`.
    pub fn dofs_with(&self, label: BoundaryLabel) -> Vec<usize> {
        (0..self.boundary_dim())
            .filter(|&d| self.dof_face(d).label == label)
            .collect()
    }

    /// Faces that are not boundary dofs: interior faces and `Γ0` faces.
    pub fn retained_faces(&self) -> Vec<usize> {
        let mut skip = vec![false; self.n_faces()];
        for d in 0..self.boundary_dim() {
            skip[self.dof_face(d).face] = true;
        }
        (0..self.n_faces()).filter(|&f| !skip[f]).collect()
    }

    /// Left minus right side of the discrete Green identity.
    pub fn green_defect(&self, f: &DVector<f64>, g: &DVector<f64>) -> f64 {
        let volume = (&self.div * f).dot(&self.m_cell.component_mul(g))
            + f.dot(&self.m_face.component_mul(&(&self.grad * g)));
        let boundary = (&self.tperp * f).dot(&self.m_bdry.component_mul(&(&self.t0 * g)));
        volume - boundary
    }

    /// `M_cell Div + Gradᵀ M_face` restricted to faces with zero normal trace.
    pub fn duality_defect(&self) -> DenseMatrix {
        let faces = self.retained_faces();
        let mut out = DenseMatrix::zeros(self.n_cells(), faces.len());
        for (col, &face) in faces.iter().enumerate() {
            for cell in 0..self.n_cells() {
                out[(cell, col)] = self.m_cell[cell] * self.div[(cell, face)]
                    + self.grad[(face, cell)] * self.m_face[face];
            }
        }
        out
    }

    /// Velocity and stress boundary maps on the full state `(g, f)`, scaled by
    /// `√M_bdry` so the boundary space carries the Euclidean inner product.
    pub fn boundary_maps(&self, h: &HamiltonianOperator) -> (DenseMatrix, DenseMatrix) {
        let (nc, nf, m) = (self.n_cells(), self.n_faces(), self.boundary_dim());
        let n = nc + nf;
        let mut b0 = DenseMatrix::zeros(m, n);
        let mut bperp = DenseMatrix::zeros(m, n);
        for d in 0..m {
            let s = self.m_bdry[d].sqrt();
            for c in 0..nc {
                b0[(d, c)] = s * self.t0[(d, c)] * h.cell_scale[c];
            }
            for f in 0..nf {
                bperp[(d, nc + f)] = s * self.tperp[(d, f)] * h.face_scale[f];
            }
        }
        (b0, bperp)
    }

    /// `S 𝓗` with `S = [0 Div; Grad 0]` on the full state.
    pub fn full_generator(&self, h: &HamiltonianOperator) -> DenseMatrix {
        let (nc, nf) = (self.n_cells(), self.n_faces());
        let mut a = DenseMatrix::zeros(nc + nf, nc + nf);
        for c in 0..nc {
            for f in 0..nf {
                a[(c, nc + f)] = self.div[(c, f)] * h.face_scale[f];
                a[(nc + f, c)] = self.grad[(f, c)] * h.cell_scale[c];
            }
        }
        a
    }
}

fn validate_extent(len: f64, cells: usize, axis: &str) -> Result<f64> {
    if cells == 0 {
        return Err(Error::Geometry(format!("cell count along {axis} must be at least 1")));
    }
    if !(len.is_finite() && len > 0.0) {
        return Err(Error::Geometry(format!("extent along {axis} must be positive, got {len}")));
    }
    Ok(len / cells as f64)
}

/// Bookkeeping shared by the 1-D and 2-D builders.
struct Assembly {
    div: DenseMatrix,
    grad: DenseMatrix,
    m_face: DVector<f64>,
    boundary: Vec<BoundaryFace>,
}

impl Assembly {
    /// Closes boundary face `face` adjacent to `cell`. `inv_h` is the inverse
    /// spacing normal to the face and `half_volume` the face weight.
    fn close(&mut self, mut bf: BoundaryFace, inv_h: f64, half_volume: f64) {
        self.m_face[bf.face] = half_volume;
        if bf.label == BoundaryLabel::Gamma0 {
            // (v_b - v_adj) / (h/2) along the face orientation with v_b = 0
            self.grad[(bf.face, bf.cell)] = -bf.normal * (2.0 * inv_h);
        }
        bf.normal = bf.normal.signum();
        self.boundary.push(bf);
    }

    fn finish(self, geometry_base: DiscreteGeometry, m_cell: DVector<f64>) -> DiscreteTriplet {
        let mut geometry = geometry_base;
        geometry.boundary_faces = self.boundary;
        let n_cells = self.div.nrows();
        let n_faces = self.div.ncols();
        let dofs: Vec<usize> = geometry
            .boundary_faces
            .iter()
            .enumerate()
            .filter(|(_, b)| b.label != BoundaryLabel::Gamma0)
            .map(|(i, _)| i)
            .collect();
        let m = dofs.len();
        let mut t0 = DenseMatrix::zeros(m, n_cells);
        let mut tperp = DenseMatrix::zeros(m, n_faces);
        let mut m_bdry = DVector::zeros(m);
        for (d, &i) in dofs.iter().enumerate() {
            let b = &geometry.boundary_faces[i];
            t0[(d, b.cell)] = 1.0;
            tperp[(d, b.face)] = b.normal;
            m_bdry[d] = b.weight;
        }
        DiscreteTriplet {
            geometry,
            div: self.div,
            grad: self.grad,
            m_cell,
            m_face: self.m_face,
            t0,
            tperp,
            m_bdry,
            boundary_dofs: dofs,
        }
    }
}

/// Staggered grid on `[0, length]` with `n` cells and `n + 1` faces.
pub fn build_staggered_1d(n: usize, length: f64, partition: &Partition) -> Result<DiscreteTriplet> {
    let h = validate_extent(length, n, "x")?;
    if let Some(seg) = partition.segments.iter().find(|s| !matches!(s.edge, Edge::Left | Edge::Right)) {
        return Err(Error::Partition(format!("edge {} does not exist in 1-D", seg.edge)));
    }
    let left = partition.label_at(Edge::Left, 0.5)?;
    let right = partition.label_at(Edge::Right, 0.5)?;

    let inv_h = 1.0 / h;
    let mut asm = Assembly {
        div: DenseMatrix::zeros(n, n + 1),
        grad: DenseMatrix::zeros(n + 1, n),
        m_face: DVector::zeros(n + 1),
        boundary: Vec::with_capacity(2),
    };
    for c in 0..n {
        asm.div[(c, c)] = -inv_h;
        asm.div[(c, c + 1)] = inv_h;
    }
    for f in 1..n {
        asm.grad[(f, f)] = inv_h;
        asm.grad[(f, f - 1)] = -inv_h;
        asm.m_face[f] = h;
    }
    let half = 0.5 * h;
    asm.close(
        BoundaryFace { face: 0, cell: 0, edge: Edge::Left, label: left, normal: -1.0, weight: 1.0 },
        inv_h,
        half,
    );
    asm.close(
        BoundaryFace { face: n, cell: n - 1, edge: Edge::Right, label: right, normal: 1.0, weight: 1.0 },
        inv_h,
        half,
    );
    let base = DiscreteGeometry {
        dim: 1,
        extents: vec![length],
        cells: vec![n],
        spacings: vec![h],
        boundary_faces: Vec::new(),
    };
    Ok(asm.finish(base, DVector::from_element(n, h)))
}

/// MAC grid on `[0, lx] × [0, ly]`: x-faces `(nx+1)·ny` first, then y-faces
/// `nx·(ny+1)`; cells and faces are numbered with `x` fastest.
pub fn build_staggered_2d(
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    partition: &Partition,
) -> Result<DiscreteTriplet> {
    let hx = validate_extent(lx, nx, "x")?;
    let hy = validate_extent(ly, ny, "y")?;
    let n_cells = nx * ny;
    let n_xf = (nx + 1) * ny;
    let n_faces = n_xf + nx * (ny + 1);
    let cell = |i: usize, j: usize| i + nx * j;
    let xface = |i: usize, j: usize| i + (nx + 1) * j;
    let yface = |i: usize, j: usize| n_xf + i + nx * j;

    let (inv_hx, inv_hy) = (1.0 / hx, 1.0 / hy);
    let vol = hx * hy;
    let half = 0.5 * vol;

    let mut asm = Assembly {
        div: DenseMatrix::zeros(n_cells, n_faces),
        grad: DenseMatrix::zeros(n_faces, n_cells),
        m_face: DVector::zeros(n_faces),
        boundary: Vec::with_capacity(2 * (nx + ny)),
    };
    for j in 0..ny {
        for i in 0..nx {
            let c = cell(i, j);
            asm.div[(c, xface(i, j))] = -inv_hx;
            asm.div[(c, xface(i + 1, j))] = inv_hx;
            asm.div[(c, yface(i, j))] = -inv_hy;
            asm.div[(c, yface(i, j + 1))] = inv_hy;
        }
    }
    for j in 0..ny {
        for i in 1..nx {
            let f = xface(i, j);
            asm.grad[(f, cell(i, j))] = inv_hx;
            asm.grad[(f, cell(i - 1, j))] = -inv_hx;
            asm.m_face[f] = vol;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let f = yface(i, j);
            asm.grad[(f, cell(i, j))] = inv_hy;
            asm.grad[(f, cell(i, j - 1))] = -inv_hy;
            asm.m_face[f] = vol;
        }
    }

    for edge in Edge::ALL {
        let count = match edge {
            Edge::Left | Edge::Right => ny,
            Edge::Bottom | Edge::Top => nx,
        };
        for k in 0..count {
            let s = (k as f64 + 0.5) / count as f64;
            let label = partition.label_at(edge, s)?;
            let (face, adj, normal, weight, inv_h) = match edge {
                Edge::Left => (xface(0, k), cell(0, k), -1.0, hy, inv_hx),
                Edge::Right => (xface(nx, k), cell(nx - 1, k), 1.0, hy, inv_hx),
                Edge::Bottom => (yface(k, 0), cell(k, 0), -1.0, hx, inv_hy),
                Edge::Top => (yface(k, ny), cell(k, ny - 1), 1.0, hx, inv_hy),
            };
            asm.close(
                BoundaryFace { face, cell: adj, edge, label, normal, weight },
                inv_h,
                half,
            );
        }
    }

    let base = DiscreteGeometry {
        dim: 2,
        extents: vec![lx, ly],
        cells: vec![nx, ny],
        spacings: vec![hx, hy],
        boundary_faces: Vec::new(),
    };
    Ok(asm.finish(base, DVector::from_element(n_cells, vol)))
}

/// Largest normalized Green-identity defect `|lhs - rhs| / (1 + |f||g|)`
/// over `trials` Gaussian samples.
pub fn verify_green_identity(triplet: &DiscreteTriplet, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let f = DVector::from_fn(triplet.n_faces(), |_, _| StandardNormal.sample(&mut rng));
        let g = DVector::from_fn(triplet.n_cells(), |_, _| StandardNormal.sample(&mut rng));
        let defect = triplet.green_defect(&f, &g).abs() / (1.0 + f.norm() * g.norm());
        worst = worst.max(defect);
    }
    worst
}

#[derive(Debug, Clone)]
pub struct RestrictedGenerator {
    /// Representation of `S𝓗` on the constrained subspace.
    pub matrix: DenseMatrix,
    /// Columns orthonormal in the energy inner product spanning the subspace.
    pub basis: DenseMatrix,
}

/// `S𝓗` restricted (Galerkin, in the energy inner product) to
/// `{x : W1 B0 x + W2 B⊥ x = 0}`.
pub fn restrict_generator(
    triplet: &DiscreteTriplet,
    h: &HamiltonianOperator,
    spec: &BoundaryConditionSpec,
) -> Result<RestrictedGenerator> {
    let m = triplet.boundary_dim();
    if spec.boundary_dim() != m {
        return Err(Error::DimensionMismatch(format!(
            "spec expects {} boundary dofs, triplet has {m}",
            spec.boundary_dim()
        )));
    }
    if h.cell_scale.len() != triplet.n_cells() || h.face_scale.len() != triplet.n_faces() {
        return Err(Error::DimensionMismatch(
            "Hamiltonian does not match the triplet".into(),
        ));
    }
    let n = triplet.state_dim();
    let (b0, bperp) = triplet.boundary_maps(h);
    let constraint = spec.w1() * b0 + spec.w2() * bperp;
    let null = nullspace(&constraint, RANK_TOL);
    if null.ncols() == 0 {
        log::warn!("boundary conditions admit only the zero state; restricted generator is empty");
        return Ok(RestrictedGenerator {
            matrix: DenseMatrix::zeros(0, 0),
            basis: DenseMatrix::zeros(n, 0),
        });
    }
    let weight = h.weight();
    let wn = DenseMatrix::from_fn(n, null.ncols(), |i, j| weight[i] * null[(i, j)]);
    let gram = null.transpose() * &wn;
    let gram = (&gram + gram.transpose()) * 0.5;
    let chol = Cholesky::new(gram).ok_or(Error::IndefiniteWeight)?;
    // Z = N L^{-T}
    let z = chol
        .l()
        .solve_lower_triangular(&null.transpose())
        .ok_or(Error::IndefiniteWeight)?
        .transpose();
    let sh = triplet.full_generator(h);
    let wz = DenseMatrix::from_fn(n, z.ncols(), |i, j| weight[i] * z[(i, j)]);
    let matrix = wz.transpose() * sh * &z;
    Ok(RestrictedGenerator { matrix, basis: z })
}
