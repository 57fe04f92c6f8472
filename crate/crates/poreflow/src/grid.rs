//! MAC staggered-grid discretization of the four flow models.
//!
//! Pressure unknowns sit at the centers of non-solid voxels, velocity
//! unknowns on faces shared by two non-solid voxels. Under a pressure drop
//! the inlet and outlet planes carry velocity unknowns too; the Dirichlet
//! pressures enter the right-hand side through the one-sided gradient, side
//! walls are no-slip, and the normal derivative of every velocity component
//! vanishes at inlet and outlet. Periodic runs wrap all three axes and drive
//! the flow with a unit body force along the flow axis instead.
//!
//! The saddle system is
//!   A u + Bᵀ p = f,   B u = 0
//! with A = −Λ (Stokes), −Λ + K⁻¹ (Stokes-Brinkman, Brinkman), K⁻¹ (Darcy).
//! B is the scaled negative divergence and Bᵀ its exact transpose, so the
//! adjointness ⟨Bv,p⟩ = ⟨v,Bᵀp⟩ holds to machine precision by construction.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::krylov::{CsrBuilder, CsrMatrix};
use crate::voxel::{
    correlation_permeability, Axis, VoxelClass, VoxelImage, MICRODARCY_M2, SOLID,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Stokes,
    StokesBrinkman,
    Brinkman,
    Darcy,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Stokes => "stokes",
            Model::StokesBrinkman => "stokes-brinkman",
            Model::Brinkman => "brinkman",
            Model::Darcy => "darcy",
        })
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stokes" => Ok(Model::Stokes),
            "stokes-brinkman" => Ok(Model::StokesBrinkman),
            "brinkman" => Ok(Model::Brinkman),
            "darcy" => Ok(Model::Darcy),
            other => Err(Error::Config(format!(
                "unknown model '{other}' (expected stokes, stokes-brinkman, brinkman or darcy)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryCondition {
    PressureDrop,
    Periodic,
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryCondition::PressureDrop => "pressure-drop",
            BoundaryCondition::Periodic => "periodic",
        })
    }
}

impl FromStr for BoundaryCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pressure-drop" => Ok(BoundaryCondition::PressureDrop),
            "periodic" => Ok(BoundaryCondition::Periodic),
            other => Err(Error::Config(format!(
                "unknown boundary condition '{other}' (expected pressure-drop or periodic)"
            ))),
        }
    }
}

/// What a velocity face sees on one of its two sides.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceCell {
    Cell(u32),
    InletGhost,
    OutletGhost,
}

/// One velocity unknown: the face normal axis, the face lattice position
/// (cell coordinates, with `pos[axis]` counting face planes) and the two
/// adjacent pressure cells.
#[derive(Clone, Copy, Debug)]
pub struct FaceDof {
    pub axis: Axis,
    pub pos: [u32; 3],
    pub lo: FaceCell,
    pub hi: FaceCell,
}

const INACTIVE: u32 = u32::MAX;

/// Neighbor slot codes for the velocity Laplacian stencil. Non-negative
/// values are velocity DOF indices; the sentinels encode the boundary
/// closures worked into the diagonal.
const NB_WALL: i32 = -1; // u = 0 at distance h (solid face or wall plane)
const NB_MIRROR: i32 = -2; // no-slip wall at distance h/2, odd mirror
const NB_NEUMANN: i32 = -3; // inlet/outlet, even mirror, term drops

pub struct StaggeredGrid {
    dims: [usize; 3],
    h: f64,
    flow_axis: Axis,
    bc: BoundaryCondition,
    /// Per voxel: dense pressure cell id or INACTIVE.
    cell_index: Vec<u32>,
    /// Per pressure cell: linear voxel index, in voxel scan order.
    cells: Vec<u32>,
    /// Per axis, per face lattice position: velocity DOF id or INACTIVE.
    face_index: [Vec<u32>; 3],
    face_dims: [[usize; 3]; 3],
    faces: Vec<FaceDof>,
    neighbor_codes: Vec<[i32; 6]>,
}

impl StaggeredGrid {
    pub fn build(image: &VoxelImage, flow_axis: Axis, bc: BoundaryCondition) -> Result<Self> {
        let dims = image.dims();
        if bc == BoundaryCondition::Periodic && dims.iter().any(|&d| d < 2) {
            return Err(Error::Domain(
                "periodic boundary conditions need at least two voxels per axis".into(),
            ));
        }

        let mut cell_index = vec![INACTIVE; image.len()];
        let mut cells = Vec::new();
        for (linear, &v) in image.data().iter().enumerate() {
            if v != SOLID {
                cell_index[linear] = cells.len() as u32;
                cells.push(linear as u32);
            }
        }
        if cells.is_empty() {
            return Err(Error::Domain("image has no non-solid voxels".into()));
        }

        let periodic = bc == BoundaryCondition::Periodic;
        let d = flow_axis.index();
        let mut face_dims = [[0usize; 3]; 3];
        for a in 0..3 {
            face_dims[a] = dims;
            if !periodic {
                face_dims[a][a] += 1;
            }
        }

        let cell_at = |x: usize, y: usize, z: usize| -> u32 {
            cell_index[x + dims[0] * (y + dims[1] * z)]
        };

        let mut face_index: [Vec<u32>; 3] = [
            vec![INACTIVE; face_dims[0].iter().product()],
            vec![INACTIVE; face_dims[1].iter().product()],
            vec![INACTIVE; face_dims[2].iter().product()],
        ];
        let mut faces: Vec<FaceDof> = Vec::new();

        for a in 0..3 {
            let fd = face_dims[a];
            for k in 0..fd[2] {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        let q = [i, j, k];
                        // Cell coordinates on each side of the face.
                        let hi_c = q;
                        let mut lo_c = q;
                        let (lo, hi) = if periodic {
                            lo_c[a] = (q[a] + dims[a] - 1) % dims[a];
                            let lo = cell_at(lo_c[0], lo_c[1], lo_c[2]);
                            let hi = cell_at(hi_c[0], hi_c[1], hi_c[2]);
                            if lo == INACTIVE || hi == INACTIVE {
                                continue;
                            }
                            (FaceCell::Cell(lo), FaceCell::Cell(hi))
                        } else if q[a] == 0 {
                            if a != d {
                                continue; // face on a no-slip wall
                            }
                            let hi = cell_at(hi_c[0], hi_c[1], hi_c[2]);
                            if hi == INACTIVE {
                                continue;
                            }
                            (FaceCell::InletGhost, FaceCell::Cell(hi))
                        } else if q[a] == dims[a] {
                            if a != d {
                                continue;
                            }
                            lo_c[a] = q[a] - 1;
                            let lo = cell_at(lo_c[0], lo_c[1], lo_c[2]);
                            if lo == INACTIVE {
                                continue;
                            }
                            (FaceCell::Cell(lo), FaceCell::OutletGhost)
                        } else {
                            lo_c[a] = q[a] - 1;
                            let lo = cell_at(lo_c[0], lo_c[1], lo_c[2]);
                            let hi = cell_at(hi_c[0], hi_c[1], hi_c[2]);
                            if lo == INACTIVE || hi == INACTIVE {
                                continue;
                            }
                            (FaceCell::Cell(lo), FaceCell::Cell(hi))
                        };
                        face_index[a][i + fd[0] * (j + fd[1] * k)] = faces.len() as u32;
                        faces.push(FaceDof {
                            axis: Axis::from_index(a),
                            pos: [i as u32, j as u32, k as u32],
                            lo,
                            hi,
                        });
                    }
                }
            }
        }

        // A stencil neighbor that exists on the lattice but carries no DOF is
        // blocked by solid. If either cell flanking that face is open, the
        // face lies on the staircase surface and the velocity vanishes right
        // there, at distance h. Only when both flanks are solid does the
        // no-slip plane cross halfway in between, which the odd mirror
        // encodes. Ghost cells beyond the inlet and outlet count as open.
        let blocked_face_code = |a: usize, q: [usize; 3]| -> i32 {
            let hi_solid = q[a] < dims[a]
                && cell_at(q[0], q[1], q[2]) == INACTIVE;
            let mut lo = q;
            let lo_solid = if periodic {
                lo[a] = (q[a] + dims[a] - 1) % dims[a];
                cell_at(lo[0], lo[1], lo[2]) == INACTIVE
            } else if q[a] > 0 {
                lo[a] = q[a] - 1;
                cell_at(lo[0], lo[1], lo[2]) == INACTIVE
            } else {
                false
            };
            if hi_solid && lo_solid {
                NB_MIRROR
            } else {
                NB_WALL
            }
        };

        // Second pass: classify the six stencil neighbors of every face.
        let mut neighbor_codes = vec![[0i32; 6]; faces.len()];
        for (dof, face) in faces.iter().enumerate() {
            let a = face.axis.index();
            let fd = face_dims[a];
            for b in 0..3 {
                for (si, step) in [-1i64, 1].into_iter().enumerate() {
                    let mut np = [
                        face.pos[0] as i64,
                        face.pos[1] as i64,
                        face.pos[2] as i64,
                    ];
                    np[b] += step;
                    let code = if periodic {
                        let n = fd[b] as i64;
                        np[b] = (np[b] + n) % n;
                        let nq = [np[0] as usize, np[1] as usize, np[2] as usize];
                        let idx = nq[0] + fd[0] * (nq[1] + fd[1] * nq[2]);
                        match face_index[a][idx] {
                            INACTIVE => blocked_face_code(a, nq),
                            f => f as i32,
                        }
                    } else if np[b] >= 0 && (np[b] as usize) < fd[b] {
                        let nq = [np[0] as usize, np[1] as usize, np[2] as usize];
                        let idx = nq[0] + fd[0] * (nq[1] + fd[1] * nq[2]);
                        match face_index[a][idx] {
                            INACTIVE => blocked_face_code(a, nq),
                            f => f as i32,
                        }
                    } else if b == a || b == d {
                        // Beyond the inlet or outlet plane: ∂u/∂n = 0.
                        NB_NEUMANN
                    } else {
                        // Across a no-slip side wall half a cell away.
                        NB_MIRROR
                    };
                    neighbor_codes[dof][2 * b + si] = code;
                }
            }
        }

        Ok(Self {
            dims,
            h: image.spacing(),
            flow_axis,
            bc,
            cell_index,
            cells,
            face_index,
            face_dims,
            faces,
            neighbor_codes,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn flow_axis(&self) -> Axis {
        self.flow_axis
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    /// Linear voxel index of each pressure cell, in cell id order.
    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    pub fn cell_of_voxel(&self, linear: usize) -> Option<u32> {
        match self.cell_index[linear] {
            INACTIVE => None,
            c => Some(c),
        }
    }

    pub fn faces(&self) -> &[FaceDof] {
        &self.faces
    }

    /// Velocity DOF at a face lattice position, if active.
    pub fn face_dof(&self, axis: Axis, pos: [usize; 3]) -> Option<u32> {
        let a = axis.index();
        let fd = self.face_dims[a];
        if pos[0] >= fd[0] || pos[1] >= fd[1] || pos[2] >= fd[2] {
            return None;
        }
        match self.face_index[a][pos[0] + fd[0] * (pos[1] + fd[1] * pos[2])] {
            INACTIVE => None,
            f => Some(f),
        }
    }

    /// True when all six stencil neighbors of the face are active DOFs.
    pub fn face_has_full_stencil(&self, dof: usize) -> bool {
        self.neighbor_codes[dof].iter().all(|&c| c >= 0)
    }

    /// Voxel coordinates of a pressure cell.
    pub fn cell_coords(&self, cell: usize) -> [usize; 3] {
        let linear = self.cells[cell] as usize;
        let x = linear % self.dims[0];
        let y = (linear / self.dims[0]) % self.dims[1];
        let z = linear / (self.dims[0] * self.dims[1]);
        [x, y, z]
    }

    /// out = B v: scaled negative divergence, pressure-cell sized.
    pub fn apply_b(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.n_faces(), "velocity vector length mismatch");
        assert_eq!(out.len(), self.n_cells(), "pressure output length mismatch");
        out.iter_mut().for_each(|x| *x = 0.0);
        let inv_h = 1.0 / self.h;
        for (i, face) in self.faces.iter().enumerate() {
            if let FaceCell::Cell(lo) = face.lo {
                out[lo as usize] -= v[i] * inv_h;
            }
            if let FaceCell::Cell(hi) = face.hi {
                out[hi as usize] += v[i] * inv_h;
            }
        }
    }

    /// out = Bᵀ p: scaled pressure gradient on faces. Ghost pressures are
    /// zero here; their known values live in the right-hand side.
    pub fn apply_bt(&self, p: &[f64], out: &mut [f64]) {
        assert_eq!(p.len(), self.n_cells(), "pressure vector length mismatch");
        assert_eq!(out.len(), self.n_faces(), "velocity output length mismatch");
        let inv_h = 1.0 / self.h;
        for (i, face) in self.faces.iter().enumerate() {
            let lo = match face.lo {
                FaceCell::Cell(c) => p[c as usize],
                _ => 0.0,
            };
            let hi = match face.hi {
                FaceCell::Cell(c) => p[c as usize],
                _ => 0.0,
            };
            out[i] = (hi - lo) * inv_h;
        }
    }
}

/// Inverse dimensionless permeability of one voxel class. `scale` is the
/// squared physical edge length L² of the image domain in m²; `k_stokes_mkda`
/// switches fluid voxels between true Stokes treatment (None → κ = 0) and
/// the fictitious-permeability perturbation used by Brinkman and Darcy.
fn cell_inverse_permeability(
    class: VoxelClass,
    scale: f64,
    k_stokes_mkda: Option<f64>,
) -> Result<f64> {
    match class {
        VoxelClass::Fluid => match k_stokes_mkda {
            None => Ok(0.0),
            Some(ks) => Ok(scale / (ks * MICRODARCY_M2)),
        },
        VoxelClass::Porous(phi) => {
            Ok(scale / (correlation_permeability(phi)? * MICRODARCY_M2))
        }
        VoxelClass::Solid => Err(Error::Contract(
            "inverse permeability queried for a solid voxel".into(),
        )),
    }
}

/// Face value of K⁻¹: the arithmetic mean of the two adjacent voxel values.
/// Boundary faces pass the single adjacent class twice.
pub fn face_inverse_permeability(
    left: VoxelClass,
    right: VoxelClass,
    scale: f64,
    k_stokes_mkda: Option<f64>,
) -> Result<f64> {
    let a = cell_inverse_permeability(left, scale, k_stokes_mkda)?;
    let b = cell_inverse_permeability(right, scale, k_stokes_mkda)?;
    Ok(0.5 * (a + b))
}

/// The assembled discrete problem: grid, model tag, diagonal K⁻¹ on faces,
/// right-hand side and the diagonal of A.
pub struct OperatorSet {
    grid: Arc<StaggeredGrid>,
    model: Model,
    kinv: Vec<f64>,
    f: Vec<f64>,
    diag: Vec<f64>,
    pressure_drop: (f64, f64),
    l_meters: f64,
}

/// Discretize `image` for the given model, flow axis and boundary condition.
///
/// `pressure_drop` is (p_in, p_out), used only under PressureDrop.
/// `l_meters` is the physical edge length of the image cube (the longest
/// axis for non-cubic images). `k_stokes_mkda` must be provided for Brinkman
/// and Darcy whenever the image contains fluid voxels.
pub fn build_operators(
    image: &VoxelImage,
    axis: Axis,
    model: Model,
    bc: BoundaryCondition,
    pressure_drop: (f64, f64),
    l_meters: f64,
    k_stokes_mkda: Option<f64>,
) -> Result<OperatorSet> {
    if !(l_meters > 0.0) {
        return Err(Error::Config(format!(
            "physical edge length must be positive, got {l_meters}"
        )));
    }
    if let Some(ks) = k_stokes_mkda {
        if !(ks > 0.0) {
            return Err(Error::Config(format!(
                "fictitious permeability must be positive, got {ks}"
            )));
        }
    }
    let (n_fluid, n_porous, _) = image.class_counts();
    match model {
        Model::Stokes if n_porous > 0 => {
            return Err(Error::Config(
                "Stokes needs a binary image; porous voxels require stokes-brinkman, brinkman or darcy"
                    .into(),
            ));
        }
        Model::Brinkman | Model::Darcy if n_fluid > 0 && k_stokes_mkda.is_none() => {
            return Err(Error::Config(format!(
                "{model} on an image with fluid voxels requires a fictitious permeability (K_stokes)"
            )));
        }
        _ => {}
    }

    let grid = Arc::new(StaggeredGrid::build(image, axis, bc)?);
    let scale = l_meters * l_meters;
    // Stokes-Brinkman keeps true fluid voxels: κ = 0 there.
    let fluid_ks = match model {
        Model::Stokes | Model::StokesBrinkman => None,
        Model::Brinkman | Model::Darcy => k_stokes_mkda,
    };

    let mut kinv = vec![0.0; grid.n_faces()];
    if model != Model::Stokes {
        let cell_class =
            |c: u32| -> VoxelClass { image.class_at(grid.cells[c as usize] as usize) };
        for (i, face) in grid.faces().iter().enumerate() {
            // One-sided boundary faces take the inner cell's value twice.
            let (left, right) = match (face.lo, face.hi) {
                (FaceCell::Cell(l), FaceCell::Cell(r)) => (cell_class(l), cell_class(r)),
                (FaceCell::Cell(l), _) => (cell_class(l), cell_class(l)),
                (_, FaceCell::Cell(r)) => (cell_class(r), cell_class(r)),
                _ => unreachable!("face with two ghost sides"),
            };
            kinv[i] = face_inverse_permeability(left, right, scale, fluid_ks)?;
        }
    }

    let h = grid.h();
    let inv_h2 = 1.0 / (h * h);
    let mut diag = vec![0.0; grid.n_faces()];
    match model {
        Model::Darcy => diag.copy_from_slice(&kinv),
        _ => {
            for i in 0..grid.n_faces() {
                let mut count = 0u32;
                for &code in &grid.neighbor_codes[i] {
                    count += match code {
                        NB_NEUMANN => 0,
                        NB_MIRROR => 2,
                        _ => 1, // active DOF or wall Dirichlet
                    };
                }
                diag[i] = count as f64 * inv_h2 + kinv[i];
            }
        }
    }

    let inv_h = 1.0 / h;
    let (p_in, p_out) = pressure_drop;
    let mut f = vec![0.0; grid.n_faces()];
    match bc {
        BoundaryCondition::PressureDrop => {
            for (i, face) in grid.faces().iter().enumerate() {
                if face.lo == FaceCell::InletGhost {
                    f[i] = p_in * inv_h;
                } else if face.hi == FaceCell::OutletGhost {
                    f[i] = -p_out * inv_h;
                }
            }
        }
        BoundaryCondition::Periodic => {
            for (i, face) in grid.faces().iter().enumerate() {
                if face.axis == axis {
                    f[i] = 1.0;
                }
            }
        }
    }

    Ok(OperatorSet {
        grid,
        model,
        kinv,
        f,
        diag,
        pressure_drop,
        l_meters,
    })
}

impl OperatorSet {
    pub fn grid(&self) -> &Arc<StaggeredGrid> {
        &self.grid
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.grid.bc
    }

    pub fn kinv(&self) -> &[f64] {
        &self.kinv
    }

    pub fn rhs(&self) -> &[f64] {
        &self.f
    }

    pub fn diag_a(&self) -> &[f64] {
        &self.diag
    }

    pub fn pressure_drop(&self) -> (f64, f64) {
        self.pressure_drop
    }

    pub fn l_meters(&self) -> f64 {
        self.l_meters
    }

    pub fn n_velocity(&self) -> usize {
        self.grid.n_faces()
    }

    pub fn n_pressure(&self) -> usize {
        self.grid.n_cells()
    }

    /// out = A v, as a stencil pass over the face neighbor codes.
    pub fn apply_a(&self, v: &[f64], out: &mut [f64]) {
        let n = self.grid.n_faces();
        assert_eq!(v.len(), n, "velocity vector length mismatch");
        assert_eq!(out.len(), n, "velocity output length mismatch");
        if self.model == Model::Darcy {
            for i in 0..n {
                out[i] = self.kinv[i] * v[i];
            }
            return;
        }
        let inv_h2 = 1.0 / (self.grid.h * self.grid.h);
        for i in 0..n {
            let mut acc = 0.0;
            for &code in &self.grid.neighbor_codes[i] {
                if code >= 0 {
                    acc += v[code as usize];
                }
            }
            out[i] = self.diag[i] * v[i] - inv_h2 * acc;
        }
    }

    /// out = B v: scaled negative divergence, pressure-cell sized.
    pub fn apply_b(&self, v: &[f64], out: &mut [f64]) {
        self.grid.apply_b(v, out);
    }

    /// out = Bᵀ p: scaled pressure gradient on faces.
    pub fn apply_bt(&self, p: &[f64], out: &mut [f64]) {
        self.grid.apply_bt(p, out);
    }

    /// A as an explicit CSR matrix (for preconditioner setup).
    pub fn assemble_a(&self) -> CsrMatrix {
        let n = self.grid.n_faces();
        let mut builder = CsrBuilder::new(n);
        let inv_h2 = 1.0 / (self.grid.h * self.grid.h);
        let mut row: Vec<(u32, f64)> = Vec::with_capacity(7);
        for i in 0..n {
            row.clear();
            row.push((i as u32, self.diag[i]));
            if self.model != Model::Darcy {
                for &code in &self.grid.neighbor_codes[i] {
                    if code >= 0 {
                        row.push((code as u32, -inv_h2));
                    }
                }
            }
            row.sort_by_key(|&(c, _)| c);
            // Tiny periodic boxes can alias a neighbor twice; merge those.
            let mut merged: Vec<(u32, f64)> = Vec::with_capacity(row.len());
            for &(c, v) in &row {
                match merged.last_mut() {
                    Some((lc, lv)) if *lc == c => *lv += v,
                    _ => merged.push((c, v)),
                }
            }
            builder.push_row(&merged);
        }
        builder.finish()
    }

    /// Ŝ = B·diag(A)⁻¹·Bᵀ as an explicit CSR matrix: the assembled
    /// approximation of the pressure Schur complement used as the outer
    /// preconditioner. Fails if a pressure cell has no active face; such
    /// cells belong to isolated regions that preprocessing removes.
    pub fn assemble_schur_approximation(&self) -> Result<CsrMatrix> {
        let g = &self.grid;
        let inv_h2 = 1.0 / (g.h * g.h);
        let periodic = g.bc == BoundaryCondition::Periodic;
        let mut builder = CsrBuilder::new(g.n_cells());
        let mut row: Vec<(u32, f64)> = Vec::with_capacity(7);
        for c in 0..g.n_cells() {
            let pos = g.cell_coords(c);
            row.clear();
            let mut diag = 0.0;
            for a in 0..3 {
                let axis = Axis::from_index(a);
                let lo_pos = pos;
                let mut hi_pos = pos;
                if periodic {
                    hi_pos[a] = (pos[a] + 1) % g.dims[a];
                } else {
                    hi_pos[a] = pos[a] + 1;
                }
                for fpos in [lo_pos, hi_pos] {
                    let Some(dof) = g.face_dof(axis, fpos) else {
                        continue;
                    };
                    let w = inv_h2 / self.diag[dof as usize];
                    diag += w;
                    let face = &g.faces[dof as usize];
                    let other = match (face.lo, face.hi) {
                        (FaceCell::Cell(l), _) if l as usize != c => Some(l),
                        (_, FaceCell::Cell(h)) if h as usize != c => Some(h),
                        // Boundary faces couple the cell to a known ghost
                        // pressure: diagonal contribution only.
                        _ => None,
                    };
                    if let Some(o) = other {
                        row.push((o, -w));
                    }
                }
            }
            if diag == 0.0 {
                let [x, y, z] = pos;
                return Err(Error::Domain(format!(
                    "pressure cell at voxel ({x}, {y}, {z}) has no active face; remove isolated regions first"
                )));
            }
            row.push((c as u32, diag));
            row.sort_by_key(|&(col, _)| col);
            let mut merged: Vec<(u32, f64)> = Vec::with_capacity(row.len());
            for &(col, v) in &row {
                match merged.last_mut() {
                    Some((lc, lv)) if *lc == col => *lv += v,
                    _ => merged.push((col, v)),
                }
            }
            builder.push_row(&merged);
        }
        Ok(builder.finish())
    }
}
