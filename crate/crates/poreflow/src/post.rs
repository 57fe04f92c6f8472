//! Reduction of a flow solution to an effective permeability, plus field
//! export for inspection.
//!
//! The headline number is the dimensionless k̂ on the unit cube. Under a
//! pressure drop it is the volume-averaged flow-axis velocity times the
//! sample length over the drop; under periodic forcing the unit body force
//! makes it the volume average itself. A second estimate from the outlet
//! plane flux is reported alongside as a consistency diagnostic: discrete
//! continuity makes the two agree to solver tolerance, and a gap between
//! them means the solve cannot be trusted.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use serde::Serialize;

use crate::grid::{BoundaryCondition, FaceCell, StaggeredGrid};
use crate::krylov::norm2;
use crate::solver::FlowSolution;
use crate::voxel::{Axis, VoxelImage, MICRODARCY_M2};
use crate::{Error, Result};

/// Effective permeability of one sample along one direction.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PermeabilityResult {
    pub direction: Axis,
    /// Dimensionless permeability of the unit cube.
    pub k_hat: f64,
    /// k̂ scaled by the physical edge length squared.
    pub k_m2: f64,
    pub k_mkda: f64,
    /// Volume-averaged flow-axis velocity.
    pub darcy_velocity: f64,
    /// Applied drop p_in - p_out; zero under periodic forcing.
    pub pressure_drop: f64,
    /// Independent estimate from the outlet-plane flux.
    pub k_hat_flux: f64,
    /// ‖B u‖₂ of the reported velocity field.
    pub divergence_norm: f64,
}

impl PermeabilityResult {
    /// The record for a sample with no spanning pore path: no flow at all.
    pub fn zero(direction: Axis) -> Self {
        Self {
            direction,
            k_hat: 0.0,
            k_m2: 0.0,
            k_mkda: 0.0,
            darcy_velocity: 0.0,
            pressure_drop: 0.0,
            k_hat_flux: 0.0,
            divergence_norm: 0.0,
        }
    }
}

/// Volume-averaged flow-axis velocity. Every active flow-axis face carries
/// one cell volume h³; inactive faces are walls and contribute zero.
pub fn darcy_velocity(sol: &FlowSolution) -> f64 {
    let grid = sol.grid();
    let axis = sol.flow_axis();
    let sum: f64 = grid
        .faces()
        .iter()
        .zip(&sol.u)
        .filter(|(f, _)| f.axis == axis)
        .map(|(_, &u)| u)
        .sum();
    let [nx, ny, nz] = grid.dims();
    sum / (nx * ny * nz) as f64
}

/// Reduce a flow solution to the permeability record.
///
/// Pressure-drop runs with a zero applied drop have no defined permeability
/// and are rejected.
pub fn effective_permeability(sol: &FlowSolution) -> Result<PermeabilityResult> {
    let grid = sol.grid();
    let axis = sol.flow_axis();
    let d = axis.index();
    let dims = grid.dims();
    let h = grid.h();
    let n_perp = (dims[0] * dims[1] * dims[2] / dims[d]) as f64;

    let mean_u = darcy_velocity(sol);
    let mut div = vec![0.0; grid.n_cells()];
    grid.apply_b(&sol.u, &mut div);
    let divergence_norm = norm2(&div);

    let plane_flux_mean = |keep: &dyn Fn(&crate::grid::FaceDof) -> bool| -> f64 {
        let sum: f64 = grid
            .faces()
            .iter()
            .zip(&sol.u)
            .filter(|(f, _)| keep(f))
            .map(|(_, &u)| u)
            .sum();
        sum / n_perp
    };

    let (dp, k_hat, k_hat_flux) = match grid.bc() {
        BoundaryCondition::PressureDrop => {
            let (p_in, p_out) = sol.pressure_drop();
            let dp = p_in - p_out;
            if dp == 0.0 {
                return Err(Error::Domain(
                    "the applied pressure drop is zero, permeability is undefined".into(),
                ));
            }
            let k_hat = mean_u * (dims[d] as f64 * h) / dp;
            // Flux form: outlet-plane mean velocity over the inlet-ghost to
            // outlet-ghost path of N+1 face spacings.
            let outlet = plane_flux_mean(&|f| f.hi == FaceCell::OutletGhost);
            let k_hat_flux = outlet * ((dims[d] + 1) as f64 * h) / dp;
            (dp, k_hat, k_hat_flux)
        }
        BoundaryCondition::Periodic => {
            // Unit body force over the unit cube: k̂ is the mean velocity.
            let plane = plane_flux_mean(&|f| f.axis == axis && f.pos[d] == 0);
            (0.0, mean_u, plane)
        }
    };

    let l = sol.l_meters();
    let k_m2 = k_hat * l * l;
    Ok(PermeabilityResult {
        direction: axis,
        k_hat,
        k_m2,
        k_mkda: k_m2 / MICRODARCY_M2,
        darcy_velocity: mean_u,
        pressure_drop: dp,
        k_hat_flux,
        divergence_norm,
    })
}

/// Cell-centered velocity: mean of the two face values along each axis,
/// walls and missing faces counting as zero.
fn cell_velocity(grid: &StaggeredGrid, u: &[f64], pos: [usize; 3]) -> [f64; 3] {
    let dims = grid.dims();
    let periodic = grid.bc() == BoundaryCondition::Periodic;
    let mut v = [0.0; 3];
    for axis in Axis::ALL {
        let a = axis.index();
        let mut hi_pos = pos;
        hi_pos[a] += 1;
        if periodic {
            hi_pos[a] %= dims[a];
        }
        let face_value = |p: [usize; 3]| {
            grid.face_dof(axis, p)
                .map(|i| u[i as usize])
                .unwrap_or(0.0)
        };
        v[a] = 0.5 * (face_value(pos) + face_value(hi_pos));
    }
    v
}

/// Write pressure, cell-centered velocity and the raw porosity bytes as a
/// legacy ASCII VTK structured-points file, one point per voxel center.
pub fn export_fields(sol: &FlowSolution, image: &VoxelImage, path: &Path) -> Result<()> {
    let grid = sol.grid();
    let [nx, ny, nz] = grid.dims();
    if image.dims() != grid.dims() {
        return Err(Error::Dimension(format!(
            "image dims {:?} do not match solution dims {:?}",
            image.dims(),
            grid.dims()
        )));
    }
    let n = nx * ny * nz;
    let h = grid.h();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "poreflow cell fields")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {nx} {ny} {nz}")?;
    writeln!(w, "ORIGIN {} {} {}", 0.5 * h, 0.5 * h, 0.5 * h)?;
    writeln!(w, "SPACING {h} {h} {h}")?;
    writeln!(w, "POINT_DATA {n}")?;

    writeln!(w, "SCALARS pressure double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for linear in 0..n {
        let p = grid
            .cell_of_voxel(linear)
            .map(|c| sol.p[c as usize])
            .unwrap_or(0.0);
        writeln!(w, "{p:.12e}")?;
    }

    writeln!(w, "VECTORS velocity double")?;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let linear = image.index(x, y, z);
                let v = if grid.cell_of_voxel(linear).is_some() {
                    cell_velocity(grid, &sol.u, [x, y, z])
                } else {
                    [0.0; 3]
                };
                writeln!(w, "{:.12e} {:.12e} {:.12e}", v[0], v[1], v[2])?;
            }
        }
    }

    writeln!(w, "SCALARS porosity double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for &b in image.data() {
        writeln!(w, "{}", b as f64)?;
    }
    w.flush()?;
    Ok(())
}
