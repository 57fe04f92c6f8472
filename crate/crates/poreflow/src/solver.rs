//! Two-stage inner-outer solver for the saddle system, plus the automatic
//! category-driven workflow.
//!
//! The velocity is eliminated: outer conjugate gradients run on the pressure
//! Schur complement S = B·Ã⁻¹·Bᵀ, where each application of Ã⁻¹ is itself an
//! AMG-preconditioned CG solve of the velocity operator. The outer
//! preconditioner applies Ŝ⁻¹ the same way on the assembled approximation
//! Ŝ = B·diag(A)⁻¹·Bᵀ. Both inner solves are inexact, so the outer recurrence
//! leans on the Polak beta and the true-residual restarts in the krylov
//! module; the tolerance coupling rtol_A = 10⁻²·rtol_S keeps the operator
//! perturbation below the outer target. Darcy's velocity operator is
//! diagonal, which makes Ŝ equal to S exactly: the pressure system is then
//! solved in a single preconditioned pass and the velocity recovered by
//! division.
//!
//! Periodic runs carry a constant-pressure null space. The right-hand side,
//! every preconditioned residual and the final pressure are projected onto
//! mean-zero vectors, and the AMG coarse factorization pins the leftover
//! singular direction.

use std::cell::{Cell, RefCell};
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::classify::{classify, remove_isolated, Category, ConnectivityReport};
use crate::grid::{build_operators, BoundaryCondition, Model, OperatorSet, StaggeredGrid};
use crate::krylov::{amg_setup, norm2, pcg, AmgHierarchy, AmgOptions, AmgWorkspace};
use crate::post::{effective_permeability, PermeabilityResult};
use crate::voxel::{Axis, VoxelImage};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Outer relative residual target on the pressure system.
    pub rtol_s: f64,
    /// Velocity-solve tolerance; `None` derives 10⁻²·rtol_s.
    pub rtol_a_override: Option<f64>,
    /// Preconditioner-solve tolerance; `None` derives rtol_s.
    pub rtol_shat_override: Option<f64>,
    pub maxit_outer: usize,
    pub maxit_inner: usize,
    /// Fictitious permeability in mkDa standing in for fluid voxels under
    /// Brinkman and Darcy.
    pub k_stokes_mkda: Option<f64>,
    /// Zero recorded wall times so repeated runs are byte-identical.
    pub deterministic: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rtol_s: 1.0e-8,
            rtol_a_override: None,
            rtol_shat_override: None,
            maxit_outer: 500,
            maxit_inner: 5000,
            k_stokes_mkda: Some(1.0e7),
            deterministic: false,
        }
    }
}

impl SolverConfig {
    pub fn with_rtol(rtol_s: f64) -> Self {
        Self { rtol_s, ..Self::default() }
    }

    /// Inner velocity tolerance, derived from rtol_s unless overridden.
    pub fn rtol_a(&self) -> f64 {
        self.rtol_a_override.unwrap_or(1.0e-2 * self.rtol_s)
    }

    /// Preconditioner tolerance, derived from rtol_s unless overridden.
    pub fn rtol_shat(&self) -> f64 {
        self.rtol_shat_override.unwrap_or(self.rtol_s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rtol_s", self.rtol_s),
            ("rtol_a", self.rtol_a()),
            ("rtol_shat", self.rtol_shat()),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!(
                    "{name} must lie strictly between 0 and 1, got {v}"
                )));
            }
        }
        if self.maxit_outer == 0 || self.maxit_inner == 0 {
            return Err(Error::Config("iteration budgets must be positive".into()));
        }
        if let Some(ks) = self.k_stokes_mkda {
            if !(ks > 0.0) {
                return Err(Error::Config(format!(
                    "fictitious permeability must be positive, got {ks}"
                )));
            }
        }
        Ok(())
    }
}

/// Iteration bookkeeping for one solve.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SolveSummary {
    pub iterations_outer: usize,
    /// All inner CG iterations: velocity solves plus preconditioner solves.
    pub inner_iterations_total: usize,
    /// Final unpreconditioned relative residual of the pressure system.
    pub rel_residual: f64,
    /// The target it was measured against.
    pub rtol_s: f64,
    pub wall_time_s: f64,
}

pub struct FlowSolution {
    /// Face velocities, indexed like `grid.faces()`.
    pub u: Vec<f64>,
    /// Cell pressures, indexed like `grid.cells()`.
    pub p: Vec<f64>,
    pub model: Model,
    pub stats: SolveSummary,
    grid: Arc<StaggeredGrid>,
    pressure_drop: (f64, f64),
    l_meters: f64,
}

impl FlowSolution {
    pub fn grid(&self) -> &Arc<StaggeredGrid> {
        &self.grid
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.grid.bc()
    }

    pub fn flow_axis(&self) -> Axis {
        self.grid.flow_axis()
    }

    pub fn pressure_drop(&self) -> (f64, f64) {
        self.pressure_drop
    }

    pub fn l_meters(&self) -> f64 {
        self.l_meters
    }
}

fn subtract_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// The inner Ã⁻¹ action: exact division for Darcy, AMG-PCG otherwise.
enum VelocitySolver {
    Diagonal { inv_diag: Vec<f64> },
    Iterative { hierarchy: AmgHierarchy, ws: AmgWorkspace },
}

impl VelocitySolver {
    fn build(ops: &OperatorSet) -> Result<Self> {
        if ops.model() == Model::Darcy {
            let mut inv_diag = Vec::with_capacity(ops.n_velocity());
            for (i, &d) in ops.diag_a().iter().enumerate() {
                if !(d > 0.0) {
                    return Err(Error::Contract(format!(
                        "Darcy velocity operator has non-positive diagonal {d} at face {i}"
                    )));
                }
                inv_diag.push(1.0 / d);
            }
            Ok(VelocitySolver::Diagonal { inv_diag })
        } else {
            let hierarchy = amg_setup(ops.assemble_a(), &AmgOptions::default())?;
            let ws = hierarchy.workspace();
            Ok(VelocitySolver::Iterative { hierarchy, ws })
        }
    }

    /// Solve A w = rhs to `rtol`; returns the solution and iteration count.
    fn solve(&mut self, rhs: &[f64], rtol: f64, maxit: usize) -> Result<(Vec<f64>, usize)> {
        match self {
            VelocitySolver::Diagonal { inv_diag } => {
                Ok((rhs.iter().zip(&*inv_diag).map(|(r, d)| r * d).collect(), 0))
            }
            VelocitySolver::Iterative { hierarchy, ws } => {
                let a = hierarchy.operator(0);
                let (w, stats) = pcg(
                    |v, out| a.spmv(v, out),
                    |r, z| hierarchy.apply(r, z, ws),
                    rhs,
                    rtol,
                    maxit,
                )?;
                if !stats.converged {
                    return Err(Error::NonConvergence {
                        iterations: stats.iterations,
                        residual: stats.rel_residual,
                        target: rtol,
                    });
                }
                Ok((w, stats.iterations))
            }
        }
    }
}

/// One application of the Schur complement, S p = B·Ã⁻¹·Bᵀ p, with the inner
/// solve at cfg's rtol_A. Diagnostic entry point; `solve` keeps its own
/// machinery alive across iterations.
pub fn schur_apply(ops: &OperatorSet, cfg: &SolverConfig, p: &[f64]) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut velocity = VelocitySolver::build(ops)?;
    let mut t = vec![0.0; ops.n_velocity()];
    ops.apply_bt(p, &mut t);
    let (w, _) = velocity.solve(&t, cfg.rtol_a(), cfg.maxit_inner)?;
    let mut out = vec![0.0; ops.n_pressure()];
    ops.apply_b(&w, &mut out);
    Ok(out)
}

/// AMG-PCG solver for the assembled Ŝ = B·diag(A)⁻¹·Bᵀ, used as the outer
/// preconditioner action p ↦ Ŝ⁻¹p.
pub struct SchurPreconditioner {
    hierarchy: AmgHierarchy,
    ws: AmgWorkspace,
    rtol: f64,
    maxit: usize,
    deflate: bool,
}

pub fn make_shat_preconditioner(
    ops: &OperatorSet,
    cfg: &SolverConfig,
) -> Result<SchurPreconditioner> {
    cfg.validate()?;
    for (i, &d) in ops.diag_a().iter().enumerate() {
        if !(d > 0.0) {
            let face = &ops.grid().faces()[i];
            return Err(Error::Contract(format!(
                "velocity operator diagonal is {d} at face {i} ({} axis, position {:?})",
                face.axis, face.pos
            )));
        }
    }
    let shat = ops.assemble_schur_approximation()?;
    let hierarchy = amg_setup(shat, &AmgOptions::default())?;
    let ws = hierarchy.workspace();
    Ok(SchurPreconditioner {
        hierarchy,
        ws,
        rtol: cfg.rtol_shat(),
        maxit: cfg.maxit_inner,
        deflate: ops.bc() == BoundaryCondition::Periodic,
    })
}

impl SchurPreconditioner {
    /// Solve Ŝ x = rhs to `rtol`; returns the solution and iteration count.
    pub fn solve(&mut self, rhs: &[f64], rtol: f64, maxit: usize) -> Result<(Vec<f64>, usize)> {
        let mut b = rhs.to_vec();
        if self.deflate {
            subtract_mean(&mut b);
        }
        let (hierarchy, ws) = (&self.hierarchy, &mut self.ws);
        let a = hierarchy.operator(0);
        let (mut x, stats) = pcg(
            |v, out| a.spmv(v, out),
            |r, z| hierarchy.apply(r, z, ws),
            &b,
            rtol,
            maxit,
        )?;
        if !stats.converged {
            return Err(Error::NonConvergence {
                iterations: stats.iterations,
                residual: stats.rel_residual,
                target: rtol,
            });
        }
        if self.deflate {
            subtract_mean(&mut x);
        }
        Ok((x, stats.iterations))
    }

    /// The preconditioner action at the configured tolerance.
    pub fn apply(&mut self, r: &[f64]) -> Result<(Vec<f64>, usize)> {
        let (rtol, maxit) = (self.rtol, self.maxit);
        self.solve(r, rtol, maxit)
    }
}

/// Solve the discretized problem in `ops`.
///
/// Outer PCG runs on the pressure Schur system S p = B·Ã⁻¹f until the
/// unpreconditioned relative residual drops below rtol_S, then the velocity
/// is reconstructed as u = Ã⁻¹(f − Bᵀp). A zero right-hand side returns the
/// zero solution without iterating.
pub fn solve(ops: &OperatorSet, cfg: &SolverConfig) -> Result<FlowSolution> {
    cfg.validate()?;
    let start = Instant::now();
    let periodic = ops.bc() == BoundaryCondition::Periodic;
    let inner_total = Cell::new(0usize);
    let add_inner = |its: usize| inner_total.set(inner_total.get() + its);

    let mut velocity = VelocitySolver::build(ops)?;
    let mut shat = make_shat_preconditioner(ops, cfg)?;

    // Right-hand side of the pressure system: g = B·Ã⁻¹·f.
    let (w0, its0) = velocity.solve(ops.rhs(), cfg.rtol_a(), cfg.maxit_inner)?;
    add_inner(its0);
    let mut g = vec![0.0; ops.n_pressure()];
    ops.apply_b(&w0, &mut g);
    if periodic {
        subtract_mean(&mut g);
    }

    let (mut p, iterations_outer, rel_residual) = if ops.model() == Model::Darcy {
        // A is diagonal, so S = Ŝ exactly: one preconditioned pass.
        let (p, its) = shat.solve(&g, cfg.rtol_s, cfg.maxit_inner)?;
        add_inner(its);
        let outer = if norm2(&g) == 0.0 { 0 } else { 1 };
        (p, outer, cfg.rtol_s)
    } else {
        let first_error: RefCell<Option<Error>> = RefCell::new(None);
        let n_u = ops.n_velocity();
        let mut t = vec![0.0; n_u];
        let apply = |pv: &[f64], out: &mut [f64]| {
            if first_error.borrow().is_some() {
                out.iter_mut().for_each(|x| *x = 0.0);
                return;
            }
            ops.apply_bt(pv, &mut t);
            match velocity.solve(&t, cfg.rtol_a(), cfg.maxit_inner) {
                Ok((w, its)) => {
                    add_inner(its);
                    ops.apply_b(&w, out);
                    if periodic {
                        subtract_mean(out);
                    }
                }
                Err(e) => {
                    *first_error.borrow_mut() = Some(e);
                    out.iter_mut().for_each(|x| *x = 0.0);
                }
            }
        };
        let precond = |r: &[f64], z: &mut [f64]| {
            if first_error.borrow().is_some() {
                z.copy_from_slice(r);
                return;
            }
            match shat.apply(r) {
                Ok((x, its)) => {
                    add_inner(its);
                    z.copy_from_slice(&x);
                    if periodic {
                        subtract_mean(z);
                    }
                }
                Err(e) => {
                    *first_error.borrow_mut() = Some(e);
                    z.copy_from_slice(r);
                }
            }
        };
        let outcome = pcg(apply, precond, &g, cfg.rtol_s, cfg.maxit_outer);
        if let Some(e) = first_error.into_inner() {
            return Err(e);
        }
        let (p, stats) = outcome?;
        if !stats.converged {
            return Err(Error::NonConvergence {
                iterations: stats.iterations,
                residual: stats.rel_residual,
                target: cfg.rtol_s,
            });
        }
        (p, stats.iterations, stats.rel_residual)
    };

    if periodic {
        subtract_mean(&mut p);
    }

    // u = Ã⁻¹(f − Bᵀp).
    let mut t = vec![0.0; ops.n_velocity()];
    ops.apply_bt(&p, &mut t);
    for (ti, fi) in t.iter_mut().zip(ops.rhs()) {
        *ti = fi - *ti;
    }
    let (u, its_u) = velocity.solve(&t, cfg.rtol_a(), cfg.maxit_inner)?;
    add_inner(its_u);

    let stats = SolveSummary {
        iterations_outer,
        inner_iterations_total: inner_total.get(),
        rel_residual,
        rtol_s: cfg.rtol_s,
        wall_time_s: if cfg.deterministic {
            0.0
        } else {
            start.elapsed().as_secs_f64()
        },
    };
    Ok(FlowSolution {
        u,
        p,
        model: ops.model(),
        stats,
        grid: Arc::clone(ops.grid()),
        pressure_drop: ops.pressure_drop(),
        l_meters: ops.l_meters(),
    })
}

/// Discretize and solve an image with a caller-chosen model.
///
/// The image is checked for percolation along `axis` first; isolated
/// regions, which carry no flow, are converted to solid before assembly.
pub fn solve_image(
    image: &VoxelImage,
    axis: Axis,
    model: Model,
    bc: BoundaryCondition,
    pressure_drop: (f64, f64),
    l_meters: f64,
    cfg: &SolverConfig,
) -> Result<FlowSolution> {
    let report = classify(image, axis);
    if report.category == Category::NonPercolating {
        return Err(Error::NonPercolating(format!(
            "no {axis}-spanning connected pore region; nothing to solve"
        )));
    }
    let (cleaned, _) = remove_isolated(image, axis);
    let ops = build_operators(
        &cleaned,
        axis,
        model,
        bc,
        pressure_drop,
        l_meters,
        cfg.k_stokes_mkda,
    )?;
    solve(&ops, cfg)
}

/// Everything the automatic workflow produces. `solution` and `model` are
/// absent when the sample does not percolate and no solve runs.
pub struct WorkflowOutcome {
    pub report: ConnectivityReport,
    pub model: Option<Model>,
    pub solution: Option<FlowSolution>,
    pub result: PermeabilityResult,
}

/// Classify the image, pick the flow model its category calls for, solve,
/// and reduce to a permeability.
///
/// Category B uses Stokes on binary images and Stokes-Brinkman otherwise;
/// category A uses the Darcy approximation with the fictitious permeability
/// from `cfg` standing in for any fluid voxels; non-percolating samples
/// report zero permeability without solving.
pub fn auto_workflow(
    image: &VoxelImage,
    axis: Axis,
    bc: BoundaryCondition,
    pressure_drop: (f64, f64),
    l_meters: f64,
    cfg: &SolverConfig,
) -> Result<WorkflowOutcome> {
    let report = classify(image, axis);
    if report.category == Category::NonPercolating {
        return Ok(WorkflowOutcome {
            report,
            model: None,
            solution: None,
            result: PermeabilityResult::zero(axis),
        });
    }
    let (cleaned, _) = remove_isolated(image, axis);
    let model = match report.category {
        Category::B if cleaned.is_binary() => Model::Stokes,
        Category::B => Model::StokesBrinkman,
        Category::A => Model::Darcy,
        Category::NonPercolating => unreachable!("handled above"),
    };
    let ops = build_operators(
        &cleaned,
        axis,
        model,
        bc,
        pressure_drop,
        l_meters,
        cfg.k_stokes_mkda,
    )?;
    let solution = solve(&ops, cfg)?;
    let result = effective_permeability(&solution)?;
    Ok(WorkflowOutcome {
        report,
        model: Some(model),
        solution: Some(solution),
        result,
    })
}
