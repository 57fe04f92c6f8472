//! Command-line front end.
//!
//! Six subcommands: `info` and `classify` inspect an image, `generate`
//! writes synthetic fixtures, `solve` runs one permeability computation and
//! emits a JSON record, `sweep` repeats a solve across a parameter range as
//! CSV, `export` writes the solved fields as VTK. Solve-like commands read
//! defaults from an optional flat key=value config file; explicit flags win.
//!
//! Exit codes: 0 success, 1 I/O, 2 configuration or domain error, 3 forced
//! solve on a non-percolating sample, 4 solver non-convergence.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::classify::{classify, remove_isolated, Category};
use crate::grid::{build_operators, BoundaryCondition, Model};
use crate::post::{effective_permeability, export_fields, PermeabilityResult};
use crate::solver::{auto_workflow, solve_image, SolveSummary, SolverConfig};
use crate::synth::{generate, GeometryKind, GeometrySpec};
use crate::voxel::{read_sidecar, write_sidecar, Axis, VoxelImage};
use crate::{Error, Result};

/// JSON Schema every solve record conforms to; shipped with the crate.
pub const RESULT_SCHEMA: &str = include_str!("../schema/result.schema.json");

#[derive(Parser, Debug)]
#[command(name = "poreflow", version, about = "Effective permeability of voxelized porous media")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print dimensions, porosity and per-direction connectivity.
    Info(InfoArgs),
    /// Classify pore-space connectivity along one direction as JSON.
    Classify(ClassifyArgs),
    /// Generate a synthetic geometry as .raw plus sidecar metadata.
    Generate(GenerateArgs),
    /// Solve for effective permeability and emit a JSON record.
    Solve(SolveArgs),
    /// Repeat a solve across parameter values, emitting a CSV table.
    Sweep(SweepArgs),
    /// Solve and write pressure, velocity and porosity fields as VTK.
    Export(ExportArgs),
}

/// Map an error to the process exit code.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::Domain(_)
        | Error::Dimension(_)
        | Error::InvalidPorosity { .. }
        | Error::Contract(_) => 2,
        Error::NonPercolating(_) => 3,
        Error::NonConvergence { .. } | Error::Indefinite { .. } => 4,
        Error::Io(_) => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Info(args) => cmd_info(args),
        Command::Classify(args) => cmd_classify(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Export(args) => cmd_export(args),
    }
}

#[derive(Args, Debug, Clone)]
struct ImageArgs {
    /// Input voxel image: one porosity byte per voxel, x fastest.
    input: PathBuf,
    /// Dimensions as NXxNYxNZ (or comma-separated); sidecar supplies them
    /// when omitted.
    #[arg(long, value_parser = parse_dims)]
    dims: Option<[usize; 3]>,
    /// Physical edge length of the box in meters; sidecar value or 1.0 when
    /// omitted.
    #[arg(long)]
    length_m: Option<f64>,
}

impl ImageArgs {
    fn load(&self) -> Result<(VoxelImage, f64)> {
        let meta = read_sidecar(&self.input)?;
        let dims = self
            .dims
            .or_else(|| meta.as_ref().and_then(|m| m.dims()))
            .ok_or_else(|| {
                Error::Config(format!(
                    "no dimensions for {}: pass --dims or provide a sidecar",
                    self.input.display()
                ))
            })?;
        let l = self
            .length_m
            .or_else(|| meta.as_ref().and_then(|m| m.l_meters))
            .unwrap_or(1.0);
        let image = VoxelImage::load_raw(&self.input, dims)?;
        Ok((image, l))
    }
}

fn parse_dims(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(['x', 'X', ',']).collect();
    if parts.len() != 3 {
        return Err(format!("expected NXxNYxNZ, got '{s}'"));
    }
    let mut dims = [0usize; 3];
    for (d, p) in dims.iter_mut().zip(&parts) {
        *d = p
            .trim()
            .parse()
            .map_err(|e| format!("bad dimension '{p}': {e}"))?;
    }
    Ok(dims)
}

fn parse_axis(s: &str) -> Result<Axis> {
    Axis::from_str(s)
}

/// Solver-facing options shared by solve, sweep and export. Every field has
/// a default; a key=value config file may supply any of them and explicit
/// flags override the file.
#[derive(Args, Debug, Clone, Default)]
struct SolveOpts {
    /// Flat key=value file with defaults for the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Flow direction x, y or z [default: z].
    #[arg(long)]
    direction: Option<String>,
    /// auto, stokes, stokes-brinkman, brinkman or darcy [default: auto].
    #[arg(long)]
    model: Option<String>,
    /// pressure-drop or periodic [default: pressure-drop].
    #[arg(long)]
    bc: Option<String>,
    /// Inlet plane pressure [default: 1].
    #[arg(long)]
    p_in: Option<f64>,
    /// Outlet plane pressure [default: 0].
    #[arg(long)]
    p_out: Option<f64>,
    /// Outer relative residual target [default: 1e-8].
    #[arg(long)]
    rtol: Option<f64>,
    /// Velocity-solve tolerance; derived from rtol when omitted.
    #[arg(long)]
    rtol_a: Option<f64>,
    /// Preconditioner tolerance; derived from rtol when omitted.
    #[arg(long)]
    rtol_shat: Option<f64>,
    /// Outer iteration budget [default: 500].
    #[arg(long)]
    maxit_outer: Option<usize>,
    /// Inner iteration budget [default: 5000].
    #[arg(long)]
    maxit_inner: Option<usize>,
    /// Fictitious fluid permeability in mkDa, or "none" [default: 1e7].
    #[arg(long)]
    k_stokes: Option<String>,
    /// Worker threads; this build computes serially [default: 1].
    #[arg(long)]
    threads: Option<usize>,
    /// Zero recorded wall times so reruns are byte-identical.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum ModelMode {
    Auto,
    Forced(Model),
}

#[derive(Clone, Debug)]
struct RunConfig {
    direction: Axis,
    mode: ModelMode,
    bc: BoundaryCondition,
    p_in: f64,
    p_out: f64,
    solver: SolverConfig,
}

impl RunConfig {
    fn dp(&self) -> (f64, f64) {
        (self.p_in, self.p_out)
    }

    /// The drop the record reports; periodic forcing has none.
    fn applied_drop(&self) -> f64 {
        match self.bc {
            BoundaryCondition::PressureDrop => self.p_in - self.p_out,
            BoundaryCondition::Periodic => 0.0,
        }
    }
}

const CONFIG_KEYS: [&str; 13] = [
    "direction",
    "model",
    "bc",
    "p_in",
    "p_out",
    "rtol",
    "rtol_a",
    "rtol_shat",
    "maxit_outer",
    "maxit_inner",
    "k_stokes",
    "threads",
    "deterministic",
];

fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "{}:{}: expected key=value, got '{line}'",
                path.display(),
                lineno + 1
            ))
        })?;
        let key = key.trim().to_string();
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "{}:{}: unknown key '{key}'",
                path.display(),
                lineno + 1
            )));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

/// Flag value, else config-file value, else default.
fn pick<T, E: Display>(
    key: &str,
    flag: Option<T>,
    file: Option<&String>,
    default: T,
    parse: impl Fn(&str) -> std::result::Result<T, E>,
) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match file {
        Some(s) => {
            parse(s).map_err(|e| Error::Config(format!("config key {key}='{s}': {e}")))
        }
        None => Ok(default),
    }
}

fn parse_k_stokes(s: &str) -> Result<Option<f64>> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|e| Error::Config(format!("bad K_stokes '{s}': {e}")))
}

impl SolveOpts {
    fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => parse_config_file(path)?,
            None => BTreeMap::new(),
        };
        let get = |key: &str| file.get(key);

        let direction = pick("direction", self.direction.as_deref().map(str::to_string),
            get("direction"), "z".into(), |s| Ok::<_, Error>(s.to_string()))?;
        let direction = parse_axis(&direction)?;

        let model = pick("model", self.model.clone(), get("model"), "auto".into(),
            |s| Ok::<_, Error>(s.to_string()))?;
        let mode = if model == "auto" {
            ModelMode::Auto
        } else {
            ModelMode::Forced(Model::from_str(&model)?)
        };

        let bc = pick("bc", self.bc.clone(), get("bc"), "pressure-drop".into(),
            |s| Ok::<_, Error>(s.to_string()))?;
        let bc = BoundaryCondition::from_str(&bc)?;

        let p_in = pick("p_in", self.p_in, get("p_in"), 1.0, str::parse)?;
        let p_out = pick("p_out", self.p_out, get("p_out"), 0.0, str::parse)?;
        let defaults = SolverConfig::default();
        let rtol_s = pick("rtol", self.rtol, get("rtol"), defaults.rtol_s, str::parse)?;
        let rtol_a_override = pick("rtol_a", self.rtol_a.map(Some), get("rtol_a"),
            None, |s| s.parse().map(Some))?;
        let rtol_shat_override = pick("rtol_shat", self.rtol_shat.map(Some), get("rtol_shat"),
            None, |s| s.parse().map(Some))?;
        let maxit_outer = pick("maxit_outer", self.maxit_outer, get("maxit_outer"),
            defaults.maxit_outer, str::parse)?;
        let maxit_inner = pick("maxit_inner", self.maxit_inner, get("maxit_inner"),
            defaults.maxit_inner, str::parse)?;
        let k_stokes_mkda = pick("k_stokes", self.k_stokes.as_deref().map(parse_k_stokes),
            get("k_stokes"), Ok(defaults.k_stokes_mkda), |s| Ok::<_, Error>(parse_k_stokes(s)))??;
        let deterministic = self.deterministic
            || pick("deterministic", None, get("deterministic"), false, str::parse)?;
        let threads = pick("threads", self.threads, get("threads"), 1, str::parse)?;
        if threads == 0 {
            return Err(Error::Config("thread count must be positive".into()));
        }
        if threads > 1 {
            eprintln!("note: {threads} threads requested; this build computes serially");
        }

        let solver = SolverConfig {
            rtol_s,
            rtol_a_override,
            rtol_shat_override,
            maxit_outer,
            maxit_inner,
            k_stokes_mkda,
            deterministic,
        };
        solver.validate()?;
        Ok(RunConfig { direction, mode, bc, p_in, p_out, solver })
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[derive(Args, Debug)]
struct InfoArgs {
    #[command(flatten)]
    image: ImageArgs,
    /// Restrict the connectivity report to one direction.
    #[arg(long)]
    direction: Option<String>,
}

fn cmd_info(args: InfoArgs) -> Result<()> {
    let (image, l) = args.image.load()?;
    let [nx, ny, nz] = image.dims();
    let (total, resolved, unresolved) = image.porosity_stats();
    let (n_fluid, n_porous, n_solid) = image.class_counts();
    println!("image: {}", args.image.input.display());
    println!(
        "dims: {nx} x {ny} x {nz} ({} voxels, spacing 1/{}, L = {l} m)",
        image.len(),
        nx.max(ny).max(nz)
    );
    println!("voxels: {n_fluid} fluid, {n_porous} porous, {n_solid} solid");
    println!("porosity: total {total:.4}, resolved {resolved:.4}, unresolved {unresolved:.4}");
    let directions = match &args.direction {
        Some(s) => vec![parse_axis(s)?],
        None => Axis::ALL.to_vec(),
    };
    for d in directions {
        let report = classify(&image, d);
        let (stokes, sb) = match report.category {
            Category::B => ("Yes", "Yes"),
            Category::A => ("No", "Yes"),
            Category::NonPercolating => ("No", "No"),
        };
        println!(
            "connectivity {d}: Stokes: {stokes}, Stokes-Brinkman: {sb} (category {:?}, {} spanning components, {} voxels isolated)",
            report.category, report.component_count, report.removed_voxels
        );
    }
    Ok(())
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    image: ImageArgs,
    /// Flow direction x, y or z.
    #[arg(long, default_value = "z")]
    direction: String,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn cmd_classify(args: ClassifyArgs) -> Result<()> {
    let (image, _) = args.image.load()?;
    let report = classify(&image, parse_axis(&args.direction)?);
    let json = serde_json::to_string(&report).expect("report serializes");
    write_output(args.output.as_deref(), &format!("{json}\n"))
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum GeometryChoice {
    Sphere,
    Channel,
    BlockedChannel,
    Layered,
    Homogeneous,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Output path for the .raw image; a sidecar is written next to it.
    output: PathBuf,
    /// Cube edge length in voxels.
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum)]
    geometry: GeometryChoice,
    /// Sphere diameter as a fraction of the box edge.
    #[arg(long)]
    diameter: Option<f64>,
    /// Duct width in voxels (channel, blocked-channel).
    #[arg(long)]
    width: Option<usize>,
    /// Geometry axis for channels and layers.
    #[arg(long, default_value = "z")]
    axis: String,
    /// Porosity byte of the blocking slab (100 seals the duct).
    #[arg(long)]
    slab_phi: Option<u8>,
    /// Slab thickness in voxels along the duct axis.
    #[arg(long)]
    slab_thickness: Option<usize>,
    /// Porosity byte for homogeneous fills.
    #[arg(long)]
    phi: Option<u8>,
    /// Layer list as thickness:phi pairs, e.g. 16:50,16:58.
    #[arg(long)]
    layers: Option<String>,
    /// Physical edge length recorded in the sidecar, meters.
    #[arg(long, default_value_t = 1.0)]
    length_m: f64,
}

fn require<T>(value: Option<T>, flag: &str, geometry: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("{geometry} geometry requires --{flag}")))
}

fn parse_layers(s: &str) -> Result<Vec<(usize, u8)>> {
    s.split(',')
        .map(|pair| {
            let (t, phi) = pair.split_once(':').ok_or_else(|| {
                Error::Config(format!("bad layer '{pair}': expected thickness:phi"))
            })?;
            let t = t.trim().parse().map_err(|e| {
                Error::Config(format!("bad layer thickness '{t}': {e}"))
            })?;
            let phi = phi.trim().parse().map_err(|e| {
                Error::Config(format!("bad layer porosity '{phi}': {e}"))
            })?;
            Ok((t, phi))
        })
        .collect()
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let axis = parse_axis(&args.axis)?;
    let kind = match args.geometry {
        GeometryChoice::Sphere => GeometryKind::SphereArray {
            diameter: require(args.diameter, "diameter", "sphere")?,
        },
        GeometryChoice::Channel => GeometryKind::Channel {
            axis,
            width: require(args.width, "width", "channel")?,
        },
        GeometryChoice::BlockedChannel => GeometryKind::BlockedChannel {
            axis,
            width: require(args.width, "width", "blocked-channel")?,
            slab_phi: require(args.slab_phi, "slab-phi", "blocked-channel")?,
            slab_thickness: require(args.slab_thickness, "slab-thickness", "blocked-channel")?,
        },
        GeometryChoice::Layered => GeometryKind::Layered {
            axis,
            layers: parse_layers(&require(args.layers, "layers", "layered")?)?,
        },
        GeometryChoice::Homogeneous => GeometryKind::Homogeneous {
            phi: require(args.phi, "phi", "homogeneous")?,
        },
    };
    let image = generate(&GeometrySpec::cube(args.n, kind))?;
    image.save_raw(&args.output)?;
    write_sidecar(&args.output, image.dims(), args.length_m)?;
    let (n_fluid, n_porous, n_solid) = image.class_counts();
    println!(
        "wrote {}^3 image to {} ({n_fluid} fluid, {n_porous} porous, {n_solid} solid)",
        args.n,
        args.output.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct CheckRecord {
    k_hat: f64,
    #[serde(rename = "k_mkDa")]
    k_mkda: f64,
    iterations_outer: usize,
    wall_time_s: f64,
}

#[derive(Serialize)]
struct SolveRecord {
    category: Category,
    model: Option<Model>,
    direction: Axis,
    k_hat: f64,
    #[serde(rename = "k_mkDa")]
    k_mkda: f64,
    k_m2: f64,
    darcy_velocity: f64,
    dp: f64,
    #[serde(rename = "rtol_S")]
    rtol_s: f64,
    iterations_outer: usize,
    inner_iterations_total: usize,
    wall_time_s: f64,
    divergence_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    stokes_brinkman_check: Option<CheckRecord>,
}

fn make_record(
    category: Category,
    model: Option<Model>,
    result: &PermeabilityResult,
    stats: Option<&SolveSummary>,
    rc: &RunConfig,
) -> SolveRecord {
    SolveRecord {
        category,
        model,
        direction: result.direction,
        k_hat: result.k_hat,
        k_mkda: result.k_mkda,
        k_m2: result.k_m2,
        darcy_velocity: result.darcy_velocity,
        dp: rc.applied_drop(),
        rtol_s: rc.solver.rtol_s,
        iterations_outer: stats.map_or(0, |s| s.iterations_outer),
        inner_iterations_total: stats.map_or(0, |s| s.inner_iterations_total),
        wall_time_s: stats.map_or(0.0, |s| s.wall_time_s),
        divergence_norm: result.divergence_norm,
        stokes_brinkman_check: None,
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    image: ImageArgs,
    #[command(flatten)]
    opts: SolveOpts,
    /// Write the JSON record here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// In auto mode on a category-A sample, also solve Stokes-Brinkman and
    /// attach the comparison.
    #[arg(long)]
    cross_check: bool,
    /// Write the assembled velocity operator and Schur approximation as
    /// MatrixMarket files PREFIX_a.mtx and PREFIX_shat.mtx.
    #[arg(long, value_name = "PREFIX")]
    export_matrix: Option<PathBuf>,
}

fn export_matrices(
    prefix: &Path,
    image: &VoxelImage,
    model: Model,
    rc: &RunConfig,
    l: f64,
) -> Result<()> {
    let (cleaned, _) = remove_isolated(image, rc.direction);
    let ops = build_operators(
        &cleaned,
        rc.direction,
        model,
        rc.bc,
        rc.dp(),
        l,
        rc.solver.k_stokes_mkda,
    )?;
    let a_path = PathBuf::from(format!("{}_a.mtx", prefix.display()));
    let s_path = PathBuf::from(format!("{}_shat.mtx", prefix.display()));
    ops.assemble_a().write_matrix_market(fs::File::create(&a_path)?)?;
    ops.assemble_schur_approximation()?
        .write_matrix_market(fs::File::create(&s_path)?)?;
    eprintln!("wrote {} and {}", a_path.display(), s_path.display());
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let (image, l) = args.image.load()?;
    let rc = args.opts.resolve()?;
    let record = match rc.mode {
        ModelMode::Auto => {
            let out = auto_workflow(&image, rc.direction, rc.bc, rc.dp(), l, &rc.solver)?;
            let stats = out.solution.as_ref().map(|s| s.stats);
            let mut record =
                make_record(out.report.category, out.model, &out.result, stats.as_ref(), &rc);
            if args.cross_check && out.report.category == Category::A {
                let sol = solve_image(
                    &image,
                    rc.direction,
                    Model::StokesBrinkman,
                    rc.bc,
                    rc.dp(),
                    l,
                    &rc.solver,
                )?;
                let check = effective_permeability(&sol)?;
                record.stokes_brinkman_check = Some(CheckRecord {
                    k_hat: check.k_hat,
                    k_mkda: check.k_mkda,
                    iterations_outer: sol.stats.iterations_outer,
                    wall_time_s: sol.stats.wall_time_s,
                });
            }
            if let (Some(prefix), Some(model)) = (&args.export_matrix, out.model) {
                export_matrices(prefix, &image, model, &rc, l)?;
            }
            record
        }
        ModelMode::Forced(model) => {
            let sol = solve_image(&image, rc.direction, model, rc.bc, rc.dp(), l, &rc.solver)?;
            let result = effective_permeability(&sol)?;
            let report = classify(&image, rc.direction);
            if let Some(prefix) = &args.export_matrix {
                export_matrices(prefix, &image, model, &rc, l)?;
            }
            make_record(report.category, Some(model), &result, Some(&sol.stats), &rc)
        }
    };
    let json = serde_json::to_string(&record).expect("record serializes");
    write_output(args.output.as_deref(), &format!("{json}\n"))
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SweepParameter {
    /// Outer residual target rtol_S.
    Rtol,
    /// Fictitious fluid permeability in mkDa.
    KStokes,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    image: ImageArgs,
    #[command(flatten)]
    opts: SolveOpts,
    #[arg(long, value_enum)]
    parameter: SweepParameter,
    /// Comma-separated parameter values; empty emits just the header.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn run_once(
    image: &VoxelImage,
    rc: &RunConfig,
    l: f64,
) -> Result<(PermeabilityResult, SolveSummary)> {
    match rc.mode {
        ModelMode::Auto => {
            let out = auto_workflow(image, rc.direction, rc.bc, rc.dp(), l, &rc.solver)?;
            let stats = out.solution.map(|s| s.stats).unwrap_or(SolveSummary {
                iterations_outer: 0,
                inner_iterations_total: 0,
                rel_residual: 0.0,
                rtol_s: rc.solver.rtol_s,
                wall_time_s: 0.0,
            });
            Ok((out.result, stats))
        }
        ModelMode::Forced(model) => {
            let sol = solve_image(image, rc.direction, model, rc.bc, rc.dp(), l, &rc.solver)?;
            let result = effective_permeability(&sol)?;
            Ok((result, sol.stats))
        }
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let (image, l) = args.image.load()?;
    let base = args.opts.resolve()?;
    let mut csv = String::from("value,k_mkDa,iterations,wall_time_s\n");
    for &value in &args.values {
        let mut rc = base.clone();
        match args.parameter {
            SweepParameter::Rtol => rc.solver.rtol_s = value,
            SweepParameter::KStokes => rc.solver.k_stokes_mkda = Some(value),
        }
        // A failed run keeps its row so the table stays aligned with the
        // requested values; the diagnostic goes to stderr.
        let row = rc
            .solver
            .validate()
            .and_then(|()| run_once(&image, &rc, l))
            .map(|(result, stats)| {
                format!(
                    "{value:e},{:.6e},{},{:.6e}\n",
                    result.k_mkda, stats.iterations_outer, stats.wall_time_s
                )
            });
        match row {
            Ok(r) => csv.push_str(&r),
            Err(e) => {
                eprintln!("sweep value {value:e}: {e}");
                csv.push_str(&format!("{value:e},nan,nan,nan\n"));
            }
        }
    }
    write_output(args.output.as_deref(), &csv)
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    image: ImageArgs,
    #[command(flatten)]
    opts: SolveOpts,
    /// Output VTK file.
    #[arg(long)]
    output: PathBuf,
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    let (image, l) = args.image.load()?;
    let rc = args.opts.resolve()?;
    let sol = match rc.mode {
        ModelMode::Auto => {
            let out = auto_workflow(&image, rc.direction, rc.bc, rc.dp(), l, &rc.solver)?;
            out.solution.ok_or_else(|| {
                Error::NonPercolating("no spanning pore path; nothing to export".into())
            })?
        }
        ModelMode::Forced(model) => {
            solve_image(&image, rc.direction, model, rc.bc, rc.dp(), l, &rc.solver)?
        }
    };
    // Isolated regions were solidified before the solve; export the image
    // the solver actually saw.
    let (cleaned, _) = remove_isolated(&image, rc.direction);
    export_fields(&sol, &cleaned, &args.output)?;
    eprintln!("wrote {}", args.output.display());
    Ok(())
}
