//! `meningefem`: mesh generation, forward simulation, synthetic targets and
//! two-stage calibration from the command line.

mod manifest;
mod svg;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use meningefem::calibrate::{
    calibrate_interface, calibrate_tissue, synthesize_target, CalibrationResult, FreeParameter, InterfaceFit, Noise,
    OptimizerOptions, TissueFit, TissueMode,
};
use meningefem::cohesive::LawRecord;
use meningefem::material::{Material, MaterialRecord, DEFAULT_DENSITY};
use meningefem::mesh::{generate_sample_mesh, load_mesh, save_mesh, CohesivePlane, Layer, Mesh};
use meningefem::solver::{energy_report, run, Simulation, SimulationConfig, SolverError};
use meningefem::{ForceDisplacementCurve, Model};

use manifest::{read_input, InputDigest, OutputDir, RunManifest};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or inputs; exit code 1.
    Usage(String),
    /// Solver or I/O failure while running; exit code 2.
    Runtime(String),
    /// Calibration finished without converging; exit code 3.
    NotConverged,
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::NotConverged => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
            CliError::NotConverged => f.write_str("calibration did not converge; results were written with converged = false"),
        }
    }
}

#[derive(Parser)]
#[command(name = "meningefem", version, about = "Explicit FE simulation and calibration of brain–skull shear tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or inspect meshes.
    Mesh {
        #[command(subcommand)]
        action: MeshCommand,
    },
    /// Run a forward shear simulation.
    Simulate(SimulateArgs),
    /// Generate a synthetic target curve.
    Synth(SynthArgs),
    /// Fit tissue or interface parameters to a target curve.
    Calibrate(CalibrateArgs),
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Generate a layered cuboid sample mesh.
    Gen(GenArgs),
    /// Report scaled-Jacobian quality of a mesh.
    Quality(QualityArgs),
}

#[derive(Args)]
struct Output {
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overwrite existing artifacts.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct GenArgs {
    /// Sample dimensions x y z, m.
    #[arg(long, num_args = 3, required = true, allow_negative_numbers = true)]
    dims: Vec<f64>,
    /// Element edge length, m.
    #[arg(long)]
    size: f64,
    /// Layers from z = 0 upwards as `material:thickness`; append `:rigid`
    /// for bone. A layer named `skull` is rigid.
    #[arg(long, num_args = 1.., required = true)]
    layers: Vec<String>,
    /// Height of the cohesive plane, m.
    #[arg(long)]
    cohesive_at: Option<f64>,
    /// Law name of the cohesive elements.
    #[arg(long, default_value = "interface")]
    cohesive_law: String,
    /// Parameter files whose materials and laws are embedded in the mesh.
    #[arg(long, num_args = 1..)]
    params: Vec<PathBuf>,
    /// Mesh file name inside the output directory.
    #[arg(long, default_value = "mesh.json")]
    name: String,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct QualityArgs {
    /// Mesh file.
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ModelArgs {
    /// Mesh file.
    #[arg(long)]
    mesh: PathBuf,
    /// Parameter files with materials and cohesive laws.
    #[arg(long, num_args = 1..)]
    params: Vec<PathBuf>,
    /// Simulation configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; affects speed only.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Validate inputs and report the time step without running.
    #[arg(long)]
    dry_run: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Multiplicative uniform noise amplitude as a fraction (0.02 = ±2%).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Stage {
    Tissue,
    Interface,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, value_enum)]
    stage: Stage,
    /// Calibration spec file.
    #[arg(long)]
    spec: PathBuf,
    /// Tissue parameter file (interface stage); overrides the spec entry.
    #[arg(long)]
    tissue: Option<PathBuf>,
    /// Worker threads; affects speed only.
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    output: Output,
}

/// Materials and cohesive laws in one file.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParameterFile {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    materials: Vec<MaterialRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    laws: Vec<LawRecord>,
}

/// Calibration spec. Relative paths resolve against the spec's directory.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationSpec {
    target: PathBuf,
    mesh: PathBuf,
    #[serde(default)]
    config: Option<PathBuf>,
    #[serde(default)]
    params: Vec<PathBuf>,
    #[serde(default)]
    tissue: Option<PathBuf>,
    #[serde(default)]
    mode: TissueMode,
    #[serde(default)]
    free: Option<Vec<FreeParameter>>,
    #[serde(default)]
    fixed: BTreeMap<String, f64>,
    /// Tissue: shear-strain window. Interface: multiple of the peak
    /// displacement.
    #[serde(default)]
    window: Option<f64>,
    #[serde(default)]
    optimizer: OptimizerOptions,
}

#[derive(Serialize)]
struct CalibrationReport<'a> {
    stage: Stage,
    parameters: &'a BTreeMap<String, f64>,
    derived: BTreeMap<String, f64>,
    objective_value: f64,
    peak_force_error_pct: Option<f64>,
    iterations: usize,
    evaluations: usize,
    converged: bool,
    fit_window_m: (f64, f64),
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serialisable") + "\n"
}

fn load_parameter_file(path: &Path, inputs: &mut Vec<InputDigest>) -> Result<ParameterFile, CliError> {
    parse_json(&read_input(path, inputs)?, path)
}

fn embed(mesh: &mut Mesh, file: ParameterFile) {
    for m in file.materials {
        mesh.materials.insert(m.name.clone(), m);
    }
    for l in file.laws {
        mesh.laws.insert(l.name.clone(), l);
    }
}

fn load_config(path: Option<&Path>, threads: Option<usize>, inputs: &mut Vec<InputDigest>) -> Result<SimulationConfig, CliError> {
    let mut config = match path {
        Some(p) => parse_json(&read_input(p, inputs)?, p)?,
        None => SimulationConfig::default(),
    };
    if threads.is_some() {
        config.threads = threads;
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn load_mesh_file(path: &Path, params: &[PathBuf], inputs: &mut Vec<InputDigest>) -> Result<Mesh, CliError> {
    let text = read_input(path, inputs)?;
    let mut mesh = load_mesh(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    for p in params {
        embed(&mut mesh, load_parameter_file(p, inputs)?);
    }
    Ok(mesh)
}

fn build_model(args: &ModelArgs, inputs: &mut Vec<InputDigest>) -> Result<(Model, SimulationConfig), CliError> {
    let mesh = load_mesh_file(&args.mesh, &args.params, inputs)?;
    let model = Model::from_mesh(mesh).map_err(|e| CliError::Usage(e.to_string()))?;
    model.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let config = load_config(args.config.as_deref(), args.threads, inputs)?;
    Ok((model, config))
}

fn manifest(command: &str, config: serde_json::Value, inputs: Vec<InputDigest>, seed: Option<u64>, threads: Option<usize>, start: Instant) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        inputs,
        seed,
        threads,
        artifacts: Vec::new(),
        wall_clock_s: start.elapsed().as_secs_f64(),
    }
}

fn solver_failure(e: SolverError) -> CliError {
    match e {
        SolverError::Config(_) | SolverError::Model(_) | SolverError::InvertedReference { .. } => {
            CliError::Usage(e.to_string())
        }
        other => CliError::Runtime(other.to_string()),
    }
}

fn parse_layer(spec: &str) -> Result<Layer, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || CliError::Usage(format!("layer {spec:?} must be material:thickness[:rigid]"));
    let (name, thickness, rigid) = match parts.as_slice() {
        [name, t] => (*name, *t, *name == "skull"),
        [name, t, "rigid"] => (*name, *t, true),
        _ => return Err(bad()),
    };
    let thickness: f64 = thickness.parse().map_err(|_| bad())?;
    Ok(if rigid {
        Layer::rigid(name, thickness)
    } else {
        Layer::new(name, thickness)
    })
}

fn cmd_mesh_gen(args: GenArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let layers = args.layers.iter().map(|l| parse_layer(l)).collect::<Result<Vec<_>, _>>()?;
    let plane = args.cohesive_at.map(|z| CohesivePlane::new(z, args.cohesive_law.as_str()));
    let dims = [args.dims[0], args.dims[1], args.dims[2]];
    let mut mesh = generate_sample_mesh(dims, args.size, &layers, plane.as_ref()).map_err(|e| CliError::Usage(e.to_string()))?;
    for layer in layers.iter().filter(|l| l.rigid) {
        mesh.materials
            .insert(layer.material.clone(), MaterialRecord::rigid(&layer.material, DEFAULT_DENSITY));
    }
    let mut inputs = Vec::new();
    for p in &args.params {
        embed(&mut mesh, load_parameter_file(p, &mut inputs)?);
    }
    let mut out = OutputDir::prepare(&args.output.out, &[&args.name], args.output.force)?;
    out.write(&args.name, &save_mesh(&mesh))?;
    println!(
        "{} nodes, {} hexes, {} cohesive elements",
        mesh.nodes.len(),
        mesh.hexes.len(),
        mesh.cohesives.len()
    );
    let config = serde_json::json!({
        "dims": args.dims,
        "size": args.size,
        "layers": args.layers,
        "cohesive_at": args.cohesive_at,
        "cohesive_law": args.cohesive_law,
    });
    out.finish(manifest("mesh gen", config, inputs, None, None, start))
}

fn cmd_mesh_quality(args: QualityArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let mut inputs = Vec::new();
    let mesh = load_mesh_file(&args.input, &[], &mut inputs)?;
    let report = mesh.quality_report().map_err(|e| CliError::Usage(e.to_string()))?;
    println!("elements {}", report.elements);
    println!("scaled Jacobian min {:.6} mean {:.6}", report.min, report.mean);
    if report.mean_below_warn {
        println!("warning: mean scaled Jacobian is below the 0.95 target");
    }
    if !report.flagged.is_empty() {
        println!("warning: {} elements below the minimum quality threshold", report.flagged.len());
    }
    let mut out = OutputDir::prepare(&args.output.out, &["quality.json"], args.output.force)?;
    out.write("quality.json", &to_json(&report))?;
    out.finish(manifest("mesh quality", serde_json::Value::Null, inputs, None, None, start))
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let mut inputs = Vec::new();
    let (model, config) = build_model(&args.model, &mut inputs)?;
    let config_json = serde_json::to_value(&config).expect("config serialises");
    if args.dry_run {
        let sim = Simulation::new(&model, &config).map_err(solver_failure)?;
        println!("stable dt {:e} s", sim.dt());
        println!("steps {}", sim.step_count());
        let out = OutputDir::prepare(&args.output.out, &[], args.output.force)?;
        return out.finish(manifest("simulate --dry-run", config_json, inputs, None, config.threads, start));
    }
    let names = ["curve.csv", "energy.csv", "curve.svg"];
    let mut out = OutputDir::prepare(&args.output.out, &names, args.output.force)?;
    let output = run(&model, &config).map_err(|e| solver_failure(e.error))?;
    let report = energy_report(&output.history);
    out.write("curve.csv", &output.curve.to_csv())?;
    out.write("energy.csv", &report.to_csv())?;
    out.write("curve.svg", &svg::force_displacement("Force–displacement", &[("simulated", &output.curve)]))?;
    if let Some(peak) = output.curve.peak() {
        println!("peak force {:.6} N at {:.4} mm", peak.force, peak.displacement * 1e3);
    }
    println!("dt {:e} s, {} steps", output.dt, output.steps);
    println!(
        "max kinetic/internal {:.4}, max energy imbalance {:.4}, max hourglass/internal {:.4}",
        report.max_kinetic_ratio, report.max_imbalance_fraction, report.max_hourglass_ratio
    );
    if !report.quasi_static() {
        println!("warning: kinetic energy exceeded 5% of internal energy at {} output times", report.flagged_times.len());
    }
    out.finish(manifest("simulate", config_json, inputs, None, config.threads, start))
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let start = Instant::now();
    if !(args.noise >= 0.0 && args.noise < 1.0) {
        return Err(CliError::Usage(format!("--noise must lie in [0, 1), got {}", args.noise)));
    }
    let mut inputs = Vec::new();
    let (model, config) = build_model(&args.model, &mut inputs)?;
    let mut out = OutputDir::prepare(&args.output.out, &["target.csv"], args.output.force)?;
    let noise = if args.noise > 0.0 {
        Noise::Uniform { percent: 100.0 * args.noise }
    } else {
        Noise::None
    };
    let curve = synthesize_target(&model, &config, noise, args.seed).map_err(solver_failure)?;
    out.write("target.csv", &curve.to_csv())?;
    println!("{} samples", curve.len());
    let config_json = serde_json::json!({ "simulation": config, "noise": noise });
    out.finish(manifest("synth", config_json, inputs, Some(args.seed), config.threads, start))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn first_ogden(file: &ParameterFile, path: &Path) -> Result<(meningefem::material::OgdenParams, f64), CliError> {
    for rec in &file.materials {
        if let Material::Ogden { params, density } = rec.resolve().map_err(|e| CliError::Usage(e.to_string()))? {
            return Ok((params, density));
        }
    }
    Err(CliError::Usage(format!("{} holds no Ogden material", path.display())))
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let start = Instant::now();
    if let Some(n) = args.threads {
        // the global pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut inputs = Vec::new();
    let spec: CalibrationSpec = parse_json(&read_input(&args.spec, &mut inputs)?, &args.spec)?;
    let base = args.spec.parent().unwrap_or(Path::new("."));
    let target_path = resolve(base, &spec.target);
    let target = ForceDisplacementCurve::from_csv(&read_input(&target_path, &mut inputs)?)
        .map_err(|e| CliError::Usage(format!("{}: {e}", target_path.display())))?;
    let params: Vec<PathBuf> = spec.params.iter().map(|p| resolve(base, p)).collect();
    let mesh = load_mesh_file(&resolve(base, &spec.mesh), &params, &mut inputs)?;
    let config = load_config(spec.config.as_ref().map(|p| resolve(base, p)).as_deref(), args.threads, &mut inputs)?;

    let (names, params_name): (&[&str], &str) = match args.stage {
        Stage::Tissue => (&["report.json", "trace.csv", "fit.csv", "fit.svg", "tissue_params.json"], "tissue_params.json"),
        Stage::Interface => (
            &["report.json", "trace.csv", "fit.csv", "fit.svg", "interface_params.json"],
            "interface_params.json",
        ),
    };
    let mut out = OutputDir::prepare(&args.output.out, names, args.output.force)?;
    let calibration_failure = |e: meningefem::calibrate::CalibrationError| match e {
        meningefem::calibrate::CalibrationError::Invalid(m) => CliError::Usage(m),
        other => CliError::Runtime(other.to_string()),
    };

    let mut derived = BTreeMap::new();
    let (result, recovered): (CalibrationResult, ParameterFile) = match args.stage {
        Stage::Tissue => {
            let mut fit = TissueFit {
                mode: spec.mode,
                free: spec.free.clone(),
                fixed: spec.fixed.clone(),
                optimizer: spec.optimizer.clone(),
                ..TissueFit::default()
            };
            if let Some(w) = spec.window {
                fit.strain_window = w;
            }
            let (p, result) = calibrate_tissue(&target, &mesh, &config, &fit).map_err(calibration_failure)?;
            derived.insert("mu0".to_string(), p.mu[0] + p.mu[1]);
            derived.insert("D1".to_string(), p.d[0]);
            let mut materials: Vec<String> = mesh
                .hexes
                .iter()
                .filter(|h| !mesh.is_rigid(h))
                .map(|h| h.material.clone())
                .collect();
            materials.sort();
            materials.dedup();
            let records = materials
                .iter()
                .map(|m| MaterialRecord::ogden(m, p.mu, p.alpha, fit.nu, fit.density))
                .collect();
            (
                result,
                ParameterFile {
                    materials: records,
                    laws: Vec::new(),
                },
            )
        }
        Stage::Interface => {
            let tissue_path = args
                .tissue
                .clone()
                .or_else(|| spec.tissue.as_ref().map(|p| resolve(base, p)))
                .ok_or_else(|| {
                    CliError::Usage(
                        "the interface stage requires a tissue-parameters file (--tissue or \"tissue\" in the spec)".into(),
                    )
                })?;
            let tissue_file = load_parameter_file(&tissue_path, &mut inputs)?;
            let (tissue, density) = first_ogden(&tissue_file, &tissue_path)?;
            let mut fit = InterfaceFit {
                free: spec.free.clone(),
                fixed: spec.fixed.clone(),
                density,
                optimizer: spec.optimizer.clone(),
                ..InterfaceFit::default()
            };
            if let Some(w) = spec.window {
                fit.window_factor = w;
            }
            let (law, result) =
                calibrate_interface(&target, &mesh, &config, &tissue, &fit).map_err(calibration_failure)?;
            let mut laws: Vec<String> = mesh.cohesives.iter().map(|c| c.law.clone()).collect();
            laws.sort();
            laws.dedup();
            let records = laws.into_iter().map(|name| LawRecord { name, law }).collect();
            (
                result,
                ParameterFile {
                    materials: Vec::new(),
                    laws: records,
                },
            )
        }
    };

    let report = CalibrationReport {
        stage: args.stage,
        parameters: &result.parameters,
        derived,
        objective_value: result.objective_value,
        peak_force_error_pct: result.peak_force_error_pct,
        iterations: result.iterations,
        evaluations: result.evaluations,
        converged: result.converged,
        fit_window_m: result.fit_window,
    };
    out.write("report.json", &to_json(&report))?;
    out.write("trace.csv", &result.trace_csv())?;
    out.write("fit.csv", &result.fitted_curve.to_csv())?;
    out.write(
        "fit.svg",
        &svg::force_displacement("Target and fitted curves", &[("target", &target), ("fitted", &result.fitted_curve)]),
    )?;
    out.write(params_name, &to_json(&recovered))?;
    for (name, value) in result.parameters.iter().chain(&report.derived) {
        println!("{name} = {value:.6e}");
    }
    match result.peak_force_error_pct {
        Some(e) => println!("peak-force error {e:.3}%"),
        None => println!("peak-force error undefined (target peak is not positive)"),
    }
    println!("objective {:.6e} N after {} iterations", result.objective_value, result.iterations);
    let config_json = serde_json::json!({
        "stage": args.stage,
        "simulation": config,
        "mode": spec.mode,
        "free": spec.free,
        "fixed": spec.fixed,
        "window": spec.window,
        "optimizer": spec.optimizer,
    });
    out.finish(manifest("calibrate", config_json, inputs, None, args.threads, start))?;
    if result.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Mesh {
            action: MeshCommand::Gen(a),
        } => cmd_mesh_gen(a),
        Command::Mesh {
            action: MeshCommand::Quality(a),
        } => cmd_mesh_quality(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Calibrate(a) => cmd_calibrate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
