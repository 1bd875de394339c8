//! `pflow`: generate shape data, fit principal flows, simulate, compute FTLE
//! fields and fit phase response curves. Every command writes its artifacts and
//! a `manifest.json` into `--out`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use principal_flow::data::{generate, load_cloud, save_cloud, ShapeKind, ShapeSpec};
use principal_flow::diffcore::{Activation, MlpArchitecture, ParamVector};
use principal_flow::field::{ConstantField, LinearField, RotationField, VelocityField};
use principal_flow::ftle::{ftle_field, write_ftle_csv, GridSpec};
use principal_flow::integrate::{simulate_batch, write_trajectories_csv, IntegratorSpec, Scheme};
use principal_flow::prc::{
    fit_prc_with, simulate_prc_in, target_prc, uniform_phases, write_prc_csv, PRCParams, PrcFitConfig, ShiftUnit,
};
use principal_flow::train::{
    fit_principal_flow_with, write_training_log_csv, InitDistribution, IterationRecord, TrainConfig,
};
use principal_flow::{Error, StateVector};

const MANIFEST: &str = "manifest.json";

#[derive(Parser)]
#[command(name = "pflow", version, about = "Principal flow fitting and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a noisy shape point cloud.
    Gen(GenArgs),
    /// Fit a principal flow to a point cloud.
    Fit(FitArgs),
    /// Integrate trajectories of a model.
    Simulate(SimulateArgs),
    /// Finite-time Lyapunov exponents of a model on a grid.
    Ftle(FtleArgs),
    /// Phase response curves.
    #[command(subcommand)]
    Prc(PrcCommand),
}

#[derive(Args)]
struct GenArgs {
    /// c_arc, y_two_branch or y_three_branch.
    #[arg(long, value_parser = parse_shape)]
    shape: ShapeKind,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = principal_flow::data::DEFAULT_NOISE_STD)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Point cloud CSV with an `x,y` header.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// TOML or JSON training config; a previous fit manifest also works.
    /// Keys it sets override the defaults, flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Shape whose anchor seeds the initial conditions. Inferred from the data
    /// file name when it is a shape name.
    #[arg(long, value_parser = parse_shape)]
    shape: Option<ShapeKind>,
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    init_mean: Option<StateVector>,
    #[arg(long)]
    init_sigma: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_trajectories: Option<usize>,
    /// Std of the Gaussian kick added after every training step.
    #[arg(long)]
    noise_inject: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
    /// Hidden layer widths, e.g. `64,64`.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long, value_parser = parse_activation)]
    activation: Option<Activation>,
    /// Also write `checkpoint_<iteration>.json` every this many iterations.
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Write 0 in the wall_ms column so logs are byte-reproducible.
    #[arg(long)]
    no_wall_clock: bool,
}

#[derive(Args)]
struct ModelArgs {
    /// Checkpoint path, or `analytic:constant`, `analytic:rotation`,
    /// `analytic:rigid-rotation`, `analytic:saddle`.
    #[arg(long)]
    model: String,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// CSV of initial conditions with an `x,y` header.
    #[arg(long, required_unless_present = "init")]
    inits: Option<PathBuf>,
    /// Initial condition `x,y`; repeatable.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    init: Vec<StateVector>,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    #[arg(long, value_parser = parse_scheme, default_value = "rk4")]
    scheme: Scheme,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FtleArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// `x_min,x_max,y_min,y_max`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1.5,1.5,-1.5,1.5")]
    bounds: Vec<f64>,
    #[arg(long, default_value_t = 101)]
    nx: usize,
    #[arg(long, default_value_t = 101)]
    ny: usize,
    /// Integration horizon T.
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// Largest step; the step count is `ceil(T / dt)`.
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    #[arg(long, value_parser = parse_scheme, default_value = "rk4")]
    scheme: Scheme,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum PrcCommand {
    /// Fit a field whose phase response matches the target curve.
    Fit(PrcFitArgs),
    /// Measure the phase response of a model against the target curve.
    Eval(PrcEvalArgs),
}

#[derive(Args, Serialize, Clone)]
struct PrcShared {
    /// Number of uniformly spaced phases.
    #[arg(long, default_value_t = principal_flow::prc::DEFAULT_PHASES, value_parser = parse_count)]
    phases: usize,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    delta_a: f64,
    /// Relaxation horizon in periods.
    #[arg(long, default_value_t = 3.0)]
    relax_periods: f64,
    #[arg(long, default_value_t = principal_flow::prc::DEFAULT_RELAX_DT)]
    dt: f64,
    /// Report shifts in radians instead of degrees.
    #[arg(long)]
    radians: bool,
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
    sigma_phi: f64,
    #[arg(long, default_value_t = 0.4, allow_negative_numbers = true)]
    a1: f64,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    a2: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    xi1: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    xi2: f64,
    /// Overall multiplier of the target curve (100 gives degrees).
    #[arg(long, default_value_t = 100.0)]
    scale: f64,
}

#[derive(Args)]
struct PrcFitArgs {
    #[command(flatten)]
    shared: PrcShared,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    lambda_circle: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Skip the supervised limit-cycle pre-fit.
    #[arg(long)]
    no_warm_start: bool,
    #[arg(long)]
    no_wall_clock: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PrcEvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    shared: PrcShared,
    #[arg(long)]
    out: PathBuf,
}

fn parse_shape(s: &str) -> Result<ShapeKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_count(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_point(s: &str) -> Result<StateVector, String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected `x,y`, got `{s}`"))?;
    let x: f64 = x.trim().parse().map_err(|e| format!("bad x in `{s}`: {e}"))?;
    let y: f64 = y.trim().parse().map_err(|e| format!("bad y in `{s}`: {e}"))?;
    Ok(StateVector::new(x, y))
}

/// A failure that should exit with the usage code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Config errors raised by the library are usage errors too.
fn lib(e: Error) -> anyhow::Error {
    match e {
        Error::Config(m) => usage(m),
        other => other.into(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if e.use_stderr() {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(code as u8);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Ftle(a) => cmd_ftle(a),
        Command::Prc(PrcCommand::Fit(a)) => cmd_prc_fit(a),
        Command::Prc(PrcCommand::Eval(a)) => cmd_prc_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut message = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !message.contains(&cause) {
                    if !message.is_empty() {
                        message.push_str(": ");
                    }
                    message.push_str(&cause);
                }
            }
            eprintln!("error: {message}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// Collects artifacts written into one output directory.
struct OutDir {
    root: PathBuf,
    artifacts: Vec<String>,
}

impl OutDir {
    fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.root.join(name)
    }

    fn writer(&mut self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let path = self.path(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(file))
    }

    fn finish(self, command: &str, seed: Option<u64>, config: Value) -> anyhow::Result<()> {
        let manifest = json!({
            "command": command,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "config": config,
            "artifacts": self.artifacts,
        });
        let path = self.root.join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

fn cmd_gen(a: GenArgs) -> anyhow::Result<()> {
    let spec = ShapeSpec::new(a.shape, a.n, a.noise, a.seed).map_err(lib)?;
    let cloud = generate(&spec)?;
    let mut out = OutDir::create(&a.out)?;
    let path = out.path(&format!("{}.csv", a.shape));
    save_cloud(&path, &cloud)?;
    out.finish(
        "gen",
        Some(a.seed),
        json!({ "shape": a.shape.name(), "n": a.n, "noise": a.noise, "seed": a.seed }),
    )
}

/// Reads a TOML or JSON object; a manifest contributes its `config` entry.
fn read_config_value(path: &Path) -> anyhow::Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: Value = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
    } else {
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
    };
    match value {
        Value::Object(mut map) if map.contains_key("command") && map.contains_key("config") => {
            match map.remove("config") {
                Some(Value::Object(mut c)) if c.contains_key("train") => Ok(c.remove("train").unwrap_or_default()),
                Some(c) => Ok(c),
                None => Ok(Value::Null),
            }
        }
        v @ Value::Object(_) => Ok(v),
        _ => Err(usage(format!("{}: expected a table of settings", path.display()))),
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn architecture(hidden: &[usize], activation: Activation) -> anyhow::Result<MlpArchitecture> {
    let mut widths = vec![2];
    widths.extend_from_slice(hidden);
    widths.push(2);
    MlpArchitecture::new(widths, activation).map_err(|e| usage(e.to_string()))
}

fn resolve_fit_config(a: &FitArgs, data: &principal_flow::loss::DataCloud) -> anyhow::Result<TrainConfig> {
    let shape = a.shape.or_else(|| data.name.parse().ok());
    let mut cfg = match shape {
        Some(kind) => TrainConfig::for_shape(kind, data)?,
        None => TrainConfig::default(),
    };
    if let Some(path) = &a.config {
        let mut value = serde_json::to_value(&cfg)?;
        merge(&mut value, read_config_value(path)?);
        cfg = serde_json::from_value(value).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    } else if shape.is_none() && a.init_mean.is_none() {
        bail!(usage(
            "cannot infer the initial condition: pass --shape, --init-mean or a --config"
        ));
    }
    if let Some(m) = a.init_mean {
        cfg.init_distribution.mean = m;
    }
    if let Some(s) = a.init_sigma {
        cfg.init_distribution = InitDistribution {
            sigma: s,
            ..cfg.init_distribution
        };
    }
    if let Some(v) = a.iterations {
        cfg.n_iterations = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.n_trajectories {
        cfg.n_trajectories = v;
    }
    if let Some(v) = a.noise_inject {
        cfg.noise_sigma = v;
    }
    if let Some(v) = a.dt {
        cfg.integrator.dt = v;
    }
    if let Some(v) = a.steps {
        cfg.integrator.n_steps = v;
    }
    if let Some(v) = a.scheme {
        cfg.integrator.scheme = v;
    }
    if a.hidden.is_some() || a.activation.is_some() {
        let hidden = match &a.hidden {
            Some(h) => h.clone(),
            None => cfg.arch.widths()[1..cfg.arch.widths().len() - 1].to_vec(),
        };
        cfg.arch = architecture(&hidden, a.activation.unwrap_or(cfg.arch.activation()))?;
    }
    cfg.validate().map_err(lib)?;
    Ok(cfg)
}

fn log_records(records: &[IterationRecord], no_wall_clock: bool) -> Vec<IterationRecord> {
    records
        .iter()
        .map(|r| IterationRecord {
            wall_ms: if no_wall_clock { 0.0 } else { r.wall_ms },
            ..*r
        })
        .collect()
}

fn cmd_fit(a: FitArgs) -> anyhow::Result<()> {
    let data = load_cloud(&a.data)?;
    let cfg = resolve_fit_config(&a, &data)?;
    if a.checkpoint_every == Some(0) {
        bail!(usage("--checkpoint-every must be positive"));
    }
    let mut out = OutDir::create(&a.out)?;
    let mut periodic = Vec::new();
    let mut save_error = None;
    let report = fit_principal_flow_with(&cfg, &data, None, |rec, params| {
        if let Some(every) = a.checkpoint_every {
            if (rec.iteration + 1) % every == 0 && save_error.is_none() {
                let name = format!("checkpoint_{}.json", rec.iteration + 1);
                match params.save_checkpoint(a.out.join(&name)) {
                    Ok(()) => periodic.push(name),
                    Err(e) => save_error = Some(e),
                }
            }
        }
    })?;
    if let Some(e) = save_error {
        return Err(e.into());
    }
    out.artifacts.extend(periodic);
    report.final_params.save_checkpoint(out.path("checkpoint.json"))?;
    write_training_log_csv(out.writer("training_log.csv")?, &log_records(&report.records, a.no_wall_clock))?;
    let config = json!({
        "data": a.data.display().to_string(),
        "train": cfg,
        "noise_inject": cfg.noise_sigma,
        "checkpoint_every": a.checkpoint_every,
        "no_wall_clock": a.no_wall_clock,
    });
    out.finish("fit", Some(cfg.seed), config)
}

/// A checkpointed network or one of the analytic test fields.
enum Model {
    Net(VelocityField),
    Constant(ConstantField),
    Rotation(RotationField),
    Linear(LinearField),
}

macro_rules! with_field {
    ($model:expr, $f:ident => $body:expr) => {
        match $model {
            Model::Net($f) => $body,
            Model::Constant($f) => $body,
            Model::Rotation($f) => $body,
            Model::Linear($f) => $body,
        }
    };
}

fn load_model(spec: &str) -> anyhow::Result<Model> {
    if let Some(name) = spec.strip_prefix("analytic:") {
        return match name {
            "constant" => Ok(Model::Constant(ConstantField(StateVector::new(1.0, 0.0)))),
            "rotation" => Ok(Model::Rotation(RotationField::default())),
            "rigid-rotation" => Ok(Model::Linear(LinearField::rigid_rotation())),
            "saddle" => Ok(Model::Linear(LinearField::saddle())),
            other => Err(usage(format!("unknown analytic model `{other}`"))),
        };
    }
    let params = ParamVector::load_checkpoint(spec).with_context(|| format!("loading model {spec}"))?;
    Ok(Model::Net(VelocityField::new(params)))
}

fn cmd_simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let model = load_model(&a.model.model)?;
    let mut inits = a.init.clone();
    if let Some(path) = &a.inits {
        inits.extend(load_cloud(path)?.points);
    }
    let spec = IntegratorSpec::new(a.scheme, a.dt, a.steps).map_err(|e| usage(e.to_string()))?;
    if !(a.noise >= 0.0 && a.noise.is_finite()) {
        bail!(usage("--noise must be non-negative"));
    }
    let trajs = with_field!(&model, f => simulate_batch(f, &inits, &spec, a.noise, a.seed))?;
    let mut out = OutDir::create(&a.out)?;
    write_trajectories_csv(out.writer("trajectories.csv")?, &trajs)?;
    let config = json!({
        "model": a.model.model,
        "inits": inits.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>(),
        "integrator": spec,
        "noise": a.noise,
    });
    out.finish("simulate", Some(a.seed), config)
}

fn cmd_ftle(a: FtleArgs) -> anyhow::Result<()> {
    let model = load_model(&a.model.model)?;
    let b = &a.bounds;
    if b.len() != 4 {
        bail!(usage("--bounds takes x_min,x_max,y_min,y_max"));
    }
    let grid = GridSpec::new(b[0], b[1], b[2], b[3], a.nx, a.ny).map_err(|e| usage(e.to_string()))?;
    let spec = IntegratorSpec::over_horizon(a.scheme, a.dt, a.horizon).map_err(|e| usage(e.to_string()))?;
    let field = with_field!(&model, f => ftle_field(f, &grid, &spec))?;
    let mut out = OutDir::create(&a.out)?;
    write_ftle_csv(out.writer("ftle.csv")?, &field)?;
    let config = json!({ "model": a.model.model, "grid": grid, "integrator": spec });
    out.finish("ftle", None, config)
}

struct PrcSetup {
    phases: Vec<f64>,
    target: principal_flow::prc::PRCCurve,
    relax: IntegratorSpec,
    unit: ShiftUnit,
}

fn prc_setup(s: &PrcShared) -> anyhow::Result<PrcSetup> {
    let params = PRCParams {
        sigma_phi: s.sigma_phi,
        xi1: s.xi1,
        xi2: s.xi2,
        a1: s.a1,
        a2: s.a2,
        scale: s.scale,
    };
    let phases = uniform_phases(s.phases).map_err(lib)?;
    let target = target_prc(&phases, &params)?;
    let horizon = s.relax_periods * std::f64::consts::TAU;
    let relax = IntegratorSpec::over_horizon(Scheme::Rk4, s.dt, horizon).map_err(|e| usage(e.to_string()))?;
    if horizon < std::f64::consts::TAU {
        bail!(usage("--relax-periods must be at least 1"));
    }
    if 1.0 + s.delta_a <= 0.0 {
        bail!(usage("--delta-a must keep the amplitude positive"));
    }
    let unit = if s.radians { ShiftUnit::Radians } else { ShiftUnit::Degrees };
    Ok(PrcSetup {
        phases,
        target,
        relax,
        unit,
    })
}

fn cmd_prc_fit(a: PrcFitArgs) -> anyhow::Result<()> {
    let setup = prc_setup(&a.shared)?;
    let mut cfg = PrcFitConfig {
        delta_a: a.shared.delta_a,
        unit: setup.unit,
        ..PrcFitConfig::default()
    };
    cfg.train.integrator = setup.relax;
    cfg.train.seed = a.seed;
    if let Some(v) = a.iterations {
        cfg.train.n_iterations = v;
    }
    if let Some(v) = a.lr {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = a.lambda_circle {
        cfg.lambda_circle = v;
    }
    if let Some(h) = &a.hidden {
        cfg.train.arch = architecture(h, Activation::Tanh)?;
    }
    if a.no_warm_start {
        cfg.warm_start.iterations = 0;
    }
    // the fit compares in the reported unit, so the target is rescaled with it
    let target = principal_flow::prc::PRCCurve {
        phases: setup.target.phases.clone(),
        shifts: setup.target.shifts.iter().map(|s| s * unit_factor(setup.unit)).collect(),
    };
    let report = fit_prc_with(&cfg, &target, None, |_, _| {}).map_err(lib)?;
    let field = VelocityField::new(report.final_params.clone());
    let simulated = simulate_prc_in(&field, &setup.phases, cfg.delta_a, &setup.relax, setup.unit)?;
    let mut out = OutDir::create(&a.out)?;
    report.final_params.save_checkpoint(out.path("checkpoint.json"))?;
    write_training_log_csv(out.writer("training_log.csv")?, &log_records(&report.records, a.no_wall_clock))?;
    write_prc_csv(out.writer("prc.csv")?, &target, &simulated)?;
    let config = json!({ "prc": a.shared, "fit": cfg, "no_wall_clock": a.no_wall_clock });
    out.finish("prc fit", Some(a.seed), config)
}

/// Target curves are specified in degrees.
fn unit_factor(unit: ShiftUnit) -> f64 {
    match unit {
        ShiftUnit::Degrees => 1.0,
        ShiftUnit::Radians => std::f64::consts::PI / 180.0,
    }
}

fn cmd_prc_eval(a: PrcEvalArgs) -> anyhow::Result<()> {
    let setup = prc_setup(&a.shared)?;
    let model = load_model(&a.model.model)?;
    let simulated =
        with_field!(&model, f => simulate_prc_in(f, &setup.phases, a.shared.delta_a, &setup.relax, setup.unit))?;
    let target = principal_flow::prc::PRCCurve {
        phases: setup.target.phases.clone(),
        shifts: setup.target.shifts.iter().map(|s| s * unit_factor(setup.unit)).collect(),
    };
    let mut out = OutDir::create(&a.out)?;
    write_prc_csv(out.writer("prc.csv")?, &target, &simulated)?;
    let config = json!({ "model": a.model.model, "prc": a.shared, "relax": setup.relax });
    out.finish("prc eval", None, config)
}
