use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use matlift::bounds::bound_table;
use matlift::harness::{
    bounds_table, emit_csv, resolve_dist, run_experiment, BaseSource, ConfigBuilder, ConfigError, ExperimentKind,
    HarnessError, Table,
};
use matlift::lift::{build_lift, LiftedBlockMatrix};
use matlift::model::SpreadParams;
use matlift::spectral::{default_max_iter, spectral_norm_dense, spectral_norm_iterative, spectral_norm_power};
use matlift::RngState;

const EXIT_CONFIG: u8 = 1;
const EXIT_GATE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "matlift", version, about = "Random matrix lifts: sampling, norms, moment checks and bounds")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (1 = sequential, 0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample one lift and write it in dump format.
    Lift(LiftArgs),
    /// Spectral norm of one sampled or dumped lift.
    Norm(NormArgs),
    /// Monte Carlo mean of the lift norm.
    McNorm(ExperimentArgs),
    /// Moment comparison against the Y_r yardstick over an instance battery.
    PropCompare(ExperimentArgs),
    /// Centered 2-lift norms of clique unions across an n grid.
    CliqueScaling(ExperimentArgs),
    /// New-eigenvalue norms of random graph k-lifts.
    KliftSweep(ExperimentArgs),
    /// Exact and Monte Carlo moment oracles.
    OracleSuite(ExperimentArgs),
    /// Table of every bound at one parameter point.
    Bounds(BoundsArgs),
}

#[derive(Args, Debug)]
struct LiftArgs {
    /// Generator name or matrix/edge-list file.
    #[arg(long)]
    base: String,
    /// Lift law name or discrete-law file.
    #[arg(long)]
    dist: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NormMethod {
    Auto,
    Dense,
    Lanczos,
    Power,
}

#[derive(Args, Debug)]
struct NormArgs {
    #[arg(long, conflicts_with = "input", requires = "dist")]
    base: Option<String>,
    #[arg(long, requires = "base")]
    dist: Option<String>,
    /// Lift dump file instead of sampling.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    method: NormMethod,
    #[arg(long, default_value_t = matlift::spectral::DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args, Debug, Default)]
struct ExperimentArgs {
    #[arg(long)]
    base: Option<String>,
    #[arg(long)]
    dist: Option<String>,
    /// Comma-separated block sizes.
    #[arg(long)]
    k: Option<String>,
    /// Comma-separated moment orders.
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Comma-separated n values for clique scaling.
    #[arg(long)]
    n_grid: Option<String>,
    /// Comma-separated `base:law` instances.
    #[arg(long)]
    instances: Option<String>,
    /// Comma-separated constants C for bound columns.
    #[arg(long = "C")]
    c: Option<String>,
    /// Comma-separated ε values for fitted constants.
    #[arg(long)]
    eps: Option<String>,
    /// Constant for the upper-bound gate.
    #[arg(long)]
    gate_c: Option<f64>,
    /// Add per-trial wall-clock times to the records file.
    #[arg(long)]
    timing: bool,
    /// Also write per-trial records here.
    #[arg(long)]
    records: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    /// Take σ, σ* and n from this base instead of the flags.
    #[arg(long)]
    base: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_star: f64,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Gate(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Gate(_) => EXIT_GATE,
            Failure::Io(_) => EXIT_IO,
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Io { .. } | HarnessError::Csv(_) => Failure::Io(e.to_string()),
            HarnessError::Config(ConfigError::Io { .. }) => Failure::Io(e.to_string()),
            HarnessError::Config(_)
            | HarnessError::Model(_)
            | HarnessError::Dist(_)
            | HarnessError::Bound(_)
            | HarnessError::Pool(_) => Failure::Config(e.to_string()),
            HarnessError::Lift(_) | HarnessError::Spectral(_) | HarnessError::Moment(_) => Failure::Gate(e.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        HarnessError::from(e).into()
    }
}

fn write_table(table: &Table, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => emit_csv(table, path).map_err(Failure::from),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            table.write_csv(&mut lock).map_err(Failure::from)?;
            lock.flush().map_err(|e| Failure::Io(e.to_string()))
        }
    }
}

fn write_text(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cwd() -> PathBuf {
    PathBuf::from(".")
}

fn sample_lift(base: &str, dist: &str, seed: u64) -> Result<LiftedBlockMatrix, Failure> {
    let a = BaseSource::resolve(base, &cwd()).and_then(|b| b.matrix()).map_err(Failure::Config)?;
    let d = resolve_dist(dist, &cwd()).map_err(Failure::Config)?;
    Ok(build_lift(&a, &d, &mut RngState::new(seed, 0)))
}

fn run_lift(g: &Global, args: &LiftArgs) -> Result<(), Failure> {
    let lift = sample_lift(&args.base, &args.dist, g.seed.unwrap_or(0))?;
    write_text(&lift.to_dump(), g.out.as_deref())
}

fn run_norm(g: &Global, args: &NormArgs) -> Result<(), Failure> {
    let seed = g.seed.unwrap_or(0);
    let lift = match (&args.input, &args.base, &args.dist) {
        (Some(path), _, _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            LiftedBlockMatrix::parse_dump(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        (None, Some(b), Some(d)) => sample_lift(b, d, seed)?,
        _ => return Err(Failure::Config("give either --input or both --base and --dist".into())),
    };
    let dim = lift.dim();
    let method = match args.method {
        NormMethod::Auto if dim <= matlift::lift::DENSE_LIMIT => NormMethod::Dense,
        NormMethod::Auto => NormMethod::Lanczos,
        m => m,
    };
    let mut rng = RngState::new(seed, 1);
    let op = |x: &[f64], y: &mut [f64]| lift.matvec_into(x, y).expect("dimensions agree");
    let (name, value, residual, iterations, converged) = match method {
        NormMethod::Dense => {
            let d = lift.to_dense().map_err(|e| Failure::Config(e.to_string()))?;
            let v = spectral_norm_dense(&d).map_err(|e| Failure::Gate(e.to_string()))?;
            ("dense", v, 0.0, 0, true)
        }
        NormMethod::Lanczos => {
            let e = spectral_norm_iterative(op, dim, args.tol, default_max_iter(dim), &mut rng);
            ("lanczos", e.value, e.residual, e.iterations, e.converged)
        }
        NormMethod::Power => {
            let e = spectral_norm_power(op, dim, args.tol, 20 * dim.max(50), &mut rng);
            ("power", e.value, e.residual, e.iterations, e.converged)
        }
        NormMethod::Auto => unreachable!("resolved above"),
    };
    let mut t = Table::new(["method", "dim", "norm", "residual", "iterations", "converged"]);
    t.push(vec![name.into(), dim.into(), value.into(), residual.into(), iterations.into(), converged.into()]);
    write_table(&t, g.out.as_deref())?;
    if converged {
        Ok(())
    } else {
        Err(Failure::Gate(format!("{name} did not converge (residual {residual:e})")))
    }
}

fn run_experiment_command(g: &Global, kind: ExperimentKind, args: &ExperimentArgs) -> Result<(), Failure> {
    let mut builder = match &g.config {
        Some(path) => ConfigBuilder::from_file(path)?,
        None => ConfigBuilder::new(),
    };
    match builder.get("experiment") {
        None => {
            builder.set("experiment", kind.name())?;
        }
        Some(name) if name == kind.name() => {}
        Some(name) => {
            return Err(Failure::Config(format!("config is for `{name}`, not `{}`", kind.name())));
        }
    }
    let overrides: [(&str, Option<String>); 12] = [
        ("base", args.base.clone()),
        ("dist", args.dist.clone()),
        ("k", args.k.clone()),
        ("p", args.p.clone()),
        ("trials", args.trials.map(|x| x.to_string())),
        ("tol", args.tol.map(|x| x.to_string())),
        ("n_grid", args.n_grid.clone()),
        ("instances", args.instances.clone()),
        ("C", args.c.clone()),
        ("eps", args.eps.clone()),
        ("gate_C", args.gate_c.map(|x| x.to_string())),
        ("master_seed", g.seed.map(|x| x.to_string())),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            builder.set(key, v)?;
        }
    }
    if let Some(t) = g.threads {
        builder.set("threads", t.to_string())?;
    }
    if args.timing {
        builder.set("timing", "true")?;
    }
    let cfg = builder.build()?;
    let out = run_experiment(&cfg)?;
    write_table(&out.table, g.out.as_deref())?;
    if let Some(path) = &args.records {
        emit_csv(&out.records_table(), path)?;
    }
    if out.gate_ok {
        Ok(())
    } else {
        Err(Failure::Gate(format!("{} gate failed", kind.name())))
    }
}

fn run_bounds(g: &Global, args: &BoundsArgs) -> Result<(), Failure> {
    let (spread, n) = match &args.base {
        Some(b) => {
            let a = BaseSource::resolve(b, &cwd()).and_then(|b| b.matrix()).map_err(Failure::Config)?;
            (a.spread(), a.n())
        }
        None => {
            if !(args.sigma >= 0.0 && args.sigma_star >= 0.0) {
                return Err(Failure::Config("σ and σ* must be nonnegative".into()));
            }
            (SpreadParams { sigma: args.sigma, sigma_star: args.sigma_star }, args.n)
        }
    };
    let reports = bound_table(spread, n, args.k, args.eps, args.c).map_err(|e| Failure::Config(e.to_string()))?;
    write_table(&bounds_table(&reports), g.out.as_deref())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let Format::Csv = cli.global.format;
    let g = &cli.global;
    match &cli.command {
        Command::Lift(a) => run_lift(g, a),
        Command::Norm(a) => run_norm(g, a),
        Command::McNorm(a) => run_experiment_command(g, ExperimentKind::McNorm, a),
        Command::PropCompare(a) => run_experiment_command(g, ExperimentKind::PropCompare, a),
        Command::CliqueScaling(a) => run_experiment_command(g, ExperimentKind::CliqueScaling, a),
        Command::KliftSweep(a) => run_experiment_command(g, ExperimentKind::KliftSweep, a),
        Command::OracleSuite(a) => run_experiment_command(g, ExperimentKind::OracleSuite, a),
        Command::Bounds(a) => run_bounds(g, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = match &f {
                Failure::Config(m) => format!("config error: {m}"),
                Failure::Gate(m) => format!("check failed: {m}"),
                Failure::Io(m) => format!("I/O error: {m}"),
            };
            eprintln!("matlift: {msg}");
            ExitCode::from(f.code())
        }
    }
}
