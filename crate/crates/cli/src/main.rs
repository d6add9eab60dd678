//! `kinex`: reproducible experiments on kinetic wealth-exchange models.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use kinex::acceptance::{contraction_pairs, Suite};
use kinex::dist::{Density, EmpiricalSample, GammaParams, Grid};
use kinex::laplace::{contraction_study, SGrid};
use kinex::mixed::{mixed_moment, moment_table, write_moment_table};
use kinex::operators::{Evolution, IterationTrace, ModelKind, StopReason};
use kinex::sim::{self, InitialCondition, SimConfig};

use output::OutDir;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("stop tolerance not reached after {0} steps")]
    MaxSteps(usize),
    #[error("{0}")]
    Leak(String),
    #[error("{0} acceptance criteria failed")]
    VerifyFailed(usize),
    #[error(transparent)]
    Core(#[from] kinex::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use kinex::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::MaxSteps(_) => 4,
            CliError::Leak(_) => 5,
            CliError::VerifyFailed(_) => 1,
            CliError::Core(e) => match e {
                E::Parameter { .. } | E::Input(_) | E::Precondition(_) | E::Support(_) => 2,
                E::Io(_) => 3,
                E::Truncation(_) => 5,
                _ => 1,
            },
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "kinex", version, about, args_override_self = true)]
struct Cli {
    /// `key = value` file supplying any flag; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-population Monte Carlo run.
    Simulate(SimulateArgs),
    /// Iterate the density operator to its fixed point.
    Evolve(EvolveArgs),
    /// Closed-form moments of the mixed equilibrium over a μ sweep.
    Moments(MomentsArgs),
    /// d_α between iterated density pairs.
    Contraction(ContractionArgs),
    /// Run the acceptance checks and print a JSON report.
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Mean wealth.
    #[arg(long, default_value_t = 1.0)]
    w: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Grid cells (default 4096).
    #[arg(long)]
    grid_n: Option<usize>,
    /// Grid truncation point (default 20 w).
    #[arg(long)]
    grid_xmax: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn grid(&self) -> CliResult<Grid> {
        if !(self.w.is_finite() && self.w > 0.0) {
            return Err(CliError::Usage(format!("--w must be > 0, got {}", self.w)));
        }
        let x_max = self.grid_xmax.unwrap_or(Grid::DEFAULT_SPAN * self.w);
        let n = self.grid_n.unwrap_or(Grid::DEFAULT_CELLS);
        Grid::new(x_max, n).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Ie,
    Drm,
    Mixed,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, value_enum)]
    model: Model,
    /// Directed-transfer probability, for `--model mixed`.
    #[arg(long)]
    mu: Option<f64>,
}

impl ModelArgs {
    fn kind(&self) -> CliResult<ModelKind> {
        match (self.model, self.mu) {
            (Model::Mixed, Some(mu)) => {
                ModelKind::mixed(mu).map_err(|e| CliError::Usage(e.to_string()))
            }
            (Model::Mixed, None) => Err(CliError::Usage("--model mixed needs --mu".into())),
            (_, Some(_)) => Err(CliError::Usage("--mu only applies to --model mixed".into())),
            (Model::Ie, None) => Ok(ModelKind::ImmediateExchange),
            (Model::Drm, None) => Ok(ModelKind::DirectedRandomMarket),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of agents (even).
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 500)]
    days: u64,
    /// Snapshot interval in days (default: start and end only).
    #[arg(long)]
    record_every: Option<u64>,
    /// `equal` (everyone holds w) or a density spec as for `evolve --init`.
    #[arg(long, default_value = "equal")]
    init: String,
    /// Also write histogram.csv with this many bins on [0, grid x_max).
    #[arg(long)]
    histogram_bins: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// `uniform:a:b`, `exp:m`, `gamma2:w`, `gamma-half:w` or `file:PATH`.
    #[arg(long)]
    init: String,
    /// Stop once consecutive iterates are this close in KS distance.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_steps: usize,
    /// Order of the tracked moment M_α.
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    /// Cumulative probability lost past x_max that aborts the run.
    #[arg(long, default_value_t = Evolution::DEFAULT_LEAK_LIMIT)]
    leak_limit: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct MomentsArgs {
    /// Explicit μ values; overrides the sweep.
    #[arg(long, value_delimiter = ',')]
    mus: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0)]
    mu_min: f64,
    #[arg(long, default_value_t = 1.0)]
    mu_max: f64,
    #[arg(long, default_value_t = 0.1)]
    mu_step: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ContractionArgs {
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    /// Criterion names or ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<String>>,
    /// Replace every numeric tolerance (runtime and count limits stay).
    #[arg(long)]
    tol: Option<f64>,
    /// Also write verify.json here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let cli = Cli::parse_from(args);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("kinex: {e}");
    ExitCode::from(e.exit_code())
}

fn run(cli: Cli) -> CliResult<()> {
    let jobs = match &cli.command {
        Command::Simulate(a) => a.common.jobs,
        Command::Evolve(a) => a.common.jobs,
        Command::Moments(a) => a.common.jobs,
        Command::Contraction(a) => a.common.jobs,
        Command::Verify(a) => a.jobs,
    };
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Evolve(a) => evolve(a),
        Command::Moments(a) => moments(a),
        Command::Contraction(a) => contraction(a),
        Command::Verify(a) => verify(a),
    }
}

fn parse_number(spec: &str, field: &str) -> CliResult<f64> {
    field
        .parse()
        .map_err(|_| CliError::Usage(format!("bad number `{field}` in `{spec}`")))
}

/// Builds the initial density named by `spec` on `grid`.
fn initial_density(spec: &str, grid: Grid) -> CliResult<Density> {
    let usage = |e: kinex::Error| CliError::Usage(format!("--init {spec}: {e}"));
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    if kind == "file" {
        let file = std::fs::File::open(rest).map_err(|source| CliError::Io {
            context: format!("reading {rest}"),
            source,
        })?;
        return Density::read_csv(std::io::BufReader::new(file)).map_err(usage);
    }
    let nums = rest
        .split(':')
        .map(|f| parse_number(spec, f))
        .collect::<CliResult<Vec<f64>>>()?;
    let p = match (kind, nums.as_slice()) {
        ("uniform", [a, b]) => Density::uniform(grid, *a, *b),
        ("exp", [m]) => Density::exponential(grid, *m),
        ("gamma2", [w]) => GammaParams::immediate_exchange(*w).and_then(|g| Density::gamma(grid, g)),
        ("gamma-half", [w]) => GammaParams::directed_market(*w).and_then(|g| Density::gamma(grid, g)),
        _ => {
            return Err(CliError::Usage(format!(
                "--init `{spec}`: expected uniform:a:b, exp:m, gamma2:w, gamma-half:w or file:PATH"
            )))
        }
    };
    p.map_err(usage)
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    let model = a.model.kind()?;
    let grid = a.common.grid()?;
    let initial = if a.init == "equal" {
        InitialCondition::Equal(a.common.w)
    } else {
        InitialCondition::FromDensity(initial_density(&a.init, grid)?)
    };
    let config = SimConfig::new(model, a.n, a.days, a.common.seed)
        .with_initial(initial)
        .with_record_every(a.record_every.unwrap_or(a.days.max(1)));
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if a.histogram_bins == Some(0) {
        return Err(CliError::Usage("--histogram-bins must be >= 1".into()));
    }
    let mut manifest = config.manifest();
    if a.init == "equal" {
        manifest.initial = format!("equal:{}", a.common.w);
    } else {
        manifest.initial = format!("{} on [0, {}] with {} cells", a.init, grid.x_max(), grid.len());
    }

    let out = OutDir::create(&a.common.out)?;
    let mu = model.directed_probability();
    let mut moment_rows = Vec::new();
    let mut histogram = Vec::new();
    let mut snapshot_error = None;
    let snapshot_path = out.write("snapshots.csv", |w| {
        let mut header = true;
        let result = sim::run_observed(&config, |pop| {
            sim::write_snapshot(w, pop.day(), pop.wealths(), header)?;
            if let Some(bins) = a.histogram_bins {
                sim::write_histogram(&mut histogram, pop.day(), pop.wealths(), bins, grid.x_max(), header)?;
            }
            header = false;
            let sample = EmpiricalSample::new(pop.wealths().to_vec(), None)?;
            let report = sim::empirical_moments(&sample, &[1.0, 2.0, 3.0, 4.0])?;
            let mean = pop.total() / pop.len() as f64;
            for k in 1..=4u32 {
                let emp = report.get(k as f64).unwrap_or(f64::NAN);
                moment_rows.push((pop.day(), k, emp, mixed_moment(mu, mean, k)?));
            }
            Ok(())
        });
        if let Err(e) = result {
            snapshot_error = Some(e);
        }
        Ok(())
    })?;
    if let Some(e) = snapshot_error {
        let _ = std::fs::remove_file(&snapshot_path);
        return Err(e.into());
    }
    if a.histogram_bins.is_some() {
        out.write("histogram.csv", |w| w.write_all(&histogram))?;
    }
    out.write("moments.csv", |w| {
        writeln!(w, "day,k,M_empirical,M_closed_form")?;
        for (day, k, emp, exact) in &moment_rows {
            writeln!(w, "{day},{k},{emp:.16e},{exact:.16e}")?;
        }
        Ok(())
    })?;
    out.write("manifest.json", |w| writeln!(w, "{}", manifest.to_json()))?;
    eprintln!(
        "simulated {} agents for {} days; wrote {}",
        a.n,
        a.days,
        a.common.out.display()
    );
    Ok(())
}

fn evolve(a: EvolveArgs) -> CliResult<()> {
    let model = a.model.kind()?;
    let p0 = initial_density(&a.init, a.common.grid()?)?;
    let usage = |e: kinex::Error| CliError::Usage(e.to_string());
    let evolution = Evolution::new(model, a.max_steps, a.tol)
        .and_then(|e| e.with_alpha(a.alpha))
        .and_then(|e| e.with_leak_limit(a.leak_limit))
        .map_err(usage)?;
    let out = OutDir::create(&a.common.out)?;
    let mut records = Vec::new();
    let mut last = p0.clone();
    let result = evolution.run_observed(&p0, |p, r| {
        records.push(r.clone());
        last = p.clone();
    });
    let (stop, error) = match result {
        Ok((_, trace)) => (Some(trace.stop), None),
        Err(kinex::Error::Truncation(msg)) => (None, Some(CliError::Leak(msg))),
        Err(e) => return Err(e.into()),
    };
    let trace = IterationTrace {
        model,
        alpha: a.alpha,
        records,
        stop: stop.unwrap_or(StopReason::MaxSteps),
    };
    out.write("trace.csv", |w| trace.write_csv(w))?;
    out.write("density.csv", |w| last.write_csv(w))?;
    let manifest = json!({
        "model": model.short_name(),
        "mu": model.directed_probability(),
        "init": a.init,
        "grid": { "x_max": p0.grid().x_max(), "n": p0.grid().len() },
        "tol": a.tol,
        "max_steps": a.max_steps,
        "alpha": a.alpha,
        "leak_limit": a.leak_limit,
        "steps": trace.steps(),
        "stop": match (stop, &error) {
            (Some(StopReason::Converged), _) => "converged",
            (Some(StopReason::MaxSteps), _) => "max-steps",
            _ => "leak-guard",
        },
        "final_ks_to_target": trace.last().ks_to_target,
        "mass_leak": trace.last().mass_leak,
        "version": env!("CARGO_PKG_VERSION"),
    });
    out.write("manifest.json", |w| {
        writeln!(w, "{}", serde_json::to_string_pretty(&manifest).expect("json value"))
    })?;
    if let Some(e) = error {
        return Err(e);
    }
    let r = trace.last();
    eprintln!(
        "{} steps, consecutive KS {:e}, KS to target {}",
        trace.steps(),
        r.ks_consecutive.unwrap_or(f64::NAN),
        r.ks_to_target.map_or("n/a".to_string(), |v| format!("{v:e}"))
    );
    match stop {
        Some(StopReason::Converged) => Ok(()),
        _ => Err(CliError::MaxSteps(trace.steps())),
    }
}

fn mu_sweep(a: &MomentsArgs) -> CliResult<Vec<f64>> {
    if let Some(mus) = &a.mus {
        return Ok(mus.clone());
    }
    if !(a.mu_step > 0.0 && a.mu_max >= a.mu_min) {
        return Err(CliError::Usage(format!(
            "empty sweep {}..{} step {}",
            a.mu_min, a.mu_max, a.mu_step
        )));
    }
    let count = ((a.mu_max - a.mu_min) / a.mu_step + 1e-9).floor() as usize;
    // 0.1 * 3 is not 0.3; round to 12 places so rows carry the intended μ.
    Ok((0..=count)
        .map(|i| ((a.mu_min + i as f64 * a.mu_step) * 1e12).round() / 1e12)
        .collect())
}

fn moments(a: MomentsArgs) -> CliResult<()> {
    let mus = mu_sweep(&a)?;
    let rows = moment_table(&mus, a.common.w).map_err(|e| CliError::Usage(e.to_string()))?;
    let out = OutDir::create(&a.common.out)?;
    let path = out.write("moments.csv", |w| write_moment_table(&rows, w))?;
    eprintln!("{} rows -> {}", rows.len(), path.display());
    Ok(())
}

fn contraction(a: ContractionArgs) -> CliResult<()> {
    let grid = a.common.grid()?;
    let w = a.common.w;
    // the pairs have mean one, so build them on the shrunken grid and stretch
    let unit = Grid::new(grid.x_max() / w, grid.len()).map_err(|e| CliError::Usage(e.to_string()))?;
    let pairs = contraction_pairs(unit)?
        .into_iter()
        .map(|(p, q)| Ok((p.scaled(w)?, q.scaled(w)?)))
        .collect::<kinex::Result<Vec<_>>>()?;
    let sgrid = SGrid::for_mean(w)?;
    let table = contraction_study(&pairs, a.alpha, a.steps, &sgrid).map_err(|e| CliError::Usage(e.to_string()))?;
    let out = OutDir::create(&a.common.out)?;
    out.write("contraction.csv", |w| table.write_csv(w))?;
    eprintln!(
        "max ratio {} (bound {})",
        table.max_ratio().map_or("n/a".to_string(), |r| format!("{r:.4}")),
        table.bound()
    );
    Ok(())
}

fn verify(a: VerifyArgs) -> CliResult<()> {
    if let Some(t) = a.tol {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(CliError::Usage(format!("--tol must be >= 0, got {t}")));
        }
    }
    let ids = Suite::select(a.only.as_deref()).map_err(|e| CliError::Usage(e.to_string()))?;
    let report = Suite::new(a.tol).run(&ids);
    for c in &report.criteria {
        eprintln!("{}", c.summary_line());
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{text}");
    if let Some(dir) = &a.out {
        OutDir::create(dir)?.write("verify.json", |w| writeln!(w, "{text}"))?;
    }
    let failed = report.criteria.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::VerifyFailed(failed));
    }
    Ok(())
}
