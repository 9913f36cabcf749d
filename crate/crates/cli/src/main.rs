mod grid;

use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use gfp_core::analytic::{nn_joint_dist, ModelParams, Truncation};
use gfp_core::error::{ErrorKind, GfpError};
use gfp_core::measures::{sweep, write_sweep_csv, Family, ScanBounds, SweepRow, SweepSpec};
use gfp_core::quality::QualityPmf;
use gfp_core::simulate::{empirical_report, grow, load_graph, replica_reports, EmpiricalReport, GrowthMode};
use gfp_core::validate::run_checks;

use grid::Grid;

const SCHEMA_VERSION: u32 = 1;

/// Exit statuses.
const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;
const EXIT_PARSE: u8 = 4;

/// An error carrying its exit status.
#[derive(Debug)]
struct Coded(u8, String);

impl std::fmt::Display for Coded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Coded {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Coded(EXIT_USAGE, msg.into()).into()
}

/// Degree-quality statistics, paradox measures and growth simulation for
/// quality-based preferential attachment networks.
#[derive(Parser)]
#[command(name = "gfp", version)]
struct Cli {
    /// Worker threads for parallel grid points and replicas (integer >= 1;
    /// default: all cores).
    #[arg(long, global = true, env = "GFP_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Paradox measures over a parameter grid, as CSV or JSON.
    Sweep(SweepArgs),
    /// Grow networks (or ingest one) and report empirical paradox fractions as JSON.
    Simulate(SimulateArgs),
    /// Run the consistency checks; exit 1 if any fails.
    Validate(ValidateArgs),
    /// Dump the neighbor distribution P(ell, phi | k, theta) as CSV.
    NnTable(NnTableArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Bernoulli,
    Exponential,
    /// Weights read from --weights.
    Custom,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Qpa,
    Uniform,
}

#[derive(Args)]
struct TruncArgs {
    /// Relative tolerance for series truncation (0 < value < 1).
    #[arg(long, default_value_t = Truncation::default().rel_tol)]
    rel_tol: f64,
    /// Largest degree a joint distribution table may reach (integer >= 1).
    #[arg(long, default_value_t = Truncation::default().joint_k_cap)]
    joint_k_cap: u64,
    /// Largest neighbor degree enumerated explicitly (integer >= 1).
    #[arg(long, default_value_t = Truncation::default().ell_cap)]
    ell_cap: u64,
}

impl TruncArgs {
    fn build(&self) -> anyhow::Result<Truncation> {
        let t = Truncation { rel_tol: self.rel_tol, joint_k_cap: self.joint_k_cap, ell_cap: self.ell_cap };
        t.validate()?;
        Ok(t)
    }
}

#[derive(Args)]
struct SweepArgs {
    /// Quality family (bernoulli or exponential).
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Bernoulli grid: probability of quality 0, each in [0, 1].
    #[arg(long, value_parser = grid::real_grid, allow_hyphen_values = true)]
    p: Option<Grid<f64>>,
    /// Exponential grid: ratio q > 0 of successive quality weights.
    #[arg(long, value_parser = grid::real_grid, allow_hyphen_values = true)]
    q: Option<Grid<f64>>,
    /// Grid of links per arriving node (integers >= 1).
    #[arg(long, value_parser = grid::int_grid)]
    beta: Grid<u32>,
    /// Grid of maximum qualities (integers >= 1).
    #[arg(long, value_parser = grid::int_grid)]
    theta_max: Grid<u32>,
    /// Output path; standard output when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    trunc: TruncArgs,
}

/// Quality distribution and link count for a single model.
#[derive(Args)]
struct ModelArgs {
    /// Links per arriving node (integer >= 1).
    #[arg(long)]
    beta: u32,
    /// Quality family.
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Bernoulli probability of quality 0, in [0, 1].
    #[arg(long, allow_hyphen_values = true)]
    p: Option<f64>,
    /// Exponential ratio q > 0 of successive quality weights.
    #[arg(long, allow_hyphen_values = true)]
    q: Option<f64>,
    /// Maximum quality for bernoulli and exponential (integer >= 1).
    #[arg(long)]
    theta_max: Option<u32>,
    /// `theta weight` lines for the custom family.
    #[arg(long)]
    weights: Option<PathBuf>,
}

impl ModelArgs {
    fn build(&self) -> anyhow::Result<ModelParams> {
        let pmf = match self.family {
            FamilyArg::Custom => {
                if self.p.is_some() || self.q.is_some() || self.theta_max.is_some() {
                    return Err(usage("--family custom takes --weights only"));
                }
                let path = self.weights.as_ref().ok_or_else(|| usage("--family custom needs --weights"))?;
                QualityPmf::load(path)?
            }
            FamilyArg::Bernoulli | FamilyArg::Exponential => {
                if self.weights.is_some() {
                    return Err(usage("--weights applies to --family custom only"));
                }
                let family = core_family(self.family)?;
                let x = family_param(family, self.p, self.q)?;
                let theta_max = self.theta_max.ok_or_else(|| usage("--theta-max is required"))?;
                family.build(x, theta_max)?
            }
        };
        Ok(ModelParams::new(self.beta, pmf)?)
    }
}

fn core_family(f: FamilyArg) -> anyhow::Result<Family> {
    match f {
        FamilyArg::Bernoulli => Ok(Family::Bernoulli),
        FamilyArg::Exponential => Ok(Family::Exponential),
        FamilyArg::Custom => Err(usage("this command supports bernoulli and exponential only")),
    }
}

/// Picks the flag matching the family and rejects the other.
fn family_param<T>(family: Family, p: Option<T>, q: Option<T>) -> anyhow::Result<T> {
    let (mine, other) = match family {
        Family::Bernoulli => (p, q.is_some()),
        Family::Exponential => (q, p.is_some()),
    };
    let name = family.param_name();
    if other {
        let wrong = if name == "p" { "q" } else { "p" };
        return Err(usage(format!("--{wrong} does not apply to --family {family}; use --{name}")));
    }
    mine.ok_or_else(|| usage(format!("--family {family} needs --{name}")))
}

#[derive(Args)]
struct SimulateArgs {
    /// Attachment rule for grown networks.
    #[arg(long, value_enum, default_value = "qpa")]
    mode: ModeArg,
    /// Nodes per grown network (integer > beta + 1).
    #[arg(long)]
    n: Option<usize>,
    /// Seed of the first replica; replica i uses seed + i (integer >= 0).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent replicas (integer >= 1).
    #[arg(long, default_value_t = 1)]
    replicas: u64,
    /// Edge list to ingest instead of growing (`u v` per line).
    #[arg(long, requires = "qualities", conflicts_with_all = ["n", "beta", "family", "replicas", "mode"])]
    input: Option<PathBuf>,
    /// Quality file for --input (`node quality` per line).
    #[arg(long, requires = "input")]
    qualities: Option<PathBuf>,
    /// Also write the edge list of the first replica (or the ingested graph).
    #[arg(long)]
    emit_edges: Option<PathBuf>,
    /// Report path; standard output when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    model: Option<ModelArgs>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Analytic checks only.
    #[arg(long)]
    quick: bool,
    /// Print results as JSON instead of one line per check.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    trunc: TruncArgs,
}

#[derive(Args)]
struct NnTableArgs {
    /// Degree of the focal node (integer >= beta).
    #[arg(long)]
    k: u64,
    /// Quality of the focal node (in the support of the quality pmf).
    #[arg(long)]
    theta: u32,
    /// Output path; standard output when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    trunc: TruncArgs,
}

/// Writes through a temporary file in the target directory, so a failed run
/// never leaves a partial file behind.
fn write_output(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> anyhow::Result<()> {
    match path {
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock)?;
            lock.flush()?;
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir)
                .with_context(|| format!("cannot create a file in {}", dir.display()))?;
            {
                let mut buf = io::BufWriter::new(tmp.as_file_mut());
                body(&mut buf)?;
                buf.flush()?;
            }
            tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> anyhow::Result<()> {
    write_output(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

#[derive(Serialize)]
struct SweepDoc<'a> {
    schema_version: u32,
    command: &'static str,
    grid: &'a SweepSpec,
    rows: &'a [SweepRow],
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<u8> {
    let family = core_family(args.family)?;
    let x = family_param(family, args.p, args.q)?.0;
    let spec = SweepSpec { family, x, beta: args.beta.0, theta_max: args.theta_max.0 };
    let trunc = args.trunc.build()?;
    for (x, beta, theta_max) in spec.points() {
        family.build(x, theta_max).and_then(|pmf| ModelParams::new(beta, pmf))?;
    }

    let start = Instant::now();
    let rows = sweep(&spec, &trunc, &ScanBounds::default())?;
    eprintln!("sweep: {} grid points in {:.2?}", rows.len(), start.elapsed());
    if let Some(row) = rows.iter().find(|r| r.error.is_some()) {
        let err = row.error.as_ref().unwrap();
        let code = match err.kind {
            ErrorKind::NonConvergence => EXIT_NONCONVERGENCE,
            kind => exit_code(kind),
        };
        return Err(Coded(code, format!("at {}: {}", row.point_label(), err.message)).into());
    }
    match args.format {
        Format::Csv => write_output(args.output.as_deref(), |w| write_sweep_csv(&rows, w))?,
        Format::Json => write_json(
            args.output.as_deref(),
            &SweepDoc { schema_version: SCHEMA_VERSION, command: "sweep", grid: &spec, rows: &rows },
        )?,
    }
    Ok(0)
}

#[derive(Serialize)]
struct ReplicaSummary {
    seed: Option<u64>,
    node_count: u64,
    isolated: u64,
    flagged: gfp_core::simulate::FlagCounts,
    fractions: gfp_core::simulate::EmpiricalFractions,
}

impl From<&EmpiricalReport> for ReplicaSummary {
    fn from(r: &EmpiricalReport) -> Self {
        ReplicaSummary {
            seed: r.seeds.first().copied(),
            node_count: r.node_count,
            isolated: r.isolated,
            flagged: r.flagged,
            fractions: r.fractions,
        }
    }
}

#[derive(Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
enum SimSource {
    Grown { mode: GrowthMode, n: usize, beta: u32, quality: QualityPmf, first_seed: u64, replicas: u64 },
    Ingested { edges: PathBuf, qualities: PathBuf },
}

#[derive(Serialize)]
struct SimulateDoc {
    schema_version: u32,
    command: &'static str,
    config: SimSource,
    replicas: Vec<ReplicaSummary>,
    pooled: EmpiricalReport,
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<u8> {
    let (config, reports) = if let (Some(edges), Some(quals)) = (&args.input, &args.qualities) {
        if args.model.is_some() {
            return Err(usage("--input cannot be combined with model flags"));
        }
        let net = load_graph(edges, quals).map_err(|e| match e.kind() {
            ErrorKind::Parse => anyhow::Error::from(Coded(EXIT_PARSE, e.to_string())),
            ErrorKind::Io => {
                Coded(EXIT_PARSE, format!("cannot read {} or {}: {e}", edges.display(), quals.display())).into()
            }
            _ => e.into(),
        })?;
        info!("ingested {} nodes, {} edges", net.node_count(), net.edge_count());
        if let Some(path) = &args.emit_edges {
            write_output(Some(path), |w| net.write_edge_list(w))?;
        }
        let report = empirical_report(&net);
        (SimSource::Ingested { edges: edges.clone(), qualities: quals.clone() }, vec![report])
    } else {
        let model = args.model.as_ref().ok_or_else(|| usage("growth needs --beta, --family and its parameters"))?;
        let params = model.build()?;
        let n = args.n.ok_or_else(|| usage("growth needs --n"))?;
        if args.replicas == 0 {
            return Err(usage("--replicas must be at least 1"));
        }
        let mode = match args.mode {
            ModeArg::Qpa => GrowthMode::Qpa,
            ModeArg::Uniform => GrowthMode::Uniform,
        };
        let seeds: Vec<u64> = (0..args.replicas)
            .map(|i| args.seed.checked_add(i).ok_or_else(|| usage("--seed + --replicas overflows")))
            .collect::<anyhow::Result<_>>()?;
        let start = Instant::now();
        let reports = if let Some(path) = &args.emit_edges {
            let net = grow(n, &params, seeds[0], mode)?;
            write_output(Some(path), |w| net.write_edge_list(w))?;
            let mut reports = vec![empirical_report(&net)];
            drop(net);
            reports.extend(replica_reports(n, &params, mode, &seeds[1..])?);
            reports
        } else {
            replica_reports(n, &params, mode, &seeds)?
        };
        eprintln!("simulate: {} replica(s) of {n} nodes in {:.2?}", seeds.len(), start.elapsed());
        let config = SimSource::Grown {
            mode,
            n,
            beta: params.beta(),
            quality: params.quality().clone(),
            first_seed: args.seed,
            replicas: args.replicas,
        };
        (config, reports)
    };
    let doc = SimulateDoc {
        schema_version: SCHEMA_VERSION,
        command: "simulate",
        config,
        replicas: reports.iter().map(ReplicaSummary::from).collect(),
        pooled: EmpiricalReport::pool(&reports),
    };
    write_json(args.output.as_deref(), &doc)?;
    Ok(0)
}

#[derive(Serialize)]
struct ValidateDoc<'a> {
    schema_version: u32,
    command: &'static str,
    quick: bool,
    passed: bool,
    checks: &'a [gfp_core::validate::CheckOutcome],
}

fn cmd_validate(args: ValidateArgs) -> anyhow::Result<u8> {
    let trunc = args.trunc.build()?;
    let start = Instant::now();
    let checks = run_checks(args.quick, &trunc);
    let passed = checks.iter().all(|c| c.passed);
    if args.json {
        write_json(
            None,
            &ValidateDoc {
                schema_version: SCHEMA_VERSION,
                command: "validate",
                quick: args.quick,
                passed,
                checks: &checks,
            },
        )?;
    } else {
        for c in &checks {
            println!("{c}");
        }
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    eprintln!("validate: {} checks, {failed} failed, {:.2?}", checks.len(), start.elapsed());
    Ok(if passed { 0 } else { EXIT_CHECK_FAILED })
}

fn cmd_nn_table(args: NnTableArgs) -> anyhow::Result<u8> {
    let params = args.model.build()?;
    let trunc = args.trunc.build()?;
    let dist = nn_joint_dist(&params, args.k, args.theta, &trunc)?;
    write_output(args.output.as_deref(), |w| dist.write_nn_table(params.beta(), params.quality(), w))?;
    Ok(0)
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::NonConvergence => EXIT_NONCONVERGENCE,
        ErrorKind::Parse => EXIT_PARSE,
        ErrorKind::Domain | ErrorKind::Usage | ErrorKind::UndefinedConditional | ErrorKind::Io => EXIT_USAGE,
    }
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.chain().any(|e| e.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe))
}

fn classify(err: &anyhow::Error) -> u8 {
    if let Some(Coded(code, _)) = err.downcast_ref::<Coded>() {
        *code
    } else if let Some(e) = err.downcast_ref::<GfpError>() {
        exit_code(e.kind())
    } else {
        EXIT_USAGE
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| anyhow!("cannot start the thread pool: {e}"))?;
    }
    match cli.command {
        Command::Sweep(a) => cmd_sweep(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Validate(a) => cmd_validate(a),
        Command::NnTable(a) => cmd_nn_table(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) if is_broken_pipe(&err) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}
