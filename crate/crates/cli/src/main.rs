//! `rii`: build residual-interval confidence regions from CSV data, query
//! them, and run the Monte-Carlo experiments.
//!
//! Exit codes: 0 success or member, 1 non-member, 2 input error,
//! 3 infeasible configuration, 4 empty region, 5 resource limit.
//! Errors print one line on stderr of the form `<reason>: <detail>`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rii::applications::{all_coordinate_intervals, hypothesis_test, IntervalsOutcome, TestState};
use rii::coverage::{binomial_tail, coverage_curve, curve_to_csv, fmt_sig, k_alpha, linear_grid};
use rii::estimators::{predict_dataset, Predictor};
use rii::experiment::{nonlinear_config, run_experiment, ExperimentConfig, ExperimentKind};
use rii::milp::{BranchOptions, DEFAULT_NODE_LIMIT};
use rii::region::{default_big_m, residual_intervals, split_dataset, Dataset, RegionSpec};
use rii::synth::{nonlinear_example, NoiseSpec};
use rii::RiiError;

#[derive(Parser, Debug)]
#[command(
    name = "rii",
    version,
    about = "Residual-interval confidence regions for linear models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a dataset, fit a predictor and write the region as JSON.
    Region(RegionArgs),
    /// Test whether a parameter vector belongs to a region.
    Member(MemberArgs),
    /// Per-coordinate bounds of a region as CSV.
    Intervals(IntervalsArgs),
    /// Test the null hypothesis that the region is nonempty.
    Test(TestArgs),
    /// Guaranteed coverage against the tolerance b for several thresholds.
    CoverageCurve(CurveArgs),
    /// Run a Monte-Carlo experiment.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct RegionArgs {
    /// Input CSV `x1,...,xd,y` with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Output region JSON.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 39)]
    n_te: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    b: f64,
    /// Hit threshold; defaults to the largest one meeting 1 - alpha.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    big_m: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// ols, huber or feature_map_ols.
    #[arg(long, default_value = "ols")]
    predictor: String,
}

#[derive(Args, Debug)]
struct MemberArgs {
    #[arg(long)]
    region: PathBuf,
    /// Comma-separated parameter vector.
    #[arg(long, allow_hyphen_values = true)]
    theta: String,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    region: PathBuf,
    #[arg(long, default_value_t = DEFAULT_NODE_LIMIT)]
    node_limit: usize,
    /// Replaces the Big-M constant stored in the region.
    #[arg(long)]
    big_m: Option<f64>,
}

#[derive(Args, Debug)]
struct IntervalsArgs {
    #[command(flatten)]
    solve: SolveArgs,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[command(flatten)]
    solve: SolveArgs,
    /// Output verdict JSON; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[arg(long, default_value_t = 30)]
    n_te: usize,
    /// Comma-separated thresholds.
    #[arg(long, default_value = "4,8,12,16")]
    k: String,
    /// Grid points on [0, 0.5].
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// JSON configuration; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// coverage, widths, bounds, reject, nonlinear_coverage, figure1 or timing.
    #[arg(long)]
    experiment: Option<String>,
    /// Named non-linear example (easy, med, hard): sets v*, k, n_te and b.
    #[arg(long)]
    example: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_te: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// noiseless, additive, multiplicative, outliers or standard.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    v_star: Option<f64>,
    #[arg(long)]
    predictor: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep one theta* for every trial.
    #[arg(long)]
    fixed_theta: bool,
    #[arg(long)]
    node_limit: Option<usize>,
    #[arg(long)]
    big_m: Option<f64>,
    /// Root directory for `<experiment>_seed<seed>` run directories.
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
}

/// Error carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(detail: impl fmt::Display) -> Self {
        Self {
            code: 2,
            message: format!("input error: {detail}"),
        }
    }

    fn infeasible(detail: impl fmt::Display) -> Self {
        Self {
            code: 3,
            message: format!("infeasible config: {detail}"),
        }
    }

    fn empty(alpha: f64) -> Self {
        Self {
            code: 4,
            message: format!("region empty: null hypothesis rejected at alpha={alpha}"),
        }
    }

    fn resource(detail: impl fmt::Display) -> Self {
        Self {
            code: 5,
            message: format!("resource limit: {detail}"),
        }
    }
}

impl From<RiiError> for Failure {
    fn from(e: RiiError) -> Self {
        match e {
            RiiError::Unsupported(_) | RiiError::CoverageUnreachable(_) => Failure::infeasible(e),
            RiiError::Solver(_) => Failure::resource(e),
            _ => Failure::input(e),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, body: &str) -> CliResult<()> {
    std::fs::write(path, body).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, body: &str) -> CliResult<()> {
    match out {
        Some(path) => write(path, body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn parse_reals(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|t| {
            let v: f64 = t
                .trim()
                .parse()
                .map_err(|_| Failure::input(format!("bad number {t:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Failure::input(format!("non-finite value {t:?}")))
            }
        })
        .collect()
}

fn load_region(args: &SolveArgs) -> CliResult<RegionSpec> {
    let region = RegionSpec::from_json(&read(&args.region)?)?;
    match args.big_m {
        Some(m) => Ok(region.with_big_m(m)?),
        None => Ok(region),
    }
}

fn branch_options(args: &SolveArgs) -> CliResult<BranchOptions> {
    if args.node_limit == 0 {
        return Err(Failure::input("node-limit must be at least 1"));
    }
    Ok(BranchOptions {
        node_limit: args.node_limit,
        ..BranchOptions::default()
    })
}

fn cmd_region(args: &RegionArgs) -> CliResult<u8> {
    let data = Dataset::from_csv(&read(&args.data)?)?;
    let predictor: Predictor = args.predictor.parse()?;
    if args.n_te == 0 || args.n_te >= data.len() {
        return Err(Failure::input(format!(
            "n-te = {} must leave training rows out of {}",
            args.n_te,
            data.len()
        )));
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) || !(args.b > 0.0 && args.b <= 0.5) {
        return Err(Failure::input("alpha must lie in (0, 1) and b in (0, 0.5]"));
    }
    let k = match args.k {
        Some(k) => {
            if k == 0 || k > args.n_te {
                return Err(Failure::input(format!(
                    "k = {k} must lie in 1..={}",
                    args.n_te
                )));
            }
            let s = binomial_tail(args.n_te, k, args.b)?;
            if s < 1.0 - args.alpha {
                return Err(Failure::infeasible(format!(
                    "S_{}({k}, {}) = {s} is below 1 - alpha = {}",
                    args.n_te,
                    args.b,
                    1.0 - args.alpha
                )));
            }
            k
        }
        None => k_alpha(args.n_te, args.alpha, args.b)?.ok_or_else(|| {
            Failure::infeasible(format!(
                "no threshold reaches coverage {} with n_te = {}; more test points are needed",
                1.0 - args.alpha,
                args.n_te
            ))
        })?,
    };
    let (test, train) = split_dataset(&data, args.n_te, args.seed)?;
    let fit = predictor.fit(&train)?;
    let preds = predict_dataset(&fit, &test)?;
    let intervals = residual_intervals(&test, &preds)?;
    let m = args.big_m.unwrap_or_else(|| default_big_m(&intervals));
    let region = RegionSpec::new(intervals, k, args.alpha, args.b, m)?;
    write(&args.out, &(region.to_json()? + "\n"))?;
    eprintln!(
        "region: d={} n_te={} k={} predictor={}",
        region.dim(),
        region.n_te(),
        k,
        args.predictor
    );
    println!(
        "guaranteed_coverage={}",
        fmt_sig(region.guaranteed_coverage())
    );
    Ok(0)
}

fn cmd_member(args: &MemberArgs) -> CliResult<u8> {
    let region = RegionSpec::from_json(&read(&args.region)?)?;
    let theta = parse_reals(&args.theta)?;
    let hits = region.count_hits(&theta)?;
    let member = hits >= region.k();
    println!("hits={hits} k={} member={member}", region.k());
    Ok(if member { 0 } else { 1 })
}

fn cmd_intervals(args: &IntervalsArgs) -> CliResult<u8> {
    let region = load_region(&args.solve)?;
    let options = branch_options(&args.solve)?;
    match all_coordinate_intervals(&region, &options)? {
        IntervalsOutcome::Empty { nodes } => {
            eprintln!("intervals: no feasible parameter after {nodes} nodes");
            Err(Failure::empty(region.alpha()))
        }
        IntervalsOutcome::Box(bbox) => {
            let mut body = bbox.to_csv();
            if bbox.incomplete {
                body.push_str("# incomplete\n");
            }
            emit(args.out.as_deref(), &body)?;
            eprintln!("intervals: {} nodes", bbox.nodes);
            if bbox.incomplete {
                Err(Failure::resource(format!(
                    "node limit {} reached; partial bounds written",
                    options.node_limit
                )))
            } else {
                Ok(0)
            }
        }
    }
}

fn cmd_test(args: &TestArgs) -> CliResult<u8> {
    let region = load_region(&args.solve)?;
    let options = branch_options(&args.solve)?;
    let verdict = hypothesis_test(&region, &options)?;
    emit(args.out.as_deref(), &(verdict.to_json()? + "\n"))?;
    match verdict.state {
        TestState::NotRejected => Ok(0),
        TestState::Rejected => Err(Failure::empty(region.alpha())),
        TestState::Inconclusive => Err(Failure::resource(format!(
            "node limit {} reached before a verdict",
            options.node_limit
        ))),
    }
}

fn cmd_curve(args: &CurveArgs) -> CliResult<u8> {
    let ks = args
        .k
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Failure::input(format!("bad threshold {t:?}")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    if args.points < 2 {
        return Err(Failure::input("points must be at least 2"));
    }
    let rows = coverage_curve(args.n_te, &ks, &linear_grid(0.0, 0.5, args.points))?;
    emit(args.out.as_deref(), &curve_to_csv(&rows))?;
    Ok(0)
}

fn experiment_config(args: &ExperimentArgs) -> CliResult<ExperimentConfig> {
    let kind = args
        .experiment
        .as_deref()
        .map(str::parse::<ExperimentKind>)
        .transpose()?;
    let mut cfg = match (&args.config, &args.example) {
        (Some(path), _) => ExperimentConfig::from_json(&read(path)?)?,
        (None, Some(name)) => {
            let example = nonlinear_example(name)
                .ok_or_else(|| Failure::input(format!("unknown example `{name}`")))?;
            if kind == Some(ExperimentKind::Reject) {
                let mut cfg = ExperimentConfig::new(ExperimentKind::Reject);
                cfg.v_star = example.v_star;
                cfg.noise = NoiseSpec::standard();
                cfg
            } else {
                let (cfg, est) = nonlinear_config(&example, 500, args.seed.unwrap_or(0))?;
                eprintln!(
                    "experiment: {name} example, b set to estimated b_bar {} (std error {})",
                    fmt_sig(cfg.b),
                    fmt_sig(est.std_error)
                );
                cfg
            }
        }
        (None, None) => ExperimentConfig::new(kind.unwrap_or(ExperimentKind::Coverage)),
    };
    if let Some(kind) = kind {
        cfg.experiment = kind;
    }
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field.clone() { cfg.$field = v; })*
        };
    }
    set!(d, n_train, n_te, alpha, b, v_star, trials, seed, node_limit);
    if args.k.is_some() {
        cfg.k = args.k;
    }
    if args.big_m.is_some() {
        cfg.big_m = args.big_m;
    }
    if let Some(noise) = &args.noise {
        cfg.noise = noise.parse::<NoiseSpec>()?;
    }
    if let Some(p) = &args.predictor {
        cfg.predictor = p.parse()?;
    }
    if args.fixed_theta {
        cfg.resample_theta = false;
    }
    Ok(cfg)
}

fn cmd_experiment(args: &ExperimentArgs) -> CliResult<u8> {
    let cfg = experiment_config(args)?;
    cfg.validate()?;
    eprintln!(
        "experiment: {} trials={} seed={}",
        cfg.experiment.name(),
        cfg.trials,
        cfg.seed
    );
    let out = run_experiment(&cfg)?;
    let dir = out
        .write(&args.out_dir)
        .map_err(|e| Failure::input(format!("{}: {e}", args.out_dir.display())))?;
    for (name, value) in &out.summary.metrics {
        eprintln!("  {name} = {}", fmt_sig(*value));
    }
    for flag in &out.summary.flags {
        eprintln!("  flag: {flag}");
    }
    println!("{}", dir.display());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Region(a) => cmd_region(a),
        Command::Member(a) => cmd_member(a),
        Command::Intervals(a) => cmd_intervals(a),
        Command::Test(a) => cmd_test(a),
        Command::CoverageCurve(a) => cmd_curve(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("{}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
