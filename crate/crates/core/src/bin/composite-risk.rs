use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use composite_risk::asymptotics::normal_critical_value;
use composite_risk::harness::{
    estimates_csv, estimates_json, evaluate_statistic, f17, histogram_csv, reference_for,
    run_replications, statistic_limit, summarize_distribution, summary_json, PlanConfig,
    ReplicationConfig, Statistic,
};
use composite_risk::measures::HigherOrderFamily;
use composite_risk::optimize::{flatness_check, DEFAULT_TOL};
use composite_risk::{
    check_strong_identity, minimize_scalar, optimal_value_clt_variance, BandwidthSchedule,
    DistributionOracle, Error, KernelFamily, KernelSpec, Law, MeasureConfig, ObjectiveSource,
    Sample, ScalarProblem,
};

#[derive(Parser)]
#[command(name = "composite-risk", version, about = "Estimate nested composite risk functionals and check their limit laws")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One plug-in estimate with a delta-method confidence interval.
    Estimate(EstimateArgs),
    /// Replication study of a single measure.
    Simulate(StudyArgs),
    /// Replication study of the difference of two risks.
    Compare(StudyArgs),
    /// Replication study of a systemic measure plus its sampled limit law.
    Systemic(StudyArgs),
    /// Decide whether a bandwidth schedule gives a strong approximate identity.
    CheckIdentity(IdentityArgs),
    /// Exact optimal value of a higher-order measure and its replication study.
    Optimize(StudyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Clone)]
struct PlanArgs {
    /// Kernel for smoothed layers; without it every layer is empirical.
    #[arg(long, value_enum)]
    kernel: Option<KernelArg>,
    /// `silverman` or `power:A,GAMMA`.
    #[arg(long, default_value = "silverman")]
    bandwidth: String,
    /// Comma-separated smoothed layers; defaults to the measure's power-max layer.
    #[arg(long, value_delimiter = ',')]
    smooth_layers: Option<Vec<usize>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Uniform,
    Gaussian,
    Epanechnikov,
}

impl From<KernelArg> for KernelFamily {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Uniform => KernelFamily::Uniform,
            KernelArg::Gaussian => KernelFamily::Gaussian,
            KernelArg::Epanechnikov => KernelFamily::Epanechnikov,
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Measure JSON, as a file path or inline.
    #[arg(long)]
    measure: Vec<String>,
    /// Law of each sample, e.g. `normal-var:10,3`.
    #[arg(long)]
    law: Vec<Law>,
    /// Read observations from a CSV file instead of drawing them.
    #[arg(long, conflicts_with = "law")]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[command(flatten)]
    plan: PlanArgs,
}

#[derive(Args)]
struct StudyArgs {
    /// Measure JSON, as a file path or inline. `compare` takes one or two.
    #[arg(long)]
    measure: Vec<String>,
    /// One shared law, or one law per measure slot.
    #[arg(long, required = true)]
    law: Vec<Law>,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    replications: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    bins: Option<usize>,
    /// Directory for the estimates, summary and histogram files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Format of the estimates file.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[command(flatten)]
    plan: PlanArgs,
}

#[derive(Args)]
struct IdentityArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    kernel: KernelArg,
    #[arg(long, default_value = "silverman")]
    bandwidth: String,
    /// Norm orders to check.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    p: Vec<f64>,
    /// Observation dimension of the kernel.
    #[arg(long, default_value_t = 1)]
    dim: usize,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

enum Failure {
    Config(String),
    Numerical(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Numerical(e)
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn config<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Config(msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Compare(a) => compare(a),
        Command::Systemic(a) => systemic(a),
        Command::CheckIdentity(a) => check_identity(a),
        Command::Optimize(a) => optimize(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("composite-risk: configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("composite-risk: numerical failure: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(3)
        }
    }
}

fn read_measure(arg: &str) -> Outcome<MeasureConfig> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).map_err(|e| Failure::Config(format!("cannot read `{arg}`: {e}")))?
    };
    let m: MeasureConfig =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("measure `{arg}`: {e}")))?;
    m.validate()?;
    Ok(m)
}

fn plan_config(args: &PlanArgs) -> Outcome<Option<PlanConfig>> {
    let Some(kernel) = args.kernel else {
        if args.smooth_layers.is_some() {
            return config("--smooth-layers needs --kernel");
        }
        return Ok(None);
    };
    let schedule: BandwidthSchedule = args.bandwidth.parse()?;
    let mut plan = PlanConfig::new(kernel.into(), schedule);
    plan.smooth_layers = args.smooth_layers.clone();
    Ok(Some(plan))
}

fn read_csv(path: &Path) -> Outcome<Sample> {
    let cannot = |e: csv::Error| Failure::Config(format!("cannot read `{}`: {e}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(cannot)?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(cannot)?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => continue,
            Err(e) => return config(format!("{}:{}: {e}", path.display(), i + 1)),
        }
    }
    Ok(Sample::from_rows(&rows)?)
}

fn study_config(statistic: Statistic, a: &StudyArgs) -> Outcome<ReplicationConfig> {
    let cfg = ReplicationConfig {
        statistic,
        laws: a.law.clone(),
        n: a.n,
        replications: a.replications,
        seed: a.seed,
        plan: plan_config(&a.plan)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Outcome<()> {
    fs::write(dir.join(name), contents)
        .map_err(|e| Failure::Config(format!("cannot write `{}`: {e}", dir.join(name).display())))
}

/// Runs the study, writes its files and prints the summary.
fn run_study(cfg: &ReplicationConfig, a: &StudyArgs) -> Outcome<serde_json::Value> {
    let reference = reference_for(cfg)?;
    let table = run_replications(cfg, a.workers.max(1))?;
    let summary = summarize_distribution(&table.estimates, &reference, a.bins)?;
    let summary_text = summary_json(&summary, cfg);
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::Config(format!("cannot create `{}`: {e}", dir.display())))?;
        match a.format {
            Format::Csv => write_file(dir, "estimates.csv", &estimates_csv(&table))?,
            Format::Json => write_file(dir, "estimates.json", &estimates_json(&table))?,
        }
        write_file(dir, "summary.json", &summary_text)?;
        write_file(dir, "histogram.csv", &histogram_csv(&summary))?;
    }
    Ok(serde_json::from_str(&summary_text).expect("summary is valid JSON"))
}

fn print_json(v: &serde_json::Value) {
    print_text(&serde_json::to_string_pretty(v).expect("serializable"));
}

/// Write to stdout, ignoring a closed pipe.
fn print_text(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn one_measure(a: &[String]) -> Outcome<MeasureConfig> {
    match a {
        [m] => read_measure(m),
        _ => config(format!("expected one --measure, got {}", a.len())),
    }
}

fn estimate(a: EstimateArgs) -> Outcome<()> {
    let statistic = match a.measure.as_slice() {
        [m] => Statistic::Single {
            measure: read_measure(m)?,
        },
        [f, s] => Statistic::Difference {
            first: read_measure(f)?,
            second: read_measure(s)?,
        },
        _ => return config("estimate takes one or two --measure arguments"),
    };
    let samples: Vec<Sample> = match &a.data {
        Some(path) => vec![read_csv(path)?],
        None if a.law.is_empty() => return config("estimate needs --law or --data"),
        None => a
            .law
            .iter()
            .enumerate()
            .map(|(i, law)| law.sample(composite_risk::law::counter_u64(a.seed, i as u64), a.n))
            .collect(),
    };
    let plan = plan_config(&a.plan)?;
    let value = evaluate_statistic(&statistic, &samples, plan.as_ref())?;
    let oracles: Vec<&dyn DistributionOracle> = samples.iter().map(|s| s as &dyn DistributionOracle).collect();
    let limit = statistic_limit(&statistic, &oracles)?;
    let n = samples[0].n();
    let half = normal_critical_value(a.level)? * (limit.limit_variance.max(0.0) / n as f64).sqrt();
    match a.format {
        Format::Json => print_json(&json!({
            "value": value,
            "lower": value - half,
            "upper": value + half,
            "level": a.level,
            "limit_variance": limit.limit_variance,
            "components": limit.components,
            "n": n,
        })),
        Format::Csv => {
            print_text(&format!(
                "value,lower,upper,limit_variance,n\n{},{},{},{},{n}",
                f17(value),
                f17(value - half),
                f17(value + half),
                f17(limit.limit_variance)
            ));
        }
    }
    Ok(())
}

fn simulate(a: StudyArgs) -> Outcome<()> {
    let measure = one_measure(&a.measure)?;
    if matches!(measure, MeasureConfig::Systemic { .. }) {
        return config("use the `systemic` subcommand for systemic measures");
    }
    let cfg = study_config(Statistic::Single { measure }, &a)?;
    print_json(&run_study(&cfg, &a)?);
    Ok(())
}

fn compare(a: StudyArgs) -> Outcome<()> {
    let (first, second) = match a.measure.as_slice() {
        [m] => {
            let m = read_measure(m)?;
            (m.clone(), m)
        }
        [f, s] => (read_measure(f)?, read_measure(s)?),
        _ => return config("compare takes one or two --measure arguments"),
    };
    let cfg = study_config(Statistic::Difference { first, second }, &a)?;
    print_json(&run_study(&cfg, &a)?);
    Ok(())
}

fn systemic(a: StudyArgs) -> Outcome<()> {
    let measure = one_measure(&a.measure)?;
    if !matches!(measure, MeasureConfig::Systemic { .. }) {
        return config("`systemic` needs a measure of kind `systemic`");
    }
    let cfg = study_config(Statistic::Single { measure }, &a)?;
    let oracles = cfg.laws.iter().map(Law::oracle).collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&dyn DistributionOracle> = oracles.iter().map(|o| o as &dyn DistributionOracle).collect();
    let limit = statistic_limit(&cfg.statistic, &refs)?;
    if let (Some(dir), Some(s)) = (&a.out, &limit.systemic) {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::Config(format!("cannot create `{}`: {e}", dir.display())))?;
        write_file(dir, "limit.json", &serde_json::to_string_pretty(s).expect("serializable"))?;
    }
    let summary = run_study(&cfg, &a)?;
    print_json(&json!({
        "exact": { "value": limit.value, "components": limit.components },
        "limit": limit.systemic,
        "summary": summary,
    }));
    Ok(())
}

fn check_identity(a: IdentityArgs) -> Outcome<()> {
    let schedule: BandwidthSchedule = a.bandwidth.parse()?;
    let mut out = Vec::new();
    for p in &a.p {
        let kernel = KernelSpec::new(a.kernel.into(), a.dim, *p)?;
        let d = check_strong_identity(&schedule, &kernel, *p);
        out.push(json!({ "p": p, "kernel": kernel.family.to_string(), "bandwidth": schedule.to_string(), "diagnostic": d }));
    }
    print_json(&serde_json::Value::Array(out));
    Ok(())
}

fn optimize(a: StudyArgs) -> Outcome<()> {
    let measure = one_measure(&a.measure)?;
    let MeasureConfig::HigherOrder { c, p } = measure else {
        return config("`optimize` needs a measure of kind `higher_order`");
    };
    let [law] = a.law.as_slice() else {
        return config("`optimize` takes one --law");
    };
    let oracle = law.oracle()?;
    let family = HigherOrderFamily { c, p };
    let support = oracle.draw(0, 100_000).column(0);
    let problem = ScalarProblem {
        family: &family,
        bracket: family.default_bracket(&support),
        source: ObjectiveSource::Exact(&oracle),
    };
    let report = minimize_scalar(&problem, DEFAULT_TOL)?;
    let flat = flatness_check(&problem, &report, 1001, 1e-9)?;
    let variance = optimal_value_clt_variance(&family, &oracle, report.u_hat)?;
    let summary = if a.replications > 0 {
        let cfg = study_config(Statistic::Single { measure }, &a)?;
        Some(run_study(&cfg, &a)?)
    } else {
        None
    };
    if report.at_boundary || flat {
        eprintln!("composite-risk: warning: minimizer is on the bracket boundary or not unique");
    }
    print_json(&json!({
        "exact": {
            "u_hat": report.u_hat,
            "theta": report.theta,
            "at_boundary": report.at_boundary,
            "flat": flat,
            "limit_variance": variance,
            "limit_std": variance.sqrt(),
        },
        "summary": summary,
    }));
    Ok(())
}
