use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bsr::config::{config_hash, RunConfig};
use bsr::data::Query;
use bsr::ensemble::PredictiveEnsemble;
use bsr::equilibrium::{run_equilibrium, Level};
use bsr::prior::{load_targets, ParsePolicy};
use bsr::prior_fit::fit_hyperparameters;
use bsr::sampler::{run, ModelTrace, Progress};
use bsr::synth::{Derivative, ExpressionSpec, RosslerSpec};
use bsr::{Dataset, Error, OperationSet, PriorParams, Scorer};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "bsr", version, about = "Bayesian symbolic regression")]
struct Cli {
    /// Seed for every random stream
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with [sampler], [prior_fit] and [equilibrium] sections
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit prior hyperparameters to a corpus or a statistics table
    FitPrior(FitPriorArgs),
    /// Write a synthetic dataset
    Generate {
        #[command(subcommand)]
        kind: GenerateKind,
    },
    /// Sample models for a dataset and write the trace
    Sample(SampleArgs),
    /// Predict from a trace
    Predict(PredictArgs),
    /// Compare sampled and exact posteriors on a small expression space
    ValidateEquilibrium(EquilibriumArgs),
}

#[derive(Args, Debug)]
struct OpsetArgs {
    /// Comma-separated operations; `default` stands for the standard set
    #[arg(long, default_value = "default")]
    ops: String,
    #[arg(long, default_value_t = 2)]
    n_params: usize,
}

impl OpsetArgs {
    fn build(&self, n_vars: usize) -> bsr::Result<OperationSet> {
        OperationSet::from_spec(&self.ops, n_vars, self.n_params)
    }
}

#[derive(Args, Debug)]
struct FitPriorArgs {
    /// Corpus in the prefix grammar, or a TSV with op, mean_count, mean_sq_count
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    opset: OpsetArgs,
    #[arg(long, default_value_t = 2)]
    n_vars: usize,
    /// Output parameter table
    #[arg(long)]
    out: PathBuf,
    /// Convergence report (JSON); defaults to OUT with `.report.json` appended
    #[arg(long)]
    report: Option<PathBuf>,
    /// Skip unparseable corpus lines instead of aborting
    #[arg(long)]
    skip_invalid: bool,
    /// Start from an existing table
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum GenerateKind {
    /// y = F(x; theta) + noise with uniform inputs
    Expression {
        #[arg(long)]
        expr: String,
        /// Comma-separated parameter values
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Vec<f64>,
        /// Input range `lo:hi`, once per variable
        #[arg(long = "range", required = true, allow_hyphen_values = true)]
        ranges: Vec<String>,
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Noisy derivatives along a Rössler trajectory
    Rossler {
        #[arg(long, default_value_t = 0.2)]
        a: f64,
        #[arg(long, default_value_t = 0.2)]
        b: f64,
        #[arg(long, default_value_t = 5.7)]
        c: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value_t = 100.0)]
        transient: f64,
        #[arg(long, default_value_t = 500.0)]
        span: f64,
        /// Initial state `x,y,z`
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "1,1,1",
            allow_hyphen_values = true
        )]
        initial: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long, value_enum, default_value_t = Axis::X)]
        target: Axis,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Axis {
    X,
    Y,
    Z,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    data: PathBuf,
    /// Name of the response column
    #[arg(long, default_value = "y")]
    target: String,
    #[command(flatten)]
    opset: OpsetArgs,
    /// Prior parameter table (TSV)
    #[arg(long, conflicts_with = "prior_corpus")]
    prior_table: Option<PathBuf>,
    /// Corpus or statistics table to fit the prior from before sampling
    #[arg(long)]
    prior_corpus: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thinning: Option<usize>,
    /// Number of temperatures in the geometric ladder
    #[arg(long)]
    temperatures: Option<usize>,
    #[arg(long)]
    max_size: Option<usize>,
    /// Keep every tree, including later trees equal to an earlier expression
    #[arg(long)]
    allow_duplicates: bool,
    /// Record every temperature, not only T = 1
    #[arg(long)]
    record_all: bool,
    /// Sweeps between progress lines
    #[arg(long, default_value_t = 100)]
    progress: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Mdl,
    Median,
    MedianModel,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Median)]
    mode: Mode,
    /// Query points (CSV with header); a target column, if present, is scored
    #[arg(long, conflicts_with = "grid")]
    query: Option<PathBuf>,
    /// Regular grid `lo:hi:n`, once per variable
    #[arg(long, allow_hyphen_values = true)]
    grid: Vec<String>,
    /// Response column name in the query file
    #[arg(long, default_value = "y")]
    target: String,
    /// Lower and upper quantiles
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.95")]
    quantiles: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EquilibriumArgs {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Sample the prior alone; every tree is equally likely
    #[arg(long)]
    no_data: bool,
    /// Comma-separated temperature ladder starting at 1
    #[arg(long, value_delimiter = ',')]
    temperatures: Vec<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Compare trees or canonical expressions
    #[arg(long, value_enum)]
    level: Option<LevelArg>,
    /// Per-expression frequency table (CSV)
    #[arg(long)]
    table: Option<PathBuf>,
    /// Full report (JSON)
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LevelArg {
    Tree,
    Expression,
}

enum Failure {
    Usage(String),
    Runtime(String),
    Threshold(String),
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Failure::Usage(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Threshold(m)) => {
            eprintln!("{m}");
            ExitCode::from(3)
        }
    }
}

fn execute(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(Failure::runtime)?;
    }
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(Failure::usage)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    let seed = cli.seed.unwrap_or(config.sampler.seed);
    match cli.command {
        Command::FitPrior(a) => fit_prior(a, config, cli.verbose),
        Command::Generate { kind } => generate(kind, seed),
        Command::Sample(a) => sample(a, config, cli.verbose),
        Command::Predict(a) => predict(a),
        Command::ValidateEquilibrium(a) => validate_equilibrium(a, config, cli.verbose),
    }
}

fn fit_prior(a: FitPriorArgs, config: RunConfig, verbose: bool) -> CliResult {
    let mut fc = config.prior_fit;
    if let Some(v) = a.batch_size {
        fc.batch_size = v;
    }
    if let Some(v) = a.max_sweeps {
        fc.max_sweeps = v;
        fc.min_sweeps = fc.min_sweeps.min(v);
    }
    if let Some(v) = a.learning_rate {
        fc.learning_rate = v;
    }
    fc.validate().map_err(Failure::usage)?;
    let opset = a.opset.build(a.n_vars).map_err(Failure::usage)?;
    let policy = if a.skip_invalid {
        ParsePolicy::SkipAndWarn
    } else {
        ParsePolicy::Strict
    };
    let (targets, skipped) = load_targets(&a.corpus, &opset, policy).map_err(Failure::usage)?;
    for s in &skipped {
        eprintln!(
            "warning: {}:{}: skipped: {}",
            a.corpus.display(),
            s.line,
            s.error
        );
    }
    targets.validate().map_err(Failure::usage)?;
    let initial = match &a.init {
        Some(p) => Some(PriorParams::read_tsv(p, &opset).map_err(Failure::usage)?),
        None => None,
    };
    let hash = config_hash(&fc);
    let mut on_sweep = |r: &bsr::prior_fit::SweepRecord, _: &PriorParams| {
        if verbose {
            eprintln!(
                "sweep {}: max change {:.4}, max error {:.4}, window error {:.4}",
                r.sweep, r.max_relative_change, r.max_relative_error, r.window_error
            );
        }
    };
    let (params, report) = fit_hyperparameters(&targets, &opset, &fc, initial, Some(&mut on_sweep))
        .map_err(Failure::runtime)?;
    let table = format!(
        "# seed={} config_hash={hash} converged={} sweeps={}\n{}",
        fc.seed,
        report.converged,
        report.sweeps,
        params.to_tsv()
    );
    fs::write(&a.out, table).map_err(|e| Failure::runtime(Error::io(&a.out, e)))?;
    let report_path = a
        .report
        .unwrap_or_else(|| PathBuf::from(format!("{}.report.json", a.out.display())));
    let doc = json!({
        "seed": fc.seed,
        "config_hash": hash,
        "config": fc,
        "ops": opset.names(),
        "n_vars": opset.n_vars(),
        "n_params": opset.n_params(),
        "targets": { "mean_count": targets.mean_count, "mean_sq_count": targets.mean_sq_count, "n_expressions": targets.n_expressions },
        "skipped_lines": skipped.iter().map(|s| s.line).collect::<Vec<_>>(),
        "report": report,
    });
    write_json(&report_path, &doc)?;
    if report.converged {
        println!(
            "converged after {} sweeps; wrote {}",
            report.sweeps,
            a.out.display()
        );
    } else {
        println!(
            "not converged after {} sweeps; wrote the averaged parameters to {}",
            report.sweeps,
            a.out.display()
        );
    }
    Ok(())
}

fn parse_range(s: &str) -> CliResult<(f64, f64)> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| Failure::usage(format!("range `{s}` is not `lo:hi`")))?;
    let p = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| Failure::usage(format!("bad number in range `{s}`")))
    };
    Ok((p(lo)?, p(hi)?))
}

fn generate(kind: GenerateKind, seed: u64) -> CliResult {
    let (data, out, spec) = match kind {
        GenerateKind::Expression {
            expr,
            theta,
            ranges,
            n,
            noise,
            out,
        } => {
            let spec = ExpressionSpec {
                expr,
                theta,
                ranges: ranges
                    .iter()
                    .map(|r| parse_range(r))
                    .collect::<CliResult<_>>()?,
                n,
                noise,
            };
            spec.validate().map_err(Failure::usage)?;
            let d = spec.generate(seed).map_err(Failure::runtime)?;
            (d, out, json!({ "kind": "expression", "spec": spec }))
        }
        GenerateKind::Rossler {
            a,
            b,
            c,
            dt,
            transient,
            span,
            initial,
            n,
            noise,
            target,
            out,
        } => {
            let initial: [f64; 3] = initial
                .try_into()
                .map_err(|_| Failure::usage("--initial takes three values"))?;
            let spec = RosslerSpec {
                a,
                b,
                c,
                dt,
                transient,
                span,
                initial,
                n,
                noise,
                target: match target {
                    Axis::X => Derivative::X,
                    Axis::Y => Derivative::Y,
                    Axis::Z => Derivative::Z,
                },
            };
            spec.validate().map_err(Failure::usage)?;
            let d = spec.generate(seed).map_err(Failure::runtime)?;
            (d, out, json!({ "kind": "rossler", "spec": spec }))
        }
    };
    data.write_csv(&out).map_err(Failure::runtime)?;
    let meta = json!({ "seed": seed, "config_hash": config_hash(&spec), "generator": spec, "rows": data.len() });
    write_json(&sidecar(&out), &meta)?;
    println!("wrote {} rows to {}", data.len(), out.display());
    Ok(())
}

fn sidecar(out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.meta.json", out.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(Failure::runtime)?;
    fs::write(path, text + "\n").map_err(|e| Failure::runtime(Error::io(path, e)))
}

fn sample(a: SampleArgs, config: RunConfig, verbose: bool) -> CliResult {
    let mut sc = config.sampler;
    if let Some(v) = a.steps {
        sc.n_steps = v;
    }
    if let Some(v) = a.restarts {
        sc.restarts = v;
    }
    if let Some(v) = a.burn_in {
        sc.burn_in = Some(v);
    }
    if let Some(v) = a.thinning {
        sc.thinning = v;
    }
    if let Some(v) = a.temperatures {
        sc.ladder.count = v;
        sc.ladder.temperatures = None;
    }
    if let Some(v) = a.max_size {
        sc.max_tree_size = v;
    }
    if a.allow_duplicates {
        sc.forbid_duplicates = false;
    }
    if a.record_all {
        sc.record_all_temperatures = true;
    }
    sc.validate().map_err(Failure::usage)?;
    let data = Dataset::read_csv(&a.data, &a.target).map_err(Failure::usage)?;
    let opset = a.opset.build(data.n_vars()).map_err(Failure::usage)?;
    let prior = if let Some(p) = &a.prior_table {
        PriorParams::read_tsv(p, &opset).map_err(Failure::usage)?
    } else if let Some(p) = &a.prior_corpus {
        let (targets, skipped) =
            load_targets(p, &opset, ParsePolicy::SkipAndWarn).map_err(Failure::usage)?;
        for s in &skipped {
            eprintln!("warning: {}:{}: skipped: {}", p.display(), s.line, s.error);
        }
        let mut fc = config.prior_fit;
        fc.seed = sc.seed;
        eprintln!("fitting prior to {}", p.display());
        let (params, report) =
            fit_hyperparameters(&targets, &opset, &fc, None, None).map_err(Failure::runtime)?;
        if !report.converged {
            eprintln!(
                "warning: prior fit did not converge in {} sweeps",
                report.sweeps
            );
        }
        params
    } else {
        PriorParams::uniform(&opset)
    };
    if verbose {
        eprintln!(
            "operations: {} ({} variables, {} parameters)",
            opset.spec(),
            opset.n_vars(),
            opset.n_params()
        );
        eprintln!("config hash: {}", sc.hash());
    }
    let scorer = Scorer::new(opset, Some(data), prior, sc.fit.clone());
    let every = a.progress.max(1);
    let mut report = |p: &Progress| {
        if p.step % every == 0 {
            eprintln!(
                "restart {} step {}: best DL {:.3}, T=1 acceptance {:.3}, swap acceptance {:.3}",
                p.restart, p.step, p.best_description_length, p.t0_acceptance, p.swap_acceptance
            );
        }
    };
    let trace = run(&scorer, &sc, Some(&mut report)).map_err(Failure::runtime)?;
    trace.write_path(&a.out).map_err(Failure::runtime)?;
    if let Ok(e) = PredictiveEnsemble::from_trace(&trace) {
        let m = e.mdl_model();
        println!(
            "MDL model: {}  DL {:.4}  theta {:?}",
            m.tree.render(e.opset()),
            m.description_length,
            &m.theta
        );
    }
    println!("wrote {} states to {}", trace.rows.len(), a.out.display());
    Ok(())
}

fn grid_columns(specs: &[String]) -> CliResult<Vec<Vec<f64>>> {
    let mut axes = Vec::new();
    for s in specs {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Failure::usage(format!("grid `{s}` is not `lo:hi:n`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        axes.push(
            (0..n)
                .map(|i| {
                    if n == 1 {
                        lo
                    } else {
                        lo + (hi - lo) * i as f64 / (n - 1) as f64
                    }
                })
                .collect::<Vec<f64>>(),
        );
    }
    let total: usize = axes.iter().map(Vec::len).product();
    let mut columns = vec![Vec::with_capacity(total); axes.len()];
    for k in 0..total {
        let mut rem = k;
        for (j, axis) in axes.iter().enumerate().rev() {
            columns[j].push(axis[rem % axis.len()]);
            rem /= axis.len();
        }
    }
    Ok(columns)
}

fn predict(a: PredictArgs) -> CliResult {
    let trace = ModelTrace::read_path(&a.trace).map_err(Failure::usage)?;
    let ensemble = PredictiveEnsemble::from_trace(&trace).map_err(Failure::usage)?;
    let opset = ensemble.opset().clone();
    let inputs: Vec<String> = match &trace.metadata.dataset {
        Some(d) => d.inputs.clone(),
        None => (1..=opset.n_vars()).map(|j| format!("x{j}")).collect(),
    };
    let query = if let Some(q) = &a.query {
        Some(Query::read_csv(q, &inputs, &a.target).map_err(Failure::usage)?)
    } else if !a.grid.is_empty() {
        if a.grid.len() != opset.n_vars() {
            return Err(Failure::usage(format!(
                "--grid is needed once per variable ({})",
                opset.n_vars()
            )));
        }
        Some(Query {
            names: inputs.clone(),
            columns: grid_columns(&a.grid)?,
            y: None,
        })
    } else {
        None
    };
    println!(
        "trace seed {} config {}; {} models",
        trace.metadata.seed,
        trace.metadata.config_hash,
        ensemble.len()
    );
    match a.mode {
        Mode::Mdl => {
            let m = ensemble.mdl_model();
            println!("{}\t{}", m.tree.render(&opset), m.description_length);
            if let Some(q) = &query {
                let preds: Vec<f64> = (0..q.len())
                    .map(|k| {
                        let x: Vec<f64> = q.columns.iter().map(|c| c[k]).collect();
                        m.tree.evaluate(&opset, &x, &m.theta)
                    })
                    .collect();
                report_mae(q, &preds);
                write_predictions(a.out.as_deref(), q, &["prediction"], |k| {
                    vec![fmt_opt(Some(preds[k]))]
                })?;
            }
        }
        Mode::Median => {
            let q = query.ok_or_else(|| Failure::usage("--mode median needs --query or --grid"))?;
            if a.quantiles.len() != 2 || a.quantiles.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Failure::usage("--quantiles takes two values in [0, 1]"));
            }
            let preds = ensemble
                .predict_grid(&q.columns, &a.quantiles)
                .map_err(Failure::usage)?;
            let medians: Vec<f64> = preds.iter().map(|p| p.median.unwrap_or(f64::NAN)).collect();
            report_mae(&q, &medians);
            write_predictions(
                a.out.as_deref(),
                &q,
                &["median", "low", "high", "n_finite_members"],
                |k| {
                    let p = &preds[k];
                    vec![
                        fmt_opt(p.median),
                        fmt_opt(p.quantiles[0]),
                        fmt_opt(p.quantiles[1]),
                        p.n_finite.to_string(),
                    ]
                },
            )?;
        }
        Mode::MedianModel => {
            let q = query
                .ok_or_else(|| Failure::usage("--mode median-model needs --query or --grid"))?;
            let (m, d) = ensemble
                .median_predictive_model(&q.columns)
                .map_err(Failure::runtime)?;
            println!(
                "{}\t{}\tdistance {}",
                m.tree.render(&opset),
                m.description_length,
                d
            );
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => v.to_string(),
        _ => String::new(),
    }
}

fn report_mae(q: &Query, preds: &[f64]) {
    let Some(y) = &q.y else { return };
    let pairs: Vec<(f64, f64)> = y
        .iter()
        .zip(preds)
        .filter(|(_, p)| p.is_finite())
        .map(|(a, b)| (*a, *b))
        .collect();
    if pairs.is_empty() {
        return;
    }
    let mae = pairs.iter().map(|(a, b)| (a - b).abs()).sum::<f64>() / pairs.len() as f64;
    println!("MAE {mae} over {} of {} points", pairs.len(), y.len());
}

fn write_predictions(
    out: Option<&Path>,
    q: &Query,
    extra: &[&str],
    row: impl Fn(usize) -> Vec<String>,
) -> CliResult {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| Failure::runtime(Error::io(p, e)))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<String> = q.names.clone();
    header.extend(extra.iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(Failure::runtime)?;
    for k in 0..q.len() {
        let mut rec: Vec<String> = q.columns.iter().map(|c| c[k].to_string()).collect();
        rec.extend(row(k));
        w.write_record(&rec).map_err(Failure::runtime)?;
    }
    w.flush().map_err(Failure::runtime)
}

fn validate_equilibrium(a: EquilibriumArgs, config: RunConfig, verbose: bool) -> CliResult {
    let mut ec = config.equilibrium;
    if let Some(v) = a.steps {
        ec.n_steps = v;
    }
    if let Some(v) = a.burn_in {
        ec.burn_in = v;
    }
    if a.no_data {
        ec.with_data = false;
    }
    if !a.temperatures.is_empty() {
        ec.temperatures = a.temperatures;
    }
    if let Some(v) = a.threshold {
        ec.threshold = v;
    }
    if let Some(l) = a.level {
        ec.level = match l {
            LevelArg::Tree => Level::Tree,
            LevelArg::Expression => Level::Expression,
        };
    }
    if ec.burn_in >= ec.n_steps {
        return Err(Failure::usage(
            "burn-in must be smaller than the number of steps",
        ));
    }
    ec.sampler_config().validate().map_err(Failure::usage)?;
    let hash = config_hash(&ec);
    if verbose {
        eprintln!("config hash: {hash}");
    }
    let r = run_equilibrium(&ec).map_err(Failure::runtime)?;
    println!(
        "{} trees, {} expressions, {} recorded steps; acceptance {:.3}",
        r.n_trees, r.n_expressions, r.recorded, r.acceptance_rate
    );
    println!(
        "total variation: trees {:.5}, expressions {:.5}",
        r.tv_trees, r.tv_expressions
    );
    if verbose {
        for row in r.table.iter().take(20) {
            println!(
                "{:50} {:3} {:.5} {:.5}",
                row.key, row.n_trees, row.exact, row.sampled
            );
        }
    }
    if let Some(p) = &a.table {
        let mut w = csv::Writer::from_path(p).map_err(Failure::runtime)?;
        w.write_record(["expression", "n_trees", "exact", "sampled"])
            .map_err(Failure::runtime)?;
        for row in &r.table {
            w.write_record([
                row.key.clone(),
                row.n_trees.to_string(),
                row.exact.to_string(),
                row.sampled.to_string(),
            ])
            .map_err(Failure::runtime)?;
        }
        w.flush().map_err(Failure::runtime)?;
    }
    if let Some(p) = &a.report {
        write_json(
            p,
            &json!({ "seed": ec.seed, "config_hash": hash, "config": ec, "report": r }),
        )?;
    }
    if r.passed {
        println!("PASS: distance below {}", r.threshold);
        Ok(())
    } else {
        Err(Failure::Threshold(format!(
            "FAIL: distance not below {}",
            r.threshold
        )))
    }
}
