use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hcoh::checkpoint;
use hcoh::codec::{encode, BinaryCodeSet};
use hcoh::data::{load_dense, load_idx_raw, load_mnist_dir, parse_dense_features, Dataset, Normalization};
use hcoh::eval::{evaluate, map_curve_auc, EvalReport};
use hcoh::pipeline::{encode_split, format_table, run_experiment, BenchmarkRow, MetricRecord, RunConfig};
use hcoh::{atomic_write, Error, GradientFactor, Result};

#[derive(Parser)]
#[command(name = "hcoh", version, about = "Online hashing with Hadamard codebooks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a dataset, train on the stream and report metrics at milestones.
    Train(TrainArgs),
    /// Hash a feature file with a trained checkpoint.
    Encode(EncodeArgs),
    /// Score query codes against database codes.
    Evaluate(EvaluateArgs),
    /// Train and evaluate at several code lengths, averaged over repeats.
    Benchmark(BenchmarkArgs),
    /// Turn a metrics stream into CSV curve data.
    Curve(CurveArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetKind {
    Mnist,
    Dense,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long, value_enum, default_value = "mnist")]
    dataset: DatasetKind,
    /// Directory with the four MNIST IDX files.
    #[arg(long, default_value = "data/mnist")]
    data_dir: PathBuf,
    /// HCOHFEAT feature file (dense datasets).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Label file matching --features.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// l2, unit255, zscore or none. Defaults to l2 for mnist, none for dense.
    #[arg(long)]
    norm: Option<Normalization>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let (mut ds, default_norm) = match self.dataset {
            DatasetKind::Mnist => (load_mnist_dir(&self.data_dir)?, Normalization::L2),
            DatasetKind::Dense => {
                let (Some(f), Some(l)) = (&self.features, &self.labels) else {
                    return Err(Error::InvalidArgument(
                        "--dataset dense needs --features and --labels".into(),
                    ));
                };
                (load_dense(f, l)?, Normalization::None)
            }
        };
        ds.normalize(self.norm.unwrap_or(default_norm));
        Ok(ds)
    }
}

#[derive(Args)]
struct ExperimentArgs {
    /// Learning rate.
    #[arg(long, default_value_t = 0.2)]
    eta: f64,
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    /// Master seed; all component seeds derive from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instance counts at which to evaluate: "every:N" or a comma list.
    #[arg(long)]
    milestones: Option<String>,
    /// Lower bound on the number of labels; defaults to the classes present
    /// in the dataset.
    #[arg(long)]
    max_labels: Option<usize>,
    #[arg(long, default_value_t = 1)]
    repeats: u32,
    /// Use (1 - tanh) * tanh as the gradient factor instead of 1 - tanh^2.
    #[arg(long)]
    sigmoid_gradient: bool,
    #[arg(long, default_value_t = 500)]
    k_prec: usize,
    #[arg(long)]
    k_map: Option<usize>,
    #[arg(long, default_value_t = 100)]
    test_per_class: usize,
    #[arg(long, default_value_t = 20_000)]
    train_size: usize,
    /// Passes over the training stream (not part of the online protocol).
    #[arg(long, default_value_t = 1)]
    epochs: usize,
}

impl ExperimentArgs {
    fn config(&self, bits: usize, ds: &Dataset) -> Result<RunConfig> {
        let total = self.train_size * self.epochs;
        let milestones = match self.milestones.as_deref() {
            None => Vec::new(),
            Some(s) => parse_milestones(s, total)?,
        };
        let cfg = RunConfig {
            bits,
            eta: self.eta,
            batch_size: self.batch_size,
            seed: self.seed,
            test_per_class: self.test_per_class,
            train_size: self.train_size,
            max_labels: self.max_labels.unwrap_or_else(|| ds.class_counts().len()),
            milestones,
            k_prec: self.k_prec,
            k_map: self.k_map,
            gradient: if self.sigmoid_gradient {
                GradientFactor::SigmoidForm
            } else {
                GradientFactor::TanhDerivative
            },
            epochs: self.epochs,
        };
        cfg.validate()?;
        if self.repeats == 0 {
            return Err(Error::InvalidArgument("--repeats must be at least 1".into()));
        }
        Ok(cfg)
    }
}

fn parse_milestones(s: &str, total: usize) -> Result<Vec<usize>> {
    let bad = || Error::InvalidArgument(format!("cannot parse milestones {s:?}"));
    if let Some(step) = s.strip_prefix("every:") {
        let step: usize = step.trim().parse().map_err(|_| bad())?;
        if step == 0 {
            return Err(bad());
        }
        return Ok(RunConfig::every(step, total));
    }
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect()
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Code length in bits.
    #[arg(long, default_value_t = 32)]
    bits: usize,
    /// Final checkpoint. With several repeats, repeat k > 0 goes to
    /// `<path>.r<k>`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Metrics stream destination; stdout when absent.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Also write test.codes and retrieval.codes for repeat 0 here.
    #[arg(long)]
    codes_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureFormat {
    Dense,
    Idx,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Labels to store with the codes; zeros when absent.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "dense")]
    format: FeatureFormat,
    /// Must match the normalization used for training. Defaults to l2 for
    /// IDX input and none for dense input.
    #[arg(long)]
    norm: Option<Normalization>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    database: PathBuf,
    #[arg(long, default_value_t = 500)]
    k_prec: usize,
    #[arg(long)]
    k_map: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Code lengths, comma separated.
    #[arg(long, default_value = "8,16,32,64,128", value_delimiter = ',')]
    bits: Vec<usize>,
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long)]
    metrics: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Collects output lines and writes them either to stdout as they come or
/// atomically to a file at the end.
struct Sink {
    path: Option<PathBuf>,
    buf: String,
}

impl Sink {
    fn new(path: Option<PathBuf>) -> Self {
        Sink { path, buf: String::new() }
    }

    fn line(&mut self, s: &str) -> Result<()> {
        match &self.path {
            Some(_) => {
                self.buf.push_str(s);
                self.buf.push('\n');
            }
            None => {
                let mut out = io::stdout().lock();
                writeln!(out, "{s}").map_err(|e| Error::Io { path: "<stdout>".into(), source: e })?;
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        if let Some(path) = self.path {
            atomic_write(&path, |f| f.write_all(self.buf.as_bytes()))?;
        }
        Ok(())
    }
}

fn repeat_path(base: &Path, repeat: u32) -> PathBuf {
    if repeat == 0 {
        base.to_owned()
    } else {
        let mut s = base.as_os_str().to_owned();
        s.push(format!(".r{repeat}"));
        PathBuf::from(s)
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let ds = args.data.load()?;
    let cfg = args.exp.config(args.bits, &ds)?;
    let mut sink = Sink::new(args.metrics.clone());
    let mut finals = Vec::new();
    for repeat in 0..args.exp.repeats {
        let out = run_experiment(&ds, &cfg, repeat, |rec| sink.line(&rec.to_json_line()))?;
        let coder = out.hasher.coder();
        eprintln!(
            "repeat {repeat}: r={} r*={} reducer={} labels={} rounds={}",
            cfg.bits,
            coder.codebook().order(),
            if coder.reducer().is_identity() { "identity" } else { "gaussian" },
            coder.codebook().assigned_count(),
            out.hasher.model().round(),
        );
        if let Some(path) = &args.checkpoint {
            checkpoint::save(&out.hasher, &repeat_path(path, repeat))?;
        }
        if repeat == 0 {
            if let Some(dir) = &args.codes_dir {
                fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
                let (q, db) = encode_split(out.hasher.model(), &ds, &out.split)?;
                q.write(&dir.join("test.codes"))?;
                db.write(&dir.join("retrieval.codes"))?;
            }
        }
        if let Some(r) = out.report {
            finals.push((r, out.auc));
        }
    }
    sink.finish()?;
    if !finals.is_empty() {
        let row = BenchmarkRow::from_reports(cfg.bits, &finals);
        eprint!("{}", format_table(&[row], cfg.k_prec, cfg.k_map));
    }
    Ok(())
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<()> {
    let ds = args.data.load()?;
    let mut sink = Sink::new(args.metrics.clone());
    let mut rows = Vec::new();
    let mut k = (args.exp.k_prec, args.exp.k_map);
    for &bits in &args.bits {
        let cfg = args.exp.config(bits, &ds)?;
        let mut finals = Vec::new();
        for repeat in 0..args.exp.repeats {
            let out = run_experiment(&ds, &cfg, repeat, |rec| sink.line(&rec.to_json_line()))?;
            if let Some(r) = out.report {
                k = (r.k_prec, r.k_map);
                finals.push((r, out.auc));
            }
        }
        if !finals.is_empty() {
            rows.push(BenchmarkRow::from_reports(bits, &finals));
        }
    }
    sink.finish()?;
    print!("{}", format_table(&rows, k.0, k.1));
    Ok(())
}

fn cmd_encode(args: EncodeArgs) -> Result<()> {
    let hasher = checkpoint::load(&args.checkpoint)?;
    let model = hasher.model();
    let mut ds = match args.format {
        FeatureFormat::Idx => {
            let labels = args.labels.as_ref().ok_or_else(|| {
                Error::InvalidArgument("IDX input needs --labels".into())
            })?;
            load_idx_raw(&args.features, labels)?
        }
        FeatureFormat::Dense => match &args.labels {
            Some(l) => load_dense(&args.features, l)?,
            None => {
                let bytes = fs::read(&args.features).map_err(|e| Error::Io { path: args.features.clone(), source: e })?;
                let (n, d, features) = parse_dense_features(&args.features.display().to_string(), &bytes)?;
                Dataset::new("features", d, features, vec![0; n])?
            }
        },
    };
    if ds.dim() != model.feature_dim() && !ds.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "feature dimension {} does not match checkpoint dimension {}",
            ds.dim(),
            model.feature_dim()
        )));
    }
    let default_norm = match args.format {
        FeatureFormat::Idx => Normalization::L2,
        FeatureFormat::Dense => Normalization::None,
    };
    ds.normalize(args.norm.unwrap_or(default_norm));
    let codes = encode(model, ds.features(), ds.labels().to_vec())?;
    codes.write(&args.out)?;
    eprintln!("encoded {} instances to {} bits", codes.len(), codes.bits());
    Ok(())
}

fn report_json(r: &EvalReport) -> serde_json::Value {
    serde_json::json!({
        "kind": "evaluation",
        "n_queries": r.n_queries,
        "n_database": r.n_database,
        "skipped_queries": r.skipped_queries,
        "map": r.map,
        "precision_at_k": r.precision_at_k,
        "k_prec": r.k_prec,
        "map_at_k": r.map_at_k,
        "k_map": r.k_map,
    })
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let queries = BinaryCodeSet::read(&args.queries)?;
    let database = BinaryCodeSet::read(&args.database)?;
    let report = evaluate(&queries, &database, args.k_prec, args.k_map)?;
    let json = report_json(&report).to_string();
    let mut sink = Sink::new(args.json);
    sink.line(&json)?;
    sink.finish()?;
    let row = BenchmarkRow::from_reports(queries.bits(), &[(report, None)]);
    eprint!("{}", format_table(&[row], args.k_prec, args.k_map));
    Ok(())
}

fn cmd_curve(args: CurveArgs) -> Result<()> {
    let text = fs::read_to_string(&args.metrics).map_err(|e| Error::Io { path: args.metrics.clone(), source: e })?;
    let mut sink = Sink::new(args.out);
    sink.line("repeat,bits,instances_seen,map,precision_at_k")?;
    let mut curves: Vec<((u32, usize), Vec<(usize, f64)>)> = Vec::new();
    for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: MetricRecord = serde_json::from_str(line).map_err(|e| {
            Error::InvalidArgument(format!("{}:{}: {e}", args.metrics.display(), lineno + 1))
        })?;
        match rec {
            MetricRecord::Checkpoint { repeat, bits, instances_seen, map, precision_at_k, .. } => {
                sink.line(&format!("{repeat},{bits},{instances_seen},{map},{precision_at_k}"))?;
                match curves.iter_mut().find(|(k, _)| *k == (repeat, bits)) {
                    Some((_, pts)) => pts.push((instances_seen, map)),
                    None => curves.push(((repeat, bits), vec![(instances_seen, map)])),
                }
            }
            MetricRecord::Summary { .. } => {}
        }
    }
    sink.finish()?;
    for ((repeat, bits), pts) in curves {
        if let Ok(auc) = map_curve_auc(&pts) {
            eprintln!("repeat {repeat} {bits}-bit: AUC {auc:.4} over {} points", pts.len());
        }
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("HCOH_NUM_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("HCOH_NUM_THREADS={v:?} is not a number")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Encode(a) => cmd_encode(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Curve(a) => cmd_curve(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
