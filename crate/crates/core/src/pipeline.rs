//! End-to-end experiment: split, stream, train, and evaluate at milestones.

use serde::{Deserialize, Serialize};

use crate::codec::{encode_rows, BinaryCodeSet};
use crate::data::{split_indices, Dataset, SplitIndices, SplitSpec, Stream};
use crate::error::{Error, Result};
use crate::eval::{evaluate, map_curve_auc, EvalReport};
use crate::learner::{GradientFactor, HashModel, OnlineHasher};
use crate::lsh::TargetCoder;
use crate::seed::{self, SeedSet};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub bits: usize,
    pub eta: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub test_per_class: usize,
    pub train_size: usize,
    /// Lower bound on the number of labels the stream will contain.
    pub max_labels: usize,
    pub milestones: Vec<usize>,
    pub k_prec: usize,
    pub k_map: Option<usize>,
    pub gradient: GradientFactor,
    /// Passes over the training subset. Anything but 1 leaves the online
    /// protocol.
    pub epochs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            bits: 32,
            eta: 0.2,
            batch_size: 1,
            seed: 0,
            test_per_class: 100,
            train_size: 20_000,
            max_labels: 2,
            milestones: Vec::new(),
            k_prec: 500,
            k_map: None,
            gradient: GradientFactor::TanhDerivative,
            epochs: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.bits == 0 {
            return bad("--bits must be at least 1".into());
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad(format!("--eta must be positive, got {}", self.eta));
        }
        if self.batch_size == 0 {
            return bad("--batch-size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("--epochs must be at least 1".into());
        }
        if self.k_prec == 0 || self.k_map == Some(0) {
            return bad("metric cutoffs must be positive".into());
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) || self.milestones.first() == Some(&0) {
            return bad("milestones must be positive and strictly increasing".into());
        }
        Ok(())
    }

    /// Milestones every `step` instances up to `total` inclusive.
    pub fn every(step: usize, total: usize) -> Vec<usize> {
        if step == 0 {
            return Vec::new();
        }
        (1..=total / step).map(|k| k * step).collect()
    }
}

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricRecord {
    Checkpoint {
        repeat: u32,
        bits: usize,
        instances_seen: usize,
        map: f64,
        precision_at_k: f64,
        k_prec: usize,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        map_at_k: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        k_map: Option<usize>,
    },
    Summary {
        repeat: u32,
        bits: usize,
        codeword_order: usize,
        identity_reducer: bool,
        instances_seen: usize,
        map: f64,
        precision_at_k: f64,
        k_prec: usize,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        map_at_k: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        k_map: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        auc: Option<f64>,
    },
}

impl MetricRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metric records serialize")
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub hasher: OnlineHasher,
    pub split: SplitIndices,
    /// Metrics of the final model; `None` when the test split is empty.
    pub report: Option<EvalReport>,
    pub curve: Vec<(usize, f64)>,
    pub auc: Option<f64>,
    pub records: Vec<MetricRecord>,
}

/// Codes for the test (query) and retrieval (database) parts of a split.
pub fn encode_split(model: &HashModel, ds: &Dataset, split: &SplitIndices) -> Result<(BinaryCodeSet, BinaryCodeSet)> {
    let queries = encode_rows(model, ds.rows_at(&split.test), ds.labels_at(&split.test))?;
    let database = encode_rows(model, ds.rows_at(&split.retrieval), ds.labels_at(&split.retrieval))?;
    Ok((queries, database))
}

fn evaluate_model(model: &HashModel, ds: &Dataset, split: &SplitIndices, cfg: &RunConfig) -> Result<EvalReport> {
    let (q, db) = encode_split(model, ds, split)?;
    evaluate(&q, &db, cfg.k_prec.min(db.len()), cfg.k_map)
}

/// Runs repeat `repeat` of the experiment on an already normalized dataset.
/// `on_record` sees every metric record as soon as it is produced.
pub fn run_experiment(
    ds: &Dataset,
    cfg: &RunConfig,
    repeat: u32,
    mut on_record: impl FnMut(&MetricRecord) -> Result<()>,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let seeds = SeedSet::for_repeat(cfg.seed, repeat);
    let split = split_indices(
        ds,
        &SplitSpec {
            test_per_class: cfg.test_per_class,
            train_subset: cfg.train_size,
            seed: seeds.split,
        },
    )?;
    let can_eval = !split.test.is_empty() && !split.retrieval.is_empty();

    let model = HashModel::init(ds.dim(), cfg.bits, cfg.eta, seeds.model)?.with_gradient_factor(cfg.gradient);
    let coder = TargetCoder::for_bits(cfg.bits, cfg.max_labels, seeds.codebook, seeds.reducer)?;
    let codeword_order = coder.codebook().order();
    let identity_reducer = coder.reducer().is_identity();
    let mut hasher = OnlineHasher::new(model, coder)?;

    let mut records = Vec::new();
    let mut curve = Vec::new();
    let mut last_report: Option<(usize, EvalReport)> = None;
    let mut streams = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let s = if epoch == 0 { seeds.stream } else { seed::derive(seeds.stream, epoch as u64) };
        streams.push(Stream::new(ds, split.train.clone(), cfg.batch_size, s)?);
    }
    let milestones = if can_eval { cfg.milestones.as_slice() } else { &[] };
    hasher.train_stream(streams.into_iter().flatten(), milestones, |seen, model| {
        let report = evaluate_model(model, ds, &split, cfg)?;
        let rec = MetricRecord::Checkpoint {
            repeat,
            bits: cfg.bits,
            instances_seen: seen,
            map: report.map,
            precision_at_k: report.precision_at_k,
            k_prec: report.k_prec,
            map_at_k: report.map_at_k,
            k_map: report.k_map,
        };
        on_record(&rec)?;
        records.push(rec);
        curve.push((seen, report.map));
        last_report = Some((seen, report));
        Ok(())
    })?;

    let seen_total = split.train.len() * cfg.epochs;
    let report = if !can_eval {
        None
    } else {
        match last_report {
            Some((seen, r)) if seen == seen_total => Some(r),
            _ => Some(evaluate_model(hasher.model(), ds, &split, cfg)?),
        }
    };
    let auc = if curve.len() >= 2 { Some(map_curve_auc(&curve)?) } else { None };
    if let Some(r) = &report {
        let rec = MetricRecord::Summary {
            repeat,
            bits: cfg.bits,
            codeword_order,
            identity_reducer,
            instances_seen: seen_total,
            map: r.map,
            precision_at_k: r.precision_at_k,
            k_prec: r.k_prec,
            map_at_k: r.map_at_k,
            k_map: r.k_map,
            auc,
        };
        on_record(&rec)?;
        records.push(rec);
    }

    Ok(RunOutcome {
        hasher,
        split,
        report,
        curve,
        auc,
        records,
    })
}

/// Mean metrics over repeats at one code length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub bits: usize,
    pub repeats: usize,
    pub map: f64,
    pub precision_at_k: f64,
    pub map_at_k: Option<f64>,
    pub auc: Option<f64>,
}

impl BenchmarkRow {
    pub fn from_reports(bits: usize, runs: &[(EvalReport, Option<f64>)]) -> Self {
        let n = runs.len() as f64;
        let mean = |f: &dyn Fn(&(EvalReport, Option<f64>)) -> Option<f64>| -> Option<f64> {
            let vals: Vec<f64> = runs.iter().filter_map(f).collect();
            (vals.len() == runs.len() && !vals.is_empty()).then(|| vals.iter().sum::<f64>() / n)
        };
        BenchmarkRow {
            bits,
            repeats: runs.len(),
            map: mean(&|r| Some(r.0.map)).unwrap_or(0.0),
            precision_at_k: mean(&|r| Some(r.0.precision_at_k)).unwrap_or(0.0),
            map_at_k: mean(&|r| r.0.map_at_k),
            auc: mean(&|r| r.1),
        }
    }
}

/// Text table with one column per code length, one metric per row.
pub fn format_table(rows: &[BenchmarkRow], k_prec: usize, k_map: Option<usize>) -> String {
    let mut out = String::new();
    let header: Vec<String> = rows.iter().map(|r| format!("{:>8}", format!("{}-bit", r.bits))).collect();
    out.push_str(&format!("{:<16}{}\n", "metric", header.join("")));
    let mut line = |name: String, vals: Vec<Option<f64>>| {
        if vals.iter().all(Option::is_none) {
            return;
        }
        let cells: Vec<String> = vals
            .iter()
            .map(|v| v.map_or_else(|| format!("{:>8}", "-"), |v| format!("{v:>8.3}")))
            .collect();
        out.push_str(&format!("{name:<16}{}\n", cells.join("")));
    };
    line("mAP".into(), rows.iter().map(|r| Some(r.map)).collect());
    if let Some(k) = k_map {
        line(format!("mAP@{k}"), rows.iter().map(|r| r.map_at_k).collect());
    }
    line(format!("Precision@{k_prec}"), rows.iter().map(|r| Some(r.precision_at_k)).collect());
    line("AUC".into(), rows.iter().map(|r| r.auc).collect());
    out
}
