//! Monte-Carlo replication driver, region metrics, persistence and reports.
//!
//! Replication `i` of a sweep runs with seed `master_seed + i` on its own
//! ChaCha stream, so results are bit-identical at any parallelism level.
//! Every replication appends one JSON record to the results file; `report`
//! aggregates records per (design, budget) into plot-ready CSV.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{effect_size, sample_covariates, Covariates, PairDataset, SyntheticConfig};
use crate::designs::{run_design, DataSource, RunConfig, RunResult};
use crate::error::{Error, Result};

/// Held-out fraction of CSV datasets used for region metrics.
pub const CSV_VALIDATION_FRACTION: f64 = 0.3;

/// Fresh points with ground-truth target-region labels.
#[derive(Debug, Clone)]
pub struct ValidationSet {
    pub points: Vec<(Covariates, bool)>,
}

impl ValidationSet {
    /// `n` fresh synthetic points labeled by `Δ(x) >= gamma`.
    pub fn synthetic<R: Rng>(
        cfg: &SyntheticConfig,
        gamma: f64,
        n: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let x = sample_covariates(rng);
            let label = effect_size(&x, cfg)? >= gamma;
            points.push((x, label));
        }
        Ok(ValidationSet { points })
    }

    /// Held-out pair rows labeled by the γ-rule on their stored potential
    /// outcomes (approximate ground truth: the outcomes are noisy).
    pub fn from_pairs(ds: &PairDataset, rows: &[usize], gamma: f64) -> Self {
        let points = rows
            .iter()
            .map(|&i| {
                let r = &ds.rows[i];
                (r.left.clone(), r.y1 - r.y0 >= gamma)
            })
            .collect();
        ValidationSet { points }
    }

    pub fn positives(&self) -> usize {
        self.points.iter().filter(|(_, p)| *p).count()
    }
}

/// Enrollment quality of a finished run on a validation set:
/// `(tpr, precision, accuracy)`.
pub fn region_metrics(run: &RunResult, val: &ValidationSet) -> Result<(f64, f64, f64)> {
    if val.points.is_empty() || val.positives() == 0 {
        return Err(Error::Input(
            "validation set must be nonempty with at least one positive".into(),
        ));
    }
    let mut enrolled = 0usize;
    let mut pos = 0usize;
    let mut enrolled_pos = 0usize;
    let mut correct = 0usize;
    for (x, label) in &val.points {
        let inside = run.region.contains(x);
        if inside {
            enrolled += 1;
        }
        if *label {
            pos += 1;
            if inside {
                enrolled_pos += 1;
            }
        }
        if run.region.vote(x) == *label {
            correct += 1;
        }
    }
    let tpr = enrolled_pos as f64 / pos as f64;
    let precision = if enrolled == 0 {
        0.0
    } else {
        enrolled_pos as f64 / enrolled as f64
    };
    let accuracy = correct as f64 / val.points.len() as f64;
    Ok((tpr, precision, accuracy))
}

/// Pool-measured enrollment-over-target ratio R̂ = enrolled / positives.
pub fn ratio_region(run: &RunResult, val: &ValidationSet) -> Result<f64> {
    if val.positives() == 0 {
        return Err(Error::Input("validation set has no positives".into()));
    }
    let enrolled = val
        .points
        .iter()
        .filter(|(x, _)| run.region.contains(x))
        .count();
    Ok(enrolled as f64 / val.positives() as f64)
}

/// One replication's JSONL record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub design: String,
    pub seed: u64,
    pub budget: usize,
    pub v: u8,
    pub labels_used: usize,
    pub tpr: Option<f64>,
    pub precision: Option<f64>,
    pub accuracy: Option<f64>,
    pub ratio: Option<f64>,
    pub wealth_final: f64,
}

/// Aggregated metrics of one (design, budget) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub design: String,
    pub budget: usize,
    pub n_runs: usize,
    /// Fraction of replications rejecting: power under H1, Type I under H0.
    pub rejection_rate: f64,
    pub stop_mean: f64,
    pub stop_std: f64,
    pub tpr_mean: Option<f64>,
    pub precision_mean: Option<f64>,
    pub accuracy_mean: Option<f64>,
    pub ratio_mean: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Aggregates records (all from one design/budget cell) into a summary.
pub fn aggregate(records: &[ReplicationRecord]) -> MetricsSummary {
    assert!(!records.is_empty());
    let n = records.len();
    let design = records[0].design.clone();
    let budget = records[0].budget;
    debug_assert!(records.iter().all(|r| r.design == design && r.budget == budget));
    let rejection_rate = records.iter().map(|r| r.v as f64).sum::<f64>() / n as f64;
    let stop_mean = records.iter().map(|r| r.labels_used as f64).sum::<f64>() / n as f64;
    let stop_var = if n > 1 {
        records
            .iter()
            .map(|r| {
                let d = r.labels_used as f64 - stop_mean;
                d * d
            })
            .sum::<f64>()
            / (n - 1) as f64
    } else {
        0.0
    };
    MetricsSummary {
        design,
        budget,
        n_runs: n,
        rejection_rate,
        stop_mean,
        stop_std: stop_var.sqrt(),
        tpr_mean: mean_of(records.iter().filter_map(|r| r.tpr)),
        precision_mean: mean_of(records.iter().filter_map(|r| r.precision)),
        accuracy_mean: mean_of(records.iter().filter_map(|r| r.accuracy)),
        ratio_mean: mean_of(records.iter().filter_map(|r| r.ratio)),
    }
}

/// Splits a pair dataset into (run rows, held-out validation rows).
fn split_pairs(ds: &PairDataset, master_seed: u64) -> (Arc<PairDataset>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(2);
    let n = ds.rows.len();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let n_val = ((n as f64) * CSV_VALIDATION_FRACTION).round() as usize;
    let n_val = n_val.min(n.saturating_sub(2));
    let (val_rows, run_rows) = order.split_at(n_val);
    let mut run_rows: Vec<usize> = run_rows.to_vec();
    run_rows.sort_unstable();
    let rows: Vec<_> = run_rows.iter().map(|&i| ds.rows[i].clone()).collect();
    let exact = rows.iter().all(|r| r.left == r.right);
    (
        Arc::new(PairDataset {
            rows,
            exact_match: exact,
        }),
        val_rows.to_vec(),
    )
}

fn annotate(e: Error, seed: u64) -> Error {
    match e {
        Error::Input(m) => Error::Input(format!("replication seed {seed}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("replication seed {seed}: {m}")),
        Error::PoolExhausted(m) => Error::PoolExhausted(format!("replication seed {seed}: {m}")),
        Error::MatchFailure(m) => Error::MatchFailure(format!("replication seed {seed}: {m}")),
        other => other,
    }
}

/// Synthetic validation-set size used per replication.
pub const VALIDATION_POINTS: usize = 1000;

fn run_one(cfg: &RunConfig, rep: usize, val_csv: Option<&ValidationSet>) -> Result<ReplicationRecord> {
    let seed = cfg.seed.wrapping_add(rep as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let run = run_design(cfg, &mut rng).map_err(|e| annotate(e, seed))?;

    // validation data never touches the run's rng stream
    let owned_val;
    let val: Option<&ValidationSet> = match &cfg.source {
        DataSource::Synthetic => {
            let mut vrng = ChaCha8Rng::seed_from_u64(seed);
            vrng.set_stream(1);
            owned_val =
                ValidationSet::synthetic(&cfg.sim.synthetic, cfg.gamma, VALIDATION_POINTS, &mut vrng)?;
            Some(&owned_val)
        }
        DataSource::Pairs(_) => val_csv,
    };

    let (tpr, precision, accuracy, ratio) = match val {
        Some(v) if v.positives() > 0 => {
            let (t, p, a) = region_metrics(&run, v)?;
            let r = ratio_region(&run, v)?;
            (Some(t), Some(p), Some(a), Some(r))
        }
        _ => (None, None, None, None),
    };

    Ok(ReplicationRecord {
        design: cfg.design.to_string(),
        seed,
        budget: cfg.budget,
        v: run.decision,
        labels_used: run.labels_used,
        tpr,
        precision,
        accuracy,
        ratio,
        wealth_final: run.wealth_final,
    })
}

/// Runs `n_runs` independent replications with seeds `seed + i` and
/// aggregates them. `parallelism` 0 means all available cores; results are
/// identical at any parallelism level.
pub fn monte_carlo(
    cfg: &RunConfig,
    n_runs: usize,
    parallelism: usize,
) -> Result<(MetricsSummary, Vec<ReplicationRecord>)> {
    if n_runs < 1 {
        return Err(Error::Input("n_runs must be >= 1".into()));
    }
    // CSV sources: carve out the shared held-out validation split once
    let mut cfg = cfg.clone();
    let val_csv: Option<ValidationSet> = match &cfg.source {
        DataSource::Synthetic => None,
        DataSource::Pairs(ds) => {
            let (run_ds, val_rows) = split_pairs(ds, cfg.seed);
            let val = ValidationSet::from_pairs(ds, &val_rows, cfg.gamma);
            cfg.source = DataSource::Pairs(run_ds);
            Some(val)
        }
    };

    let records: Result<Vec<ReplicationRecord>> = if parallelism == 1 {
        (0..n_runs)
            .map(|i| run_one(&cfg, i, val_csv.as_ref()))
            .collect()
    } else {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if parallelism > 0 {
            builder = builder.num_threads(parallelism);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            (0..n_runs)
                .into_par_iter()
                .map(|i| run_one(&cfg, i, val_csv.as_ref()))
                .collect()
        })
    };
    let records = records?;
    Ok((aggregate(&records), records))
}

/// Appends one JSON line per record.
pub fn append_records<P: AsRef<Path>>(path: P, records: &[ReplicationRecord]) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path.as_ref())?;
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSONL results file.
pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<ReplicationRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ReplicationRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            row: i + 1,
            reason: format!("bad results record: {e}"),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Groups records by (design, budget) and aggregates each cell, sorted.
pub fn report(records: &[ReplicationRecord]) -> Vec<MetricsSummary> {
    let mut groups: std::collections::BTreeMap<(String, usize), Vec<ReplicationRecord>> =
        std::collections::BTreeMap::new();
    for r in records {
        groups
            .entry((r.design.clone(), r.budget))
            .or_default()
            .push(r.clone());
    }
    groups.values().map(|g| aggregate(g)).collect()
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Writes aggregated summaries as plot-ready CSV (one row per design+budget).
pub fn write_summary_csv<W: Write>(summaries: &[MetricsSummary], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "design",
        "budget",
        "n_runs",
        "rejection_rate",
        "stop_mean",
        "stop_std",
        "tpr_mean",
        "precision_mean",
        "accuracy_mean",
        "ratio_mean",
    ])?;
    for s in summaries {
        w.write_record(&[
            s.design.clone(),
            s.budget.to_string(),
            s.n_runs.to_string(),
            format!("{}", s.rejection_rate),
            format!("{}", s.stop_mean),
            format!("{}", s.stop_std),
            opt_cell(s.tpr_mean),
            opt_cell(s.precision_mean),
            opt_cell(s.accuracy_mean),
            opt_cell(s.ratio_mean),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a JSONL results file and writes the aggregate CSV.
pub fn report_file<P: AsRef<Path>, Q: AsRef<Path>>(input: P, output: Q) -> Result<()> {
    let f = std::fs::File::open(input.as_ref())?;
    let records = read_records(std::io::BufReader::new(f))?;
    let summaries = report(&records);
    let out = std::fs::File::create(output.as_ref())?;
    write_summary_csv(&summaries, std::io::BufWriter::new(out))
}
