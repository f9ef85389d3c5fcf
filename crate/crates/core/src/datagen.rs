//! Synthetic population and outcome generation, plus CSV matched-pair ingestion.
//!
//! The synthetic model draws two-dimensional covariates uniformly on the unit
//! square. The noiseless control response is `f(x) = 3·x1 − x1·x2` (the
//! `x2_reading` variant `x1 + 2·x2 − x1·x2` is available as a config switch),
//! and the treatment effect is the binary indicator `Δ(x) = 1[x1 + s < x2]`
//! under H1, identically zero under H0. Observed outcomes add centered
//! Gaussian noise with variance `sigma2`.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Participant covariates: a fixed-dimension vector of finite features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariates(pub Vec<f64>);

impl Covariates {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &Covariates) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Vec<f64>> for Covariates {
    fn from(v: Vec<f64>) -> Self {
        Covariates(v)
    }
}

/// Which hypothesis the synthetic generator simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hypothesis::H0 => write!(f, "h0"),
            Hypothesis::H1 => write!(f, "h1"),
        }
    }
}

/// Reading of the control-response formula.
///
/// `Literal` evaluates the formula exactly as printed (`x1 + 2·x1 − x1·x2`,
/// i.e. `3·x1 − x1·x2`); `X2Reading` uses the plausible correction
/// `x1 + 2·x2 − x1·x2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FVariant {
    #[default]
    Literal,
    X2Reading,
}

/// How `sigma2` is attributed across a matched pair's two outcomes.
///
/// `Pair`: the within-pair outcome difference has variance `sigma2` (each
/// unit's draw carries `sigma2/2`), matching the distribution the reported
/// results and the labeling-probability analysis are based on. `Unit`: every
/// single outcome carries the full `sigma2`, so the pair difference has
/// variance `2·sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NoiseModel {
    #[default]
    Pair,
    Unit,
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::Pair => write!(f, "pair"),
            NoiseModel::Unit => write!(f, "unit"),
        }
    }
}

impl fmt::Display for FVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FVariant::Literal => write!(f, "literal"),
            FVariant::X2Reading => write!(f, "x2_reading"),
        }
    }
}

/// Parameters of the synthetic data model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub hypothesis: Hypothesis,
    /// Effect-region intercept: under H1 the effect region is `x1 + s < x2`.
    pub s: f64,
    /// Outcome noise variance.
    pub sigma2: f64,
    /// Unlabeled population size M.
    pub population_size: usize,
    pub f_variant: FVariant,
    pub noise_model: NoiseModel,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            hypothesis: Hypothesis::H1,
            s: 0.5,
            sigma2: 0.1,
            population_size: 1000,
            f_variant: FVariant::Literal,
            noise_model: NoiseModel::Pair,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.s) {
            return Err(Error::Input(format!("s must be in [0, 1], got {}", self.s)));
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::Input(format!(
                "sigma2 must be > 0, got {}",
                self.sigma2
            )));
        }
        if self.population_size < 2 {
            return Err(Error::Input(format!(
                "population_size must be >= 2, got {}",
                self.population_size
            )));
        }
        Ok(())
    }
}

pub const SYNTHETIC_DIM: usize = 2;

fn check_dim2(x: &Covariates) -> Result<()> {
    if x.dim() != SYNTHETIC_DIM {
        return Err(Error::Input(format!(
            "synthetic model expects dimension {}, got {}",
            SYNTHETIC_DIM,
            x.dim()
        )));
    }
    Ok(())
}

/// Treatment effect size Δ(x): 1 under H1 when `x1 + s < x2`, 0 otherwise.
pub fn effect_size(x: &Covariates, cfg: &SyntheticConfig) -> Result<f64> {
    check_dim2(x)?;
    match cfg.hypothesis {
        Hypothesis::H0 => Ok(0.0),
        Hypothesis::H1 => {
            if x.0[0] + cfg.s < x.0[1] {
                Ok(1.0)
            } else {
                Ok(0.0)
            }
        }
    }
}

/// Deterministic noiseless control response f(x).
pub fn control_response(x: &Covariates, variant: FVariant) -> Result<f64> {
    check_dim2(x)?;
    let (x1, x2) = (x.0[0], x.0[1]);
    Ok(match variant {
        FVariant::Literal => 3.0 * x1 - x1 * x2,
        FVariant::X2Reading => x1 + 2.0 * x2 - x1 * x2,
    })
}

/// One outcome draw: `a·Δ(x) + f(x) + e` with `e` centered Gaussian whose
/// variance follows the configured noise model (`sigma2/2` per unit under
/// `Pair`, `sigma2` under `Unit`).
pub fn sample_outcome<R: Rng>(
    x: &Covariates,
    a: bool,
    cfg: &SyntheticConfig,
    rng: &mut R,
) -> Result<f64> {
    let delta = effect_size(x, cfg)?;
    let f = control_response(x, cfg.f_variant)?;
    let var = match cfg.noise_model {
        NoiseModel::Pair => cfg.sigma2 / 2.0,
        NoiseModel::Unit => cfg.sigma2,
    };
    let noise = Normal::new(0.0, var.sqrt())
        .map_err(|e| Error::Input(format!("bad noise variance: {e}")))?
        .sample(rng);
    Ok(if a { delta } else { 0.0 } + f + noise)
}

/// M i.i.d. points with each coordinate uniform on [0, 1].
pub fn generate_population<R: Rng>(cfg: &SyntheticConfig, rng: &mut R) -> Result<Vec<Covariates>> {
    cfg.validate()?;
    Ok((0..cfg.population_size)
        .map(|_| Covariates(vec![rng.random::<f64>(), rng.random::<f64>()]))
        .collect())
}

/// One uniform draw from the covariate distribution.
pub fn sample_covariates<R: Rng>(rng: &mut R) -> Covariates {
    Covariates(vec![rng.random::<f64>(), rng.random::<f64>()])
}

/// One matched-pair row with its potential outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub pair_id: String,
    pub left: Covariates,
    pub right: Covariates,
    /// Potential control outcome of the pair.
    pub y0: f64,
    /// Potential treatment outcome of the pair.
    pub y1: f64,
}

/// A matched-pair dataset with potential outcomes, as ingested from CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDataset {
    pub rows: Vec<PairRow>,
    /// True when every row's left and right covariates are elementwise equal.
    pub exact_match: bool,
}

impl PairDataset {
    pub fn dim(&self) -> usize {
        self.rows.first().map(|r| r.left.dim()).unwrap_or(0)
    }

    pub fn from_rows(rows: Vec<PairRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Schema("dataset has no rows".into()));
        }
        let d = rows[0].left.dim();
        let mut seen = std::collections::HashSet::new();
        for (i, r) in rows.iter().enumerate() {
            let rownum = i + 1;
            if r.left.dim() != d || r.right.dim() != d {
                return Err(Error::Schema(format!(
                    "row {rownum} has covariate dimension {}/{}, expected {d}",
                    r.left.dim(),
                    r.right.dim()
                )));
            }
            if !r.y0.is_finite() || !r.y1.is_finite() {
                return Err(Error::Parse {
                    row: rownum,
                    reason: "non-finite outcome".into(),
                });
            }
            if r.left.0.iter().chain(&r.right.0).any(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    row: rownum,
                    reason: "non-finite covariate".into(),
                });
            }
            if !seen.insert(r.pair_id.clone()) {
                return Err(Error::Schema(format!(
                    "duplicate pair_id '{}' at row {rownum}",
                    r.pair_id
                )));
            }
        }
        let exact_match = rows.iter().all(|r| r.left == r.right);
        Ok(PairDataset { rows, exact_match })
    }
}

/// Builds the CSV header `pair_id,x1..xd,y0,y1,x1_r..xd_r` for dimension `d`.
fn schema_header(d: usize) -> Vec<String> {
    let mut h = vec!["pair_id".to_string()];
    for i in 1..=d {
        h.push(format!("x{i}"));
    }
    h.push("y0".into());
    h.push("y1".into());
    for i in 1..=d {
        h.push(format!("x{i}_r"));
    }
    h
}

/// Infers the covariate dimension from a header, or rejects it.
fn parse_header(header: &[String]) -> Result<usize> {
    // layout: 1 id column + d + 2 outcomes + d
    if header.len() < 5 || (header.len() - 3) % 2 != 0 {
        return Err(Error::Schema(format!(
            "header has {} columns, expected pair_id,x1..xd,y0,y1,x1_r..xd_r",
            header.len()
        )));
    }
    let d = (header.len() - 3) / 2;
    let expected = schema_header(d);
    if header != expected.as_slice() {
        return Err(Error::Schema(format!(
            "header mismatch: got [{}], expected [{}]",
            header.join(","),
            expected.join(",")
        )));
    }
    Ok(d)
}

fn parse_field(raw: &str, row: usize, name: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        row,
        reason: format!("field '{name}' is not a number: '{raw}'"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            reason: format!("field '{name}' is not finite"),
        });
    }
    Ok(v)
}

/// Reads a matched-pair dataset from CSV (see the schema in `schema_header`).
pub fn read_pairs_csv<R: Read>(reader: R) -> Result<PairDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let d = parse_header(&header)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rownum = i + 1;
        let rec = rec?;
        if rec.len() != 2 * d + 3 {
            return Err(Error::Parse {
                row: rownum,
                reason: format!("expected {} fields, got {}", 2 * d + 3, rec.len()),
            });
        }
        let pair_id = rec[0].trim().to_string();
        let mut left = Vec::with_capacity(d);
        for j in 0..d {
            left.push(parse_field(&rec[1 + j], rownum, &header[1 + j])?);
        }
        let y0 = parse_field(&rec[1 + d], rownum, "y0")?;
        let y1 = parse_field(&rec[2 + d], rownum, "y1")?;
        let mut right = Vec::with_capacity(d);
        for j in 0..d {
            right.push(parse_field(&rec[3 + d + j], rownum, &header[3 + d + j])?);
        }
        rows.push(PairRow {
            pair_id,
            left: Covariates(left),
            right: Covariates(right),
            y0,
            y1,
        });
    }
    PairDataset::from_rows(rows)
}

/// Loads a matched-pair dataset from a CSV file.
pub fn load_pairs_csv<P: AsRef<Path>>(path: P) -> Result<PairDataset> {
    let f = std::fs::File::open(path.as_ref())?;
    read_pairs_csv(std::io::BufReader::new(f))
}

/// Writes a matched-pair dataset in the ingestion schema.
pub fn write_pairs_csv<W: Write>(ds: &PairDataset, writer: W) -> Result<()> {
    let d = ds.dim();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(schema_header(d))?;
    for r in &ds.rows {
        let mut rec: Vec<String> = vec![r.pair_id.clone()];
        rec.extend(r.left.0.iter().map(|v| format!("{v}")));
        rec.push(format!("{}", r.y0));
        rec.push(format!("{}", r.y1));
        rec.extend(r.right.0.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Generates a synthetic surrogate matched-pair dataset in the CSV schema.
///
/// Each row pairs a fresh uniform draw with a unit matched within
/// `match_tol` (exactly itself when `match_tol == 0`); the pair's potential
/// outcomes are drawn from the outcome model at the left unit's covariates.
pub fn generate_surrogate_pairs<R: Rng>(
    cfg: &SyntheticConfig,
    match_tol: f64,
    rng: &mut R,
) -> Result<PairDataset> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.population_size);
    for i in 0..cfg.population_size {
        let left = sample_covariates(rng);
        let right = if match_tol == 0.0 {
            left.clone()
        } else {
            crate::matching::find_match(
                &left,
                &crate::matching::MatchSource::Sampler {
                    attempt_cap: crate::matching::DEFAULT_ATTEMPT_CAP,
                },
                match_tol,
                rng,
            )?
        };
        let y0 = sample_outcome(&left, false, cfg, rng)?;
        let y1 = sample_outcome(&left, true, cfg, rng)?;
        rows.push(PairRow {
            pair_id: format!("p{i}"),
            left,
            right,
            y0,
            y1,
        });
    }
    PairDataset::from_rows(rows)
}
