//! Matched-pair formation, randomized assignment, and the γ-threshold
//! labeling rule that turns one pair experiment into binary training labels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{sample_covariates, sample_outcome, Covariates, SyntheticConfig};
use crate::error::{Error, Result};

/// Default number of fresh draws attempted before matching gives up.
pub const DEFAULT_ATTEMPT_CAP: usize = 1_000_000;

/// A pair of units matched within `match_tol` in Euclidean distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub left: Covariates,
    pub right: Covariates,
    pub match_tol: f64,
}

impl MatchedPair {
    pub fn new(left: Covariates, right: Covariates, match_tol: f64) -> Result<Self> {
        let d = left.distance(&right);
        if d > match_tol {
            return Err(Error::MatchFailure(format!(
                "pair distance {d} exceeds tolerance {match_tol}"
            )));
        }
        Ok(MatchedPair {
            left,
            right,
            match_tol,
        })
    }
}

/// One experiment on a matched pair: the left unit's assignment `A` and both
/// observed outcomes. The right unit's assignment is `1 − A` by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub pair: MatchedPair,
    pub assignment_left: bool,
    pub y_left: f64,
    pub y_right: f64,
    /// 1-based position of the pair in the experimental stream.
    pub index: usize,
}

impl ExperimentRecord {
    /// Outcome of whichever unit received treatment.
    pub fn treated_outcome(&self) -> f64 {
        if self.assignment_left {
            self.y_left
        } else {
            self.y_right
        }
    }

    /// Outcome of whichever unit received control.
    pub fn control_outcome(&self) -> f64 {
        if self.assignment_left {
            self.y_right
        } else {
            self.y_left
        }
    }
}

/// Covariates together with the binary γ-rule label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub x: Covariates,
    pub z: bool,
}

/// Where matching partners come from.
pub enum MatchSource<'a> {
    /// The unit is paired with itself (exact-match datasets).
    Exact,
    /// Fresh draws from the synthetic covariate distribution until one lands
    /// within tolerance.
    Sampler { attempt_cap: usize },
    /// Nearest in-tolerance neighbor from a finite pool.
    Pool(&'a [Covariates]),
}

/// Finds a partner `x'` with `‖x − x'‖₂ ≤ tol`.
pub fn find_match<R: Rng>(
    x: &Covariates,
    source: &MatchSource<'_>,
    tol: f64,
    rng: &mut R,
) -> Result<Covariates> {
    if tol < 0.0 {
        return Err(Error::Input(format!("match tolerance must be >= 0, got {tol}")));
    }
    match source {
        MatchSource::Exact => Ok(x.clone()),
        MatchSource::Sampler { attempt_cap } => {
            for _ in 0..*attempt_cap {
                let cand = sample_covariates(rng);
                if x.distance(&cand) <= tol {
                    return Ok(cand);
                }
            }
            Err(Error::MatchFailure(format!(
                "no sampled match within tolerance {tol} after {attempt_cap} draws"
            )))
        }
        MatchSource::Pool(pool) => {
            if pool.is_empty() {
                return Err(Error::MatchFailure("match pool is empty".into()));
            }
            let mut best: Option<(f64, usize)> = None;
            for (i, cand) in pool.iter().enumerate() {
                let d = x.distance(cand);
                if d <= tol && best.map(|(bd, _)| d < bd).unwrap_or(true) {
                    best = Some((d, i));
                }
            }
            match best {
                Some((_, i)) => Ok(pool[i].clone()),
                None => Err(Error::MatchFailure(format!(
                    "no pool neighbor within tolerance {tol}"
                ))),
            }
        }
    }
}

/// Where a pair's observed outcomes come from.
pub enum OutcomeSource<'a> {
    /// Fresh draws from the synthetic outcome model, independent noise per unit.
    Synthetic(&'a SyntheticConfig),
    /// Stored potential outcomes of the pair: the treated unit shows `y1`,
    /// the control unit `y0`, whichever side is assigned.
    Potential { y0: f64, y1: f64 },
}

/// Assigns the left unit to treatment or control uniformly at random and
/// realizes both outcomes.
pub fn assign_and_run<R: Rng>(
    pair: MatchedPair,
    source: &OutcomeSource<'_>,
    index: usize,
    rng: &mut R,
) -> Result<ExperimentRecord> {
    let assignment_left = rng.random_bool(0.5);
    let (y_left, y_right) = match source {
        OutcomeSource::Synthetic(cfg) => {
            let yl = sample_outcome(&pair.left, assignment_left, cfg, rng)?;
            let yr = sample_outcome(&pair.right, !assignment_left, cfg, rng)?;
            (yl, yr)
        }
        OutcomeSource::Potential { y0, y1 } => {
            if assignment_left {
                (*y1, *y0)
            } else {
                (*y0, *y1)
            }
        }
    };
    Ok(ExperimentRecord {
        pair,
        assignment_left,
        y_left,
        y_right,
        index,
    })
}

/// Labels both units of a pair: `z = 1` iff treated minus control outcome is
/// at least `gamma` (ties label 1).
pub fn label_pair(record: &ExperimentRecord, gamma: f64) -> (LabeledExample, LabeledExample) {
    let diff = record.treated_outcome() - record.control_outcome();
    let z = diff >= gamma;
    (
        LabeledExample {
            x: record.pair.left.clone(),
            z,
        },
        LabeledExample {
            x: record.pair.right.clone(),
            z,
        },
    )
}
