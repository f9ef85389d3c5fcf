//! Exact finite-class variant of the active matched-pair design.
//!
//! The hypothesis class is a finite list of deterministic classifiers
//! (by default the threshold family `h_t(x) = 1[x1 + t < x2]` on a 0.01
//! grid). Candidates stream in one at a time; only candidates inside
//! `DIS(C) ∪ POS(C)` — equivalently, where some active member predicts
//! one — are experimented on. At every power-of-two candidate count the
//! class drops members whose empirical error count exceeds the best by
//! more than `Ū(m, δ)·m`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{effect_size, sample_covariates, Covariates};
use crate::error::{Error, Result};
use crate::matching::{
    assign_and_run, find_match, label_pair, MatchSource, MatchedPair, OutcomeSource,
    DEFAULT_ATTEMPT_CAP,
};
use crate::seqtest::{wealth_step, predictor_update, OnlinePredictor, WealthState};

use super::{DataSource, EnrollmentRegion, RunConfig, RunResult};

/// Constants of the elimination envelope `U(m, δ)`.
///
/// `theta` is a constant proxy for the disagreement coefficient and `d_vc`
/// the class capacity; both enter only through `d_vc·ln(theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UbarConfig {
    pub c_hat: f64,
    pub a: f64,
    pub rho: f64,
    pub beta: f64,
    pub theta: f64,
    pub d_vc: f64,
    pub delta: f64,
}

impl Default for UbarConfig {
    fn default() -> Self {
        UbarConfig {
            c_hat: 2.0,
            a: 1.0,
            rho: 1.0,
            beta: 0.0,
            theta: 4.0,
            d_vc: 1.0,
            delta: 0.05,
        }
    }
}

impl UbarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_hat > 1.0) {
            return Err(Error::Input(format!("ubar.c_hat must be > 1, got {}", self.c_hat)));
        }
        if !(self.a >= 1.0) {
            return Err(Error::Input(format!("ubar.a must be >= 1, got {}", self.a)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Input(format!("ubar.rho must be in [0, 1], got {}", self.rho)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Input(format!("ubar.beta must be in [0, 1], got {}", self.beta)));
        }
        if !(self.theta >= 1.0) {
            return Err(Error::Input(format!("ubar.theta must be >= 1, got {}", self.theta)));
        }
        if !(self.d_vc > 0.0) {
            return Err(Error::Input(format!("ubar.d_vc must be > 0, got {}", self.d_vc)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Input(format!("ubar.delta must be in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }
}

/// Evaluates `Ū(m, δ) = U(m, δ_m)` with `δ_m = δ/(log₂(2m))²`: the smaller of
/// the two envelope branches at the configured constants.
pub fn compute_ubar(m: u64, ubar: &UbarConfig) -> f64 {
    assert!(m >= 1);
    let mf = m as f64;
    let delta_m = ubar.delta / (2.0 * mf).log2().powi(2);
    let num = ubar.d_vc * ubar.theta.ln() + (1.0 / delta_m).ln();
    let branch1 = (ubar.a * num / mf).powf(1.0 / (2.0 - ubar.rho));
    let branch2 = num / mf + (ubar.beta * num / mf).sqrt();
    ubar.c_hat * branch1.min(branch2)
}

/// A deterministic member of a finite hypothesis class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FiniteMember {
    /// `h_t(x) = 1[x1 + t < x2]`.
    Threshold { t: f64 },
}

impl FiniteMember {
    pub fn predict(&self, x: &Covariates) -> bool {
        match self {
            FiniteMember::Threshold { t } => x.0[1] - x.0[0] > *t,
        }
    }
}

/// A finite classifier set with per-member active flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteClass {
    pub members: Vec<FiniteMember>,
    pub active: Vec<bool>,
    /// Index of the member matching the generating truth, when known.
    pub truth_index: Option<usize>,
}

impl FiniteClass {
    /// The default 101-threshold grid t ∈ {0, 0.01, …, 1}, with the truth
    /// flag set on the member closest to the generating intercept `s`.
    pub fn threshold_grid(s: Option<f64>) -> Self {
        let members: Vec<FiniteMember> = (0..=100)
            .map(|i| FiniteMember::Threshold { t: i as f64 / 100.0 })
            .collect();
        let truth_index = s.map(|s| {
            (0..members.len())
                .min_by(|&a, &b| {
                    let FiniteMember::Threshold { t: ta } = members[a];
                    let FiniteMember::Threshold { t: tb } = members[b];
                    (ta - s).abs().partial_cmp(&(tb - s).abs()).unwrap()
                })
                .unwrap()
        });
        let active = vec![true; members.len()];
        FiniteClass {
            members,
            active,
            truth_index,
        }
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn truth_active(&self) -> Option<bool> {
        self.truth_index.map(|i| self.active[i])
    }

    /// Membership in `DIS(C) ∪ POS(C)`: some active member predicts one.
    pub fn in_dis_pos(&self, x: &Covariates) -> bool {
        self.members
            .iter()
            .zip(&self.active)
            .any(|(m, &a)| a && m.predict(x))
    }

    /// Membership in the disagreement region of the active members.
    pub fn in_dis(&self, x: &Covariates) -> bool {
        let mut saw_pos = false;
        let mut saw_neg = false;
        for (m, &a) in self.members.iter().zip(&self.active) {
            if a {
                if m.predict(x) {
                    saw_pos = true;
                } else {
                    saw_neg = true;
                }
                if saw_pos && saw_neg {
                    return true;
                }
            }
        }
        false
    }

    /// Membership in the all-positive region of the active members.
    pub fn in_pos(&self, x: &Covariates) -> bool {
        self.members
            .iter()
            .zip(&self.active)
            .all(|(m, &a)| !a || m.predict(x))
    }
}

/// Elimination state of one finite-class run.
pub struct FiniteClassEngine {
    pub class: FiniteClass,
    error_counts: Vec<u64>,
    queried: usize,
    m: u64,
    next_doubling: u64,
    ubar: UbarConfig,
}

impl FiniteClassEngine {
    pub fn new(class: FiniteClass, ubar: UbarConfig) -> Result<Self> {
        ubar.validate()?;
        if class.members.is_empty() {
            return Err(Error::Input("finite class has no members".into()));
        }
        let n = class.members.len();
        Ok(FiniteClassEngine {
            class,
            error_counts: vec![0; n],
            queried: 0,
            m: 0,
            next_doubling: 1,
            ubar,
        })
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn queried(&self) -> usize {
        self.queried
    }

    /// Counts one generated candidate; returns true when it falls in the
    /// query region `DIS(C) ∪ POS(C)`.
    pub fn observe_candidate(&mut self, x: &Covariates) -> bool {
        self.m += 1;
        self.class.in_dis_pos(x)
    }

    /// Books one labeled query into every active member's error count.
    pub fn record_query(&mut self, x: &Covariates, z: bool) {
        self.queried += 1;
        for i in 0..self.class.members.len() {
            if self.class.active[i] && self.class.members[i].predict(x) != z {
                self.error_counts[i] += 1;
            }
        }
    }

    /// True when the candidate count has reached the next power of two.
    pub fn at_doubling(&self) -> bool {
        self.m == self.next_doubling
    }

    /// Drops members whose error count exceeds the active minimum by more
    /// than `Ū(m, δ)·m`.
    pub fn eliminate(&mut self) -> Result<()> {
        debug_assert!(self.at_doubling());
        let margin = compute_ubar(self.m, &self.ubar) * self.m as f64;
        let min = self
            .error_counts
            .iter()
            .zip(&self.class.active)
            .filter(|(_, &a)| a)
            .map(|(&c, _)| c)
            .min()
            .unwrap_or(0);
        for i in 0..self.class.members.len() {
            if self.class.active[i] && (self.error_counts[i] - min) as f64 > margin {
                self.class.active[i] = false;
            }
        }
        self.next_doubling = self.next_doubling.saturating_mul(2);
        if self.class.active_count() == 0 {
            return Err(Error::AlgorithmFailure(
                "every classifier was eliminated; the envelope is too tight".into(),
            ));
        }
        Ok(())
    }
}

/// State of the surviving class recorded at one doubling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublingSnapshot {
    pub m: u64,
    pub queried: usize,
    pub active_count: usize,
    pub truth_active: Option<bool>,
    /// Fraction of the evaluation pool inside DIS(C).
    pub dis_mass: f64,
    /// Whether every positive pool point lies in DIS ∪ POS.
    pub encloses: Option<bool>,
    /// Pool-measured ratio |Ω̂|/|Ω| (None when the pool has no positives).
    pub ratio: Option<f64>,
}

/// Computes one snapshot of the surviving class over an evaluation pool with
/// known region labels.
pub fn snapshot(
    engine: &FiniteClassEngine,
    pool: &[Covariates],
    positives: &[bool],
) -> DoublingSnapshot {
    let mut dis = 0usize;
    let mut enrolled = 0usize;
    let mut pos = 0usize;
    let mut pos_enrolled = 0usize;
    for (x, &p) in pool.iter().zip(positives) {
        let in_region = engine.class.in_dis_pos(x);
        if engine.class.in_dis(x) {
            dis += 1;
        }
        if in_region {
            enrolled += 1;
        }
        if p {
            pos += 1;
            if in_region {
                pos_enrolled += 1;
            }
        }
    }
    DoublingSnapshot {
        m: engine.m(),
        queried: engine.queried(),
        active_count: engine.class.active_count(),
        truth_active: engine.class.truth_active(),
        dis_mass: dis as f64 / pool.len().max(1) as f64,
        encloses: (pos > 0).then_some(pos_enrolled == pos),
        ratio: (pos > 0).then(|| enrolled as f64 / pos as f64),
    }
}

/// Exact finite-class design: stream candidates, experiment only inside
/// `DIS ∪ POS`, test sequentially, eliminate at doublings. Stops on
/// rejection, on a full budget of queried labels, when the candidate guard
/// `m < 2^B` trips, or when a finite candidate pool empties.
pub fn run_theoretical_robustcal(
    cfg: &RunConfig,
    class: FiniteClass,
    rng: &mut ChaCha8Rng,
) -> Result<RunResult> {
    cfg.validate()?;
    let mut engine = FiniteClassEngine::new(class, cfg.sim.ubar)?;
    let gamma = cfg.gamma;

    // evaluation pool with region labels, and the candidate source
    let (eval_pool, positives): (Vec<Covariates>, Vec<bool>) = match &cfg.source {
        DataSource::Synthetic => {
            let pool = crate::datagen::generate_population(&cfg.sim.synthetic, rng)?;
            let pos = pool
                .iter()
                .map(|x| effect_size(x, &cfg.sim.synthetic).map(|d| d >= gamma))
                .collect::<Result<Vec<bool>>>()?;
            (pool, pos)
        }
        DataSource::Pairs(ds) => {
            let pool: Vec<Covariates> = ds.rows.iter().map(|r| r.left.clone()).collect();
            let pos = ds.rows.iter().map(|r| r.y1 - r.y0 >= gamma).collect();
            (pool, pos)
        }
    };
    let mut alive: Vec<usize> = match &cfg.source {
        DataSource::Synthetic => Vec::new(),
        DataSource::Pairs(ds) => (0..ds.rows.len()).collect(),
    };

    let m_guard: u64 = if cfg.budget < 63 {
        1u64 << cfg.budget
    } else {
        u64::MAX
    };

    let mut state = WealthState::new(cfg.alpha, cfg.sim.lambda_init, cfg.sim.lambda_clamp)?;
    let mut predictor = OnlinePredictor::new(
        cfg.sim.classifier,
        cfg.sim.hyperparams.clone(),
        cfg.sim.seqtest,
    );
    let mut trajectory = Vec::new();
    let mut queried_examples = Vec::new();
    let mut doubling_log = Vec::new();
    let mut decision = 0u8;
    let mut n_pairs = 0usize;

    while engine.queried() < cfg.budget && engine.m() < m_guard {
        // draw the next candidate: a fresh covariate sample, or a row drawn
        // without replacement from a finite pair pool
        let (candidate, row_idx): (Covariates, Option<usize>) = match &cfg.source {
            DataSource::Synthetic => (sample_covariates(rng), None),
            DataSource::Pairs(ds) => {
                if alive.is_empty() {
                    break; // finite pool exhausted: graceful stop
                }
                let pos = rng.random_range(0..alive.len());
                let idx = alive.swap_remove(pos);
                (ds.rows[idx].left.clone(), Some(idx))
            }
        };

        if engine.observe_candidate(&candidate) {
            n_pairs += 1;
            let record = match (&cfg.source, row_idx) {
                (DataSource::Synthetic, _) => {
                    let right = if cfg.sim.match_tol == 0.0 {
                        candidate.clone()
                    } else {
                        find_match(
                            &candidate,
                            &MatchSource::Sampler {
                                attempt_cap: DEFAULT_ATTEMPT_CAP,
                            },
                            cfg.sim.match_tol,
                            rng,
                        )?
                    };
                    let pair = MatchedPair::new(candidate.clone(), right, cfg.sim.match_tol)?;
                    assign_and_run(
                        pair,
                        &OutcomeSource::Synthetic(&cfg.sim.synthetic),
                        n_pairs,
                        rng,
                    )?
                }
                (DataSource::Pairs(ds), Some(idx)) => {
                    let row = &ds.rows[idx];
                    let tol = row.left.distance(&row.right);
                    let pair = MatchedPair::new(row.left.clone(), row.right.clone(), tol)?;
                    assign_and_run(
                        pair,
                        &OutcomeSource::Potential {
                            y0: row.y0,
                            y1: row.y1,
                        },
                        n_pairs,
                        rng,
                    )?
                }
                (DataSource::Pairs(_), None) => unreachable!(),
            };
            // only the sampled unit is labeled and queried
            let (labeled, _) = label_pair(&record, gamma);
            engine.record_query(&labeled.x, labeled.z);
            queried_examples.push(labeled);

            let point = wealth_step(&mut state, &record, &predictor);
            trajectory.push(point);
            predictor_update(&mut predictor, &record)?;
            if point.decision == 1 {
                decision = 1;
                break;
            }
        }

        if engine.at_doubling() {
            engine.eliminate()?;
            doubling_log.push(snapshot(&engine, &eval_pool, &positives));
        }
    }

    let labels_used = engine.queried();
    let wealth_final = state.wealth;
    Ok(RunResult {
        decision,
        labels_used,
        queried: queried_examples,
        region: EnrollmentRegion::FiniteClass(engine.class),
        trajectory,
        wealth_final,
        doubling_log,
    })
}
