//! The experiment engines.
//!
//! All practical designs share one loop: acquire a participant from the
//! pool, match it, randomize treatment within the pair, label both units by
//! the γ-rule, feed the record to the sequential betting test, and update the
//! design's enrollment model. They differ only in how the next participant is
//! acquired:
//!
//! - conventional: uniformly at random from the remaining pool;
//! - committee (query-by-committee active design): uniformly from the set of
//!   pool points some committee member labels positive, falling back to the
//!   whole pool when that set is empty;
//! - regression-based: uniformly from the pool region where the fitted
//!   treated/control regression gap reaches γ;
//! - variance-maximizing (BALD-style): the pool point with the largest GP
//!   posterior variance of the pair-difference regression.
//!
//! The finite-class variant with its elimination envelope lives in `finite`.

mod pool_gp;

pub mod finite;
pub use finite::{
    compute_ubar, run_theoretical_robustcal, snapshot, DoublingSnapshot, FiniteClass,
    FiniteClassEngine, FiniteMember, UbarConfig,
};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifiers::{
    bootstrap_committee, committee_proba, gp_predict, Classifier, GpHyper, GpRegressor,
    RegressionTree,
};
use crate::config::SimConfig;
use crate::datagen::{generate_population, Covariates, PairDataset, SyntheticConfig};
use crate::error::{Error, Result};
use crate::matching::{
    assign_and_run, find_match, label_pair, ExperimentRecord, LabeledExample, MatchSource,
    MatchedPair, OutcomeSource, DEFAULT_ATTEMPT_CAP,
};
use crate::seqtest::{predictor_update, wealth_step, OnlinePredictor, WealthPoint, WealthState};

use pool_gp::PoolGp;

/// The available experiment engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignKind {
    RobustCal,
    Conventional,
    RegressionActive,
    TauBald,
    TheoreticalRobustCal,
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DesignKind::RobustCal => "robustcal",
            DesignKind::Conventional => "conventional",
            DesignKind::RegressionActive => "regression",
            DesignKind::TauBald => "tau-bald",
            DesignKind::TheoreticalRobustCal => "theory",
        };
        write!(f, "{s}")
    }
}

impl FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "robustcal" => Ok(DesignKind::RobustCal),
            "conventional" => Ok(DesignKind::Conventional),
            "regression" => Ok(DesignKind::RegressionActive),
            "tau-bald" => Ok(DesignKind::TauBald),
            "theory" => Ok(DesignKind::TheoreticalRobustCal),
            other => Err(Error::Input(format!(
                "unknown design '{other}' (expected robustcal|conventional|regression|tau-bald|theory)"
            ))),
        }
    }
}

/// Where participants and outcomes come from.
#[derive(Clone)]
pub enum DataSource {
    Synthetic,
    Pairs(Arc<PairDataset>),
}

impl fmt::Debug for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSource::Synthetic => write!(f, "Synthetic"),
            DataSource::Pairs(ds) => write!(f, "Pairs({} rows)", ds.rows.len()),
        }
    }
}

/// Full configuration of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub design: DesignKind,
    /// Label budget in labeled-example units (each pair consumes two).
    pub budget: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub seed: u64,
    pub sim: SimConfig,
    pub source: DataSource,
}

impl RunConfig {
    pub fn new(design: DesignKind, budget: usize, alpha: f64, gamma: f64, seed: u64) -> Self {
        RunConfig {
            design,
            budget,
            alpha,
            gamma,
            seed,
            sim: SimConfig::default(),
            source: DataSource::Synthetic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Input(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !self.gamma.is_finite() {
            return Err(Error::Input("gamma must be finite".into()));
        }
        if self.sim.n_init < 2 {
            return Err(Error::Input(format!("n_init must be >= 2, got {}", self.sim.n_init)));
        }
        if self.budget <= self.sim.n_init && self.design != DesignKind::Conventional {
            return Err(Error::Input(format!(
                "budget {} must exceed n_init {}",
                self.budget, self.sim.n_init
            )));
        }
        if self.sim.n_committee < 1 {
            return Err(Error::Input("n_committee must be >= 1".into()));
        }
        if self.sim.refit_every < 1 {
            return Err(Error::Input("refit_every must be >= 1".into()));
        }
        if self.sim.match_tol < 0.0 {
            return Err(Error::Input("match_tol must be >= 0".into()));
        }
        if let DataSource::Synthetic = self.source {
            self.sim.synthetic.validate()?;
        }
        self.sim.ubar.validate()?;
        Ok(())
    }
}

/// A fitted regression function used by the baseline designs.
#[derive(Debug, Clone)]
pub enum Regressor {
    Gp(GpRegressor),
    Tree(RegressionTree),
}

impl Regressor {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Regressor::Gp(gp) => gp_predict(gp, x).0,
            Regressor::Tree(t) => t.predict(x),
        }
    }
}

/// The enrollment region a finished run samples participants from.
#[derive(Debug, Clone)]
pub enum EnrollmentRegion {
    /// Random enrollment: the whole covariate space.
    Everything,
    /// Some committee member predicts one.
    Committee(Vec<Classifier>),
    /// Treated-minus-control regression gap reaches gamma.
    RegressionPair {
        treated: Regressor,
        control: Regressor,
        gamma: f64,
    },
    /// Pair-difference GP posterior mean reaches gamma.
    GpMean { gp: GpRegressor, gamma: f64 },
    /// DIS ∪ POS of the surviving finite class.
    FiniteClass(FiniteClass),
}

impl EnrollmentRegion {
    pub fn contains(&self, x: &Covariates) -> bool {
        match self {
            EnrollmentRegion::Everything => true,
            EnrollmentRegion::Committee(members) => members.iter().any(|m| m.predict(&x.0)),
            EnrollmentRegion::RegressionPair {
                treated,
                control,
                gamma,
            } => treated.value(&x.0) - control.value(&x.0) >= *gamma,
            EnrollmentRegion::GpMean { gp, gamma } => gp_predict(gp, &x.0).0 >= *gamma,
            EnrollmentRegion::FiniteClass(class) => class.in_dis_pos(x),
        }
    }

    /// The region's point prediction of membership in the target region:
    /// the committee's mean-probability vote where one exists, otherwise
    /// region membership itself.
    pub fn vote(&self, x: &Covariates) -> bool {
        match self {
            EnrollmentRegion::Committee(members) => committee_proba(members, &x.0) >= 0.5,
            other => other.contains(x),
        }
    }
}

/// Outcome of one run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub decision: u8,
    /// Labeled examples consumed when the run stopped.
    pub labels_used: usize,
    /// The labeled set Q, initialization included.
    pub queried: Vec<LabeledExample>,
    pub region: EnrollmentRegion,
    pub trajectory: Vec<WealthPoint>,
    pub wealth_final: f64,
    /// Per-doubling elimination snapshots (finite-class design only).
    pub doubling_log: Vec<DoublingSnapshot>,
}

enum EnvSource<'a> {
    Synthetic {
        cfg: &'a SyntheticConfig,
        match_tol: f64,
        pool: Vec<Covariates>,
    },
    Pairs(&'a PairDataset),
}

/// Per-run sampling environment: the unlabeled pool S with stable indices.
struct RunEnv<'a> {
    source: EnvSource<'a>,
    /// Original indices still in S.
    alive: Vec<usize>,
}

impl<'a> RunEnv<'a> {
    fn build(cfg: &'a RunConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        match &cfg.source {
            DataSource::Synthetic => {
                let pool = generate_population(&cfg.sim.synthetic, rng)?;
                let alive = (0..pool.len()).collect();
                Ok(RunEnv {
                    source: EnvSource::Synthetic {
                        cfg: &cfg.sim.synthetic,
                        match_tol: cfg.sim.match_tol,
                        pool,
                    },
                    alive,
                })
            }
            DataSource::Pairs(ds) => {
                if ds.rows.is_empty() {
                    return Err(Error::Input("pair dataset is empty".into()));
                }
                Ok(RunEnv {
                    source: EnvSource::Pairs(ds),
                    alive: (0..ds.rows.len()).collect(),
                })
            }
        }
    }

    fn alive(&self) -> &[usize] {
        &self.alive
    }

    fn covariates(&self, orig: usize) -> &Covariates {
        match &self.source {
            EnvSource::Synthetic { pool, .. } => &pool[orig],
            EnvSource::Pairs(ds) => &ds.rows[orig].left,
        }
    }

    /// Feature rows of the full original pool (for posterior caches).
    fn pool_features(&self) -> Vec<Vec<f64>> {
        let n = match &self.source {
            EnvSource::Synthetic { pool, .. } => pool.len(),
            EnvSource::Pairs(ds) => ds.rows.len(),
        };
        (0..n).map(|i| self.covariates(i).0.clone()).collect()
    }

    /// Removes the pool point at `alive_pos`, forms its matched pair, and
    /// runs the randomized experiment.
    fn run_pair(
        &mut self,
        alive_pos: usize,
        record_index: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(usize, ExperimentRecord)> {
        let orig = self.alive.swap_remove(alive_pos);
        let record = match &self.source {
            EnvSource::Synthetic {
                cfg,
                match_tol,
                pool,
            } => {
                let left = pool[orig].clone();
                let right = if *match_tol == 0.0 {
                    left.clone()
                } else {
                    find_match(
                        &left,
                        &MatchSource::Sampler {
                            attempt_cap: DEFAULT_ATTEMPT_CAP,
                        },
                        *match_tol,
                        rng,
                    )?
                };
                let pair = MatchedPair::new(left, right, *match_tol)?;
                assign_and_run(pair, &OutcomeSource::Synthetic(cfg), record_index, rng)?
            }
            EnvSource::Pairs(ds) => {
                let row = &ds.rows[orig];
                let tol = row.left.distance(&row.right);
                let pair = MatchedPair::new(row.left.clone(), row.right.clone(), tol)?;
                assign_and_run(
                    pair,
                    &OutcomeSource::Potential {
                        y0: row.y0,
                        y1: row.y1,
                    },
                    record_index,
                    rng,
                )?
            }
        };
        Ok((orig, record))
    }
}

/// Treated/control training rows extracted from one record.
fn split_rows(rec: &ExperimentRecord) -> ((Vec<f64>, f64), (Vec<f64>, f64)) {
    let (xt, xc) = if rec.assignment_left {
        (&rec.pair.left, &rec.pair.right)
    } else {
        (&rec.pair.right, &rec.pair.left)
    };
    (
        (xt.0.clone(), rec.treated_outcome()),
        (xc.0.clone(), rec.control_outcome()),
    )
}

enum Policy {
    Conventional,
    Committee {
        members: Vec<Classifier>,
    },
    RegressionGp {
        treated: PoolGp,
        control: PoolGp,
    },
    RegressionTree {
        t_feats: Vec<Vec<f64>>,
        t_targets: Vec<f64>,
        c_feats: Vec<Vec<f64>>,
        c_targets: Vec<f64>,
        t_model: RegressionTree,
        c_model: RegressionTree,
    },
    TauBald {
        gp: PoolGp,
    },
}

impl Policy {
    fn build(
        kind: DesignKind,
        cfg: &RunConfig,
        env: &RunEnv<'_>,
        q: &[LabeledExample],
        init_records: &[ExperimentRecord],
        rng: &mut ChaCha8Rng,
    ) -> Result<Policy> {
        match kind {
            DesignKind::Conventional => Ok(Policy::Conventional),
            DesignKind::RobustCal => Ok(Policy::Committee {
                members: bootstrap_committee(
                    q,
                    cfg.sim.classifier,
                    cfg.sim.n_committee,
                    &cfg.sim.hyperparams,
                    rng,
                ),
            }),
            DesignKind::RegressionActive => match &cfg.source {
                DataSource::Synthetic => {
                    let mut treated = PoolGp::new(env.pool_features(), GpHyper::default());
                    let mut control = PoolGp::new(env.pool_features(), GpHyper::default());
                    for rec in init_records {
                        let ((xt, yt), (xc, yc)) = split_rows(rec);
                        treated.push(xt, yt)?;
                        control.push(xc, yc)?;
                    }
                    Ok(Policy::RegressionGp { treated, control })
                }
                DataSource::Pairs(_) => {
                    let mut t_feats = Vec::new();
                    let mut t_targets = Vec::new();
                    let mut c_feats = Vec::new();
                    let mut c_targets = Vec::new();
                    for rec in init_records {
                        let ((xt, yt), (xc, yc)) = split_rows(rec);
                        t_feats.push(xt);
                        t_targets.push(yt);
                        c_feats.push(xc);
                        c_targets.push(yc);
                    }
                    let hp = &cfg.sim.hyperparams;
                    Ok(Policy::RegressionTree {
                        t_model: RegressionTree::fit(&t_feats, &t_targets, hp),
                        c_model: RegressionTree::fit(&c_feats, &c_targets, hp),
                        t_feats,
                        t_targets,
                        c_feats,
                        c_targets,
                    })
                }
            },
            DesignKind::TauBald => {
                let mut gp = PoolGp::new(env.pool_features(), GpHyper::default());
                for rec in init_records {
                    let x = rec.pair.left.0.clone();
                    gp.push(x, rec.treated_outcome() - rec.control_outcome())?;
                }
                Ok(Policy::TauBald { gp })
            }
            DesignKind::TheoreticalRobustCal => Err(Error::Input(
                "the finite-class design runs through run_theoretical_robustcal".into(),
            )),
        }
    }

    /// Picks a position in the alive pool, or None for the random fallback.
    fn acquire(&self, env: &RunEnv<'_>, gamma: f64, rng: &mut ChaCha8Rng) -> Option<usize> {
        match self {
            Policy::Conventional => None,
            Policy::Committee { members } => {
                let e_set: Vec<usize> = env
                    .alive()
                    .iter()
                    .enumerate()
                    .filter(|(_, &orig)| {
                        let x = env.covariates(orig);
                        members.iter().any(|m| m.predict(&x.0))
                    })
                    .map(|(pos, _)| pos)
                    .collect();
                if e_set.is_empty() {
                    None
                } else {
                    Some(e_set[rng.random_range(0..e_set.len())])
                }
            }
            Policy::RegressionGp { treated, control } => {
                let e_set: Vec<usize> = env
                    .alive()
                    .iter()
                    .enumerate()
                    .filter(|(_, &orig)| treated.mean(orig) - control.mean(orig) >= gamma)
                    .map(|(pos, _)| pos)
                    .collect();
                if e_set.is_empty() {
                    None
                } else {
                    Some(e_set[rng.random_range(0..e_set.len())])
                }
            }
            Policy::RegressionTree {
                t_model, c_model, ..
            } => {
                let e_set: Vec<usize> = env
                    .alive()
                    .iter()
                    .enumerate()
                    .filter(|(_, &orig)| {
                        let x = &env.covariates(orig).0;
                        t_model.predict(x) - c_model.predict(x) >= gamma
                    })
                    .map(|(pos, _)| pos)
                    .collect();
                if e_set.is_empty() {
                    None
                } else {
                    Some(e_set[rng.random_range(0..e_set.len())])
                }
            }
            Policy::TauBald { gp } => {
                let mut best: Option<(f64, usize)> = None;
                for (pos, &orig) in env.alive().iter().enumerate() {
                    let v = gp.variance(orig);
                    if best.map(|(bv, _)| v > bv).unwrap_or(true) {
                        best = Some((v, pos));
                    }
                }
                best.map(|(_, pos)| pos)
            }
        }
    }

    fn update(
        &mut self,
        cfg: &RunConfig,
        q: &[LabeledExample],
        rec: &ExperimentRecord,
        iter: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        match self {
            Policy::Conventional => Ok(()),
            Policy::Committee { members } => {
                if iter % cfg.sim.refit_every == 0 {
                    *members = bootstrap_committee(
                        q,
                        cfg.sim.classifier,
                        cfg.sim.n_committee,
                        &cfg.sim.hyperparams,
                        rng,
                    );
                }
                Ok(())
            }
            Policy::RegressionGp { treated, control } => {
                let ((xt, yt), (xc, yc)) = split_rows(rec);
                treated.push(xt, yt)?;
                control.push(xc, yc)?;
                Ok(())
            }
            Policy::RegressionTree {
                t_feats,
                t_targets,
                c_feats,
                c_targets,
                t_model,
                c_model,
            } => {
                let ((xt, yt), (xc, yc)) = split_rows(rec);
                t_feats.push(xt);
                t_targets.push(yt);
                c_feats.push(xc);
                c_targets.push(yc);
                *t_model = RegressionTree::fit(t_feats, t_targets, &cfg.sim.hyperparams);
                *c_model = RegressionTree::fit(c_feats, c_targets, &cfg.sim.hyperparams);
                Ok(())
            }
            Policy::TauBald { gp } => {
                let x = rec.pair.left.0.clone();
                gp.push(x, rec.treated_outcome() - rec.control_outcome())
            }
        }
    }

    fn into_region(self, gamma: f64) -> Result<EnrollmentRegion> {
        Ok(match self {
            Policy::Conventional => EnrollmentRegion::Everything,
            Policy::Committee { members } => EnrollmentRegion::Committee(members),
            Policy::RegressionGp { treated, control } => EnrollmentRegion::RegressionPair {
                treated: Regressor::Gp(treated.to_batch()?),
                control: Regressor::Gp(control.to_batch()?),
                gamma,
            },
            Policy::RegressionTree {
                t_model, c_model, ..
            } => EnrollmentRegion::RegressionPair {
                treated: Regressor::Tree(t_model),
                control: Regressor::Tree(c_model),
                gamma,
            },
            Policy::TauBald { gp } => EnrollmentRegion::GpMean {
                gp: gp.to_batch()?,
                gamma,
            },
        })
    }
}

fn run_practical(cfg: &RunConfig, kind: DesignKind, rng: &mut ChaCha8Rng) -> Result<RunResult> {
    cfg.validate()?;
    let mut env = RunEnv::build(cfg, rng)?;
    let mut q: Vec<LabeledExample> = Vec::new();
    let mut labels_used = 0usize;

    // initialization: random labeled pairs building Q₀ (skipped by the
    // conventional design, which has no model to warm up)
    let mut init_records: Vec<ExperimentRecord> = Vec::new();
    if kind != DesignKind::Conventional {
        let init_pairs = cfg.sim.n_init.div_ceil(2);
        for i in 0..init_pairs {
            if env.alive().is_empty() {
                return Err(Error::PoolExhausted(
                    "pool emptied during initialization".into(),
                ));
            }
            let pos = rng.random_range(0..env.alive().len());
            let (_, rec) = env.run_pair(pos, i + 1, rng)?;
            let (l, r) = label_pair(&rec, cfg.gamma);
            q.push(l);
            q.push(r);
            init_records.push(rec);
        }
        if cfg.sim.count_init_in_budget {
            labels_used = q.len();
        }
    }

    let mut policy = Policy::build(kind, cfg, &env, &q, &init_records, rng)?;
    let mut state = WealthState::new(cfg.alpha, cfg.sim.lambda_init, cfg.sim.lambda_clamp)?;
    let mut predictor = OnlinePredictor::new(
        cfg.sim.classifier,
        cfg.sim.hyperparams.clone(),
        cfg.sim.seqtest,
    );
    let mut trajectory = Vec::new();
    let mut decision = 0u8;
    let mut n_pairs = 0usize;
    let mut iter = 0usize;

    // a pair is started only when both its labels fit the budget
    while labels_used + 2 <= cfg.budget {
        if env.alive().is_empty() {
            return Err(Error::PoolExhausted(format!(
                "pool emptied after {labels_used} labels with budget {}",
                cfg.budget
            )));
        }
        let pos = match policy.acquire(&env, cfg.gamma, rng) {
            Some(pos) => pos,
            None => rng.random_range(0..env.alive().len()),
        };
        n_pairs += 1;
        let (_, rec) = env.run_pair(pos, n_pairs, rng)?;
        let (l, r) = label_pair(&rec, cfg.gamma);
        q.push(l);
        q.push(r);
        labels_used += 2;

        let point = wealth_step(&mut state, &rec, &predictor);
        trajectory.push(point);
        predictor_update(&mut predictor, &rec)?;
        if point.decision == 1 {
            decision = 1;
            break;
        }
        iter += 1;
        policy.update(cfg, &q, &rec, iter, rng)?;
    }

    assert!(labels_used <= cfg.budget, "budget overrun");
    Ok(RunResult {
        decision,
        labels_used,
        queried: q,
        region: policy.into_region(cfg.gamma)?,
        trajectory,
        wealth_final: state.wealth,
        doubling_log: Vec::new(),
    })
}

/// Conventional design: i.i.d. pairs from the pool, no enrollment model.
pub fn run_conventional(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<RunResult> {
    run_practical(cfg, DesignKind::Conventional, rng)
}

/// The committee-based active design (query-by-committee with an
/// exists-positive enrollment set).
pub fn run_mped_robustcal(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<RunResult> {
    run_practical(cfg, DesignKind::RobustCal, rng)
}

/// Regression-based active design: treated/control regressions, enrollment
/// where their gap reaches gamma.
pub fn run_regression_active(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<RunResult> {
    run_practical(cfg, DesignKind::RegressionActive, rng)
}

/// Variance-maximizing GP design on pair differences.
pub fn run_tau_bald(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<RunResult> {
    run_practical(cfg, DesignKind::TauBald, rng)
}

/// Runs whichever design the config names.
pub fn run_design(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<RunResult> {
    match cfg.design {
        DesignKind::Conventional => run_conventional(cfg, rng),
        DesignKind::RobustCal => run_mped_robustcal(cfg, rng),
        DesignKind::RegressionActive => run_regression_active(cfg, rng),
        DesignKind::TauBald => run_tau_bald(cfg, rng),
        DesignKind::TheoreticalRobustCal => {
            let truth = match &cfg.source {
                DataSource::Synthetic => Some(cfg.sim.synthetic.s),
                DataSource::Pairs(_) => None,
            };
            let class = FiniteClass::threshold_grid(truth);
            run_theoretical_robustcal(cfg, class, rng)
        }
    }
}
