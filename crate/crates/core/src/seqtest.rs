//! Sequential predictive two-sample test by betting.
//!
//! A bettor's wealth starts at 1 and multiplies by `1 + λ_n·L_n` on each new
//! matched-pair record, where the payoff `L_n = (2A−1)(2q̄(S)−1)` compares an
//! online classifier's probability that the observed unit was treated against
//! the actual assignment. Under H0 the assignment is independent of the
//! observation and the wealth is a nonnegative martingale, so crossing `1/α`
//! ever has probability at most α (Ville); under H1 a learnable assignment
//! signal makes the wealth grow and the test reject.
//!
//! The betting fraction λ follows the online-Newton-step rule for the
//! coin-betting game: `z = L/(1+λL)`, `A ← A + z²`,
//! `λ ← clamp(λ + (2/(2−ln 3))·z/A)`. With probabilities strictly inside
//! (0, 1) every wealth factor stays positive for any clamp up to 1; a clamp
//! of 1/2 additionally bounds factors below by 1/2.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::classifiers::{fit, Classifier, ClassifierKind, Hyperparams};
use crate::error::{Error, Result};
use crate::matching::ExperimentRecord;

/// Smallest predictor probability fed to the payoff.
const PROB_FLOOR: f64 = 1e-6;

/// Step scale of the coin-betting online Newton step.
pub fn ons_step_scale() -> f64 {
    2.0 / (2.0 - 3f64.ln())
}

/// State of the betting statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthState {
    pub wealth: f64,
    pub lambda: f64,
    /// ONS accumulator of squared intermediates, initialized at 1.
    pub ons_grad_accum: f64,
    /// Number of wealth updates taken so far.
    pub step_count: usize,
    pub alpha: f64,
    /// λ is clamped to [−lambda_clamp, lambda_clamp].
    pub lambda_clamp: f64,
    /// Frozen after the first rejection.
    pub rejected: bool,
}

impl WealthState {
    pub fn new(alpha: f64, lambda_init: f64, lambda_clamp: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Input(format!("alpha must be in (0, 1), got {alpha}")));
        }
        if !(lambda_clamp > 0.0 && lambda_clamp <= 1.0) {
            return Err(Error::Input(format!(
                "lambda_clamp must be in (0, 1], got {lambda_clamp}"
            )));
        }
        Ok(WealthState {
            wealth: 1.0,
            lambda: lambda_init.clamp(-lambda_clamp, lambda_clamp),
            ons_grad_accum: 1.0,
            step_count: 0,
            alpha,
            lambda_clamp,
            rejected: false,
        })
    }

    /// Online Newton step for the betting fraction; returns the new λ.
    pub fn ons_update(&mut self, l: f64) -> f64 {
        debug_assert!((-1.0..=1.0).contains(&l));
        let z = l / (1.0 + self.lambda * l);
        self.ons_grad_accum += z * z;
        self.lambda = (self.lambda + ons_step_scale() * z / self.ons_grad_accum)
            .clamp(-self.lambda_clamp, self.lambda_clamp);
        self.lambda
    }
}

/// Payoff of one bet: `(2a − 1)(2·prob − 1) ∈ [−1, 1]`.
pub fn payoff(prob: f64, a: bool) -> f64 {
    debug_assert!((0.0..=1.0).contains(&prob));
    let sign = if a { 1.0 } else { -1.0 };
    sign * (2.0 * prob - 1.0)
}

/// Refit cadence of the online predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqTestSettings {
    /// Refit after every record up to this many records...
    pub dense_refit_until: usize,
    /// ...then refit every this many records.
    pub sparse_refit_every: usize,
}

impl Default for SeqTestSettings {
    fn default() -> Self {
        SeqTestSettings {
            dense_refit_until: 200,
            sparse_refit_every: 10,
        }
    }
}

/// The online classifier q̄ predicting the assignment from `(covariates, outcome)`.
///
/// Both units of every past record enter the training buffer, so after n−1
/// records the buffer holds 2(n−1) rows. Before any refit the predictor
/// returns probability 0.5.
#[derive(Debug, Clone)]
pub struct OnlinePredictor {
    kind: ClassifierKind,
    hp: Hyperparams,
    settings: SeqTestSettings,
    features: Vec<Vec<f64>>,
    labels: Vec<bool>,
    n_records: usize,
    model: Option<Classifier>,
}

impl OnlinePredictor {
    pub fn new(kind: ClassifierKind, hp: Hyperparams, settings: SeqTestSettings) -> Self {
        OnlinePredictor {
            kind,
            hp,
            settings,
            features: Vec::new(),
            labels: Vec::new(),
            n_records: 0,
            model: None,
        }
    }

    pub fn n_records(&self) -> usize {
        self.n_records
    }

    pub fn buffer_len(&self) -> usize {
        self.features.len()
    }

    /// One unit's observation: its covariates and its outcome contrast with
    /// its partner. Both units of a pair contribute a row, so the buffer has
    /// 2(n−1) rows after n−1 records.
    fn observation(record: &ExperimentRecord, left: bool) -> Vec<f64> {
        let (x, d) = if left {
            (&record.pair.left, record.y_left - record.y_right)
        } else {
            (&record.pair.right, record.y_right - record.y_left)
        };
        let mut row = x.0.clone();
        row.push(d);
        row
    }

    /// Probability that the record's left unit was assigned to treatment.
    ///
    /// A fitted predictor answers with its hard class decision nudged just
    /// inside (0, 1), so payoffs take near-unit stakes as in the {−1, 1}
    /// payoff formulation while every wealth factor stays strictly positive
    /// at any betting-fraction clamp. The untrained predictor abstains at 0.5.
    pub fn predict_proba(&self, record: &ExperimentRecord) -> f64 {
        match &self.model {
            None => 0.5,
            Some(m) => {
                if m.predict(&Self::observation(record, true)) {
                    1.0 - PROB_FLOOR
                } else {
                    PROB_FLOOR
                }
            }
        }
    }

    /// Training accuracy over the buffered rows (diagnostic).
    pub fn buffer_accuracy(&self) -> f64 {
        match &self.model {
            None => 0.5,
            Some(m) => {
                let correct = self
                    .features
                    .iter()
                    .zip(&self.labels)
                    .filter(|(f, &z)| m.predict(f) == z)
                    .count();
                correct as f64 / self.features.len().max(1) as f64
            }
        }
    }
}

/// Appends both units of the record to the predictor's buffer and refits per
/// the configured cadence. Records must arrive in index order.
pub fn predictor_update(predictor: &mut OnlinePredictor, record: &ExperimentRecord) -> Result<()> {
    let expected = predictor.n_records + 1;
    if record.index != expected {
        return Err(Error::Sequencing {
            expected,
            got: record.index,
        });
    }
    predictor
        .features
        .push(OnlinePredictor::observation(record, true));
    predictor.labels.push(record.assignment_left);
    predictor
        .features
        .push(OnlinePredictor::observation(record, false));
    predictor.labels.push(!record.assignment_left);
    predictor.n_records += 1;

    let n = predictor.n_records;
    let refit =
        n <= predictor.settings.dense_refit_until || n % predictor.settings.sparse_refit_every == 0;
    if refit {
        predictor.model = Some(fit(
            predictor.kind,
            &predictor.features,
            &predictor.labels,
            &predictor.hp,
        ));
    }
    Ok(())
}

/// One row of a wealth trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WealthPoint {
    pub n: usize,
    pub wealth: f64,
    /// Betting fraction used for this step's bet.
    pub lambda: f64,
    pub payoff: f64,
    pub decision: u8,
}

/// Processes one record: bets with the current λ on the left unit, updates
/// the wealth, then ONS-updates λ. Returns the trajectory point; its
/// `decision` is 1 iff the wealth has reached `1/alpha`. After a rejection
/// the state is frozen and further calls return the frozen point.
pub fn wealth_step(
    state: &mut WealthState,
    record: &ExperimentRecord,
    predictor: &OnlinePredictor,
) -> WealthPoint {
    if state.rejected {
        return WealthPoint {
            n: state.step_count,
            wealth: state.wealth,
            lambda: state.lambda,
            payoff: 0.0,
            decision: 1,
        };
    }
    let prob = predictor.predict_proba(record);
    let l = payoff(prob, record.assignment_left);
    let lambda_used = state.lambda;
    let factor = 1.0 + lambda_used * l;
    assert!(factor > 0.0, "wealth factor {factor} not positive");
    state.wealth *= factor;
    assert!(state.wealth > 0.0, "wealth must stay positive");
    state.step_count += 1;
    state.ons_update(l);
    let decision = if state.wealth >= 1.0 / state.alpha {
        state.rejected = true;
        1
    } else {
        0
    };
    WealthPoint {
        n: state.step_count,
        wealth: state.wealth,
        lambda: lambda_used,
        payoff: l,
        decision,
    }
}

/// Writes a wealth trajectory as CSV (`n,wealth,lambda,payoff,decision`).
pub fn write_trajectory_csv<W: Write>(trajectory: &[WealthPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "wealth", "lambda", "payoff", "decision"])?;
    for p in trajectory {
        w.write_record(&[
            p.n.to_string(),
            format!("{}", p.wealth),
            format!("{}", p.lambda),
            format!("{}", p.payoff),
            p.decision.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{Covariates, SyntheticConfig};
    use crate::matching::{assign_and_run, MatchedPair, OutcomeSource};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record_with(prob_features: Vec<f64>, a: bool, index: usize) -> ExperimentRecord {
        let x = Covariates(prob_features);
        ExperimentRecord {
            pair: MatchedPair {
                left: x.clone(),
                right: x,
                match_tol: 0.0,
            },
            assignment_left: a,
            y_left: 0.0,
            y_right: 0.0,
            index,
        }
    }

    #[test]
    fn payoff_examples() {
        assert_eq!(payoff(1.0, true), 1.0);
        assert_eq!(payoff(0.5, true), 0.0);
        assert_eq!(payoff(0.5, false), 0.0);
        assert!((payoff(0.2, false) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn ons_update_examples() {
        let mut st = WealthState::new(0.05, 0.3, 0.5).unwrap();
        let before = st.clone();
        st.ons_update(0.0);
        assert_eq!(st.lambda, before.lambda);
        assert_eq!(st.ons_grad_accum, before.ons_grad_accum);

        let mut st = WealthState::new(0.05, 0.0, 0.5).unwrap();
        st.ons_update(1.0);
        assert_eq!(st.ons_grad_accum, 2.0);
        // unclamped value 2/(2−ln 3)/2 ≈ 1.109 clamps to 1/2
        assert!((ons_step_scale() / 2.0 - 1.1094).abs() < 1e-3);
        assert_eq!(st.lambda, 0.5);
    }

    #[test]
    fn repeated_wins_saturate_lambda() {
        let mut st = WealthState::new(0.05, 0.0, 0.5).unwrap();
        for _ in 0..50 {
            st.ons_update(1.0);
            assert!(st.lambda <= 0.5);
        }
        assert_eq!(st.lambda, 0.5);
    }

    #[test]
    fn zero_lambda_never_rejects() {
        let mut st = WealthState::new(0.05, 0.0, 0.5).unwrap();
        st.lambda_clamp = 1e-300; // pin lambda at ~0
        st.lambda = 0.0;
        let pred = OnlinePredictor::new(
            ClassifierKind::LogReg,
            Hyperparams::default(),
            SeqTestSettings::default(),
        );
        for i in 1..=100 {
            let p = wealth_step(&mut st, &record_with(vec![0.1, 0.2], i % 2 == 0, i), &pred);
            assert_eq!(p.decision, 0);
        }
        assert!((st.wealth - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejection_at_threshold() {
        let mut st = WealthState::new(0.05, 0.5, 0.5).unwrap();
        st.wealth = 13.4;
        // untrained predictor would give payoff 0; craft a perfect one
        let mut pred = OnlinePredictor::new(
            ClassifierKind::Knn,
            Hyperparams {
                knn_k: 1,
                ..Hyperparams::default()
            },
            SeqTestSettings::default(),
        );
        let mut warm = record_with(vec![0.9, 0.9], true, 1);
        warm.y_left = 5.0;
        warm.y_right = -5.0;
        predictor_update(&mut pred, &warm).unwrap();
        let mut rec = record_with(vec![0.9, 0.9], true, 2);
        rec.y_left = 5.0;
        rec.y_right = -5.0;
        assert!(pred.predict_proba(&rec) > 0.999); // payoff L ≈ 1
        let p = wealth_step(&mut st, &rec, &pred);
        assert!((p.wealth - 20.1).abs() < 1e-4);
        assert_eq!(p.decision, 1);
        assert!(st.rejected);
        // frozen afterwards
        let p2 = wealth_step(&mut st, &rec, &pred);
        assert_eq!(p2.decision, 1);
        assert_eq!(p2.wealth, p.wealth);
    }

    #[test]
    fn buffer_grows_two_rows_per_record() {
        let mut pred = OnlinePredictor::new(
            ClassifierKind::LogReg,
            Hyperparams::default(),
            SeqTestSettings::default(),
        );
        let blank = record_with(vec![0.0, 0.0], true, 0);
        assert_eq!(pred.predict_proba(&blank), 0.5);
        for i in 1..=7 {
            predictor_update(&mut pred, &record_with(vec![0.1, 0.2], i % 2 == 0, i)).unwrap();
            assert_eq!(pred.buffer_len(), 2 * i);
        }
    }

    #[test]
    fn out_of_order_record_is_rejected() {
        let mut pred = OnlinePredictor::new(
            ClassifierKind::LogReg,
            Hyperparams::default(),
            SeqTestSettings::default(),
        );
        predictor_update(&mut pred, &record_with(vec![0.1, 0.2], true, 1)).unwrap();
        let err = predictor_update(&mut pred, &record_with(vec![0.1, 0.2], true, 3));
        assert!(matches!(err, Err(Error::Sequencing { expected: 2, got: 3 })));
    }

    #[test]
    fn predictor_learns_a_separable_stream() {
        // noise-free H1 records inside the effect region: the outcome reveals
        // the assignment, so training accuracy approaches 1
        let cfg = SyntheticConfig {
            sigma2: 1e-30,
            ..SyntheticConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut pred = OnlinePredictor::new(
            ClassifierKind::LogReg,
            Hyperparams::default(),
            SeqTestSettings::default(),
        );
        for i in 1..=40 {
            // strictly inside the effect region: x2 - x1 >= 0.55
            let x = Covariates(vec![rng.random::<f64>() * 0.3, 0.85 + rng.random::<f64>() * 0.15]);
            let pair = MatchedPair {
                left: x.clone(),
                right: x,
                match_tol: 0.0,
            };
            let rec = assign_and_run(pair, &OutcomeSource::Synthetic(&cfg), i, &mut rng).unwrap();
            predictor_update(&mut pred, &rec).unwrap();
        }
        assert!(
            pred.buffer_accuracy() >= 0.95,
            "accuracy {}",
            pred.buffer_accuracy()
        );
    }

    #[test]
    fn trajectories_are_bit_reproducible() {
        let run = |seed: u64| {
            let cfg = SyntheticConfig::default();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut st = WealthState::new(0.05, 0.0, 0.5).unwrap();
            let mut pred = OnlinePredictor::new(
                ClassifierKind::LogReg,
                Hyperparams::default(),
                SeqTestSettings::default(),
            );
            let mut traj = Vec::new();
            for i in 1..=60 {
                let x = Covariates(vec![rng.random(), rng.random()]);
                let pair = MatchedPair {
                    left: x.clone(),
                    right: x,
                    match_tol: 0.0,
                };
                let rec =
                    assign_and_run(pair, &OutcomeSource::Synthetic(&cfg), i, &mut rng).unwrap();
                traj.push(wealth_step(&mut st, &rec, &pred));
                predictor_update(&mut pred, &rec).unwrap();
            }
            traj
        };
        assert_eq!(run(77), run(77));
    }

    #[test]
    fn trajectory_csv_has_expected_shape() {
        let traj = vec![
            WealthPoint {
                n: 1,
                wealth: 1.0,
                lambda: 0.0,
                payoff: 0.0,
                decision: 0,
            },
            WealthPoint {
                n: 2,
                wealth: 1.2,
                lambda: 0.25,
                payoff: 0.8,
                decision: 0,
            },
        ];
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "n,wealth,lambda,payoff,decision");
        assert_eq!(lines.count(), 2);
    }
}
