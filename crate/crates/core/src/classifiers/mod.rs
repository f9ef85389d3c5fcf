//! From-scratch supervised learners and the bootstrapped committee.
//!
//! All classifiers share one contract: `predict_proba` returns a score in
//! [0, 1] and `predict(x) == (predict_proba(x) >= 0.5)`. Fitting a
//! single-class training set yields a constant classifier flagged degenerate
//! rather than an error.

mod gp;
mod knn;
mod logreg;
mod tree;

pub use gp::{gp_fit, gp_predict, GpHyper, GpRegressor};
pub(crate) use gp::{CholFactor, JITTER_LADDER};
pub use knn::KnnModel;
pub use logreg::LogRegModel;
pub use tree::{RegressionTree, TreeModel};

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Covariates;
use crate::matching::LabeledExample;

/// Supported committee / predictor classifier families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[default]
    LogReg,
    Tree,
    Knn,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassifierKind::LogReg => write!(f, "logreg"),
            ClassifierKind::Tree => write!(f, "tree"),
            ClassifierKind::Knn => write!(f, "knn"),
        }
    }
}

/// Training hyperparameters for all classifier kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Gradient-descent step size for logistic regression.
    pub lr_step: f64,
    pub lr_epochs: usize,
    pub lr_l2: f64,
    pub tree_max_depth: usize,
    pub tree_min_leaf: usize,
    pub knn_k: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lr_step: 0.1,
            lr_epochs: 500,
            lr_l2: 1e-4,
            tree_max_depth: 6,
            tree_min_leaf: 3,
            knn_k: 5,
        }
    }
}

/// A trained classifier.
#[derive(Debug, Clone)]
pub enum Classifier {
    /// Constant prediction from a single-class training set.
    Constant { class: bool },
    LogReg(LogRegModel),
    Tree(TreeModel),
    Knn(KnnModel),
}

impl Classifier {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        match self {
            Classifier::Constant { class } => {
                if *class {
                    1.0
                } else {
                    0.0
                }
            }
            Classifier::LogReg(m) => m.predict_proba(x),
            Classifier::Tree(m) => m.predict_proba(x),
            Classifier::Knn(m) => m.predict_proba(x),
        }
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.predict_proba(x) >= 0.5
    }

    /// True when the classifier came from a single-class training set.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Classifier::Constant { .. })
    }
}

/// Fits one classifier of the given kind on feature rows with binary labels.
///
/// The fit is deterministic given the row order and hyperparameters. A
/// single-class training set produces a constant classifier.
pub fn fit(
    kind: ClassifierKind,
    features: &[Vec<f64>],
    labels: &[bool],
    hp: &Hyperparams,
) -> Classifier {
    assert_eq!(features.len(), labels.len());
    assert!(!features.is_empty(), "training set must be nonempty");
    let any_pos = labels.iter().any(|&z| z);
    let any_neg = labels.iter().any(|&z| !z);
    if !(any_pos && any_neg) {
        return Classifier::Constant { class: any_pos };
    }
    match kind {
        ClassifierKind::LogReg => Classifier::LogReg(LogRegModel::fit(features, labels, hp)),
        ClassifierKind::Tree => Classifier::Tree(TreeModel::fit(features, labels, hp)),
        ClassifierKind::Knn => Classifier::Knn(KnnModel::fit(features, labels, hp)),
    }
}

/// Convenience wrapper fitting on labeled covariate examples.
pub fn fit_examples(kind: ClassifierKind, q_set: &[LabeledExample], hp: &Hyperparams) -> Classifier {
    let features: Vec<Vec<f64>> = q_set.iter().map(|e| e.x.0.clone()).collect();
    let labels: Vec<bool> = q_set.iter().map(|e| e.z).collect();
    fit(kind, &features, &labels, hp)
}

/// Draws a with-replacement bootstrap resample of row indices.
fn bootstrap_indices<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Fits `n_committee` classifiers, each on an equal-size bootstrap resample.
pub fn bootstrap_committee<R: Rng>(
    q_set: &[LabeledExample],
    kind: ClassifierKind,
    n_committee: usize,
    hp: &Hyperparams,
    rng: &mut R,
) -> Vec<Classifier> {
    assert!(n_committee >= 1);
    let features: Vec<Vec<f64>> = q_set.iter().map(|e| e.x.0.clone()).collect();
    let labels: Vec<bool> = q_set.iter().map(|e| e.z).collect();
    let mut members = Vec::with_capacity(n_committee);
    let mut f_buf: Vec<Vec<f64>> = Vec::with_capacity(features.len());
    let mut l_buf: Vec<bool> = Vec::with_capacity(labels.len());
    for _ in 0..n_committee {
        let idx = bootstrap_indices(q_set.len(), rng);
        f_buf.clear();
        l_buf.clear();
        for &i in &idx {
            f_buf.push(features[i].clone());
            l_buf.push(labels[i]);
        }
        members.push(fit(kind, &f_buf, &l_buf, hp));
    }
    members
}

/// Pool indices where at least one committee member predicts class one.
///
/// Equals `POS(C) ∪ (DIS(C) ∩ {some member says 1})` restricted to the pool.
pub fn enrollment_set(members: &[Classifier], pool: &[Covariates]) -> Vec<usize> {
    assert!(!members.is_empty(), "committee must be nonempty");
    pool.iter()
        .enumerate()
        .filter(|(_, x)| members.iter().any(|m| m.predict(&x.0)))
        .map(|(i, _)| i)
        .collect()
}

/// Mean of member probabilities; the committee's soft vote.
pub fn committee_proba(members: &[Classifier], x: &[f64]) -> f64 {
    members.iter().map(|m| m.predict_proba(x)).sum::<f64>() / members.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn examples(rows: &[(f64, f64, bool)]) -> Vec<LabeledExample> {
        rows.iter()
            .map(|&(a, b, z)| LabeledExample {
                x: Covariates(vec![a, b]),
                z,
            })
            .collect()
    }

    #[test]
    fn logreg_separable_perfect_training_accuracy() {
        let q = examples(&[
            (0.0, 0.0, false),
            (0.1, 0.1, false),
            (0.9, 0.9, true),
            (1.0, 1.0, true),
        ]);
        let c = fit_examples(ClassifierKind::LogReg, &q, &Hyperparams::default());
        assert!(q.iter().all(|e| c.predict(&e.x.0) == e.z));
        assert!(!c.is_degenerate());
    }

    #[test]
    fn single_class_set_gives_constant() {
        let q = examples(&[(0.1, 0.2, false), (0.5, 0.5, false)]);
        for kind in [ClassifierKind::LogReg, ClassifierKind::Tree, ClassifierKind::Knn] {
            let c = fit_examples(kind, &q, &Hyperparams::default());
            assert!(c.is_degenerate());
            assert!(!c.predict(&[0.7, 0.7]));
            assert_eq!(c.predict_proba(&[0.7, 0.7]), 0.0);
        }
    }

    #[test]
    fn knn_k1_memorizes_distinct_inputs() {
        let q = examples(&[
            (0.0, 0.0, false),
            (0.2, 0.9, true),
            (0.8, 0.1, false),
            (0.9, 0.9, true),
        ]);
        let hp = Hyperparams {
            knn_k: 1,
            ..Hyperparams::default()
        };
        let c = fit_examples(ClassifierKind::Knn, &q, &hp);
        assert!(q.iter().all(|e| c.predict(&e.x.0) == e.z));
    }

    #[test]
    fn committee_has_requested_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = examples(&[
            (0.0, 0.0, false),
            (0.1, 0.9, true),
            (0.9, 0.1, false),
            (1.0, 1.0, true),
        ]);
        let members =
            bootstrap_committee(&q, ClassifierKind::Tree, 10, &Hyperparams::default(), &mut rng);
        assert_eq!(members.len(), 10);
    }

    #[test]
    fn committee_of_one_equals_fit_on_the_resample() {
        let q = examples(&[
            (0.0, 0.0, false),
            (0.1, 0.9, true),
            (0.9, 0.1, false),
            (1.0, 1.0, true),
        ]);
        let hp = Hyperparams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let members = bootstrap_committee(&q, ClassifierKind::LogReg, 1, &hp, &mut rng);

        // replay the same resample draw by hand
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let idx = bootstrap_indices(q.len(), &mut rng);
        let resample: Vec<LabeledExample> = idx.iter().map(|&i| q[i].clone()).collect();
        let direct = fit_examples(ClassifierKind::LogReg, &resample, &hp);
        for pt in [[0.2, 0.3], [0.5, 0.9], [0.8, 0.2]] {
            assert_eq!(members[0].predict_proba(&pt), direct.predict_proba(&pt));
        }
    }

    #[test]
    fn different_seeds_give_different_resamples() {
        let n = 64usize;
        let mut differing = 0usize;
        for seed in 0..100u64 {
            let a = bootstrap_indices(n, &mut ChaCha8Rng::seed_from_u64(seed));
            let b = bootstrap_indices(n, &mut ChaCha8Rng::seed_from_u64(seed + 1000));
            let mut sa = a.clone();
            let mut sb = b.clone();
            sa.sort_unstable();
            sb.sort_unstable();
            if sa != sb {
                differing += 1;
            }
        }
        assert!(differing >= 99, "only {differing}/100 seed pairs differed");
    }

    #[test]
    fn enrollment_set_examples() {
        let pool: Vec<Covariates> = vec![
            Covariates(vec![0.1, 0.1]),
            Covariates(vec![0.2, 0.9]),
            Covariates(vec![0.9, 0.2]),
        ];
        let all_zero = vec![
            Classifier::Constant { class: false },
            Classifier::Constant { class: false },
        ];
        assert!(enrollment_set(&all_zero, &pool).is_empty());

        // one member positive on exactly one pooled point
        let hp = Hyperparams {
            knn_k: 1,
            ..Hyperparams::default()
        };
        let q = examples(&[(0.2, 0.9, true), (0.1, 0.1, false), (0.9, 0.2, false)]);
        let member = fit_examples(ClassifierKind::Knn, &q, &hp);
        let members = vec![member, Classifier::Constant { class: false }];
        assert_eq!(enrollment_set(&members, &pool), vec![1]);
    }

    #[test]
    fn enrollment_set_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let q: Vec<LabeledExample> = (0..30)
                .map(|_| LabeledExample {
                    x: Covariates(vec![rng.random(), rng.random()]),
                    z: rng.random_bool(0.4),
                })
                .collect();
            let members = bootstrap_committee(
                &q,
                ClassifierKind::Tree,
                5,
                &Hyperparams::default(),
                &mut rng,
            );
            let pool: Vec<Covariates> = (0..50)
                .map(|_| Covariates(vec![rng.random(), rng.random()]))
                .collect();
            let fast = enrollment_set(&members, &pool);
            let mut brute = Vec::new();
            for (i, x) in pool.iter().enumerate() {
                let mut hit = false;
                for m in &members {
                    if m.predict(&x.0) {
                        hit = true;
                    }
                }
                if hit {
                    brute.push(i);
                }
            }
            assert_eq!(fast, brute);
        }
    }
}
