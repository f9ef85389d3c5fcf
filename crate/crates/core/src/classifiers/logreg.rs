//! Logistic regression trained by full-batch gradient descent.
//!
//! Inputs are standardized by the training set's per-feature mean and
//! standard deviation; the L2 penalty applies to the weights, not the bias.

use serde::{Deserialize, Serialize};

use super::Hyperparams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    weights: Vec<f64>,
    bias: f64,
    mean: Vec<f64>,
    std: Vec<f64>,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogRegModel {
    pub fn fit(features: &[Vec<f64>], labels: &[bool], hp: &Hyperparams) -> Self {
        Self::fit_inner(features, labels, hp, None)
    }

    /// Fit while recording the regularized training loss after every epoch.
    pub fn fit_traced(
        features: &[Vec<f64>],
        labels: &[bool],
        hp: &Hyperparams,
    ) -> (Self, Vec<f64>) {
        let mut trace = Vec::with_capacity(hp.lr_epochs);
        let model = Self::fit_inner(features, labels, hp, Some(&mut trace));
        (model, trace)
    }

    fn fit_inner(
        features: &[Vec<f64>],
        labels: &[bool],
        hp: &Hyperparams,
        mut trace: Option<&mut Vec<f64>>,
    ) -> Self {
        let n = features.len();
        let d = features[0].len();
        debug_assert!(features.iter().all(|r| r.len() == d));

        let mut mean = vec![0.0; d];
        for row in features {
            for j in 0..d {
                mean[j] += row[j];
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut std = vec![0.0; d];
        for row in features {
            for j in 0..d {
                let c = row[j] - mean[j];
                std[j] += c * c;
            }
        }
        for s in &mut std {
            *s = (*s / n as f64).sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
        }

        // standardized copy, row-major
        let mut z = vec![0.0; n * d];
        for (i, row) in features.iter().enumerate() {
            for j in 0..d {
                z[i * d + j] = (row[j] - mean[j]) / std[j];
            }
        }
        let y: Vec<f64> = labels.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();

        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut grad = vec![0.0; d];
        let inv_n = 1.0 / n as f64;
        for _ in 0..hp.lr_epochs {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            for i in 0..n {
                let row = &z[i * d..(i + 1) * d];
                let mut t = b;
                for j in 0..d {
                    t += w[j] * row[j];
                }
                let r = sigmoid(t) - y[i];
                for j in 0..d {
                    grad[j] += r * row[j];
                }
                gb += r;
            }
            for j in 0..d {
                w[j] -= hp.lr_step * (grad[j] * inv_n + hp.lr_l2 * w[j]);
            }
            b -= hp.lr_step * gb * inv_n;

            if let Some(tr) = trace.as_deref_mut() {
                let mut loss = 0.0;
                for i in 0..n {
                    let row = &z[i * d..(i + 1) * d];
                    let mut t = b;
                    for j in 0..d {
                        t += w[j] * row[j];
                    }
                    // numerically stable -log likelihood
                    let lse = if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
                    loss += lse - y[i] * t;
                }
                loss = loss * inv_n
                    + 0.5 * hp.lr_l2 * w.iter().map(|v| v * v).sum::<f64>();
                tr.push(loss);
            }
        }

        LogRegModel {
            weights: w,
            bias: b,
            mean,
            std,
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.weights.len());
        let mut t = self.bias;
        for j in 0..self.weights.len() {
            t += self.weights[j] * (x[j] - self.mean[j]) / self.std[j];
        }
        sigmoid(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_is_non_increasing_per_epoch() {
        let features = vec![
            vec![0.1, 0.3],
            vec![0.2, 0.8],
            vec![0.7, 0.2],
            vec![0.9, 0.9],
            vec![0.4, 0.6],
            vec![0.6, 0.1],
        ];
        let labels = vec![false, true, false, true, true, false];
        let hp = Hyperparams::default();
        let (_, trace) = LogRegModel::fit_traced(&features, &labels, &hp);
        assert_eq!(trace.len(), hp.lr_epochs);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn constant_feature_does_not_blow_up() {
        let features = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        let labels = vec![false, true];
        let m = LogRegModel::fit(&features, &labels, &Hyperparams::default());
        let p = m.predict_proba(&[1.0, 0.5]);
        assert!(p.is_finite() && (0.0..=1.0).contains(&p));
    }
}
