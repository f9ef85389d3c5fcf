//! k-nearest-neighbor classifier with Euclidean distance.
//!
//! Distance ties at the neighborhood boundary break by training index, and
//! vote ties resolve toward class one via the shared `proba >= 0.5` rule.

use serde::{Deserialize, Serialize};

use super::Hyperparams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    features: Vec<Vec<f64>>,
    labels: Vec<bool>,
    k: usize,
}

impl KnnModel {
    pub fn fit(features: &[Vec<f64>], labels: &[bool], hp: &Hyperparams) -> Self {
        KnnModel {
            features: features.to_vec(),
            labels: labels.to_vec(),
            k: hp.knn_k.max(1),
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let k = self.k.min(self.features.len());
        let mut dist: Vec<(f64, usize)> = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let d2: f64 = f
                    .iter()
                    .zip(x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, i)
            })
            .collect();
        dist.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let pos = dist[..k].iter().filter(|&&(_, i)| self.labels[i]).count();
        pos as f64 / k as f64
    }
}
