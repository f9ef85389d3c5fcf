//! Incrementally updated GP posterior over a fixed candidate pool.
//!
//! The active designs need posterior means/variances at every pool point on
//! every iteration. This maintains, alongside the growing Cholesky factor,
//! the solved columns `v_j = L⁻¹ k(X_train, pool_j)` for each pool point, so
//! adding one observation costs O(n·|pool|) instead of a full refit. At fixed
//! hyperparameters the cached posterior is numerically identical to a batch
//! `gp_fit`/`gp_predict` because both run the same forward recurrences.

use crate::classifiers::{gp_fit, CholFactor, GpHyper, GpRegressor, JITTER_LADDER};
use crate::error::{Error, Result};

/// Length-scale candidates scored by marginal likelihood at each refresh.
const LENGTH_SCALE_GRID: [f64; 7] = [0.05, 0.1, 0.15, 0.25, 0.4, 0.65, 1.0];

/// Log marginal likelihood of the data under one hyperparameter setting
/// (up to the constant −n/2·log 2π), or None if factorization fails.
fn log_marginal(xs: &[Vec<f64>], ys: &[f64], hyper: GpHyper) -> Option<f64> {
    let mut chol = CholFactor::default();
    let mut cov = Vec::with_capacity(xs.len());
    for (i, x) in xs.iter().enumerate() {
        cov.clear();
        for prev in &xs[..i] {
            cov.push(hyper.kernel(prev, x));
        }
        chol.push(&cov, hyper.kernel(x, x) + hyper.noise_var + 1e-10)
            .ok()?;
    }
    let u = chol.forward_solve(ys);
    let quad: f64 = u.iter().map(|v| v * v).sum();
    Some(-0.5 * quad - chol.log_det_half())
}

/// Picks the length scale maximizing the marginal likelihood, with signal
/// variance profiled as the target variance and the default noise floor.
pub(crate) fn select_hyper(xs: &[Vec<f64>], ys: &[f64]) -> GpHyper {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n.max(1.0);
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n.max(1.0);
    let base = GpHyper {
        signal_var: var.max(1e-12),
        ..GpHyper::default()
    };
    let mut best: Option<(f64, GpHyper)> = None;
    for &ls in &LENGTH_SCALE_GRID {
        let cand = GpHyper {
            length_scale: ls,
            ..base
        };
        if let Some(mll) = log_marginal(xs, ys, cand) {
            if best.map(|(b, _)| mll > b).unwrap_or(true) {
                best = Some((mll, cand));
            }
        }
    }
    best.map(|(_, h)| h)
        .unwrap_or_else(|| GpHyper::from_data(xs, ys))
}

pub(crate) struct PoolGp {
    hyper: GpHyper,
    jitter_idx: usize,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    chol: CholFactor,
    u: Vec<f64>,
    pool: Vec<Vec<f64>>,
    /// Per pool point: the solved column `L⁻¹ k(X_train, pool_j)`.
    cols: Vec<Vec<f64>>,
    norms2: Vec<f64>,
    prior: Vec<f64>,
    /// Training size at which hyperparameters are re-selected.
    next_refresh: usize,
}

impl PoolGp {
    pub fn new(pool: Vec<Vec<f64>>, hyper: GpHyper) -> Self {
        let prior = pool.iter().map(|x| hyper.kernel(x, x)).collect();
        let n_pool = pool.len();
        PoolGp {
            hyper,
            jitter_idx: 0,
            xs: Vec::new(),
            ys: Vec::new(),
            chol: CholFactor::default(),
            u: Vec::new(),
            pool,
            cols: vec![Vec::new(); n_pool],
            norms2: vec![0.0; n_pool],
            prior,
            next_refresh: 0,
        }
    }

    pub fn jitter(&self) -> f64 {
        JITTER_LADDER[self.jitter_idx]
    }

    /// Adds one observation, re-selecting hyperparameters on a doubling
    /// schedule of the training size.
    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        self.xs.push(x);
        self.ys.push(y);
        if self.xs.len() >= self.next_refresh {
            self.hyper = select_hyper(&self.xs, &self.ys);
            self.next_refresh = (self.xs.len() * 2).max(8);
            return self.rebuild();
        }
        let x = self.xs.last().unwrap().clone();
        let cov: Vec<f64> = self.xs[..self.xs.len() - 1]
            .iter()
            .map(|t| self.hyper.kernel(t, &x))
            .collect();
        let diag = self.hyper.kernel(&x, &x) + self.hyper.noise_var + self.jitter();
        if self.chol.push(&cov, diag).is_err() {
            while self.jitter_idx + 1 < JITTER_LADDER.len() {
                self.jitter_idx += 1;
                if self.rebuild().is_ok() {
                    return Ok(());
                }
            }
            return Err(Error::Numerical(
                "pool GP factorization failed after jitter escalation".into(),
            ));
        }
        let u_new = self
            .chol
            .extend_solution(&self.u, *self.ys.last().unwrap());
        self.u.push(u_new);
        for j in 0..self.pool.len() {
            let k = self.hyper.kernel(&x, &self.pool[j]);
            let v_new = self.chol.extend_solution(&self.cols[j], k);
            self.norms2[j] += v_new * v_new;
            self.cols[j].push(v_new);
        }
        Ok(())
    }

    /// Refactorizes everything at the current hyperparameters, escalating
    /// jitter if needed.
    fn rebuild(&mut self) -> Result<()> {
        loop {
            match self.try_rebuild(JITTER_LADDER[self.jitter_idx]) {
                Ok(()) => return Ok(()),
                Err(e) => {
                    if self.jitter_idx + 1 < JITTER_LADDER.len() {
                        self.jitter_idx += 1;
                    } else {
                        return Err(e);
                    }
                }
            }
        }
    }

    fn try_rebuild(&mut self, jitter: f64) -> Result<()> {
        let mut chol = CholFactor::default();
        let mut cov = Vec::with_capacity(self.xs.len());
        for (i, x) in self.xs.iter().enumerate() {
            cov.clear();
            for prev in &self.xs[..i] {
                cov.push(self.hyper.kernel(prev, x));
            }
            chol.push(&cov, self.hyper.kernel(x, x) + self.hyper.noise_var + jitter)?;
        }
        self.chol = chol;
        self.u = self.chol.forward_solve(&self.ys);
        self.prior = self
            .pool
            .iter()
            .map(|x| self.hyper.kernel(x, x))
            .collect();
        for j in 0..self.pool.len() {
            let k: Vec<f64> = self
                .xs
                .iter()
                .map(|t| self.hyper.kernel(t, &self.pool[j]))
                .collect();
            let col = self.chol.forward_solve(&k);
            self.norms2[j] = col.iter().map(|v| v * v).sum();
            self.cols[j] = col;
        }
        Ok(())
    }

    /// Posterior mean at pool point `j`.
    pub fn mean(&self, j: usize) -> f64 {
        if self.xs.is_empty() {
            return 0.0;
        }
        self.cols[j].iter().zip(&self.u).map(|(a, b)| a * b).sum()
    }

    /// Posterior variance of the latent function at pool point `j`.
    pub fn variance(&self, j: usize) -> f64 {
        (self.prior[j] - self.norms2[j]).max(0.0)
    }

    pub fn training_data(&self) -> (&[Vec<f64>], &[f64]) {
        (&self.xs, &self.ys)
    }

    /// Fits a standalone batch regressor on the accumulated training data.
    pub fn to_batch(&self) -> Result<GpRegressor> {
        gp_fit(&self.xs, &self.ys, self.hyper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::gp_predict;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// The incremental pool caches must agree with a batch fit at the same
    /// hyperparameters, and the argmax-variance acquisition must match a
    /// brute-force scan over the pool.
    #[test]
    fn incremental_matches_batch_and_brute_force_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pool: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let hyper = GpHyper {
            length_scale: 0.3,
            signal_var: 1.0,
            noise_var: 1e-2,
        };
        let mut pg = PoolGp::new(pool.clone(), hyper);
        pg.next_refresh = usize::MAX; // pin hyperparameters for the comparison
        for _ in 0..25 {
            let x = vec![rng.random::<f64>(), rng.random::<f64>()];
            let y = x[0] + 2.0 * x[1] + 0.1 * rng.random::<f64>();
            pg.push(x, y).unwrap();
        }
        let (xs, ys) = pg.training_data();
        let batch = gp_fit(xs, ys, hyper).unwrap();
        assert_eq!(batch.jitter(), pg.jitter());
        for (j, p) in pool.iter().enumerate() {
            let (mean, var) = gp_predict(&batch, p);
            assert!((pg.mean(j) - mean).abs() < 1e-10);
            assert!((pg.variance(j) - var).abs() < 1e-10);
        }
        let fast = (0..pool.len())
            .max_by(|&a, &b| pg.variance(a).partial_cmp(&pg.variance(b)).unwrap())
            .unwrap();
        let brute = (0..pool.len())
            .max_by(|&a, &b| {
                gp_predict(&batch, &pool[a])
                    .1
                    .partial_cmp(&gp_predict(&batch, &pool[b]).1)
                    .unwrap()
            })
            .unwrap();
        assert_eq!(fast, brute);
    }

    #[test]
    fn hyper_refresh_keeps_posterior_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pool: Vec<Vec<f64>> = (0..20)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let mut pg = PoolGp::new(pool.clone(), GpHyper::default());
        for _ in 0..40 {
            let x = vec![rng.random::<f64>(), rng.random::<f64>()];
            pg.push(x.clone(), x[0] - x[1]).unwrap();
        }
        let batch = pg.to_batch().unwrap();
        for (j, p) in pool.iter().enumerate() {
            let (mean, var) = gp_predict(&batch, p);
            assert!((pg.mean(j) - mean).abs() < 1e-8);
            assert!((pg.variance(j) - var).abs() < 1e-8);
        }
    }
}
