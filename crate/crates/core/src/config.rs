//! Flat key/value run configuration.
//!
//! The config file is plain text, one `key = value` per line, `#` comments.
//! Recognized keys: hypothesis, s, sigma2, population_size, f_variant,
//! classifier, n_committee, n_init, match_tol, lambda_init, lambda_clamp,
//! refit_every, count_init_in_budget, and the `ubar.*` envelope constants.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifiers::{ClassifierKind, Hyperparams};
use crate::datagen::{FVariant, Hypothesis, NoiseModel, SyntheticConfig};
use crate::designs::UbarConfig;
use crate::error::{Error, Result};
use crate::seqtest::SeqTestSettings;

/// Simulation knobs shared by every design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub synthetic: SyntheticConfig,
    pub classifier: ClassifierKind,
    pub n_committee: usize,
    /// Size of the randomly labeled warm-up set Q₀.
    pub n_init: usize,
    pub match_tol: f64,
    pub lambda_init: f64,
    pub lambda_clamp: f64,
    /// Committee refit cadence in iterations (1 = every iteration).
    pub refit_every: usize,
    /// Whether the warm-up labels count against the budget.
    pub count_init_in_budget: bool,
    pub ubar: UbarConfig,
    pub hyperparams: Hyperparams,
    pub seqtest: SeqTestSettings,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            synthetic: SyntheticConfig::default(),
            classifier: ClassifierKind::LogReg,
            n_committee: 10,
            n_init: 50,
            match_tol: 0.01,
            lambda_init: 0.0,
            lambda_clamp: 0.5,
            refit_every: 1,
            count_init_in_budget: true,
            ubar: UbarConfig::default(),
            hyperparams: Hyperparams::default(),
            seqtest: SeqTestSettings::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Input(format!("bad value '{value}' for config key '{key}'")))
}

impl SimConfig {
    /// Parses the flat key/value text format.
    pub fn parse(text: &str) -> Result<SimConfig> {
        let mut cfg = SimConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Input(format!(
                    "config line {} is not 'key = value': '{line}'",
                    lineno + 1
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "hypothesis" => {
                    cfg.synthetic.hypothesis = match value.to_ascii_lowercase().as_str() {
                        "h0" => Hypothesis::H0,
                        "h1" => Hypothesis::H1,
                        _ => {
                            return Err(Error::Input(format!(
                                "bad value '{value}' for config key 'hypothesis' (h0|h1)"
                            )))
                        }
                    }
                }
                "s" => cfg.synthetic.s = parse_num(key, value)?,
                "sigma2" => cfg.synthetic.sigma2 = parse_num(key, value)?,
                "population_size" => cfg.synthetic.population_size = parse_num(key, value)?,
                "noise_model" => {
                    cfg.synthetic.noise_model = match value {
                        "pair" => NoiseModel::Pair,
                        "unit" => NoiseModel::Unit,
                        _ => {
                            return Err(Error::Input(format!(
                                "bad value '{value}' for config key 'noise_model' (pair|unit)"
                            )))
                        }
                    }
                }
                "f_variant" => {
                    cfg.synthetic.f_variant = match value {
                        "literal" => FVariant::Literal,
                        "x2_reading" => FVariant::X2Reading,
                        _ => {
                            return Err(Error::Input(format!(
                                "bad value '{value}' for config key 'f_variant' (literal|x2_reading)"
                            )))
                        }
                    }
                }
                "classifier" => {
                    cfg.classifier = match value {
                        "logreg" => ClassifierKind::LogReg,
                        "tree" => ClassifierKind::Tree,
                        "knn" => ClassifierKind::Knn,
                        _ => {
                            return Err(Error::Input(format!(
                                "bad value '{value}' for config key 'classifier' (logreg|tree|knn)"
                            )))
                        }
                    }
                }
                "n_committee" => cfg.n_committee = parse_num(key, value)?,
                "n_init" => cfg.n_init = parse_num(key, value)?,
                "match_tol" => cfg.match_tol = parse_num(key, value)?,
                "lambda_init" => cfg.lambda_init = parse_num(key, value)?,
                "lambda_clamp" => cfg.lambda_clamp = parse_num(key, value)?,
                "refit_every" => cfg.refit_every = parse_num(key, value)?,
                "count_init_in_budget" => cfg.count_init_in_budget = parse_num(key, value)?,
                "ubar.c_hat" => cfg.ubar.c_hat = parse_num(key, value)?,
                "ubar.a" => cfg.ubar.a = parse_num(key, value)?,
                "ubar.rho" => cfg.ubar.rho = parse_num(key, value)?,
                "ubar.beta" => cfg.ubar.beta = parse_num(key, value)?,
                "ubar.theta" => cfg.ubar.theta = parse_num(key, value)?,
                "ubar.d_vc" => cfg.ubar.d_vc = parse_num(key, value)?,
                "ubar.delta" => cfg.ubar.delta = parse_num(key, value)?,
                _ => {
                    return Err(Error::Input(format!(
                        "unknown config key '{key}' at line {}",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<SimConfig> {
        let text = std::fs::read_to_string(path.as_ref())?;
        SimConfig::parse(&text)
    }

    /// Canonical text rendering; `parse(render(c)) == c`.
    pub fn render(&self) -> String {
        format!(
            "hypothesis = {}\n\
             s = {}\n\
             sigma2 = {}\n\
             population_size = {}\n\
             noise_model = {}\n\
             f_variant = {}\n\
             classifier = {}\n\
             n_committee = {}\n\
             n_init = {}\n\
             match_tol = {}\n\
             lambda_init = {}\n\
             lambda_clamp = {}\n\
             refit_every = {}\n\
             count_init_in_budget = {}\n\
             ubar.c_hat = {}\n\
             ubar.a = {}\n\
             ubar.rho = {}\n\
             ubar.beta = {}\n\
             ubar.theta = {}\n\
             ubar.d_vc = {}\n\
             ubar.delta = {}\n",
            self.synthetic.hypothesis,
            self.synthetic.s,
            self.synthetic.sigma2,
            self.synthetic.population_size,
            self.synthetic.noise_model,
            self.synthetic.f_variant,
            self.classifier,
            self.n_committee,
            self.n_init,
            self.match_tol,
            self.lambda_init,
            self.lambda_clamp,
            self.refit_every,
            self.count_init_in_budget,
            self.ubar.c_hat,
            self.ubar.a,
            self.ubar.rho,
            self.ubar.beta,
            self.ubar.theta,
            self.ubar.d_vc,
            self.ubar.delta,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = SimConfig::default();
        let parsed = SimConfig::parse(&cfg.render()).unwrap();
        assert_eq!(cfg, parsed);
    }

    #[test]
    fn parses_overrides_and_comments() {
        let text = "# exp setup\nhypothesis = h0\n s = 0.3  # harder\nn_committee = 4\nubar.theta = 8\n";
        let cfg = SimConfig::parse(text).unwrap();
        assert_eq!(cfg.synthetic.hypothesis, Hypothesis::H0);
        assert_eq!(cfg.synthetic.s, 0.3);
        assert_eq!(cfg.n_committee, 4);
        assert_eq!(cfg.ubar.theta, 8.0);
        assert_eq!(cfg.n_init, 50);
    }

    #[test]
    fn unknown_key_is_input_error() {
        assert!(matches!(
            SimConfig::parse("budget = 100\n"),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn bad_value_names_the_key() {
        let err = SimConfig::parse("sigma2 = abc\n").unwrap_err();
        assert!(err.to_string().contains("sigma2"));
    }
}
