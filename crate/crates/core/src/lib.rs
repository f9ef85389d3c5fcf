//! Active-learning-driven matched-pair experimental design.
//!
//! The library simulates budgeted matched-pair experiments that hunt for
//! high treatment-effect regions: participants are enrolled actively (by a
//! bootstrapped classifier committee, a regression gap, GP variance, or an
//! exact finite-class rule), each enrolled pair is randomized and labeled by
//! the γ-threshold rule, and a betting-based sequential two-sample test
//! decides whether the treatment works — all under an anytime Type-I
//! guarantee that active enrollment provably does not break.
//!
//! Modules:
//! - [`datagen`]: synthetic populations/outcomes and CSV pair ingestion;
//! - [`matching`]: pair formation, randomized assignment, γ-rule labels;
//! - [`classifiers`]: logistic regression, CART, k-NN, committees, GPs;
//! - [`seqtest`]: the betting martingale with ONS betting fractions;
//! - [`designs`]: the experiment engines, practical and finite-class;
//! - [`harness`]: replication sweeps, metrics, JSONL results, CSV reports;
//! - [`config`]: the flat key/value run configuration format.

pub mod classifiers;
pub mod config;
pub mod datagen;
pub mod designs;
pub mod error;
pub mod harness;
pub mod matching;
pub mod seqtest;

pub use error::{Error, Result};
