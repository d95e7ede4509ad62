//! Conversation emotion modeling with supervised adversarial contrastive
//! learning, built from scratch on a small reverse-mode autodiff tape.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense row-major f64 storage.
//! - [`grad`]: Wengert-tape autodiff with named leaves, additive injection
//!   sites, and a finite-difference checker.
//! - [`model`]: the Dual-LSTM conversation encoder (situation-aware plus
//!   speaker-aware BiLSTMs), a context-free MLP baseline, and checkpoints.
//! - [`objectives`]: cross-entropy, focal, supervised contrastive, and the
//!   combined soft/adversarial contrastive objectives.
//! - [`adversarial`]: norm-bounded perturbation generation, contextual
//!   (in-cell), input-feature, and random baselines, plus evaluation attacks.
//! - [`trainer`]: Adam with decoupled weight decay, gradient accumulation,
//!   early stopping, deterministic multi-seed sub-seeding.
//! - [`data`]: conversation dataset types, JSONL persistence, splits,
//!   batching, and a synthetic conversation generator.
//! - [`metrics`]: classification reports, K-means, clustering agreement and
//!   geometry scores, robustness curves, paired t-test.
//! - [`eval`]: the evaluation protocol tying model, attacks, and metrics
//!   together: split scoring, attacked scoring, robustness curves, and
//!   representation clustering.
//!
//! Everything is deterministic given a seed: there are no hash-ordered
//! collections on any compute path and all randomness flows through
//! explicitly seeded generators.

pub mod adversarial;
pub mod data;
pub mod error;
pub mod eval;
pub mod grad;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod seeds;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
