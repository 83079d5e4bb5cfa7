//! Label-efficient dataset pruning.
//!
//! The engine builds a pseudo-labeled training pool from a small labeled
//! subset, records the per-epoch predictions of a supervised run over that
//! pool, turns them into per-example difficulty scores and selects a coreset
//! from the scores. A synthetic task generator and a softmax-regression
//! trainer make the whole pipeline runnable without external data.
//!
//! Module map:
//! - [`dynamics`]: trajectory logs, label pools and the `TRJ1` file format
//! - [`scoring`]: AUM, DUAL, forgetting and EL2N scores
//! - [`selection`]: double-end cutoff pruning, Beta sampling and baselines
//! - [`labeling`]: self-training and k-means pseudo-labelers, label quality
//! - [`synth`]: synthetic tasks and the toy trainer
//! - [`tuning`]: validation-split hyperparameter search
//! - [`pipeline`]: config, stage commands and the comparison report

pub mod config;
pub mod dynamics;
pub mod error;
pub mod hungarian;
pub mod labeling;
pub mod pipeline;
pub mod rng;
pub mod scoring;
pub mod selection;
pub mod synth;
pub mod tuning;

pub use dynamics::{LabelPool, LabelRecord, TrajectoryLog};
pub use error::{Error, Result};
pub use scoring::{Metric, ScoreTable};
pub use selection::{BetaParams, SelectionMethod, SelectionPlan};
pub use synth::{SyntheticTask, TaskSpec, ToyTrainerConfig};
