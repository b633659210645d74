//! Local contextual-bandit learners over hypercube partitions, fused by
//! anytime exponential-weights ensemble learners.
//!
//! The crate is organised bottom-up:
//!
//! - [`partition`]: uniform hypercube grids over `[0,1]^d` and the choice of
//!   the partitioning parameter.
//! - [`local_learner`]: the per-cell UCB learner run by every local learner,
//!   its confidence radius and its regret audit formula.
//! - [`ensemble`]: Anytime Hedge, weighted-majority fusion, Contextual Hedge
//!   and the active (exploit-only) filter.
//! - [`environment`]: synthetic worlds with known accuracy functions and the
//!   dataset-driven world, plus label corruption.
//! - [`metrics`]: regret computations, classification rates and tuning.
//! - [`ingest`]: the WDBC loader, feature assignment and resampling.
//! - [`experiment`]: the dataset run harness shared by the CLI and the
//!   acceptance suite.
//! - [`audit`]: synthetic checks of measured regret against the bounds.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod ensemble;
pub mod environment;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod local_learner;
pub mod metrics;
pub mod partition;

pub use error::{Error, Result};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

/// Binary diagnosis label. Every learner in the crate predicts one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Benign,
    Malignant,
}

impl Label {
    pub fn flipped(self) -> Self {
        match self {
            Label::Benign => Label::Malignant,
            Label::Malignant => Label::Benign,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Label::Benign => 'B',
            Label::Malignant => 'M',
        }
    }
}

/// Seeded generator used throughout. ChaCha keeps streams identical across
/// platforms and crate upgrades of `rand`.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Creates the generator for a given seed.
pub fn seeded_rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator for `seed`. Runs use one
/// stream per concern so that paired configurations share draws.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = seeded_rng(seed);
    rng.set_stream(stream);
    rng
}
