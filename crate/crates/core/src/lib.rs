//! Label aggregation for crowdsourced annotations.
//!
//! The crate centres on a supervised aggregator that learns from tasks whose
//! true labels are already known ("historical" tasks) and then labels new
//! tasks with a single forward pass, without refitting anything. Three input
//! blocks are built per task:
//!
//! * an accuracy block, one `(K + 1)`-slot per annotation carrying the
//!   annotator's historical accuracy at the chosen label, the complement spread
//!   over the other labels and the accuracy's standard deviation;
//! * per-choice sets of annotator ids, pooled through a learned embedding;
//! * a sparse multi-hot `(choice, annotator)` indicator.
//!
//! These feed a small two-stage MLP trained with cross-entropy and AdamW
//! ([`model`]). Classical unsupervised aggregators live in [`baselines`],
//! a population simulator in [`synth`] and the k-fold harness in [`eval`].

pub mod baselines;
pub mod dataset;
mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod synth;

pub use dataset::{kfold_split, Annotation, Dataset, FoldSplit, LoadOptions};
pub use error::{Error, Result};
pub use features::{AnnotatorStats, TaskFeatures, Vocabulary};
pub use model::{SuperLa, TrainConfig, TrainHistory};

/// Aggregated labels keyed by task index.
pub type Predictions = std::collections::BTreeMap<usize, usize>;

/// Index of the largest value, ties resolved toward the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
