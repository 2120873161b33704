//! Unsupervised aggregators used for comparison.
//!
//! All of them are deterministic functions of the annotations in scope: no
//! RNG is involved, and ties always resolve toward the smallest label index.

mod dawid_skene;
mod voting;
mod zencrowd;

pub use dawid_skene::{ConfusionMatrix, DawidSkene, DsFit, DsParams, SMOOTHING};
pub use voting::{majority_vote, vote_counts, weighted_vote, Wawa, ZbsFit, ZeroBasedSkill};
pub use zencrowd::{ZcFit, ZenCrowd};

use crate::dataset::Dataset;
use crate::Predictions;

/// An aggregator that labels `tasks` of a dataset from their annotations.
/// Tasks without annotations are left out of the result.
pub trait Aggregator {
    fn name(&self) -> &'static str;

    fn aggregate(&self, ds: &Dataset, tasks: &[usize]) -> Predictions;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MajorityVote;

impl Aggregator for MajorityVote {
    fn name(&self) -> &'static str {
        "mv"
    }

    fn aggregate(&self, ds: &Dataset, tasks: &[usize]) -> Predictions {
        majority_vote(ds, tasks)
    }
}

/// Tasks of `tasks` that carry at least one annotation.
pub(crate) fn annotated(ds: &Dataset, tasks: &[usize]) -> Vec<usize> {
    tasks
        .iter()
        .copied()
        .filter(|&t| !ds.task_annotations(t).is_empty())
        .collect()
}
