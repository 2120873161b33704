use std::collections::BTreeMap;

use super::dawid_skene::{log_sum_exp, max_change};
use super::{annotated, Aggregator};
use crate::dataset::Dataset;
use crate::features::compute_stats;
use crate::{argmax, Predictions};

const CLIP: f64 = 1e-6;

/// ZenCrowd EM: one reliability `r_i` per annotator, an answer is correct
/// with probability `r_i` and otherwise uniform over the `K - 1` wrong labels.
/// Truths have a uniform prior.
#[derive(Debug, Clone)]
pub struct ZenCrowd {
    pub max_iter: usize,
    pub tol: f64,
    pub init_reliability: f64,
    /// Per-annotator starting reliabilities; overrides `init_reliability`.
    pub init: Option<Vec<f64>>,
}

impl Default for ZenCrowd {
    fn default() -> Self {
        ZenCrowd {
            max_iter: 100,
            tol: 1e-6,
            init_reliability: 0.6,
            init: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ZcFit {
    pub predictions: Predictions,
    pub reliabilities: Vec<f64>,
    pub posteriors: BTreeMap<usize, Vec<f64>>,
    pub iterations: usize,
}

impl ZenCrowd {
    /// Starting reliabilities from historical accuracy; annotators without
    /// history keep `init_reliability`.
    pub fn with_history(mut self, ds: &Dataset, history: &[usize]) -> Self {
        let stats = compute_stats(ds, history);
        self.init = Some(
            stats
                .acc
                .iter()
                .zip(&stats.count)
                .map(|(&a, &c)| if c > 0 { a } else { self.init_reliability })
                .collect(),
        );
        self
    }

    pub fn fit(&self, ds: &Dataset, tasks: &[usize]) -> ZcFit {
        let tasks = annotated(ds, tasks);
        let mut rel: Vec<f64> = match &self.init {
            Some(r) => r.clone(),
            None => vec![self.init_reliability; ds.num_annotators()],
        };
        rel.iter_mut().for_each(|r| *r = r.clamp(CLIP, 1.0 - CLIP));

        let mut posteriors = e_step(ds, &tasks, &rel);
        let mut iterations = 0;
        for _ in 0..self.max_iter {
            iterations += 1;
            rel = m_step(ds, &posteriors, &rel);
            let next = e_step(ds, &tasks, &rel);
            let delta = max_change(&posteriors, &next);
            posteriors = next;
            if delta < self.tol {
                break;
            }
        }
        ZcFit {
            predictions: posteriors.iter().map(|(&t, p)| (t, argmax(p))).collect(),
            reliabilities: rel,
            posteriors,
            iterations,
        }
    }
}

impl Aggregator for ZenCrowd {
    fn name(&self) -> &'static str {
        "zc"
    }

    fn aggregate(&self, ds: &Dataset, tasks: &[usize]) -> Predictions {
        self.fit(ds, tasks).predictions
    }
}

fn e_step(ds: &Dataset, tasks: &[usize], rel: &[f64]) -> BTreeMap<usize, Vec<f64>> {
    let k = ds.num_choices();
    let wrong = (k - 1) as f64;
    tasks
        .iter()
        .map(|&t| {
            let mut logp = vec![0.0; k];
            for a in ds.task_annotations(t) {
                let r = rel[a.annotator];
                let (hit, miss) = (r.ln(), ((1.0 - r) / wrong).ln());
                for (g, lp) in logp.iter_mut().enumerate() {
                    *lp += if g == a.label { hit } else { miss };
                }
            }
            let lse = log_sum_exp(&logp);
            (t, logp.iter().map(|lp| (lp - lse).exp()).collect())
        })
        .collect()
}

/// Expected fraction of correct answers; annotators outside the scope keep
/// their previous value.
fn m_step(ds: &Dataset, posteriors: &BTreeMap<usize, Vec<f64>>, prev: &[f64]) -> Vec<f64> {
    let mut num = vec![0.0; ds.num_annotators()];
    let mut den = vec![0usize; ds.num_annotators()];
    for (&t, post) in posteriors {
        for a in ds.task_annotations(t) {
            num[a.annotator] += post[a.label];
            den[a.annotator] += 1;
        }
    }
    (0..ds.num_annotators())
        .map(|i| {
            if den[i] == 0 {
                prev[i]
            } else {
                (num[i] / den[i] as f64).clamp(CLIP, 1.0 - CLIP)
            }
        })
        .collect()
}
