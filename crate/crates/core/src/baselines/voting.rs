use super::{annotated, Aggregator};
use crate::dataset::Dataset;
use crate::{argmax, Predictions};

/// Per-label vote counts of a task.
pub fn vote_counts(ds: &Dataset, task: usize) -> Vec<f64> {
    let mut counts = vec![0.0; ds.num_choices()];
    for a in ds.task_annotations(task) {
        counts[a.label] += 1.0;
    }
    counts
}

/// Plurality label per task.
pub fn majority_vote(ds: &Dataset, tasks: &[usize]) -> Predictions {
    annotated(ds, tasks)
        .into_iter()
        .map(|t| (t, argmax(&vote_counts(ds, t))))
        .collect()
}

/// Label with the largest summed annotator weight per task.
pub fn weighted_vote(ds: &Dataset, tasks: &[usize], weights: &[f64]) -> Predictions {
    annotated(ds, tasks)
        .into_iter()
        .map(|t| {
            let mut score = vec![0.0; ds.num_choices()];
            for a in ds.task_annotations(t) {
                score[a.label] += weights[a.annotator];
            }
            (t, argmax(&score))
        })
        .collect()
}

/// Fraction of each annotator's answers in scope that match `reference`.
/// Annotators with no answers in scope get `default`.
pub(crate) fn agreement(ds: &Dataset, reference: &Predictions, default: f64) -> Vec<f64> {
    let mut hit = vec![0usize; ds.num_annotators()];
    let mut total = vec![0usize; ds.num_annotators()];
    for (&t, &label) in reference {
        for a in ds.task_annotations(t) {
            total[a.annotator] += 1;
            if a.label == label {
                hit[a.annotator] += 1;
            }
        }
    }
    hit.iter()
        .zip(&total)
        .map(|(&h, &n)| if n == 0 { default } else { h as f64 / n as f64 })
        .collect()
}

/// Worker agreement with aggregate: weight every annotator by its agreement
/// rate with the majority vote, then take the weighted vote. Extra rounds
/// re-weight against the previous weighted result.
#[derive(Debug, Clone, Copy)]
pub struct Wawa {
    pub rounds: usize,
}

impl Default for Wawa {
    fn default() -> Self {
        Wawa { rounds: 1 }
    }
}

impl Wawa {
    pub fn fit(&self, ds: &Dataset, tasks: &[usize]) -> (Predictions, Vec<f64>) {
        let mut labels = majority_vote(ds, tasks);
        let mut weights = vec![0.0; ds.num_annotators()];
        for _ in 0..self.rounds {
            weights = agreement(ds, &labels, 0.0);
            labels = weighted_vote(ds, tasks, &weights);
        }
        (labels, weights)
    }
}

impl Aggregator for Wawa {
    fn name(&self) -> &'static str {
        "wawa"
    }

    fn aggregate(&self, ds: &Dataset, tasks: &[usize]) -> Predictions {
        self.fit(ds, tasks).0
    }
}

/// Zero-based skill: skills start at 1 and move toward each annotator's
/// agreement with the current weighted vote at rate `lr`. Stops once the
/// predictions are unchanged and no skill moved more than `tol`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroBasedSkill {
    pub lr: f64,
    pub iters: usize,
    pub tol: f64,
}

impl Default for ZeroBasedSkill {
    fn default() -> Self {
        ZeroBasedSkill {
            lr: 0.1,
            iters: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZbsFit {
    pub predictions: Predictions,
    pub skills: Vec<f64>,
    pub rounds: usize,
}

impl ZeroBasedSkill {
    pub fn fit(&self, ds: &Dataset, tasks: &[usize]) -> ZbsFit {
        self.fit_from(ds, tasks, vec![1.0; ds.num_annotators()])
    }

    pub fn fit_from(&self, ds: &Dataset, tasks: &[usize], mut skills: Vec<f64>) -> ZbsFit {
        let mut labels = weighted_vote(ds, tasks, &skills);
        let mut rounds = 0;
        for _ in 0..self.iters {
            rounds += 1;
            let agree = agreement(ds, &labels, 0.0);
            let mut moved: f64 = 0.0;
            for (s, a) in skills.iter_mut().zip(&agree) {
                let next = *s + self.lr * (a - *s);
                moved = moved.max((next - *s).abs());
                *s = next;
            }
            let next_labels = weighted_vote(ds, tasks, &skills);
            let stable = next_labels == labels;
            labels = next_labels;
            if stable && moved <= self.tol {
                break;
            }
        }
        ZbsFit {
            predictions: labels,
            skills,
            rounds,
        }
    }
}

impl Aggregator for ZeroBasedSkill {
    fn name(&self) -> &'static str {
        "zbs"
    }

    fn aggregate(&self, ds: &Dataset, tasks: &[usize]) -> Predictions {
        self.fit(ds, tasks).predictions
    }
}
