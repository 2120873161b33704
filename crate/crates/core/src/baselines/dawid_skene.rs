use std::collections::BTreeMap;

use super::{annotated, vote_counts, Aggregator};
use crate::dataset::Dataset;
use crate::{argmax, Predictions};

/// Pseudo-count added to every confusion and prior cell before normalizing.
pub const SMOOTHING: f64 = 1e-9;

/// Row-stochastic `K x K` matrix; entry `(g, l)` is `P(answer l | truth g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    k: usize,
    data: Vec<f64>,
}

impl ConfusionMatrix {
    pub fn uniform(k: usize) -> Self {
        ConfusionMatrix {
            k,
            data: vec![1.0 / k as f64; k * k],
        }
    }

    /// Normalizes `counts + SMOOTHING` row by row.
    pub fn from_counts(k: usize, counts: &[f64]) -> Self {
        let mut data: Vec<f64> = counts.iter().map(|c| c + SMOOTHING).collect();
        for row in data.chunks_mut(k) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        ConfusionMatrix { k, data }
    }

    pub fn num_choices(&self) -> usize {
        self.k
    }

    pub fn row(&self, truth: usize) -> &[f64] {
        &self.data[truth * self.k..(truth + 1) * self.k]
    }

    pub fn get(&self, truth: usize, answer: usize) -> f64 {
        self.data[truth * self.k + answer]
    }
}

/// Class prior plus one confusion matrix per dataset annotator.
#[derive(Debug, Clone, PartialEq)]
pub struct DsParams {
    pub prior: Vec<f64>,
    pub confusions: Vec<ConfusionMatrix>,
}

impl DsParams {
    /// Parameters counted directly from the truths of `history` tasks.
    /// Annotators without history get a uniform matrix.
    pub fn from_history(ds: &Dataset, history: &[usize]) -> Self {
        let k = ds.num_choices();
        let mut posteriors = BTreeMap::new();
        for &t in history {
            if let Some(y) = ds.truth(t) {
                let mut p = vec![0.0; k];
                p[y] = 1.0;
                posteriors.insert(t, p);
            }
        }
        m_step(ds, &posteriors)
    }
}

#[derive(Debug, Clone)]
pub struct DsFit {
    pub predictions: Predictions,
    pub params: DsParams,
    /// Posterior over the truth of every annotated task in scope.
    pub posteriors: BTreeMap<usize, Vec<f64>>,
    /// Marginal log-likelihood after each E-step.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
}

/// Dawid-Skene EM over per-annotator confusion matrices.
#[derive(Debug, Clone)]
pub struct DawidSkene {
    pub max_iter: usize,
    pub tol: f64,
    /// Starting parameters; `None` starts from majority-vote soft labels.
    pub init: Option<DsParams>,
}

impl Default for DawidSkene {
    fn default() -> Self {
        DawidSkene {
            max_iter: 100,
            tol: 1e-6,
            init: None,
        }
    }
}

impl DawidSkene {
    pub fn fit(&self, ds: &Dataset, tasks: &[usize]) -> DsFit {
        let tasks = annotated(ds, tasks);
        let mut log_likelihoods = Vec::new();
        let mut posteriors = match &self.init {
            Some(params) => {
                let (post, ll) = e_step(ds, &tasks, params);
                log_likelihoods.push(ll);
                post
            }
            None => tasks
                .iter()
                .map(|&t| {
                    let mut c = vote_counts(ds, t);
                    let s: f64 = c.iter().sum();
                    c.iter_mut().for_each(|x| *x /= s);
                    (t, c)
                })
                .collect(),
        };
        let mut params = m_step(ds, &posteriors);
        let mut iterations = 0;
        for _ in 0..self.max_iter {
            iterations += 1;
            let (next, ll) = e_step(ds, &tasks, &params);
            log_likelihoods.push(ll);
            let delta = max_change(&posteriors, &next);
            posteriors = next;
            params = m_step(ds, &posteriors);
            if delta < self.tol {
                break;
            }
        }
        let predictions = posteriors.iter().map(|(&t, p)| (t, argmax(p))).collect();
        DsFit {
            predictions,
            params,
            posteriors,
            log_likelihoods,
            iterations,
        }
    }
}

impl Aggregator for DawidSkene {
    fn name(&self) -> &'static str {
        "ds"
    }

    fn aggregate(&self, ds: &Dataset, tasks: &[usize]) -> Predictions {
        self.fit(ds, tasks).predictions
    }
}

/// Maximum-likelihood prior and confusion rows given soft truth assignments.
fn m_step(ds: &Dataset, posteriors: &BTreeMap<usize, Vec<f64>>) -> DsParams {
    let k = ds.num_choices();
    let mut prior = vec![SMOOTHING; k];
    let mut counts = vec![vec![0.0; k * k]; ds.num_annotators()];
    for (&t, post) in posteriors {
        for (g, p) in post.iter().enumerate() {
            prior[g] += p;
        }
        for a in ds.task_annotations(t) {
            let c = &mut counts[a.annotator];
            for (g, p) in post.iter().enumerate() {
                c[g * k + a.label] += p;
            }
        }
    }
    let total: f64 = prior.iter().sum();
    prior.iter_mut().for_each(|p| *p /= total);
    DsParams {
        prior,
        confusions: counts
            .iter()
            .map(|c| ConfusionMatrix::from_counts(k, c))
            .collect(),
    }
}

/// Posteriors over truths and the marginal log-likelihood of the answers.
fn e_step(ds: &Dataset, tasks: &[usize], params: &DsParams) -> (BTreeMap<usize, Vec<f64>>, f64) {
    let k = ds.num_choices();
    let log_prior: Vec<f64> = params.prior.iter().map(|p| p.ln()).collect();
    let mut ll = 0.0;
    let mut out = BTreeMap::new();
    for &t in tasks {
        let mut logp = log_prior.clone();
        for a in ds.task_annotations(t) {
            let cm = &params.confusions[a.annotator];
            for (g, lp) in logp.iter_mut().enumerate() {
                *lp += cm.get(g, a.label).ln();
            }
        }
        let lse = log_sum_exp(&logp);
        ll += lse;
        let post: Vec<f64> = (0..k).map(|g| (logp[g] - lse).exp()).collect();
        out.insert(t, post);
    }
    (out, ll)
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub(crate) fn max_change(a: &BTreeMap<usize, Vec<f64>>, b: &BTreeMap<usize, Vec<f64>>) -> f64 {
    a.values()
        .zip(b.values())
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::majority_vote;
    use crate::dataset::Annotation;
    use crate::synth::{generate, AccuracyLaw, SynthConfig};

    #[test]
    fn perfect_agreeing_annotators() {
        let mut anns = Vec::new();
        for t in 0..20 {
            for w in 0..2 {
                anns.push(Annotation {
                    task: t,
                    annotator: w,
                    label: t % 2,
                });
            }
        }
        let ds = Dataset::from_indices(20, 2, 2, anns, vec![None; 20]).unwrap();
        let fit = DawidSkene::default().fit(&ds, &(0..20).collect::<Vec<_>>());
        for (t, p) in &fit.posteriors {
            assert!(p[t % 2] > 1.0 - 1e-6);
        }
        for cm in &fit.params.confusions {
            assert!(cm.get(0, 0) > 1.0 - 1e-6 && cm.get(1, 1) > 1.0 - 1e-6);
        }
    }

    #[test]
    fn likelihood_never_decreases() {
        for seed in 0..5 {
            let s = generate(&SynthConfig {
                num_tasks: 400,
                num_annotators: 15,
                num_choices: 3,
                redundancy: 4,
                accuracy: AccuracyLaw::Uniform { lo: 0.4, hi: 0.9 },
                seed,
            })
            .unwrap();
            let fit = DawidSkene::default().fit(&s.dataset, &(0..400).collect::<Vec<_>>());
            for w in fit.log_likelihoods.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "seed {seed}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn zero_iterations_is_majority_vote() {
        let s = generate(&SynthConfig {
            num_tasks: 200,
            num_annotators: 9,
            num_choices: 3,
            redundancy: 4,
            accuracy: AccuracyLaw::Uniform { lo: 0.4, hi: 0.9 },
            seed: 4,
        })
        .unwrap();
        let tasks: Vec<usize> = (0..200).collect();
        let ds_fit = DawidSkene {
            max_iter: 0,
            ..DawidSkene::default()
        }
        .fit(&s.dataset, &tasks);
        assert_eq!(ds_fit.predictions, majority_vote(&s.dataset, &tasks));
    }

    #[test]
    fn idle_annotator_has_uniform_rows() {
        let anns = vec![
            Annotation { task: 0, annotator: 0, label: 1 },
            Annotation { task: 1, annotator: 2, label: 0 },
        ];
        let ds = Dataset::from_indices(2, 3, 2, anns, vec![None, None]).unwrap();
        let fit = DawidSkene::default().fit(&ds, &[0]);
        assert_eq!(fit.params.confusions[2], ConfusionMatrix::uniform(2));
        assert_eq!(fit.params.confusions[1], ConfusionMatrix::uniform(2));
    }

    #[test]
    fn history_initialization_counts_truths() {
        let anns = vec![
            Annotation { task: 0, annotator: 0, label: 0 },
            Annotation { task: 1, annotator: 0, label: 1 },
            Annotation { task: 2, annotator: 0, label: 0 },
        ];
        let ds = Dataset::from_indices(3, 1, 2, anns, vec![Some(0), Some(0), Some(1)]).unwrap();
        let p = DsParams::from_history(&ds, &[0, 1, 2]);
        let cm = &p.confusions[0];
        assert!((cm.get(0, 0) - 0.5).abs() < 1e-8);
        assert!((cm.get(1, 0) - 1.0).abs() < 1e-8);
        assert!((p.prior[0] - 2.0 / 3.0).abs() < 1e-8);
    }
}
