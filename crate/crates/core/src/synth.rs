//! Simulated annotator populations with known truths and accuracies.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Annotation, Dataset};
use crate::error::{Error, Result};

/// Distribution of per-annotator accuracies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AccuracyLaw {
    Uniform { lo: f64, hi: f64 },
    Fixed(f64),
    /// `p1` with probability `mix`, otherwise `p2`.
    TwoPoint { p1: f64, p2: f64, mix: f64 },
}

impl AccuracyLaw {
    fn validate(&self) -> Result<()> {
        let open = |x: f64| x > 0.0 && x <= 1.0;
        let ok = match *self {
            AccuracyLaw::Uniform { lo, hi } => open(lo) && open(hi) && lo <= hi,
            AccuracyLaw::Fixed(p) => open(p),
            AccuracyLaw::TwoPoint { p1, p2, mix } => open(p1) && open(p2) && (0.0..=1.0).contains(&mix),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid accuracy law {self}")))
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            AccuracyLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            AccuracyLaw::Fixed(p) => p,
            AccuracyLaw::TwoPoint { p1, p2, mix } => {
                if rng.random::<f64>() < mix {
                    p1
                } else {
                    p2
                }
            }
        }
    }
}

impl fmt::Display for AccuracyLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccuracyLaw::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            AccuracyLaw::Fixed(p) => write!(f, "fixed:{p}"),
            AccuracyLaw::TwoPoint { p1, p2, mix } => write!(f, "two-point:{p1}:{p2}:{mix}"),
        }
    }
}

/// Parses `uniform:LO:HI`, `fixed:P` or `two-point:P1:P2:MIX`.
impl FromStr for AccuracyLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |x: &str| {
            x.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number `{x}` in accuracy law `{s}`")))
        };
        let law = match parts.as_slice() {
            ["uniform", lo, hi] => AccuracyLaw::Uniform {
                lo: num(lo)?,
                hi: num(hi)?,
            },
            ["fixed", p] => AccuracyLaw::Fixed(num(p)?),
            ["two-point", p1, p2, mix] => AccuracyLaw::TwoPoint {
                p1: num(p1)?,
                p2: num(p2)?,
                mix: num(mix)?,
            },
            _ => {
                return Err(Error::Config(format!(
                    "accuracy law `{s}` is not uniform:LO:HI, fixed:P or two-point:P1:P2:MIX"
                )))
            }
        };
        law.validate()?;
        Ok(law)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_tasks: usize,
    pub num_annotators: usize,
    pub num_choices: usize,
    /// Annotations per task, from distinct annotators.
    pub redundancy: usize,
    pub accuracy: AccuracyLaw,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    /// Accuracy each annotator was simulated with.
    pub accuracies: Vec<f64>,
}

/// Truths uniform over `K`; each task gets `redundancy` distinct annotators
/// chosen uniformly; an annotation is correct with the annotator's accuracy,
/// otherwise uniform over the `K - 1` wrong labels.
pub fn generate(cfg: &SynthConfig) -> Result<Synthetic> {
    if cfg.redundancy > cfg.num_annotators {
        return Err(Error::Config(format!(
            "redundancy {} exceeds {} annotators",
            cfg.redundancy, cfg.num_annotators
        )));
    }
    if cfg.num_choices < 2 {
        return Err(Error::TooFewChoices(cfg.num_choices));
    }
    cfg.accuracy.validate()?;

    let k = cfg.num_choices;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let accuracies: Vec<f64> = (0..cfg.num_annotators)
        .map(|_| cfg.accuracy.draw(&mut rng))
        .collect();
    let mut truths = Vec::with_capacity(cfg.num_tasks);
    let mut annotations = Vec::with_capacity(cfg.num_tasks * cfg.redundancy);
    for task in 0..cfg.num_tasks {
        let truth = rng.random_range(0..k);
        truths.push(Some(truth));
        for annotator in sample(&mut rng, cfg.num_annotators, cfg.redundancy) {
            let label = if rng.random::<f64>() < accuracies[annotator] {
                truth
            } else {
                let wrong = rng.random_range(0..k - 1);
                if wrong >= truth {
                    wrong + 1
                } else {
                    wrong
                }
            };
            annotations.push(Annotation {
                task,
                annotator,
                label,
            });
        }
    }
    let dataset = Dataset::from_indices(cfg.num_tasks, cfg.num_annotators, k, annotations, truths)?;
    Ok(Synthetic {
        dataset,
        accuracies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::majority_vote;
    use crate::eval::accuracy;

    fn cfg(accuracy: AccuracyLaw) -> SynthConfig {
        SynthConfig {
            num_tasks: 1000,
            num_annotators: 20,
            num_choices: 2,
            redundancy: 5,
            accuracy,
            seed: 17,
        }
    }

    #[test]
    fn perfect_annotators_make_mv_perfect() {
        let s = generate(&cfg(AccuracyLaw::Fixed(1.0))).unwrap();
        let ds = &s.dataset;
        assert!(ds.annotations().iter().all(|a| Some(a.label) == ds.truth(a.task)));
        let tasks: Vec<usize> = (0..ds.num_tasks()).collect();
        let preds = majority_vote(ds, &tasks);
        assert_eq!(accuracy(&preds, ds.truths()), 1.0);
    }

    #[test]
    fn chance_accuracy_is_uninformative() {
        let mut c = cfg(AccuracyLaw::Fixed(0.25));
        c.num_choices = 4;
        let s = generate(&c).unwrap();
        let ds = &s.dataset;
        let correct = ds
            .annotations()
            .iter()
            .filter(|a| Some(a.label) == ds.truth(a.task))
            .count() as f64;
        let rate = correct / ds.annotations().len() as f64;
        // 5000 Bernoulli(0.25) draws: sd ≈ 0.0061.
        assert!((rate - 0.25).abs() < 0.025, "{rate}");
    }

    fn empirical_accuracies(s: &Synthetic) -> Vec<(f64, usize)> {
        let ds = &s.dataset;
        let mut hits = vec![(0usize, 0usize); ds.num_annotators()];
        for a in ds.annotations() {
            hits[a.annotator].1 += 1;
            if Some(a.label) == ds.truth(a.task) {
                hits[a.annotator].0 += 1;
            }
        }
        hits.into_iter()
            .map(|(c, n)| (c as f64 / n as f64, n))
            .collect()
    }

    #[test]
    fn empirical_accuracy_within_three_sigma() {
        let s = generate(&SynthConfig {
            num_annotators: 50,
            ..cfg(AccuracyLaw::Uniform { lo: 0.55, hi: 0.95 })
        })
        .unwrap();
        for (i, (emp, n)) in empirical_accuracies(&s).into_iter().enumerate() {
            let p = s.accuracies[i];
            let band = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
            assert!((emp - p).abs() <= band, "annotator {i}: {emp} vs {p} (n = {n})");
        }
    }

    #[test]
    fn empirical_accuracy_within_six_points() {
        // 1000 tasks x 5 over 5 annotators: every annotator answers every task,
        // sd <= 0.016.
        let s = generate(&SynthConfig {
            num_annotators: 5,
            ..cfg(AccuracyLaw::Uniform { lo: 0.55, hi: 0.95 })
        })
        .unwrap();
        for (i, (emp, _)) in empirical_accuracies(&s).into_iter().enumerate() {
            assert!((emp - s.accuracies[i]).abs() < 0.06);
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = generate(&cfg(AccuracyLaw::Uniform { lo: 0.6, hi: 0.9 })).unwrap();
        let b = generate(&cfg(AccuracyLaw::Uniform { lo: 0.6, hi: 0.9 })).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.accuracies, b.accuracies);
    }

    #[test]
    fn redundancy_above_population_is_rejected() {
        let mut c = cfg(AccuracyLaw::Fixed(0.8));
        c.redundancy = 21;
        assert!(matches!(generate(&c), Err(Error::Config(_))));
    }

    #[test]
    fn law_parsing() {
        assert_eq!(
            "uniform:0.55:0.95".parse::<AccuracyLaw>().unwrap(),
            AccuracyLaw::Uniform { lo: 0.55, hi: 0.95 }
        );
        assert_eq!("fixed:0.5".parse::<AccuracyLaw>().unwrap(), AccuracyLaw::Fixed(0.5));
        assert!("fixed:1.5".parse::<AccuracyLaw>().is_err());
        assert!("gauss:0.5".parse::<AccuracyLaw>().is_err());
        let law: AccuracyLaw = "two-point:0.9:0.6:0.3".parse().unwrap();
        assert_eq!(law.to_string().parse::<AccuracyLaw>().unwrap(), law);
    }
}
