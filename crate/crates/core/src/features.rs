//! Annotator statistics and the three per-task input blocks.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Historical accuracy per annotator, indexed by dataset annotator index.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatorStats {
    pub acc: Vec<f64>,
    pub std: Vec<f64>,
    /// Number of historical tasks the annotator answered.
    pub count: Vec<usize>,
    /// Mean accuracy over annotators with `count > 0`; `1/K` if there are none.
    pub global_mean_acc: f64,
}

/// Accuracy of each annotator on `historical_tasks`, which must all carry a
/// truth (others are ignored). Annotators without history fall back to the
/// global mean accuracy.
pub fn compute_stats(ds: &Dataset, historical_tasks: &[usize]) -> AnnotatorStats {
    let n = ds.num_annotators();
    let mut hits: Vec<Vec<bool>> = vec![Vec::new(); n];
    for &t in historical_tasks {
        let Some(truth) = ds.truth(t) else { continue };
        for a in ds.task_annotations(t) {
            hits[a.annotator].push(a.label == truth);
        }
    }

    let count: Vec<usize> = hits.iter().map(Vec::len).collect();
    let mut acc = vec![0.0; n];
    let mut std = vec![0.0; n];
    let mut seen = 0usize;
    let mut acc_sum = 0.0;
    for (i, h) in hits.iter().enumerate() {
        if h.is_empty() {
            continue;
        }
        let len = h.len() as f64;
        let a = h.iter().filter(|&&x| x).count() as f64 / len;
        let var = h
            .iter()
            .map(|&x| {
                let d = f64::from(u8::from(x)) - a;
                d * d
            })
            .sum::<f64>()
            / len;
        acc[i] = a;
        std[i] = var.sqrt();
        seen += 1;
        acc_sum += a;
    }

    let global_mean_acc = if seen > 0 {
        acc_sum / seen as f64
    } else {
        1.0 / ds.num_choices().max(1) as f64
    };
    for i in 0..n {
        if count[i] == 0 {
            acc[i] = global_mean_acc;
            std[i] = bernoulli_std(global_mean_acc);
        }
    }
    AnnotatorStats {
        acc,
        std,
        count,
        global_mean_acc,
    }
}

pub(crate) fn bernoulli_std(p: f64) -> f64 {
    (p * (1.0 - p)).max(0.0).sqrt()
}

/// Maps dataset annotator indices onto the model's annotator vocabulary.
/// Annotators outside the vocabulary share the out-of-vocabulary id `size`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    to_model: Vec<Option<usize>>,
    size: usize,
}

impl Vocabulary {
    /// Every annotator with historical answers, in ascending dataset order.
    pub fn from_stats(stats: &AnnotatorStats) -> Self {
        let mut size = 0;
        let to_model = stats
            .count
            .iter()
            .map(|&c| {
                (c > 0).then(|| {
                    size += 1;
                    size - 1
                })
            })
            .collect();
        Vocabulary { to_model, size }
    }

    /// All `n` annotators of a dataset, identity mapping.
    pub fn identity(n: usize) -> Self {
        Vocabulary {
            to_model: (0..n).map(Some).collect(),
            size: n,
        }
    }

    /// Aligns a stored vocabulary (by annotator name) with `ds`.
    pub fn from_names(known: &[String], ds: &Dataset) -> Self {
        let lookup: HashMap<&str, usize> = known
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let to_model = ds
            .annotator_names()
            .iter()
            .map(|n| lookup.get(n.as_str()).copied())
            .collect();
        Vocabulary {
            to_model,
            size: known.len(),
        }
    }

    /// Number of known annotators (`N`); also the out-of-vocabulary id.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn oov(&self) -> usize {
        self.size
    }

    pub fn model_index(&self, annotator: usize) -> usize {
        self.to_model
            .get(annotator)
            .copied()
            .flatten()
            .unwrap_or(self.size)
    }

    /// Dataset indices of the known annotators, in model order.
    pub fn members(&self) -> Vec<usize> {
        let mut out = vec![0; self.size];
        for (ds_idx, m) in self.to_model.iter().enumerate() {
            if let Some(m) = m {
                out[*m] = ds_idx;
            }
        }
        out
    }
}

/// Input widths shared by every task of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub num_choices: usize,
    pub l_max: usize,
    pub vocab_size: usize,
}

impl FeatureLayout {
    pub fn slot_len(&self) -> usize {
        self.num_choices + 1
    }

    pub fn acc_len(&self) -> usize {
        self.slot_len() * self.l_max
    }

    pub fn multihot_len(&self) -> usize {
        self.num_choices * self.vocab_size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskFeatures {
    /// `(K+1) * L_max` accuracy block, occupied slots first, zero padded.
    pub acc_block: Vec<f64>,
    /// Number of occupied slots in `acc_block`.
    pub occupied: usize,
    /// Model annotator ids per choice, ascending.
    pub choice_sets: Vec<Vec<usize>>,
    /// Positions of the set bits of the `K * N` multi-hot vector, ascending.
    pub multihot: Vec<usize>,
}

impl TaskFeatures {
    pub fn multihot_dense(&self, len: usize) -> Vec<f64> {
        let mut v = vec![0.0; len];
        for &p in &self.multihot {
            v[p] = 1.0;
        }
        v
    }
}

/// Accuracy block of one task: per annotation (canonical order, at most
/// `l_max`) a slot with `acc` at the chosen label, `(1 - acc)/(K - 1)`
/// elsewhere and `std` last.
pub fn build_accuracy_feature(
    task: usize,
    ds: &Dataset,
    stats: &AnnotatorStats,
    l_max: usize,
) -> Result<Vec<f64>> {
    let anns = ds.task_annotations(task);
    if anns.is_empty() {
        return Err(Error::EmptyTask(task));
    }
    let k = ds.num_choices();
    if k < 2 {
        return Err(Error::TooFewChoices(k));
    }
    let slot = k + 1;
    let mut block = vec![0.0; slot * l_max];
    for (s, a) in anns.iter().take(l_max).enumerate() {
        let acc = stats.acc[a.annotator];
        let off = (1.0 - acc) / (k - 1) as f64;
        let row = &mut block[s * slot..(s + 1) * slot];
        row[..k].fill(off);
        row[a.label] = acc;
        row[k] = stats.std[a.annotator];
    }
    Ok(block)
}

/// Model annotator ids grouped by chosen label.
pub fn build_choice_sets(task: usize, ds: &Dataset, vocab: &Vocabulary) -> Vec<Vec<usize>> {
    let mut sets = vec![Vec::new(); ds.num_choices()];
    for a in ds.task_annotations(task) {
        sets[a.label].push(vocab.model_index(a.annotator));
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    sets
}

/// Set-bit positions `k * N + i` for every known annotator `i` in set `k`.
pub fn build_multihot(choice_sets: &[Vec<usize>], vocab_size: usize) -> Vec<usize> {
    let mut bits: Vec<usize> = choice_sets
        .iter()
        .enumerate()
        .flat_map(|(k, set)| {
            set.iter()
                .filter(move |&&i| i < vocab_size)
                .map(move |&i| k * vocab_size + i)
        })
        .collect();
    bits.sort_unstable();
    bits
}

pub fn build_task_features(
    task: usize,
    ds: &Dataset,
    stats: &AnnotatorStats,
    vocab: &Vocabulary,
    layout: &FeatureLayout,
) -> Result<TaskFeatures> {
    if ds.num_choices() != layout.num_choices {
        return Err(Error::Dimension(format!(
            "dataset has {} choices, layout expects {}",
            ds.num_choices(),
            layout.num_choices
        )));
    }
    let acc_block = build_accuracy_feature(task, ds, stats, layout.l_max)?;
    let choice_sets = build_choice_sets(task, ds, vocab);
    let multihot = build_multihot(&choice_sets, layout.vocab_size);
    Ok(TaskFeatures {
        acc_block,
        occupied: ds.task_annotations(task).len().min(layout.l_max),
        choice_sets,
        multihot,
    })
}

/// `replication` copies of `features`, copy 0 being the original and the
/// others permuting the occupied accuracy slots uniformly at random.
pub fn augment<R: Rng + ?Sized>(
    features: &TaskFeatures,
    num_choices: usize,
    replication: usize,
    rng: &mut R,
) -> Vec<TaskFeatures> {
    let slot = num_choices + 1;
    let mut out = Vec::with_capacity(replication);
    if replication == 0 {
        return out;
    }
    out.push(features.clone());
    let mut order: Vec<usize> = (0..features.occupied).collect();
    for _ in 1..replication {
        order.shuffle(rng);
        let mut copy = features.clone();
        for (dst, &src) in order.iter().enumerate() {
            copy.acc_block[dst * slot..(dst + 1) * slot]
                .copy_from_slice(&features.acc_block[src * slot..(src + 1) * slot]);
        }
        out.push(copy);
    }
    out
}
