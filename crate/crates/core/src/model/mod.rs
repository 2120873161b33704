//! The supervised aggregator: training on historical tasks and pure inference.

mod checkpoint;
pub mod network;
pub mod optim;
pub mod params;
pub mod train;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LoadOptions};
use crate::error::{Error, Result};
use crate::features::{
    augment, bernoulli_std, build_task_features, compute_stats, AnnotatorStats, FeatureLayout,
    TaskFeatures, Vocabulary,
};
use crate::{argmax, Predictions};

pub use network::{cross_entropy, embed_choice_sets, forward, loss_and_grad, softmax};
pub use params::{ModelDims, ModelParams};
pub use train::{EarlyStopping, EpochRecord, TrainConfig, TrainHistory, Verdict};

/// Training-time statistics of an annotator in the model vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownAnnotator {
    pub name: String,
    pub acc: f64,
    pub std: f64,
    pub count: usize,
}

/// A trained aggregator with everything needed to featurize new data.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperLa {
    pub params: ModelParams,
    pub labels: Vec<String>,
    pub annotators: Vec<KnownAnnotator>,
    pub global_mean_acc: f64,
    pub config: TrainConfig,
}

/// Per-dataset view of a trained model: stats and vocabulary aligned to the
/// dataset's annotator indices.
#[derive(Debug, Clone)]
pub struct InferenceContext {
    pub stats: AnnotatorStats,
    pub vocab: Vocabulary,
    pub layout: FeatureLayout,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Inference {
    pub predictions: Predictions,
    /// Requested tasks without any annotation.
    pub skipped: Vec<usize>,
}

impl SuperLa {
    /// Trains on `train_tasks`, early-stopping on `val_tasks`. Annotator
    /// statistics and the vocabulary come from `train_tasks` only.
    pub fn train(
        ds: &Dataset,
        train_tasks: &[usize],
        val_tasks: &[usize],
        config: &TrainConfig,
    ) -> Result<(SuperLa, TrainHistory)> {
        config.validate()?;
        ds.validate_choices()?;
        let usable = |tasks: &[usize]| -> Vec<usize> {
            tasks
                .iter()
                .copied()
                .filter(|&t| ds.truth(t).is_some() && !ds.task_annotations(t).is_empty())
                .collect()
        };
        let train_tasks = usable(train_tasks);
        let val_tasks = usable(val_tasks);
        if train_tasks.is_empty() {
            return Err(Error::EmptyTrainingSplit);
        }

        let stats = compute_stats(ds, &train_tasks);
        let vocab = Vocabulary::from_stats(&stats);
        let dims = ModelDims {
            num_choices: ds.num_choices(),
            vocab_size: vocab.size(),
            l_max: ds.l_max_over(&train_tasks),
            embed_dim: config.embed_dim,
            hidden1: config.hidden1,
            hidden2: config.hidden2,
        };
        let layout = dims.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

        let mut train = Vec::with_capacity(train_tasks.len() * config.replication);
        for &t in &train_tasks {
            let truth = ds.truth(t).expect("filtered");
            let f = build_task_features(t, ds, &stats, &vocab, &layout)?;
            train.extend(
                augment(&f, dims.num_choices, config.replication, &mut rng)
                    .into_iter()
                    .map(|c| (c, truth)),
            );
        }
        let monitor_tasks = if val_tasks.is_empty() {
            log::warn!("no validation tasks; early stopping monitors the training loss");
            &train_tasks
        } else {
            &val_tasks
        };
        let monitor_owned = monitor_tasks
            .iter()
            .map(|&t| {
                build_task_features(t, ds, &stats, &vocab, &layout)
                    .map(|f| (f, ds.truth(t).expect("filtered")))
            })
            .collect::<Result<Vec<_>>>()?;
        let monitor: Vec<(&TaskFeatures, usize)> =
            monitor_owned.iter().map(|(f, y)| (f, *y)).collect();

        let init = ModelParams::init(dims, &mut rng);
        let (params, history) = train::fit(init, &train, &monitor, config, &mut rng)?;
        log::info!(
            "trained {} epochs on {} instances, best val loss {:.5} at epoch {}",
            history.epochs.len(),
            train.len(),
            history.best_val_loss,
            history.best_epoch
        );

        let annotators = vocab
            .members()
            .into_iter()
            .map(|i| KnownAnnotator {
                name: ds.annotator_name(i).to_owned(),
                acc: stats.acc[i],
                std: stats.std[i],
                count: stats.count[i],
            })
            .collect();
        Ok((
            SuperLa {
                params,
                labels: ds.label_names().to_vec(),
                annotators,
                global_mean_acc: stats.global_mean_acc,
                config: config.clone(),
            },
            history,
        ))
    }

    pub fn dims(&self) -> &ModelDims {
        &self.params.dims
    }

    pub fn annotator_names(&self) -> Vec<String> {
        self.annotators.iter().map(|a| a.name.clone()).collect()
    }

    /// Aligns the stored vocabulary and statistics with `ds`. Annotators the
    /// model has not seen get the global mean accuracy and the OOV id.
    pub fn context(&self, ds: &Dataset) -> Result<InferenceContext> {
        let k = self.dims().num_choices;
        if ds.num_choices() != k {
            return Err(Error::IncompatibleModel(format!(
                "model was trained with {k} choices, input has {}",
                ds.num_choices()
            )));
        }
        if ds.label_names() != self.labels.as_slice() {
            return Err(Error::IncompatibleModel(format!(
                "label vocabulary differs: model {:?}, input {:?}",
                self.labels,
                ds.label_names()
            )));
        }
        let vocab = Vocabulary::from_names(&self.annotator_names(), ds);
        let n = ds.num_annotators();
        let mut stats = AnnotatorStats {
            acc: vec![self.global_mean_acc; n],
            std: vec![bernoulli_std(self.global_mean_acc); n],
            count: vec![0; n],
            global_mean_acc: self.global_mean_acc,
        };
        for i in 0..n {
            let m = vocab.model_index(i);
            if let Some(a) = self.annotators.get(m) {
                stats.acc[i] = a.acc;
                stats.std[i] = a.std;
                stats.count[i] = a.count;
            }
        }
        Ok(InferenceContext {
            stats,
            vocab,
            layout: self.dims().layout(),
        })
    }

    pub fn task_features(
        &self,
        ctx: &InferenceContext,
        ds: &Dataset,
        task: usize,
    ) -> Result<TaskFeatures> {
        build_task_features(task, ds, &ctx.stats, &ctx.vocab, &ctx.layout)
    }

    /// Argmax of the inference-mode logits, ties toward the smallest label.
    pub fn predict(&self, features: &TaskFeatures) -> Result<usize> {
        Ok(argmax(&forward(&self.params, features, None)?.logits))
    }

    /// Labels `tasks` of `ds` with one forward pass each. Takes `&self`: no
    /// parameter is touched.
    pub fn infer(&self, ds: &Dataset, tasks: &[usize]) -> Result<Inference> {
        let ctx = self.context(ds)?;
        let mut out = Inference::default();
        for &t in tasks {
            if ds.task_annotations(t).is_empty() {
                out.skipped.push(t);
                continue;
            }
            let f = self.task_features(&ctx, ds, t)?;
            out.predictions.insert(t, self.predict(&f)?);
        }
        if !out.skipped.is_empty() {
            log::warn!("{} tasks without annotations were skipped", out.skipped.len());
        }
        Ok(out)
    }

    /// Reads an answer file against the model's label vocabulary. A label the
    /// model was not trained with is an incompatibility, not a parse error.
    pub fn load_answers(&self, path: impl AsRef<Path>) -> Result<Dataset> {
        let opts = LoadOptions {
            labels: Some(self.labels.clone()),
            num_choices: None,
        };
        Dataset::load_annotations_with(path, &opts).map_err(|e| match e {
            Error::UnknownLabel { label, .. } => Error::IncompatibleModel(format!(
                "label `{label}` is not one of the model's {} choices {:?}",
                self.labels.len(),
                self.labels
            )),
            other => other,
        })
    }

    /// Labels every annotated task of `ds`.
    pub fn infer_all(&self, ds: &Dataset) -> Result<Inference> {
        let tasks: Vec<usize> = (0..ds.num_tasks()).collect();
        self.infer(ds, &tasks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, AccuracyLaw, SynthConfig};

    fn small_config() -> TrainConfig {
        TrainConfig {
            max_epochs: 30,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    fn synthetic(seed: u64) -> Dataset {
        generate(&SynthConfig {
            num_tasks: 300,
            num_annotators: 12,
            num_choices: 2,
            redundancy: 4,
            accuracy: AccuracyLaw::Uniform { lo: 0.6, hi: 0.95 },
            seed,
        })
        .unwrap()
        .dataset
    }

    #[test]
    fn tie_breaks_toward_smallest_label() {
        assert_eq!(argmax(&[0.2, 0.9, 0.1]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn same_seed_same_history_and_params() {
        let ds = synthetic(1);
        let train: Vec<usize> = (0..200).collect();
        let val: Vec<usize> = (200..250).collect();
        let (a, ha) = SuperLa::train(&ds, &train, &val, &small_config()).unwrap();
        let (b, hb) = SuperLa::train(&ds, &train, &val, &small_config()).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a.params.checksum(), b.params.checksum());
    }

    #[test]
    fn restored_checkpoint_has_minimal_validation_loss() {
        let ds = synthetic(2);
        let train: Vec<usize> = (0..200).collect();
        let val: Vec<usize> = (200..250).collect();
        let (model, history) = SuperLa::train(&ds, &train, &val, &small_config()).unwrap();
        let min = history
            .epochs
            .iter()
            .map(|e| e.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min, history.best_val_loss);

        let ctx = model.context(&ds).unwrap();
        let feats: Vec<(TaskFeatures, usize)> = val
            .iter()
            .map(|&t| (model.task_features(&ctx, &ds, t).unwrap(), ds.truth(t).unwrap()))
            .collect();
        let refs: Vec<(&TaskFeatures, usize)> = feats.iter().map(|(f, y)| (f, *y)).collect();
        let recomputed = network::mean_loss(&model.params, &refs).unwrap();
        assert_eq!(recomputed, history.best_val_loss);
    }

    #[test]
    fn training_loss_falls_early_on() {
        let ds = synthetic(3);
        let train: Vec<usize> = (0..200).collect();
        let val: Vec<usize> = (200..250).collect();
        let (_, history) = SuperLa::train(&ds, &train, &val, &small_config()).unwrap();
        let first: Vec<f64> = history.epochs.iter().take(5).map(|e| e.train_loss).collect();
        assert!(first.windows(2).all(|w| w[1] < w[0]), "{first:?}");
    }

    #[test]
    fn empty_training_split_is_an_error() {
        let ds = synthetic(4);
        assert!(matches!(
            SuperLa::train(&ds, &[], &[1, 2], &small_config()),
            Err(Error::EmptyTrainingSplit)
        ));
    }

    #[test]
    fn infer_skips_unannotated_tasks_and_leaves_params_alone() {
        use crate::dataset::Annotation;
        let base = synthetic(5);
        let mut anns: Vec<Annotation> = base.annotations().to_vec();
        anns.retain(|a| a.task != 299);
        let ds = Dataset::from_indices(
            300,
            base.num_annotators(),
            2,
            anns,
            base.truths().to_vec(),
        )
        .unwrap();
        let (model, _) = SuperLa::train(
            &ds,
            &(0..200).collect::<Vec<_>>(),
            &(200..250).collect::<Vec<_>>(),
            &small_config(),
        )
        .unwrap();
        let before = model.params.checksum();
        let out = model.infer(&ds, &(250..300).collect::<Vec<_>>()).unwrap();
        assert_eq!(out.skipped, vec![299]);
        assert_eq!(out.predictions.len(), 49);
        assert_eq!(model.params.checksum(), before);
    }

    #[test]
    fn different_choice_count_is_incompatible() {
        let ds = synthetic(6);
        let (model, _) = SuperLa::train(
            &ds,
            &(0..200).collect::<Vec<_>>(),
            &(200..250).collect::<Vec<_>>(),
            &small_config(),
        )
        .unwrap();
        let other = generate(&SynthConfig {
            num_tasks: 10,
            num_annotators: 5,
            num_choices: 3,
            redundancy: 2,
            accuracy: AccuracyLaw::Fixed(0.8),
            seed: 0,
        })
        .unwrap()
        .dataset;
        assert!(matches!(model.infer_all(&other), Err(Error::IncompatibleModel(_))));
    }
}
