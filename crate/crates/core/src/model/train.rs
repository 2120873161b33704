use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{loss_and_grad, mean_loss, Dropout};
use super::optim::AdamW;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::features::TaskFeatures;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub dropout: f64,
    pub patience: usize,
    pub replication: usize,
    pub max_epochs: usize,
    pub embed_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 1024,
            weight_decay: 0.001,
            dropout: 0.5,
            patience: 5,
            replication: 10,
            max_epochs: 200,
            embed_dim: 8,
            hidden1: 16,
            hidden2: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 11] = [
        "learning_rate",
        "batch_size",
        "weight_decay",
        "dropout",
        "patience",
        "replication",
        "max_epochs",
        "embed_dim",
        "hidden1",
        "hidden2",
        "seed",
    ];

    pub fn validate(&self) -> Result<()> {
        let rate_ok = |x: f64| x > 0.0 && x <= 1.0;
        let bad = |what: &str| Err(Error::Config(what.to_owned()));
        if !rate_ok(self.learning_rate) {
            return bad("learning_rate must be in (0, 1]");
        }
        if !rate_ok(self.weight_decay) {
            return bad("weight_decay must be in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.batch_size == 0 || self.replication == 0 || self.max_epochs == 0 {
            return bad("batch_size, replication and max_epochs must be positive");
        }
        if self.embed_dim == 0 || self.hidden1 == 0 || self.hidden2 == 0 {
            return bad("layer sizes must be positive");
        }
        Ok(())
    }

    /// Applies a flat `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
        }
        match key {
            "learning_rate" | "lr" => self.learning_rate = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "replication" => self.replication = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "hidden1" => self.hidden1 = parse(key, value)?,
            "hidden2" => self.hidden2 = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => {
                return Err(Error::Config(format!(
                    "unknown key `{key}`; expected one of {}",
                    Self::KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Every field as `(key, value)`, for echoing the effective configuration.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("dropout", self.dropout.to_string()),
            ("patience", self.patience.to_string()),
            ("replication", self.replication.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("hidden1", self.hidden1.to_string()),
            ("hidden2", self.hidden2.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_loss));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Waiting,
    Stop,
}

/// Patience counter on a monitored loss. Only strict improvements reset it.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    wait: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
            epoch: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> Verdict {
        let epoch = self.epoch;
        self.epoch += 1;
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.wait = 0;
            Verdict::Improved
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Waiting
            }
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Minibatch AdamW over `train`, early-stopped on the `val` loss. Returns the
/// parameters of the best validation epoch. When `val` is empty the
/// (unaugmented) training loss is monitored instead.
pub(crate) fn fit(
    mut params: ModelParams,
    train: &[(TaskFeatures, usize)],
    monitor: &[(&TaskFeatures, usize)],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(ModelParams, TrainHistory)> {
    if train.is_empty() {
        return Err(Error::EmptyTrainingSplit);
    }
    let mut opt = AdamW::new(params.data.len(), config.learning_rate, config.weight_decay);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = params.clone();
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopped_early = false;

    for epoch in 0..config.max_epochs {
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&TaskFeatures, usize)> =
                chunk.iter().map(|&i| (&train[i].0, train[i].1)).collect();
            let mut dropout = Dropout {
                rate: config.dropout,
                rng: &mut *rng,
            };
            let dropout = (config.dropout > 0.0).then_some(&mut dropout);
            let (loss, grads) = loss_and_grad(&params, &batch, dropout)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    what: "training loss",
                    epoch,
                });
            }
            opt.step(&mut params.data, &grads);
            if !params.all_finite() {
                return Err(Error::NonFinite {
                    what: "parameters",
                    epoch,
                });
            }
            loss_sum += loss;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;
        let val_loss = mean_loss(&params, monitor)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite {
                what: "validation loss",
                epoch,
            });
        }
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        match stopper.observe(val_loss) {
            Verdict::Improved => best.data.copy_from_slice(&params.data),
            Verdict::Waiting => {}
            Verdict::Stop => {
                stopped_early = true;
                break;
            }
        }
    }

    Ok((
        best,
        TrainHistory {
            epochs,
            best_epoch: stopper.best_epoch(),
            best_val_loss: stopper.best(),
            stopped_early,
        },
    ))
}
