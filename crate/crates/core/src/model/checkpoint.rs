//! Versioned JSON checkpoints. Floats are written in shortest round-trip form
//! and parsed exactly, so a reloaded model predicts bit-identically.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{KnownAnnotator, ModelDims, ModelParams, SuperLa, TrainConfig};
use crate::error::{Error, Result};

const FORMAT: &str = "superla-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    dims: ModelDims,
    labels: Vec<String>,
    annotators: Vec<KnownAnnotator>,
    global_mean_acc: f64,
    config: TrainConfig,
    params: Vec<f64>,
}

impl SuperLa {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ckpt = Checkpoint {
            format: FORMAT.to_owned(),
            version: VERSION,
            dims: self.params.dims,
            labels: self.labels.clone(),
            annotators: self.annotators.clone(),
            global_mean_acc: self.global_mean_acc,
            config: self.config.clone(),
            params: self.params.data.clone(),
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &ckpt)?;
        w.write_all(b"\n")
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
        if ckpt.format != FORMAT || ckpt.version != VERSION {
            return Err(Error::IncompatibleModel(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        if ckpt.annotators.len() != ckpt.dims.vocab_size || ckpt.labels.len() != ckpt.dims.num_choices
        {
            return Err(Error::IncompatibleModel(
                "vocabulary sizes disagree with the recorded dimensions".into(),
            ));
        }
        let params = ModelParams::from_data(ckpt.dims, ckpt.params).ok_or_else(|| {
            Error::IncompatibleModel("parameter count disagrees with the recorded dimensions".into())
        })?;
        Ok(SuperLa {
            params,
            labels: ckpt.labels,
            annotators: ckpt.annotators,
            global_mean_acc: ckpt.global_mean_acc,
            config: ckpt.config,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, AccuracyLaw, SynthConfig};

    #[test]
    fn save_load_round_trip_is_exact() {
        let ds = generate(&SynthConfig {
            num_tasks: 120,
            num_annotators: 8,
            num_choices: 3,
            redundancy: 3,
            accuracy: AccuracyLaw::Uniform { lo: 0.5, hi: 0.9 },
            seed: 8,
        })
        .unwrap()
        .dataset;
        let cfg = TrainConfig {
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let train: Vec<usize> = (0..80).collect();
        let val: Vec<usize> = (80..100).collect();
        let (model, _) = SuperLa::train(&ds, &train, &val, &cfg).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = SuperLa::load(&path).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(
            loaded.infer_all(&ds).unwrap(),
            model.infer_all(&ds).unwrap()
        );

        let path2 = dir.path().join("again.json");
        loaded.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn garbage_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\"format\":\"other\"}").unwrap();
        assert!(SuperLa::load(&path).is_err());
    }
}
