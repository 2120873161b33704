//! Forward and reverse passes of the aggregator network.
//!
//! ```text
//! x1     = [acc_block, mean_emb(set_0), ..., mean_emb(set_{K-1})]
//! h1     = relu(W1 x1 + b1)
//! z      = dropout(relu(Wa [h1, multihot] + ba))
//! logits = Wb z + bb
//! ```
//!
//! The multi-hot vector is sparse, so its part of `Wa [h1, multihot]` is a sum
//! of the columns at the set positions.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::features::TaskFeatures;

/// Inverted dropout applied in training mode.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

/// Activations kept for the reverse pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub x1: Vec<f64>,
    pub h1: Vec<f64>,
    /// Post-ReLU output of the first MLP-2 layer, before dropout.
    pub z: Vec<f64>,
    /// Dropout multipliers (`0` or `1/(1-p)`); `None` in inference mode.
    pub mask: Option<Vec<f64>>,
    pub logits: Vec<f64>,
}

impl Forward {
    fn z_out(&self, i: usize) -> f64 {
        match &self.mask {
            Some(m) => self.z[i] * m[i],
            None => self.z[i],
        }
    }
}

pub fn check_features(params: &ModelParams, f: &TaskFeatures) -> Result<()> {
    let d = &params.dims;
    let layout = d.layout();
    if f.acc_block.len() != layout.acc_len() {
        return Err(Error::Dimension(format!(
            "accuracy block has {} values, model expects {}",
            f.acc_block.len(),
            layout.acc_len()
        )));
    }
    if f.choice_sets.len() != d.num_choices {
        return Err(Error::Dimension(format!(
            "{} choice sets for {} choices",
            f.choice_sets.len(),
            d.num_choices
        )));
    }
    if let Some(&i) = f.choice_sets.iter().flatten().find(|&&i| i > d.vocab_size) {
        return Err(Error::Dimension(format!(
            "annotator id {i} exceeds embedding rows {}",
            d.vocab_size + 1
        )));
    }
    if let Some(&p) = f.multihot.iter().find(|&&p| p >= layout.multihot_len()) {
        return Err(Error::Dimension(format!(
            "multi-hot bit {p} outside length {}",
            layout.multihot_len()
        )));
    }
    Ok(())
}

/// Mean embedding of each choice set, concatenated in choice order.
pub fn embed_choice_sets(params: &ModelParams, choice_sets: &[Vec<usize>]) -> Vec<f64> {
    let e = params.dims.embed_dim;
    let mut out = vec![0.0; choice_sets.len() * e];
    for (k, set) in choice_sets.iter().enumerate() {
        if set.is_empty() {
            continue;
        }
        let seg = &mut out[k * e..(k + 1) * e];
        for &i in set {
            for (s, x) in seg.iter_mut().zip(params.embedding_row(i)) {
                *s += x;
            }
        }
        let inv = 1.0 / set.len() as f64;
        seg.iter_mut().for_each(|s| *s *= inv);
    }
    out
}

pub fn forward(
    params: &ModelParams,
    f: &TaskFeatures,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<Forward> {
    check_features(params, f)?;
    let d = &params.dims;
    let o = &params.offsets;
    let w = &params.data;

    let mut x1 = Vec::with_capacity(d.in1());
    x1.extend_from_slice(&f.acc_block);
    x1.extend(embed_choice_sets(params, &f.choice_sets));

    let in1 = d.in1();
    let h1: Vec<f64> = (0..d.hidden1)
        .map(|j| {
            let row = &w[o.w1.start + j * in1..o.w1.start + (j + 1) * in1];
            relu(w[o.b1.start + j] + dot(row, &x1))
        })
        .collect();

    let in2 = d.in2();
    let z: Vec<f64> = (0..d.hidden2)
        .map(|j| {
            let row = &w[o.wa.start + j * in2..o.wa.start + (j + 1) * in2];
            let sparse: f64 = f.multihot.iter().map(|&p| row[d.hidden1 + p]).sum();
            relu(w[o.ba.start + j] + dot(&row[..d.hidden1], &h1) + sparse)
        })
        .collect();

    let mask = dropout.map(|dr| {
        let keep = 1.0 - dr.rate;
        (0..d.hidden2)
            .map(|_| {
                if dr.rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect::<Vec<f64>>()
    });

    let mut fwd = Forward {
        x1,
        h1,
        z,
        mask,
        logits: Vec::new(),
    };
    fwd.logits = (0..d.num_choices)
        .map(|c| {
            let row = &w[o.wb.start + c * d.hidden2..o.wb.start + (c + 1) * d.hidden2];
            w[o.bb.start + c]
                + row
                    .iter()
                    .enumerate()
                    .map(|(i, wi)| wi * fwd.z_out(i))
                    .sum::<f64>()
        })
        .collect();
    Ok(fwd)
}

/// Accumulates `d loss / d params` into `grads` given `d loss / d logits`.
#[allow(clippy::needless_range_loop)]
pub fn backward(
    params: &ModelParams,
    f: &TaskFeatures,
    fwd: &Forward,
    dlogits: &[f64],
    grads: &mut [f64],
) {
    let d = &params.dims;
    let o = &params.offsets;
    let w = &params.data;
    let (h1n, h2n, in1, in2) = (d.hidden1, d.hidden2, d.in1(), d.in2());

    // Output layer.
    let mut dz = vec![0.0; h2n];
    for (c, &g) in dlogits.iter().enumerate() {
        grads[o.bb.start + c] += g;
        let base = o.wb.start + c * h2n;
        for i in 0..h2n {
            grads[base + i] += g * fwd.z_out(i);
            dz[i] += g * w[base + i];
        }
    }
    // Through dropout and ReLU.
    for i in 0..h2n {
        if let Some(m) = &fwd.mask {
            dz[i] *= m[i];
        }
        if fwd.z[i] <= 0.0 {
            dz[i] = 0.0;
        }
    }

    // First MLP-2 layer.
    let mut dh1 = vec![0.0; h1n];
    for (j, &g) in dz.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        grads[o.ba.start + j] += g;
        let base = o.wa.start + j * in2;
        for i in 0..h1n {
            grads[base + i] += g * fwd.h1[i];
            dh1[i] += g * w[base + i];
        }
        for &p in &f.multihot {
            grads[base + h1n + p] += g;
        }
    }
    for i in 0..h1n {
        if fwd.h1[i] <= 0.0 {
            dh1[i] = 0.0;
        }
    }

    // MLP-1.
    let mut dx1 = vec![0.0; in1];
    for (j, &g) in dh1.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        grads[o.b1.start + j] += g;
        let base = o.w1.start + j * in1;
        for i in 0..in1 {
            grads[base + i] += g * fwd.x1[i];
            dx1[i] += g * w[base + i];
        }
    }

    // Mean-pooled embeddings.
    let e = d.embed_dim;
    let acc_len = f.acc_block.len();
    for (k, set) in f.choice_sets.iter().enumerate() {
        if set.is_empty() {
            continue;
        }
        let seg = &dx1[acc_len + k * e..acc_len + (k + 1) * e];
        let inv = 1.0 / set.len() as f64;
        for &row in set {
            let base = o.embedding.start + row * e;
            for (t, g) in seg.iter().enumerate() {
                grads[base + t] += g * inv;
            }
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|x| x / sum).collect()
}

/// `-log softmax(logits)[truth]`.
pub fn cross_entropy(logits: &[f64], truth: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[truth]
}

/// Mean cross-entropy over `batch` and its gradient with respect to every
/// parameter. Weight decay is not part of this gradient.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &[(&TaskFeatures, usize)],
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = vec![0.0; params.data.len()];
    let mut loss = 0.0;
    for &(f, truth) in batch {
        let fwd = forward(params, f, dropout.as_deref_mut())?;
        loss += cross_entropy(&fwd.logits, truth);
        let mut dlogits = softmax(&fwd.logits);
        dlogits[truth] -= 1.0;
        dlogits.iter_mut().for_each(|g| *g *= scale);
        backward(params, f, &fwd, &dlogits, &mut grads);
    }
    Ok((loss * scale, grads))
}

/// Mean cross-entropy in inference mode.
pub fn mean_loss(params: &ModelParams, data: &[(&TaskFeatures, usize)]) -> Result<f64> {
    let mut total = 0.0;
    for &(f, truth) in data {
        total += cross_entropy(&forward(params, f, None)?.logits, truth);
    }
    Ok(total / data.len().max(1) as f64)
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
