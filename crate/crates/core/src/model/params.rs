use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::features::FeatureLayout;

/// Shape of the aggregator network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub num_choices: usize,
    /// Known annotators `N`; the embedding table has `N + 1` rows.
    pub vocab_size: usize,
    pub l_max: usize,
    pub embed_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl ModelDims {
    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout {
            num_choices: self.num_choices,
            l_max: self.l_max,
            vocab_size: self.vocab_size,
        }
    }

    /// Width of the first MLP input: accuracy block plus pooled embeddings.
    pub fn in1(&self) -> usize {
        (self.num_choices + 1) * self.l_max + self.num_choices * self.embed_dim
    }

    /// Width of the second MLP input: `h1` plus the multi-hot vector.
    pub fn in2(&self) -> usize {
        self.hidden1 + self.num_choices * self.vocab_size
    }

    pub fn offsets(&self) -> Offsets {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let embedding = take((self.vocab_size + 1) * self.embed_dim);
        let w1 = take(self.hidden1 * self.in1());
        let b1 = take(self.hidden1);
        let wa = take(self.hidden2 * self.in2());
        let ba = take(self.hidden2);
        let wb = take(self.num_choices * self.hidden2);
        let bb = take(self.num_choices);
        Offsets {
            embedding,
            w1,
            b1,
            wa,
            ba,
            wb,
            bb,
            total: at,
        }
    }
}

/// Ranges of each tensor inside the flat parameter buffer. Weights are stored
/// row-major as `out x in`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Offsets {
    pub embedding: Range<usize>,
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub wa: Range<usize>,
    pub ba: Range<usize>,
    pub wb: Range<usize>,
    pub bb: Range<usize>,
    pub total: usize,
}

impl Offsets {
    pub fn tensors(&self) -> [(&'static str, Range<usize>); 7] {
        [
            ("embedding", self.embedding.clone()),
            ("mlp1.weight", self.w1.clone()),
            ("mlp1.bias", self.b1.clone()),
            ("mlp2a.weight", self.wa.clone()),
            ("mlp2a.bias", self.ba.clone()),
            ("mlp2b.weight", self.wb.clone()),
            ("mlp2b.bias", self.bb.clone()),
        ]
    }
}

/// All trainable values in one contiguous buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub offsets: Offsets,
    pub data: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        let offsets = dims.offsets();
        ModelParams {
            dims,
            data: vec![0.0; offsets.total],
            offsets,
        }
    }

    /// Weights uniform in `±sqrt(1/fan_in)`, biases zero, embeddings `N(0, 0.1)`.
    pub fn init<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Self {
        let mut p = Self::zeros(dims);
        let normal = Normal::new(0.0, 0.1).expect("valid normal");
        for x in &mut p.data[p.offsets.embedding.clone()] {
            *x = normal.sample(rng);
        }
        for (range, fan_in) in [
            (p.offsets.w1.clone(), dims.in1()),
            (p.offsets.wa.clone(), dims.in2()),
            (p.offsets.wb.clone(), dims.hidden2),
        ] {
            let bound = (1.0 / fan_in.max(1) as f64).sqrt();
            let u = Uniform::new_inclusive(-bound, bound).expect("valid bound");
            for x in &mut p.data[range] {
                *x = u.sample(rng);
            }
        }
        p
    }

    pub fn from_data(dims: ModelDims, data: Vec<f64>) -> Option<Self> {
        let offsets = dims.offsets();
        (data.len() == offsets.total).then_some(ModelParams {
            dims,
            offsets,
            data,
        })
    }

    pub fn embedding_row(&self, row: usize) -> &[f64] {
        let d = self.dims.embed_dim;
        let start = self.offsets.embedding.start + row * d;
        &self.data[start..start + d]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// FNV-1a over the raw bytes of every parameter.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for x in &self.data {
            for b in x.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}
