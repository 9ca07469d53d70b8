//! The recommender: hypergraph attention layers, last-item-query session
//! attention, and full-softmax next-item scoring.

pub mod attention;
mod backward;
mod forward;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::ModelError;
use crate::linalg::Mat;

pub use attention::{normalize_attention, scaled_dot};
pub use backward::{backward, logit_gradient};
pub use forward::{
    edge_aggregate, forward_batch, hgat_forward, node_update, predict_topk, rank_logits, score_and_loss,
    session_attention, session_logits, DecoderTrace, DropoutSource, ForwardTrace, LayerTrace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Hypergraph attention stack feeding the session encoder.
    FullShare,
    /// Static embeddings fed straight into the session encoder.
    NoHypergraph,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::FullShare => "full-share",
            Variant::NoHypergraph => "no-hypergraph",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full-share" | "share" => Ok(Variant::FullShare),
            "no-hypergraph" => Ok(Variant::NoHypergraph),
            other => Err(ModelError::InvalidConfig(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub num_layers: usize,
    pub max_window: usize,
    pub dropout_rate: f64,
    pub l2_coefficient: f64,
    pub variant: Variant,
    pub rng_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 100,
            num_layers: 1,
            max_window: 3,
            dropout_rate: 0.3,
            l2_coefficient: 1e-6,
            variant: Variant::FullShare,
            rng_seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.embed_dim < 1 {
            return Err(ModelError::InvalidConfig("embed_dim must be >= 1".into()));
        }
        if self.num_layers < 1 {
            return Err(ModelError::InvalidConfig("num_layers must be >= 1".into()));
        }
        if self.max_window < 2 {
            return Err(ModelError::WindowTooSmall(self.max_window));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::InvalidConfig(
                "dropout_rate must lie in [0, 1)".into(),
            ));
        }
        if !(self.l2_coefficient >= 0.0) {
            return Err(ModelError::InvalidConfig(
                "l2_coefficient must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Number of hypergraph attention layers actually instantiated.
    pub fn effective_layers(&self) -> usize {
        match self.variant {
            Variant::FullShare => self.num_layers,
            Variant::NoHypergraph => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HgatLayerParams {
    pub w1: Mat,
    pub w1_hat: Mat,
    pub w2: Mat,
    pub w2_hat: Mat,
    pub w3: Mat,
    /// Node-level context vector.
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub w_q: Mat,
    pub w_k: Mat,
    pub w_v: Mat,
}

/// All trainable tensors. Also used as the container for gradients and
/// optimizer moments, which share its shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embeddings: Mat,
    pub layers: Vec<HgatLayerParams>,
    pub decoder: DecoderParams,
}

impl ModelParams {
    /// Uniform initialization in `[-1/√D, 1/√D]`.
    pub fn init(config: &ModelConfig, num_items: usize) -> Result<Self, ModelError> {
        config.validate()?;
        if num_items == 0 {
            return Err(ModelError::InvalidConfig("vocabulary is empty".into()));
        }
        let d = config.embed_dim;
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let embeddings = Mat::uniform(num_items, d, bound, &mut rng);
        let layers = (0..config.effective_layers())
            .map(|_| HgatLayerParams {
                w1: Mat::uniform(d, d, bound, &mut rng),
                w1_hat: Mat::uniform(d, d, bound, &mut rng),
                w2: Mat::uniform(d, d, bound, &mut rng),
                w2_hat: Mat::uniform(d, d, bound, &mut rng),
                w3: Mat::uniform(d, d, bound, &mut rng),
                u: Mat::uniform(1, d, bound, &mut rng).as_slice().to_vec(),
            })
            .collect();
        let decoder = DecoderParams {
            w_q: Mat::uniform(d, d, bound, &mut rng),
            w_k: Mat::uniform(d, d, bound, &mut rng),
            w_v: Mat::uniform(d, d, bound, &mut rng),
        };
        Ok(Self {
            embeddings,
            layers,
            decoder,
        })
    }

    pub fn zeros_like(other: &ModelParams) -> Self {
        let z = |m: &Mat| Mat::zeros(m.rows(), m.cols());
        Self {
            embeddings: z(&other.embeddings),
            layers: other
                .layers
                .iter()
                .map(|l| HgatLayerParams {
                    w1: z(&l.w1),
                    w1_hat: z(&l.w1_hat),
                    w2: z(&l.w2),
                    w2_hat: z(&l.w2_hat),
                    w3: z(&l.w3),
                    u: vec![0.0; l.u.len()],
                })
                .collect(),
            decoder: DecoderParams {
                w_q: z(&other.decoder.w_q),
                w_k: z(&other.decoder.w_k),
                w_v: z(&other.decoder.w_v),
            },
        }
    }

    pub fn num_items(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.embeddings.cols()
    }

    /// Named flat views of every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, [usize; 2], &[f64])> {
        fn m(name: String, mat: &Mat) -> (String, [usize; 2], &[f64]) {
            (name, [mat.rows(), mat.cols()], mat.as_slice())
        }
        let mut out: Vec<(String, [usize; 2], &[f64])> = Vec::new();
        out.push(m("embeddings".into(), &self.embeddings));
        for (l, layer) in self.layers.iter().enumerate() {
            out.push(m(format!("layer{l}.w1"), &layer.w1));
            out.push(m(format!("layer{l}.w1_hat"), &layer.w1_hat));
            out.push(m(format!("layer{l}.w2"), &layer.w2));
            out.push(m(format!("layer{l}.w2_hat"), &layer.w2_hat));
            out.push(m(format!("layer{l}.w3"), &layer.w3));
            out.push((format!("layer{l}.u"), [1, layer.u.len()], &layer.u));
        }
        out.push(m("decoder.w_q".into(), &self.decoder.w_q));
        out.push(m("decoder.w_k".into(), &self.decoder.w_k));
        out.push(m("decoder.w_v".into(), &self.decoder.w_v));
        out
    }

    /// Mutable flat views, same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.embeddings.as_mut_slice()];
        for layer in &mut self.layers {
            out.push(layer.w1.as_mut_slice());
            out.push(layer.w1_hat.as_mut_slice());
            out.push(layer.w2.as_mut_slice());
            out.push(layer.w2_hat.as_mut_slice());
            out.push(layer.w3.as_mut_slice());
            out.push(&mut layer.u);
        }
        out.push(self.decoder.w_q.as_mut_slice());
        out.push(self.decoder.w_k.as_mut_slice());
        out.push(self.decoder.w_v.as_mut_slice());
        out
    }

    pub fn tensor_names(&self) -> Vec<String> {
        self.tensors().into_iter().map(|(n, _, _)| n).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, _, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn check_item(&self, index: usize) -> Result<(), ModelError> {
        if index >= self.num_items() {
            return Err(ModelError::ItemOutOfRange {
                index,
                num_items: self.num_items(),
            });
        }
        Ok(())
    }
}
