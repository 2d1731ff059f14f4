//! The full trainable model: encoder parameters, the linear pairing head,
//! and the description texts whose embeddings act as class prototypes.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{DescriptionSet, EncoderParams};
use crate::linalg::Matrix;
use crate::pairing::LinearHead;
use crate::Result;

/// Lower clamp applied to the learnable temperature after every step.
pub const MIN_TEMPERATURE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionTexts {
    pub pair: String,
    pub unpair: String,
}

impl Default for DescriptionTexts {
    fn default() -> Self {
        Self {
            pair: "the opinion term describes the aspect term".into(),
            unpair: "the opinion term does not describe the aspect term".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: EncoderParams,
    pub head: LinearHead,
    pub descriptions: DescriptionTexts,
}

/// Fixed tensor order shared by the model, its gradients, the optimizer
/// state and checkpoints.
pub const TENSOR_NAMES: [&str; 9] = [
    "token_embeddings",
    "w_s",
    "b_s",
    "w_d",
    "b_d",
    "class_vector",
    "head_weights",
    "head_bias",
    "temperature",
];

impl Model {
    pub fn init(
        dim: usize,
        vocab_size: usize,
        mix_window: usize,
        temperature: f64,
        descriptions: DescriptionTexts,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams::init(dim, vocab_size, mix_window, temperature, &mut rng)?;
        let head = LinearHead::init(dim, &mut rng);
        Ok(Self {
            encoder,
            head,
            descriptions,
        })
    }

    pub fn description_set(&self) -> Result<DescriptionSet> {
        DescriptionSet::build(&self.descriptions.pair, &self.descriptions.unpair, &self.encoder)
    }

    /// All trainable tensors in the fixed [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("token_embeddings", self.encoder.token_embeddings.data()),
            ("w_s", self.encoder.w_s.data()),
            ("b_s", &self.encoder.b_s),
            ("w_d", self.encoder.w_d.data()),
            ("b_d", &self.encoder.b_d),
            ("class_vector", &self.encoder.class_vector),
            ("head_weights", &self.head.weights),
            ("head_bias", std::slice::from_ref(&self.head.bias)),
            ("temperature", std::slice::from_ref(&self.encoder.temperature)),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let Model { encoder, head, .. } = self;
        vec![
            ("token_embeddings", encoder.token_embeddings.data_mut()),
            ("w_s", encoder.w_s.data_mut()),
            ("b_s", &mut encoder.b_s),
            ("w_d", encoder.w_d.data_mut()),
            ("b_d", &mut encoder.b_d),
            ("class_vector", &mut encoder.class_vector),
            ("head_weights", &mut head.weights),
            ("head_bias", std::slice::from_mut(&mut head.bias)),
            ("temperature", std::slice::from_mut(&mut encoder.temperature)),
        ]
    }
}

/// Gradient accumulator mirroring the model's tensor shapes.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub token_embeddings: Matrix,
    pub w_s: Matrix,
    pub b_s: Vec<f64>,
    pub w_d: Matrix,
    pub b_d: Vec<f64>,
    pub class_vector: Vec<f64>,
    pub head_weights: Vec<f64>,
    pub head_bias: f64,
    pub temperature: f64,
}

impl ModelGrads {
    pub fn zeros(model: &Model) -> Self {
        let e = &model.encoder;
        Self {
            token_embeddings: Matrix::zeros(e.vocab_size, e.dim),
            w_s: Matrix::zeros(e.dim, 2 * e.dim),
            b_s: vec![0.0; e.dim],
            w_d: Matrix::zeros(e.dim, e.dim),
            b_d: vec![0.0; e.dim],
            class_vector: vec![0.0; e.dim],
            head_weights: vec![0.0; e.dim],
            head_bias: 0.0,
            temperature: 0.0,
        }
    }

    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("token_embeddings", self.token_embeddings.data()),
            ("w_s", self.w_s.data()),
            ("b_s", &self.b_s),
            ("w_d", self.w_d.data()),
            ("b_d", &self.b_d),
            ("class_vector", &self.class_vector),
            ("head_weights", &self.head_weights),
            ("head_bias", std::slice::from_ref(&self.head_bias)),
            ("temperature", std::slice::from_ref(&self.temperature)),
        ]
    }

    /// Name of the first tensor containing a non-finite value, if any.
    pub fn non_finite_tensor(&self) -> Option<&'static str> {
        self.tensors()
            .into_iter()
            .find(|(_, data)| data.iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seed_deterministic() {
        let a = Model::init(8, 32, 3, 0.07, DescriptionTexts::default(), 42).unwrap();
        let b = Model::init(8, 32, 3, 0.07, DescriptionTexts::default(), 42).unwrap();
        assert_eq!(a, b);
        let c = Model::init(8, 32, 3, 0.07, DescriptionTexts::default(), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn tensor_order_is_stable_and_shapes_match_grads() {
        let model = Model::init(8, 32, 3, 0.07, DescriptionTexts::default(), 1).unwrap();
        let grads = ModelGrads::zeros(&model);
        let names: Vec<&str> = model.tensors().iter().map(|(n, _)| *n).collect();
        assert_eq!(names, TENSOR_NAMES);
        for ((n1, p), (n2, g)) in model.tensors().iter().zip(grads.tensors().iter()) {
            assert_eq!(n1, n2);
            assert_eq!(p.len(), g.len(), "{n1}");
        }
    }

    #[test]
    fn biases_start_at_zero() {
        let model = Model::init(8, 32, 3, 0.07, DescriptionTexts::default(), 1).unwrap();
        assert!(model.encoder.b_s.iter().all(|v| *v == 0.0));
        assert!(model.encoder.b_d.iter().all(|v| *v == 0.0));
        assert_eq!(model.head.bias, 0.0);
    }

    #[test]
    fn non_finite_tensor_is_reported() {
        let model = Model::init(4, 16, 1, 0.07, DescriptionTexts::default(), 1).unwrap();
        let mut grads = ModelGrads::zeros(&model);
        assert!(grads.non_finite_tensor().is_none());
        grads.w_d.set(0, 0, f64::NAN);
        assert_eq!(grads.non_finite_tensor(), Some("w_d"));
    }
}
