//! A small trainable text encoder and the span/pair/description embedding
//! operations built on top of it.
//!
//! The encoder stands in for a large pretrained model while honoring the
//! same contracts: it maps an n-token sentence to an n x d matrix of hidden
//! states (here, window-averaged hashed token embeddings), span
//! representations are average-pooled hidden states, pair embeddings are a
//! linear projection of the concatenated span vectors, and description
//! embeddings come from a pooled class vector passed through its own linear
//! head.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Sentence, Span};
use crate::linalg::{axpy, Matrix};
use crate::model::ModelGrads;
use crate::{Error, Result};

/// Trainable parameters of the encoder side of the model.
///
/// `temperature` is the contrastive softmax temperature; it is learnable and
/// clamped from below by the trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub dim: usize,
    pub vocab_size: usize,
    /// Odd width of the local context window mixed into each hidden state.
    pub mix_window: usize,
    /// vocab_size x dim hashed token embedding table.
    pub token_embeddings: Matrix,
    /// dim x 2*dim pair projection.
    pub w_s: Matrix,
    pub b_s: Vec<f64>,
    /// dim x dim description projection.
    pub w_d: Matrix,
    pub b_d: Vec<f64>,
    /// Synthetic class-token embedding added to pooled description tokens.
    pub class_vector: Vec<f64>,
    pub temperature: f64,
}

impl EncoderParams {
    /// Seeded initialization: weight matrices, embeddings and the class
    /// vector are uniform in [-1/sqrt(d), 1/sqrt(d)); biases start at zero.
    pub fn init(
        dim: usize,
        vocab_size: usize,
        mix_window: usize,
        temperature: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if dim == 0 || vocab_size == 0 {
            return Err(Error::InvalidSpec("dim and vocab_size must be positive".into()));
        }
        if mix_window == 0 || mix_window % 2 == 0 {
            return Err(Error::InvalidSpec(format!(
                "mix_window must be a positive odd integer, got {mix_window}"
            )));
        }
        if temperature <= 0.0 {
            return Err(Error::InvalidSpec("temperature must be positive".into()));
        }
        let bound = 1.0 / (dim as f64).sqrt();
        let mut fill = |m: &mut [f64]| {
            for v in m.iter_mut() {
                *v = rng.gen_range(-bound..bound);
            }
        };
        let mut token_embeddings = Matrix::zeros(vocab_size, dim);
        fill(token_embeddings.data_mut());
        let mut w_s = Matrix::zeros(dim, 2 * dim);
        fill(w_s.data_mut());
        let mut w_d = Matrix::zeros(dim, dim);
        fill(w_d.data_mut());
        let mut class_vector = vec![0.0; dim];
        fill(&mut class_vector);
        Ok(Self {
            dim,
            vocab_size,
            mix_window,
            token_embeddings,
            w_s,
            b_s: vec![0.0; dim],
            w_d,
            b_d: vec![0.0; dim],
            class_vector,
            temperature,
        })
    }

    /// Stable hash of a token into the embedding table (FNV-1a).
    pub fn token_bucket(&self, token: &str) -> usize {
        (fnv1a64(token) % self.vocab_size as u64) as usize
    }
}

fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Hidden states for one sentence: row i is the representation of token i.
#[derive(Debug, Clone)]
pub struct EncodedSentence {
    pub hidden: Matrix,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.hidden.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.rows() == 0
    }
}

/// Encode a sentence: row i is the mean of the hashed token embeddings in
/// the `mix_window`-wide window centered at i, clipped at sentence edges.
pub fn encode_tokens(s: &Sentence, p: &EncoderParams) -> EncodedSentence {
    let n = s.len();
    let mut hidden = Matrix::zeros(n, p.dim);
    let radius = (p.mix_window - 1) / 2;
    for i in 0..n {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(n - 1);
        let weight = 1.0 / (hi - lo + 1) as f64;
        let row = hidden.row_mut(i);
        for j in lo..=hi {
            let bucket = p.token_bucket(s.token(j));
            axpy(row, weight, p.token_embeddings.row(bucket));
        }
    }
    EncodedSentence { hidden }
}

/// Scatter a gradient w.r.t. the hidden states back into the embedding table.
pub(crate) fn encode_tokens_backward(
    s: &Sentence,
    p: &EncoderParams,
    d_hidden: &Matrix,
    grads: &mut ModelGrads,
) {
    let n = s.len();
    let radius = (p.mix_window - 1) / 2;
    for i in 0..n {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(n - 1);
        let weight = 1.0 / (hi - lo + 1) as f64;
        for j in lo..=hi {
            let bucket = p.token_bucket(s.token(j));
            axpy(grads.token_embeddings.row_mut(bucket), weight, d_hidden.row(i));
        }
    }
}

/// Average-pool the hidden states of a span into one vector.
pub fn pool_span(enc: &EncodedSentence, span: Span) -> Result<Vec<f64>> {
    if span.start > span.end || span.end >= enc.len() {
        return Err(Error::BadSpan {
            start: span.start,
            end: span.end,
            len: enc.len(),
        });
    }
    let mut out = vec![0.0; enc.hidden.cols()];
    let weight = 1.0 / span.len() as f64;
    for i in span.indices() {
        axpy(&mut out, weight, enc.hidden.row(i));
    }
    Ok(out)
}

pub(crate) fn pool_span_backward(span: Span, d_pooled: &[f64], d_hidden: &mut Matrix) {
    let weight = 1.0 / span.len() as f64;
    for i in span.indices() {
        axpy(d_hidden.row_mut(i), weight, d_pooled);
    }
}

/// Pair embedding: a linear map of the concatenated span vectors,
/// `h_c = W_s (h_a ⊕ h_o) + b_s`.
pub fn pair_embed(h_a: &[f64], h_o: &[f64], p: &EncoderParams) -> Result<Vec<f64>> {
    if h_a.len() != p.dim || h_o.len() != p.dim {
        return Err(Error::DimMismatch(format!(
            "pair_embed expects two vectors of dim {}, got {} and {}",
            p.dim,
            h_a.len(),
            h_o.len()
        )));
    }
    let mut x = Vec::with_capacity(2 * p.dim);
    x.extend_from_slice(h_a);
    x.extend_from_slice(h_o);
    let mut out = p.w_s.matvec(&x)?;
    axpy(&mut out, 1.0, &p.b_s);
    Ok(out)
}

/// Backward pass of [`pair_embed`]: accumulates W_s and b_s gradients and
/// returns the gradient w.r.t. the two input span vectors.
pub(crate) fn pair_embed_backward(
    x: &[f64],
    p: &EncoderParams,
    d_out: &[f64],
    grads: &mut ModelGrads,
) -> Result<(Vec<f64>, Vec<f64>)> {
    grads.w_s.add_outer(d_out, x, 1.0);
    axpy(&mut grads.b_s, 1.0, d_out);
    let d_x = p.w_s.matvec_transpose(d_out)?;
    let (d_a, d_o) = d_x.split_at(p.dim);
    Ok((d_a.to_vec(), d_o.to_vec()))
}

/// Embed a description text: the class vector plus the mean hashed token
/// embedding, projected through the description head,
/// `d_k = W_d (class + mean emb) + b_d`.
pub fn describe(text: &str, p: &EncoderParams) -> Result<Vec<f64>> {
    let pooled = describe_pooled(text, p)?;
    let mut out = p.w_d.matvec(&pooled)?;
    axpy(&mut out, 1.0, &p.b_d);
    Ok(out)
}

fn describe_pooled(text: &str, p: &EncoderParams) -> Result<Vec<f64>> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(Error::EmptyDescription);
    }
    let mut pooled = p.class_vector.clone();
    let weight = 1.0 / tokens.len() as f64;
    for tok in &tokens {
        axpy(&mut pooled, weight, p.token_embeddings.row(p.token_bucket(tok)));
    }
    Ok(pooled)
}

pub(crate) fn describe_backward(
    text: &str,
    p: &EncoderParams,
    d_out: &[f64],
    grads: &mut ModelGrads,
) -> Result<()> {
    let pooled = describe_pooled(text, p)?;
    grads.w_d.add_outer(d_out, &pooled, 1.0);
    axpy(&mut grads.b_d, 1.0, d_out);
    let d_pooled = p.w_d.matvec_transpose(d_out)?;
    axpy(&mut grads.class_vector, 1.0, &d_pooled);
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let weight = 1.0 / tokens.len() as f64;
    for tok in &tokens {
        let bucket = p.token_bucket(tok);
        axpy(grads.token_embeddings.row_mut(bucket), weight, &d_pooled);
    }
    Ok(())
}

/// The two description prototypes with their current embeddings.
#[derive(Debug, Clone)]
pub struct DescriptionSet {
    pub pair_text: String,
    pub unpair_text: String,
    pub d_pair: Vec<f64>,
    pub d_unpair: Vec<f64>,
}

impl DescriptionSet {
    pub fn build(pair_text: &str, unpair_text: &str, p: &EncoderParams) -> Result<Self> {
        Ok(Self {
            pair_text: pair_text.to_string(),
            unpair_text: unpair_text.to_string(),
            d_pair: describe(pair_text, p)?,
            d_unpair: describe(unpair_text, p)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_dataset_line;
    use rand_chacha::rand_core::SeedableRng;

    fn params(dim: usize, mix_window: usize, seed: u64) -> EncoderParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EncoderParams::init(dim, 128, mix_window, 0.07, &mut rng).unwrap()
    }

    fn sentence(text: &str) -> Sentence {
        parse_dataset_line(&format!("{text}####[]")).unwrap()
    }

    #[test]
    fn single_token_sentence_is_its_embedding() {
        let p = params(8, 3, 1);
        let s = sentence("hello");
        let enc = encode_tokens(&s, &p);
        assert_eq!(enc.hidden.row(0), p.token_embeddings.row(p.token_bucket("hello")));
    }

    #[test]
    fn window_one_is_identity_mixing() {
        let p = params(8, 1, 2);
        let s = sentence("a b c");
        let enc = encode_tokens(&s, &p);
        for (i, tok) in ["a", "b", "c"].iter().enumerate() {
            assert_eq!(enc.hidden.row(i), p.token_embeddings.row(p.token_bucket(tok)));
        }
    }

    #[test]
    fn encoding_is_deterministic_and_shape_nd() {
        let p = params(8, 3, 3);
        let s1 = sentence("the screen is great");
        let s2 = sentence("the screen is great");
        let e1 = encode_tokens(&s1, &p);
        let e2 = encode_tokens(&s2, &p);
        assert_eq!(e1.hidden, e2.hidden);
        assert_eq!(e1.hidden.rows(), 4);
        assert_eq!(e1.hidden.cols(), 8);
    }

    #[test]
    fn pool_span_averages_rows() {
        let enc = EncodedSentence {
            hidden: Matrix::from_rows(&[vec![1.0, 3.0], vec![3.0, 5.0]]),
        };
        assert_eq!(pool_span(&enc, Span::new(0, 1)).unwrap(), vec![2.0, 4.0]);
        assert_eq!(pool_span(&enc, Span::new(1, 1)).unwrap(), vec![3.0, 5.0]);
    }

    #[test]
    fn pool_span_rejects_bad_spans() {
        let enc = EncodedSentence {
            hidden: Matrix::zeros(3, 2),
        };
        assert!(matches!(pool_span(&enc, Span { start: 2, end: 1 }), Err(Error::BadSpan { .. })));
        assert!(matches!(pool_span(&enc, Span::new(1, 3)), Err(Error::BadSpan { .. })));
    }

    #[test]
    fn whole_sentence_pool_is_column_mean() {
        let p = params(6, 3, 4);
        let s = sentence("one two three four");
        let enc = encode_tokens(&s, &p);
        let pooled = pool_span(&enc, Span::new(0, 3)).unwrap();
        for c in 0..6 {
            let mean = (0..4).map(|r| enc.hidden.get(r, c)).sum::<f64>() / 4.0;
            assert!((pooled[c] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_embed_identity_block_selects_left() {
        let dim = 3;
        let mut p = params(dim, 1, 5);
        p.w_s = Matrix::zeros(dim, 2 * dim);
        for i in 0..dim {
            p.w_s.set(i, i, 1.0);
        }
        p.b_s = vec![0.0; dim];
        let h_a = vec![1.0, 2.0, 3.0];
        let h_o = vec![9.0, 9.0, 9.0];
        assert_eq!(pair_embed(&h_a, &h_o, &p).unwrap(), h_a);
    }

    #[test]
    fn pair_embed_zero_weights_returns_bias() {
        let dim = 2;
        let mut p = params(dim, 1, 6);
        p.w_s = Matrix::zeros(dim, 2 * dim);
        p.b_s = vec![0.5, -0.5];
        assert_eq!(pair_embed(&[1.0, 1.0], &[2.0, 2.0], &p).unwrap(), vec![0.5, -0.5]);
    }

    #[test]
    fn pair_embed_matches_naive_matmul() {
        let dim = 5;
        let p = params(dim, 1, 7);
        let h_a: Vec<f64> = (0..dim).map(|i| (i as f64 * 0.7).sin()).collect();
        let h_o: Vec<f64> = (0..dim).map(|i| (i as f64 * 1.3).cos()).collect();
        let got = pair_embed(&h_a, &h_o, &p).unwrap();
        // Independent triple-loop recomputation.
        for i in 0..dim {
            let mut want = p.b_s[i];
            for j in 0..dim {
                want += p.w_s.get(i, j) * h_a[j];
                want += p.w_s.get(i, dim + j) * h_o[j];
            }
            assert!((got[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_embed_rejects_wrong_dims() {
        let p = params(4, 1, 8);
        assert!(matches!(
            pair_embed(&[1.0; 3], &[1.0; 4], &p),
            Err(Error::DimMismatch(_))
        ));
    }

    #[test]
    fn pair_embed_is_affine_in_inputs() {
        let dim = 4;
        let p = params(dim, 1, 9);
        let u = vec![0.3, -0.2, 0.9, 0.1];
        let v = vec![-0.5, 0.8, 0.2, -0.1];
        let alpha = 2.5;
        let base = pair_embed(&u, &v, &p).unwrap();
        let scaled_in: (Vec<f64>, Vec<f64>) = (
            u.iter().map(|x| alpha * x).collect(),
            v.iter().map(|x| alpha * x).collect(),
        );
        let scaled = pair_embed(&scaled_in.0, &scaled_in.1, &p).unwrap();
        for i in 0..dim {
            let lhs = scaled[i] - p.b_s[i];
            let rhs = alpha * (base[i] - p.b_s[i]);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn describe_identity_head_returns_token_embedding() {
        let dim = 4;
        let mut p = params(dim, 1, 10);
        p.w_d = Matrix::zeros(dim, dim);
        for i in 0..dim {
            p.w_d.set(i, i, 1.0);
        }
        p.b_d = vec![0.0; dim];
        p.class_vector = vec![0.0; dim];
        let got = describe("word", &p).unwrap();
        assert_eq!(got, p.token_embeddings.row(p.token_bucket("word")));
    }

    #[test]
    fn describe_is_deterministic_and_distinct_for_defaults() {
        let p = params(16, 1, 11);
        let a = describe("the opinion term describes the aspect term", &p).unwrap();
        let b = describe("the opinion term describes the aspect term", &p).unwrap();
        let c = describe("the opinion term does not describe the aspect term", &p).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn describe_rejects_empty_text() {
        let p = params(4, 1, 12);
        assert!(matches!(describe("   ", &p), Err(Error::EmptyDescription)));
    }

    #[test]
    fn init_rejects_even_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(EncoderParams::init(4, 16, 2, 0.07, &mut rng).is_err());
    }
}
