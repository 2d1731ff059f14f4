//! Pairing strategies and loss functions.
//!
//! A candidate pair is any combination of a gold aspect span with a gold
//! opinion span; it is labeled matched when the combination appears in the
//! sentence's gold triplets. Three strategies decide whether a candidate is
//! a real pair:
//!
//! * random selection — a fair coin from a seeded stream,
//! * a linear head — sigmoid score on the pair embedding,
//! * contrastive — cosine proximity to the "pair" versus "unpair"
//!   description prototypes, trained with a temperature-scaled softmax
//!   objective that pulls matched pairs toward the pair description and
//!   pushes mismatched pairs away from it (and symmetrically for the
//!   unpair description, with in-batch negatives).
//!
//! Losses return analytic gradients; the trainer composes them with the
//! encoder backward passes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Sentence, Span};
use crate::encoder::{pair_embed, pool_span, DescriptionSet, EncodedSentence, EncoderParams};
use crate::linalg::{axpy, dot, norm};
use crate::{Error, Result};

const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairLabel {
    Matched,
    Mismatched,
}

impl PairLabel {
    pub fn is_matched(self) -> bool {
        matches!(self, Self::Matched)
    }
}

/// One candidate pair: its embedding, gold label and provenance.
#[derive(Debug, Clone)]
pub struct PairExample {
    pub h_c: Vec<f64>,
    pub label: PairLabel,
    pub sentence_id: usize,
    pub aspect: Span,
    pub opinion: Span,
}

/// A batch of candidates plus the description prototypes they are scored
/// against.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub examples: Vec<PairExample>,
    pub descriptions: DescriptionSet,
}

/// Which description prototype anchors the contrastive term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptionKind {
    Pair,
    Unpair,
}

/// Enumerate the candidate pairs of a sentence: the cross product of its
/// distinct gold aspect spans and distinct gold opinion spans, labeled
/// matched when the combination is a gold pair.
pub fn build_pair_examples(
    s: &Sentence,
    sentence_id: usize,
    enc: &EncodedSentence,
    p: &EncoderParams,
) -> Result<Vec<PairExample>> {
    if s.triplets().is_empty() {
        return Err(Error::NoTriplets);
    }
    let gold = s.gold_pairs();
    let mut out = Vec::new();
    for aspect in s.distinct_aspects() {
        let h_a = pool_span(enc, aspect)?;
        for opinion in s.distinct_opinions() {
            let h_o = pool_span(enc, opinion)?;
            let h_c = pair_embed(&h_a, &h_o, p)?;
            let label = if gold.iter().any(|g| g.aspect == aspect && g.opinion == opinion) {
                PairLabel::Matched
            } else {
                PairLabel::Mismatched
            };
            out.push(PairExample {
                h_c,
                label,
                sentence_id,
                aspect,
                opinion,
            });
        }
    }
    Ok(out)
}

/// Cosine similarity plus its gradients w.r.t. both vectors.
fn cosine_with_grads(u: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let nu = norm(u);
    let nv = norm(v);
    if nu < NORM_EPS || nv < NORM_EPS {
        return Err(Error::NumericalError(
            "zero-norm vector in cosine similarity".into(),
        ));
    }
    let c = dot(u, v) / (nu * nv);
    let mut du = vec![0.0; u.len()];
    axpy(&mut du, 1.0 / (nu * nv), v);
    axpy(&mut du, -c / (nu * nu), u);
    let mut dv = vec![0.0; v.len()];
    axpy(&mut dv, 1.0 / (nu * nv), u);
    axpy(&mut dv, -c / (nv * nv), v);
    Ok((c, du, dv))
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    let nu = norm(u);
    let nv = norm(v);
    if nu < NORM_EPS || nv < NORM_EPS {
        return Err(Error::NumericalError(
            "zero-norm vector in cosine similarity".into(),
        ));
    }
    Ok(dot(u, v) / (nu * nv))
}

/// Loss and analytic gradients of one anchored contrastive term.
#[derive(Debug, Clone)]
pub struct InfoNceResult {
    pub loss: f64,
    /// Gradient w.r.t. each example's pair embedding, batch order.
    pub grad_h: Vec<Vec<f64>>,
    /// Gradient w.r.t. the anchoring description embedding.
    pub grad_desc: Vec<f64>,
    /// Gradient w.r.t. the temperature.
    pub grad_tau: f64,
}

/// Temperature-scaled contrastive loss anchored at one description.
///
/// For every example whose label matches `kind`, the anchor similarity is
/// contrasted against every opposite-label example in the batch:
/// `-log( e^{s_a} / (e^{s_a} + sum_neg e^{s_n}) )` with
/// `s = cos(h, d_k) / tau`, averaged over anchors.
pub fn infonce_loss(batch: &PairBatch, kind: DescriptionKind, tau: f64) -> Result<InfoNceResult> {
    if tau <= 0.0 {
        return Err(Error::NumericalError(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    let desc = match kind {
        DescriptionKind::Pair => &batch.descriptions.d_pair,
        DescriptionKind::Unpair => &batch.descriptions.d_unpair,
    };
    let anchor_label = match kind {
        DescriptionKind::Pair => PairLabel::Matched,
        DescriptionKind::Unpair => PairLabel::Mismatched,
    };
    let anchors: Vec<usize> = indices_with_label(batch, anchor_label);
    let negatives: Vec<usize> = (0..batch.examples.len())
        .filter(|i| batch.examples[*i].label != anchor_label)
        .collect();
    if anchors.is_empty() || negatives.is_empty() {
        return Err(Error::DegenerateBatch(format!(
            "contrastive loss needs at least one anchor and one negative \
             ({} anchors, {} negatives)",
            anchors.len(),
            negatives.len()
        )));
    }

    // Cosines and their gradients against the shared description vector.
    let mut cos = vec![0.0; batch.examples.len()];
    let mut d_cos_h: Vec<Vec<f64>> = Vec::with_capacity(batch.examples.len());
    let mut d_cos_desc: Vec<Vec<f64>> = Vec::with_capacity(batch.examples.len());
    for ex in &batch.examples {
        let (c, dh, dd) = cosine_with_grads(&ex.h_c, desc)?;
        cos[d_cos_h.len()] = c;
        d_cos_h.push(dh);
        d_cos_desc.push(dd);
    }

    // dL/ds coefficients, where s_i = cos_i / tau.
    let mut coeff = vec![0.0; batch.examples.len()];
    let inv_anchors = 1.0 / anchors.len() as f64;
    let mut loss = 0.0;
    for &a in &anchors {
        let s_a = cos[a] / tau;
        let max_s = negatives
            .iter()
            .map(|&n| cos[n] / tau)
            .fold(s_a, f64::max);
        let mut z = (s_a - max_s).exp();
        for &n in &negatives {
            z += (cos[n] / tau - max_s).exp();
        }
        loss += max_s + z.ln() - s_a;
        let p_anchor = (s_a - max_s).exp() / z;
        coeff[a] += (p_anchor - 1.0) * inv_anchors;
        for &n in &negatives {
            let p_n = (cos[n] / tau - max_s).exp() / z;
            coeff[n] += p_n * inv_anchors;
        }
    }
    loss *= inv_anchors;

    let dim = desc.len();
    let mut grad_h = vec![vec![0.0; dim]; batch.examples.len()];
    let mut grad_desc = vec![0.0; dim];
    let mut grad_tau = 0.0;
    for i in 0..batch.examples.len() {
        if coeff[i] == 0.0 {
            continue;
        }
        let d_dc = coeff[i] / tau;
        axpy(&mut grad_h[i], d_dc, &d_cos_h[i]);
        axpy(&mut grad_desc, d_dc, &d_cos_desc[i]);
        grad_tau -= coeff[i] * cos[i] / (tau * tau);
    }

    Ok(InfoNceResult {
        loss,
        grad_h,
        grad_desc,
        grad_tau,
    })
}

fn indices_with_label(batch: &PairBatch, label: PairLabel) -> Vec<usize> {
    (0..batch.examples.len())
        .filter(|i| batch.examples[*i].label == label)
        .collect()
}

/// Both anchored terms combined: the mean of the pair-anchored and
/// unpair-anchored losses.
#[derive(Debug, Clone)]
pub struct ContrastiveResult {
    pub loss: f64,
    pub grad_h: Vec<Vec<f64>>,
    pub grad_d_pair: Vec<f64>,
    pub grad_d_unpair: Vec<f64>,
    pub grad_tau: f64,
}

pub fn contrastive_loss(batch: &PairBatch, tau: f64) -> Result<ContrastiveResult> {
    let pair_side = infonce_loss(batch, DescriptionKind::Pair, tau)?;
    let unpair_side = infonce_loss(batch, DescriptionKind::Unpair, tau)?;
    let dim = batch.descriptions.d_pair.len();
    let mut grad_h = vec![vec![0.0; dim]; batch.examples.len()];
    for i in 0..batch.examples.len() {
        axpy(&mut grad_h[i], 0.5, &pair_side.grad_h[i]);
        axpy(&mut grad_h[i], 0.5, &unpair_side.grad_h[i]);
    }
    let mut grad_d_pair = pair_side.grad_desc;
    crate::linalg::scale(&mut grad_d_pair, 0.5);
    let mut grad_d_unpair = unpair_side.grad_desc;
    crate::linalg::scale(&mut grad_d_unpair, 0.5);
    Ok(ContrastiveResult {
        loss: 0.5 * (pair_side.loss + unpair_side.loss),
        grad_h,
        grad_d_pair,
        grad_d_unpair,
        grad_tau: 0.5 * (pair_side.grad_tau + unpair_side.grad_tau),
    })
}

#[derive(Debug, Clone)]
pub struct CrossEntropyResult {
    pub loss: f64,
    /// softmax(logits) - one_hot(true_index)
    pub grad: Vec<f64>,
}

/// Softmax cross-entropy: `-log softmax(logits)[true_index]`.
pub fn cross_entropy(logits: &[f64], true_index: usize) -> Result<CrossEntropyResult> {
    if true_index >= logits.len() {
        return Err(Error::IndexOutOfRange {
            index: true_index,
            len: logits.len(),
        });
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let loss = max + z.ln() - logits[true_index];
    let mut grad: Vec<f64> = logits.iter().map(|l| (l - max).exp() / z).collect();
    grad[true_index] -= 1.0;
    Ok(CrossEntropyResult { loss, grad })
}

/// The linear pairing baseline: a sigmoid score on the pair embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearHead {
    pub fn init(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        Self {
            weights: (0..dim).map(|_| rng.gen_range(-bound..bound)).collect(),
            bias: 0.0,
        }
    }

    pub fn logit(&self, h_c: &[f64]) -> Result<f64> {
        if h_c.len() != self.weights.len() {
            return Err(Error::DimMismatch(format!(
                "linear head expects dim {}, got {}",
                self.weights.len(),
                h_c.len()
            )));
        }
        Ok(dot(&self.weights, h_c) + self.bias)
    }
}

/// Probability that a candidate is a real pair under the linear strategy.
pub fn linear_pair_score(h_c: &[f64], head: &LinearHead) -> Result<f64> {
    Ok(sigmoid(head.logit(h_c)?))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// The random-selection strategy: a fair coin from the seeded stream.
pub fn random_pair_decision(rng: &mut ChaCha8Rng) -> PairLabel {
    if rng.gen_bool(0.5) {
        PairLabel::Matched
    } else {
        PairLabel::Mismatched
    }
}

/// The contrastive strategy at inference: matched when the pair embedding
/// is closer (by cosine) to the pair description than to the unpair
/// description; ties resolve to mismatched.
pub fn contrastive_pair_decision(h_c: &[f64], descs: &DescriptionSet) -> Result<PairLabel> {
    let to_pair = cosine(h_c, &descs.d_pair)?;
    let to_unpair = cosine(h_c, &descs.d_unpair)?;
    Ok(if to_pair > to_unpair {
        PairLabel::Matched
    } else {
        PairLabel::Mismatched
    })
}

/// The joint objective `L = alpha * L_e + beta * L_c`, with its components
/// recorded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub l_e: f64,
    pub l_c: f64,
    pub alpha: f64,
    pub beta: f64,
}

pub fn joint_loss(l_e: f64, l_c: f64, alpha: f64, beta: f64) -> LossBreakdown {
    LossBreakdown {
        total: alpha * l_e + beta * l_c,
        l_e,
        l_c,
        alpha,
        beta,
    }
}
