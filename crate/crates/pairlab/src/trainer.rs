//! Seeded end-to-end training of the encoder and pairing parameters.
//!
//! Every source of randomness (initialization, epoch shuffles, dropout
//! masks) flows from the config seed, so identical (dataset, config, seed)
//! runs produce bitwise-identical checkpoints and metric traces. Gradients
//! are analytic throughout; `grad_check` verifies them against central
//! finite differences.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Span};
use crate::encoder::{encode_tokens, encode_tokens_backward, pair_embed_backward, pool_span, pool_span_backward, describe_backward};
use crate::linalg::{axpy, Matrix};
use crate::model::{DescriptionTexts, Model, ModelGrads, MIN_TEMPERATURE};
use crate::pairing::{
    contrastive_loss, cross_entropy, joint_loss, LossBreakdown, PairBatch, PairExample, PairLabel,
};
use crate::{Error, Result};

/// Model size profile. The desk profile keeps every experiment fast; the
/// paper-faithful profile widens the projections to 128.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Desk,
    PaperFaithful,
}

impl Profile {
    pub fn dim(self) -> usize {
        match self {
            Self::Desk => 64,
            Self::PaperFaithful => 128,
        }
    }

    pub fn vocab_size(self) -> usize {
        4096
    }

    pub fn mix_window(self) -> usize {
        3
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Desk => "desk",
            Self::PaperFaithful => "paper-faithful",
        })
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Self::Desk),
            "paper-faithful" => Ok(Self::PaperFaithful),
            other => Err(Error::InvalidSpec(format!("unknown profile {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tau_init: f64,
    pub seed: u64,
    pub profile: Profile,
    pub descriptions: DescriptionTexts,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            batch_size: 16,
            epochs: 20,
            dropout: 0.5,
            alpha: 0.9,
            beta: 0.1,
            tau_init: 0.07,
            seed: 0,
            profile: Profile::Desk,
            descriptions: DescriptionTexts::default(),
        }
    }
}

impl TrainConfig {
    pub fn paper_faithful() -> Self {
        Self {
            profile: Profile::PaperFaithful,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidSpec("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidSpec("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidSpec("epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidSpec(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.alpha + self.beta <= 0.0 {
            return Err(Error::InvalidSpec(
                "loss weights must be non-negative with alpha + beta > 0".into(),
            ));
        }
        if self.tau_init <= 0.0 {
            return Err(Error::InvalidSpec("tau_init must be positive".into()));
        }
        Ok(())
    }

    pub fn init_model(&self) -> Result<Model> {
        Model::init(
            self.profile.dim(),
            self.profile.vocab_size(),
            self.profile.mix_window(),
            self.tau_init,
            self.descriptions.clone(),
            self.seed,
        )
    }
}

/// AdamW state: decoupled weight decay with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl OptimizerState {
    pub fn new(model: &Model) -> Self {
        let moments = model
            .tensors()
            .iter()
            .map(|(_, data)| (vec![0.0; data.len()], vec![0.0; data.len()]))
            .collect();
        Self {
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            moments,
        }
    }
}

/// One AdamW update:
///
/// ```text
/// m <- b1 m + (1-b1) g          v <- b2 v + (1-b2) g^2
/// w <- w - lr * sqrt(1-b2^t)/(1-b1^t) * m / (sqrt(v) + eps) - lr * wd * w
/// ```
pub fn adamw_step(
    model: &mut Model,
    grads: &ModelGrads,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    if lr <= 0.0 {
        return Err(Error::InvalidSpec("learning rate must be positive".into()));
    }
    if let Some(name) = grads.non_finite_tensor() {
        return Err(Error::NonFiniteGradient(name.into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let lr_t = lr * (1.0 - state.beta2.powi(t)).sqrt() / (1.0 - state.beta1.powi(t));
    let decay = lr * state.weight_decay;

    let grad_tensors = grads.tensors();
    let mut params = model.tensors_mut();
    if params.len() != state.moments.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameter tensors vs {} moment tensors",
            params.len(),
            state.moments.len()
        )));
    }
    for (((name, param), (gname, grad)), (m, v)) in params
        .iter_mut()
        .zip(grad_tensors.iter())
        .zip(state.moments.iter_mut())
    {
        if name != gname || param.len() != grad.len() || param.len() != m.len() {
            return Err(Error::ShapeMismatch(format!(
                "tensor {name}: param len {}, grad ({gname}) len {}, moments len {}",
                param.len(),
                grad.len(),
                m.len()
            )));
        }
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            param[i] -= lr_t * m[i] / (v[i].sqrt() + state.epsilon) + decay * param[i];
        }
    }
    Ok(())
}

/// Dropout plan for one candidate: inverted-dropout scale masks for the
/// pooled aspect and opinion vectors.
#[derive(Debug, Clone)]
struct CandidatePlan {
    aspect: Span,
    opinion: Span,
    label: PairLabel,
    mask_a: Vec<f64>,
    mask_o: Vec<f64>,
}

#[derive(Debug, Clone)]
struct SentencePlan {
    sentence_index: usize,
    candidates: Vec<CandidatePlan>,
}

#[derive(Debug, Clone)]
pub(crate) struct BatchPlan {
    items: Vec<SentencePlan>,
}

fn dropout_mask(dim: usize, rate: f64, rng: &mut Option<&mut ChaCha8Rng>) -> Vec<f64> {
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = 1.0 - rate;
            (0..dim)
                .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { 1.0 / keep })
                .collect()
        }
        _ => vec![1.0; dim],
    }
}

/// Enumerate candidates and draw dropout masks for one optimizer step.
pub(crate) fn build_batch_plan(
    ds: &Dataset,
    sentence_ids: &[usize],
    dim: usize,
    dropout: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> BatchPlan {
    let mut items = Vec::with_capacity(sentence_ids.len());
    for &idx in sentence_ids {
        let s = &ds.sentences[idx];
        if s.triplets().is_empty() {
            continue;
        }
        let gold = s.gold_pairs();
        let mut candidates = Vec::new();
        for aspect in s.distinct_aspects() {
            for opinion in s.distinct_opinions() {
                let label = if gold.iter().any(|g| g.aspect == aspect && g.opinion == opinion) {
                    PairLabel::Matched
                } else {
                    PairLabel::Mismatched
                };
                candidates.push(CandidatePlan {
                    aspect,
                    opinion,
                    label,
                    mask_a: dropout_mask(dim, dropout, &mut rng),
                    mask_o: dropout_mask(dim, dropout, &mut rng),
                });
            }
        }
        items.push(SentencePlan {
            sentence_index: idx,
            candidates,
        });
    }
    BatchPlan { items }
}

pub(crate) struct BatchComputation {
    pub breakdown: LossBreakdown,
    pub grads: ModelGrads,
    /// The contrastive term was skipped because the batch had only one label.
    pub contrastive_skipped: bool,
}

struct ForwardCandidate {
    sentence_slot: usize,
    x: Vec<f64>, // concatenated post-dropout span vectors
    mask_a: Vec<f64>,
    mask_o: Vec<f64>,
    aspect: Span,
    opinion: Span,
}

/// Forward and backward over one batch: `L = alpha * L_e + beta * L_c`.
///
/// `L_e` is the mean binary cross-entropy of the linear pairing head over
/// all candidates (computed through the generic softmax cross-entropy on
/// the two logits `[z, 0]`). `L_c` is the symmetric contrastive loss; when
/// the batch lacks one of the two labels it contributes zero with a flag.
pub(crate) fn batch_forward_backward(
    model: &Model,
    ds: &Dataset,
    plan: &BatchPlan,
    alpha: f64,
    beta: f64,
) -> Result<BatchComputation> {
    let dim = model.encoder.dim;
    let descriptions = model.description_set()?;
    let mut grads = ModelGrads::zeros(model);

    // Forward: pair embeddings for every candidate, sentence by sentence.
    let mut forward: Vec<ForwardCandidate> = Vec::new();
    let mut examples: Vec<PairExample> = Vec::new();
    let mut encoded = Vec::with_capacity(plan.items.len());
    for (slot, item) in plan.items.iter().enumerate() {
        let s = &ds.sentences[item.sentence_index];
        let enc = encode_tokens(s, &model.encoder);
        for cand in &item.candidates {
            let mut h_a = pool_span(&enc, cand.aspect)?;
            let mut h_o = pool_span(&enc, cand.opinion)?;
            for (v, m) in h_a.iter_mut().zip(&cand.mask_a) {
                *v *= m;
            }
            for (v, m) in h_o.iter_mut().zip(&cand.mask_o) {
                *v *= m;
            }
            let mut x = Vec::with_capacity(2 * dim);
            x.extend_from_slice(&h_a);
            x.extend_from_slice(&h_o);
            let mut h_c = model.encoder.w_s.matvec(&x)?;
            axpy(&mut h_c, 1.0, &model.encoder.b_s);
            examples.push(PairExample {
                h_c,
                label: cand.label,
                sentence_id: item.sentence_index,
                aspect: cand.aspect,
                opinion: cand.opinion,
            });
            forward.push(ForwardCandidate {
                sentence_slot: slot,
                x,
                mask_a: cand.mask_a.clone(),
                mask_o: cand.mask_o.clone(),
                aspect: cand.aspect,
                opinion: cand.opinion,
            });
        }
        encoded.push((slot, enc));
    }
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let batch = PairBatch {
        examples,
        descriptions,
    };

    // L_e: binary cross-entropy of the linear head, averaged over candidates.
    let n = batch.examples.len() as f64;
    let mut l_e = 0.0;
    let mut d_hc: Vec<Vec<f64>> = vec![vec![0.0; dim]; batch.examples.len()];
    for (i, ex) in batch.examples.iter().enumerate() {
        let z = model.head.logit(&ex.h_c)?;
        let true_index = usize::from(!ex.label.is_matched());
        let ce = cross_entropy(&[z, 0.0], true_index)?;
        l_e += ce.loss / n;
        let dz = alpha * ce.grad[0] / n;
        axpy(&mut grads.head_weights, dz, &ex.h_c);
        grads.head_bias += dz;
        axpy(&mut d_hc[i], dz, &model.head.weights);
    }

    // L_c: symmetric contrastive loss over the whole batch.
    let mut l_c = 0.0;
    let mut contrastive_skipped = false;
    match contrastive_loss(&batch, model.encoder.temperature) {
        Ok(c) => {
            l_c = c.loss;
            if beta > 0.0 {
                for (i, g) in c.grad_h.iter().enumerate() {
                    axpy(&mut d_hc[i], beta, g);
                }
                describe_backward(
                    &batch.descriptions.pair_text,
                    &model.encoder,
                    &scaled(&c.grad_d_pair, beta),
                    &mut grads,
                )?;
                describe_backward(
                    &batch.descriptions.unpair_text,
                    &model.encoder,
                    &scaled(&c.grad_d_unpair, beta),
                    &mut grads,
                )?;
                grads.temperature += beta * c.grad_tau;
            }
        }
        Err(Error::DegenerateBatch(_)) => {
            contrastive_skipped = true;
        }
        Err(other) => return Err(other),
    }

    // Backward through the pair pathway into the encoder.
    let mut d_hidden: Vec<Option<Matrix>> = vec![None; plan.items.len()];
    for (cand, d_out) in forward.iter().zip(&d_hc) {
        let (mut d_a, mut d_o) = pair_embed_backward(&cand.x, &model.encoder, d_out, &mut grads)?;
        for (v, m) in d_a.iter_mut().zip(&cand.mask_a) {
            *v *= m;
        }
        for (v, m) in d_o.iter_mut().zip(&cand.mask_o) {
            *v *= m;
        }
        let slot = cand.sentence_slot;
        let sent_len = ds.sentences[plan.items[slot].sentence_index].len();
        let dh = d_hidden[slot].get_or_insert_with(|| Matrix::zeros(sent_len, dim));
        pool_span_backward(cand.aspect, &d_a, dh);
        pool_span_backward(cand.opinion, &d_o, dh);
    }
    for (slot, enc) in &encoded {
        if let Some(dh) = &d_hidden[*slot] {
            let s = &ds.sentences[plan.items[*slot].sentence_index];
            debug_assert_eq!(enc.len(), s.len());
            encode_tokens_backward(s, &model.encoder, dh, &mut grads);
        }
    }

    Ok(BatchComputation {
        breakdown: joint_loss(l_e, l_c, alpha, beta),
        grads,
        contrastive_skipped,
    })
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|x| x * s).collect()
}

/// One epoch's summary, serialized as a JSON-lines record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    #[serde(rename = "L")]
    pub loss: f64,
    #[serde(rename = "L_e")]
    pub l_e: f64,
    #[serde(rename = "L_c")]
    pub l_c: f64,
    pub tau: f64,
    pub val_pair_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The best-epoch checkpoint by validation pair F1 (ties keep the
    /// earlier epoch).
    pub model: Model,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
    /// Sentences without gold triplets, skipped for pairing batches.
    pub skipped_sentences: usize,
    /// Steps where the contrastive term was skipped for lack of both labels.
    pub degenerate_batches: usize,
}

/// Train on `train_ds`, tracking pair-decision F1 on `val_ds` per epoch.
pub fn train(train_ds: &Dataset, val_ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let usable: Vec<usize> = (0..train_ds.sentences.len())
        .filter(|&i| !train_ds.sentences[i].triplets().is_empty())
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let skipped_sentences = train_ds.sentences.len() - usable.len();

    let mut model = cfg.init_model()?;
    let mut opt = OptimizerState::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = model.encoder.dim;

    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut degenerate_batches = 0;
    let mut best: Option<(f64, usize, Model)> = None;

    for epoch in 1..=cfg.epochs {
        let mut order = usable.clone();
        order.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0);
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let plan = build_batch_plan(train_ds, chunk, dim, cfg.dropout, Some(&mut rng));
            let comp = batch_forward_backward(&model, train_ds, &plan, cfg.alpha, cfg.beta)?;
            if !comp.breakdown.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step: steps });
            }
            if cfg.beta > 0.0 && comp.contrastive_skipped {
                degenerate_batches += 1;
            }
            adamw_step(&mut model, &comp.grads, &mut opt, cfg.learning_rate)?;
            if model.encoder.temperature < MIN_TEMPERATURE {
                model.encoder.temperature = MIN_TEMPERATURE;
            }
            sums.0 += comp.breakdown.total;
            sums.1 += comp.breakdown.l_e;
            sums.2 += comp.breakdown.l_c;
            steps += 1;
        }
        let inv = 1.0 / steps as f64;
        let val = crate::eval::pair_decision_f1(val_ds, &model)?;
        metrics.push(EpochMetrics {
            epoch,
            loss: sums.0 * inv,
            l_e: sums.1 * inv,
            l_c: sums.2 * inv,
            tau: model.encoder.temperature,
            val_pair_f1: val.f1,
        });
        if best.as_ref().map_or(true, |(f1, _, _)| val.f1 > *f1) {
            best = Some((val.f1, epoch, model.clone()));
        }
    }

    let (_, best_epoch, best_model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model: best_model,
        best_epoch,
        metrics,
        skipped_sentences,
        degenerate_batches,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Maximum allowed relative error.
    pub tolerance: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            alpha: 0.9,
            beta: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub tensor: &'static str,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    pub tolerance: f64,
    pub failures: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compare the analytic gradients on a batch against central finite
/// differences for every coordinate of every parameter tensor.
pub fn grad_check(
    model: &Model,
    ds: &Dataset,
    sentence_ids: &[usize],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let plan = build_batch_plan(ds, sentence_ids, model.encoder.dim, 0.0, None);
    let analytic = batch_forward_backward(model, ds, &plan, cfg.alpha, cfg.beta)?.grads;
    verify_gradients(model, ds, sentence_ids, cfg, &analytic)
}

/// The comparison half of [`grad_check`], reusable against externally
/// supplied (possibly corrupted) gradients for harness sanity checks.
pub fn verify_gradients(
    model: &Model,
    ds: &Dataset,
    sentence_ids: &[usize],
    cfg: &GradCheckConfig,
    analytic: &ModelGrads,
) -> Result<GradCheckReport> {
    let plan = build_batch_plan(ds, sentence_ids, model.encoder.dim, 0.0, None);
    let mut work = model.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        tolerance: cfg.tolerance,
        failures: Vec::new(),
    };
    let tensor_count = analytic.tensors().len();
    for k in 0..tensor_count {
        let (tensor, values) = analytic.tensors()[k];
        let len = values.len();
        for i in 0..len {
            let original = work.tensors()[k].1[i];
            work.tensors_mut()[k].1[i] = original + cfg.step;
            let plus = batch_forward_backward(&work, ds, &plan, cfg.alpha, cfg.beta)?
                .breakdown
                .total;
            work.tensors_mut()[k].1[i] = original - cfg.step;
            let minus = batch_forward_backward(&work, ds, &plan, cfg.alpha, cfg.beta)?
                .breakdown
                .total;
            work.tensors_mut()[k].1[i] = original;

            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = analytic.tensors()[k].1[i];
            let relative_error = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            report.checked += 1;
            if relative_error > report.max_relative_error {
                report.max_relative_error = relative_error;
            }
            if relative_error > cfg.tolerance {
                report.failures.push(GradCheckEntry {
                    tensor,
                    index: i,
                    analytic: a,
                    numeric,
                    relative_error,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, SynthSpec};

    fn tiny_model(seed: u64) -> Model {
        Model::init(6, 64, 3, 0.07, DescriptionTexts::default(), seed).unwrap()
    }

    #[test]
    fn adamw_first_step_matches_hand_computation() {
        // w=1, g=1, lr=0.1, b1=0.9, b2=0.999, eps=1e-8, wd=0, step 1:
        //   m = 0.1, v = 1e-3, lr_t = 0.1*sqrt(1e-3)/0.1 = sqrt(1e-3)
        //   update = lr_t * 0.1/(sqrt(1e-3) + 1e-8) = 0.1 - sqrt(1e-3)*1e-6
        //   w = 0.9 + 3.16227766e-8
        let mut model = tiny_model(0);
        let mut grads = ModelGrads::zeros(&model);
        model.head.bias = 1.0;
        grads.head_bias = 1.0;
        let mut state = OptimizerState::new(&model);
        state.weight_decay = 0.0;
        adamw_step(&mut model, &grads, &mut state, 0.1).unwrap();
        let expected = 0.9 + 0.001f64.sqrt() * 1e-6;
        assert!(
            (model.head.bias - expected).abs() < 1e-12,
            "got {}, expected {expected}",
            model.head.bias
        );
    }

    #[test]
    fn adamw_zero_gradient_zero_decay_is_identity() {
        let mut model = tiny_model(1);
        let before = model.clone();
        let grads = ModelGrads::zeros(&model);
        let mut state = OptimizerState::new(&model);
        state.weight_decay = 0.0;
        adamw_step(&mut model, &grads, &mut state, 0.1).unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn adamw_decoupled_decay_shrinks_weights() {
        // wd=0.1, g=0, lr=0.1, w=1 -> w = 0.99
        let mut model = tiny_model(2);
        model.head.bias = 1.0;
        let grads = ModelGrads::zeros(&model);
        let mut state = OptimizerState::new(&model);
        state.weight_decay = 0.1;
        adamw_step(&mut model, &grads, &mut state, 0.1).unwrap();
        assert!((model.head.bias - 0.99).abs() < 1e-15);
    }

    #[test]
    fn adamw_rejects_non_finite_gradients() {
        let mut model = tiny_model(3);
        let mut grads = ModelGrads::zeros(&model);
        grads.head_bias = f64::INFINITY;
        let mut state = OptimizerState::new(&model);
        assert!(matches!(
            adamw_step(&mut model, &grads, &mut state, 0.1),
            Err(Error::NonFiniteGradient(_))
        ));
    }

    fn check_dataset() -> Dataset {
        synth_corpus(&SynthSpec::separable(4), 99).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let ds = check_dataset();
        let model = tiny_model(7);
        let report = grad_check(&model, &ds, &[0, 1], &GradCheckConfig::default()).unwrap();
        assert!(
            report.passed(),
            "max rel error {} over {} coords, first failures: {:?}",
            report.max_relative_error,
            report.checked,
            &report.failures[..report.failures.len().min(3)]
        );
        assert!(report.max_relative_error < 1e-4);
    }

    #[test]
    fn zero_beta_zeroes_the_contrastive_gradient_block() {
        let ds = check_dataset();
        let model = tiny_model(8);
        let plan = build_batch_plan(&ds, &[0, 1], model.encoder.dim, 0.0, None);
        let comp = batch_forward_backward(&model, &ds, &plan, 0.9, 0.0).unwrap();
        // The description pathway only feeds L_c.
        assert!(comp.grads.w_d.data().iter().all(|v| *v == 0.0));
        assert!(comp.grads.b_d.iter().all(|v| *v == 0.0));
        assert!(comp.grads.class_vector.iter().all(|v| *v == 0.0));
        assert_eq!(comp.grads.temperature, 0.0);
    }

    #[test]
    fn corrupted_gradient_is_reported_as_failure() {
        let ds = check_dataset();
        let model = tiny_model(9);
        let plan = build_batch_plan(&ds, &[0], model.encoder.dim, 0.0, None);
        let mut grads = batch_forward_backward(&model, &ds, &plan, 0.9, 0.1)
            .unwrap()
            .grads;
        grads.b_s[0] += 0.5;
        let report =
            verify_gradients(&model, &ds, &[0], &GradCheckConfig::default(), &grads).unwrap();
        assert!(!report.passed());
        assert!(report.failures.iter().any(|f| f.tensor == "b_s" && f.index == 0));
    }

    #[test]
    fn training_is_seed_deterministic() {
        let train_ds = synth_corpus(&SynthSpec::separable(24), 5).unwrap();
        let val_ds = synth_corpus(&SynthSpec::separable(8), 6).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let a = train(&train_ds, &val_ds, &cfg).unwrap();
        let b = train(&train_ds, &val_ds, &cfg).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.model, b.model);
        assert_eq!(a.best_epoch, b.best_epoch);
    }

    #[test]
    fn training_rejects_triplet_free_datasets() {
        let mut ds = synth_corpus(&SynthSpec::separable(2), 5).unwrap();
        ds.sentences.clear();
        let cfg = TrainConfig::default();
        assert!(matches!(train(&ds, &ds, &cfg), Err(Error::EmptyDataset)));
    }

    #[test]
    fn training_counts_skipped_sentences() {
        let mut train_ds = synth_corpus(&SynthSpec::separable(6), 5).unwrap();
        let bare = crate::corpus::parse_dataset_line("no triplets here####[]").unwrap();
        train_ds.sentences.push(bare);
        let val_ds = synth_corpus(&SynthSpec::separable(4), 6).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let out = train(&train_ds, &val_ds, &cfg).unwrap();
        assert_eq!(out.skipped_sentences, 1);
    }

    #[test]
    fn loss_trace_trends_down_on_separable_data() {
        let train_ds = synth_corpus(&SynthSpec::separable(32), 21).unwrap();
        let val_ds = synth_corpus(&SynthSpec::separable(8), 22).unwrap();
        let cfg = TrainConfig {
            epochs: 12,
            dropout: 0.1,
            ..TrainConfig::default()
        };
        let out = train(&train_ds, &val_ds, &cfg).unwrap();
        let first = out.metrics.first().unwrap().loss;
        let last = out.metrics.last().unwrap().loss;
        assert!(last < first, "loss went {first} -> {last}");
    }

    #[test]
    fn paper_faithful_profile_pins_published_hyperparameters() {
        let cfg = TrainConfig::paper_faithful();
        assert_eq!(cfg.learning_rate, 3e-4);
        assert_eq!(cfg.batch_size, 16);
        assert_eq!(cfg.epochs, 20);
        assert_eq!(cfg.dropout, 0.5);
        assert_eq!(cfg.alpha, 0.9);
        assert_eq!(cfg.beta, 0.1);
        assert_eq!(cfg.tau_init, 0.07);
        assert_eq!(cfg.profile.dim(), 128);
    }

    #[test]
    fn smoothed_loss_trace_is_non_increasing_after_warmup() {
        let train_ds = synth_corpus(&SynthSpec::separable(48), 31).unwrap();
        let val_ds = synth_corpus(&SynthSpec::separable(12), 32).unwrap();
        let cfg = TrainConfig {
            epochs: 40,
            ..TrainConfig::default()
        };
        let out = train(&train_ds, &val_ds, &cfg).unwrap();
        let losses: Vec<f64> = out.metrics.iter().map(|m| m.loss).collect();
        // Window-3 moving average, then require a non-increasing trend after
        // epoch 5 with 5% of the trace's range as slack.
        let smoothed: Vec<f64> = losses
            .windows(3)
            .map(|w| w.iter().sum::<f64>() / 3.0)
            .collect();
        let range = losses.iter().cloned().fold(f64::MIN, f64::max)
            - losses.iter().cloned().fold(f64::MAX, f64::min);
        let slack = 0.05 * range;
        for (i, pair) in smoothed.windows(2).enumerate().skip(5) {
            assert!(
                pair[1] <= pair[0] + slack,
                "smoothed loss rose from {} to {} at window {i}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = TrainConfig::default();
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.alpha = 0.0;
        cfg.beta = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn epoch_metrics_serialize_with_paper_field_names() {
        let m = EpochMetrics {
            epoch: 1,
            loss: 0.5,
            l_e: 0.4,
            l_c: 1.4,
            tau: 0.07,
            val_pair_f1: 0.9,
        };
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"L\":"), "{json}");
        assert!(json.contains("\"L_e\":"), "{json}");
        assert!(json.contains("\"L_c\":"), "{json}");
    }
}
