//! Scoring protocols: exact-match triplet F1, pair F1 (sentiment ignored),
//! the known-terms pairing-strategy comparison, and a 2D embedding export
//! for cluster inspection.
//!
//! Matching is exact on token spans; generative string outputs are expected
//! to pass through span resolution first. Zero-denominator precision,
//! recall and F1 all evaluate to 0.

use std::collections::BTreeSet;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{Dataset, Span, TermPair, Triplet};
use crate::encoder::encode_tokens;
use crate::linalg::{axpy, dot, norm, Matrix};
use crate::model::Model;
use crate::pairing::{
    build_pair_examples, contrastive_pair_decision, cosine, linear_pair_score,
    random_pair_decision, PairLabel,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        // 2tp / (2tp + fp + fn) is the harmonic mean of precision and recall.
        let denom = 2 * tp + fp + fn_;
        let f1 = if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
        Self { precision, recall, f1, tp, fp, fn_ }
    }
}

fn micro_counts<T: Ord + Clone>(pred: &[Vec<T>], gold: &[Vec<T>]) -> EvalReport {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        let pred_set: BTreeSet<&T> = p.iter().collect();
        let gold_set: BTreeSet<&T> = g.iter().collect();
        tp += pred_set.intersection(&gold_set).count();
        fp += pred_set.difference(&gold_set).count();
        fn_ += gold_set.difference(&pred_set).count();
    }
    EvalReport::from_counts(tp, fp, fn_)
}

/// Micro-averaged exact-match triplet F1. A prediction is a true positive
/// iff aspect span, opinion span and sentiment all equal a gold triplet;
/// duplicates collapse.
pub fn triplet_f1(pred: &[Vec<Triplet>], gold: &Dataset) -> Result<EvalReport> {
    if pred.len() != gold.sentences.len() {
        return Err(Error::AlignmentError(format!(
            "{} predictions vs {} gold sentences",
            pred.len(),
            gold.sentences.len()
        )));
    }
    let gold_sets: Vec<Vec<Triplet>> = gold.sentences.iter().map(|s| s.triplets().to_vec()).collect();
    Ok(micro_counts(pred, &gold_sets))
}

/// Micro-averaged pair F1: sentiment is ignored.
pub fn pair_f1(pred: &[Vec<TermPair>], gold: &Dataset) -> Result<EvalReport> {
    if pred.len() != gold.sentences.len() {
        return Err(Error::AlignmentError(format!(
            "{} predictions vs {} gold sentences",
            pred.len(),
            gold.sentences.len()
        )));
    }
    let gold_sets: Vec<Vec<TermPair>> = gold.sentences.iter().map(|s| s.gold_pairs()).collect();
    Ok(micro_counts(pred, &gold_sets))
}

/// Pair F1 of the contrastive decision rule over all gold-term candidates.
/// This is the validation metric tracked during training.
pub fn pair_decision_f1(ds: &Dataset, model: &Model) -> Result<EvalReport> {
    let descs = model.description_set()?;
    let mut preds: Vec<Vec<TermPair>> = Vec::with_capacity(ds.sentences.len());
    for (sid, s) in ds.sentences.iter().enumerate() {
        let mut chosen = Vec::new();
        if !s.triplets().is_empty() {
            let enc = encode_tokens(s, &model.encoder);
            for ex in build_pair_examples(s, sid, &enc, &model.encoder)? {
                if contrastive_pair_decision(&ex.h_c, &descs)? == PairLabel::Matched {
                    chosen.push(TermPair { aspect: ex.aspect, opinion: ex.opinion });
                }
            }
        }
        preds.push(chosen);
    }
    pair_f1(&preds, ds)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StrategyReports {
    pub random: EvalReport,
    pub linear: EvalReport,
    pub contrastive: EvalReport,
}

/// The known-terms protocol: gold aspect and opinion spans are given, each
/// candidate combination is classified by the three strategies, and each
/// strategy is scored as retrieval of the gold pairs.
pub fn compare_strategies(ds: &Dataset, model: &Model, seed: u64) -> Result<StrategyReports> {
    let descs = model.description_set()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random_preds: Vec<Vec<TermPair>> = Vec::with_capacity(ds.sentences.len());
    let mut linear_preds: Vec<Vec<TermPair>> = Vec::with_capacity(ds.sentences.len());
    let mut contrastive_preds: Vec<Vec<TermPair>> = Vec::with_capacity(ds.sentences.len());
    for (sid, s) in ds.sentences.iter().enumerate() {
        let mut random_row = Vec::new();
        let mut linear_row = Vec::new();
        let mut contrastive_row = Vec::new();
        if !s.triplets().is_empty() {
            let enc = encode_tokens(s, &model.encoder);
            for ex in build_pair_examples(s, sid, &enc, &model.encoder)? {
                let pair = TermPair { aspect: ex.aspect, opinion: ex.opinion };
                if random_pair_decision(&mut rng) == PairLabel::Matched {
                    random_row.push(pair);
                }
                if linear_pair_score(&ex.h_c, &model.head)? > 0.5 {
                    linear_row.push(pair);
                }
                if contrastive_pair_decision(&ex.h_c, &descs)? == PairLabel::Matched {
                    contrastive_row.push(pair);
                }
            }
        }
        random_preds.push(random_row);
        linear_preds.push(linear_row);
        contrastive_preds.push(contrastive_row);
    }
    Ok(StrategyReports {
        random: pair_f1(&random_preds, ds)?,
        linear: pair_f1(&linear_preds, ds)?,
        contrastive: pair_f1(&contrastive_preds, ds)?,
    })
}

/// Mean cosine gaps between candidate embeddings and the two description
/// prototypes, computed in the full embedding space (before any projection).
///
/// `matched_gap` is mean cos(matched, d_pair) - mean cos(matched, d_unpair);
/// `mismatched_gap` is the symmetric quantity for mismatched candidates.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeparationGaps {
    pub matched_gap: f64,
    pub mismatched_gap: f64,
}

pub fn description_cosine_gaps(ds: &Dataset, model: &Model) -> Result<SeparationGaps> {
    let descs = model.description_set()?;
    let (mut m_pair, mut m_unpair, mut m_count) = (0.0, 0.0, 0usize);
    let (mut x_pair, mut x_unpair, mut x_count) = (0.0, 0.0, 0usize);
    for (sid, s) in ds.sentences.iter().enumerate() {
        if s.triplets().is_empty() {
            continue;
        }
        let enc = encode_tokens(s, &model.encoder);
        for ex in build_pair_examples(s, sid, &enc, &model.encoder)? {
            let to_pair = cosine(&ex.h_c, &descs.d_pair)?;
            let to_unpair = cosine(&ex.h_c, &descs.d_unpair)?;
            if ex.label.is_matched() {
                m_pair += to_pair;
                m_unpair += to_unpair;
                m_count += 1;
            } else {
                x_pair += to_pair;
                x_unpair += to_unpair;
                x_count += 1;
            }
        }
    }
    if m_count == 0 || x_count == 0 {
        return Err(Error::DegenerateBatch(
            "cosine gaps need both matched and mismatched candidates".into(),
        ));
    }
    Ok(SeparationGaps {
        matched_gap: (m_pair - m_unpair) / m_count as f64,
        mismatched_gap: (x_unpair - x_pair) / x_count as f64,
    })
}

/// Top-2 principal components of a set of vectors.
#[derive(Debug, Clone)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    pub components: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
}

impl Pca2 {
    pub fn project(&self, v: &[f64]) -> (f64, f64) {
        let centered: Vec<f64> = v.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        (dot(&centered, &self.components[0]), dot(&centered, &self.components[1]))
    }
}

/// PCA via power iteration with deflation. Components follow a fixed sign
/// convention: the largest-magnitude loading is positive.
pub fn pca_2d(rows: &[Vec<f64>]) -> Result<Pca2> {
    let distinct: BTreeSet<Vec<u64>> = rows
        .iter()
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    if distinct.len() < 3 {
        return Err(Error::DegenerateCovariance(format!(
            "need at least 3 distinct vectors, found {}",
            distinct.len()
        )));
    }
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        axpy(&mut mean, 1.0 / n as f64, r);
    }
    let mut cov = Matrix::zeros(d, d);
    for r in rows {
        let centered: Vec<f64> = r.iter().zip(&mean).map(|(x, m)| x - m).collect();
        cov.add_outer(&centered, &centered, 1.0 / (n - 1) as f64);
    }

    let v1 = power_iteration(&cov, &[])?;
    let lambda1 = rayleigh(&cov, &v1);
    let mut deflated = cov.clone();
    deflated.add_outer(&v1, &v1, -lambda1);
    let v2 = power_iteration(&deflated, &[&v1])?;
    let lambda2 = rayleigh(&cov, &v2);

    let mut components = [v1, v2];
    for c in &mut components {
        fix_sign(c);
    }
    Ok(Pca2 {
        mean,
        components,
        explained_variance: [lambda1, lambda2],
    })
}

fn rayleigh(m: &Matrix, v: &[f64]) -> f64 {
    let mv = m.matvec(v).expect("square matrix");
    dot(v, &mv)
}

fn fix_sign(v: &mut [f64]) {
    let mut max_idx = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[max_idx].abs() {
            max_idx = i;
        }
    }
    if v[max_idx] < 0.0 {
        crate::linalg::scale(v, -1.0);
    }
}

fn power_iteration(m: &Matrix, orthogonal_to: &[&Vec<f64>]) -> Result<Vec<f64>> {
    let d = m.rows();
    // Deterministic start: the normalized all-ones vector, falling back to
    // basis vectors if it lies in the space we must stay orthogonal to.
    let mut v = starting_vector(d, orthogonal_to)?;
    for _ in 0..10_000 {
        let mut w = m.matvec(&v)?;
        for o in orthogonal_to {
            let c = dot(&w, o);
            axpy(&mut w, -c, o);
        }
        let nw = norm(&w);
        if nw < 1e-300 {
            // Zero eigenvalue in the remaining subspace; the current
            // orthonormal direction is a valid component.
            return Ok(v);
        }
        crate::linalg::scale(&mut w, 1.0 / nw);
        let delta = 1.0 - dot(&w, &v).abs();
        v = w;
        if delta < 1e-15 {
            break;
        }
    }
    Ok(v)
}

fn starting_vector(d: usize, orthogonal_to: &[&Vec<f64>]) -> Result<Vec<f64>> {
    let mut candidates: Vec<Vec<f64>> = vec![vec![1.0 / (d as f64).sqrt(); d]];
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        candidates.push(e);
    }
    for mut c in candidates {
        for o in orthogonal_to {
            let proj = dot(&c, o);
            axpy(&mut c, -proj, o);
        }
        let nc = norm(&c);
        if nc > 1e-9 {
            crate::linalg::scale(&mut c, 1.0 / nc);
            return Ok(c);
        }
    }
    Err(Error::DegenerateCovariance(
        "no starting vector orthogonal to prior components".into(),
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingRow {
    pub sentence_id: usize,
    pub aspect: Span,
    pub opinion: Span,
    pub label: PairLabelTag,
    pub x: f64,
    pub y: f64,
}

/// Serialization-friendly label tag for dump rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PairLabelTag {
    Matched,
    Mismatched,
}

impl From<PairLabel> for PairLabelTag {
    fn from(l: PairLabel) -> Self {
        match l {
            PairLabel::Matched => Self::Matched,
            PairLabel::Mismatched => Self::Mismatched,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingDump {
    pub rows: Vec<EmbeddingRow>,
    pub pair_center: (f64, f64),
    pub unpair_center: (f64, f64),
}

impl EmbeddingDump {
    /// CSV with one candidate per row plus two trailing CENTER rows for the
    /// description prototypes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sid,a_start,a_end,o_start,o_end,label,x,y\n");
        for r in &self.rows {
            let label = match r.label {
                PairLabelTag::Matched => "matched",
                PairLabelTag::Mismatched => "mismatched",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.6},{:.6}\n",
                r.sentence_id, r.aspect.start, r.aspect.end, r.opinion.start, r.opinion.end,
                label, r.x, r.y
            ));
        }
        out.push_str(&format!(
            "CENTER,pair,{:.6},{:.6}\n",
            self.pair_center.0, self.pair_center.1
        ));
        out.push_str(&format!(
            "CENTER,unpair,{:.6},{:.6}\n",
            self.unpair_center.0, self.unpair_center.1
        ));
        out
    }
}

/// Compute every candidate pair embedding plus the two description
/// embeddings and project them to 2D with PCA fitted on the candidates.
pub fn export_embeddings(ds: &Dataset, model: &Model) -> Result<EmbeddingDump> {
    let descs = model.description_set()?;
    let mut vectors: Vec<Vec<f64>> = Vec::new();
    let mut meta: Vec<(usize, Span, Span, PairLabel)> = Vec::new();
    for (sid, s) in ds.sentences.iter().enumerate() {
        if s.triplets().is_empty() {
            continue;
        }
        let enc = encode_tokens(s, &model.encoder);
        for ex in build_pair_examples(s, sid, &enc, &model.encoder)? {
            meta.push((ex.sentence_id, ex.aspect, ex.opinion, ex.label));
            vectors.push(ex.h_c);
        }
    }
    let pca = pca_2d(&vectors)?;
    let rows = meta
        .into_iter()
        .zip(&vectors)
        .map(|((sentence_id, aspect, opinion, label), v)| {
            let (x, y) = pca.project(v);
            EmbeddingRow {
                sentence_id,
                aspect,
                opinion,
                label: label.into(),
                x,
                y,
            }
        })
        .collect();
    Ok(EmbeddingDump {
        rows,
        pair_center: pca.project(&descs.d_pair),
        unpair_center: pca.project(&descs.d_unpair),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_dataset_line, synth_corpus, Sentence, SentimentPolarity, Split, SynthSpec};
    use crate::model::DescriptionTexts;
    use rand::Rng;

    fn ds_of(lines: &[&str]) -> Dataset {
        Dataset {
            name: "t".into(),
            split: Split::Test,
            sentences: lines.iter().map(|l| parse_dataset_line(l).unwrap()).collect(),
        }
    }

    fn triplet(a: (usize, usize), o: (usize, usize), s: SentimentPolarity) -> Triplet {
        Triplet {
            aspect: Span::new(a.0, a.1),
            opinion: Span::new(o.0, o.1),
            sentiment: s,
        }
    }

    #[test]
    fn perfect_predictions_score_one() {
        let ds = ds_of(&[
            "a b####[([0], [1], 'POS')]",
            "c d e####[([0], [1], 'NEG'), ([2], [1], 'NEU')]",
        ]);
        let pred: Vec<Vec<Triplet>> = ds.sentences.iter().map(|s| s.triplets().to_vec()).collect();
        let r = triplet_f1(&pred, &ds).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn two_of_three_correct_is_exactly_two_thirds() {
        let ds = ds_of(&["a b c d e f####[([0], [1], 'POS'), ([2], [3], 'NEG'), ([4], [5], 'NEU')]"]);
        let gold = ds.sentences[0].triplets();
        let pred = vec![vec![
            gold[0],
            gold[1],
            triplet((4, 4), (5, 5), SentimentPolarity::Positive), // wrong sentiment
        ]];
        let r = triplet_f1(&pred, &ds).unwrap();
        assert_eq!(r.precision, 2.0 / 3.0);
        assert_eq!(r.recall, 2.0 / 3.0);
        assert_eq!(r.f1, 2.0 / 3.0);
    }

    #[test]
    fn empty_predictions_score_zero() {
        let ds = ds_of(&["a b####[([0], [1], 'POS')]"]);
        let r = triplet_f1(&[vec![]], &ds).unwrap();
        assert_eq!(r.f1, 0.0);
        assert_eq!(r.fn_, 1);
    }

    #[test]
    fn alignment_mismatch_is_an_error() {
        let ds = ds_of(&["a b####[([0], [1], 'POS')]"]);
        assert!(matches!(triplet_f1(&[], &ds), Err(Error::AlignmentError(_))));
    }

    #[test]
    fn pair_f1_ignores_sentiment() {
        let ds = ds_of(&["a b####[([0], [1], 'POS')]"]);
        let pred = vec![vec![TermPair {
            aspect: Span::new(0, 0),
            opinion: Span::new(1, 1),
        }]];
        let r = pair_f1(&pred, &ds).unwrap();
        assert_eq!(r.f1, 1.0);
    }

    #[test]
    fn pair_f1_half_recall_case() {
        let ds = ds_of(&["a b c d####[([0], [1], 'POS'), ([2], [3], 'NEG')]"]);
        let pred = vec![vec![TermPair {
            aspect: Span::new(0, 0),
            opinion: Span::new(1, 1),
        }]];
        let r = pair_f1(&pred, &ds).unwrap();
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 0.5);
        assert_eq!(r.f1, 2.0 / 3.0);
    }

    #[test]
    fn empty_gold_and_empty_pred_is_zero_by_convention() {
        let ds = ds_of(&["a b####[]"]);
        let r = pair_f1(&[vec![]], &ds).unwrap();
        assert_eq!(r.f1, 0.0);
        assert_eq!((r.tp, r.fp, r.fn_), (0, 0, 0));
    }

    #[test]
    fn duplicates_collapse() {
        let ds = ds_of(&["a b####[([0], [1], 'POS')]"]);
        let t = ds.sentences[0].triplets()[0];
        let r = triplet_f1(&[vec![t, t, t]], &ds).unwrap();
        assert_eq!((r.tp, r.fp), (1, 0));
        assert_eq!(r.f1, 1.0);
    }

    /// Brute-force oracle: no sets, quadratic scans only.
    fn brute_force_counts(pred: &[Vec<Triplet>], gold: &[Vec<Triplet>]) -> (usize, usize, usize) {
        let dedup = |items: &[Triplet]| {
            let mut out: Vec<Triplet> = Vec::new();
            for t in items {
                if !out.iter().any(|u| u == t) {
                    out.push(*t);
                }
            }
            out
        };
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (p, g) in pred.iter().zip(gold) {
            let p = dedup(p);
            let g = dedup(g);
            for t in &p {
                if g.iter().any(|u| u == t) {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
            for t in &g {
                if !p.iter().any(|u| u == t) {
                    fn_ += 1;
                }
            }
        }
        (tp, fp, fn_)
    }

    #[test]
    fn f1_matches_brute_force_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..1000 {
            let n_sentences = rng.gen_range(1..4usize);
            let mut gold_rows = Vec::new();
            let mut pred_rows = Vec::new();
            let mut sentences = Vec::new();
            for _ in 0..n_sentences {
                let random_triplets = |rng: &mut ChaCha8Rng| {
                    let k = rng.gen_range(0..=5usize);
                    (0..k)
                        .map(|_| {
                            let a = rng.gen_range(0..4usize);
                            let o = rng.gen_range(0..4usize);
                            triplet(
                                (a, a),
                                (o, o),
                                SentimentPolarity::ALL[rng.gen_range(0..3)],
                            )
                        })
                        .collect::<Vec<_>>()
                };
                let gold = random_triplets(&mut rng);
                let pred = random_triplets(&mut rng);
                let tokens = vec!["w".to_string(); 4];
                sentences.push(Sentence::new(tokens, gold.clone()).unwrap());
                gold_rows.push(gold);
                pred_rows.push(pred);
            }
            let ds = Dataset {
                name: "r".into(),
                split: Split::Test,
                sentences,
            };
            let report = triplet_f1(&pred_rows, &ds).unwrap();
            let (tp, fp, fn_) = brute_force_counts(&pred_rows, &gold_rows);
            assert_eq!((report.tp, report.fp, report.fn_), (tp, fp, fn_));
            let oracle = EvalReport::from_counts(tp, fp, fn_);
            assert_eq!(report.f1, oracle.f1);
            assert_eq!(report.precision, oracle.precision);
            assert_eq!(report.recall, oracle.recall);
        }
    }

    #[test]
    fn pair_f1_is_a_relaxation_of_triplet_f1() {
        // Over predictions whose (aspect, opinion) pairs are unique per
        // sentence, dropping the sentiment can only help.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let unique_pairs = |rng: &mut ChaCha8Rng| {
                let mut ts = Vec::new();
                for a in 0..3usize {
                    for o in 0..3usize {
                        if rng.gen_bool(0.35) {
                            ts.push(triplet(
                                (a, a),
                                (o, o),
                                SentimentPolarity::ALL[rng.gen_range(0..3)],
                            ));
                        }
                    }
                }
                ts
            };
            let gold = unique_pairs(&mut rng);
            let pred = unique_pairs(&mut rng);
            let ds = Dataset {
                name: "r".into(),
                split: Split::Test,
                sentences: vec![Sentence::new(vec!["w".into(); 3], gold).unwrap()],
            };
            let t = triplet_f1(&[pred.clone()], &ds).unwrap();
            let p = pair_f1(&[pred.iter().map(Triplet::pair).collect()], &ds).unwrap();
            assert!(
                p.f1 >= t.f1 - 1e-12,
                "pair {} < triplet {}",
                p.f1,
                t.f1
            );
        }
    }

    #[test]
    fn compare_strategies_is_deterministic_per_seed() {
        let ds = synth_corpus(&SynthSpec::separable(12), 3).unwrap();
        let model = Model::init(8, 256, 3, 0.07, DescriptionTexts::default(), 4).unwrap();
        let a = compare_strategies(&ds, &model, 11).unwrap();
        let b = compare_strategies(&ds, &model, 11).unwrap();
        assert_eq!(a.random, b.random);
        assert_eq!(a.linear, b.linear);
        assert_eq!(a.contrastive, b.contrastive);
        // A different seed only moves the random strategy.
        let c = compare_strategies(&ds, &model, 12).unwrap();
        assert_eq!(a.linear, c.linear);
        assert_eq!(a.contrastive, c.contrastive);
        assert_ne!(a.random, c.random);
    }

    #[test]
    fn pca_of_centered_2d_data_preserves_pairwise_distances() {
        let rows = vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.5],
            vec![0.5, -1.0],
            vec![-0.5, 0.5],
        ];
        let mean: Vec<f64> = vec![
            rows.iter().map(|r| r[0]).sum::<f64>() / 4.0,
            rows.iter().map(|r| r[1]).sum::<f64>() / 4.0,
        ];
        let centered: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| vec![r[0] - mean[0], r[1] - mean[1]])
            .collect();
        let pca = pca_2d(&centered).unwrap();
        let projected: Vec<(f64, f64)> = centered.iter().map(|r| pca.project(r)).collect();
        for i in 0..centered.len() {
            for j in (i + 1)..centered.len() {
                let orig = ((centered[i][0] - centered[j][0]).powi(2)
                    + (centered[i][1] - centered[j][1]).powi(2))
                .sqrt();
                let proj = ((projected[i].0 - projected[j].0).powi(2)
                    + (projected[i].1 - projected[j].1).powi(2))
                .sqrt();
                assert!((orig - proj).abs() < 1e-10, "{orig} vs {proj}");
            }
        }
    }

    #[test]
    fn pca_components_are_orthonormal_with_ordered_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let pca = pca_2d(&rows).unwrap();
        let [c1, c2] = &pca.components;
        assert!((norm(c1) - 1.0).abs() < 1e-10);
        assert!((norm(c2) - 1.0).abs() < 1e-10);
        assert!(dot(c1, c2).abs() < 1e-10);
        assert!(pca.explained_variance[0] >= pca.explained_variance[1] - 1e-12);
    }

    #[test]
    fn pca_rejects_fewer_than_three_distinct_vectors() {
        let rows = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![3.0, 4.0]];
        assert!(matches!(pca_2d(&rows), Err(Error::DegenerateCovariance(_))));
    }

    #[test]
    fn export_has_center_rows_and_cross_product_count() {
        let ds = synth_corpus(&SynthSpec::separable(10), 8).unwrap();
        let model = Model::init(8, 256, 3, 0.07, DescriptionTexts::default(), 4).unwrap();
        let dump = export_embeddings(&ds, &model).unwrap();
        let expected: usize = ds
            .sentences
            .iter()
            .map(|s| s.distinct_aspects().len() * s.distinct_opinions().len())
            .sum();
        assert_eq!(dump.rows.len(), expected);
        let csv = dump.to_csv();
        assert_eq!(csv.matches("CENTER,").count(), 2);
        assert!(csv.starts_with("sid,a_start,a_end,o_start,o_end,label,x,y\n"));
        // Labels in the dump agree with gold.
        for row in &dump.rows {
            let s = &ds.sentences[row.sentence_id];
            let is_gold = s
                .gold_pairs()
                .iter()
                .any(|g| g.aspect == row.aspect && g.opinion == row.opinion);
            assert_eq!(row.label == PairLabelTag::Matched, is_gold);
        }
    }
}
