//! Corpus handling for sentiment triplet datasets.
//!
//! Datasets use the published line format: a whitespace-tokenized sentence,
//! the separator `####`, and a Python-style list of
//! `([aspect indices], [opinion indices], 'TAG')` tuples, e.g.
//!
//! ```text
//! Nice keyboard .####[([1], [0], 'POS')]
//! ```
//!
//! Index lists must be contiguous; a gap is treated as corrupt data rather
//! than silently collapsed to min/max. Tokenization is whitespace splitting
//! of the stored sentence — the files are pre-tokenized.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const SEPARATOR: &str = "####";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SentimentPolarity {
    Positive,
    Neutral,
    Negative,
}

impl SentimentPolarity {
    pub const ALL: [SentimentPolarity; 3] = [Self::Positive, Self::Neutral, Self::Negative];

    /// Serialization tag used by the dataset files.
    pub fn tag(self) -> &'static str {
        match self {
            Self::Positive => "POS",
            Self::Neutral => "NEU",
            Self::Negative => "NEG",
        }
    }

    /// Natural-language word used inside generated targets.
    pub fn word(self) -> &'static str {
        match self {
            Self::Positive => "positive",
            Self::Neutral => "neutral",
            Self::Negative => "negative",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "POS" => Some(Self::Positive),
            "NEU" => Some(Self::Neutral),
            "NEG" => Some(Self::Negative),
            _ => None,
        }
    }

    /// Case-insensitive match of either the word or the tag form.
    pub fn from_word(word: &str) -> Option<Self> {
        match word.to_ascii_lowercase().as_str() {
            "positive" | "pos" => Some(Self::Positive),
            "neutral" | "neu" => Some(Self::Neutral),
            "negative" | "neg" => Some(Self::Negative),
            _ => None,
        }
    }
}

impl fmt::Display for SentimentPolarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

/// Inclusive token span `[start, end]` within a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false // inclusive spans always cover at least one token
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> {
        self.start..=self.end
    }

    fn check(&self, sentence_len: usize) -> Result<()> {
        if self.start > self.end || self.end >= sentence_len {
            return Err(Error::BadSpan {
                start: self.start,
                end: self.end,
                len: sentence_len,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triplet {
    pub aspect: Span,
    pub opinion: Span,
    pub sentiment: SentimentPolarity,
}

impl Triplet {
    pub fn pair(&self) -> TermPair {
        TermPair {
            aspect: self.aspect,
            opinion: self.opinion,
        }
    }
}

/// A triplet without its sentiment label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermPair {
    pub aspect: Span,
    pub opinion: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    tokens: Vec<String>,
    triplets: Vec<Triplet>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, triplets: Vec<Triplet>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidSentence("sentence has no tokens".into()));
        }
        for tok in &tokens {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::InvalidSentence(format!(
                    "token {tok:?} is empty or contains whitespace"
                )));
            }
        }
        for t in &triplets {
            t.aspect.check(tokens.len())?;
            t.opinion.check(tokens.len())?;
        }
        Ok(Self { tokens, triplets })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // at least one token by construction
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    /// Surface form of a span: its tokens joined by single spaces.
    pub fn term_text(&self, span: Span) -> String {
        self.tokens[span.start..=span.end].join(" ")
    }

    /// Distinct aspect spans in first-appearance order.
    pub fn distinct_aspects(&self) -> Vec<Span> {
        dedup_spans(self.triplets.iter().map(|t| t.aspect))
    }

    /// Distinct opinion spans in first-appearance order.
    pub fn distinct_opinions(&self) -> Vec<Span> {
        dedup_spans(self.triplets.iter().map(|t| t.opinion))
    }

    /// Gold (aspect, opinion) pairs, deduplicated, in first-appearance order.
    pub fn gold_pairs(&self) -> Vec<TermPair> {
        let mut out: Vec<TermPair> = Vec::new();
        for t in &self.triplets {
            let p = t.pair();
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out
    }
}

fn dedup_spans(spans: impl Iterator<Item = Span>) -> Vec<Span> {
    let mut out = Vec::new();
    for s in spans {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Self::Train),
            "val" | "dev" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(Error::InvalidSpec(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub sentences: Vec<Sentence>,
}

/// Parse one dataset line: `sentence####[([..], [..], 'TAG'), ...]`.
pub fn parse_dataset_line(line: &str) -> Result<Sentence> {
    let separators = line.matches(SEPARATOR).count();
    if separators != 1 {
        return Err(Error::MalformedLine(format!(
            "expected exactly one {SEPARATOR:?} separator, found {separators}"
        )));
    }
    let (text, triples) = line.split_once(SEPARATOR).expect("counted above");
    let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        return Err(Error::MalformedLine("empty sentence before separator".into()));
    }
    let triplets = parse_triplet_list(triples, tokens.len())?;
    Sentence::new(tokens, triplets)
}

/// Inverse of [`parse_dataset_line`].
pub fn serialize_dataset_line(s: &Sentence) -> String {
    format!("{}{}{}", s.tokens().join(" "), SEPARATOR, serialize_triplet_list(s.triplets()))
}

pub fn serialize_triplet_list(triplets: &[Triplet]) -> String {
    let body = triplets
        .iter()
        .map(|t| {
            format!(
                "([{}], [{}], '{}')",
                span_indices(t.aspect),
                span_indices(t.opinion),
                t.sentiment.tag()
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    format!("[{body}]")
}

fn span_indices(span: Span) -> String {
    span.indices()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn parse_triplet_list(src: &str, sentence_len: usize) -> Result<Vec<Triplet>> {
    let mut sc = Scanner::new(src);
    sc.skip_ws();
    sc.expect(b'[')?;
    let mut out = Vec::new();
    loop {
        sc.skip_ws();
        if sc.eat(b']') {
            break;
        }
        sc.expect(b'(')?;
        let aspect = parse_index_list(&mut sc, sentence_len)?;
        sc.skip_ws();
        sc.expect(b',')?;
        let opinion = parse_index_list(&mut sc, sentence_len)?;
        sc.skip_ws();
        sc.expect(b',')?;
        let sentiment = parse_tag(&mut sc)?;
        sc.skip_ws();
        sc.expect(b')')?;
        out.push(Triplet { aspect, opinion, sentiment });
        sc.skip_ws();
        // An optional comma between tuples.
        sc.eat(b',');
    }
    sc.skip_ws();
    if !sc.done() {
        return Err(Error::MalformedLine(format!(
            "trailing content after triplet list: {:?}",
            sc.rest()
        )));
    }
    Ok(out)
}

fn parse_index_list(sc: &mut Scanner<'_>, sentence_len: usize) -> Result<Span> {
    sc.skip_ws();
    sc.expect(b'[')?;
    let mut indices = Vec::new();
    loop {
        sc.skip_ws();
        if sc.eat(b']') {
            break;
        }
        indices.push(sc.parse_usize()?);
        sc.skip_ws();
        sc.eat(b',');
    }
    if indices.is_empty() {
        return Err(Error::BadIndex("empty index list".into()));
    }
    for w in indices.windows(2) {
        if w[1] != w[0] + 1 {
            return Err(Error::BadIndex(format!(
                "non-contiguous index list {indices:?}"
            )));
        }
    }
    let last = *indices.last().expect("non-empty");
    if last >= sentence_len {
        return Err(Error::BadIndex(format!(
            "index {last} out of range for sentence of length {sentence_len}"
        )));
    }
    Ok(Span::new(indices[0], last))
}

fn parse_tag(sc: &mut Scanner<'_>) -> Result<SentimentPolarity> {
    sc.skip_ws();
    let quote = if sc.eat(b'\'') {
        b'\''
    } else if sc.eat(b'"') {
        b'"'
    } else {
        return Err(Error::MalformedLine("expected quoted sentiment tag".into()));
    };
    let tag = sc.take_until(quote)?;
    SentimentPolarity::from_tag(&tag).ok_or(Error::BadTag(tag))
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn new(s: &'a str) -> Self {
        Self { bytes: s.as_bytes(), pos: 0 }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn done(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn rest(&self) -> String {
        String::from_utf8_lossy(&self.bytes[self.pos.min(self.bytes.len())..]).into_owned()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.pos < self.bytes.len() && self.bytes[self.pos] == b {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, b: u8) -> Result<()> {
        if self.eat(b) {
            Ok(())
        } else {
            Err(Error::MalformedLine(format!(
                "expected {:?} at byte {} of triplet list",
                b as char, self.pos
            )))
        }
    }

    fn parse_usize(&mut self) -> Result<usize> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::MalformedLine(format!(
                "expected an index at byte {start} of triplet list"
            )));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("digits are ascii");
        text.parse::<usize>()
            .map_err(|e| Error::MalformedLine(format!("bad index {text:?}: {e}")))
    }

    fn take_until(&mut self, b: u8) -> Result<String> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos] != b {
            self.pos += 1;
        }
        if self.pos >= self.bytes.len() {
            return Err(Error::MalformedLine("unterminated quoted tag".into()));
        }
        let out = String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned();
        self.pos += 1; // closing quote
        Ok(out)
    }
}

/// Load a dataset file: one sentence per non-empty line, in file order.
pub fn load_dataset(path: impl AsRef<Path>, name: &str, split: Split) -> Result<Dataset> {
    let content = fs::read_to_string(path.as_ref())?;
    let mut sentences = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let s = parse_dataset_line(line).map_err(|e| Error::DatasetLine {
            line: i + 1,
            source: Box::new(e),
        })?;
        sentences.push(s);
    }
    Ok(Dataset {
        name: name.to_string(),
        split,
        sentences,
    })
}

/// Write a dataset in the line format accepted by [`load_dataset`].
pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for s in &ds.sentences {
        out.push_str(&serialize_dataset_line(s));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Per-split statistics: sentence count and the multi-aspect / multi-opinion
/// sentence counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StatsRow {
    pub sentences: usize,
    pub multi_aspect: usize,
    pub multi_opinion: usize,
    pub multi_both: usize,
}

pub fn dataset_stats(ds: &Dataset) -> StatsRow {
    let mut row = StatsRow {
        sentences: ds.sentences.len(),
        multi_aspect: 0,
        multi_opinion: 0,
        multi_both: 0,
    };
    for s in &ds.sentences {
        let ma = s.distinct_aspects().len() > 1;
        let mo = s.distinct_opinions().len() > 1;
        row.multi_aspect += ma as usize;
        row.multi_opinion += mo as usize;
        row.multi_both += (ma && mo) as usize;
    }
    row
}

/// How gold pairs are wired inside a generated sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldPairing {
    /// Aspect i pairs with opinion i (wrapping the shorter side). A 2x2
    /// sentence yields 2 gold pairs and 2 mismatched candidates.
    Matching,
    /// Every aspect-opinion combination pairs except those where both terms
    /// come from secondary vocabulary pools. The matched/mismatched labels
    /// are then a linear function of term content, so a model whose pair
    /// pathway is linear can separate them.
    Separable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub vocab_size: usize,
    pub sentences: usize,
    pub aspects_per_sentence: (usize, usize),
    pub opinions_per_sentence: (usize, usize),
    pub max_term_tokens: usize,
    pub pairing: GoldPairing,
}

impl SynthSpec {
    /// The corpus used by the contrastive learnability experiments:
    /// two aspects and two opinions per sentence with separable labels.
    pub fn separable(sentences: usize) -> Self {
        Self {
            vocab_size: 200,
            sentences,
            aspects_per_sentence: (2, 2),
            opinions_per_sentence: (2, 2),
            max_term_tokens: 1,
            pairing: GoldPairing::Separable,
        }
    }

    /// A structurally varied corpus for codec and metric exercises.
    pub fn varied(sentences: usize) -> Self {
        Self {
            vocab_size: 200,
            sentences,
            aspects_per_sentence: (1, 3),
            opinions_per_sentence: (1, 3),
            max_term_tokens: 2,
            pairing: GoldPairing::Matching,
        }
    }

    fn pool_size(&self) -> usize {
        self.vocab_size / 5
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 10 {
            return Err(Error::InvalidSpec(format!(
                "vocabulary size {} is too small (need at least 10)",
                self.vocab_size
            )));
        }
        let ranges = [
            ("aspects_per_sentence", self.aspects_per_sentence),
            ("opinions_per_sentence", self.opinions_per_sentence),
        ];
        for (name, (lo, hi)) in ranges {
            if lo == 0 || lo > hi {
                return Err(Error::InvalidSpec(format!(
                    "impossible range {name}=({lo}, {hi})"
                )));
            }
        }
        if self.max_term_tokens == 0 {
            return Err(Error::InvalidSpec("max_term_tokens must be at least 1".into()));
        }
        // Each vocabulary pool must cover the words a single sentence can draw.
        let per_pool = self.pool_size();
        let need_aspect = self.aspects_per_sentence.1.div_ceil(2) * self.max_term_tokens;
        let need_opinion = self.opinions_per_sentence.1.div_ceil(2) * self.max_term_tokens;
        if need_aspect > per_pool || need_opinion > per_pool {
            return Err(Error::InvalidSpec(format!(
                "vocabulary size {} cannot supply {} aspect and {} opinion words per pool of {}",
                self.vocab_size, need_aspect, need_opinion, per_pool
            )));
        }
        Ok(())
    }
}

struct VocabPools {
    aspect_primary: Vec<String>,
    aspect_secondary: Vec<String>,
    opinion_primary: Vec<String>,
    opinion_secondary: Vec<String>,
    filler: Vec<String>,
}

impl VocabPools {
    fn build(spec: &SynthSpec) -> Self {
        let per = spec.pool_size();
        let filler = spec.vocab_size - 4 * per;
        let mk = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i}")).collect();
        Self {
            aspect_primary: mk("ap", per),
            aspect_secondary: mk("as", per),
            opinion_primary: mk("op", per),
            opinion_secondary: mk("os", per),
            filler: mk("w", filler),
        }
    }
}

/// Generate a deterministic synthetic corpus.
///
/// Gold pairs are recoverable from the triplet lists, so matched and
/// mismatched candidate labels survive a round trip through the line format.
pub fn synth_corpus(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let pools = VocabPools::build(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::with_capacity(spec.sentences);
    for _ in 0..spec.sentences {
        sentences.push(synth_sentence(spec, &pools, &mut rng)?);
    }
    Ok(Dataset {
        name: "synth".into(),
        split: Split::Train,
        sentences,
    })
}

fn synth_sentence(spec: &SynthSpec, pools: &VocabPools, rng: &mut ChaCha8Rng) -> Result<Sentence> {
    let n_aspects = rng.gen_range(spec.aspects_per_sentence.0..=spec.aspects_per_sentence.1);
    let n_opinions = rng.gen_range(spec.opinions_per_sentence.0..=spec.opinions_per_sentence.1);

    // Per-sentence shuffled word queues keep every term word unique within
    // the sentence, which keeps earliest-occurrence span resolution exact.
    let mut queues = [
        shuffled(&pools.aspect_primary, rng),
        shuffled(&pools.aspect_secondary, rng),
        shuffled(&pools.opinion_primary, rng),
        shuffled(&pools.opinion_secondary, rng),
    ];

    let mut draw_term = |role_offset: usize, family: usize, rng: &mut ChaCha8Rng| {
        let len = rng.gen_range(1..=spec.max_term_tokens);
        let queue = &mut queues[role_offset + family];
        (0..len).map(|_| queue.pop().expect("pool sized by validate")).collect::<Vec<String>>()
    };

    let aspect_words: Vec<Vec<String>> =
        (0..n_aspects).map(|i| draw_term(0, i % 2, rng)).collect();
    let opinion_words: Vec<Vec<String>> =
        (0..n_opinions).map(|j| draw_term(2, j % 2, rng)).collect();

    let mut tokens: Vec<String> = Vec::new();
    let push_fillers = |tokens: &mut Vec<String>, rng: &mut ChaCha8Rng| {
        for _ in 0..rng.gen_range(0..=2usize) {
            tokens.push(pools.filler[rng.gen_range(0..pools.filler.len())].clone());
        }
    };

    let mut aspect_spans = Vec::with_capacity(n_aspects);
    let mut opinion_spans = Vec::with_capacity(n_opinions);
    for k in 0..n_aspects.max(n_opinions) {
        if k < n_aspects {
            push_fillers(&mut tokens, rng);
            let start = tokens.len();
            tokens.extend(aspect_words[k].iter().cloned());
            aspect_spans.push(Span::new(start, tokens.len() - 1));
        }
        if k < n_opinions {
            push_fillers(&mut tokens, rng);
            let start = tokens.len();
            tokens.extend(opinion_words[k].iter().cloned());
            opinion_spans.push(Span::new(start, tokens.len() - 1));
        }
    }
    push_fillers(&mut tokens, rng);

    let pairs: Vec<(usize, usize)> = match spec.pairing {
        GoldPairing::Matching => (0..n_aspects.max(n_opinions))
            .map(|i| (i % n_aspects, i % n_opinions))
            .collect(),
        GoldPairing::Separable => {
            let mut pairs = Vec::new();
            for i in 0..n_aspects {
                for j in 0..n_opinions {
                    if !(i % 2 == 1 && j % 2 == 1) {
                        pairs.push((i, j));
                    }
                }
            }
            pairs
        }
    };

    let mut triplets = Vec::with_capacity(pairs.len());
    let mut seen = HashSet::new();
    for (i, j) in pairs {
        if !seen.insert((i, j)) {
            continue;
        }
        let sentiment = SentimentPolarity::ALL[rng.gen_range(0..3)];
        triplets.push(Triplet {
            aspect: aspect_spans[i],
            opinion: opinion_spans[j],
            sentiment,
        });
    }

    Sentence::new(tokens, triplets)
}

fn shuffled(pool: &[String], rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut v = pool.to_vec();
    v.shuffle(rng);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(line: &str) -> Sentence {
        parse_dataset_line(line).unwrap()
    }

    #[test]
    fn parses_simple_line() {
        let s = sentence("Nice keyboard .####[([1], [0], 'POS')]");
        assert_eq!(s.tokens(), &["Nice", "keyboard", "."]);
        assert_eq!(
            s.triplets(),
            &[Triplet {
                aspect: Span::new(1, 1),
                opinion: Span::new(0, 0),
                sentiment: SentimentPolarity::Positive,
            }]
        );
    }

    #[test]
    fn parses_empty_triplet_list() {
        let s = sentence("a b####[]");
        assert_eq!(s.len(), 2);
        assert!(s.triplets().is_empty());
    }

    #[test]
    fn parses_multiword_span() {
        let s = sentence("battery life could be better .####[([0, 1], [4], 'NEG')]");
        assert_eq!(s.triplets()[0].aspect, Span::new(0, 1));
        assert_eq!(s.term_text(s.triplets()[0].aspect), "battery life");
    }

    #[test]
    fn rejects_missing_separator() {
        assert!(matches!(
            parse_dataset_line("bad line with no separator"),
            Err(Error::MalformedLine(_))
        ));
    }

    #[test]
    fn rejects_double_separator() {
        assert!(matches!(
            parse_dataset_line("a####b####[]"),
            Err(Error::MalformedLine(_))
        ));
    }

    #[test]
    fn rejects_out_of_range_index() {
        assert!(matches!(
            parse_dataset_line("a b####[([2], [0], 'POS')]"),
            Err(Error::BadIndex(_))
        ));
    }

    #[test]
    fn rejects_non_contiguous_indices() {
        assert!(matches!(
            parse_dataset_line("a b c d####[([0, 2], [3], 'POS')]"),
            Err(Error::BadIndex(_))
        ));
    }

    #[test]
    fn rejects_unknown_tag() {
        assert!(matches!(
            parse_dataset_line("a b####[([0], [1], 'BAD')]"),
            Err(Error::BadTag(_))
        ));
    }

    #[test]
    fn stats_single_triplet_sentence() {
        let ds = Dataset {
            name: "t".into(),
            split: Split::Train,
            sentences: vec![sentence("Nice keyboard .####[([1], [0], 'POS')]")],
        };
        let row = dataset_stats(&ds);
        assert_eq!((row.sentences, row.multi_aspect, row.multi_opinion, row.multi_both), (1, 0, 0, 0));
    }

    #[test]
    fn stats_shared_aspect_two_opinions() {
        // Two triplets share an aspect but have distinct opinions.
        let ds = Dataset {
            name: "t".into(),
            split: Split::Train,
            sentences: vec![sentence(
                "battery lasts long and stays cool .####[([0], [2], 'POS'), ([0], [5], 'POS')]",
            )],
        };
        let row = dataset_stats(&ds);
        assert_eq!((row.sentences, row.multi_aspect, row.multi_opinion, row.multi_both), (1, 0, 1, 0));
    }

    #[test]
    fn load_dataset_counts_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ok = dir.path().join("ok.txt");
        std::fs::write(
            &ok,
            "a b####[([0], [1], 'POS')]\n\nc d####[]\ne f####[([1], [0], 'NEG')]\n",
        )
        .unwrap();
        let ds = load_dataset(&ok, "t", Split::Train).unwrap();
        assert_eq!(ds.sentences.len(), 3);

        let empty = dir.path().join("empty.txt");
        std::fs::write(&empty, "").unwrap();
        assert_eq!(load_dataset(&empty, "t", Split::Train).unwrap().sentences.len(), 0);

        let bad = dir.path().join("bad.txt");
        std::fs::write(&bad, "no separator here\n").unwrap();
        let err = load_dataset(&bad, "t", Split::Train).unwrap_err();
        assert!(err.to_string().starts_with("line 1:"), "got {err}");
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = SynthSpec::varied(50);
        let a = synth_corpus(&spec, 7).unwrap();
        let b = synth_corpus(&spec, 7).unwrap();
        let lines = |ds: &Dataset| {
            ds.sentences.iter().map(serialize_dataset_line).collect::<Vec<_>>().join("\n")
        };
        assert_eq!(lines(&a), lines(&b));
        let c = synth_corpus(&spec, 8).unwrap();
        assert_ne!(lines(&a), lines(&c));
    }

    #[test]
    fn synth_two_by_two_matching_counts() {
        let spec = SynthSpec {
            vocab_size: 200,
            sentences: 20,
            aspects_per_sentence: (2, 2),
            opinions_per_sentence: (2, 2),
            max_term_tokens: 1,
            pairing: GoldPairing::Matching,
        };
        let ds = synth_corpus(&spec, 3).unwrap();
        for s in &ds.sentences {
            let gold = s.gold_pairs();
            assert_eq!(gold.len(), 2);
            let candidates = s.distinct_aspects().len() * s.distinct_opinions().len();
            assert_eq!(candidates - gold.len(), 2);
        }
    }

    #[test]
    fn synth_two_by_two_separable_counts() {
        let ds = synth_corpus(&SynthSpec::separable(20), 3).unwrap();
        for s in &ds.sentences {
            assert_eq!(s.distinct_aspects().len(), 2);
            assert_eq!(s.distinct_opinions().len(), 2);
            assert_eq!(s.gold_pairs().len(), 3);
        }
    }

    #[test]
    fn synth_zero_sentences() {
        let mut spec = SynthSpec::varied(0);
        spec.sentences = 0;
        assert!(synth_corpus(&spec, 1).unwrap().sentences.is_empty());
    }

    #[test]
    fn synth_rejects_bad_specs() {
        let mut spec = SynthSpec::varied(5);
        spec.vocab_size = 0;
        assert!(matches!(synth_corpus(&spec, 1), Err(Error::InvalidSpec(_))));

        let mut spec = SynthSpec::varied(5);
        spec.aspects_per_sentence = (3, 2);
        assert!(matches!(synth_corpus(&spec, 1), Err(Error::InvalidSpec(_))));

        let mut spec = SynthSpec::varied(5);
        spec.opinions_per_sentence = (0, 1);
        assert!(matches!(synth_corpus(&spec, 1), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn stats_inequalities_hold_on_synth() {
        let ds = synth_corpus(&SynthSpec::varied(100), 11).unwrap();
        let row = dataset_stats(&ds);
        assert!(row.multi_both <= row.multi_aspect);
        assert!(row.multi_both <= row.multi_opinion);
        assert!(row.multi_aspect <= row.sentences);
        assert!(row.multi_opinion <= row.sentences);
    }
}
