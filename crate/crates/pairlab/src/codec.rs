//! Bidirectional conversion between triplet sets and generative target
//! strings.
//!
//! Two target styles exist. Extraction style concatenates the triplets:
//!
//! ```text
//! (keyboard, Nice, positive); (battery, ok, neutral)
//! ```
//!
//! Annotation style rewrites the sentence in place, replacing each aspect
//! term with a bracket group; an aspect with several opinions extends the
//! same group:
//!
//! ```text
//! Nice [keyboard | positive | Nice] , [battery | neutral | ok] work ok .
//! ```
//!
//! Parsing is total: arbitrary generated text never aborts, malformed
//! groups are skipped and reported as diagnostics. Generated terms that do
//! not literally occur in the source sentence are repaired by mapping them
//! to the closest contiguous token subsequence by character edit distance;
//! a repair costing more than half the term length is treated as
//! unresolvable and the triplet is dropped with a diagnostic.

use std::fmt;

use crate::corpus::{Sentence, SentimentPolarity, Span, Triplet};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetStyle {
    Annotation,
    Extraction,
}

impl fmt::Display for TargetStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Annotation => "annotation",
            Self::Extraction => "extraction",
        })
    }
}

impl std::str::FromStr for TargetStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "annotation" => Ok(Self::Annotation),
            "extraction" => Ok(Self::Extraction),
            other => Err(Error::InvalidSpec(format!("unknown target style {other:?}"))),
        }
    }
}

/// A surface-form triplet, before spans are resolved against the sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StringTriplet {
    pub aspect_text: String,
    pub opinion_text: String,
    pub sentiment: SentimentPolarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    MalformedGroup,
    UnresolvedTerm,
}

/// Structured record for a skipped fragment: what kind of problem, the raw
/// text involved, and why it was skipped.
#[derive(Debug, Clone)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub fragment: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub triplets: Vec<StringTriplet>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Default)]
pub struct ResolveOutcome {
    pub triplets: Vec<Triplet>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Render the gold triplets of a sentence as a target string.
pub fn encode_target(s: &Sentence, style: TargetStyle) -> String {
    match style {
        TargetStyle::Extraction => s
            .triplets()
            .iter()
            .map(|t| {
                format!(
                    "({}, {}, {})",
                    s.term_text(t.aspect),
                    s.term_text(t.opinion),
                    t.sentiment.word()
                )
            })
            .collect::<Vec<_>>()
            .join("; "),
        TargetStyle::Annotation => {
            // Group triplets by aspect span, order-stable, so an aspect with
            // several opinions becomes one bracket group.
            let mut groups: Vec<(Span, Vec<&Triplet>)> = Vec::new();
            for t in s.triplets() {
                if let Some((_, ts)) = groups.iter_mut().find(|(sp, _)| *sp == t.aspect) {
                    ts.push(t);
                } else {
                    groups.push((t.aspect, vec![t]));
                }
            }
            let mut out: Vec<String> = Vec::with_capacity(s.len());
            let mut i = 0;
            while i < s.len() {
                if let Some((span, ts)) = groups.iter().find(|(sp, _)| sp.start == i) {
                    let mut fields = vec![s.term_text(*span)];
                    for t in ts {
                        fields.push(t.sentiment.word().to_string());
                        fields.push(s.term_text(t.opinion));
                    }
                    out.push(format!("[{}]", fields.join(" | ")));
                    i = span.end + 1;
                } else {
                    out.push(s.token(i).to_string());
                    i += 1;
                }
            }
            out.join(" ")
        }
    }
}

/// Extract every well-formed triplet group from generated text.
///
/// Never fails; malformed groups are skipped and recorded.
pub fn parse_target(text: &str, style: TargetStyle) -> ParseOutcome {
    match style {
        TargetStyle::Extraction => parse_extraction(text),
        TargetStyle::Annotation => parse_annotation(text),
    }
}

fn malformed(fragment: &str, reason: impl Into<String>) -> Diagnostic {
    Diagnostic {
        kind: DiagnosticKind::MalformedGroup,
        fragment: fragment.to_string(),
        reason: reason.into(),
    }
}

fn parse_extraction(text: &str) -> ParseOutcome {
    let mut out = ParseOutcome::default();
    for segment in text.split(';') {
        let seg = segment.trim();
        if seg.is_empty() {
            continue;
        }
        let Some(inner) = seg.strip_prefix('(').and_then(|s| s.strip_suffix(')')) else {
            out.diagnostics.push(malformed(seg, "not a parenthesized group"));
            continue;
        };
        let fields: Vec<&str> = inner.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            out.diagnostics.push(malformed(
                seg,
                format!("expected 3 fields, found {}", fields.len()),
            ));
            continue;
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            out.diagnostics.push(malformed(seg, "empty aspect or opinion term"));
            continue;
        }
        let Some(sentiment) = SentimentPolarity::from_word(fields[2]) else {
            out.diagnostics
                .push(malformed(seg, format!("unknown sentiment word {:?}", fields[2])));
            continue;
        };
        out.triplets.push(StringTriplet {
            aspect_text: fields[0].to_string(),
            opinion_text: fields[1].to_string(),
            sentiment,
        });
    }
    out
}

fn parse_annotation(text: &str) -> ParseOutcome {
    let mut out = ParseOutcome::default();
    let mut rest = text;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let Some(close) = after.find(']') else {
            out.diagnostics.push(malformed(&rest[open..], "unterminated group"));
            break;
        };
        let inner = &after[..close];
        parse_annotation_group(inner, &mut out);
        rest = &after[close + 1..];
    }
    out
}

fn parse_annotation_group(inner: &str, out: &mut ParseOutcome) {
    let fields: Vec<&str> = inner.split('|').map(str::trim).collect();
    if fields.len() < 3 || fields.len() % 2 == 0 {
        out.diagnostics.push(malformed(
            inner,
            format!("expected an odd number of fields (>= 3), found {}", fields.len()),
        ));
        return;
    }
    let aspect = fields[0];
    if aspect.is_empty() {
        out.diagnostics.push(malformed(inner, "empty aspect term"));
        return;
    }
    for pair in fields[1..].chunks(2) {
        let (word, opinion) = (pair[0], pair[1]);
        let Some(sentiment) = SentimentPolarity::from_word(word) else {
            out.diagnostics
                .push(malformed(inner, format!("unknown sentiment word {word:?}")));
            continue;
        };
        if opinion.is_empty() {
            out.diagnostics.push(malformed(inner, "empty opinion term"));
            continue;
        }
        out.triplets.push(StringTriplet {
            aspect_text: aspect.to_string(),
            opinion_text: opinion.to_string(),
            sentiment,
        });
    }
}

/// Character-level Levenshtein distance.
pub fn levenshtein(source: &str, target: &str) -> usize {
    let target_chars: Vec<char> = target.chars().collect();
    if source.is_empty() {
        return target_chars.len();
    }
    if target_chars.is_empty() {
        return source.chars().count();
    }
    let mut distances: Vec<usize> = (0..=target_chars.len()).collect();
    for (i, c1) in source.chars().enumerate() {
        let mut sub = i;
        distances[0] = i + 1;
        for (j, c2) in target_chars.iter().enumerate() {
            let dist = (distances[j].min(distances[j + 1]) + 1).min(sub + (c1 != *c2) as usize);
            sub = distances[j + 1];
            distances[j + 1] = dist;
        }
    }
    *distances.last().expect("non-empty")
}

pub(crate) struct NormalizedTerm {
    pub text: String,
    pub span: Span,
    pub distance: usize,
}

/// Map a generated term onto the closest contiguous token subsequence.
///
/// An exact (case-sensitive, whitespace-normalized) occurrence is returned
/// unchanged. Otherwise the candidate subsequences whose token length is
/// within one of the term's are scored by character edit distance, ties
/// broken by earliest start index, then shorter length.
pub fn normalize_term(term: &str, tokens: &[String]) -> Result<String> {
    normalize_term_span(term, tokens).map(|n| n.text)
}

pub(crate) fn normalize_term_span(term: &str, tokens: &[String]) -> Result<NormalizedTerm> {
    if tokens.is_empty() {
        return Err(Error::NoCandidate);
    }
    let n = tokens.len();
    let term_tokens: Vec<&str> = term.split_whitespace().collect();
    let normalized = term_tokens.join(" ");
    let term_len = term_tokens.len();

    if term_len >= 1 && term_len <= n {
        for start in 0..=(n - term_len) {
            if tokens[start..start + term_len]
                .iter()
                .zip(&term_tokens)
                .all(|(tok, t)| tok == t)
            {
                return Ok(NormalizedTerm {
                    text: normalized,
                    span: Span::new(start, start + term_len - 1),
                    distance: 0,
                });
            }
        }
    }

    // Candidate lengths within one of the term's, clamped to what the
    // sentence can supply.
    let mut best: Option<(usize, usize, usize)> = None; // (distance, start, len)
    let lo = term_len.saturating_sub(1).clamp(1, n);
    let hi = (term_len + 1).min(n);
    for len in lo..=hi {
        for start in 0..=(n - len) {
            let candidate = tokens[start..start + len].join(" ");
            let d = levenshtein(&normalized, &candidate);
            let key = (d, start, len);
            if best.map_or(true, |b| key < b) {
                best = Some(key);
            }
        }
    }
    let (distance, start, len) = best.expect("n >= 1 guarantees a candidate");
    Ok(NormalizedTerm {
        text: tokens[start..start + len].join(" "),
        span: Span::new(start, start + len - 1),
        distance,
    })
}

/// Maximum edit distance allowed when repairing a term of `chars` characters.
fn repair_budget(chars: usize) -> usize {
    chars.div_ceil(2)
}

/// Resolve parsed surface triplets onto token spans of the sentence.
///
/// Terms map to their earliest-occurrence span. Triplets with a term that
/// cannot be resolved inside the repair budget are dropped with a
/// diagnostic; the output is deduplicated.
pub fn resolve_triplets(parsed: &[StringTriplet], s: &Sentence) -> ResolveOutcome {
    let mut out = ResolveOutcome::default();
    for st in parsed {
        let aspect = match resolve_term(&st.aspect_text, s, &mut out.diagnostics) {
            Some(span) => span,
            None => continue,
        };
        let opinion = match resolve_term(&st.opinion_text, s, &mut out.diagnostics) {
            Some(span) => span,
            None => continue,
        };
        let t = Triplet {
            aspect,
            opinion,
            sentiment: st.sentiment,
        };
        if !out.triplets.contains(&t) {
            out.triplets.push(t);
        }
    }
    out
}

fn resolve_term(term: &str, s: &Sentence, diagnostics: &mut Vec<Diagnostic>) -> Option<Span> {
    match normalize_term_span(term, s.tokens()) {
        Ok(n) => {
            let budget = repair_budget(term.split_whitespace().collect::<Vec<_>>().join(" ").chars().count());
            if n.distance > budget {
                diagnostics.push(Diagnostic {
                    kind: DiagnosticKind::UnresolvedTerm,
                    fragment: term.to_string(),
                    reason: format!(
                        "closest subsequence {:?} is {} edits away (budget {budget})",
                        n.text, n.distance
                    ),
                });
                None
            } else {
                Some(n.span)
            }
        }
        Err(_) => {
            diagnostics.push(Diagnostic {
                kind: DiagnosticKind::UnresolvedTerm,
                fragment: term.to_string(),
                reason: "sentence has no tokens".into(),
            });
            None
        }
    }
}
