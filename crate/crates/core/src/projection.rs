//! Silver-annotation creation: project word-level annotations from a source
//! sentence to its translation along word alignments, plus aligner
//! evaluation.
//!
//! Deterministic tie-breaks fixed here (and covered by tests):
//! token projection takes the label of the lowest-index aligned source;
//! span-overlap resolution keeps the span with the longer source, then the
//! lower target start; grow-diag-final-and processes candidate union links
//! in row-major order until fixpoint.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::types::{AnnotatedSentence, LinkSet, TypeError};

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("sentence lengths differ: ({0}, {1}) vs ({2}, {3})")]
    LengthMismatch(usize, usize, usize, usize),
    #[error("labels length {0} does not match source length {1}")]
    LabelCountMismatch(usize, usize),
    #[error("target length {0} does not match link set target length {1}")]
    TargetLengthMismatch(usize, usize),
    #[error("input spans overlap: [{0}, {1}] and [{2}, {3}]")]
    OverlappingSpans(usize, usize, usize, usize),
    #[error("span [{0}, {1}] out of bounds for length {2}")]
    SpanOutOfBounds(usize, usize, usize),
    #[error("sentence has no complete dependency head layer")]
    MissingHeads,
    #[error("malformed BIO tag `{0}`")]
    MalformedTag(String),
    #[error("gold sure set is empty")]
    EmptySureSet,
    #[error("length ratio must be positive")]
    InvalidRatio,
    #[error("corpus size mismatch: {0} predictions vs {1} gold")]
    CorpusSizeMismatch(usize, usize),
    #[error(transparent)]
    Type(#[from] TypeError),
}

/// A labeled token span, inclusive on both ends, 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl Span {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Self {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// Gold word alignments with sure and possible links, `sure` being a subset
/// of `possible`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldAlignment {
    sure: LinkSet,
    possible: LinkSet,
}

impl GoldAlignment {
    pub fn new(sure: LinkSet, possible: LinkSet) -> Result<Self, ProjectionError> {
        if sure.source_len() != possible.source_len()
            || sure.target_len() != possible.target_len()
        {
            return Err(ProjectionError::LengthMismatch(
                sure.source_len(),
                sure.target_len(),
                possible.source_len(),
                possible.target_len(),
            ));
        }
        if !sure.links().all(|l| possible.contains(l)) {
            return Err(ProjectionError::Type(TypeError::SureNotSubset));
        }
        Ok(Self { sure, possible })
    }

    /// Gold standard where every link is sure (`possible = sure`).
    pub fn sure_only(sure: LinkSet) -> Self {
        Self {
            possible: sure.clone(),
            sure,
        }
    }

    pub fn sure(&self) -> &LinkSet {
        &self.sure
    }

    pub fn possible(&self) -> &LinkSet {
        &self.possible
    }
}

const NEIGHBORS: [(isize, isize); 8] = [
    (-1, 0),
    (0, -1),
    (1, 0),
    (0, 1),
    (-1, -1),
    (-1, 1),
    (1, -1),
    (1, 1),
];

/// The grow-diag-final-and symmetrization heuristic. Starts from the
/// intersection of the two directional alignments; grows with candidate
/// union links 8-adjacent to the current alignment whose source or target
/// word is still unaligned; the final-and pass adds union links with both
/// endpoints unaligned.
pub fn symmetrize_gdfa(
    forward: &LinkSet,
    backward: &LinkSet,
) -> Result<LinkSet, ProjectionError> {
    if forward.source_len() != backward.source_len()
        || forward.target_len() != backward.target_len()
    {
        return Err(ProjectionError::LengthMismatch(
            forward.source_len(),
            forward.target_len(),
            backward.source_len(),
            backward.target_len(),
        ));
    }
    let src_len = forward.source_len();
    let tgt_len = forward.target_len();

    let union: BTreeSet<(usize, usize)> = forward.links().chain(backward.links()).collect();
    let mut alignment: BTreeSet<(usize, usize)> =
        forward.links().filter(|&l| backward.contains(l)).collect();
    let mut src_aligned = vec![false; src_len];
    let mut tgt_aligned = vec![false; tgt_len];
    for &(i, j) in &alignment {
        src_aligned[i] = true;
        tgt_aligned[j] = true;
    }

    // Grow-diag: row-major candidate scan until fixpoint, effects immediate.
    loop {
        let mut added = false;
        for &(i, j) in &union {
            if alignment.contains(&(i, j)) {
                continue;
            }
            if src_aligned[i] && tgt_aligned[j] {
                continue;
            }
            let adjacent = NEIGHBORS.iter().any(|&(di, dj)| {
                let ni = i as isize + di;
                let nj = j as isize + dj;
                ni >= 0
                    && nj >= 0
                    && (ni as usize) < src_len
                    && (nj as usize) < tgt_len
                    && alignment.contains(&(ni as usize, nj as usize))
            });
            if adjacent {
                alignment.insert((i, j));
                src_aligned[i] = true;
                tgt_aligned[j] = true;
                added = true;
            }
        }
        if !added {
            break;
        }
    }

    // Final-and: both endpoints must be unaligned.
    for &(i, j) in &union {
        if !src_aligned[i] && !tgt_aligned[j] {
            alignment.insert((i, j));
            src_aligned[i] = true;
            tgt_aligned[j] = true;
        }
    }

    Ok(LinkSet::new(alignment, src_len, tgt_len)?)
}

/// Keeps only one-to-one links and discards trivial links whose source and
/// target tokens are byte-identical.
pub fn filter_one_to_one(
    links: &LinkSet,
    source_tokens: &[String],
    target_tokens: &[String],
) -> Result<LinkSet, ProjectionError> {
    if source_tokens.len() != links.source_len() || target_tokens.len() != links.target_len() {
        return Err(ProjectionError::LengthMismatch(
            source_tokens.len(),
            target_tokens.len(),
            links.source_len(),
            links.target_len(),
        ));
    }
    let mut src_count = vec![0usize; links.source_len()];
    let mut tgt_count = vec![0usize; links.target_len()];
    for (i, j) in links.links() {
        src_count[i] += 1;
        tgt_count[j] += 1;
    }
    let kept = links.links().filter(|&(i, j)| {
        src_count[i] == 1 && tgt_count[j] == 1 && source_tokens[i] != target_tokens[j]
    });
    Ok(LinkSet::new(kept, links.source_len(), links.target_len())?)
}

/// Token-based projection: each aligned target token takes the label of its
/// lowest-index aligned source token; unaligned targets stay unlabeled.
pub fn project_tokens(
    labels: &[String],
    links: &LinkSet,
    target_len: usize,
) -> Result<Vec<Option<String>>, ProjectionError> {
    if labels.len() != links.source_len() {
        return Err(ProjectionError::LabelCountMismatch(
            labels.len(),
            links.source_len(),
        ));
    }
    if target_len != links.target_len() {
        return Err(ProjectionError::TargetLengthMismatch(
            target_len,
            links.target_len(),
        ));
    }
    let mut out = vec![None; target_len];
    for (i, j) in links.links() {
        match &out[j] {
            None => out[j] = Some((i, labels[i].clone())),
            Some((best, _)) if i < *best => out[j] = Some((i, labels[i].clone())),
            _ => {}
        }
    }
    Ok(out
        .into_iter()
        .map(|slot| slot.map(|(_, label)| label))
        .collect())
}

/// Span-based projection: the target span is the contiguous cover of all
/// target tokens aligned to the source span. Spans whose projection is more
/// than `max_length_ratio` times longer than the source are dropped (spans
/// exactly at the ratio are kept). Overlapping projections are resolved by
/// longer source first, then lower target start.
pub fn project_spans(
    spans: &[Span],
    links: &LinkSet,
    target_len: usize,
    max_length_ratio: f64,
) -> Result<Vec<Span>, ProjectionError> {
    if max_length_ratio <= 0.0 {
        return Err(ProjectionError::InvalidRatio);
    }
    if target_len != links.target_len() {
        return Err(ProjectionError::TargetLengthMismatch(
            target_len,
            links.target_len(),
        ));
    }
    let mut sorted: Vec<&Span> = spans.iter().collect();
    sorted.sort_by_key(|s| s.start);
    for span in &sorted {
        if span.end < span.start || span.end >= links.source_len() {
            return Err(ProjectionError::SpanOutOfBounds(
                span.start,
                span.end,
                links.source_len(),
            ));
        }
    }
    for pair in sorted.windows(2) {
        if pair[0].overlaps(pair[1]) {
            return Err(ProjectionError::OverlappingSpans(
                pair[0].start,
                pair[0].end,
                pair[1].start,
                pair[1].end,
            ));
        }
    }

    let mut candidates: Vec<(Span, usize)> = Vec::new();
    for span in spans {
        let mut lo = usize::MAX;
        let mut hi = 0usize;
        let mut any = false;
        for (i, j) in links.links() {
            if i >= span.start && i <= span.end {
                lo = lo.min(j);
                hi = hi.max(j);
                any = true;
            }
        }
        if !any {
            continue;
        }
        let projected = Span::new(lo, hi, span.label.clone());
        if projected.len() as f64 > max_length_ratio * span.len() as f64 {
            continue;
        }
        candidates.push((projected, span.len()));
    }

    candidates.sort_by(|(a, alen), (b, blen)| {
        blen.cmp(alen)
            .then(a.start.cmp(&b.start))
            .then(a.end.cmp(&b.end))
    });
    let mut kept: Vec<Span> = Vec::new();
    for (candidate, _) in candidates {
        if kept.iter().all(|k| !k.overlaps(&candidate)) {
            kept.push(candidate);
        }
    }
    kept.sort_by_key(|s| s.start);
    Ok(kept)
}

/// Dependency projection with the two disambiguation rules: when several
/// source tokens align to one target token, the target represents the
/// source node highest in the tree (ties to the lowest index); when a
/// source head is unaligned, the closest aligned ancestor becomes the head,
/// with the virtual root mapping to root. A source node aligned to several
/// target tokens is represented by the lowest-index one. Targets that
/// cannot be resolved stay unannotated.
pub fn project_dependencies(
    sentence: &AnnotatedSentence,
    links: &LinkSet,
    target_len: usize,
) -> Result<(Vec<Option<usize>>, Vec<Option<String>>), ProjectionError> {
    let heads: Vec<usize> = sentence
        .heads()
        .and_then(|h| h.iter().map(|x| *x).collect::<Option<Vec<_>>>())
        .ok_or(ProjectionError::MissingHeads)?;
    if sentence.len() != links.source_len() {
        return Err(ProjectionError::LabelCountMismatch(
            sentence.len(),
            links.source_len(),
        ));
    }
    if target_len != links.target_len() {
        return Err(ProjectionError::TargetLengthMismatch(
            target_len,
            links.target_len(),
        ));
    }

    let n = sentence.len();
    // Root-distance per source token; head 0 marks the root token.
    let mut depth = vec![usize::MAX; n];
    fn depth_of(i: usize, heads: &[usize], depth: &mut [usize]) -> usize {
        if depth[i] != usize::MAX {
            return depth[i];
        }
        let d = if heads[i] == 0 {
            0
        } else {
            depth_of(heads[i] - 1, heads, depth) + 1
        };
        depth[i] = d;
        d
    }
    for i in 0..n {
        depth_of(i, &heads, &mut depth);
    }

    // image[a]: lowest-index target aligned to source a.
    let mut image: Vec<Option<usize>> = vec![None; n];
    // representative[t]: source with minimal root-distance among those
    // aligned to t, ties to the lowest source index.
    let mut representative: Vec<Option<usize>> = vec![None; target_len];
    for (i, j) in links.links() {
        if image[i].is_none() {
            image[i] = Some(j);
        }
        representative[j] = match representative[j] {
            None => Some(i),
            Some(prev) if depth[i] < depth[prev] => Some(i),
            keep => keep,
        };
    }

    let mut out_heads = vec![None; target_len];
    let mut out_deprels = vec![None; target_len];
    for t in 0..target_len {
        let Some(src) = representative[t] else {
            continue;
        };
        // Walk ancestors from the source's head to the first aligned one.
        let mut walk = heads[src];
        let head = loop {
            if walk == 0 {
                break Some(0);
            }
            let ancestor = walk - 1;
            if let Some(img) = image[ancestor] {
                break Some(img + 1);
            }
            walk = heads[ancestor];
        };
        debug_assert_ne!(head, Some(t + 1), "self-head cannot arise");
        out_heads[t] = head;
        out_deprels[t] = sentence.deprels().and_then(|d| d[src].clone());
    }
    Ok((out_heads, out_deprels))
}

enum BioTag {
    Outside,
    Begin(String),
    Inside(String),
}

fn parse_bio_tag(label: &str) -> Result<BioTag, ProjectionError> {
    if label == "O" {
        return Ok(BioTag::Outside);
    }
    match label.split_once('-') {
        Some(("B", t)) if !t.is_empty() => Ok(BioTag::Begin(t.to_string())),
        Some(("I", t)) if !t.is_empty() => Ok(BioTag::Inside(t.to_string())),
        _ => Err(ProjectionError::MalformedTag(label.to_string())),
    }
}

/// True when every `I-t` continues a same-type segment.
pub fn is_valid_bio(labels: &[String]) -> bool {
    let mut current: Option<String> = None;
    for label in labels {
        match parse_bio_tag(label) {
            Ok(BioTag::Outside) => current = None,
            Ok(BioTag::Begin(t)) => current = Some(t),
            Ok(BioTag::Inside(t)) => {
                if current.as_deref() != Some(t.as_str()) {
                    return false;
                }
            }
            Err(_) => return false,
        }
    }
    true
}

/// Rewrites a possibly-invalid BIO sequence into a valid one: every segment
/// (a `B` plus its trailing `I`s, or a run of stray `I`s) becomes
/// `B-t I-t .. I-t` where `t` is the segment's final type.
pub fn repair_bio(labels: &[String]) -> Result<Vec<String>, ProjectionError> {
    let tags: Vec<BioTag> = labels
        .iter()
        .map(|l| parse_bio_tag(l))
        .collect::<Result<_, _>>()?;
    let mut out = vec![String::new(); labels.len()];
    let mut segment: Vec<usize> = Vec::new();
    let mut segment_type = String::new();

    let mut flush = |segment: &mut Vec<usize>, ty: &str, out: &mut Vec<String>| {
        for (pos, &idx) in segment.iter().enumerate() {
            out[idx] = if pos == 0 {
                format!("B-{ty}")
            } else {
                format!("I-{ty}")
            };
        }
        segment.clear();
    };

    for (i, tag) in tags.iter().enumerate() {
        match tag {
            BioTag::Outside => {
                flush(&mut segment, &segment_type, &mut out);
                out[i] = "O".to_string();
            }
            BioTag::Begin(t) => {
                flush(&mut segment, &segment_type, &mut out);
                segment.push(i);
                segment_type = t.clone();
            }
            BioTag::Inside(t) => {
                // A stray I opens a segment; any I updates the final type.
                segment.push(i);
                segment_type = t.clone();
            }
        }
    }
    flush(&mut segment, &segment_type, &mut out);
    debug_assert!(is_valid_bio(&out));
    Ok(out)
}

/// Decodes a valid BIO sequence into labeled spans.
pub fn spans_from_bio(labels: &[String]) -> Result<Vec<Span>, ProjectionError> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (i, label) in labels.iter().enumerate() {
        match parse_bio_tag(label)? {
            BioTag::Outside => {
                if let Some((start, ty)) = open.take() {
                    spans.push(Span::new(start, i - 1, ty));
                }
            }
            BioTag::Begin(t) => {
                if let Some((start, ty)) = open.take() {
                    spans.push(Span::new(start, i - 1, ty));
                }
                open = Some((i, t));
            }
            BioTag::Inside(t) => match &open {
                Some((_, ty)) if *ty == t => {}
                _ => return Err(ProjectionError::MalformedTag(label.clone())),
            },
        }
    }
    if let Some((start, ty)) = open {
        spans.push(Span::new(start, labels.len() - 1, ty));
    }
    Ok(spans)
}

/// Encodes non-overlapping spans as a BIO sequence of the given length.
pub fn spans_to_bio(spans: &[Span], len: usize) -> Result<Vec<String>, ProjectionError> {
    let mut out = vec!["O".to_string(); len];
    let mut sorted: Vec<&Span> = spans.iter().collect();
    sorted.sort_by_key(|s| s.start);
    for pair in sorted.windows(2) {
        if pair[0].overlaps(pair[1]) {
            return Err(ProjectionError::OverlappingSpans(
                pair[0].start,
                pair[0].end,
                pair[1].start,
                pair[1].end,
            ));
        }
    }
    for span in &sorted {
        if span.end >= len {
            return Err(ProjectionError::SpanOutOfBounds(span.start, span.end, len));
        }
        out[span.start] = format!("B-{}", span.label);
        for slot in out.iter_mut().take(span.end + 1).skip(span.start + 1) {
            *slot = format!("I-{}", span.label);
        }
    }
    Ok(out)
}

/// Alignment quality against a gold standard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentScores {
    pub aer: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when the prediction was empty and precision is reported as 0 by
    /// convention rather than as a computed ratio.
    pub empty_prediction: bool,
}

fn alignment_counts(predicted: &LinkSet, gold: &GoldAlignment) -> (usize, usize, usize, usize) {
    let a_and_s = predicted.links().filter(|&l| gold.sure().contains(l)).count();
    let a_and_p = predicted
        .links()
        .filter(|&l| gold.possible().contains(l))
        .count();
    (predicted.len(), gold.sure().len(), a_and_s, a_and_p)
}

fn scores_from_counts(
    a: usize,
    s: usize,
    a_and_s: usize,
    a_and_p: usize,
) -> Result<AlignmentScores, ProjectionError> {
    if s == 0 {
        return Err(ProjectionError::EmptySureSet);
    }
    let empty_prediction = a == 0;
    let precision = if empty_prediction {
        0.0
    } else {
        a_and_p as f64 / a as f64
    };
    let recall = a_and_s as f64 / s as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let aer = 1.0 - (a_and_s + a_and_p) as f64 / (a + s) as f64;
    Ok(AlignmentScores {
        aer,
        precision,
        recall,
        f1,
        empty_prediction,
    })
}

/// AER, precision, recall, and F1 of a predicted alignment:
/// `P = |A n P_g| / |A|`, `R = |A n S_g| / |S_g|`,
/// `AER = 1 - (|A n S_g| + |A n P_g|) / (|A| + |S_g|)`, `F = 2PR/(P+R)`.
/// With sure-only gold, `AER = 1 - F`.
pub fn evaluate_alignment(
    predicted: &LinkSet,
    gold: &GoldAlignment,
) -> Result<AlignmentScores, ProjectionError> {
    let (a, s, a_and_s, a_and_p) = alignment_counts(predicted, gold);
    scores_from_counts(a, s, a_and_s, a_and_p)
}

/// Corpus-level scores: counts are summed over sentence pairs before the
/// final ratios.
pub fn evaluate_alignment_corpus(
    predicted: &[LinkSet],
    gold: &[GoldAlignment],
) -> Result<AlignmentScores, ProjectionError> {
    if predicted.len() != gold.len() {
        return Err(ProjectionError::CorpusSizeMismatch(
            predicted.len(),
            gold.len(),
        ));
    }
    let mut totals = (0usize, 0usize, 0usize, 0usize);
    for (p, g) in predicted.iter().zip(gold) {
        let (a, s, a_and_s, a_and_p) = alignment_counts(p, g);
        totals.0 += a;
        totals.1 += s;
        totals.2 += a_and_s;
        totals.3 += a_and_p;
    }
    scores_from_counts(totals.0, totals.1, totals.2, totals.3)
}
