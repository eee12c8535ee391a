//! Domain types shared across the toolkit.
//!
//! Constructors validate the type invariants; every value that exists is
//! well-formed. Readers in [`crate::io`] report invariant violations as
//! format errors with positions.

use std::collections::{BTreeSet, HashMap};

use indexmap::IndexMap;
use nalgebra::DMatrix;
use thiserror::Error;

/// Invariant violation raised by a domain-type constructor.
#[derive(Debug, Error)]
pub enum TypeError {
    #[error("item count ({items}) does not match column count ({columns})")]
    ItemCountMismatch { items: usize, columns: usize },
    #[error("duplicate item `{0}`")]
    DuplicateItem(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("embedding dimension must be positive")]
    ZeroDimension,
    #[error("annotation layer `{layer}` has length {got}, expected {expected}")]
    LayerLengthMismatch {
        layer: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("head index {head} out of range for sentence of length {len}")]
    HeadOutOfRange { head: usize, len: usize },
    #[error("head graph is not a tree: {0}")]
    NotATree(String),
    #[error("alignment link ({src}, {tgt}) outside sentence lengths ({src_len}, {tgt_len})")]
    LinkOutOfRange {
        src: usize,
        tgt: usize,
        src_len: usize,
        tgt_len: usize,
    },
    #[error("sure links are not a subset of possible links")]
    SureNotSubset,
    #[error("gold alignments have mismatched sentence lengths")]
    GoldLengthMismatch,
    #[error("parameter `{name}`: data length {got} does not match shape product {expected}")]
    ShapeDataMismatch {
        name: String,
        got: usize,
        expected: usize,
    },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("parameter name `{0}` contains a tab or newline")]
    InvalidName(String),
    #[error("parameter `{0}`: shape product overflows")]
    ShapeOverflow(String),
    #[error("dictionary source `{0}` has no translations")]
    EmptyTranslations(String),
    #[error("dictionary entry `{word}` -> `{target}`: negative weight {weight}")]
    NegativeWeight {
        word: String,
        target: String,
        weight: f64,
    },
    #[error("dictionary source `{0}`: all translation weights are zero")]
    AllZeroWeights(String),
    #[error("empty token in dictionary entry")]
    EmptyToken,
}

/// A vocabulary plus a `d x n` matrix of column vectors, one per item.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    items: Vec<String>,
    vectors: DMatrix<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingSpace {
    /// Builds a space from items and a `d x n` matrix whose column `j` is the
    /// vector of item `j`.
    pub fn new(items: Vec<String>, vectors: DMatrix<f64>) -> Result<Self, TypeError> {
        if vectors.nrows() == 0 {
            return Err(TypeError::ZeroDimension);
        }
        if items.len() != vectors.ncols() {
            return Err(TypeError::ItemCountMismatch {
                items: items.len(),
                columns: vectors.ncols(),
            });
        }
        let mut index = HashMap::with_capacity(items.len());
        for (j, item) in items.iter().enumerate() {
            if index.insert(item.clone(), j).is_some() {
                return Err(TypeError::DuplicateItem(item.clone()));
            }
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(TypeError::NonFinite("embedding matrix".into()));
        }
        Ok(Self {
            items,
            vectors,
            index,
        })
    }

    pub fn dimension(&self) -> usize {
        self.vectors.nrows()
    }

    /// Number of items (columns).
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Column index of `item`, if present.
    pub fn position(&self, item: &str) -> Option<usize> {
        self.index.get(item).copied()
    }
}

/// Tokens with optional POS tags, BIO labels, and dependency heads/relations.
///
/// Head indices use the CoNLL-U convention: `0` is the artificial root and
/// real tokens are 1-based. Layers produced by annotation projection may be
/// partial, hence the per-token `Option`s.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedSentence {
    tokens: Vec<String>,
    pos: Option<Vec<Option<String>>>,
    bio: Option<Vec<String>>,
    heads: Option<Vec<Option<usize>>>,
    deprels: Option<Vec<Option<String>>>,
}

impl AnnotatedSentence {
    pub fn new(
        tokens: Vec<String>,
        pos: Option<Vec<Option<String>>>,
        bio: Option<Vec<String>>,
        heads: Option<Vec<Option<usize>>>,
        deprels: Option<Vec<Option<String>>>,
    ) -> Result<Self, TypeError> {
        let n = tokens.len();
        let check_len = |layer: &'static str, got: usize| {
            if got == n {
                Ok(())
            } else {
                Err(TypeError::LayerLengthMismatch {
                    layer,
                    got,
                    expected: n,
                })
            }
        };
        if let Some(p) = &pos {
            check_len("pos", p.len())?;
        }
        if let Some(b) = &bio {
            check_len("bio", b.len())?;
        }
        if let Some(d) = &deprels {
            check_len("deprels", d.len())?;
        }
        if let Some(h) = &heads {
            check_len("heads", h.len())?;
            validate_heads(h, n)?;
        }
        Ok(Self {
            tokens,
            pos,
            bio,
            heads,
            deprels,
        })
    }

    /// Sentence with tokens only, no annotation layers.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        Self {
            tokens,
            pos: None,
            bio: None,
            heads: None,
            deprels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pos(&self) -> Option<&[Option<String>]> {
        self.pos.as_deref()
    }

    pub fn bio(&self) -> Option<&[String]> {
        self.bio.as_deref()
    }

    pub fn heads(&self) -> Option<&[Option<usize>]> {
        self.heads.as_deref()
    }

    pub fn deprels(&self) -> Option<&[Option<String>]> {
        self.deprels.as_deref()
    }
}

/// Range check plus acyclicity; a fully annotated layer must additionally
/// have exactly one root.
fn validate_heads(heads: &[Option<usize>], n: usize) -> Result<(), TypeError> {
    for h in heads.iter().flatten() {
        if *h > n {
            return Err(TypeError::HeadOutOfRange { head: *h, len: n });
        }
    }
    let complete = heads.iter().all(|h| h.is_some());
    if complete {
        let roots = heads.iter().filter(|h| **h == Some(0)).count();
        if roots != 1 {
            return Err(TypeError::NotATree(format!("{roots} roots")));
        }
    }
    // Walk ancestor chains; a defined chain longer than n tokens means a cycle.
    for start in 0..n {
        let mut current = start;
        let mut steps = 0;
        while let Some(Some(h)) = heads.get(current) {
            if *h == 0 {
                break;
            }
            current = *h - 1;
            steps += 1;
            if steps > n {
                return Err(TypeError::NotATree(format!(
                    "cycle through token {}",
                    start + 1
                )));
            }
        }
    }
    Ok(())
}

/// Word-alignment links for one sentence pair: 0-based `(source, target)`
/// index pairs plus the two sentence lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkSet {
    links: BTreeSet<(usize, usize)>,
    source_len: usize,
    target_len: usize,
}

impl LinkSet {
    pub fn new(
        links: impl IntoIterator<Item = (usize, usize)>,
        source_len: usize,
        target_len: usize,
    ) -> Result<Self, TypeError> {
        let links: BTreeSet<_> = links.into_iter().collect();
        for &(s, t) in &links {
            if s >= source_len || t >= target_len {
                return Err(TypeError::LinkOutOfRange {
                    src: s,
                    tgt: t,
                    src_len: source_len,
                    tgt_len: target_len,
                });
            }
        }
        Ok(Self {
            links,
            source_len,
            target_len,
        })
    }

    /// Builds a link set inferring lengths as `max index + 1` per side.
    pub fn from_pairs_inferred(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let links: BTreeSet<_> = pairs.into_iter().collect();
        let source_len = links.iter().map(|&(s, _)| s + 1).max().unwrap_or(0);
        let target_len = links.iter().map(|&(_, t)| t + 1).max().unwrap_or(0);
        Self {
            links,
            source_len,
            target_len,
        }
    }

    /// Same links under explicit (usually larger) sentence lengths.
    pub fn with_lengths(&self, source_len: usize, target_len: usize) -> Result<Self, TypeError> {
        Self::new(self.links.iter().copied(), source_len, target_len)
    }

    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.links.iter().copied()
    }

    pub fn contains(&self, link: (usize, usize)) -> bool {
        self.links.contains(&link)
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn target_len(&self) -> usize {
        self.target_len
    }
}

/// Named, shaped, flat `f32` parameter arrays representing a model checkpoint.
///
/// Entry order is preserved; it is part of the on-disk PVEC contract.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector {
    entries: IndexMap<String, ParamEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        data: Vec<f32>,
    ) -> Result<(), TypeError> {
        let name = name.into();
        if name.contains('\t') || name.contains('\n') {
            return Err(TypeError::InvalidName(name));
        }
        let expected = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| TypeError::ShapeOverflow(name.clone()))?;
        if data.len() != expected {
            return Err(TypeError::ShapeDataMismatch {
                name,
                got: data.len(),
                expected,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TypeError::NonFinite(format!("parameter `{name}`")));
        }
        if self.entries.contains_key(&name) {
            return Err(TypeError::DuplicateName(name));
        }
        self.entries.insert(name, ParamEntry { shape, data });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar values across all entries.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(|e| e.data.len()).sum()
    }

    /// Checks that `other` has identical names and shapes in identical order.
    pub fn same_structure(&self, other: &Self) -> Result<(), TypeError> {
        if self.entries.len() != other.entries.len() {
            return Err(TypeError::ShapeDataMismatch {
                name: "<structure>".into(),
                got: other.entries.len(),
                expected: self.entries.len(),
            });
        }
        for ((na, ea), (nb, eb)) in self.entries.iter().zip(other.entries.iter()) {
            if na != nb {
                return Err(TypeError::DuplicateName(format!(
                    "name mismatch: `{na}` vs `{nb}`"
                )));
            }
            if ea.shape != eb.shape {
                return Err(TypeError::ShapeDataMismatch {
                    name: na.clone(),
                    got: eb.data.len(),
                    expected: ea.data.len(),
                });
            }
        }
        Ok(())
    }
}

/// Mapping from source word to weighted translations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightedDictionary {
    entries: IndexMap<String, Vec<(String, f64)>>,
}

impl WeightedDictionary {
    /// Groups `(source, target, weight)` rows by source word, preserving
    /// first-appearance order of sources and row order of translations.
    pub fn from_rows(
        rows: impl IntoIterator<Item = (String, String, f64)>,
    ) -> Result<Self, TypeError> {
        let mut entries: IndexMap<String, Vec<(String, f64)>> = IndexMap::new();
        for (source, target, weight) in rows {
            if source.is_empty() || target.is_empty() {
                return Err(TypeError::EmptyToken);
            }
            if !weight.is_finite() || weight < 0.0 {
                return Err(TypeError::NegativeWeight {
                    word: source,
                    target,
                    weight,
                });
            }
            entries.entry(source).or_default().push((target, weight));
        }
        for (source, translations) in &entries {
            if translations.is_empty() {
                return Err(TypeError::EmptyTranslations(source.clone()));
            }
            if translations.iter().all(|(_, w)| *w == 0.0) {
                return Err(TypeError::AllZeroWeights(source.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn translations(&self, source: &str) -> Option<&[(String, f64)]> {
        self.entries.get(source).map(Vec::as_slice)
    }

    pub fn contains(&self, source: &str) -> bool {
        self.entries.contains_key(source)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[(String, f64)])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
