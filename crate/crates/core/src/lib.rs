//! Cross-lingual representation toolkit.
//!
//! Desk-scale building blocks for studying multilingual encoders:
//! orthogonal embedding-space alignment and CSLS retrieval, representation
//! similarity (linear CKA), explicit alignment losses with analytic
//! gradients, annotation projection over word alignments, synthetic corpus
//! generation (code-switching, MLM masking), checkpoint interpolation, and
//! subword-overlap statistics.

pub mod align;
pub mod io;
pub mod losses;
pub mod projection;
pub mod similarity;
pub mod types;

pub use types::{
    AnnotatedSentence, EmbeddingSpace, LinkSet, ParamEntry, ParamVector, TypeError,
    WeightedDictionary,
};
