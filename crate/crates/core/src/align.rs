//! Orthogonal alignment of two embedding spaces and translation retrieval.
//!
//! Two fitters are provided: the closed-form Procrustes solution via SVD and
//! a gradient-descent variant that alternates gradient updates with the
//! orthogonality retraction `W <- (1+beta) W - beta (W W^T) W`. Retrieval
//! uses CSLS, cosine similarity corrected by mean neighborhood similarities
//! to mitigate hubness.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::types::EmbeddingSpace;

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("column {0} has zero norm and cannot be normalized")]
    ZeroNormColumn(usize),
    #[error("dimension mismatch: source d={0}, target d={1}")]
    DimensionMismatch(usize, usize),
    #[error("supervision pairs must be non-empty")]
    EmptySupervision,
    #[error("supervision pair ({0}, {1}) out of range")]
    PairOutOfRange(usize, usize),
    #[error("K={k} exceeds {side} item count {n}")]
    InvalidK {
        k: usize,
        side: &'static str,
        n: usize,
    },
    #[error("objective became non-finite after step {0}")]
    Diverged(usize),
    #[error("gold source {0} has no predictions")]
    MissingPredictions(usize),
    #[error("{0}")]
    InvalidParameter(String),
}

/// A d-by-d orthogonal matrix mapping source vectors into the target space.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalMap {
    matrix: DMatrix<f64>,
}

impl OrthogonalMap {
    /// Tolerance on `||W W^T - I||_F` relative to `sqrt(d)`.
    pub const ORTHOGONALITY_TOL: f64 = 1e-4;

    pub fn new(matrix: DMatrix<f64>) -> Result<Self, AlignError> {
        if matrix.nrows() != matrix.ncols() {
            return Err(AlignError::DimensionMismatch(
                matrix.nrows(),
                matrix.ncols(),
            ));
        }
        let map = Self { matrix };
        let d = map.dimension() as f64;
        if map.orthogonality_defect() > Self::ORTHOGONALITY_TOL * d.sqrt() {
            return Err(AlignError::InvalidParameter(
                "matrix is not orthogonal within tolerance".into(),
            ));
        }
        Ok(map)
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `||W W^T - I||_F`.
    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.matrix)
    }

    /// Maps every column of `space` through the matrix.
    pub fn apply(&self, space: &EmbeddingSpace) -> Result<EmbeddingSpace, AlignError> {
        if space.dimension() != self.dimension() {
            return Err(AlignError::DimensionMismatch(
                self.dimension(),
                space.dimension(),
            ));
        }
        let mapped = &self.matrix * space.vectors();
        EmbeddingSpace::new(space.items().to_vec(), mapped)
            .map_err(|e| AlignError::InvalidParameter(e.to_string()))
    }
}

fn orthogonality_defect(w: &DMatrix<f64>) -> f64 {
    let d = w.nrows();
    let mut g = w * w.transpose();
    for i in 0..d {
        g[(i, i)] -= 1.0;
    }
    g.norm()
}

/// Index pairs tying source columns to target columns for supervision.
#[derive(Debug, Clone)]
pub struct SupervisionPairs {
    pairs: Vec<(usize, usize)>,
}

impl SupervisionPairs {
    pub fn new(
        pairs: Vec<(usize, usize)>,
        source_len: usize,
        target_len: usize,
    ) -> Result<Self, AlignError> {
        if pairs.is_empty() {
            return Err(AlignError::EmptySupervision);
        }
        for &(i, j) in &pairs {
            if i >= source_len || j >= target_len {
                return Err(AlignError::PairOutOfRange(i, j));
            }
        }
        Ok(Self { pairs })
    }

    /// Resolves word pairs against the two vocabularies. Unknown words are
    /// skipped; the second value counts skipped pairs.
    pub fn from_words(
        source: &EmbeddingSpace,
        target: &EmbeddingSpace,
        word_pairs: &[(String, String)],
    ) -> Result<(Self, usize), AlignError> {
        let mut pairs = Vec::new();
        let mut skipped = 0;
        for (s, t) in word_pairs {
            match (source.position(s), target.position(t)) {
                (Some(i), Some(j)) => pairs.push((i, j)),
                _ => skipped += 1,
            }
        }
        let sup = Self::new(pairs, source.len(), target.len())?;
        Ok((sup, skipped))
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Alternately unit-normalizes every column and removes the across-column
/// mean until both deviations fall below `tol` or `max_iters` is reached.
///
/// A single-item space cannot satisfy both constraints at once: centering
/// zeroes the sole column and the next normalization fails with
/// [`AlignError::ZeroNormColumn`].
pub fn iterative_normalize(
    space: &EmbeddingSpace,
    tol: f64,
    max_iters: usize,
) -> Result<EmbeddingSpace, AlignError> {
    if tol <= 0.0 {
        return Err(AlignError::InvalidParameter("tol must be positive".into()));
    }
    if space.is_empty() {
        return Err(AlignError::InvalidParameter(
            "cannot normalize an empty space".into(),
        ));
    }
    let mut m = space.vectors().clone();
    for _ in 0..max_iters {
        let norm_dev = (0..m.ncols())
            .map(|j| (m.column(j).norm() - 1.0).abs())
            .fold(0.0, f64::max);
        let centroid = m.column_mean();
        let mean_dev = centroid.amax();
        if norm_dev < tol && mean_dev < tol {
            break;
        }
        for j in 0..m.ncols() {
            let norm = m.column(j).norm();
            if norm == 0.0 {
                return Err(AlignError::ZeroNormColumn(j));
            }
            m.column_mut(j).unscale_mut(norm);
        }
        let centroid = m.column_mean();
        for j in 0..m.ncols() {
            m.column_mut(j).axpy(-1.0, &centroid, 1.0);
        }
    }
    EmbeddingSpace::new(space.items().to_vec(), m)
        .map_err(|e| AlignError::InvalidParameter(e.to_string()))
}

fn supervised_columns(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    sup: &SupervisionPairs,
) -> Result<(DMatrix<f64>, DMatrix<f64>), AlignError> {
    let d = source.dimension();
    if target.dimension() != d {
        return Err(AlignError::DimensionMismatch(d, target.dimension()));
    }
    for &(i, j) in sup.pairs() {
        if i >= source.len() || j >= target.len() {
            return Err(AlignError::PairOutOfRange(i, j));
        }
    }
    let k = sup.len();
    let mut x = DMatrix::zeros(d, k);
    let mut y = DMatrix::zeros(d, k);
    for (c, &(i, j)) in sup.pairs().iter().enumerate() {
        x.set_column(c, &source.vectors().column(i));
        y.set_column(c, &target.vectors().column(j));
    }
    Ok((x, y))
}

/// Closed-form solution of `argmin_{W orthogonal} ||W X - Y||_F`:
/// `W = U V^T` with `U S V^T = SVD(Y X^T)` over the supervised columns.
pub fn procrustes_fit(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    sup: &SupervisionPairs,
) -> Result<OrthogonalMap, AlignError> {
    let (x, y) = supervised_columns(source, target, sup)?;
    let m = &y * x.transpose();
    let svd = m.svd(true, true);
    let u = svd.u.expect("SVD with u requested");
    let v_t = svd.v_t.expect("SVD with v_t requested");
    OrthogonalMap::new(u * v_t)
}

/// Result of the gradient-descent fit: the map plus the per-step objective
/// (mean squared error per supervised pair).
#[derive(Debug, Clone)]
pub struct GdFit {
    pub map: OrthogonalMap,
    pub objectives: Vec<f64>,
}

/// One step of the orthogonality retraction.
pub fn orthogonality_update(w: &DMatrix<f64>, beta: f64) -> DMatrix<f64> {
    w * (1.0 + beta) - (w * w.transpose()) * w * beta
}

/// Minimizes `||W X - Y||_F^2 / k` by gradient descent from `W = I`,
/// alternating each step with the retraction
/// `W <- (1+beta) W - beta (W W^T) W`.
pub fn gd_orthogonal_fit(
    source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    sup: &SupervisionPairs,
    learning_rate: f64,
    steps: usize,
    beta: f64,
) -> Result<GdFit, AlignError> {
    if !(0.0..1.0).contains(&beta) || beta == 0.0 {
        return Err(AlignError::InvalidParameter(
            "beta must lie in (0, 1)".into(),
        ));
    }
    if steps == 0 {
        return Err(AlignError::InvalidParameter("steps must be >= 1".into()));
    }
    if learning_rate < 0.0 {
        return Err(AlignError::InvalidParameter(
            "learning rate must be non-negative".into(),
        ));
    }
    let (x, y) = supervised_columns(source, target, sup)?;
    let k = sup.len() as f64;
    let d = source.dimension();
    let mut w = DMatrix::identity(d, d);
    let mut objectives = Vec::with_capacity(steps);
    for step in 0..steps {
        let residual = &w * &x - &y;
        let objective = residual.norm_squared() / k;
        if !objective.is_finite() {
            return Err(AlignError::Diverged(step));
        }
        objectives.push(objective);
        let grad = residual * x.transpose() * (2.0 / k);
        w -= grad * learning_rate;
        w = orthogonality_update(&w, beta);
    }
    // Polish so the orthogonality invariant holds regardless of step size.
    let target_defect = 1e-9 * (d as f64).sqrt();
    for _ in 0..200 {
        if orthogonality_defect(&w) <= target_defect {
            break;
        }
        w = orthogonality_update(&w, beta);
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(AlignError::Diverged(steps));
    }
    Ok(GdFit {
        map: OrthogonalMap::new(w)?,
        objectives,
    })
}

fn unit_columns(space: &EmbeddingSpace) -> Result<DMatrix<f64>, AlignError> {
    let mut m = space.vectors().clone();
    for j in 0..m.ncols() {
        let norm = m.column(j).norm();
        if norm == 0.0 {
            return Err(AlignError::ZeroNormColumn(j));
        }
        m.column_mut(j).unscale_mut(norm);
    }
    Ok(m)
}

fn mean_top_k(values: impl Iterator<Item = f64>, k: usize) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v[..k].iter().sum::<f64>() / k as f64
}

/// CSLS retrieval: `score(x, y) = 2 cos(x, y) - r_T(x) - r_S(y)` where the
/// `r` terms are mean cosines to the K nearest neighbors on the other side.
/// Returns, per source item, all target indices sorted by descending score
/// (ties broken by ascending index).
pub fn csls_retrieve(
    mapped_source: &EmbeddingSpace,
    target: &EmbeddingSpace,
    k: usize,
) -> Result<Vec<Vec<usize>>, AlignError> {
    if mapped_source.dimension() != target.dimension() {
        return Err(AlignError::DimensionMismatch(
            mapped_source.dimension(),
            target.dimension(),
        ));
    }
    if k == 0 || k > target.len() {
        return Err(AlignError::InvalidK {
            k,
            side: "target",
            n: target.len(),
        });
    }
    if k > mapped_source.len() {
        return Err(AlignError::InvalidK {
            k,
            side: "source",
            n: mapped_source.len(),
        });
    }
    let s = unit_columns(mapped_source)?;
    let t = unit_columns(target)?;
    let cos = s.transpose() * t; // n_s x n_t

    let r_t: Vec<f64> = (0..cos.nrows())
        .map(|i| mean_top_k(cos.row(i).iter().copied(), k))
        .collect();
    let r_s: Vec<f64> = (0..cos.ncols())
        .map(|j| mean_top_k(cos.column(j).iter().copied(), k))
        .collect();

    let mut rankings = Vec::with_capacity(cos.nrows());
    for i in 0..cos.nrows() {
        let mut indices: Vec<usize> = (0..cos.ncols()).collect();
        let scores: Vec<f64> = (0..cos.ncols())
            .map(|j| 2.0 * cos[(i, j)] - r_t[i] - r_s[j])
            .collect();
        indices.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        rankings.push(indices);
    }
    Ok(rankings)
}

/// Fraction of gold sources whose top-k predictions intersect their gold
/// targets. `predictions[i]` is the ranked target list for source `i`.
pub fn precision_at_k(
    predictions: &[Vec<usize>],
    gold: &[(usize, usize)],
    k: usize,
) -> Result<f64, AlignError> {
    if k == 0 {
        return Err(AlignError::InvalidParameter("k must be >= 1".into()));
    }
    if gold.is_empty() {
        return Err(AlignError::InvalidParameter(
            "gold pairs must be non-empty".into(),
        ));
    }
    let mut by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(s, t) in gold {
        by_source.entry(s).or_default().push(t);
    }
    let mut hits = 0usize;
    for (&source, targets) in &by_source {
        let ranked = predictions
            .get(source)
            .filter(|r| !r.is_empty())
            .ok_or(AlignError::MissingPredictions(source))?;
        let top = &ranked[..k.min(ranked.len())];
        if top.iter().any(|p| targets.contains(p)) {
            hits += 1;
        }
    }
    Ok(hits as f64 / by_source.len() as f64)
}
