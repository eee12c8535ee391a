//! Representation-similarity statistics between models' hidden states.
//!
//! The central measure is linear CKA over mean-pooled sentence
//! representations:
//! `CKA(X, Y) = ||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F)`
//! evaluated on column-mean-centered matrices. Centering is applied
//! internally; without it the orthogonal-invariance and scale-invariance
//! properties of the measure do not hold.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("row counts differ: {0} vs {1}")]
    RowCountMismatch(usize, usize),
    #[error("column counts differ: {0} vs {1}")]
    ColumnCountMismatch(usize, usize),
    #[error("CKA requires at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("matrix is zero after centering; CKA is undefined")]
    DegenerateMatrix,
    #[error("all tokens are excluded from pooling")]
    AllExcluded,
    #[error("mask length {0} does not match token count {1}")]
    MaskLengthMismatch(usize, usize),
    #[error("row {0} has zero norm")]
    ZeroNormRow(usize),
    #[error("matrix contains non-finite values")]
    NonFinite,
}

/// `n x d` matrix of sentence representations, one row per sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceReps {
    matrix: DMatrix<f64>,
}

impl SentenceReps {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, SimilarityError> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(SimilarityError::NonFinite);
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dims(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Arithmetic mean of the non-excluded rows of an `m x d` token matrix.
/// `excluded[i] = true` drops row `i` (special tokens and the like).
pub fn mean_pool(
    tokens: &DMatrix<f64>,
    excluded: &[bool],
) -> Result<DVector<f64>, SimilarityError> {
    if excluded.len() != tokens.nrows() {
        return Err(SimilarityError::MaskLengthMismatch(
            excluded.len(),
            tokens.nrows(),
        ));
    }
    let mut sum = DVector::zeros(tokens.ncols());
    let mut count = 0usize;
    for (i, row) in tokens.row_iter().enumerate() {
        if excluded[i] {
            continue;
        }
        sum += row.transpose();
        count += 1;
    }
    if count == 0 {
        return Err(SimilarityError::AllExcluded);
    }
    Ok(sum / count as f64)
}

fn center_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    out
}

/// Linear CKA between two representation matrices with the same row count.
/// Returns a value in `[0, 1]`; symmetric in its arguments; invariant to
/// orthogonal right-multiplication and isotropic scaling of either argument.
pub fn linear_cka(x: &SentenceReps, y: &SentenceReps) -> Result<f64, SimilarityError> {
    if x.rows() != y.rows() {
        return Err(SimilarityError::RowCountMismatch(x.rows(), y.rows()));
    }
    if x.rows() < 2 {
        return Err(SimilarityError::TooFewRows(x.rows()));
    }
    let xc = center_columns(x.matrix());
    let yc = center_columns(y.matrix());
    let cross = (yc.transpose() * &xc).norm_squared();
    let x_norm = (xc.transpose() * &xc).norm();
    let y_norm = (yc.transpose() * &yc).norm();
    if x_norm == 0.0 || y_norm == 0.0 {
        return Err(SimilarityError::DegenerateMatrix);
    }
    let value = cross / (x_norm * y_norm);
    // Tiny rounding excursions are clamped back into [0, 1].
    Ok(value.clamp(0.0, 1.0))
}

/// For every row of `x`, the index of the nearest row of `y` by cosine
/// similarity. Ties resolve to the lowest index.
pub fn cosine_nn_retrieve(
    x: &SentenceReps,
    y: &SentenceReps,
) -> Result<Vec<usize>, SimilarityError> {
    if x.dims() != y.dims() {
        return Err(SimilarityError::ColumnCountMismatch(x.dims(), y.dims()));
    }
    let norm_rows = |m: &DMatrix<f64>| -> Result<DMatrix<f64>, SimilarityError> {
        let mut out = m.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            let norm = row.norm();
            if norm == 0.0 {
                return Err(SimilarityError::ZeroNormRow(i));
            }
            row /= norm;
        }
        Ok(out)
    };
    let xn = norm_rows(x.matrix())?;
    let yn = norm_rows(y.matrix())?;
    let cos = xn * yn.transpose();
    let mut out = Vec::with_capacity(cos.nrows());
    for i in 0..cos.nrows() {
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for j in 0..cos.ncols() {
            if cos[(i, j)] > best_score {
                best_score = cos[(i, j)];
                best = j;
            }
        }
        out.push(best);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reps(m: DMatrix<f64>) -> SentenceReps {
        SentenceReps::new(m).unwrap()
    }

    fn random_reps(rng: &mut ChaCha8Rng, n: usize, d: usize) -> SentenceReps {
        reps(DMatrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn mean_pool_averages_rows() {
        let m = dmatrix![1.0, 1.0; 3.0, 3.0];
        let pooled = mean_pool(&m, &[false, false]).unwrap();
        assert_eq!(pooled.as_slice(), [2.0, 2.0]);
    }

    #[test]
    fn mean_pool_single_row_is_identity() {
        let m = dmatrix![4.0, -1.0];
        let pooled = mean_pool(&m, &[false]).unwrap();
        assert_eq!(pooled.as_slice(), [4.0, -1.0]);
    }

    #[test]
    fn mean_pool_respects_exclusion() {
        let m = dmatrix![9.0, 9.0; 1.0, 1.0];
        let pooled = mean_pool(&m, &[true, false]).unwrap();
        assert_eq!(pooled.as_slice(), [1.0, 1.0]);
        assert!(matches!(
            mean_pool(&m, &[true, true]).unwrap_err(),
            SimilarityError::AllExcluded
        ));
    }

    #[test]
    fn cka_self_similarity_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_reps(&mut rng, 6, 3);
        assert_abs_diff_eq!(linear_cka(&x, &x).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cka_invariant_to_orthogonal_transform_and_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_reps(&mut rng, 8, 4);
        let q = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0))
            .qr()
            .q();
        let rotated = reps(x.matrix() * q * 3.7);
        assert_abs_diff_eq!(linear_cka(&x, &rotated).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn cka_matches_naive_implementation() {
        // Independent route: explicit scalar sums over the centered matrices.
        fn naive_cka(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
            let center = |m: &DMatrix<f64>| {
                let mut c = m.clone();
                for j in 0..m.ncols() {
                    let mean: f64 = (0..m.nrows()).map(|i| m[(i, j)]).sum::<f64>()
                        / m.nrows() as f64;
                    for i in 0..m.nrows() {
                        c[(i, j)] -= mean;
                    }
                }
                c
            };
            let xc = center(x);
            let yc = center(y);
            let frob_sq = |m: &DMatrix<f64>| m.iter().map(|v| v * v).sum::<f64>();
            let num = frob_sq(&(yc.transpose() * &xc));
            let den = frob_sq(&(xc.transpose() * &xc)).sqrt()
                * frob_sq(&(yc.transpose() * &yc)).sqrt();
            num / den
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x = random_reps(&mut rng, 6, 3);
            let y = random_reps(&mut rng, 6, 3);
            let expected = naive_cka(x.matrix(), y.matrix());
            assert_abs_diff_eq!(linear_cka(&x, &y).unwrap(), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn cka_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let x = random_reps(&mut rng, 7, 3);
            let y = random_reps(&mut rng, 7, 5);
            let ab = linear_cka(&x, &y).unwrap();
            let ba = linear_cka(&y, &x).unwrap();
            assert!((ab - ba).abs() < 1e-12);
        }
    }

    #[test]
    fn cka_degenerate_matrix_errors() {
        let constant = reps(DMatrix::from_element(4, 2, 5.0));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = random_reps(&mut rng, 4, 2);
        assert!(matches!(
            linear_cka(&constant, &y).unwrap_err(),
            SimilarityError::DegenerateMatrix
        ));
    }

    #[test]
    fn cosine_retrieval_identity_on_self() {
        let x = reps(dmatrix![1.0, 0.0; 0.0, 1.0; 0.7, 0.7]);
        assert_eq!(cosine_nn_retrieve(&x, &x).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn cosine_retrieval_prefers_larger_cosine() {
        let x = reps(dmatrix![1.0, 0.0]);
        let y = reps(dmatrix![0.9, 0.1; 0.0, 1.0]);
        assert_eq!(cosine_nn_retrieve(&x, &y).unwrap(), vec![0]);
    }

    #[test]
    fn cosine_retrieval_zero_row_errors() {
        let x = reps(dmatrix![0.0, 0.0]);
        let y = reps(dmatrix![1.0, 0.0]);
        assert!(matches!(
            cosine_nn_retrieve(&x, &y).unwrap_err(),
            SimilarityError::ZeroNormRow(0)
        ));
    }
}
