//! Explicit alignment objectives over paired hidden states, with analytic
//! gradients.
//!
//! Sign convention: the printed contrastive objectives are sums of
//! log-probabilities (non-positive); every function here returns their
//! NEGATION, a non-negative negative-log-likelihood, so that lower is
//! uniformly better. Both contrastive losses are exactly 0 for a
//! single-pair batch.
//!
//! Gradients are summed in index order; results are bit-stable for a given
//! build. The ReLU subgradient at exactly 0 is taken as 0.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::types::{ParamVector, TypeError};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("S and T must have identical shapes: {0}x{1} vs {2}x{3}")]
    PairShapeMismatch(usize, usize, usize, usize),
    #[error("batch must contain at least one pair")]
    EmptyBatch,
    #[error("S_full and S_full_pretrained must have identical shapes")]
    FullShapeMismatch,
    #[error("operation requires S_full and S_full_pretrained")]
    MissingFullStates,
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("state row {0} has zero norm")]
    ZeroNormState(usize),
    #[error("MLP projection of state row {0} has zero norm")]
    ZeroProjection(usize),
    #[error("MLP shapes are inconsistent")]
    MlpShapeMismatch,
    #[error("input dimension {0} does not match extractor input {1}")]
    InputDimMismatch(usize, usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Type(#[from] TypeError),
}

/// Paired hidden states: row `i` of `S` and row `i` of `T` are aligned
/// words. The optional full matrices carry every hidden state of the source
/// sentences (aligned or not) for the hidden-state regularizer.
#[derive(Debug, Clone)]
pub struct LossBatch {
    s: DMatrix<f64>,
    t: DMatrix<f64>,
    s_full: Option<DMatrix<f64>>,
    s_full_pretrained: Option<DMatrix<f64>>,
}

impl LossBatch {
    pub fn new(
        s: DMatrix<f64>,
        t: DMatrix<f64>,
        s_full: Option<DMatrix<f64>>,
        s_full_pretrained: Option<DMatrix<f64>>,
    ) -> Result<Self, LossError> {
        if s.shape() != t.shape() {
            return Err(LossError::PairShapeMismatch(
                s.nrows(),
                s.ncols(),
                t.nrows(),
                t.ncols(),
            ));
        }
        if s.nrows() == 0 {
            return Err(LossError::EmptyBatch);
        }
        if let (Some(a), Some(b)) = (&s_full, &s_full_pretrained) {
            if a.shape() != b.shape() {
                return Err(LossError::FullShapeMismatch);
            }
        }
        for (name, m) in [("S", Some(&s)), ("T", Some(&t))]
            .into_iter()
            .chain([("S_full", s_full.as_ref()), ("S_full_pre", s_full_pretrained.as_ref())])
        {
            if let Some(m) = m {
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(LossError::NonFinite(name));
                }
            }
        }
        Ok(Self {
            s,
            t,
            s_full,
            s_full_pretrained,
        })
    }

    pub fn pairs_only(s: DMatrix<f64>, t: DMatrix<f64>) -> Result<Self, LossError> {
        Self::new(s, t, None, None)
    }

    pub fn batch_size(&self) -> usize {
        self.s.nrows()
    }

    pub fn dims(&self) -> usize {
        self.s.ncols()
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn s_full(&self) -> Option<&DMatrix<f64>> {
        self.s_full.as_ref()
    }

    pub fn s_full_pretrained(&self) -> Option<&DMatrix<f64>> {
        self.s_full_pretrained.as_ref()
    }
}

/// Feed-forward feature extractor with one hidden layer and ReLU:
/// `f(x) = W2 relu(W1 x + b1) + b2`. Mirrors the 768-768-128 shape of the
/// learned cosine similarity, generalized to `(d, h, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpExtractor {
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    w2: DMatrix<f64>,
    b2: DVector<f64>,
}

impl MlpExtractor {
    pub fn new(
        w1: DMatrix<f64>,
        b1: DVector<f64>,
        w2: DMatrix<f64>,
        b2: DVector<f64>,
    ) -> Result<Self, LossError> {
        if w1.nrows() != b1.len() || w2.ncols() != w1.nrows() || w2.nrows() != b2.len() {
            return Err(LossError::MlpShapeMismatch);
        }
        let finite = w1.iter().all(|v| v.is_finite())
            && b1.iter().all(|v| v.is_finite())
            && w2.iter().all(|v| v.is_finite())
            && b2.iter().all(|v| v.is_finite());
        if !finite {
            return Err(LossError::NonFinite("MLP parameters"));
        }
        Ok(Self { w1, b1, w2, b2 })
    }

    /// Default projection width for input dimension `d` (128 for d = 768).
    pub fn default_projection_width(d: usize) -> usize {
        (d / 6).max(1)
    }

    /// Deterministic seeded initialization, uniform in `[-0.1, 0.1]`.
    pub fn seeded_uniform(d: usize, h: usize, p: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        fn draw(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-0.1..0.1)).collect();
            DMatrix::from_row_slice(rows, cols, &data)
        }
        let w1 = draw(&mut rng, h, d);
        let b1 = draw(&mut rng, h, 1).column(0).into_owned();
        let w2 = draw(&mut rng, p, h);
        let b2 = draw(&mut rng, p, 1).column(0).into_owned();
        Self { w1, b1, w2, b2 }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn projection_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn w1(&self) -> &DMatrix<f64> {
        &self.w1
    }

    pub fn b1(&self) -> &DVector<f64> {
        &self.b1
    }

    pub fn w2(&self) -> &DMatrix<f64> {
        &self.w2
    }

    pub fn b2(&self) -> &DVector<f64> {
        &self.b2
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>, LossError> {
        Ok(self.forward_cached(x)?.output)
    }

    fn forward_cached(&self, x: &DVector<f64>) -> Result<ForwardCache, LossError> {
        if x.len() != self.input_dim() {
            return Err(LossError::InputDimMismatch(x.len(), self.input_dim()));
        }
        let pre = &self.w1 * x + &self.b1;
        let hidden = pre.map(|v| v.max(0.0));
        let output = &self.w2 * &hidden + &self.b2;
        Ok(ForwardCache {
            input: x.clone(),
            pre,
            hidden,
            output,
        })
    }
}

struct ForwardCache {
    input: DVector<f64>,
    pre: DVector<f64>,
    hidden: DVector<f64>,
    output: DVector<f64>,
}

/// Gradients of a loss with respect to the MLP parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

impl MlpGradients {
    fn zeros(f: &MlpExtractor) -> Self {
        Self {
            w1: DMatrix::zeros(f.hidden_dim(), f.input_dim()),
            b1: DVector::zeros(f.hidden_dim()),
            w2: DMatrix::zeros(f.projection_dim(), f.hidden_dim()),
            b2: DVector::zeros(f.projection_dim()),
        }
    }
}

/// Similarity used inside the contrastive losses.
#[derive(Debug, Clone, Copy)]
pub enum Similarity<'a> {
    PlainCosine,
    MlpCosine(&'a MlpExtractor),
}

/// Current and pretrained checkpoints for the parameter regularizer.
#[derive(Debug, Clone)]
pub struct RegState {
    theta: ParamVector,
    theta_pretrained: ParamVector,
}

impl RegState {
    pub fn new(theta: ParamVector, theta_pretrained: ParamVector) -> Result<Self, LossError> {
        theta.same_structure(&theta_pretrained)?;
        Ok(Self {
            theta,
            theta_pretrained,
        })
    }

    pub fn theta(&self) -> &ParamVector {
        &self.theta
    }

    pub fn theta_pretrained(&self) -> &ParamVector {
        &self.theta_pretrained
    }
}

/// Mean squared distance between aligned pairs:
/// `mean_i ||s_i - t_i||^2`. Zero iff `S = T` exactly.
pub fn l2_loss(batch: &LossBatch) -> f64 {
    let b = batch.batch_size() as f64;
    (batch.s() - batch.t()).norm_squared() / b
}

/// Squared Frobenius distance between the full source hidden states and
/// their pretrained counterparts.
pub fn reg_hidden(batch: &LossBatch) -> Result<f64, LossError> {
    match (batch.s_full(), batch.s_full_pretrained()) {
        (Some(a), Some(b)) => Ok((a - b).norm_squared()),
        _ => Err(LossError::MissingFullStates),
    }
}

/// Squared Euclidean distance between checkpoints over all parameters.
pub fn reg_param(reg: &RegState) -> f64 {
    let mut sum = 0.0;
    for ((_, a), (_, b)) in reg.theta.iter().zip(reg.theta_pretrained.iter()) {
        for (x, y) in a.data.iter().zip(&b.data) {
            let diff = *x as f64 - *y as f64;
            sum += diff * diff;
        }
    }
    sum
}

/// The combined objective `L_L2 + lambda * L_reg-param` (lambda defaults
/// to 1 in the CLI).
pub fn combined_loss(batch: &LossBatch, reg: &RegState, lambda: f64) -> f64 {
    l2_loss(batch) + lambda * reg_param(reg)
}

/// Learned cosine similarity: `cos(f(a), f(b))`.
pub fn mlp_cosine(
    f: &MlpExtractor,
    a: &DVector<f64>,
    b: &DVector<f64>,
) -> Result<f64, LossError> {
    let fa = f.forward(a)?;
    let fb = f.forward(b)?;
    let na = fa.norm();
    let nb = fb.norm();
    if na == 0.0 {
        return Err(LossError::ZeroProjection(0));
    }
    if nb == 0.0 {
        return Err(LossError::ZeroProjection(1));
    }
    Ok(fa.dot(&fb) / (na * nb))
}

fn row(m: &DMatrix<f64>, i: usize) -> DVector<f64> {
    m.row(i).transpose()
}

/// States fed to a contrastive loss: either the raw rows or their MLP
/// projections, with caches retained for backprop.
struct ProjectedStates<'a> {
    vectors: Vec<DVector<f64>>,
    norms: Vec<f64>,
    caches: Option<Vec<ForwardCache>>,
    extractor: Option<&'a MlpExtractor>,
}

impl<'a> ProjectedStates<'a> {
    fn build(rows: Vec<DVector<f64>>, sim: &Similarity<'a>) -> Result<Self, LossError> {
        match sim {
            Similarity::PlainCosine => {
                let norms: Vec<f64> = rows.iter().map(|v| v.norm()).collect();
                if let Some(i) = norms.iter().position(|&n| n == 0.0) {
                    return Err(LossError::ZeroNormState(i));
                }
                Ok(Self {
                    vectors: rows,
                    norms,
                    caches: None,
                    extractor: None,
                })
            }
            Similarity::MlpCosine(f) => {
                let caches: Vec<ForwardCache> = rows
                    .iter()
                    .map(|x| f.forward_cached(x))
                    .collect::<Result<_, _>>()?;
                let vectors: Vec<DVector<f64>> =
                    caches.iter().map(|c| c.output.clone()).collect();
                let norms: Vec<f64> = vectors.iter().map(|v| v.norm()).collect();
                if let Some(i) = norms.iter().position(|&n| n == 0.0) {
                    return Err(LossError::ZeroProjection(i));
                }
                Ok(Self {
                    vectors,
                    norms,
                    caches: Some(caches),
                    extractor: Some(f),
                })
            }
        }
    }

    fn cosine(&self, i: usize, j: usize) -> f64 {
        self.vectors[i].dot(&self.vectors[j]) / (self.norms[i] * self.norms[j])
    }

    /// Maps gradients w.r.t. the projected vectors back onto the raw inputs
    /// (and the extractor parameters, when one is in play).
    fn backprop(
        &self,
        grad_projected: &[DVector<f64>],
    ) -> (Vec<DVector<f64>>, Option<MlpGradients>) {
        match (&self.caches, self.extractor) {
            (Some(caches), Some(f)) => {
                let mut grads = MlpGradients::zeros(f);
                let mut inputs = Vec::with_capacity(caches.len());
                for (cache, d_out) in caches.iter().zip(grad_projected) {
                    grads.w2 += d_out * cache.hidden.transpose();
                    grads.b2 += d_out;
                    let dh = f.w2.transpose() * d_out;
                    // ReLU subgradient at exactly 0 is 0.
                    let dz = DVector::from_iterator(
                        dh.len(),
                        dh.iter()
                            .zip(cache.pre.iter())
                            .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 }),
                    );
                    grads.w1 += &dz * cache.input.transpose();
                    grads.b1 += &dz;
                    inputs.push(f.w1.transpose() * dz);
                }
                (inputs, Some(grads))
            }
            _ => (grad_projected.to_vec(), None),
        }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Negated weak contrastive alignment loss. Negatives come from the other
/// language only: row and column softmaxes over the B x B pair-similarity
/// matrix, scaled by the temperature.
pub fn weak_loss(batch: &LossBatch, sim: &Similarity, temp: f64) -> Result<f64, LossError> {
    if temp <= 0.0 {
        return Err(LossError::NonPositiveTemperature(temp));
    }
    let b = batch.batch_size();
    let rows: Vec<DVector<f64>> = (0..b)
        .map(|i| row(batch.s(), i))
        .chain((0..b).map(|i| row(batch.t(), i)))
        .collect();
    let states = ProjectedStates::build(rows, sim)?;
    Ok(weak_parts(&states, b, temp).loss)
}

/// Negated strong contrastive alignment loss. Negatives are every other
/// hidden state, source or target.
pub fn strong_loss(batch: &LossBatch, sim: &Similarity, temp: f64) -> Result<f64, LossError> {
    strong_parts(batch, sim, temp).map(|p| p.loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    L2,
    Weak,
    Strong,
}

/// Loss value plus analytic gradients with respect to `S`, `T`, and (for the
/// MLP similarity) the extractor parameters.
#[derive(Debug, Clone)]
pub struct LossGradients {
    pub loss: f64,
    pub wrt_s: DMatrix<f64>,
    pub wrt_t: DMatrix<f64>,
    pub wrt_mlp: Option<MlpGradients>,
}

struct WeakParts {
    loss: f64,
    grad_logits: DMatrix<f64>,
}

fn weak_parts(states: &ProjectedStates, b: usize, temp: f64) -> WeakParts {
    let bf = b as f64;
    let logits = DMatrix::from_fn(b, b, |i, j| states.cosine(i, b + j) / temp);
    let mut printed = 0.0;
    for i in 0..b {
        let lse_row = log_sum_exp((0..b).map(|j| logits[(i, j)]));
        let lse_col = log_sum_exp((0..b).map(|j| logits[(j, i)]));
        printed += 2.0 * logits[(i, i)] - lse_row - lse_col;
    }
    printed /= 2.0 * bf;
    let loss = -printed + 0.0;

    let mut grad = DMatrix::zeros(b, b);
    for k in 0..b {
        let lse_row = log_sum_exp((0..b).map(|j| logits[(k, j)]));
        for l in 0..b {
            grad[(k, l)] += (logits[(k, l)] - lse_row).exp() / (2.0 * bf);
        }
    }
    for l in 0..b {
        let lse_col = log_sum_exp((0..b).map(|j| logits[(j, l)]));
        for k in 0..b {
            grad[(k, l)] += (logits[(k, l)] - lse_col).exp() / (2.0 * bf);
        }
    }
    for i in 0..b {
        grad[(i, i)] -= 1.0 / bf;
    }
    WeakParts {
        loss,
        grad_logits: grad,
    }
}

struct StrongParts {
    loss: f64,
    grad_logits: DMatrix<f64>,
}

fn strong_parts_from_states(states: &ProjectedStates, b: usize, temp: f64) -> StrongParts {
    let n = 2 * b;
    let bf = b as f64;
    let logits = DMatrix::from_fn(n, n, |a, l| {
        if a == l {
            0.0
        } else {
            states.cosine(a, l) / temp
        }
    });
    let partner = |a: usize| (a + b) % n;
    let mut printed = 0.0;
    let mut grad = DMatrix::zeros(n, n);
    for a in 0..n {
        let others = (0..n).filter(|&l| l != a);
        let lse = log_sum_exp(others.clone().map(|l| logits[(a, l)]));
        printed += logits[(a, partner(a))] - lse;
        for l in others {
            let p = (logits[(a, l)] - lse).exp();
            grad[(a, l)] += p / (2.0 * bf);
        }
        grad[(a, partner(a))] -= 1.0 / (2.0 * bf);
    }
    printed /= 2.0 * bf;
    StrongParts {
        loss: -printed + 0.0,
        grad_logits: grad,
    }
}

fn strong_parts(
    batch: &LossBatch,
    sim: &Similarity,
    temp: f64,
) -> Result<StrongParts, LossError> {
    if temp <= 0.0 {
        return Err(LossError::NonPositiveTemperature(temp));
    }
    let b = batch.batch_size();
    let rows: Vec<DVector<f64>> = (0..b)
        .map(|i| row(batch.s(), i))
        .chain((0..b).map(|i| row(batch.t(), i)))
        .collect();
    let states = ProjectedStates::build(rows, sim)?;
    Ok(strong_parts_from_states(&states, b, temp))
}

/// Gradient of `cos(u_k, v_l)` with respect to `u_k`.
fn cosine_grad_wrt_first(
    u: &DVector<f64>,
    nu: f64,
    v: &DVector<f64>,
    nv: f64,
    cos: f64,
) -> DVector<f64> {
    v / (nu * nv) - u * (cos / (nu * nu))
}

/// Analytic gradients of the selected loss. For [`LossKind::L2`] the
/// similarity argument is ignored.
pub fn loss_grad(
    kind: LossKind,
    batch: &LossBatch,
    sim: &Similarity,
    temp: f64,
) -> Result<LossGradients, LossError> {
    let b = batch.batch_size();
    match kind {
        LossKind::L2 => {
            let bf = b as f64;
            let diff = batch.s() - batch.t();
            Ok(LossGradients {
                loss: l2_loss(batch),
                wrt_s: &diff * (2.0 / bf),
                wrt_t: diff * (-2.0 / bf),
                wrt_mlp: None,
            })
        }
        LossKind::Weak => {
            if temp <= 0.0 {
                return Err(LossError::NonPositiveTemperature(temp));
            }
            let rows: Vec<DVector<f64>> = (0..b)
                .map(|i| row(batch.s(), i))
                .chain((0..b).map(|i| row(batch.t(), i)))
                .collect();
            let states = ProjectedStates::build(rows, sim)?;
            let parts = weak_parts(&states, b, temp);
            // dLoss/dC_kl = grad_logits[k][l] / temp over pair cosines
            // C_kl = cos(state_k, state_{B+l}).
            let mut grad_projected =
                vec![DVector::zeros(states.vectors[0].len()); 2 * b];
            for k in 0..b {
                for l in 0..b {
                    let g = parts.grad_logits[(k, l)] / temp;
                    if g == 0.0 {
                        continue;
                    }
                    let (u, v) = (&states.vectors[k], &states.vectors[b + l]);
                    let (nu, nv) = (states.norms[k], states.norms[b + l]);
                    let cos = states.cosine(k, b + l);
                    grad_projected[k] += cosine_grad_wrt_first(u, nu, v, nv, cos) * g;
                    grad_projected[b + l] += cosine_grad_wrt_first(v, nv, u, nu, cos) * g;
                }
            }
            let (grad_inputs, wrt_mlp) = states.backprop(&grad_projected);
            Ok(assemble(parts.loss, grad_inputs, wrt_mlp, b, batch.dims()))
        }
        LossKind::Strong => {
            if temp <= 0.0 {
                return Err(LossError::NonPositiveTemperature(temp));
            }
            let rows: Vec<DVector<f64>> = (0..b)
                .map(|i| row(batch.s(), i))
                .chain((0..b).map(|i| row(batch.t(), i)))
                .collect();
            let states = ProjectedStates::build(rows, sim)?;
            let parts = strong_parts_from_states(&states, b, temp);
            let n = 2 * b;
            let mut grad_projected = vec![DVector::zeros(states.vectors[0].len()); n];
            for a in 0..n {
                for l in 0..n {
                    if a == l {
                        continue;
                    }
                    let g = parts.grad_logits[(a, l)] / temp;
                    if g == 0.0 {
                        continue;
                    }
                    let (u, v) = (&states.vectors[a], &states.vectors[l]);
                    let (nu, nv) = (states.norms[a], states.norms[l]);
                    let cos = states.cosine(a, l);
                    grad_projected[a] += cosine_grad_wrt_first(u, nu, v, nv, cos) * g;
                    grad_projected[l] += cosine_grad_wrt_first(v, nv, u, nu, cos) * g;
                }
            }
            let (grad_inputs, wrt_mlp) = states.backprop(&grad_projected);
            Ok(assemble(parts.loss, grad_inputs, wrt_mlp, b, batch.dims()))
        }
    }
}

fn assemble(
    loss: f64,
    grad_inputs: Vec<DVector<f64>>,
    wrt_mlp: Option<MlpGradients>,
    b: usize,
    d: usize,
) -> LossGradients {
    let mut wrt_s = DMatrix::zeros(b, d);
    let mut wrt_t = DMatrix::zeros(b, d);
    for i in 0..b {
        wrt_s.set_row(i, &grad_inputs[i].transpose());
        wrt_t.set_row(i, &grad_inputs[b + i].transpose());
    }
    LossGradients {
        loss,
        wrt_s,
        wrt_t,
        wrt_mlp,
    }
}
