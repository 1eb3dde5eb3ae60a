//! Decoupled cross-attention conditioning at desk scale.
//!
//! A shared query projection attends separately over text tokens and image
//! tokens; the two outputs are merged as `O_t + image_scale * O_i`. The mock
//! generation backend is built on the same merge.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::EmbeddingVector;

pub const DEFAULT_D_MODEL: usize = 64;
pub const DEFAULT_NUM_TOKENS: usize = 4;
/// Floor applied to the LayerNorm standard deviation. A constant token
/// (e.g. all zeros) normalizes to zeros.
pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const DEFAULT_IMAGE_SCALE: f64 = 0.5;
/// Admissible per-stimulus image-scale overrides.
pub const IMAGE_SCALE_RANGE: (f64, f64) = (0.3, 0.7);
pub const DEFAULT_NOISE_EPS: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConditioningError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("context sequence is empty")]
    EmptyContext,
    #[error("combined conditioning vector has zero norm")]
    DegenerateInput,
    #[error("invalid conditioning config: {0}")]
    Config(String),
}

type Result<T> = std::result::Result<T, ConditioningError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Text,
    Image,
}

/// A sequence of `d_model`-wide tokens, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    tokens: Array2<f64>,
    kind: TokenKind,
}

impl TokenSequence {
    pub fn new(tokens: Array2<f64>, kind: TokenKind) -> Result<Self> {
        if tokens.nrows() == 0 {
            return Err(ConditioningError::EmptyContext);
        }
        Ok(Self { tokens, kind })
    }

    pub fn from_embeddings(tokens: &[EmbeddingVector], kind: TokenKind) -> Result<Self> {
        let dim = tokens.first().ok_or(ConditioningError::EmptyContext)?.dim();
        if tokens.iter().any(|t| t.dim() != dim) {
            return Err(ConditioningError::Shape("tokens differ in width".into()));
        }
        let flat: Vec<f64> = tokens.iter().flat_map(|t| t.values.iter().copied()).collect();
        let arr = Array2::from_shape_vec((tokens.len(), dim), flat)
            .map_err(|e| ConditioningError::Shape(e.to_string()))?;
        Self::new(arr, kind)
    }

    /// The null conditioning used when a stream is dropped.
    pub fn null_like(other: &TokenSequence) -> Self {
        Self {
            tokens: Array2::zeros(other.tokens.raw_dim()),
            kind: other.kind,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.tokens.ncols()
    }

    pub fn kind(&self) -> TokenKind {
        self.kind
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.tokens
    }

    pub fn to_embeddings(&self) -> Vec<EmbeddingVector> {
        self.tokens
            .rows()
            .into_iter()
            .map(|r| EmbeddingVector::new(r.to_vec()))
            .collect()
    }
}

/// Projection weights for one decoupled cross-attention block. Matrices act
/// on row vectors: `Q = X * w_q` with `w_q` of shape `(d_model, d_head)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_k_img: Array2<f64>,
    pub w_v_img: Array2<f64>,
}

impl AttentionParams {
    pub fn new(
        w_q: Array2<f64>,
        w_k: Array2<f64>,
        w_v: Array2<f64>,
        w_k_img: Array2<f64>,
        w_v_img: Array2<f64>,
    ) -> Result<Self> {
        let shape = w_q.dim();
        for (name, m) in [("w_k", &w_k), ("w_v", &w_v), ("w_k_img", &w_k_img), ("w_v_img", &w_v_img)] {
            if m.dim() != shape {
                return Err(ConditioningError::Shape(format!(
                    "{name} is {:?}, expected {shape:?}",
                    m.dim()
                )));
            }
        }
        Ok(Self {
            w_q,
            w_k,
            w_v,
            w_k_img,
            w_v_img,
        })
    }

    /// Gaussian weights scaled by `1/sqrt(d_model)`.
    pub fn random(d_model: usize, d_head: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (d_model as f64).sqrt();
        let mut mat = || Array2::from_shape_fn((d_model, d_head), |_| rng.sample::<f64, _>(StandardNormal) * scale);
        Self {
            w_q: mat(),
            w_k: mat(),
            w_v: mat(),
            w_k_img: mat(),
            w_v_img: mat(),
        }
    }

    pub fn d_model(&self) -> usize {
        self.w_q.nrows()
    }

    pub fn d_head(&self) -> usize {
        self.w_q.ncols()
    }
}

/// Linear layer followed by LayerNorm that turns one global image embedding
/// into a fixed-length sequence of image tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageProjection {
    /// `(d_in, num_tokens * d_model)`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub num_tokens: usize,
}

impl ImageProjection {
    pub fn random(d_in: usize, d_model: usize, num_tokens: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (d_in as f64).sqrt();
        Self {
            weight: Array2::from_shape_fn((d_in, num_tokens * d_model), |_| {
                rng.sample::<f64, _>(StandardNormal) * scale
            }),
            bias: Array1::zeros(num_tokens * d_model),
            gamma: Array1::ones(d_model),
            beta: Array1::zeros(d_model),
            num_tokens,
        }
    }

    pub fn d_model(&self) -> usize {
        self.gamma.len()
    }
}

/// Normalizes one token to zero mean and unit variance (population).
pub fn layer_norm(x: ArrayView1<f64>) -> Array1<f64> {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt().max(LAYER_NORM_EPS);
    x.mapv(|v| (v - mean) / denom)
}

/// Projects a global embedding into `num_tokens` layer-normalized tokens.
pub fn project_image_embedding(
    global_embedding: &EmbeddingVector,
    num_tokens: usize,
    proj: &ImageProjection,
) -> Result<TokenSequence> {
    if num_tokens == 0 || num_tokens != proj.num_tokens {
        return Err(ConditioningError::Shape(format!(
            "requested {num_tokens} tokens, projection emits {}",
            proj.num_tokens
        )));
    }
    if global_embedding.dim() != proj.weight.nrows() {
        return Err(ConditioningError::Shape(format!(
            "embedding width {} vs projection input {}",
            global_embedding.dim(),
            proj.weight.nrows()
        )));
    }
    let d_model = proj.d_model();
    let x = ArrayView1::from(&global_embedding.values);
    let flat = x.dot(&proj.weight) + &proj.bias;
    let pre = flat
        .into_shape_with_order((num_tokens, d_model))
        .map_err(|e| ConditioningError::Shape(e.to_string()))?;
    let mut out = Array2::zeros((num_tokens, d_model));
    for (i, row) in pre.rows().into_iter().enumerate() {
        let normed = layer_norm(row) * &proj.gamma + &proj.beta;
        out.row_mut(i).assign(&normed);
    }
    TokenSequence::new(out, TokenKind::Image)
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut out = scores.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Scaled dot-product attention of `queries` over `context`.
///
/// Queries are projected with `w_q`, context keys/values with the supplied
/// projections. Returns one `d_head`-wide token per query.
pub fn cross_attention(
    queries: &TokenSequence,
    context: &TokenSequence,
    w_q: &Array2<f64>,
    k_proj: &Array2<f64>,
    v_proj: &Array2<f64>,
) -> Result<TokenSequence> {
    if context.is_empty() {
        return Err(ConditioningError::EmptyContext);
    }
    if queries.width() != w_q.nrows() || context.width() != k_proj.nrows() || context.width() != v_proj.nrows() {
        return Err(ConditioningError::Shape(format!(
            "queries {}, context {}, projections {:?}/{:?}/{:?}",
            queries.width(),
            context.width(),
            w_q.dim(),
            k_proj.dim(),
            v_proj.dim()
        )));
    }
    if w_q.ncols() != k_proj.ncols() {
        return Err(ConditioningError::Shape("query and key head widths differ".into()));
    }
    let d_head = w_q.ncols() as f64;
    let q = queries.tokens.dot(w_q);
    let k = context.tokens.dot(k_proj);
    let v = context.tokens.dot(v_proj);
    let scores = q.dot(&k.t()) / d_head.sqrt();
    let weights = softmax_rows(&scores);
    TokenSequence::new(weights.dot(&v), queries.kind)
}

/// Elementwise `o_text + image_scale * o_image`. A scale of 1 is the plain sum.
pub fn combine_streams(o_text: &TokenSequence, o_image: &TokenSequence, image_scale: f64) -> Result<TokenSequence> {
    if o_text.tokens.dim() != o_image.tokens.dim() {
        return Err(ConditioningError::Shape(format!(
            "{:?} vs {:?}",
            o_text.tokens.dim(),
            o_image.tokens.dim()
        )));
    }
    let mut out = o_text.tokens.clone();
    out.scaled_add(image_scale, &o_image.tokens);
    TokenSequence::new(out, o_text.kind)
}

/// Full decoupled block: text and image attention with shared queries, merged.
pub fn decoupled_cross_attention(
    queries: &TokenSequence,
    text: &TokenSequence,
    image: &TokenSequence,
    params: &AttentionParams,
    image_scale: f64,
) -> Result<TokenSequence> {
    let o_t = cross_attention(queries, text, &params.w_q, &params.w_k, &params.w_v)?;
    let o_i = cross_attention(queries, image, &params.w_q, &params.w_k_img, &params.w_v_img)?;
    combine_streams(&o_t, &o_i, image_scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutConfig {
    pub p_drop_image: f64,
    pub p_drop_text: f64,
    pub p_drop_both: f64,
}

impl DropoutConfig {
    pub const NONE: DropoutConfig = DropoutConfig {
        p_drop_image: 0.0,
        p_drop_text: 0.0,
        p_drop_both: 0.0,
    };

    /// The three outcomes are mutually exclusive, so their probabilities
    /// must each lie in [0, 1] and sum to at most 1.
    pub fn validate(&self) -> Result<()> {
        let ps = [self.p_drop_image, self.p_drop_text, self.p_drop_both];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ConditioningError::Config(format!("probabilities {ps:?} outside [0, 1]")));
        }
        if ps.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(ConditioningError::Config(format!("probabilities {ps:?} sum above 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditioningConfig {
    pub image_scale: f64,
    pub dropout: DropoutConfig,
}

impl ConditioningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.image_scale) {
            return Err(ConditioningError::Config(format!("image_scale {} outside [0, 1]", self.image_scale)));
        }
        self.dropout.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropMask {
    None,
    Image,
    Text,
    Both,
}

/// Seeded stream of dropout decisions.
pub struct DropoutSampler {
    config: DropoutConfig,
    rng: ChaCha8Rng,
}

impl DropoutSampler {
    pub fn new(config: DropoutConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn next_mask(&mut self) -> DropMask {
        let u: f64 = self.rng.gen();
        let c = &self.config;
        if u < c.p_drop_both {
            DropMask::Both
        } else if u < c.p_drop_both + c.p_drop_image {
            DropMask::Image
        } else if u < c.p_drop_both + c.p_drop_image + c.p_drop_text {
            DropMask::Text
        } else {
            DropMask::None
        }
    }
}

/// Replaces the omitted stream(s) with null tokens. Untouched streams are
/// returned as exact copies.
pub fn apply_conditioning_dropout(
    text: &TokenSequence,
    image: &TokenSequence,
    dropout: &DropoutConfig,
    seed: u64,
) -> Result<(TokenSequence, TokenSequence, DropMask)> {
    let mask = DropoutSampler::new(*dropout, seed)?.next_mask();
    let drop_text = matches!(mask, DropMask::Text | DropMask::Both);
    let drop_image = matches!(mask, DropMask::Image | DropMask::Both);
    let t = if drop_text { TokenSequence::null_like(text) } else { text.clone() };
    let i = if drop_image { TokenSequence::null_like(image) } else { image.clone() };
    Ok((t, i, mask))
}

/// Deterministic stand-in for the diffusion backend: the normalized merge of
/// prompt and reference embeddings, plus seeded noise of norm `noise_eps`.
pub fn mock_generate(
    prompt_embedding: &EmbeddingVector,
    reference_embedding: &EmbeddingVector,
    image_scale: f64,
    seed: u64,
    noise_eps: f64,
) -> Result<EmbeddingVector> {
    if prompt_embedding.dim() != reference_embedding.dim() {
        return Err(ConditioningError::Shape(format!(
            "prompt width {} vs reference width {}",
            prompt_embedding.dim(),
            reference_embedding.dim()
        )));
    }
    let o_t = TokenSequence::from_embeddings(std::slice::from_ref(prompt_embedding), TokenKind::Text)?;
    let o_i = TokenSequence::from_embeddings(std::slice::from_ref(reference_embedding), TokenKind::Image)?;
    let merged = combine_streams(&o_t, &o_i, image_scale)?;
    let merged = EmbeddingVector::new(merged.tokens.index_axis(Axis(0), 0).to_vec());
    let mut out = merged.normalized().ok_or(ConditioningError::DegenerateInput)?;
    if noise_eps > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = EmbeddingVector::new((0..out.dim()).map(|_| rng.sample(StandardNormal)).collect());
        if let Some(dir) = noise.normalized() {
            for (o, n) in out.values.iter_mut().zip(dir.values) {
                *o += noise_eps * n;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assume, proptest};

    fn seq(rows: Array2<f64>) -> TokenSequence {
        TokenSequence::new(rows, TokenKind::Text).unwrap()
    }

    fn random_seq(n: usize, d: usize, seed: u64) -> TokenSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        seq(Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn zero_embedding_projects_to_zero_tokens() {
        let mut proj = ImageProjection::random(8, 6, 4, 1);
        proj.beta.fill(0.0);
        let out = project_image_embedding(&EmbeddingVector::zeros(8), 4, &proj).unwrap();
        assert!(out.as_array().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn projection_shape_and_moments() {
        let proj = ImageProjection::random(16, DEFAULT_D_MODEL, DEFAULT_NUM_TOKENS, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = EmbeddingVector::new((0..16).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let out = project_image_embedding(&x, 4, &proj).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out.width(), DEFAULT_D_MODEL);
        assert_eq!(out.kind(), TokenKind::Image);
        for row in out.as_array().rows() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-6, "var {var}");
        }
    }

    #[test]
    fn projection_rejects_width_mismatch() {
        let proj = ImageProjection::random(16, 8, 4, 3);
        let err = project_image_embedding(&EmbeddingVector::zeros(15), 4, &proj).unwrap_err();
        assert!(matches!(err, ConditioningError::Shape(_)));
    }

    #[test]
    fn single_context_token_returns_its_value() {
        let params = AttentionParams::random(4, 3, 5);
        let q = random_seq(2, 4, 1);
        let ctx = random_seq(1, 4, 2);
        let out = cross_attention(&q, &ctx, &params.w_q, &params.w_k, &params.w_v).unwrap();
        let v = ctx.as_array().dot(&params.w_v);
        for row in out.as_array().rows() {
            for (a, b) in row.iter().zip(v.row(0)) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn duplicated_context_matches_single() {
        let params = AttentionParams::random(4, 3, 5);
        let q = random_seq(3, 4, 1);
        let one = random_seq(1, 4, 2);
        let two = seq(ndarray::concatenate![Axis(0), one.as_array().view(), one.as_array().view()]);
        let a = cross_attention(&q, &one, &params.w_q, &params.w_k, &params.w_v).unwrap();
        let b = cross_attention(&q, &two, &params.w_q, &params.w_k, &params.w_v).unwrap();
        for (x, y) in a.as_array().iter().zip(b.as_array()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_context_is_rejected() {
        assert_eq!(
            TokenSequence::new(Array2::zeros((0, 4)), TokenKind::Image).unwrap_err(),
            ConditioningError::EmptyContext
        );
    }

    #[test]
    fn combine_degeneracies() {
        let t = random_seq(3, 5, 1);
        let i = random_seq(3, 5, 2);
        assert_eq!(combine_streams(&t, &i, 0.0).unwrap().as_array(), t.as_array());
        let sum = combine_streams(&t, &i, 1.0).unwrap();
        assert_eq!(sum.as_array(), &(t.as_array() + i.as_array()));
        let zero = TokenSequence::null_like(&i);
        assert_eq!(combine_streams(&t, &zero, 0.37).unwrap().as_array(), t.as_array());
        assert!(combine_streams(&t, &random_seq(2, 5, 3), 1.0).is_err());
    }

    #[test]
    fn dropout_extremes() {
        let t = random_seq(3, 4, 1);
        let i = random_seq(2, 4, 2);
        let (t2, i2, mask) = apply_conditioning_dropout(&t, &i, &DropoutConfig::NONE, 11).unwrap();
        assert_eq!(mask, DropMask::None);
        assert_eq!(t2, t);
        assert_eq!(i2, i);
        let both = DropoutConfig {
            p_drop_both: 1.0,
            ..DropoutConfig::NONE
        };
        let (t3, i3, mask) = apply_conditioning_dropout(&t, &i, &both, 11).unwrap();
        assert_eq!(mask, DropMask::Both);
        assert!(t3.as_array().iter().chain(i3.as_array()).all(|v| *v == 0.0));
        assert_eq!(t3.len(), 3);
        assert_eq!(i3.len(), 2);
    }

    #[test]
    fn dropout_rejects_invalid_probabilities() {
        let bad = DropoutConfig {
            p_drop_image: 0.7,
            p_drop_text: 0.7,
            p_drop_both: 0.0,
        };
        assert!(DropoutSampler::new(bad, 0).is_err());
    }

    #[test]
    fn mock_generate_examples() {
        let p = EmbeddingVector::new(vec![3.0, 0.0, 0.0]);
        let r = EmbeddingVector::new(vec![0.0, 1.0, 0.0]);
        assert_eq!(mock_generate(&p, &r, 0.0, 1, 0.0).unwrap().values, vec![1.0, 0.0, 0.0]);
        let out = mock_generate(&p.normalized().unwrap(), &r, 1.0, 1, 0.0).unwrap();
        let cos = out.dot(&p) / (out.norm() * p.norm());
        assert!((cos - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        for scale in [0.0, 0.3, 0.9] {
            let o = mock_generate(&p, &p, scale, 2, 0.0).unwrap();
            assert!((o.dot(&p) / p.norm() - 1.0).abs() < 1e-12);
        }
        let neg = EmbeddingVector::new(vec![-1.0, 0.0, 0.0]);
        let unit = EmbeddingVector::new(vec![1.0, 0.0, 0.0]);
        assert_eq!(mock_generate(&unit, &neg, 1.0, 0, 0.0).unwrap_err(), ConditioningError::DegenerateInput);
    }

    #[test]
    fn mock_generate_noise_is_seeded() {
        let p = EmbeddingVector::new(vec![1.0, 0.5, 0.0, -0.2]);
        let r = EmbeddingVector::new(vec![0.0, 1.0, 1.0, 0.0]);
        let a = mock_generate(&p, &r, 0.5, 7, 0.01).unwrap();
        let b = mock_generate(&p, &r, 0.5, 7, 0.01).unwrap();
        let c = mock_generate(&p, &r, 0.5, 8, 0.01).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let clean = mock_generate(&p, &r, 0.5, 7, 0.0).unwrap();
        let diff: f64 = a.values.iter().zip(&clean.values).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!((diff - 0.01).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn combine_is_linear_in_scale(seed in 0u64..1000, lambda in -2.0f64..2.0) {
            let t = random_seq(3, 4, seed);
            let i = random_seq(3, 4, seed + 1);
            let at = combine_streams(&t, &i, lambda).unwrap();
            let one = combine_streams(&t, &i, 1.0).unwrap();
            for ((o, t0), o1) in at.as_array().iter().zip(t.as_array()).zip(one.as_array()) {
                prop_assert!(((o - t0) - lambda * (o1 - t0)).abs() < 1e-12);
            }
        }

        #[test]
        fn attention_rows_are_convex(seed in 0u64..1000, nq in 1usize..4, nc in 1usize..5) {
            let params = AttentionParams::random(4, 3, seed);
            let q = random_seq(nq, 4, seed + 1);
            let ctx = random_seq(nc, 4, seed + 2);
            let k = ctx.as_array().dot(&params.w_k);
            let scores = q.as_array().dot(&params.w_q).dot(&k.t()) / 3f64.sqrt();
            let w = softmax_rows(&scores);
            for row in w.rows() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            }
            let v = ctx.as_array().dot(&params.w_v);
            let out = cross_attention(&q, &ctx, &params.w_q, &params.w_k, &params.w_v).unwrap();
            for col in 0..v.ncols() {
                let lo = v.column(col).fold(f64::INFINITY, |a, &b| a.min(b));
                let hi = v.column(col).fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                for x in out.as_array().column(col) {
                    prop_assert!(*x >= lo - 1e-12 && *x <= hi + 1e-12);
                }
            }
        }

        #[test]
        fn reference_cosine_grows_with_scale(
            p in proptest::collection::vec(-1.0f64..1.0, 6),
            r in proptest::collection::vec(-1.0f64..1.0, 6),
        ) {
            let p = EmbeddingVector::new(p);
            let mut r = EmbeddingVector::new(r);
            if p.dot(&r) < 0.0 {
                r.values.iter_mut().for_each(|v| *v = -*v);
            }
            prop_assume!(p.norm() > 1e-3 && r.norm() > 1e-3);
            let mut last = f64::NEG_INFINITY;
            for k in 0..=10 {
                let o = mock_generate(&p, &r, k as f64 / 10.0, 0, 0.0).unwrap();
                let cos = o.dot(&r) / (o.norm() * r.norm());
                prop_assert!(cos >= last - 1e-12);
                last = cos;
            }
        }
    }
}
