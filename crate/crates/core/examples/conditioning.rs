//! Decoupled cross-attention: how the image scale trades text against
//! reference-image conditioning, plus conditioning dropout statistics.

use ndarray::Array2;
use rlab::conditioning::{
    decoupled_cross_attention, mock_generate, AttentionParams, DropoutConfig, DropoutSampler, TokenKind,
    TokenSequence,
};
use rlab::domain::EmbeddingVector;

fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}

fn main() {
    let d = 16;
    let params = AttentionParams::random(d, 8, 1);
    let tokens = |rows, seed: f64, kind| {
        TokenSequence::new(Array2::from_shape_fn((rows, d), |(i, j)| ((i * d + j) as f64 * seed).sin()), kind).unwrap()
    };
    let queries = tokens(4, 0.37, TokenKind::Text);
    let text = tokens(6, 0.11, TokenKind::Text);
    let image = tokens(4, 0.53, TokenKind::Image);

    println!("image_scale  |output| (row 0)");
    for scale in [0.0, 0.3, 0.5, 0.7, 1.0] {
        let out = decoupled_cross_attention(&queries, &text, &image, &params, scale).unwrap();
        let row = out.as_array().row(0);
        println!("{scale:>11.1}  {:.6}", row.dot(&row).sqrt());
    }

    let prompt = EmbeddingVector::new((0..d).map(|i| (i as f64 * 0.9).cos()).collect());
    let reference = EmbeddingVector::new((0..d).map(|i| (i as f64 * 0.4).sin()).collect());
    println!("\nimage_scale  cos(out, prompt)  cos(out, reference)");
    for scale in [0.3, 0.5, 0.7] {
        let out = mock_generate(&prompt, &reference, scale, 7, 0.0).unwrap();
        println!("{scale:>11.1}  {:>15.4}  {:>19.4}", cosine(&out, &prompt), cosine(&out, &reference));
    }

    let cfg = DropoutConfig {
        p_drop_image: 0.05,
        p_drop_text: 0.05,
        p_drop_both: 0.05,
    };
    let mut sampler = DropoutSampler::new(cfg, 3).unwrap();
    let n = 10_000;
    let mut counts = std::collections::BTreeMap::new();
    for _ in 0..n {
        *counts.entry(format!("{:?}", sampler.next_mask())).or_insert(0usize) += 1;
    }
    println!("\ndropout over {n} draws: {counts:?}");
}
