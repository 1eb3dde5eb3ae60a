mod common;

use ndarray::Array2;
use proptest::prelude::*;
use rlab::conditioning::{
    combine_streams, decoupled_cross_attention, softmax_rows, AttentionParams, TokenKind, TokenSequence,
};

#[test]
fn frozen_attention_fixture() {
    let worst = common::attention_fixture().unwrap();
    assert!(worst <= 1e-9, "max deviation {worst:e}");
}

#[test]
fn identities_and_dropout_rates() {
    println!("{}", common::check_conditioning().unwrap());
}

#[test]
fn zero_image_scale_ignores_image_context() {
    let params = AttentionParams::random(8, 4, 3);
    let q = TokenSequence::new(Array2::from_shape_fn((2, 8), |(i, j)| (i + j) as f64 * 0.1), TokenKind::Text).unwrap();
    let text = TokenSequence::new(Array2::from_shape_fn((3, 8), |(i, j)| (i * j) as f64 * 0.2), TokenKind::Text).unwrap();
    let img_a = TokenSequence::new(Array2::from_elem((4, 8), 0.5), TokenKind::Image).unwrap();
    let img_b = TokenSequence::new(Array2::from_shape_fn((4, 8), |(i, _)| i as f64), TokenKind::Image).unwrap();
    let a = decoupled_cross_attention(&q, &text, &img_a, &params, 0.0).unwrap();
    let b = decoupled_cross_attention(&q, &text, &img_b, &params, 0.0).unwrap();
    assert_eq!(a.as_array(), b.as_array());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions(vals in prop::collection::vec(-50.0f64..50.0, 12)) {
        let m = Array2::from_shape_vec((3, 4), vals).unwrap();
        let s = softmax_rows(&m);
        for row in s.rows() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn combine_is_linear_in_scale(
        t in prop::collection::vec(-5.0f64..5.0, 6),
        i in prop::collection::vec(-5.0f64..5.0, 6),
        l1 in 0.0f64..1.0,
        l2 in 0.0f64..1.0,
    ) {
        let ts = TokenSequence::new(Array2::from_shape_vec((2, 3), t).unwrap(), TokenKind::Text).unwrap();
        let is = TokenSequence::new(Array2::from_shape_vec((2, 3), i).unwrap(), TokenKind::Image).unwrap();
        let a = combine_streams(&ts, &is, l1).unwrap();
        let b = combine_streams(&ts, &is, l2).unwrap();
        let diff = a.as_array() - b.as_array() - is.as_array() * (l1 - l2);
        prop_assert!(diff.iter().all(|v| v.abs() <= 1e-12));
    }
}
