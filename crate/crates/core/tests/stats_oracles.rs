mod common;

use proptest::prelude::*;
use rlab::analysis::{bonferroni, paired_t, pearson, rm_anova_2x2x2, CellMeans, Effect};

#[test]
fn brute_force_oracles_agree_on_random_datasets() {
    let detail = common::check_stats_oracles(120, 7).unwrap();
    println!("{detail}");
}

#[test]
fn textbook_values() {
    // x = 1..5, y = 2,4,5,4,5: r = 0.7745966692414834 (exact sqrt(0.6))
    let c = pearson(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 5.0, 4.0, 5.0]).unwrap();
    assert!((c.rho - 0.6f64.sqrt()).abs() < 1e-15);
    let (_, p) = common::oracle_pearson(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 5.0, 4.0, 5.0]);
    assert!((c.p - p).abs() < 1e-12);

    // differences 1,2,3: t = 2 / (1/sqrt 3)
    let t = paired_t(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
    assert!((t.t - 2.0 * 3f64.sqrt()).abs() < 1e-12);
    assert_eq!(t.df, 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pearson_is_symmetric_and_bounded(xs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..30)) {
        let (x, y): (Vec<f64>, Vec<f64>) = xs.into_iter().unzip();
        if let (Ok(a), Ok(b)) = (pearson(&x, &y), pearson(&y, &x)) {
            prop_assert!((a.rho - b.rho).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a.rho));
            prop_assert!((0.0..=1.0).contains(&a.p));
        }
    }

    #[test]
    fn bonferroni_is_monotone_and_clamped(ps in prop::collection::vec(0.0f64..=1.0, 1..8), extra in 0usize..5) {
        let m = ps.len() + extra;
        let adj = bonferroni(&ps, m).unwrap();
        for (p, a) in ps.iter().zip(&adj) {
            prop_assert!(*a >= *p);
            prop_assert!(*a <= 1.0);
        }
    }

    #[test]
    fn anova_f_equals_squared_contrast_t(rows in prop::collection::vec(prop::array::uniform8(-2.0f64..2.0), 3..10)) {
        let data = CellMeans { subjects: (0..rows.len()).map(|i| i.to_string()).collect(), values: rows };
        let table = rm_anova_2x2x2(&data).unwrap();
        for e in Effect::ALL {
            let s = rlab::analysis::contrast_scores(&data, e);
            let zeros = vec![0.0; s.len()];
            let (t, p) = common::oracle_paired_t(&s, &zeros);
            let row = table.row(e);
            prop_assert!((row.f - t * t).abs() <= 1e-8 * (1.0 + row.f));
            prop_assert!((row.p - p).abs() <= 1e-8);
        }
    }
}
