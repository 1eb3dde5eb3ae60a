//! 2x2x2 repeated-measures ANOVA, post-hoc paired t-tests with Bonferroni
//! correction and a covariate regression on a small hand-made dataset.

use rlab::analysis::{bonferroni, paired_t, pearson, regression_with_covariates, rm_anova_2x2x2, CellMeans};
use rlab::domain::Condition;

fn main() {
    // cell order: Neg-D, Neg-DAI, Neg-R, Neg-RAI, Neu-D, Neu-DAI, Neu-R, Neu-RAI
    let values = vec![
        [-1.2, -1.0, -0.5, 0.4, 0.1, 0.2, 0.3, 0.7],
        [-0.9, -1.1, -0.4, 0.2, 0.0, 0.1, 0.4, 0.6],
        [-1.3, -0.9, -0.6, 0.5, 0.2, 0.1, 0.2, 0.8],
        [-1.0, -1.2, -0.3, 0.3, 0.1, 0.3, 0.5, 0.6],
        [-1.1, -0.8, -0.5, 0.1, 0.0, 0.2, 0.3, 0.9],
        [-0.8, -1.0, -0.6, 0.4, 0.2, 0.0, 0.4, 0.5],
    ];
    let data = CellMeans {
        subjects: (1..=values.len()).map(|i| format!("S{i:02}")).collect(),
        values,
    };
    let table = rm_anova_2x2x2(&data).unwrap();
    println!("{:<30} {:>9} {:>4} {:>4} {:>9}", "effect", "F", "df1", "df2", "p");
    for r in &table.rows {
        println!("{:<30} {:>9.3} {:>4} {:>4} {:>9.5}", r.effect.name(), r.f, r.df_num, r.df_den, r.p);
    }

    let cells = Condition::all();
    let col = |label: &str| -> Vec<f64> {
        let k = cells.iter().position(|c| c.label() == label).unwrap();
        data.values.iter().map(|row| row[k]).collect()
    };
    let pairs = [("Neg-RAI", "Neg-R"), ("Neg-DAI", "Neg-D"), ("Neu-RAI", "Neu-R"), ("Neu-DAI", "Neu-D")];
    let tests: Vec<_> = pairs.iter().map(|(a, b)| paired_t(&col(a), &col(b)).unwrap()).collect();
    let adjusted = bonferroni(&tests.iter().map(|t| t.p).collect::<Vec<_>>(), pairs.len()).unwrap();
    println!("\npost-hoc (Bonferroni, m = {})", pairs.len());
    for ((a, b), (t, p)) in pairs.iter().zip(tests.iter().zip(adjusted)) {
        println!("  {a} - {b}: diff {:+.3}, t({}) = {:.3}, p_adj = {:.4}", t.mean_difference, t.df, t.t, p);
    }

    let sentiment = [0.6, -0.2, 0.8, 0.1, -0.5, 0.4, 0.0, 0.7, -0.1, 0.3];
    let rating = [1.0, -0.5, 1.5, 0.0, -1.0, 0.5, 0.0, 1.5, -0.5, 0.5];
    let words = [9.0, 6.0, 12.0, 5.0, 8.0, 10.0, 4.0, 11.0, 7.0, 6.0];
    let ease = [80.0, 95.0, 70.0, 100.0, 85.0, 78.0, 102.0, 74.0, 90.0, 88.0];
    let r = pearson(&sentiment, &rating).unwrap();
    println!("\nrating ~ sentiment: r = {:.3}, p = {:.4}", r.rho, r.p);
    let fit = regression_with_covariates(&rating, &sentiment, &words, &ease).unwrap();
    for c in &fit.coefficients {
        println!("  {:<13} {:+.4} (se {:.4}, p {:.4})", c.name, c.estimate, c.std_error, c.p);
    }
}
