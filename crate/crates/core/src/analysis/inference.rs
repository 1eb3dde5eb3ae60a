//! Correlation, paired tests, within-subject ANOVA and covariate regression.

use serde::{Deserialize, Serialize};

use super::distributions::{f_survival, student_t_two_tailed};
use super::AnalysisError;
use crate::domain::{Condition, EmbeddingVector};

/// Cosine similarity between two embeddings.
pub fn cosine_alignment(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, AnalysisError> {
    if a.dim() != b.dim() {
        return Err(AnalysisError::Validation(format!("embedding widths {} and {}", a.dim(), b.dim())));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(AnalysisError::DegenerateInput("zero-norm embedding".into()));
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    pub p: f64,
    pub n: usize,
}

/// Pearson product-moment correlation with a two-tailed p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::Validation(format!("series lengths {} and {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(AnalysisError::InsufficientData(format!("pearson needs n >= 3, got {n}")));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::DegenerateVariance("constant series".into()));
    }
    let rho = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        student_t_two_tailed(t, df)
    };
    Ok(Correlation { rho, p, n })
}

/// Bonferroni adjustment `min(1, m * p)` for a family of size `m`.
pub fn bonferroni(p_raw: &[f64], m: usize) -> Result<Vec<f64>, AnalysisError> {
    if m < 1 {
        return Err(AnalysisError::Validation("family size must be at least 1".into()));
    }
    if m < p_raw.len() {
        return Err(AnalysisError::Validation(format!(
            "family size {m} smaller than the {} tests supplied",
            p_raw.len()
        )));
    }
    Ok(p_raw.iter().map(|p| (p * m as f64).min(1.0)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedT {
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub mean_difference: f64,
}

/// Paired t-test on `x - y`.
pub fn paired_t(x: &[f64], y: &[f64]) -> Result<PairedT, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::Validation(format!("series lengths {} and {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 2 {
        return Err(AnalysisError::InsufficientData(format!("paired t needs n >= 2, got {n}")));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let md = mean(&d);
    let var = d.iter().map(|v| (v - md).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Err(AnalysisError::DegenerateVariance("paired differences are constant".into()));
    }
    let t = md / (var.sqrt() / (n as f64).sqrt());
    let df = n - 1;
    Ok(PairedT {
        t,
        df,
        p: student_t_two_tailed(t, df as f64),
        mean_difference: md,
    })
}

/// Effects of the 2x2x2 within-subject design, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Effect {
    #[serde(rename = "emotion")]
    Emotion,
    #[serde(rename = "instruction")]
    Instruction,
    #[serde(rename = "modality")]
    Modality,
    #[serde(rename = "emotion:instruction")]
    EmotionInstruction,
    #[serde(rename = "emotion:modality")]
    EmotionModality,
    #[serde(rename = "instruction:modality")]
    InstructionModality,
    #[serde(rename = "emotion:instruction:modality")]
    ThreeWay,
}

impl Effect {
    pub const ALL: [Effect; 7] = [
        Effect::Emotion,
        Effect::Instruction,
        Effect::Modality,
        Effect::EmotionInstruction,
        Effect::EmotionModality,
        Effect::InstructionModality,
        Effect::ThreeWay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Effect::Emotion => "emotion",
            Effect::Instruction => "instruction",
            Effect::Modality => "modality",
            Effect::EmotionInstruction => "emotion:instruction",
            Effect::EmotionModality => "emotion:modality",
            Effect::InstructionModality => "instruction:modality",
            Effect::ThreeWay => "emotion:instruction:modality",
        }
    }

    /// Factor membership (emotion, instruction, modality).
    fn factors(self) -> [bool; 3] {
        match self {
            Effect::Emotion => [true, false, false],
            Effect::Instruction => [false, true, false],
            Effect::Modality => [false, false, true],
            Effect::EmotionInstruction => [true, true, false],
            Effect::EmotionModality => [true, false, true],
            Effect::InstructionModality => [false, true, true],
            Effect::ThreeWay => [true, true, true],
        }
    }
}

/// Per-subject cell means, indexed `[subject][Condition::index()]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMeans {
    pub subjects: Vec<String>,
    pub values: Vec<[f64; 8]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub effect: Effect,
    #[serde(rename = "F")]
    pub f: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub p: f64,
    pub ss_effect: f64,
    pub ss_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub n_subjects: usize,
    pub rows: Vec<AnovaRow>,
}

impl AnovaTable {
    pub fn row(&self, effect: Effect) -> &AnovaRow {
        self.rows.iter().find(|r| r.effect == effect).expect("all effects present")
    }
}

fn level(cell: usize, factor: usize) -> usize {
    // cell index = e*4 + i*2 + m
    (cell >> (2 - factor)) & 1
}

/// Marginal mean over the cells whose levels on `mask`'d factors match
/// `levels`, per subject when `subject` is given, otherwise pooled.
fn marginal(values: &[[f64; 8]], subject: Option<usize>, mask: [bool; 3], levels: [usize; 3]) -> f64 {
    let cells: Vec<usize> = (0..8)
        .filter(|&c| (0..3).all(|f| !mask[f] || level(c, f) == levels[f]))
        .collect();
    let rows: Vec<&[f64; 8]> = match subject {
        Some(s) => vec![&values[s]],
        None => values.iter().collect(),
    };
    let total: f64 = rows.iter().flat_map(|r| cells.iter().map(move |&c| r[c])).sum();
    total / (rows.len() * cells.len()) as f64
}

/// Interaction residual for the factor set `mask` at `levels`, computed by
/// inclusion-exclusion over the marginal means of all subsets.
fn interaction_term(values: &[[f64; 8]], subject: Option<usize>, mask: [bool; 3], levels: [usize; 3]) -> f64 {
    let members: Vec<usize> = (0..3).filter(|&f| mask[f]).collect();
    let k = members.len();
    let mut acc = 0.0;
    for subset in 0..(1usize << k) {
        let mut sub_mask = [false; 3];
        for (bit, &f) in members.iter().enumerate() {
            if subset & (1 << bit) != 0 {
                sub_mask[f] = true;
            }
        }
        let sign = if (k - subset.count_ones() as usize) % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * marginal(values, subject, sub_mask, levels);
    }
    acc
}

/// 2x2x2 repeated-measures ANOVA by sums-of-squares decomposition. Each
/// effect is tested against its own effect-by-subject interaction.
pub fn rm_anova_2x2x2(data: &CellMeans) -> Result<AnovaTable, AnalysisError> {
    let n = data.values.len();
    if n < 2 {
        return Err(AnalysisError::InsufficientData(format!("ANOVA needs at least 2 subjects, got {n}")));
    }
    for (s, row) in data.values.iter().enumerate() {
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            let subject = data.subjects.get(s).map(String::as_str).unwrap_or("?");
            return Err(AnalysisError::MissingCell {
                subject: subject.to_string(),
                cell: Condition::all()[c].label(),
            });
        }
    }

    let mut rows = Vec::with_capacity(7);
    for effect in Effect::ALL {
        let mask = effect.factors();
        let mut ss_effect = 0.0;
        let mut ss_error = 0.0;
        // each effect level combination covers 8 / 2^k cells
        for cell in 0..8 {
            let levels = [level(cell, 0), level(cell, 1), level(cell, 2)];
            let pooled = interaction_term(&data.values, None, mask, levels);
            ss_effect += n as f64 * pooled * pooled;
            for s in 0..n {
                let per_subject = interaction_term(&data.values, Some(s), mask, levels);
                let resid = per_subject - pooled;
                ss_error += resid * resid;
            }
        }
        let df_num = 1;
        let df_den = n - 1;
        let f = if ss_error > 0.0 {
            (ss_effect / df_num as f64) / (ss_error / df_den as f64)
        } else if ss_effect == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let p = if ss_effect == 0.0 && ss_error == 0.0 {
            1.0
        } else {
            f_survival(f, df_num as f64, df_den as f64)
        };
        rows.push(AnovaRow {
            effect,
            f,
            df_num,
            df_den,
            p,
            ss_effect,
            ss_error,
        });
    }
    Ok(AnovaTable { n_subjects: n, rows })
}

/// Per-subject +-1 contrast score for an effect (sign = product of the
/// member factors' level signs). Used for effect direction.
pub fn contrast_scores(data: &CellMeans, effect: Effect) -> Vec<f64> {
    let mask = effect.factors();
    data.values
        .iter()
        .map(|row| {
            (0..8)
                .map(|c| {
                    let sign: f64 = (0..3)
                        .filter(|&f| mask[f])
                        .map(|f| if level(c, f) == 1 { 1.0 } else { -1.0 })
                        .product();
                    sign * row[c]
                })
                .sum::<f64>()
                / 4.0
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub n: usize,
    pub df_residual: usize,
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
}

impl RegressionFit {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Ordinary least squares via Householder QR. `columns` are the predictors
/// (an intercept is added). Returns estimates with standard errors.
pub fn ols(y: &[f64], columns: &[(&'static str, &[f64])]) -> Result<RegressionFit, AnalysisError> {
    let n = y.len();
    let p = columns.len() + 1;
    if columns.iter().any(|(_, c)| c.len() != n) {
        return Err(AnalysisError::Validation("predictor lengths differ from response".into()));
    }
    if n <= p {
        return Err(AnalysisError::InsufficientData(format!("{n} observations for {p} parameters")));
    }

    // column-major design matrix
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(p);
    a.push(vec![1.0; n]);
    a.extend(columns.iter().map(|(_, c)| c.to_vec()));
    let mut qty = y.to_vec();

    let scale: f64 = a.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let tol = 1e-10 * scale * (n as f64).sqrt();
    let mut r = vec![vec![0.0; p]; p];
    for k in 0..p {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= tol {
            return Err(AnalysisError::Collinear(format!(
                "predictor {} is linearly dependent on the others",
                if k == 0 { "intercept" } else { columns[k - 1].0 }
            )));
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        let reflect = |col: &mut [f64]| {
            let dot: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in col.iter_mut().zip(&v) {
                *c -= f * vi;
            }
        };
        for col in a.iter_mut().skip(k) {
            reflect(&mut col[k..]);
        }
        reflect(&mut qty[k..]);
        for (j, col) in a.iter().enumerate().skip(k) {
            r[k][j] = col[k];
        }
        if r[k][k].abs() <= tol {
            return Err(AnalysisError::Collinear("design matrix is rank deficient".into()));
        }
    }

    // back substitution R beta = Q^T y
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = ((i + 1)..p).map(|j| r[i][j] * beta[j]).sum();
        beta[i] = (qty[i] - s) / r[i][i];
    }
    let rss: f64 = qty[p..].iter().map(|v| v * v).sum();
    let df_residual = n - p;
    let sigma2 = rss / df_residual as f64;

    // (X^T X)^{-1} = R^{-1} R^{-T}
    let mut rinv = vec![vec![0.0; p]; p];
    for i in 0..p {
        rinv[i][i] = 1.0 / r[i][i];
        for j in (0..i).rev() {
            let s: f64 = ((j + 1)..=i).map(|k| r[j][k] * rinv[k][i]).sum();
            rinv[j][i] = -s / r[j][j];
        }
    }
    let my = mean(y);
    let tss: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let names: Vec<&'static str> = std::iter::once("intercept").chain(columns.iter().map(|(n, _)| *n)).collect();
    let coefficients = (0..p)
        .map(|i| {
            let var: f64 = (i..p).map(|k| rinv[i][k] * rinv[i][k]).sum::<f64>() * sigma2;
            let se = var.sqrt();
            let t = beta[i] / se;
            Coefficient {
                name: names[i].to_string(),
                estimate: beta[i],
                std_error: se,
                t,
                p: if se > 0.0 { student_t_two_tailed(t, df_residual as f64) } else { f64::NAN },
            }
        })
        .collect();
    Ok(RegressionFit {
        n,
        df_residual,
        coefficients,
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { f64::NAN },
    })
}

/// Rating ~ sentiment + word_count + reading_ease.
///
/// Covariates that are identically zero are dropped from the design, so an
/// all-zero covariate reduces to the simple regression on sentiment.
pub fn regression_with_covariates(
    ratings: &[f64],
    sentiment: &[f64],
    word_count: &[f64],
    reading_ease: &[f64],
) -> Result<RegressionFit, AnalysisError> {
    let mut cols: Vec<(&'static str, &[f64])> = vec![("sentiment", sentiment)];
    for (name, c) in [("word_count", word_count), ("reading_ease", reading_ease)] {
        if c.iter().any(|v| *v != 0.0) {
            cols.push((name, c));
        }
    }
    ols(ratings, &cols)
}
