//! Assembly of the full analysis report from session records.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::info;
use serde::{Deserialize, Serialize};

use super::inference::{
    bonferroni, paired_t, pearson, regression_with_covariates, rm_anova_2x2x2, AnovaTable, CellMeans, RegressionFit,
};
use super::AnalysisError;
use crate::domain::{Condition, Emotion, Instruction, Modality, SessionRecord, TrialFlag, TrialRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Significance level used for the `significant` flags.
    pub alpha: f64,
    /// Bonferroni family size for post-hoc pairwise tests; defaults to the
    /// number of comparisons reported per emotion panel.
    pub posthoc_family_size: Option<usize>,
    /// Family size for the sentiment-rating correlations.
    pub sentiment_family_size: Option<usize>,
    /// Family size for the alignment-rating correlations.
    pub alignment_family_size: Option<usize>,
    /// Drop AI trials whose generation failed from rating means.
    pub exclude_failed_generation: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            posthoc_family_size: None,
            sentiment_family_size: None,
            alignment_family_size: None,
            exclude_failed_generation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: String,
    pub n_subjects: usize,
    pub n_trials: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub sem: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostHocRow {
    pub comparison: String,
    pub mean_difference: f64,
    pub t: f64,
    pub df: usize,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub family_size: usize,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub cell: String,
    pub rho: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub family_size: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub cell: String,
    pub fit: RegressionFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaReportRow {
    pub effect: String,
    #[serde(rename = "F")]
    pub f: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub p: f64,
    pub significant: bool,
    /// Sign of the mean +-1 contrast (neutral, reappraise, AI coded +1).
    pub direction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub subject: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n_sessions: usize,
    pub n_subjects_complete: usize,
    pub cells: Vec<CellSummary>,
    pub anova: Option<Vec<AnovaReportRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anova_error: Option<String>,
    pub posthoc: Vec<PostHocRow>,
    pub sentiment_correlations: Vec<CorrelationReport>,
    pub alignment_correlations: Vec<CorrelationReport>,
    pub regressions: Vec<RegressionReport>,
    pub exclusions: Vec<Exclusion>,
    /// Trials removed per reason, summed over sessions.
    pub excluded_trials: BTreeMap<String, usize>,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stamp: Option<serde_json::Value>,
}

impl AnalysisReport {
    pub fn anova_row(&self, effect: &str) -> Option<&AnovaReportRow> {
        self.anova.as_ref()?.iter().find(|r| r.effect == effect)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Per-subject aggregates for one cell.
#[derive(Debug, Clone, Default)]
struct SubjectCell {
    ratings: Vec<f64>,
    sentiment: Vec<f64>,
    alignment: Vec<f64>,
    word_count: Vec<f64>,
    reading_ease: Vec<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

struct Subject {
    id: String,
    cells: Vec<SubjectCell>,
}

fn collect_subject(session: &SessionRecord, config: &AnalysisConfig, excluded: &mut BTreeMap<String, usize>) -> Subject {
    let mut cells = vec![SubjectCell::default(); 8];
    let mut bump = |reason: &str| *excluded.entry(reason.to_string()).or_default() += 1;
    for trial in &session.trials {
        let cell = &mut cells[trial.condition.index()];
        let failed = trial.condition.is_ai() && trial.has_flag(TrialFlag::GenerationFailed);
        if failed && config.exclude_failed_generation {
            bump("generation_failed");
            continue;
        }
        cell.ratings.push(trial.rating.remapped());
        add_text_measures(trial, cell, &mut bump);
    }
    Subject {
        id: session.header.subject_id.clone(),
        cells,
    }
}

fn add_text_measures(trial: &TrialRecord, cell: &mut SubjectCell, bump: &mut impl FnMut(&str)) {
    if let Some(s) = trial.sentiment_score() {
        cell.sentiment.push(s);
        if let Some((wc, re)) = trial
            .transcript
            .as_ref()
            .and_then(|t| Some((t.word_count as f64, t.reading_ease?)))
        {
            cell.word_count.push(wc);
            cell.reading_ease.push(re);
        }
    }
    if trial.condition.is_ai() {
        match trial.alignment() {
            Some(a) => cell.alignment.push(a),
            None => bump(if trial.has_flag(TrialFlag::CaptionUnavailable) {
                "caption_unavailable"
            } else {
                "alignment_missing"
            }),
        }
    }
}

fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    Some((xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

fn cell_of(emotion: Emotion, instruction: Instruction, modality: Modality) -> Condition {
    Condition::new(emotion, instruction, modality)
}

/// Pairwise comparisons reported per emotion panel.
fn posthoc_pairs(emotion: Emotion) -> [(Condition, Condition); 4] {
    use Instruction::*;
    use Modality::*;
    [
        (cell_of(emotion, Reappraise, Ai), cell_of(emotion, Reappraise, NoAi)),
        (cell_of(emotion, Reappraise, NoAi), cell_of(emotion, Describe, NoAi)),
        (cell_of(emotion, Reappraise, Ai), cell_of(emotion, Describe, Ai)),
        (cell_of(emotion, Describe, Ai), cell_of(emotion, Describe, NoAi)),
    ]
}

fn reappraise_cells() -> Vec<Condition> {
    Condition::all()
        .into_iter()
        .filter(|c| c.instruction == Instruction::Reappraise)
        .collect()
}

fn correlate_cells<F>(subjects: &[Subject], cells: &[Condition], family: usize, pick: F) -> Vec<CorrelationReport>
where
    F: Fn(&SubjectCell) -> &[f64],
{
    let mut raw = Vec::new();
    for cell in cells {
        let (xs, ys): (Vec<f64>, Vec<f64>) = subjects
            .iter()
            .filter_map(|s| {
                let c = &s.cells[cell.index()];
                Some((mean(pick(c))?, mean(&c.ratings)?))
            })
            .unzip();
        match pearson(&xs, &ys) {
            Ok(r) => raw.push((cell.label(), r)),
            Err(e) => info!("correlation for {cell} skipped: {e}"),
        }
    }
    let ps: Vec<f64> = raw.iter().map(|(_, r)| r.p).collect();
    let family = family.max(ps.len()).max(1);
    let adjusted = bonferroni(&ps, family).expect("family covers tests");
    raw.into_iter()
        .zip(adjusted)
        .map(|((cell, r), p_adjusted)| CorrelationReport {
            cell,
            rho: r.rho,
            p_raw: r.p,
            p_adjusted,
            family_size: family,
            n: r.n,
        })
        .collect()
}

/// Builds the full report. Subjects lacking any cell are excluded from the
/// within-subject tests but still contribute to the descriptive cells.
pub fn analyze_sessions(sessions: &[SessionRecord], config: &AnalysisConfig) -> Result<AnalysisReport, AnalysisError> {
    let mut excluded_trials = BTreeMap::new();
    let subjects: Vec<Subject> = sessions
        .iter()
        .map(|s| collect_subject(s, config, &mut excluded_trials))
        .filter(|s| s.cells.iter().any(|c| !c.ratings.is_empty()))
        .collect();
    if subjects.is_empty() {
        return Err(AnalysisError::NoValidSubjects(format!(
            "{} sessions contained no usable trials",
            sessions.len()
        )));
    }

    let mut exclusions = Vec::new();
    let mut complete = Vec::new();
    for s in &subjects {
        let missing: Vec<String> = Condition::all()
            .into_iter()
            .filter(|c| s.cells[c.index()].ratings.is_empty())
            .map(|c| c.label())
            .collect();
        if missing.is_empty() {
            complete.push(s);
        } else {
            info!("subject {} excluded from within-subject tests: missing {missing:?}", s.id);
            exclusions.push(Exclusion {
                subject: s.id.clone(),
                reason: format!("missing cells {}", missing.join(", ")),
            });
        }
    }

    let cells = Condition::all()
        .into_iter()
        .map(|c| {
            let means: Vec<f64> = subjects.iter().filter_map(|s| mean(&s.cells[c.index()].ratings)).collect();
            let n_trials = subjects.iter().map(|s| s.cells[c.index()].ratings.len()).sum();
            let sd = sample_sd(&means);
            CellSummary {
                cell: c.label(),
                n_subjects: means.len(),
                n_trials,
                mean: mean(&means),
                sd,
                sem: sd.map(|v| v / (means.len() as f64).sqrt()),
            }
        })
        .collect();

    let cell_means = CellMeans {
        subjects: complete.iter().map(|s| s.id.clone()).collect(),
        values: complete
            .iter()
            .map(|s| {
                let mut row = [f64::NAN; 8];
                for (i, c) in s.cells.iter().enumerate() {
                    row[i] = mean(&c.ratings).unwrap_or(f64::NAN);
                }
                row
            })
            .collect(),
    };

    let (anova, anova_error) = match rm_anova_2x2x2(&cell_means) {
        Ok(table) => (Some(anova_rows(&table, &cell_means, config.alpha)), None),
        Err(e) => {
            let missing: Vec<String> = Condition::all()
                .into_iter()
                .filter(|c| subjects.iter().all(|s| s.cells[c.index()].ratings.is_empty()))
                .map(|c| c.label())
                .collect();
            let msg = if missing.is_empty() {
                format!("ANOVA not computed: {e}")
            } else {
                format!("ANOVA not computed: no data for cells {}", missing.join(", "))
            };
            (None, Some(msg))
        }
    };

    let mut posthoc = Vec::new();
    if complete.len() >= 2 {
        let family = config.posthoc_family_size.unwrap_or(4);
        for emotion in Emotion::ALL {
            let mut tests = Vec::new();
            for (a, b) in posthoc_pairs(emotion) {
                let xa: Vec<f64> = cell_means.values.iter().map(|r| r[a.index()]).collect();
                let xb: Vec<f64> = cell_means.values.iter().map(|r| r[b.index()]).collect();
                match paired_t(&xa, &xb) {
                    Ok(t) => tests.push((format!("{a} vs {b}"), t)),
                    Err(e) => info!("post-hoc {a} vs {b} skipped: {e}"),
                }
            }
            let ps: Vec<f64> = tests.iter().map(|(_, t)| t.p).collect();
            let family = family.max(ps.len()).max(1);
            let adjusted = bonferroni(&ps, family)?;
            for ((comparison, t), p_adjusted) in tests.into_iter().zip(adjusted) {
                posthoc.push(PostHocRow {
                    comparison,
                    mean_difference: t.mean_difference,
                    t: t.t,
                    df: t.df,
                    p_raw: t.p,
                    p_adjusted,
                    family_size: family,
                    significant: p_adjusted < config.alpha,
                });
            }
        }
    }

    let reappraise = reappraise_cells();
    let sentiment_correlations = correlate_cells(
        &subjects,
        &reappraise,
        config.sentiment_family_size.unwrap_or(reappraise.len()),
        |c| &c.sentiment,
    );
    let rai: Vec<Condition> = reappraise.iter().copied().filter(|c| c.is_ai()).collect();
    let alignment_correlations =
        correlate_cells(&subjects, &rai, config.alignment_family_size.unwrap_or(rai.len()), |c| &c.alignment);

    let mut regressions = Vec::new();
    for cell in &reappraise {
        let rows: Vec<[f64; 4]> = subjects
            .iter()
            .filter_map(|s| {
                let c = &s.cells[cell.index()];
                Some([
                    mean(&c.ratings)?,
                    mean(&c.sentiment)?,
                    mean(&c.word_count)?,
                    mean(&c.reading_ease)?,
                ])
            })
            .collect();
        let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
        match regression_with_covariates(&col(0), &col(1), &col(2), &col(3)) {
            Ok(fit) => regressions.push(RegressionReport {
                cell: cell.label(),
                fit,
            }),
            Err(e) => info!("regression for {cell} skipped: {e}"),
        }
    }

    Ok(AnalysisReport {
        n_sessions: sessions.len(),
        n_subjects_complete: complete.len(),
        cells,
        anova,
        anova_error,
        posthoc,
        sentiment_correlations,
        alignment_correlations,
        regressions,
        exclusions,
        excluded_trials,
        notes: vec![
            "All within-subject factors have two levels (df_num = 1), so sphericity holds trivially and F is uncorrected."
                .into(),
            "Correlations and regressions use per-subject cell means.".into(),
        ],
        stamp: None,
    })
}

fn anova_rows(table: &AnovaTable, data: &CellMeans, alpha: f64) -> Vec<AnovaReportRow> {
    table
        .rows
        .iter()
        .map(|r| {
            let scores = super::inference::contrast_scores(data, r.effect);
            let m = scores.iter().sum::<f64>() / scores.len() as f64;
            AnovaReportRow {
                effect: r.effect.name().to_string(),
                f: r.f,
                df_num: r.df_num,
                df_den: r.df_den,
                p: r.p,
                significant: r.p < alpha,
                direction: if m > 0.0 {
                    1.0
                } else if m < 0.0 {
                    -1.0
                } else {
                    0.0
                },
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "missing".into())
}

/// Markdown tables mirroring the published layout.
pub fn render_markdown(report: &AnalysisReport) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Analysis report\n");
    let _ = writeln!(
        md,
        "Sessions: {} | subjects with complete cells: {}\n",
        report.n_sessions, report.n_subjects_complete
    );

    let _ = writeln!(md, "## Repeated-measures ANOVA\n");
    match &report.anova {
        Some(rows) => {
            let _ = writeln!(md, "| index | F Value | Num DF | Den DF | Pr > F |");
            let _ = writeln!(md, "|---|---:|---:|---:|---:|");
            for r in rows {
                let _ = writeln!(md, "| {} | {:.4} | {} | {} | {:.4} |", r.effect, r.f, r.df_num, r.df_den, r.p);
            }
        }
        None => {
            let _ = writeln!(md, "{}", report.anova_error.as_deref().unwrap_or("not computed"));
        }
    }

    let _ = writeln!(md, "\n## Cell means (remapped ratings)\n");
    let _ = writeln!(md, "| cell | subjects | trials | mean | SD | SEM |");
    let _ = writeln!(md, "|---|---:|---:|---:|---:|---:|");
    for c in &report.cells {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} |",
            c.cell,
            c.n_subjects,
            c.n_trials,
            fmt_opt(c.mean),
            fmt_opt(c.sd),
            fmt_opt(c.sem)
        );
    }

    let _ = writeln!(md, "\n## Post-hoc paired t-tests (Bonferroni)\n");
    let _ = writeln!(md, "| comparison | mean diff | t | df | p | p (adj) | m |");
    let _ = writeln!(md, "|---|---:|---:|---:|---:|---:|---:|");
    for r in &report.posthoc {
        let _ = writeln!(
            md,
            "| {} | {:.3} | {:.3} | {} | {:.4} | {:.4} | {} |",
            r.comparison, r.mean_difference, r.t, r.df, r.p_raw, r.p_adjusted, r.family_size
        );
    }

    for (title, rows) in [
        ("Sentiment vs rating", &report.sentiment_correlations),
        ("Alignment vs rating", &report.alignment_correlations),
    ] {
        let _ = writeln!(md, "\n## {title} (Pearson)\n");
        let _ = writeln!(md, "| cell | rho | p | p (adj) | n |");
        let _ = writeln!(md, "|---|---:|---:|---:|---:|");
        for r in rows {
            let _ = writeln!(md, "| {} | {:.3} | {:.4} | {:.4} | {} |", r.cell, r.rho, r.p_raw, r.p_adjusted, r.n);
        }
    }

    let _ = writeln!(md, "\n## Regression: rating ~ sentiment + word count + reading ease\n");
    let _ = writeln!(md, "| cell | term | estimate | SE | t | p |");
    let _ = writeln!(md, "|---|---|---:|---:|---:|---:|");
    for r in &report.regressions {
        for c in &r.fit.coefficients {
            let _ = writeln!(
                md,
                "| {} | {} | {:.4} | {:.4} | {:.3} | {:.4} |",
                r.cell, c.name, c.estimate, c.std_error, c.t, c.p
            );
        }
    }

    if !report.exclusions.is_empty() || !report.excluded_trials.is_empty() {
        let _ = writeln!(md, "\n## Exclusions\n");
        for e in &report.exclusions {
            let _ = writeln!(md, "- subject {}: {}", e.subject, e.reason);
        }
        for (reason, n) in &report.excluded_trials {
            let _ = writeln!(md, "- {n} trial(s): {reason}");
        }
    }
    let _ = writeln!(md, "\n## Notes\n");
    for n in &report.notes {
        let _ = writeln!(md, "- {n}");
    }
    md
}

/// Per-figure CSV payloads: `(file name, contents)`.
pub fn plot_data(sessions: &[SessionRecord], report: &AnalysisReport) -> Vec<(String, String)> {
    let mut means = String::from("cell,mean,sem,n_subjects\n");
    for c in &report.cells {
        let _ = writeln!(
            means,
            "{},{},{},{}",
            c.cell,
            c.mean.map(|v| v.to_string()).unwrap_or_default(),
            c.sem.map(|v| v.to_string()).unwrap_or_default(),
            c.n_subjects
        );
    }
    let mut sentiment = String::from("subject,cell,sentiment,rating\n");
    let mut alignment = String::from("subject,cell,alignment,rating\n");
    for s in sessions {
        for t in &s.trials {
            if let Some(v) = t.sentiment_score() {
                let _ = writeln!(sentiment, "{},{},{},{}", s.header.subject_id, t.condition, v, t.rating.remapped());
            }
            if let Some(a) = t.alignment() {
                let _ = writeln!(alignment, "{},{},{},{}", s.header.subject_id, t.condition, a, t.rating.remapped());
            }
        }
    }
    vec![
        ("fig_cell_means.csv".into(), means),
        ("fig_sentiment.csv".into(), sentiment),
        ("fig_alignment.csv".into(), alignment),
    ]
}
