//! Independent reference implementations and the shared criterion checks
//! used by several integration test targets.
#![allow(dead_code)]

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use rlab::analysis::{
    bonferroni, cosine_alignment, paired_t, pearson, regression_with_covariates, rm_anova_2x2x2, sentiment_score,
    CellMeans, Effect, SentimentProbabilities,
};
use rlab::clients::{ClientSet, MockSettings};
use rlab::clock::VirtualClock;
use rlab::conditioning::{
    combine_streams, cross_attention, softmax_rows, DropMask, DropoutConfig, DropoutSampler, TokenKind, TokenSequence,
};
use rlab::domain::{
    remap_rating, Condition, EmbeddingVector, Emotion, Language, Phase, SessionHeader, SessionRecord, Stimulus,
    SESSION_FORMAT_VERSION,
};
use rlab::protocol::{plan_session, run_session, PhaseSchedule, ScriptedParticipant, SessionStatus, TrialContext};
use rlab::storage::{MemoryArtifactStore, SessionWriter};

pub type Check = Result<String, String>;

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ----- brute-force oracles -----

pub fn t_two_tailed(t: f64, df: f64) -> f64 {
    let d = StudentsT::new(0.0, 1.0, df).unwrap();
    2.0 * d.cdf(-t.abs())
}

/// Pearson via raw sums and statrs t distribution.
pub fn oracle_pearson(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    let r = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
    let t = r * ((n - 2.0) / (1.0 - r * r)).sqrt();
    (r, t_two_tailed(t, n - 2.0))
}

/// Paired t via the two-sample variance identity var(x-y) = vx + vy - 2cov.
pub fn oracle_paired_t(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let vx = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / (n - 1.0);
    let vy = y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / (n - 1.0);
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0);
    let t = (mx - my) / ((vx + vy - 2.0 * cov) / n).sqrt();
    (t, t_two_tailed(t, n - 1.0))
}

fn sign(cell: usize, factor: usize) -> f64 {
    // cell = e*4 + i*2 + m
    if (cell >> (2 - factor)) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

fn effect_mask(e: Effect) -> [bool; 3] {
    match e {
        Effect::Emotion => [true, false, false],
        Effect::Instruction => [false, true, false],
        Effect::Modality => [false, false, true],
        Effect::EmotionInstruction => [true, true, false],
        Effect::EmotionModality => [true, false, true],
        Effect::InstructionModality => [false, true, true],
        Effect::ThreeWay => [true, true, true],
    }
}

/// Sum of squares explained by the columns of `x` (hat-matrix projection).
fn projected_ss(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let xtx = x.transpose() * x;
    let inv = xtx.pseudo_inverse(1e-12).unwrap();
    let fitted = x * (inv * (x.transpose() * y));
    fitted.dot(&fitted)
}

/// Repeated-measures ANOVA from the saturated effect-coded linear model:
/// each effect's SS is the projection onto its contrast column and its
/// error SS the projection onto the contrast-by-subject columns.
pub fn oracle_rm_anova(values: &[[f64; 8]]) -> Vec<(f64, f64)> {
    let n = values.len();
    let rows = n * 8;
    let y = DVector::from_iterator(rows, values.iter().flat_map(|r| r.iter().copied()));
    let subj_code = |s: usize, j: usize| -> f64 {
        if s == j {
            1.0
        } else if s == n - 1 {
            -1.0
        } else {
            0.0
        }
    };
    Effect::ALL
        .iter()
        .map(|&e| {
            let mask = effect_mask(e);
            let contrast = |c: usize| -> f64 { (0..3).filter(|&f| mask[f]).map(|f| sign(c, f)).product() };
            let xe = DMatrix::from_fn(rows, 1, |r, _| contrast(r % 8));
            let xs = DMatrix::from_fn(rows, n - 1, |r, j| contrast(r % 8) * subj_code(r / 8, j));
            let ss_e = projected_ss(&xe, &y);
            let ss_err = projected_ss(&xs, &y);
            let df_den = (n - 1) as f64;
            let f = ss_e / (ss_err / df_den);
            let p = 1.0 - FisherSnedecor::new(1.0, df_den).unwrap().cdf(f);
            (f, p)
        })
        .collect()
}

/// OLS by normal equations with a pseudo-inverse; returns
/// (estimate, std_error, p) per column including the intercept.
pub fn oracle_ols(y: &[f64], cols: &[&[f64]]) -> Vec<(f64, f64, f64)> {
    let n = y.len();
    let p = cols.len() + 1;
    let x = DMatrix::from_fn(n, p, |r, c| if c == 0 { 1.0 } else { cols[c - 1][r] });
    let yv = DVector::from_column_slice(y);
    let pinv = x.clone().pseudo_inverse(1e-14).unwrap();
    let beta = &pinv * &yv;
    let resid = &yv - &x * &beta;
    let df = (n - p) as f64;
    let sigma2 = resid.dot(&resid) / df;
    let cov = (x.transpose() * &x).try_inverse().unwrap() * sigma2;
    (0..p)
        .map(|i| {
            let se = cov[(i, i)].sqrt();
            (beta[i], se, t_two_tailed(beta[i] / se, df))
        })
        .collect()
}

// ----- criteria -----

pub fn check_stats_oracles(datasets: usize, seed: u64) -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-8;
    let mut worst: f64 = 0.0;
    let mut track = |ours: f64, theirs: f64, what: &str, k: usize| -> Result<(), String> {
        let err = (ours - theirs).abs() / (1.0 + theirs.abs());
        worst = worst.max(err);
        ensure(err <= tol, || format!("dataset {k}: {what} {ours} vs oracle {theirs}"))
    };
    for k in 0..datasets {
        let n = rng.gen_range(4..16);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.4 * v + rng.gen_range(-2.0..2.0)).collect();

        let c = pearson(&x, &y).map_err(|e| e.to_string())?;
        let (r, p) = oracle_pearson(&x, &y);
        track(c.rho, r, "pearson rho", k)?;
        track(c.p, p, "pearson p", k)?;

        let t = paired_t(&x, &y).map_err(|e| e.to_string())?;
        let (ot, op) = oracle_paired_t(&x, &y);
        track(t.t, ot, "paired t", k)?;
        track(t.p, op, "paired p", k)?;

        let subjects = rng.gen_range(3..12);
        let values: Vec<[f64; 8]> = (0..subjects)
            .map(|_| {
                let b = rng.gen_range(-1.0..1.0);
                std::array::from_fn(|c| b + 0.3 * sign(c, 1) + rng.gen_range(-1.0..1.0))
            })
            .collect();
        let data = CellMeans {
            subjects: (0..subjects).map(|i| format!("s{i}")).collect(),
            values: values.clone(),
        };
        let table = rm_anova_2x2x2(&data).map_err(|e| e.to_string())?;
        for (e, (of, op)) in Effect::ALL.iter().zip(oracle_rm_anova(&values)) {
            let row = table.row(*e);
            track(row.f, of, &format!("{} F", e.name()), k)?;
            track(row.p, op, &format!("{} p", e.name()), k)?;
            // F must equal the squared one-sample t of the contrast scores.
            let scores = rlab::analysis::contrast_scores(&data, *e);
            let zeros = vec![0.0; scores.len()];
            let (ts, _) = oracle_paired_t(&scores, &zeros);
            track(row.f, ts * ts, &format!("{} F vs t^2", e.name()), k)?;
        }

        let m = rng.gen_range(8..30);
        let sent: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wc: Vec<f64> = (0..m).map(|_| rng.gen_range(3..30) as f64).collect();
        let re: Vec<f64> = (0..m).map(|_| rng.gen_range(20.0..110.0)).collect();
        let rating: Vec<f64> = (0..m)
            .map(|i| 0.8 * sent[i] - 0.01 * wc[i] + 0.002 * re[i] + rng.gen_range(-0.5..0.5))
            .collect();
        let fit = regression_with_covariates(&rating, &sent, &wc, &re).map_err(|e| e.to_string())?;
        for (coef, (b, se, p)) in fit.coefficients.iter().zip(oracle_ols(&rating, &[&sent, &wc, &re])) {
            track(coef.estimate, b, &format!("{} estimate", coef.name), k)?;
            track(coef.std_error, se, &format!("{} se", coef.name), k)?;
            track(coef.p, p, &format!("{} p", coef.name), k)?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("{datasets} datasets, worst rel err {worst:.2e}, {elapsed:.2?}"))
}

pub fn check_formulas() -> Check {
    let start = Instant::now();
    let s = sentiment_score(&SentimentProbabilities::new(0.2, 0.3, 0.5).unwrap()).unwrap();
    ensure(s == 0.3, || format!("sentiment_score(0.2,0.3,0.5) = {s}"))?;
    for raw in 1..=9i64 {
        let v = remap_rating(raw).unwrap();
        ensure(v == (raw as f64 - 5.0) / 2.0, || format!("remap({raw}) = {v}"))?;
    }
    for raw in [0i64, 10, -3] {
        ensure(remap_rating(raw).is_err(), || format!("remap({raw}) accepted"))?;
    }
    let adj = bonferroni(&[0.001, 0.02, 0.3, 0.9], 4).unwrap();
    ensure(adj == vec![0.004, 0.08, 1.0, 1.0], || format!("bonferroni {adj:?}"))?;
    ensure(adj.iter().all(|p| *p <= 1.0), || "bonferroni exceeded 1".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let a = EmbeddingVector::new((0..16).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let b = EmbeddingVector::new((0..16).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let k = rng.gen_range(0.01..100.0);
        let scaled = EmbeddingVector::new(a.values.iter().map(|v| v * k).collect());
        let c1 = cosine_alignment(&a, &b).unwrap();
        let c2 = cosine_alignment(&scaled, &b).unwrap();
        ensure((c1 - c2).abs() <= 1e-12, || format!("cosine not scale invariant: {c1} vs {c2}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("all exact, {elapsed:.2?}"))
}

fn seq(rows: &[[f64; 3]], kind: TokenKind) -> TokenSequence {
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    TokenSequence::new(ndarray::Array2::from_shape_vec((rows.len(), 3), flat).unwrap(), kind).unwrap()
}

fn mat3x2(rows: [[f64; 2]; 3]) -> ndarray::Array2<f64> {
    ndarray::Array2::from_shape_vec((3, 2), rows.iter().flatten().copied().collect()).unwrap()
}

/// Fixture computed with numpy (float64): two queries attending over three
/// context tokens, d_model 3, d_head 2.
pub const FIXTURE_WEIGHTS: [[f64; 3]; 2] = [
    [0.2728953589310807, 0.7215201063244927, 0.0055845347444266145],
    [0.04732240122194352, 0.47633879938902823, 0.47633879938902823],
];
pub const FIXTURE_OUTPUT: [[f64; 2]; 2] = [
    [0.4916231978833601, -0.3289306721611515],
    [-0.21450819908354235, -1.8343715957231976],
];

pub fn attention_fixture() -> Result<f64, String> {
    let queries = seq(&[[0.5, -1.0, 2.0], [1.5, 0.25, -0.75]], TokenKind::Text);
    let context = seq(&[[1.0, 0.0, -1.0], [0.5, 2.0, 0.0], [-1.5, 0.5, 1.0]], TokenKind::Text);
    let w_q = mat3x2([[1.0, 0.5], [-0.5, 1.0], [0.25, -0.25]]);
    let w_k = mat3x2([[0.5, -1.0], [1.0, 0.0], [0.0, 0.5]]);
    let w_v = mat3x2([[1.0, 2.0], [0.0, -1.0], [0.5, 0.5]]);
    let out = cross_attention(&queries, &context, &w_q, &w_k, &w_v).map_err(|e| e.to_string())?;
    let q = queries.as_array().dot(&w_q);
    let k = context.as_array().dot(&w_k);
    let weights = softmax_rows(&(q.dot(&k.t()) / 2f64.sqrt()));
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..3 {
            worst = worst.max((weights[(i, j)] - FIXTURE_WEIGHTS[i][j]).abs());
        }
        for j in 0..2 {
            worst = worst.max((out.as_array()[(i, j)] - FIXTURE_OUTPUT[i][j]).abs());
        }
    }
    Ok(worst)
}

pub fn check_conditioning() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let rand_seq = |rng: &mut ChaCha8Rng, kind| {
        TokenSequence::new(ndarray::Array2::from_shape_fn((4, 8), |_| rng.gen_range(-2.0..2.0)), kind).unwrap()
    };
    for _ in 0..200 {
        let t = rand_seq(&mut rng, TokenKind::Text);
        let i = rand_seq(&mut rng, TokenKind::Image);
        let (l1, l2) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let a = combine_streams(&t, &i, l1).unwrap();
        let b = combine_streams(&t, &i, l2).unwrap();
        // o(l1) - o(l2) = (l1 - l2) * o_image
        let lhs = a.as_array() - b.as_array();
        let rhs = i.as_array() * (l1 - l2);
        let err = (&lhs - &rhs).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ensure(err <= 1e-12, || format!("linearity residual {err:e}"))?;
        let zero = combine_streams(&t, &i, 0.0).unwrap();
        ensure(zero.as_array() == t.as_array(), || "lambda=0 differs from text stream".into())?;
        let sm = softmax_rows(&(rand_seq(&mut rng, TokenKind::Text).as_array() * 10.0));
        for row in sm.rows() {
            let s: f64 = row.sum();
            ensure((s - 1.0).abs() <= 1e-12, || format!("softmax row sums to {s}"))?;
        }
    }
    let worst = attention_fixture()?;
    ensure(worst <= 1e-9, || format!("fixture deviates by {worst:e}"))?;

    let cfg = DropoutConfig {
        p_drop_image: 0.05,
        p_drop_text: 0.05,
        p_drop_both: 0.05,
    };
    let mut sampler = DropoutSampler::new(cfg, 123).unwrap();
    let draws = 10_000;
    let mut counts = [0usize; 3];
    for _ in 0..draws {
        match sampler.next_mask() {
            DropMask::Image => counts[0] += 1,
            DropMask::Text => counts[1] += 1,
            DropMask::Both => counts[2] += 1,
            DropMask::None => {}
        }
    }
    let rates: Vec<f64> = counts.iter().map(|c| *c as f64 / draws as f64).collect();
    for (r, p) in rates.iter().zip([0.05, 0.05, 0.05]) {
        ensure((r - p).abs() <= 0.02, || format!("dropout rate {r} vs {p}"))?;
    }
    Ok(format!("fixture max err {worst:.1e}, dropout rates {rates:?}"))
}

pub fn stimulus(id: &str, e: Emotion) -> Stimulus {
    Stimulus {
        stimulus_id: id.into(),
        valence_class: e,
        image_path: format!("{id}.jpg").into(),
        image_scale_override: None,
        description: Some(match e {
            Emotion::Negative => "an injured man lying on a street".into(),
            Emotion::Neutral => "a cup on a desk".into(),
        }),
    }
}

pub fn manifest(per_valence: usize) -> Vec<Stimulus> {
    (0..per_valence)
        .map(|i| stimulus(&format!("neg{i:02}"), Emotion::Negative))
        .chain((0..per_valence).map(|i| stimulus(&format!("neu{i:02}"), Emotion::Neutral)))
        .collect()
}

pub fn header(seed: u64) -> SessionHeader {
    SessionHeader {
        format_version: SESSION_FORMAT_VERSION,
        session_id: format!("test-{seed}"),
        subject_id: "P01".into(),
        language: Language::En,
        seed,
        created_at: "1970-01-01T00:00:00Z".into(),
        stamp: None,
    }
}

pub fn virtual_context(seed: u64, settings: &MockSettings) -> TrialContext {
    TrialContext {
        schedule: PhaseSchedule::default(),
        clients: ClientSet::mock(settings, Arc::new(MemoryArtifactStore::new())),
        clock: Arc::new(VirtualClock::new()),
        language: Language::En,
        session_seed: seed,
    }
}

pub fn participant() -> ScriptedParticipant {
    let mut p = ScriptedParticipant::new(vec![
        rlab::protocol::wire::ScriptedResponse::spoken("this person will recover and be fine", 6),
        rlab::protocol::wire::ScriptedResponse::spoken("a man is lying on the street", 3),
    ]);
    p.rating_delay_ms = 1500;
    p
}

/// Every phase duration equals its scheduled value exactly and the
/// pre-rating path is the same length for every cell.
pub fn check_phase_timing() -> Result<(), String> {
    let sched = PhaseSchedule::default();
    let ctx = virtual_context(21, &MockSettings::default());
    let plan = plan_session(&manifest(4), 1, 21).map_err(|e| e.to_string())?;
    let mut rec = SessionRecord {
        header: header(21),
        trials: vec![],
    };
    let status = run_session(&mut rec, &plan, &ctx, &mut participant(), None).map_err(|e| e.to_string())?;
    ensure(status == SessionStatus::Completed, || format!("{status:?}"))?;
    let mut pre_rating = Vec::new();
    for t in &rec.trials {
        let start = t.phase_timestamps[0].start_ms;
        for w in t.phase_timestamps.windows(2) {
            ensure(w[0].end_ms == w[1].start_ms, || format!("trial {}: gap between phases", t.trial_index))?;
        }
        for s in &t.phase_timestamps {
            let want = match s.phase {
                Phase::View => sched.view_ms,
                Phase::Speak => sched.speak_ms,
                Phase::Gray => sched.gray_ms,
                Phase::GeneratedImage => sched.generated_view_ms,
                Phase::Rating => 1500,
                Phase::InterTrial => sched.inter_trial_ms,
            };
            ensure(s.duration_ms() == want, || {
                format!("trial {}: {:?} lasted {} ms, want {want}", t.trial_index, s.phase, s.duration_ms())
            })?;
        }
        let gray = t.phase_timestamps.iter().find(|s| s.phase == Phase::Gray).unwrap();
        pre_rating.push((t.condition, gray.end_ms - start));
        let onset = t.phase_timestamps.iter().find(|s| s.phase == Phase::Rating).unwrap().start_ms - start;
        ensure(onset == sched.rating_onset_ms(t.condition.modality), || {
            format!("trial {}: rating onset {onset}", t.trial_index)
        })?;
    }
    let cells: std::collections::HashSet<Condition> = pre_rating.iter().map(|(c, _)| *c).collect();
    ensure(cells.len() == 8, || "not all cells ran".into())?;
    ensure(pre_rating.iter().all(|(_, d)| *d == sched.pre_rating_ms()), || {
        format!("pre-rating paths differ: {pre_rating:?}")
    })?;
    Ok(())
}

/// Runs a session that disconnects mid-way, tears the file's last line,
/// resumes from the persisted prefix and checks the final file.
pub fn check_crash_prefix(dir: &std::path::Path) -> Result<usize, String> {
    let path = dir.join("sessions").join("P01.jsonl");
    let ctx = virtual_context(33, &MockSettings::default());
    let plan = plan_session(&manifest(4), 1, 33).map_err(|e| e.to_string())?;
    let mut rec = SessionRecord {
        header: header(33),
        trials: vec![],
    };
    {
        let mut w = SessionWriter::create(&path, &rec.header).map_err(|e| e.to_string())?;
        let mut p = participant();
        p.disconnect_at = Some(5);
        let st = run_session(&mut rec, &plan, &ctx, &mut p, Some(&mut w)).map_err(|e| e.to_string())?;
        ensure(st == SessionStatus::Paused { next_trial: 5 }, || format!("{st:?}"))?;
    }
    // simulate a crash in the middle of writing trial 5
    let torn = serde_json::to_string(&rec.trials[4]).unwrap();
    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
    std::io::Write::write_all(&mut f, &torn.as_bytes()[..torn.len() / 2]).unwrap();
    drop(f);

    let (mut w, mut resumed) = SessionWriter::resume(&path).map_err(|e| e.to_string())?;
    ensure(resumed.trials.len() == 5, || format!("resumed {} trials", resumed.trials.len()))?;
    ensure(resumed.trials == rec.trials, || "resumed prefix differs".into())?;
    let st = run_session(&mut resumed, &plan, &ctx, &mut participant(), Some(&mut w)).map_err(|e| e.to_string())?;
    ensure(st == SessionStatus::Completed, || format!("{st:?}"))?;
    drop(w);
    let back = rlab::storage::read_session(&path).map_err(|e| e.to_string())?;
    ensure(back.trials.len() == 8, || format!("{} trials on disk", back.trials.len()))?;
    ensure(back.trials.iter().enumerate().all(|(i, t)| t.trial_index == i), || "indices".into())?;
    ensure(rlab::domain::validate_session(&back).is_empty(), || "invalid session".into())?;
    Ok(back.trials.len())
}

/// Significance counts per effect over `seeds` simulated cohorts.
pub fn cohort_significance(
    template: rlab::simulator::ParticipantModel,
    subjects: usize,
    seeds: std::ops::Range<u64>,
) -> Result<[usize; 7], String> {
    use rayon::prelude::*;
    let per_seed: Vec<Result<[bool; 7], String>> = seeds
        .into_par_iter()
        .map(|seed| {
            let spec = rlab::simulator::CohortSpec::new(subjects, 10, template.clone(), seed);
            let sessions = rlab::simulator::simulate_cohort(&spec).map_err(|e| e.to_string())?;
            let report = rlab::analysis::analyze_sessions(&sessions, &Default::default()).map_err(|e| e.to_string())?;
            let mut sig = [false; 7];
            for (k, e) in Effect::ALL.iter().enumerate() {
                sig[k] = report
                    .anova_row(e.name())
                    .ok_or_else(|| format!("seed {seed}: no row for {}", e.name()))?
                    .significant;
            }
            Ok(sig)
        })
        .collect();
    let mut counts = [0usize; 7];
    for r in per_seed {
        for (c, s) in counts.iter_mut().zip(r?) {
            *c += s as usize;
        }
    }
    Ok(counts)
}

pub fn check_closed_loop(seeds: u64) -> Check {
    let start = Instant::now();
    let pl = cohort_significance(rlab::simulator::ParticipantModel::paper_like(), 20, 0..seeds)?;
    let null = cohort_significance(rlab::simulator::ParticipantModel::null(), 20, 1000..1000 + seeds)?;
    let need = (seeds as f64 * 0.95).ceil() as usize;
    let limit = (seeds as f64 * 0.10).floor() as usize;
    let im = pl[5];
    let three = pl[6];
    let elapsed = start.elapsed();
    let summary = format!(
        "paper-like I:M {im}/{seeds}, 3-way {three}/{seeds}; null false positives {null:?} (limit {limit}); {elapsed:.1?}"
    );
    ensure(im >= need && three >= need, || summary.clone())?;
    ensure(null.iter().all(|c| *c <= limit), || summary.clone())?;
    ensure(elapsed < Duration::from_secs(300), || summary.clone())?;
    Ok(summary)
}

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Simulates and analyzes twice with one config into the same paths and
/// compares every output byte.
pub fn check_determinism(root: &std::path::Path) -> Check {
    use rlab::cli::{run_analyze, run_simulate, AnalyzeConfig, SimulateConfig};
    let sim = SimulateConfig::new(6, 77, root.join("sim"));
    let analyze = AnalyzeConfig {
        sessions: root.join("sim").join("sessions"),
        out: root.join("report"),
        family_size: None,
        emit_plot_data: true,
        analysis: Default::default(),
    };
    let mut runs = Vec::new();
    for _ in 0..2 {
        let _ = std::fs::remove_dir_all(root.join("sim"));
        let _ = std::fs::remove_dir_all(root.join("report"));
        run_simulate(&sim).map_err(|e| e.to_string())?;
        run_analyze(&analyze).map_err(|e| e.to_string())?;
        runs.push((dir_bytes(&root.join("sim")), dir_bytes(&root.join("report"))));
    }
    let files = runs[0].0.len() + runs[0].1.len();
    ensure(runs[0].0.iter().any(|(n, _)| n.ends_with(".jsonl")), || "no session files".into())?;
    ensure(runs[0].1.iter().any(|(n, _)| n == "report.json"), || "no report.json".into())?;
    for (a, b) in [(&runs[0].0, &runs[1].0), (&runs[0].1, &runs[1].1)] {
        ensure(a.len() == b.len(), || "file sets differ".into())?;
        for ((na, ba), (nb, bb)) in a.iter().zip(b.iter()) {
            ensure(na == nb && ba == bb, || format!("{na} differs between runs"))?;
        }
    }
    Ok(format!("{files} output files byte-identical"))
}
