//! The `analyze` stage: error structure, behaviour, embedding geometry and
//! time-resolved baselines, merged into the evaluation report.

use std::collections::HashMap;
use std::fs::File;
use std::time::Instant;

use ndarray::Array2;
use serde::Serialize;
use serde_json::json;

use super::config::Stage;
use super::manifest::Manifest;
use super::stages::*;
use crate::baselines::{group_curve, peak_time, time_resolved, write_timecourse, TimePoint, TimeResolvedConfig};
use crate::error::{Error, Result};
use crate::keyboard::{Hand, KeyClass, KeyboardLayout};
use crate::metrics::analysis::{
    cer_by_group, confusion_vs_distance, frequency_vs_accuracy, interkey_intervals, word_spans, Confusion, GroupRow,
    GroupedSentence,
};
use crate::metrics::kmeans::{binary_alignment, kmeans};
use crate::metrics::report::{save_table, EvalReport};
use crate::neural::Batch;
use crate::signal::io::load_epochs;
use crate::signal::{Epoch, SubjectScalers};
use crate::splitter::Split;

pub const DISTANCE_CONFUSION: &str = "distance_confusion.csv";
pub const CLASS_FREQUENCY: &str = "class_frequency.csv";
pub const CER_BY_TYPO: &str = "cer_by_typo.csv";
pub const CER_BY_WORD_FREQUENCY: &str = "cer_by_word_frequency.csv";
pub const TIMECOURSE: &str = "timecourse.csv";
pub const TIMECOURSE_CHAR: &str = "timecourse_char.csv";
pub const ANALYSIS: &str = "analysis.json";

/// Time before the press below which no signal is expected.
const PREPRESS_LIMIT: f64 = -0.1;

fn hand_label(layout: &KeyboardLayout) -> impl Fn(&Epoch) -> Option<usize> + '_ {
    |e: &Epoch| match layout.hand_of(e.label) {
        Ok(Hand::Left) => Some(0),
        Ok(Hand::Right) => Some(1),
        Err(_) => None,
    }
}

fn push_groups(report: &mut EvalReport, prefix: &str, rows: &[GroupRow]) {
    for r in rows {
        report.push(format!("{prefix}_{}", r.group), r.cer, r.n, Some(r.sem), None);
    }
}

/// Peak time, accuracy and uncorrected p of the across-subject curve, and
/// the largest departure from chance before `PREPRESS_LIMIT`.
fn summarise_curve(rows: &[TimePoint]) -> (f64, f64, f64, f64) {
    let g = group_curve(rows);
    let peak = peak_time(rows).unwrap_or(f64::NAN);
    let at_peak = g.iter().find(|r| r.time_s == peak).map_or((f64::NAN, f64::NAN), |r| (r.accuracy_mean, r.p));
    let pre = g
        .iter()
        .filter(|r| r.time_s < PREPRESS_LIMIT)
        .map(|r| (r.accuracy_mean - r.chance).abs())
        .fold(0.0, f64::max);
    (peak, at_peak.0, at_peak.1, pre)
}

#[derive(Serialize)]
struct AnalysisSummary {
    kmeans_inertia: f64,
    kmeans_iterations: usize,
    kmeans_cluster_sizes: Vec<usize>,
    intervals: crate::metrics::analysis::IntervalStats,
    distance_test_undefined: bool,
}

pub(super) fn analyze(ctx: Ctx) -> Result<Manifest> {
    let t0 = Instant::now();
    ctx.require(Stage::Evaluate)?;
    let cfg = ctx.cfg;
    let (n_perm, seed) = (cfg.eval.n_permutations, cfg.seed);
    let layout = KeyboardLayout::qwerty();
    let mut report = EvalReport::load_json(&ctx.out.join(EVAL_REPORT))?;

    let fused = read_predictions(&ctx.out.join(PREDICTIONS))?;
    let plain = read_predictions(&ctx.out.join(PREDICTIONS_NOLM))?;
    let epochs = load_epochs(&ctx.out.join(EPOCHS))?;
    let groups = group_epochs(&epochs);

    // confusion structure of the classifier alone
    let mut conf = Confusion::default();
    for p in &plain {
        conf.add(&p.predicted(), &p.target())?;
    }
    let dist = confusion_vs_distance(&conf, &layout, cfg.eval.distance_bins, n_perm, seed)?;
    save_table(&ctx.out.join(DISTANCE_CONFUSION), &dist.bins)?;
    match &dist.test {
        Some(t) => report.push("confusion_distance_r", t.statistic, dist.bins.len(), None, Some(t.p)),
        None => report.warnings.push("confusion vs distance: no off-diagonal letter confusions, r undefined".into()),
    }
    let (freq_rows, freq_test) = frequency_vs_accuracy(&conf, n_perm, seed ^ 2)?;
    save_table(&ctx.out.join(CLASS_FREQUENCY), &freq_rows)?;
    if let Some(t) = freq_test {
        report.push("frequency_accuracy_r", t.statistic, freq_rows.len(), None, Some(t.p));
    }

    // CER split by typo flag and by word frequency, on the final predictions
    let corpus = match &cfg.lm.corpus {
        Some(p) => std::fs::read_to_string(p)?,
        None => std::fs::read_to_string(ctx.out.join(LM_CORPUS))?,
    };
    let mut word_counts: HashMap<&str, usize> = HashMap::new();
    for w in corpus.split_whitespace() {
        *word_counts.entry(w).or_default() += 1;
    }
    let targets: Vec<Vec<KeyClass>> = fused.iter().map(|r| r.target()).collect();
    let preds: Vec<Vec<KeyClass>> = fused.iter().map(|r| r.predicted()).collect();
    let mut typo_items = Vec::new();
    let mut word_items = Vec::new();
    let mut words_per_sentence = Vec::new();
    for (i, r) in fused.iter().enumerate() {
        let eps = groups
            .get(&(r.subject_id, r.sentence_id))
            .ok_or_else(|| Error::DataIntegrity(format!("no epochs for subject {} sentence {}", r.subject_id, r.sentence_id)))?;
        let flags = eps.iter().map(|e| Some(if e.meta.is_typo { "typo" } else { "correct" }.to_string())).collect();
        typo_items.push(GroupedSentence {
            pred: &preds[i],
            target: &targets[i],
            groups: flags,
        });
        let spans = word_spans(&targets[i]);
        let mut words: Vec<String> = Vec::new();
        for (c, s) in targets[i].iter().zip(&spans) {
            if let Some(w) = *s {
                if words.len() <= w {
                    words.push(String::new());
                }
                words[w].push(c.glyph());
            }
        }
        words_per_sentence.push((spans, words));
    }
    let mut seen: Vec<usize> = words_per_sentence
        .iter()
        .flat_map(|(_, ws)| ws.iter().map(|w| word_counts.get(w.as_str()).copied().unwrap_or(0)))
        .filter(|&c| c > 0)
        .collect();
    seen.sort_unstable();
    let median = seen.get(seen.len() / 2).copied().unwrap_or(0);
    for (i, (spans, words)) in words_per_sentence.iter().enumerate() {
        let labels = spans
            .iter()
            .map(|s| {
                s.map(|w| {
                    match word_counts.get(words[w].as_str()).copied().unwrap_or(0) {
                        0 => "oov",
                        c if c >= median => "frequent",
                        _ => "rare",
                    }
                    .to_string()
                })
            })
            .collect();
        word_items.push(GroupedSentence {
            pred: &preds[i],
            target: &targets[i],
            groups: labels,
        });
    }
    let typo_rows = cer_by_group(&typo_items)?;
    let word_rows = cer_by_group(&word_items)?;
    save_table(&ctx.out.join(CER_BY_TYPO), &typo_rows)?;
    save_table(&ctx.out.join(CER_BY_WORD_FREQUENCY), &word_rows)?;
    push_groups(&mut report, "cer", &typo_rows);
    push_groups(&mut report, "cer_word", &word_rows);

    // typing rhythm around errors
    let trials = labelled_trials(ctx.out)?;
    let intervals = interkey_intervals(&trials, n_perm, seed ^ 3)?;
    report.push("interval_typo_s", intervals.mean_typo, intervals.n_typo, Some(intervals.sem_typo), None);
    report.push("interval_correct_s", intervals.mean_correct, intervals.n_correct, Some(intervals.sem_correct), None);
    report.push("interval_ratio", intervals.ratio, intervals.n_typo + intervals.n_correct, None, Some(intervals.test.p));

    // geometry of the convolutional embeddings on test letters
    let (model, scalers) = load_model(ctx.out)?;
    let splits = load_splits(ctx.out)?;
    let test = split_keys(&groups, &splits, Split::Test)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut truth = Vec::new();
    for k in &test {
        let s = to_sentence(&groups[k], &scalers)?;
        let z = model.embed(&Batch::new(&[&s]))?;
        for (e, zr) in groups[k].iter().zip(z.rows()) {
            if let Ok(h) = layout.hand_of(e.label) {
                rows.push(zr.to_vec());
                truth.push(h == Hand::Right);
            }
        }
    }
    if rows.len() < cfg.eval.kmeans_k {
        return Err(Error::DataIntegrity("too few test letters for clustering".into()));
    }
    let x = Array2::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j]);
    let km = kmeans(&x, cfg.eval.kmeans_k, seed)?;
    if cfg.eval.kmeans_k == 2 {
        report.push("kmeans_hand_alignment", binary_alignment(&km.labels, &truth), truth.len(), None, None);
    }
    let mut sizes = vec![0; cfg.eval.kmeans_k];
    km.labels.iter().for_each(|&l| sizes[l] += 1);

    // time-resolved ridge decoding on the wide windows
    let wide = load_epochs(&ctx.out.join(EPOCHS_WIDE))?;
    let wide_scalers = SubjectScalers::fit(
        wide.iter().filter(|e| splits.of(e.meta.sentence_id) == Some(Split::Train)),
        cfg.preprocess.clamp,
    )?;
    let wide = wide_scalers.transform_all(&wide)?;
    let tr = TimeResolvedConfig {
        n_permutations: cfg.eval.n_time_permutations,
        seed,
        ..Default::default()
    };
    let hand = time_resolved(&wide, hand_label(&layout), &tr)?;
    write_timecourse(File::create(ctx.out.join(TIMECOURSE))?, &hand)?;
    let (peak, acc, p, pre) = summarise_curve(&hand);
    let n_hand = wide.iter().filter(|e| e.label.is_letter()).count();
    report.push("timecourse_hand_peak_s", peak, n_hand, None, None);
    report.push("timecourse_hand_peak_accuracy", acc, n_hand, None, Some(p));
    report.push("timecourse_hand_prepress_max_deviation", pre, n_hand, None, None);
    let mut outputs = vec![DISTANCE_CONFUSION, CLASS_FREQUENCY, CER_BY_TYPO, CER_BY_WORD_FREQUENCY, TIMECOURSE];
    if cfg.eval.char_timecourse {
        let chars = time_resolved(&wide, |e| Some(e.label.id()), &tr)?;
        write_timecourse(File::create(ctx.out.join(TIMECOURSE_CHAR))?, &chars)?;
        let (peak, acc, p, _) = summarise_curve(&chars);
        report.push("timecourse_char_peak_s", peak, wide.len(), None, None);
        report.push("timecourse_char_peak_accuracy", acc, wide.len(), None, Some(p));
        outputs.push(TIMECOURSE_CHAR);
    }

    report.correct()?;
    report.save_json(&ctx.out.join(REPORT))?;
    let summary = AnalysisSummary {
        kmeans_inertia: km.inertia,
        kmeans_iterations: km.iterations,
        kmeans_cluster_sizes: sizes,
        intervals,
        distance_test_undefined: dist.test.is_none(),
    };
    std::fs::write(ctx.out.join(ANALYSIS), serde_json::to_string_pretty(&summary)?)?;
    outputs.extend([REPORT, ANALYSIS]);
    ctx.finish(
        Stage::Analyze,
        t0,
        &[PREDICTIONS, PREDICTIONS_NOLM, EPOCHS, EPOCHS_WIDE, EVAL_REPORT, MODEL, SPLITS],
        &outputs,
        json!({ "timecourse_hand_peak_s": peak }),
    )
}
