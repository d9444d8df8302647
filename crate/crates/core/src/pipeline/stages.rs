//! The pipeline stages. Each reads its inputs from the output directory,
//! writes its artifacts there and finishes with a manifest.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{PipelineConfig, Stage};
use super::manifest::{require, Manifest};
use crate::baselines::Dummy;
use crate::charlm::NgramModel;
use crate::corpus::{corpus_text, unique_sentences};
use crate::decoder::decode_sentence;
use crate::error::{Error, Result};
use crate::keyboard::{parse_rendered, render, KeyClass, KeyboardLayout};
use crate::metrics::analysis::Confusion;
use crate::metrics::report::{save_table, EvalReport};
use crate::metrics::stats::{mean, sem, wilcoxon};
use crate::metrics::{cer, her};
use crate::neural::{fit, load_checkpoint, save_checkpoint, DecoderModel, Sentence};
use crate::signal::io::{load_epochs, load_recording, save_epochs, save_recording};
use crate::signal::{bandpass, baseline_correct, epochize, resample, synth_generate, Epoch, EpochWindow, SubjectScalers};
use crate::splitter::{read_splits_csv, split_sentences, write_splits_csv, Split, SplitAssignment};
use crate::textalign::{
    filter_sentences, label_events, read_sentences_csv, read_trials_csv, write_events_csv, write_sentences_csv,
    SentenceId, SentenceTrial, SubjectId,
};

pub const SENTENCES: &str = "sentences.csv";
pub const EVENTS: &str = "events.csv";
pub const SENSORS: &str = "sensors.json";
pub const EPOCHS: &str = "epochs.bin";
pub const EPOCHS_WIDE: &str = "epochs_wide.bin";
pub const PREPROCESS_REPORT: &str = "preprocess_report.json";
pub const SPLITS: &str = "splits.csv";
pub const LM: &str = "lm.bin";
pub const LM_CORPUS: &str = "lm_corpus.txt";
pub const MODEL: &str = "model.json";
pub const MODEL_BLOB: &str = "model.bin";
pub const TRAIN_LOG: &str = "train_log.json";
pub const PREDICTIONS: &str = "predictions.csv";
pub const PREDICTIONS_NOLM: &str = "predictions_nolm.csv";
pub const EVAL_REPORT: &str = "eval_report.json";
pub const REPORT: &str = "report.json";
pub const PER_SENTENCE: &str = "per_sentence.csv";
pub const PER_SUBJECT: &str = "per_subject.csv";
pub const CONFUSION: &str = "confusion.csv";

// offsets so that streams drawn from the one global seed stay independent
const LM_CORPUS_SEED: u64 = 0x1c0_4e05;
const FRACTION_SEED: u64 = 0xf7ac_7104;

/// Where a stage runs and how strictly it checks its inputs.
#[derive(Debug, Clone, Copy)]
pub struct Ctx<'a> {
    pub out: &'a Path,
    pub cfg: &'a PipelineConfig,
    /// Accept upstream artifacts made under a different configuration.
    pub force: bool,
}

impl Ctx<'_> {
    pub(super) fn path(&self, name: &str) -> std::path::PathBuf {
        self.out.join(name)
    }

    pub(super) fn require(&self, stage: Stage) -> Result<Manifest> {
        require(self.out, stage, self.cfg, self.force)
    }

    pub(super) fn finish(&self, stage: Stage, started: Instant, inputs: &[&str], outputs: &[&str], params: serde_json::Value) -> Result<Manifest> {
        let m = Manifest::write(self.out, stage, self.cfg, inputs, outputs, started.elapsed().as_secs_f64(), params)?;
        log::info!("{} done in {:.1}s", stage.name(), m.wall_time_s);
        Ok(m)
    }
}

fn raw_name(subject: SubjectId) -> String {
    format!("raw/subject_{subject:02}.rec")
}

pub fn run_stage(stage: Stage, ctx: Ctx) -> Result<Manifest> {
    ctx.cfg.validate()?;
    std::fs::create_dir_all(ctx.out)?;
    log::info!("running {}", stage.name());
    match stage {
        Stage::Generate => generate(ctx),
        Stage::Preprocess => preprocess(ctx),
        Stage::Split => split(ctx),
        Stage::TrainLm => train_lm(ctx),
        Stage::Train => train(ctx),
        Stage::Decode => decode(ctx),
        Stage::Evaluate => evaluate(ctx),
        Stage::Analyze => super::analyze::analyze(ctx),
    }
}

pub fn run_all(ctx: Ctx) -> Result<Vec<Manifest>> {
    Stage::ALL.iter().map(|&s| run_stage(s, ctx)).collect()
}

fn generate(ctx: Ctx) -> Result<Manifest> {
    let t0 = Instant::now();
    let cfg = ctx.cfg;
    let sentences = unique_sentences(cfg.synth.n_sentences, cfg.seed);
    let subjects = synth_generate(&cfg.synth.to_synth(sentences.clone(), cfg.seed))?;
    let ids: Vec<(SentenceId, String)> = sentences.into_iter().enumerate().map(|(i, s)| (i as SentenceId, s)).collect();
    write_sentences_csv(File::create(ctx.path(SENTENCES))?, &ids)?;
    write_events_csv(
        File::create(ctx.path(EVENTS))?,
        subjects
            .iter()
            .flat_map(|s| s.trials.iter().map(|t| (t.subject_id, t.sentence_id, t.events.as_slice()))),
    )?;
    std::fs::create_dir_all(ctx.path("raw"))?;
    let mut outputs = vec![SENTENCES.to_string(), EVENTS.to_string()];
    for s in &subjects {
        let name = raw_name(s.recording.subject_id);
        save_recording(&ctx.path(&name), &s.recording)?;
        outputs.push(name);
    }
    let params = json!({
        "keystrokes": subjects.iter().map(|s| s.n_keystrokes()).collect::<Vec<_>>(),
        "injected_typos": subjects.iter().map(|s| s.injected_typos).collect::<Vec<_>>(),
    });
    let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    ctx.finish(Stage::Generate, t0, &[], &outputs, params)
}

/// Reads the event table and labels every keystroke from the alignment of
/// typed to read text.
pub fn labelled_trials(out: &Path) -> Result<Vec<SentenceTrial>> {
    let sentences = read_sentences_csv(File::open(out.join(SENTENCES))?)?;
    let trials = read_trials_csv(File::open(out.join(EVENTS))?, &sentences)?;
    trials.iter().map(label_events).collect()
}

fn subject_ids(trials: &[SentenceTrial]) -> Vec<SubjectId> {
    let mut s: Vec<SubjectId> = trials.iter().map(|t| t.subject_id).collect();
    s.sort_unstable();
    s.dedup();
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub sentences_kept: usize,
    pub sentences_removed: usize,
    pub epochs: usize,
    pub wide_epochs: usize,
}

fn preprocess(ctx: Ctx) -> Result<Manifest> {
    let t0 = Instant::now();
    let gen = ctx.require(Stage::Generate)?;
    let p = &ctx.cfg.preprocess;
    let (trials, filter) = filter_sentences(labelled_trials(ctx.out)?);
    let mut epochs = Vec::new();
    let mut wide = Vec::new();
    let mut positions = None;
    for subject in subject_ids(&trials) {
        let raw = load_recording(&ctx.path(&raw_name(subject)))?;
        positions.get_or_insert_with(|| raw.channel_positions.clone());
        let rec = resample(&bandpass(&raw, p.l_freq, p.h_freq)?, p.target_sfreq)?;
        let cut = |w: EpochWindow| -> Vec<Epoch> {
            let eps = epochize(&rec, &trials, w);
            if p.baseline {
                eps.iter().map(baseline_correct).collect()
            } else {
                eps
            }
        };
        epochs.extend(cut(p.window));
        wide.extend(cut(p.wide_window));
    }
    if epochs.is_empty() {
        return Err(Error::DataIntegrity("preprocessing produced no epochs".into()));
    }
    save_epochs(&ctx.path(EPOCHS), &epochs)?;
    save_epochs(&ctx.path(EPOCHS_WIDE), &wide)?;
    std::fs::write(ctx.path(SENSORS), serde_json::to_string(&positions.unwrap_or_default())?)?;
    let report = PreprocessReport {
        sentences_kept: filter.kept,
        sentences_removed: filter.removed,
        epochs: epochs.len(),
        wide_epochs: wide.len(),
    };
    std::fs::write(ctx.path(PREPROCESS_REPORT), serde_json::to_string_pretty(&report)?)?;
    let inputs: Vec<&str> = gen.outputs.keys().map(String::as_str).collect();
    ctx.finish(
        Stage::Preprocess,
        t0,
        &inputs,
        &[EPOCHS, EPOCHS_WIDE, SENSORS, PREPROCESS_REPORT],
        json!(report),
    )
}

fn split(ctx: Ctx) -> Result<Manifest> {
    let t0 = Instant::now();
    ctx.require(Stage::Generate)?;
    let sentences: Vec<(SentenceId, String)> = read_sentences_csv(File::open(ctx.path(SENTENCES))?)?.into_iter().collect();
    let s = &ctx.cfg.split;
    let a = split_sentences(&sentences, s.threshold, s.ratios, ctx.cfg.seed)?;
    write_splits_csv(File::create(ctx.path(SPLITS))?, &a)?;
    let [train, valid, test] = a.counts();
    ctx.finish(
        Stage::Split,
        t0,
        &[SENTENCES],
        &[SPLITS],
        json!({ "train": train, "valid": valid, "test": test }),
    )
}

fn train_lm(ctx: Ctx) -> Result<Manifest> {
    let t0 = Instant::now();
    ctx.require(Stage::Generate)?;
    let lm = &ctx.cfg.lm;
    let mut outputs = vec![LM];
    let text = match &lm.corpus {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Error::Config(format!("lm corpus {}: {e}", path.display())))?,
        None => {
            let exclude: HashSet<String> = read_sentences_csv(File::open(ctx.path(SENTENCES))?)?.into_values().collect();
            let text = corpus_text(lm.corpus_bytes, ctx.cfg.seed ^ LM_CORPUS_SEED, &exclude);
            std::fs::write(ctx.path(LM_CORPUS), &text)?;
            outputs.push(LM_CORPUS);
            text
        }
    };
    let model = NgramModel::fit(&text, lm.order, lm.discount)?;
    model.save(&ctx.path(LM))?;
    ctx.finish(
        Stage::TrainLm,
        t0,
        &[SENTENCES],
        &outputs,
        json!({ "ngrams": model.n_ngrams(), "nodes": model.n_nodes(), "corpus_bytes": text.len() }),
    )
}

pub fn load_splits(out: &Path) -> Result<SplitAssignment> {
    read_splits_csv(File::open(out.join(SPLITS))?)
}

pub type TrialKey = (SubjectId, SentenceId);

/// Epochs grouped by trial, each group in keystroke order.
pub fn group_epochs(epochs: &[Epoch]) -> BTreeMap<TrialKey, Vec<&Epoch>> {
    let mut g: BTreeMap<TrialKey, Vec<&Epoch>> = BTreeMap::new();
    for e in epochs {
        g.entry((e.meta.subject_id, e.meta.sentence_id)).or_default().push(e);
    }
    for v in g.values_mut() {
        v.sort_by_key(|e| e.meta.position);
    }
    g
}

/// Trials of one split, in key order.
pub fn split_keys(groups: &BTreeMap<TrialKey, Vec<&Epoch>>, splits: &SplitAssignment, which: Split) -> Result<Vec<TrialKey>> {
    let mut keys = Vec::new();
    for &k in groups.keys() {
        let s = splits
            .of(k.1)
            .ok_or_else(|| Error::DataIntegrity(format!("sentence {} has no split", k.1)))?;
        if s == which {
            keys.push(k);
        }
    }
    Ok(keys)
}

/// A uniformly drawn share of the training trials. Smaller fractions take
/// prefixes of the same shuffle, so the subsets are nested.
pub fn subsample(keys: &[TrialKey], fraction: f64, seed: u64) -> Vec<TrialKey> {
    let mut k = keys.to_vec();
    k.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ FRACTION_SEED));
    let n = ((fraction * keys.len() as f64).round() as usize).clamp(1.min(keys.len()), keys.len());
    k.truncate(n);
    k.sort_unstable();
    k
}

pub fn to_sentence(eps: &[&Epoch], scalers: &SubjectScalers) -> Result<Sentence> {
    let scaled: Vec<Epoch> = eps.iter().map(|e| scalers.transform(e)).collect::<Result<_>>()?;
    let views: Vec<_> = scaled.iter().map(|e| e.window.view()).collect();
    let labels = scaled.iter().map(|e| e.label.id()).collect();
    Sentence::from_windows(eps[0].meta.subject_id as usize, &views, labels)
}

fn sentences_for(keys: &[TrialKey], groups: &BTreeMap<TrialKey, Vec<&Epoch>>, scalers: &SubjectScalers) -> Result<Vec<Sentence>> {
    keys.iter().map(|k| to_sentence(&groups[k], scalers)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointExtra {
    scalers: SubjectScalers,
    train_trials: usize,
    train_fraction: f64,
}

fn train(ctx: Ctx) -> Result<Manifest> {
    let t0 = Instant::now();
    ctx.require(Stage::Preprocess)?;
    ctx.require(Stage::Split)?;
    let cfg = ctx.cfg;
    let epochs = load_epochs(&ctx.path(EPOCHS))?;
    let positions: Vec<[f64; 2]> = serde_json::from_str(&std::fs::read_to_string(ctx.path(SENSORS))?)?;
    let splits = load_splits(ctx.out)?;
    let groups = group_epochs(&epochs);
    let train_keys = subsample(&split_keys(&groups, &splits, Split::Train)?, cfg.train.train_fraction, cfg.seed);
    let valid_keys = split_keys(&groups, &splits, Split::Valid)?;
    let scalers = SubjectScalers::fit(train_keys.iter().flat_map(|k| groups[k].iter().copied()), cfg.preprocess.clamp)?;
    let train_set = sentences_for(&train_keys, &groups, &scalers)?;
    let valid_set = sentences_for(&valid_keys, &groups, &scalers)?;
    log::info!("training on {} trials, validating on {}", train_set.len(), valid_set.len());

    let mut mc = cfg.model.clone();
    mc.n_sensors = epochs[0].window.nrows();
    mc.t = epochs[0].window.ncols();
    mc.n_subjects = epochs.iter().map(|e| e.meta.subject_id as usize + 1).max().unwrap_or(1);
    mc.max_sentence_len = mc.max_sentence_len.max(groups.values().map(Vec::len).max().unwrap_or(0));
    let mut model = DecoderModel::new(mc, &positions)?;
    let outcome = fit(&mut model, &train_set, &valid_set, &cfg.train);
    let extra = serde_json::to_value(CheckpointExtra {
        scalers,
        train_trials: train_set.len(),
        train_fraction: cfg.train.train_fraction,
    })?;
    let log = match outcome {
        Ok(log) => log,
        Err(e @ Error::Numeric(_)) => {
            // keep the last good parameters on disk before giving up
            save_checkpoint(&ctx.path(MODEL), &model, 0, json!({ "aborted": e.to_string() }), extra)?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    let best = &log.epochs[log.best_epoch];
    save_checkpoint(
        &ctx.path(MODEL),
        &model,
        log.best_epoch,
        json!({ "valid_loss": best.valid_loss, "valid_accuracy": best.valid_accuracy }),
        extra,
    )?;
    std::fs::write(ctx.path(TRAIN_LOG), serde_json::to_string_pretty(&log)?)?;
    ctx.finish(
        Stage::Train,
        t0,
        &[EPOCHS, SENSORS, SPLITS],
        &[MODEL, MODEL_BLOB, TRAIN_LOG],
        json!({
            "train_trials": train_set.len(),
            "best_epoch": log.best_epoch,
            "best_valid_loss": log.best_valid_loss,
            "valid_accuracy": best.valid_accuracy,
            "epochs_run": log.epochs.len(),
            "parameters": model.params.count(),
        }),
    )
}

/// Loads the trained model and the scalers stored alongside it.
pub fn load_model(out: &Path) -> Result<(DecoderModel, SubjectScalers)> {
    let (model, ck) = load_checkpoint(&out.join(MODEL))?;
    let extra: CheckpointExtra = serde_json::from_value(ck.extra)?;
    Ok((model, extra.scalers))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub sentence_id: SentenceId,
    pub subject_id: SubjectId,
    pub target_classes: String,
    pub predicted_classes: String,
    pub score: f64,
}

impl PredictionRow {
    pub fn target(&self) -> Vec<KeyClass> {
        parse_rendered(&self.target_classes)
    }

    pub fn predicted(&self) -> Vec<KeyClass> {
        parse_rendered(&self.predicted_classes)
    }
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let file = File::open(path).map_err(|_| Error::MissingArtifact {
        path: path.to_path_buf(),
        stage: "decode",
    })?;
    csv::Reader::from_reader(file).deserialize().map(|r| r.map_err(Error::from)).collect()
}

fn decode(ctx: Ctx) -> Result<Manifest> {
    let t0 = Instant::now();
    ctx.require(Stage::Train)?;
    ctx.require(Stage::TrainLm)?;
    let d = &ctx.cfg.decode;
    let (model, scalers) = load_model(ctx.out)?;
    let lm = NgramModel::load(&ctx.path(LM))?;
    let epochs = load_epochs(&ctx.path(EPOCHS))?;
    let groups = group_epochs(&epochs);
    let test = split_keys(&groups, &load_splits(ctx.out)?, Split::Test)?;
    let (mut fused, mut plain) = (Vec::new(), Vec::new());
    for k in &test {
        let s = to_sentence(&groups[k], &scalers)?;
        let target: Vec<KeyClass> = groups[k].iter().map(|e| e.label).collect();
        let row = |text: String, score: f64| PredictionRow {
            sentence_id: k.1,
            subject_id: k.0,
            target_classes: render(&target),
            predicted_classes: text,
            score,
        };
        let with = decode_sentence(&model, Some(&lm), &s, d.beam, d.alpha)?;
        let without = decode_sentence(&model, None, &s, d.beam, d.alpha)?;
        fused.push(row(with.text, with.score));
        plain.push(row(without.text, without.score));
    }
    // (sentence, subject) order
    fused.sort_by_key(|r| (r.sentence_id, r.subject_id));
    plain.sort_by_key(|r| (r.sentence_id, r.subject_id));
    save_table(&ctx.path(PREDICTIONS), &fused)?;
    save_table(&ctx.path(PREDICTIONS_NOLM), &plain)?;
    ctx.finish(
        Stage::Decode,
        t0,
        &[MODEL, MODEL_BLOB, LM, EPOCHS, SPLITS],
        &[PREDICTIONS, PREDICTIONS_NOLM],
        json!({ "sentences": fused.len(), "alpha": d.alpha, "beam": d.beam }),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SentenceScore {
    sentence_id: SentenceId,
    subject_id: SubjectId,
    n: usize,
    cer: f64,
    cer_nolm: f64,
    cer_dummy: f64,
    her: Option<f64>,
    her_nolm: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SubjectScore {
    subject_id: SubjectId,
    sentences: usize,
    cer_mean: f64,
    cer_sem: f64,
    cer_nolm_mean: f64,
    cer_nolm_sem: f64,
    cer_dummy_mean: f64,
}

/// Paired Wilcoxon p, or `None` (with a note) when there are too few pairs.
fn paired_p(a: &[f64], b: &[f64], n_perm: usize, seed: u64, what: &str, report: &mut EvalReport) -> Result<Option<f64>> {
    match wilcoxon(a, b, n_perm, seed) {
        Ok(t) => {
            if let Some(w) = t.warning {
                report.warnings.push(format!("{what}: {w}"));
            }
            Ok(Some(t.p))
        }
        Err(Error::Parameter(m)) => {
            report.warnings.push(format!("{what}: {m}"));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Modal class of the training labels, the chance-level decoder.
pub fn fit_dummy(out: &Path, epochs: &[Epoch]) -> Result<Dummy> {
    let splits = load_splits(out)?;
    let labels: Vec<usize> = epochs
        .iter()
        .filter(|e| splits.of(e.meta.sentence_id) == Some(Split::Train))
        .map(|e| e.label.id())
        .collect();
    Dummy::fit(&labels)
}

fn evaluate(ctx: Ctx) -> Result<Manifest> {
    let t0 = Instant::now();
    ctx.require(Stage::Decode)?;
    let n_perm = ctx.cfg.eval.n_permutations;
    let seed = ctx.cfg.seed;
    let fused = read_predictions(&ctx.path(PREDICTIONS))?;
    let plain = read_predictions(&ctx.path(PREDICTIONS_NOLM))?;
    if fused.len() != plain.len() || fused.is_empty() {
        return Err(Error::DataIntegrity("prediction tables are empty or differ in length".into()));
    }
    let epochs = load_epochs(&ctx.path(EPOCHS))?;
    let dummy = fit_dummy(ctx.out, &epochs)?;
    let layout = KeyboardLayout::qwerty();

    let mut rows = Vec::with_capacity(fused.len());
    let mut conf = Confusion::default();
    let (mut correct, mut dummy_correct, mut total) = (0usize, 0usize, 0usize);
    for (f, p) in fused.iter().zip(&plain) {
        if (f.sentence_id, f.subject_id) != (p.sentence_id, p.subject_id) {
            return Err(Error::DataIntegrity("prediction tables are not aligned".into()));
        }
        let target = f.target();
        let ids: Vec<usize> = target.iter().map(|c| c.id()).collect();
        let (pf, pp) = (f.predicted(), p.predicted());
        conf.add(&pp, &target)?;
        correct += pp.iter().zip(&target).filter(|(a, b)| a == b).count();
        dummy_correct += ids.iter().filter(|&&c| c == dummy.class).count();
        total += target.len();
        rows.push(SentenceScore {
            sentence_id: f.sentence_id,
            subject_id: f.subject_id,
            n: target.len(),
            cer: cer(&pf, &target)?,
            cer_nolm: cer(&pp, &target)?,
            cer_dummy: dummy.cer(&ids)?,
            her: her(&pf, &target, &layout).ok(),
            her_nolm: her(&pp, &target, &layout).ok(),
        });
    }

    let col = |f: fn(&SentenceScore) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let (c_lm, c_plain, c_dummy) = (col(|r| r.cer), col(|r| r.cer_nolm), col(|r| r.cer_dummy));
    let hers: Vec<f64> = rows.iter().filter_map(|r| r.her).collect();
    let hers_plain: Vec<f64> = rows.iter().filter_map(|r| r.her_nolm).collect();
    let n = rows.len();

    let mut subjects: BTreeMap<SubjectId, Vec<&SentenceScore>> = BTreeMap::new();
    for r in &rows {
        subjects.entry(r.subject_id).or_default().push(r);
    }
    let per_subject: Vec<SubjectScore> = subjects
        .iter()
        .map(|(&s, rs)| {
            let c: Vec<f64> = rs.iter().map(|r| r.cer).collect();
            let cp: Vec<f64> = rs.iter().map(|r| r.cer_nolm).collect();
            let cd: Vec<f64> = rs.iter().map(|r| r.cer_dummy).collect();
            SubjectScore {
                subject_id: s,
                sentences: rs.len(),
                cer_mean: mean(&c),
                cer_sem: sem(&c),
                cer_nolm_mean: mean(&cp),
                cer_nolm_sem: sem(&cp),
                cer_dummy_mean: mean(&cd),
            }
        })
        .collect();
    let subject_means: Vec<f64> = per_subject.iter().map(|s| s.cer_mean).collect();

    let mut report = EvalReport::default();
    report.push("cer", mean(&c_lm), n, Some(sem(&c_lm)), None);
    report.push("cer_nolm", mean(&c_plain), n, Some(sem(&c_plain)), None);
    report.push("cer_dummy", mean(&c_dummy), n, Some(sem(&c_dummy)), None);
    report.push("cer_subject_mean", mean(&subject_means), subject_means.len(), Some(sem(&subject_means)), None);
    let diff: Vec<f64> = c_lm.iter().zip(&c_plain).map(|(a, b)| a - b).collect();
    let p = paired_p(&c_lm, &c_plain, n_perm, seed, "lm vs no lm", &mut report)?;
    report.push("delta_cer_lm", mean(&diff), n, Some(sem(&diff)), p);
    let diff: Vec<f64> = c_plain.iter().zip(&c_dummy).map(|(a, b)| a - b).collect();
    let p = paired_p(&c_plain, &c_dummy, n_perm, seed ^ 1, "model vs dummy", &mut report)?;
    report.push("delta_cer_vs_dummy", mean(&diff), n, Some(sem(&diff)), p);
    report.push("her", mean(&hers), hers.len(), Some(sem(&hers)), None);
    report.push("her_nolm", mean(&hers_plain), hers_plain.len(), Some(sem(&hers_plain)), None);
    report.push("accuracy_nolm", correct as f64 / total as f64, total, None, None);
    report.push("accuracy_dummy", dummy_correct as f64 / total as f64, total, None, None);
    report.correct()?;

    save_table(&ctx.path(PER_SENTENCE), &rows)?;
    save_table(&ctx.path(PER_SUBJECT), &per_subject)?;
    write_confusion(&ctx.path(CONFUSION), &conf)?;
    report.save_json(&ctx.path(EVAL_REPORT))?;
    report.save_json(&ctx.path(REPORT))?;
    ctx.finish(
        Stage::Evaluate,
        t0,
        &[PREDICTIONS, PREDICTIONS_NOLM, EPOCHS, SPLITS],
        &[PER_SENTENCE, PER_SUBJECT, CONFUSION, EVAL_REPORT, REPORT],
        json!({ "cer": mean(&c_lm), "cer_nolm": mean(&c_plain), "cer_dummy": mean(&c_dummy) }),
    )
}

/// Rows are targets and columns predictions, both labelled by glyph.
pub fn write_confusion(path: &Path, conf: &Confusion) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = std::iter::once("target".to_string())
        .chain(KeyClass::all().map(|c| c.glyph().to_string()))
        .collect();
    w.write_record(&header)?;
    for c in KeyClass::all() {
        let mut rec = vec![c.glyph().to_string()];
        rec.extend(conf.counts[c.id()].iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_are_nested() {
        let keys: Vec<TrialKey> = (0..4).flat_map(|s| (0..25).map(move |i| (s, i))).collect();
        let q = subsample(&keys, 0.25, 3);
        let h = subsample(&keys, 0.5, 3);
        assert_eq!(q.len(), 25);
        assert_eq!(h.len(), 50);
        assert!(q.iter().all(|k| h.contains(k)));
        assert_eq!(subsample(&keys, 1.0, 3), keys);
    }

    #[test]
    fn prediction_rows_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let rows = vec![PredictionRow {
            sentence_id: 3,
            subject_id: 1,
            target_classes: " el gato # *".into(),
            predicted_classes: "el  gat ".into(),
            score: -1.25,
        }];
        save_table(&path, &rows).unwrap();
        assert_eq!(read_predictions(&path).unwrap(), rows);
    }
}
