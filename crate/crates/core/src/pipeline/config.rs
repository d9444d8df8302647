//! Pipeline configuration: one JSON document with a section per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::charlm::DEFAULT_ORDER;
use crate::decoder::{DEFAULT_ALPHA, DEFAULT_BEAM};
use crate::error::{Error, Result};
use crate::neural::{DecoderConfig, TrainConfig};
use crate::signal::{Device, EpochWindow, SynthConfig, DEFAULT_CLAMP};
use crate::splitter::{DEFAULT_RATIOS, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub n_subjects: usize,
    pub n_sentences: usize,
    pub device: Device,
    /// Defaults to the device's channel count.
    pub n_channels: Option<usize>,
    pub sfreq: f64,
    pub snr: f64,
    pub evoked_peak_latency: f64,
    pub evoked_width: f64,
    pub lateralization_strength: f64,
    pub key_strength: f64,
    pub subject_gain_jitter: f64,
    pub typo_rate: f64,
    pub typo_interkey_factor: f64,
    pub interval_median: f64,
    pub interval_sigma: f64,
    pub min_interval: f64,
    pub trial_gap: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        SynthSection {
            n_subjects: d.n_subjects,
            n_sentences: 200,
            device: d.device,
            n_channels: d.n_channels,
            sfreq: d.sfreq,
            snr: d.snr,
            evoked_peak_latency: d.evoked_peak_latency,
            evoked_width: d.evoked_width,
            lateralization_strength: d.lateralization_strength,
            key_strength: d.key_strength,
            subject_gain_jitter: d.subject_gain_jitter,
            typo_rate: d.typo_rate,
            typo_interkey_factor: d.typo_interkey_factor,
            interval_median: d.interval_median,
            interval_sigma: d.interval_sigma,
            min_interval: d.min_interval,
            trial_gap: d.trial_gap,
        }
    }
}

impl SynthSection {
    pub fn to_synth(&self, sentences: Vec<String>, seed: u64) -> SynthConfig {
        SynthConfig {
            n_subjects: self.n_subjects,
            sentences,
            device: self.device,
            n_channels: self.n_channels,
            sfreq: self.sfreq,
            snr: self.snr,
            evoked_peak_latency: self.evoked_peak_latency,
            evoked_width: self.evoked_width,
            lateralization_strength: self.lateralization_strength,
            key_strength: self.key_strength,
            subject_gain_jitter: self.subject_gain_jitter,
            typo_rate: self.typo_rate,
            typo_interkey_factor: self.typo_interkey_factor,
            interval_median: self.interval_median,
            interval_sigma: self.interval_sigma,
            min_interval: self.min_interval,
            trial_gap: self.trial_gap,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessSection {
    pub l_freq: f64,
    pub h_freq: f64,
    pub target_sfreq: f64,
    pub window: EpochWindow,
    /// Wider window for the time-resolved baselines.
    pub wide_window: EpochWindow,
    pub baseline: bool,
    pub clamp: f64,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            l_freq: 0.1,
            h_freq: 20.0,
            target_sfreq: 50.0,
            window: EpochWindow::default(),
            wide_window: EpochWindow::WIDE,
            baseline: true,
            clamp: DEFAULT_CLAMP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub threshold: f64,
    pub ratios: [f64; 3],
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            threshold: DEFAULT_THRESHOLD,
            ratios: DEFAULT_RATIOS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmSection {
    pub order: usize,
    pub discount: f64,
    /// Plain text, one sentence per line. When absent a synthetic corpus of
    /// `corpus_bytes` is generated, excluding every experiment sentence.
    pub corpus: Option<PathBuf>,
    pub corpus_bytes: usize,
}

impl Default for LmSection {
    fn default() -> Self {
        LmSection {
            order: DEFAULT_ORDER,
            discount: 0.75,
            corpus: None,
            corpus_bytes: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeSection {
    pub alpha: f64,
    pub beam: usize,
}

impl Default for DecodeSection {
    fn default() -> Self {
        DecodeSection {
            alpha: DEFAULT_ALPHA,
            beam: DEFAULT_BEAM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub n_permutations: usize,
    /// Label shuffles per time sample in the time-resolved baselines.
    pub n_time_permutations: usize,
    pub distance_bins: usize,
    pub kmeans_k: usize,
    /// Also run the 29-class time course (slower than the hand one).
    pub char_timecourse: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_permutations: crate::metrics::stats::DEFAULT_PERMUTATIONS,
            n_time_permutations: 100,
            distance_bins: 10,
            kmeans_k: 2,
            char_timecourse: true,
        }
    }
}

/// Section-level seeds in `model` and `train` are replaced by `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub synth: SynthSection,
    pub preprocess: PreprocessSection,
    pub split: SplitSection,
    pub model: DecoderConfig,
    pub train: TrainConfig,
    pub lm: LmSection,
    pub decode: DecodeSection,
    pub eval: EvalSection,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub train_fraction: Option<f64>,
    pub alpha: Option<f64>,
    pub beam: Option<usize>,
    pub device: Option<Device>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl PipelineConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(f) = o.train_fraction {
            self.train.train_fraction = f;
        }
        if let Some(a) = o.alpha {
            self.decode.alpha = a;
        }
        if let Some(b) = o.beam {
            self.decode.beam = b;
        }
        if let Some(d) = o.device {
            self.synth.device = d;
        }
        self.model.seed = self.seed;
        self.train.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.synth.n_sentences < 3 || self.synth.n_subjects == 0 {
            return bad("synth needs at least one subject and three sentences");
        }
        self.synth.to_synth(vec!["a".into()], self.seed).validate().map_err(|e| Error::Config(e.to_string()))?;
        let p = &self.preprocess;
        if !(p.l_freq > 0.0 && p.l_freq < p.h_freq && p.h_freq < p.target_sfreq / 2.0 && p.target_sfreq <= self.synth.sfreq) {
            return bad("preprocess needs 0 < l_freq < h_freq < target_sfreq / 2 and target_sfreq <= sfreq");
        }
        for w in [p.window, p.wide_window] {
            if !(w.tmin < 0.0 && w.tmax > 0.0) {
                return bad("epoch windows must straddle the key press");
            }
        }
        if !(p.clamp > 0.0) {
            return bad("clamp must be positive");
        }
        if !(self.split.threshold > 0.0 && self.split.threshold < 1.0) || self.split.ratios.iter().any(|r| *r < 0.0) {
            return bad("split threshold must be in (0, 1) and ratios non-negative");
        }
        if self.lm.order == 0 || !(0.0..1.0).contains(&self.lm.discount) {
            return bad("lm order must be positive and discount in [0, 1)");
        }
        if self.decode.beam == 0 || !(self.decode.alpha >= 0.0) {
            return bad("decode needs beam >= 1 and alpha >= 0");
        }
        if self.eval.n_permutations == 0 || self.eval.kmeans_k < 2 || self.eval.distance_bins < 3 {
            return bad("eval needs permutations > 0, k >= 2 and at least three distance bins");
        }
        self.train.validate()?;
        Ok(())
    }

    /// Hash of the whole resolved configuration.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serialises"))
    }

    /// Hash of the sections a stage's outputs depend on, so that changing a
    /// downstream knob (say the fusion weight) does not invalidate upstream
    /// artifacts.
    pub fn stage_hash(&self, stage: Stage) -> String {
        use serde_json::json;
        let sections: &[&str] = match stage {
            Stage::Generate => &["synth"],
            Stage::Preprocess => &["synth", "preprocess"],
            Stage::Split => &["synth", "split"],
            Stage::TrainLm => &["synth", "lm"],
            Stage::Train => &["synth", "preprocess", "split", "model", "train"],
            Stage::Decode => &["synth", "preprocess", "split", "model", "train", "lm", "decode"],
            Stage::Evaluate | Stage::Analyze => &["synth", "preprocess", "split", "model", "train", "lm", "decode", "eval"],
        };
        let all = json!(self);
        let mut v = serde_json::Map::new();
        v.insert("seed".into(), json!(self.seed));
        for s in sections {
            v.insert((*s).into(), all[*s].clone());
        }
        sha256_hex(&serde_json::to_vec(&v).expect("config serialises"))
    }
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Generate,
    Preprocess,
    Split,
    TrainLm,
    Train,
    Decode,
    Evaluate,
    Analyze,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Generate,
        Stage::Preprocess,
        Stage::Split,
        Stage::TrainLm,
        Stage::Train,
        Stage::Decode,
        Stage::Evaluate,
        Stage::Analyze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Preprocess => "preprocess",
            Stage::Split => "split",
            Stage::TrainLm => "train-lm",
            Stage::Train => "train",
            Stage::Decode => "decode",
            Stage::Evaluate => "evaluate",
            Stage::Analyze => "analyze",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(PipelineConfig::from_json_str(r#"{"seed": 1, "bogus": 2}"#), Err(Error::Config(_))));
        assert!(matches!(PipelineConfig::from_json_str(r#"{"train": {"epoch": 3}}"#), Err(Error::Config(_))));
        let c = PipelineConfig::from_json_str(r#"{"train": {"epochs": 3}}"#).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.decode.beam, 30);
    }

    #[test]
    fn defaults_validate() {
        let mut c = PipelineConfig::default();
        c.apply(&Overrides::default());
        c.validate().unwrap();
        c.apply(&Overrides {
            train_fraction: Some(0.0),
            ..Default::default()
        });
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn decode_knobs_leave_training_hash_alone() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.apply(&Overrides {
            alpha: Some(0.0),
            ..Default::default()
        });
        assert_eq!(a.stage_hash(Stage::Train), b.stage_hash(Stage::Train));
        assert_ne!(a.stage_hash(Stage::Decode), b.stage_hash(Stage::Decode));
        assert_ne!(a.hash(), b.hash());

        let mut c = a.clone();
        c.train.epochs = 1;
        assert_eq!(a.stage_hash(Stage::TrainLm), c.stage_hash(Stage::TrainLm));
        assert_ne!(a.stage_hash(Stage::Train), c.stage_hash(Stage::Train));
        let mut d = a.clone();
        d.lm.order = 3;
        assert_eq!(a.stage_hash(Stage::Train), d.stage_hash(Stage::Train));
    }
}
