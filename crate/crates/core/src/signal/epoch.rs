use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::Recording;
use crate::keyboard::{classify_key, KeyClass};
use crate::textalign::{SentenceId, SentenceTrial, SubjectId};

/// Window bounds relative to the key press, in seconds: `[tmin, tmax)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochWindow {
    pub tmin: f64,
    pub tmax: f64,
}

impl Default for EpochWindow {
    fn default() -> Self {
        EpochWindow { tmin: -0.2, tmax: 0.3 }
    }
}

impl EpochWindow {
    pub const WIDE: EpochWindow = EpochWindow { tmin: -0.5, tmax: 0.5 };

    pub fn n_samples(&self, sfreq: f64) -> usize {
        ((self.tmax - self.tmin) * sfreq).round() as usize
    }

    /// Number of samples strictly before the key press.
    pub fn n_pre(&self, sfreq: f64) -> usize {
        (-self.tmin * sfreq).round().max(0.0) as usize
    }

    /// Time of each window sample relative to the key press.
    pub fn times(&self, sfreq: f64) -> Vec<f64> {
        let offset = (self.tmin * sfreq).round();
        (0..self.n_samples(sfreq)).map(|i| (offset + i as f64) / sfreq).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMeta {
    pub subject_id: SubjectId,
    pub sentence_id: SentenceId,
    /// Index among the labelled keystrokes of the sentence.
    pub position: usize,
    pub pressed: char,
    pub target: char,
    pub is_typo: bool,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    /// channels × samples
    pub window: Array2<f64>,
    pub tmin: f64,
    pub sfreq: f64,
    pub label: KeyClass,
    pub meta: EpochMeta,
}

/// Cuts one window per labelled keystroke. Events too close to either end
/// of the recording are dropped with a warning.
pub fn epochize(rec: &Recording, trials: &[SentenceTrial], window: EpochWindow) -> Vec<Epoch> {
    let len = window.n_samples(rec.sfreq);
    let offset = (window.tmin * rec.sfreq).round() as isize;
    let mut out = Vec::new();
    for trial in trials.iter().filter(|t| t.subject_id == rec.subject_id) {
        let labelled = trial.events.iter().filter_map(|e| e.target.map(|t| (e, t)));
        for (position, (event, target)) in labelled.enumerate() {
            let start = (event.time * rec.sfreq).round() as isize + offset;
            if start < 0 || start as usize + len > rec.n_samples() {
                log::warn!(
                    "subject {} sentence {} key {}: event at {:.3}s too close to the recording edge, dropped",
                    trial.subject_id,
                    trial.sentence_id,
                    position,
                    event.time
                );
                continue;
            }
            let start = start as usize;
            out.push(Epoch {
                window: rec.data.slice(s![.., start..start + len]).to_owned(),
                tmin: window.tmin,
                sfreq: rec.sfreq,
                label: classify_key(target),
                meta: EpochMeta {
                    subject_id: trial.subject_id,
                    sentence_id: trial.sentence_id,
                    position,
                    pressed: event.pressed,
                    target,
                    is_typo: event.is_typo,
                    time: event.time,
                },
            });
        }
    }
    out
}

/// Subtracts each channel's mean over the pre-press part of the window.
pub fn baseline_correct(ep: &Epoch) -> Epoch {
    let n_pre = ((-ep.tmin * ep.sfreq).round().max(0.0) as usize).min(ep.window.ncols());
    let mut out = ep.clone();
    if n_pre == 0 {
        return out;
    }
    let means = ep.window.slice(s![.., ..n_pre]).mean_axis(Axis(1)).expect("non-empty");
    for (mut row, m) in out.window.rows_mut().into_iter().zip(means.iter()) {
        row.mapv_inplace(|v| v - m);
    }
    out
}
