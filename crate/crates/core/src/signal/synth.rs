//! Forward model standing in for real M/EEG: ongoing 1/f-plus-white noise
//! with a lateralised, key-specific evoked response after every key press.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{sensor_layout, Device, Recording};
use crate::error::{Error, Result};
use crate::keyboard::{classify_key, Hand, KeyClass, KeyboardLayout, N_CLASSES};
use crate::textalign::{KeystrokeEvent, SentenceTrial, SubjectId};

const NEIGHBOUR_RADIUS: f64 = 1.3;
const SPACE_NEIGHBOURS: &str = "cvbnm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub sentences: Vec<String>,
    pub device: Device,
    /// Defaults to the device's channel count when `None`.
    pub n_channels: Option<usize>,
    pub sfreq: f64,
    /// Evoked template scale over noise standard deviation; infinite means noiseless.
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
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 4,
            sentences: Vec::new(),
            device: Device::Eeg,
            n_channels: None,
            sfreq: 250.0,
            snr: 5.0,
            evoked_peak_latency: 0.04,
            evoked_width: 0.03,
            lateralization_strength: 1.0,
            key_strength: 1.0,
            subject_gain_jitter: 0.2,
            typo_rate: 0.04,
            typo_interkey_factor: 2.0,
            interval_median: 0.25,
            interval_sigma: 0.3,
            min_interval: 0.08,
            trial_gap: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn channels(&self) -> usize {
        self.n_channels.unwrap_or_else(|| self.device.default_channels())
    }

    pub fn validate(&self) -> Result<()> {
        if self.sentences.is_empty() {
            return Err(Error::Config("synthesis needs at least one sentence".into()));
        }
        if !(self.snr > 0.0) {
            return Err(Error::Config(format!("snr must be positive, got {}", self.snr)));
        }
        if !(0.0..1.0).contains(&self.typo_rate) {
            return Err(Error::Config(format!("typo_rate must lie in [0, 1), got {}", self.typo_rate)));
        }
        if self.channels() == 0 || self.n_subjects == 0 {
            return Err(Error::Config("need at least one subject and one channel".into()));
        }
        if !(self.sfreq > 0.0 && self.interval_median > 0.0 && self.evoked_width > 0.0) {
            return Err(Error::Config("sfreq, interval_median and evoked_width must be positive".into()));
        }
        Ok(())
    }
}

/// Generated data for one subject plus the generator's ground truth.
#[derive(Debug, Clone)]
pub struct SynthSubject {
    pub recording: Recording,
    /// Trials with ground-truth `target`/`is_typo` (no return key).
    pub trials: Vec<SentenceTrial>,
    /// Time of the terminating return key of each trial.
    pub return_times: Vec<f64>,
    /// Spatial template per class (classes × channels), subject gains applied.
    pub templates: Array2<f64>,
    pub injected_typos: usize,
}

impl SynthSubject {
    pub fn n_keystrokes(&self) -> usize {
        self.trials.iter().map(|t| t.events.len()).sum()
    }
}

fn unit_rms(v: &mut [f64]) {
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    if rms > 0.0 {
        v.iter_mut().for_each(|x| *x /= rms);
    }
}

/// Subject-independent templates: a hemispheric map whose sign follows the
/// typing hand, plus a fixed random pattern per key.
fn base_templates(cfg: &SynthConfig, positions: &[[f64; 2]], layout: &KeyboardLayout) -> Array2<f64> {
    let n_ch = positions.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7e3a_11c5_d00d_f00d);
    let mut lateral: Vec<f64> = positions.iter().map(|p| p[0]).collect();
    let mean = lateral.iter().sum::<f64>() / n_ch as f64;
    lateral.iter_mut().for_each(|x| *x -= mean);
    unit_rms(&mut lateral);
    let mut t = Array2::zeros((N_CLASSES, n_ch));
    for k in KeyClass::all() {
        let mut own: Vec<f64> = (0..n_ch).map(|_| StandardNormal.sample(&mut rng)).collect();
        unit_rms(&mut own);
        // the left hand drives the right hemisphere (x > 0)
        let sign = match layout.hand_of(k) {
            Ok(Hand::Left) => 1.0,
            Ok(Hand::Right) => -1.0,
            Err(_) => 0.0,
        };
        for ch in 0..n_ch {
            t[[k.id(), ch]] = cfg.lateralization_strength * sign * lateral[ch] + cfg.key_strength * own[ch];
        }
    }
    t
}

fn typo_for(target: char, layout: &KeyboardLayout, rng: &mut ChaCha8Rng) -> char {
    let class = classify_key(target);
    let pool: Vec<char> = if class.is_letter() {
        layout
            .neighbours(class, NEIGHBOUR_RADIUS)
            .expect("letter")
            .into_iter()
            .filter_map(|k| k.letter())
            .collect()
    } else if target == ' ' {
        SPACE_NEIGHBOURS.chars().collect()
    } else {
        "asdfjkl".chars().filter(|&c| c != target).collect()
    };
    pool[rng.random_range(0..pool.len())]
}

/// Pink noise (Kellet's filter) mixed 1:1 with white noise, unit variance.
fn ongoing_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    let mut pink = Vec::with_capacity(n);
    let mut white = Vec::with_capacity(n);
    for _ in 0..n {
        let w: f64 = StandardNormal.sample(rng);
        b[0] = 0.99886 * b[0] + w * 0.0555179;
        b[1] = 0.99332 * b[1] + w * 0.0750759;
        b[2] = 0.96900 * b[2] + w * 0.1538520;
        b[3] = 0.86650 * b[3] + w * 0.3104856;
        b[4] = 0.55000 * b[4] + w * 0.5329522;
        b[5] = -0.7616 * b[5] - w * 0.0168980;
        pink.push(b.iter().sum::<f64>() + w * 0.5362);
        b[6] = w * 0.115926;
        white.push(StandardNormal.sample(rng));
    }
    let mean = pink.iter().sum::<f64>() / n as f64;
    let sd = (pink.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n as f64).sqrt().max(1e-12);
    pink.iter()
        .zip(white)
        .map(|(p, w): (&f64, f64)| ((p - mean) / sd + w) / std::f64::consts::SQRT_2)
        .collect()
}

/// Generates one recording and ground-truth trials per subject.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<SynthSubject>> {
    cfg.validate()?;
    let layout = KeyboardLayout::qwerty();
    let positions = sensor_layout(cfg.channels());
    let base = base_templates(cfg, &positions, &layout);
    (0..cfg.n_subjects)
        .map(|s| generate_subject(cfg, s as SubjectId, &positions, &base, &layout))
        .collect()
}

fn generate_subject(
    cfg: &SynthConfig,
    subject: SubjectId,
    positions: &[[f64; 2]],
    base: &Array2<f64>,
    layout: &KeyboardLayout,
) -> Result<SynthSubject> {
    let n_ch = positions.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (subject as u64 + 1));
    let gains: Vec<f64> = (0..n_ch)
        .map(|_| 1.0 + cfg.subject_gain_jitter * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    let mut templates = base.clone();
    for mut row in templates.rows_mut() {
        row.iter_mut().zip(&gains).for_each(|(v, g)| *v *= g);
    }

    let intervals = LogNormal::new(cfg.interval_median.ln(), cfg.interval_sigma)
        .map_err(|e| Error::Config(format!("interval distribution: {e}")))?;
    let mut trials = Vec::with_capacity(cfg.sentences.len());
    let mut return_times = Vec::with_capacity(cfg.sentences.len());
    let mut injected = 0;
    let mut t = cfg.trial_gap;
    for (sid, sentence) in cfg.sentences.iter().enumerate() {
        t += cfg.trial_gap;
        let chars: Vec<char> = sentence.to_lowercase().chars().collect();
        let typos: Vec<bool> = chars.iter().map(|_| rng.random::<f64>() < cfg.typo_rate).collect();
        let mut events = Vec::with_capacity(chars.len());
        for (i, &target) in chars.iter().enumerate() {
            if i > 0 {
                let mut gap = intervals.sample(&mut rng).max(cfg.min_interval);
                if typos[i] || typos[i - 1] {
                    gap *= cfg.typo_interkey_factor;
                }
                t += gap;
            }
            let pressed = if typos[i] {
                injected += 1;
                typo_for(target, layout, &mut rng)
            } else {
                target
            };
            events.push(KeystrokeEvent {
                time: t,
                pressed,
                target: Some(target),
                is_typo: typos[i],
            });
        }
        t += intervals.sample(&mut rng).max(cfg.min_interval);
        return_times.push(t);
        trials.push(SentenceTrial {
            subject_id: subject,
            sentence_id: sid as u32,
            read_text: chars.iter().collect(),
            typed_text: events.iter().map(|e| e.pressed).collect(),
            events,
        });
        t += cfg.trial_gap;
    }
    let duration = t + 1.0;
    let n = (duration * cfg.sfreq).ceil() as usize;

    let mut data = Array2::zeros((n_ch, n));
    if cfg.snr.is_finite() {
        let noise_sd = 1.0 / cfg.snr;
        for mut row in data.rows_mut() {
            let noise = ongoing_noise(n, &mut rng);
            row.iter_mut().zip(noise).for_each(|(v, x)| *v = x * noise_sd);
        }
    }
    let (lat, width) = (cfg.evoked_peak_latency, cfg.evoked_width);
    for trial in &trials {
        for e in &trial.events {
            let k = classify_key(e.pressed).id();
            let lo = (((e.time - 0.5) * cfg.sfreq).floor().max(0.0)) as usize;
            let hi = (((e.time + 0.6) * cfg.sfreq).ceil() as usize).min(n);
            for i in lo..hi {
                let dt = i as f64 / cfg.sfreq - e.time - lat;
                let g = (-0.5 * (dt / width).powi(2)).exp();
                for ch in 0..n_ch {
                    data[[ch, i]] += templates[[k, ch]] * g;
                }
            }
        }
    }
    let recording = Recording::new(data, cfg.sfreq, positions.to_vec(), cfg.device, subject)?;
    Ok(SynthSubject {
        recording,
        trials,
        return_times,
        templates,
        injected_typos: injected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::unique_sentences;

    #[test]
    fn deterministic() {
        let cfg = SynthConfig {
            n_subjects: 2,
            sentences: unique_sentences(3, 1),
            n_channels: Some(4),
            ..Default::default()
        };
        let a = synth_generate(&cfg).unwrap();
        let b = synth_generate(&cfg).unwrap();
        assert_eq!(a[1].recording, b[1].recording);
        assert_eq!(a[1].trials, b[1].trials);
        assert_ne!(a[0].recording.data, a[1].recording.data);
    }

    #[test]
    fn noiseless_response_equals_template() {
        let cfg = SynthConfig {
            n_subjects: 1,
            sentences: vec!["a".into(), "p".into(), "a".into()],
            n_channels: Some(5),
            snr: f64::INFINITY,
            typo_rate: 0.0,
            ..Default::default()
        };
        let subj = &synth_generate(&cfg).unwrap()[0];
        let rec = &subj.recording;
        for trial in &subj.trials {
            let e = &trial.events[0];
            let k = classify_key(e.pressed).id();
            let start = (e.time * rec.sfreq).round() as usize - 50;
            for j in 0..125 {
                let dt = (start + j) as f64 / rec.sfreq - e.time - 0.04;
                let g = (-0.5 * (dt / 0.03f64).powi(2)).exp();
                for ch in 0..5 {
                    let expect = subj.templates[[k, ch]] * g;
                    assert!((rec.data[[ch, start + j]] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn hand_sign_flips_lateral_component() {
        let cfg = SynthConfig {
            sentences: vec!["x".into()],
            n_channels: Some(16),
            key_strength: 0.0,
            subject_gain_jitter: 0.0,
            ..Default::default()
        };
        let subj = &synth_generate(&cfg).unwrap()[0];
        let q = subj.templates.row(classify_key('q').id()).to_owned();
        let p = subj.templates.row(classify_key('p').id()).to_owned();
        for ch in 0..16 {
            assert!((q[ch] + p[ch]).abs() < 1e-12);
        }
        assert!(subj.templates.row(KeyClass::SPACE.id()).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn typo_rate_and_ground_truth() {
        let cfg = SynthConfig {
            n_subjects: 1,
            sentences: unique_sentences(200, 4),
            n_channels: Some(2),
            typo_rate: 0.04,
            ..Default::default()
        };
        let subj = &synth_generate(&cfg).unwrap()[0];
        let n = subj.n_keystrokes();
        assert!(n >= 5000, "only {n} keystrokes");
        let typos = subj.trials.iter().flat_map(|t| &t.events).filter(|e| e.is_typo).count();
        assert_eq!(typos, subj.injected_typos);
        let frac = typos as f64 / n as f64;
        assert!((frac - 0.04).abs() <= 0.01, "typo fraction {frac}");
        for e in subj.trials.iter().flat_map(|t| &t.events) {
            assert_eq!(e.is_typo, e.target != Some(e.pressed));
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(synth_generate(&SynthConfig::default()).is_err());
        let cfg = SynthConfig {
            sentences: vec!["a".into()],
            typo_rate: 1.0,
            ..Default::default()
        };
        assert!(matches!(synth_generate(&cfg), Err(Error::Config(_))));
    }
}
