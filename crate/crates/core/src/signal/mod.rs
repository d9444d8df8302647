//! Multichannel recordings: synthesis and the preprocessing chain
//! (band-pass, resample, epoch, baseline, robust scaling).

mod epoch;
mod filter;
pub mod io;
mod resample;
mod scale;
mod synth;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textalign::SubjectId;

pub use epoch::{baseline_correct, epochize, Epoch, EpochMeta, EpochWindow};
pub use filter::{bandpass, sosfiltfilt, ButterworthBandpass, Sos};
pub use resample::{resample, resample_channel, Rational};
pub use scale::{RobustScaler, SubjectScalers, DEFAULT_CLAMP};
pub use synth::{synth_generate, SynthConfig, SynthSubject};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    #[default]
    Eeg,
    Meg,
}

impl Device {
    pub fn default_channels(self) -> usize {
        match self {
            Device::Eeg => 61,
            Device::Meg => 306,
        }
    }
}

/// Continuous recording, `data` is channels × samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub data: Array2<f64>,
    pub sfreq: f64,
    pub channel_positions: Vec<[f64; 2]>,
    pub device: Device,
    pub subject_id: SubjectId,
}

impl Recording {
    pub fn new(
        data: Array2<f64>,
        sfreq: f64,
        channel_positions: Vec<[f64; 2]>,
        device: Device,
        subject_id: SubjectId,
    ) -> Result<Self> {
        if !(sfreq > 0.0) {
            return Err(Error::Parameter(format!("sampling rate must be positive, got {sfreq}")));
        }
        if data.nrows() == 0 {
            return Err(Error::Shape("recording has no channels".into()));
        }
        if channel_positions.len() != data.nrows() {
            return Err(Error::Shape(format!(
                "{} channel positions for {} channels",
                channel_positions.len(),
                data.nrows()
            )));
        }
        Ok(Recording {
            data,
            sfreq,
            channel_positions,
            device,
            subject_id,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration(&self) -> f64 {
        self.n_samples() as f64 / self.sfreq
    }
}

/// Deterministic sensor layout: `n` points spread over the unit disc on a
/// sunflower spiral. `x < 0` is the left hemisphere.
pub fn sensor_layout(n: usize) -> Vec<[f64; 2]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let r = ((i as f64 + 0.5) / n as f64).sqrt();
            let theta = i as f64 * golden;
            [r * theta.cos(), r * theta.sin()]
        })
        .collect()
}
