use ndarray::Array2;

use super::Recording;
use crate::error::{Error, Result};

/// One biquad `[b0, b1, b2, a1, a2]` with `a0 = 1`.
pub type Sos = [f64; 5];

/// Zero-phase Butterworth band-pass: a high-pass at `lo` cascaded with a
/// low-pass at `hi`, each of the given order, applied forward and backward.
#[derive(Debug, Clone)]
pub struct ButterworthBandpass {
    pub sections: Vec<Sos>,
}

impl ButterworthBandpass {
    pub fn design(lo: f64, hi: f64, sfreq: f64, order: usize) -> Result<Self> {
        let nyq = sfreq / 2.0;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::Parameter(format!("band edges must satisfy 0 < lo < hi, got {lo}, {hi}")));
        }
        if hi >= nyq {
            return Err(Error::Parameter(format!("upper edge {hi} Hz is not below Nyquist {nyq} Hz")));
        }
        if order == 0 || order % 2 != 0 {
            return Err(Error::Parameter(format!("order must be even and positive, got {order}")));
        }
        let mut sections = butter_sections(lo, sfreq, order, false);
        sections.extend(butter_sections(hi, sfreq, order, true));
        Ok(ButterworthBandpass { sections })
    }

    /// Magnitude of one forward pass at `freq`.
    pub fn gain(&self, freq: f64, sfreq: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq / sfreq;
        let (c1, s1, c2, s2) = (w.cos(), w.sin(), (2.0 * w).cos(), (2.0 * w).sin());
        self.sections
            .iter()
            .map(|[b0, b1, b2, a1, a2]| {
                let nr = b0 + b1 * c1 + b2 * c2;
                let ni = -(b1 * s1 + b2 * s2);
                let dr = 1.0 + a1 * c1 + a2 * c2;
                let di = -(a1 * s1 + a2 * s2);
                ((nr * nr + ni * ni) / (dr * dr + di * di)).sqrt()
            })
            .product()
    }
}

/// Butterworth biquads via the bilinear transform with pre-warping.
fn butter_sections(fc: f64, sfreq: f64, order: usize, lowpass: bool) -> Vec<Sos> {
    let k = (std::f64::consts::PI * fc / sfreq).tan();
    (0..order / 2)
        .map(|i| {
            let q = 1.0 / (2.0 * (std::f64::consts::PI * (2 * i + 1) as f64 / (2 * order) as f64).sin());
            let norm = 1.0 / (1.0 + k / q + k * k);
            let a1 = 2.0 * (k * k - 1.0) * norm;
            let a2 = (1.0 - k / q + k * k) * norm;
            if lowpass {
                let b0 = k * k * norm;
                [b0, 2.0 * b0, b0, a1, a2]
            } else {
                [norm, -2.0 * norm, norm, a1, a2]
            }
        })
        .collect()
}

/// Steady-state initial conditions of each section for a unit step input.
fn sos_zi(sections: &[Sos]) -> Vec<[f64; 2]> {
    let mut gain = 1.0;
    sections
        .iter()
        .map(|&[b0, b1, b2, a1, a2]| {
            let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
            let z2 = (b2 - a2 * dc) * gain;
            let z1 = (b1 - a1 * dc) * gain + z2;
            gain *= dc;
            [z1, z2]
        })
        .collect()
}

fn sosfilt_inplace(sections: &[Sos], zi: &[[f64; 2]], x: &mut [f64]) {
    let x0 = x[0];
    for (s, z) in sections.iter().zip(zi) {
        let [b0, b1, b2, a1, a2] = *s;
        let (mut z1, mut z2) = (z[0] * x0, z[1] * x0);
        for v in x.iter_mut() {
            let xin = *v;
            let y = b0 * xin + z1;
            z1 = b1 * xin - a1 * y + z2;
            z2 = b2 * xin - a2 * y;
            *v = y;
        }
    }
}

/// Forward-backward filtering with odd reflection padding at both ends.
pub fn sosfiltfilt(sections: &[Sos], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = (3 * (2 * sections.len() + 1)).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }
    let zi = sos_zi(sections);
    sosfilt_inplace(sections, &zi, &mut ext);
    ext.reverse();
    sosfilt_inplace(sections, &zi, &mut ext);
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Zero-phase 4th-order Butterworth band-pass of every channel.
pub fn bandpass(rec: &Recording, lo: f64, hi: f64) -> Result<Recording> {
    let design = ButterworthBandpass::design(lo, hi, rec.sfreq, 4)?;
    let mut data = Array2::zeros(rec.data.raw_dim());
    for (ch, mut out) in data.rows_mut().into_iter().enumerate() {
        let row: Vec<f64> = rec.data.row(ch).to_vec();
        let y = sosfiltfilt(&design.sections, &row);
        out.iter_mut().zip(y).for_each(|(o, v)| *o = v);
    }
    Ok(Recording { data, ..rec.clone_meta() })
}

impl Recording {
    pub(crate) fn clone_meta(&self) -> Recording {
        Recording {
            data: Array2::zeros((0, 0)),
            sfreq: self.sfreq,
            channel_positions: self.channel_positions.clone(),
            device: self.device,
            subject_id: self.subject_id,
        }
    }
}
