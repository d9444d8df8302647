use ndarray::Array2;

use super::Recording;
use crate::error::{Error, Result};

/// Up/down factors of a rational resampling ratio, in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rational {
    pub up: usize,
    pub down: usize,
}

impl Rational {
    /// Ratio `target / source`, resolved to millihertz precision.
    pub fn from_rates(source: f64, target: f64) -> Result<Self> {
        if !(target > 0.0 && source > 0.0) {
            return Err(Error::Parameter("sampling rates must be positive".into()));
        }
        if target > source {
            return Err(Error::Parameter(format!(
                "target rate {target} Hz exceeds source rate {source} Hz; upsampling is not supported"
            )));
        }
        let s = (source * 1000.0).round() as usize;
        let t = (target * 1000.0).round() as usize;
        let g = gcd(s, t);
        Ok(Rational { up: t / g, down: s / g })
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Windowed-sinc anti-alias filter for the upsampled rate, cut at 90% of the
/// output Nyquist frequency, DC gain `up`.
fn design_lowpass(ratio: Rational) -> Vec<f64> {
    let factor = ratio.up.max(ratio.down);
    let half = 10 * factor;
    let taps = 2 * half + 1;
    // cutoff in cycles per upsampled sample
    let fc = 0.9 * 0.5 / factor as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let m = i as f64 - half as f64;
            let sinc = if m == 0.0 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * m).sin() / (std::f64::consts::PI * m)
            };
            let w = 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (taps - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v *= ratio.up as f64 / sum);
    h
}

fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

fn apply(x: &[f64], h: &[f64], ratio: Rational) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let (up, down) = (ratio.up as isize, ratio.down as isize);
    let half = (h.len() / 2) as isize;
    let n_out = (n * ratio.up).div_ceil(ratio.down);
    (0..n_out as isize)
        .map(|o| {
            // centre of output sample o on the upsampled grid
            let centre = o * down;
            let lo = (centre - half).div_euclid(up) + if (centre - half).rem_euclid(up) == 0 { 0 } else { 1 };
            let hi = (centre + half).div_euclid(up);
            let mut acc = 0.0;
            for i in lo..=hi {
                let k = (centre - i * up + half) as usize;
                acc += h[k] * x[reflect(i, n)];
            }
            acc
        })
        .collect()
}

/// Polyphase rational resampling of one channel.
pub fn resample_channel(x: &[f64], source: f64, target: f64) -> Result<Vec<f64>> {
    let ratio = Rational::from_rates(source, target)?;
    if ratio.up == ratio.down {
        return Ok(x.to_vec());
    }
    Ok(apply(x, &design_lowpass(ratio), ratio))
}

/// Resamples every channel to `target` Hz.
pub fn resample(rec: &Recording, target: f64) -> Result<Recording> {
    let ratio = Rational::from_rates(rec.sfreq, target)?;
    if ratio.up == ratio.down {
        return Ok(rec.clone());
    }
    let h = design_lowpass(ratio);
    let rows: Vec<Vec<f64>> = rec
        .data
        .rows()
        .into_iter()
        .map(|r| apply(&r.to_vec(), &h, ratio))
        .collect();
    let n_out = rows[0].len();
    let data = Array2::from_shape_fn((rows.len(), n_out), |(c, i)| rows[c][i]);
    Ok(Recording {
        data,
        sfreq: target,
        ..rec.clone_meta()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Device;

    fn sine(freq: f64, sfreq: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sfreq).sin()).collect()
    }

    fn fit_sine(x: &[f64], freq: f64, sfreq: f64) -> f64 {
        let (a, b) = (x.len() / 4, 3 * x.len() / 4);
        let (mut s, mut c) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate().take(b).skip(a) {
            let ph = 2.0 * std::f64::consts::PI * freq * i as f64 / sfreq;
            s += v * ph.sin();
            c += v * ph.cos();
        }
        2.0 * (s * s + c * c).sqrt() / (b - a) as f64
    }

    #[test]
    fn ratio_reduction() {
        assert_eq!(Rational::from_rates(250.0, 50.0).unwrap(), Rational { up: 1, down: 5 });
        assert_eq!(Rational::from_rates(256.0, 50.0).unwrap(), Rational { up: 25, down: 128 });
        assert!(matches!(Rational::from_rates(50.0, 250.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn five_hz_survives_250_to_50() {
        let x = sine(5.0, 250.0, 250 * 20);
        let y = resample_channel(&x, 250.0, 50.0).unwrap();
        assert_eq!(y.len(), 1000);
        let amp = fit_sine(&y, 5.0, 50.0);
        assert!((amp - 1.0).abs() < 0.01, "amplitude {amp}");
        // sample-by-sample agreement with the ideal 50 Hz sine away from edges
        let ideal = sine(5.0, 50.0, 1000);
        for i in 100..900 {
            assert!((y[i] - ideal[i]).abs() < 0.01);
        }
    }

    #[test]
    fn non_integer_ratio_keeps_tone() {
        let x = sine(3.0, 256.0, 256 * 10);
        let y = resample_channel(&x, 256.0, 50.0).unwrap();
        assert_eq!(y.len(), 500);
        assert!((fit_sine(&y, 3.0, 50.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn identity_and_length() {
        let x = sine(5.0, 250.0, 123);
        assert_eq!(resample_channel(&x, 250.0, 250.0).unwrap(), x);
        let long = vec![0.5; 10_000];
        let y = resample_channel(&long, 1000.0, 50.0).unwrap();
        assert!((y.len() as i64 - 500).abs() <= 1);
        assert!(y.iter().all(|v| (v - 0.5).abs() < 1e-9));
    }

    #[test]
    fn recording_resample() {
        let data = Array2::from_shape_fn((2, 1000), |(c, i)| (c as f64 + 1.0) * (i as f64 * 0.05).sin());
        let rec = Recording::new(data, 250.0, vec![[0.0, 0.0]; 2], Device::Meg, 3).unwrap();
        let out = resample(&rec, 50.0).unwrap();
        assert_eq!(out.data.dim(), (2, 200));
        assert_eq!(out.sfreq, 50.0);
        assert_eq!(out.subject_id, 3);
        assert!(resample(&rec, 500.0).is_err());
    }
}
