use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Epoch;
use crate::error::{Error, Result};
use crate::textalign::SubjectId;

pub const DEFAULT_CLAMP: f64 = 20.0;

/// Per-channel median / interquartile-range scaler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustScaler {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    /// Channels whose IQR was zero and are divided by 1 instead.
    pub degenerate: Vec<usize>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl RobustScaler {
    /// Fits on every sample of every epoch, channel by channel.
    pub fn fit(epochs: &[&Epoch]) -> Result<Self> {
        if epochs.len() < 2 {
            return Err(Error::Parameter(format!(
                "robust scaling needs at least 2 epochs, got {}",
                epochs.len()
            )));
        }
        let n_ch = epochs[0].window.nrows();
        let mut center = Vec::with_capacity(n_ch);
        let mut scale = Vec::with_capacity(n_ch);
        let mut degenerate = Vec::new();
        let mut values = Vec::new();
        for ch in 0..n_ch {
            values.clear();
            for ep in epochs {
                if ep.window.nrows() != n_ch {
                    return Err(Error::Shape("epochs disagree on channel count".into()));
                }
                values.extend(ep.window.row(ch).iter().copied());
            }
            values.sort_by(f64::total_cmp);
            let med = quantile(&values, 0.5);
            let iqr = quantile(&values, 0.75) - quantile(&values, 0.25);
            center.push(med);
            if iqr > 0.0 {
                scale.push(iqr);
            } else {
                log::warn!("channel {ch} has zero interquartile range; scaling by 1");
                degenerate.push(ch);
                scale.push(1.0);
            }
        }
        Ok(RobustScaler {
            center,
            scale,
            degenerate,
        })
    }

    /// Centres, scales and clamps to `[-clamp, clamp]`.
    pub fn transform(&self, ep: &Epoch, clamp: f64) -> Result<Epoch> {
        if ep.window.nrows() != self.center.len() {
            return Err(Error::Shape(format!(
                "scaler fitted on {} channels, epoch has {}",
                self.center.len(),
                ep.window.nrows()
            )));
        }
        let mut out = ep.clone();
        for (ch, mut row) in out.window.rows_mut().into_iter().enumerate() {
            let (c, s) = (self.center[ch], self.scale[ch]);
            row.mapv_inplace(|v| ((v - c) / s).clamp(-clamp, clamp));
        }
        Ok(out)
    }
}

/// One scaler per subject, fitted on training epochs only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubjectScalers {
    pub scalers: BTreeMap<SubjectId, RobustScaler>,
    pub clamp: f64,
}

impl SubjectScalers {
    pub fn fit<'a>(train: impl IntoIterator<Item = &'a Epoch>, clamp: f64) -> Result<Self> {
        let mut by_subject: BTreeMap<SubjectId, Vec<&Epoch>> = BTreeMap::new();
        for ep in train {
            by_subject.entry(ep.meta.subject_id).or_default().push(ep);
        }
        let scalers = by_subject
            .into_iter()
            .map(|(s, eps)| RobustScaler::fit(&eps).map(|sc| (s, sc)))
            .collect::<Result<_>>()?;
        Ok(SubjectScalers { scalers, clamp })
    }

    pub fn transform(&self, ep: &Epoch) -> Result<Epoch> {
        let scaler = self.scalers.get(&ep.meta.subject_id).ok_or_else(|| {
            Error::DataIntegrity(format!("no scaler fitted for subject {}", ep.meta.subject_id))
        })?;
        scaler.transform(ep, self.clamp)
    }

    pub fn transform_all(&self, eps: &[Epoch]) -> Result<Vec<Epoch>> {
        eps.iter().map(|e| self.transform(e)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyboard::KeyClass;
    use crate::signal::EpochMeta;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};

    fn ep(subject: u32, window: Array2<f64>) -> Epoch {
        Epoch {
            window,
            tmin: -0.2,
            sfreq: 50.0,
            label: KeyClass::SPACE,
            meta: EpochMeta {
                subject_id: subject,
                sentence_id: 0,
                position: 0,
                pressed: ' ',
                target: ' ',
                is_typo: false,
                time: 0.0,
            },
        }
    }

    fn random_epochs(n: usize, seed: u64) -> Vec<Epoch> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| ep(0, Array2::from_shape_fn((3, 25), |(c, _)| rng.random::<f64>() * (c + 1) as f64 * 3.0 + c as f64)))
            .collect()
    }

    #[test]
    fn fitted_split_has_unit_iqr_zero_median() {
        let eps = random_epochs(40, 1);
        let refs: Vec<&Epoch> = eps.iter().collect();
        let sc = RobustScaler::fit(&refs).unwrap();
        let out: Vec<Epoch> = eps.iter().map(|e| sc.transform(e, 20.0).unwrap()).collect();
        let outrefs: Vec<&Epoch> = out.iter().collect();
        let refit = RobustScaler::fit(&outrefs).unwrap();
        for ch in 0..3 {
            assert!(refit.center[ch].abs() < 1e-9);
            assert!((refit.scale[ch] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn outliers_clamped() {
        let mut eps = random_epochs(10, 2);
        let refs: Vec<&Epoch> = eps.iter().collect();
        let sc = RobustScaler::fit(&refs).unwrap();
        eps[0].window[[1, 3]] = sc.center[1] + 100.0 * sc.scale[1];
        eps[0].window[[1, 4]] = sc.center[1] - 100.0 * sc.scale[1];
        let out = sc.transform(&eps[0], 20.0).unwrap();
        assert_eq!(out.window[[1, 3]], 20.0);
        assert_eq!(out.window[[1, 4]], -20.0);
    }

    #[test]
    fn constant_channel_is_degenerate() {
        let eps: Vec<Epoch> = (0..3).map(|_| ep(0, Array2::from_elem((2, 5), 3.0))).collect();
        let refs: Vec<&Epoch> = eps.iter().collect();
        let sc = RobustScaler::fit(&refs).unwrap();
        assert_eq!(sc.degenerate, vec![0, 1]);
        let out = sc.transform(&eps[0], 20.0).unwrap();
        assert!(out.window.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_few_epochs() {
        let eps = random_epochs(1, 3);
        assert!(matches!(RobustScaler::fit(&[&eps[0]]), Err(Error::Parameter(_))));
    }

    #[test]
    fn test_epochs_do_not_leak_into_fit() {
        let train = random_epochs(20, 5);
        let mut test = random_epochs(6, 6);
        let a = SubjectScalers::fit(&train, 20.0).unwrap();
        test.reverse();
        test[0].window.mapv_inplace(|v| v * 1000.0);
        let b = SubjectScalers::fit(&train, 20.0).unwrap();
        assert_eq!(a, b);
        let ta = a.transform_all(&train).unwrap();
        let tb = b.transform_all(&train).unwrap();
        assert_eq!(ta, tb);
    }
}
