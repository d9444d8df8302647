//! Rank statistics with seeded permutation p-values, Pearson correlation,
//! and Benjamini-Hochberg adjustment.
//!
//! Two-sided p-values use `|stat - E[stat]|` under the null and the
//! `(count + 1) / (n_perm + 1)` estimator.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PERMUTATIONS: usize = 10_000;
const MIN_SAMPLES: usize = 5;
/// Slack for floating-point ties between observed and permuted statistics.
const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: String,
    pub statistic: f64,
    pub p: f64,
    pub n: usize,
    pub warning: Option<String>,
}

fn tied(test: &str, statistic: f64, n: usize) -> TestResult {
    log::warn!("{test}: all values tied, reporting p = 1");
    TestResult {
        test: test.into(),
        statistic,
        p: 1.0,
        n,
        warning: Some("all values tied".into()),
    }
}

/// Average ranks (1-based), ties sharing their mean rank.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn check_finite(x: &[f64]) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("statistics need finite values".into()));
    }
    Ok(())
}

/// Wilcoxon signed-rank test on paired samples. The statistic is the sum of
/// ranks of positive differences; zero differences are dropped. The null
/// flips signs at random.
pub fn wilcoxon(a: &[f64], b: &[f64], n_perm: usize, seed: u64) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::Shape("wilcoxon needs paired samples".into()));
    }
    if a.len() < MIN_SAMPLES {
        return Err(Error::Parameter(format!("wilcoxon needs at least {MIN_SAMPLES} pairs")));
    }
    check_finite(a)?;
    check_finite(b)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if d.is_empty() {
        return Ok(tied("wilcoxon", 0.0, a.len()));
    }
    let ranks = midranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
    // an empty float sum is -0.0
    let w: f64 = ranks.iter().zip(&d).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum::<f64>() + 0.0;
    let e = ranks.iter().sum::<f64>() / 2.0;
    let obs = (w - e).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut count = 0;
    for _ in 0..n_perm {
        let s: f64 = ranks.iter().filter(|_| rng.random::<bool>()).sum();
        if (s - e).abs() >= obs - TIE_EPS {
            count += 1;
        }
    }
    Ok(TestResult {
        test: "wilcoxon".into(),
        statistic: w,
        p: (count + 1) as f64 / (n_perm + 1) as f64,
        n: a.len(),
        warning: None,
    })
}

/// Mann-Whitney U for two independent samples (U of the first sample). The
/// null permutes group labels.
pub fn mannwhitney(a: &[f64], b: &[f64], n_perm: usize, seed: u64) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() || a.len() + b.len() < MIN_SAMPLES {
        return Err(Error::Parameter(format!("mann-whitney needs two non-empty groups and {MIN_SAMPLES} values")));
    }
    check_finite(a)?;
    check_finite(b)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let na = a.len() as f64;
    let u_of = |r: &[f64]| r[..a.len()].iter().sum::<f64>() - na * (na + 1.0) / 2.0;
    let u = u_of(&ranks);
    if pooled.iter().all(|&x| x == pooled[0]) {
        return Ok(tied("mann-whitney", u, pooled.len()));
    }
    let e = na * b.len() as f64 / 2.0;
    let obs = (u - e).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm = ranks.clone();
    let mut count = 0;
    for _ in 0..n_perm {
        perm.shuffle(&mut rng);
        if (u_of(&perm) - e).abs() >= obs - TIE_EPS {
            count += 1;
        }
    }
    Ok(TestResult {
        test: "mann-whitney".into(),
        statistic: u,
        p: (count + 1) as f64 / (n_perm + 1) as f64,
        n: pooled.len(),
        warning: None,
    })
}

/// Pearson correlation coefficient; `None` when either input is constant.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson r with a permutation p-value (shuffling `y`).
pub fn pearson(x: &[f64], y: &[f64], n_perm: usize, seed: u64) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(Error::Shape("pearson needs paired samples".into()));
    }
    if x.len() < 3 {
        return Err(Error::Parameter("pearson needs at least three pairs".into()));
    }
    check_finite(x)?;
    check_finite(y)?;
    let Some(r) = pearson_r(x, y) else {
        return Ok(TestResult {
            statistic: f64::NAN,
            ..tied("pearson", 0.0, x.len())
        });
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm = y.to_vec();
    let mut count = 0;
    for _ in 0..n_perm {
        perm.shuffle(&mut rng);
        if pearson_r(x, &perm).unwrap_or(0.0).abs() >= r.abs() - TIE_EPS {
            count += 1;
        }
    }
    Ok(TestResult {
        test: "pearson".into(),
        statistic: r,
        p: (count + 1) as f64 / (n_perm + 1) as f64,
        n: x.len(),
        warning: None,
    })
}

/// Benjamini-Hochberg adjusted p-values, in input order.
pub fn fdr(p: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("p-value {bad} outside [0, 1]")));
    }
    let m = p.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut out = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = idx[rank];
        running = running.min(p[i] * m as f64 / (rank + 1) as f64);
        out[i] = running.min(1.0);
    }
    Ok(out)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Standard error of the mean (sample standard deviation); 0 for n < 2.
pub fn sem(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
    (var / x.len() as f64).sqrt()
}
