//! Reference decoders: the modal-class dummy, a closed-form ridge
//! classifier, and time-resolved decoding curves.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::cer::cer;
use crate::metrics::stats::{fdr, mean, sem};
use crate::signal::Epoch;
use crate::textalign::SubjectId;

pub const N_FOLDS: usize = 5;

/// 11 decades from 1e-2 to 1e8.
pub fn default_alphas() -> Vec<f64> {
    (-2..=8).map(|e| 10f64.powi(e)).collect()
}

/// Predicts the most frequent training class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dummy {
    pub class: usize,
}

impl Dummy {
    /// Ties go to the smallest class id.
    pub fn fit(labels: &[usize]) -> Result<Self> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &l in labels {
            *counts.entry(l).or_default() += 1;
        }
        let class = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&c, _)| c)
            .ok_or_else(|| Error::Parameter("dummy needs at least one training label".into()))?;
        Ok(Dummy { class })
    }

    pub fn predict(&self, n: usize) -> Vec<usize> {
        vec![self.class; n]
    }

    pub fn accuracy(&self, labels: &[usize]) -> f64 {
        labels.iter().filter(|&&l| l == self.class).count() as f64 / labels.len().max(1) as f64
    }

    pub fn cer(&self, target: &[usize]) -> Result<f64> {
        cer(&self.predict(target.len()), target)
    }
}

/// Eigendecomposition of the centred Gram matrix, reused across alphas.
struct RidgePath {
    x_mean: Array1<f64>,
    y_mean: Array1<f64>,
    vecs: Array2<f64>,
    vals: Vec<f64>,
    /// Vᵀ Xcᵀ Yc
    proj: Array2<f64>,
}

impl RidgePath {
    fn new(x: ArrayView2<f64>, y: &Array2<f64>) -> Self {
        let x_mean = x.mean_axis(Axis(0)).unwrap();
        let y_mean = y.mean_axis(Axis(0)).unwrap();
        let xc = &x - &x_mean;
        let yc = y - &y_mean;
        let gram = xc.t().dot(&xc);
        let p = gram.nrows();
        let eig = SymmetricEigen::new(DMatrix::from_fn(p, p, |i, j| gram[[i, j]]));
        let vecs = Array2::from_shape_fn((p, p), |(i, j)| eig.eigenvectors[(i, j)]);
        let vals: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
        let proj = vecs.t().dot(&xc.t().dot(&yc));
        RidgePath {
            x_mean,
            y_mean,
            vecs,
            vals,
            proj,
        }
    }

    /// Weights with the intercept in the last row.
    fn solve(&self, alpha: f64) -> Array2<f64> {
        let mut scaled = self.proj.clone();
        for (mut row, &l) in scaled.rows_mut().into_iter().zip(&self.vals) {
            row.mapv_inplace(|v| v / (l + alpha));
        }
        let w = self.vecs.dot(&scaled);
        let b = &self.y_mean - &self.x_mean.dot(&w);
        let mut out = Array2::zeros((w.nrows() + 1, w.ncols()));
        out.slice_mut(ndarray::s![..w.nrows(), ..]).assign(&w);
        out.row_mut(w.nrows()).assign(&b);
        out
    }
}

/// One-vs-rest ridge regression on ±1 targets; the intercept is not
/// penalised.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeClassifier {
    /// (channels + 1) × classes, intercept last.
    pub weights: Array2<f64>,
    pub alpha: f64,
    /// Class label of each weight column.
    pub classes: Vec<usize>,
}

fn encode(y: &[usize], classes: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((y.len(), classes.len()), |(i, c)| if y[i] == classes[c] { 1.0 } else { -1.0 })
}

fn classes_of(y: &[usize]) -> Vec<usize> {
    let mut c = y.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

fn check_xy(x: ArrayView2<f64>, y: &[usize]) -> Result<Vec<usize>> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} samples but {} labels", x.nrows(), y.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite feature".into()));
    }
    let classes = classes_of(y);
    if classes.len() < 2 {
        return Err(Error::Parameter("ridge classifier needs at least two classes".into()));
    }
    Ok(classes)
}

fn predict_with(weights: &Array2<f64>, classes: &[usize], x: ArrayView2<f64>) -> Vec<usize> {
    let p = weights.nrows() - 1;
    let scores = x.dot(&weights.slice(ndarray::s![..p, ..])) + &weights.row(p);
    scores
        .rows()
        .into_iter()
        .map(|r| {
            // first maximum wins, so ties go to the smaller class
            let mut best = 0;
            for c in 1..r.len() {
                if r[c] > r[best] {
                    best = c;
                }
            }
            classes[best]
        })
        .collect()
}

fn accuracy(pred: &[usize], y: &[usize]) -> f64 {
    pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len().max(1) as f64
}

/// Seeded fold id per sample: a shuffled round-robin.
pub fn fold_ids(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut ids = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        ids[i] = pos % k;
    }
    ids
}

fn take_rows(x: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

impl RidgeClassifier {
    /// Closed-form fit at a fixed alpha.
    pub fn fit_alpha(x: ArrayView2<f64>, y: &[usize], alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
        }
        let classes = check_xy(x, y)?;
        let weights = RidgePath::new(x, &encode(y, &classes)).solve(alpha);
        Ok(RidgeClassifier { weights, alpha, classes })
    }

    /// Picks alpha by inner `N_FOLDS`-fold cross-validated accuracy (ties
    /// go to the smaller alpha), then refits on all samples.
    pub fn fit(x: ArrayView2<f64>, y: &[usize], alphas: &[f64], seed: u64) -> Result<Self> {
        let classes = check_xy(x, y)?;
        if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::Parameter("alphas must be non-empty and positive".into()));
        }
        let alpha = if alphas.len() == 1 || y.len() < N_FOLDS {
            alphas[0]
        } else {
            let folds = fold_ids(y.len(), N_FOLDS, seed);
            let mut correct = vec![0usize; alphas.len()];
            for f in 0..N_FOLDS {
                let (tr, te): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| folds[i] != f);
                let ytr: Vec<usize> = tr.iter().map(|&i| y[i]).collect();
                let cls = classes_of(&ytr);
                if cls.len() < 2 || te.is_empty() {
                    continue;
                }
                let path = RidgePath::new(take_rows(x, &tr).view(), &encode(&ytr, &cls));
                let xte = take_rows(x, &te);
                for (a, &alpha) in alphas.iter().enumerate() {
                    let pred = predict_with(&path.solve(alpha), &cls, xte.view());
                    correct[a] += pred.iter().zip(&te).filter(|(p, &i)| **p == y[i]).count();
                }
            }
            let mut best = 0;
            for a in 1..alphas.len() {
                if correct[a] > correct[best] {
                    best = a;
                }
            }
            alphas[best]
        };
        let weights = RidgePath::new(x, &encode(y, &classes)).solve(alpha);
        Ok(RidgeClassifier { weights, alpha, classes })
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        predict_with(&self.weights, &self.classes, x)
    }

    pub fn score(&self, x: ArrayView2<f64>, y: &[usize]) -> f64 {
        accuracy(&self.predict(x), y)
    }
}

/// Out-of-fold accuracy of a ridge fit at fixed `alpha`. Folds whose
/// training part lacks two classes are skipped.
fn cv_accuracy_fixed(x: ArrayView2<f64>, y: &[usize], folds: &[usize], alpha: f64) -> Option<f64> {
    let (mut correct, mut n) = (0usize, 0usize);
    for f in 0..N_FOLDS {
        let (tr, te): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| folds[i] != f);
        let ytr: Vec<usize> = tr.iter().map(|&i| y[i]).collect();
        let cls = classes_of(&ytr);
        if cls.len() < 2 || te.is_empty() {
            continue;
        }
        let w = RidgePath::new(take_rows(x, &tr).view(), &encode(&ytr, &cls)).solve(alpha);
        let pred = predict_with(&w, &cls, take_rows(x, &te).view());
        correct += pred.iter().zip(&te).filter(|(p, &i)| **p == y[i]).count();
        n += te.len();
    }
    (n > 0).then(|| correct as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeResolvedConfig {
    pub alphas_from: i32,
    pub alphas_to: i32,
    /// Label shuffles for the chance distribution at each time sample.
    pub n_permutations: usize,
    pub seed: u64,
}

impl Default for TimeResolvedConfig {
    fn default() -> Self {
        TimeResolvedConfig {
            alphas_from: -2,
            alphas_to: 8,
            n_permutations: 100,
            seed: 0,
        }
    }
}

impl TimeResolvedConfig {
    fn alphas(&self) -> Vec<f64> {
        (self.alphas_from..=self.alphas_to).map(|e| 10f64.powi(e)).collect()
    }
}

/// One row of the time course. `subject_id` is `None` for the across-subject
/// mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePoint {
    pub time_s: f64,
    pub accuracy_mean: f64,
    pub sem: f64,
    /// Mean accuracy under shuffled labels.
    pub chance: f64,
    pub p: f64,
    pub p_fdr: f64,
    pub subject_id: Option<SubjectId>,
}

struct SubjectCurve {
    accuracy: Vec<f64>,
    /// [time][permutation]
    null: Vec<Vec<f64>>,
}

fn subject_curve(epochs: &[&Epoch], y: &[usize], cfg: &TimeResolvedConfig, seed: u64) -> Result<SubjectCurve> {
    let n_t = epochs[0].window.ncols();
    let n_ch = epochs[0].window.nrows();
    let folds = fold_ids(y.len(), N_FOLDS, seed);
    let alphas = cfg.alphas();
    let mut accuracy = Vec::with_capacity(n_t);
    let mut null = Vec::with_capacity(n_t);
    for t in 0..n_t {
        let x = Array2::from_shape_fn((epochs.len(), n_ch), |(i, c)| epochs[i].window[[c, t]]);
        // nested CV: alpha picked inside each outer training fold
        let (mut correct, mut n) = (0usize, 0usize);
        let mut chosen = Vec::new();
        for f in 0..N_FOLDS {
            let (tr, te): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| folds[i] != f);
            let ytr: Vec<usize> = tr.iter().map(|&i| y[i]).collect();
            if classes_of(&ytr).len() < 2 || te.is_empty() {
                log::warn!("time sample {t}, fold {f}: fewer than two training classes, fold skipped");
                continue;
            }
            let m = RidgeClassifier::fit(take_rows(x.view(), &tr).view(), &ytr, &alphas, seed ^ t as u64)?;
            let pred = m.predict(take_rows(x.view(), &te).view());
            correct += pred.iter().zip(&te).filter(|(p, &i)| **p == y[i]).count();
            n += te.len();
            chosen.push(m.alpha);
        }
        if n == 0 {
            return Err(Error::DataIntegrity("every fold lacked two training classes".into()));
        }
        accuracy.push(correct as f64 / n as f64);
        // the null reuses the median selected alpha to keep permutations affordable
        chosen.sort_by(f64::total_cmp);
        let alpha = chosen[chosen.len() / 2];
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed) ^ ((t as u64) << 20));
        let mut perm = y.to_vec();
        let mut row = Vec::with_capacity(cfg.n_permutations);
        for _ in 0..cfg.n_permutations {
            perm.shuffle(&mut rng);
            row.push(cv_accuracy_fixed(x.view(), &perm, &folds, alpha).unwrap_or(f64::NAN));
        }
        null.push(row);
    }
    Ok(SubjectCurve { accuracy, null })
}

fn upper_p(observed: f64, null: &[f64]) -> f64 {
    let count = null.iter().filter(|&&v| v >= observed - 1e-12).count();
    (count + 1) as f64 / (null.len() + 1) as f64
}

/// Cross-validated ridge accuracy at every time sample of the epochs, per
/// subject, with p-values from shuffled labels (one-sided, above chance)
/// and BH correction across time. Epochs for which `label` returns `None`
/// are left out. The across-subject rows test the subject-mean accuracy
/// against the mean of matched shuffles.
pub fn time_resolved<F>(epochs: &[Epoch], label: F, cfg: &TimeResolvedConfig) -> Result<Vec<TimePoint>>
where
    F: Fn(&Epoch) -> Option<usize>,
{
    let mut by_subject: BTreeMap<SubjectId, (Vec<&Epoch>, Vec<usize>)> = BTreeMap::new();
    for e in epochs {
        if let Some(l) = label(e) {
            let entry = by_subject.entry(e.meta.subject_id).or_default();
            entry.0.push(e);
            entry.1.push(l);
        }
    }
    if by_subject.is_empty() {
        return Err(Error::DataIntegrity("no labelled epochs for time-resolved decoding".into()));
    }
    let first = by_subject.values().next().unwrap().0[0];
    let (n_t, tmin, sfreq) = (first.window.ncols(), first.tmin, first.sfreq);
    if by_subject.values().flat_map(|v| &v.0).any(|e| e.window.ncols() != n_t || e.window.nrows() != first.window.nrows()) {
        return Err(Error::Shape("epochs differ in shape".into()));
    }
    let times: Vec<f64> = (0..n_t).map(|i| ((tmin * sfreq).round() + i as f64) / sfreq).collect();

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for (&subject, (eps, y)) in &by_subject {
        let curve = subject_curve(eps, y, cfg, cfg.seed ^ (subject as u64).wrapping_mul(0x9e37_79b9))?;
        let p: Vec<f64> = (0..n_t).map(|t| upper_p(curve.accuracy[t], &curve.null[t])).collect();
        let q = fdr(&p)?;
        for t in 0..n_t {
            rows.push(TimePoint {
                time_s: times[t],
                accuracy_mean: curve.accuracy[t],
                sem: 0.0,
                chance: mean(&curve.null[t]),
                p: p[t],
                p_fdr: q[t],
                subject_id: Some(subject),
            });
        }
        curves.push(curve);
    }
    let mut group = Vec::with_capacity(n_t);
    for t in 0..n_t {
        let acc: Vec<f64> = curves.iter().map(|c| c.accuracy[t]).collect();
        let null: Vec<f64> = (0..cfg.n_permutations)
            .map(|j| mean(&curves.iter().map(|c| c.null[t][j]).collect::<Vec<_>>()))
            .collect();
        group.push((acc, null));
    }
    let p: Vec<f64> = group.iter().map(|(acc, null)| upper_p(mean(acc), null)).collect();
    let q = fdr(&p)?;
    for (t, (acc, null)) in group.iter().enumerate() {
        rows.push(TimePoint {
            time_s: times[t],
            accuracy_mean: mean(acc),
            sem: if acc.len() > 1 { sem(acc) } else { 0.0 },
            chance: mean(null),
            p: p[t],
            p_fdr: q[t],
            subject_id: None,
        });
    }
    Ok(rows)
}

/// Across-subject rows only, in time order.
pub fn group_curve(rows: &[TimePoint]) -> Vec<&TimePoint> {
    rows.iter().filter(|r| r.subject_id.is_none()).collect()
}

/// Time of the highest across-subject accuracy (earliest on ties).
pub fn peak_time(rows: &[TimePoint]) -> Option<f64> {
    group_curve(rows)
        .into_iter()
        .fold(None, |best: Option<&TimePoint>, r| match best {
            Some(b) if b.accuracy_mean >= r.accuracy_mean => Some(b),
            _ => Some(r),
        })
        .map(|r| r.time_s)
}

/// Writes `timecourse.csv`; the across-subject rows have an empty
/// `subject_id`.
pub fn write_timecourse<W: Write>(w: W, rows: &[TimePoint]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["time_s", "accuracy_mean", "sem", "chance", "p", "p_fdr", "subject_id"])?;
    for r in rows {
        wtr.write_record([
            format!("{:.4}", r.time_s),
            r.accuracy_mean.to_string(),
            r.sem.to_string(),
            r.chance.to_string(),
            r.p.to_string(),
            r.p_fdr.to_string(),
            r.subject_id.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyboard::{classify_str, KeyClass};
    use crate::signal::EpochMeta;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
    }

    #[test]
    fn dummy_balanced_and_text() {
        let d = Dummy::fit(&[0, 1, 0, 1]).unwrap();
        assert_eq!(d.class, 0);
        assert_eq!(d.accuracy(&[0, 1, 0, 1]), 0.5);

        let text = "el perro come pan y la casa es grande";
        let y: Vec<usize> = classify_str(text).iter().map(|c| c.id()).collect();
        let d = Dummy::fit(&y).unwrap();
        assert_eq!(d.class, KeyClass::SPACE.id());
        let spaces = text.chars().filter(|&c| c == ' ').count() as f64 / text.len() as f64;
        assert!((d.accuracy(&y) - spaces).abs() < 1e-12);
        assert!(Dummy::fit(&[]).is_err());
    }

    #[test]
    fn separable_training_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = randn(60, 3, &mut rng);
        let y: Vec<usize> = (0..60).map(|i| i % 2).collect();
        for i in 0..60 {
            x[[i, 0]] += if y[i] == 1 { 4.0 } else { -4.0 };
        }
        let m = RidgeClassifier::fit(x.view(), &y, &default_alphas(), 0).unwrap();
        assert_eq!(m.score(x.view(), &y), 1.0);
    }

    #[test]
    fn null_labels_are_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = randn(1000, 10, &mut rng);
        let y: Vec<usize> = (0..1000).map(|i| i % 2).collect();
        let m = RidgeClassifier::fit(x.view(), &y, &default_alphas(), 0).unwrap();
        let xt = randn(1000, 10, &mut rng);
        let yt: Vec<usize> = (0..1000).map(|_| rng.random_range(0..2)).collect();
        let acc = m.score(xt.view(), &yt);
        assert!((acc - 0.5).abs() <= 0.05, "accuracy {acc}");
    }

    /// Minimises ‖Xc w − yc‖² + α‖w‖² by plain gradient descent.
    fn gd_ridge(x: &Array2<f64>, y: &Array1<f64>, alpha: f64) -> (Array1<f64>, f64) {
        let xm = x.mean_axis(Axis(0)).unwrap();
        let ym = y.mean().unwrap();
        let xc = x - &xm;
        let yc = y - ym;
        let mut w = Array1::zeros(x.ncols());
        let lr = 1e-3;
        for _ in 0..200_000 {
            let r = xc.dot(&w) - &yc;
            let g = xc.t().dot(&r) * 2.0 + &w * (2.0 * alpha);
            w = w - g * lr;
        }
        let b = ym - xm.dot(&w);
        (w, b)
    }

    #[test]
    fn closed_form_matches_gradient_descent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = randn(10, 3, &mut rng);
        let y = vec![0, 1, 0, 1, 1, 0, 0, 1, 1, 0];
        let m = RidgeClassifier::fit_alpha(x.view(), &y, 0.5).unwrap();
        // column of class 1
        let t = Array1::from_iter(y.iter().map(|&c| if c == 1 { 1.0 } else { -1.0 }));
        let (w, b) = gd_ridge(&x, &t, 0.5);
        for j in 0..3 {
            assert!((m.weights[[j, 1]] - w[j]).abs() < 1e-6, "{} vs {}", m.weights[[j, 1]], w[j]);
        }
        assert!((m.weights[[3, 1]] - b).abs() < 1e-6);
    }

    #[test]
    fn normal_equation_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = randn(80, 6, &mut rng);
        let y: Vec<usize> = (0..80).map(|i| i % 3).collect();
        for alpha in default_alphas() {
            let m = RidgeClassifier::fit_alpha(x.view(), &y, alpha).unwrap();
            let xc = &x - &x.mean_axis(Axis(0)).unwrap();
            let t = encode(&y, &m.classes);
            let tc = &t - &t.mean_axis(Axis(0)).unwrap();
            let w = m.weights.slice(ndarray::s![..6, ..]).to_owned();
            let lhs = xc.t().dot(&xc).dot(&w) + &w * alpha;
            let rhs = xc.t().dot(&tc);
            let res = (&lhs - &rhs).iter().map(|v| v * v).sum::<f64>().sqrt();
            let norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(res <= 1e-8 * norm, "alpha {alpha}: residual {res} vs {norm}");
        }
    }

    #[test]
    fn alpha_choice_ignores_channel_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = randn(120, 4, &mut rng);
        let y: Vec<usize> = (0..120).map(|i| i % 2).collect();
        for i in 0..120 {
            x[[i, 2]] += 0.6 * y[i] as f64;
        }
        let a = RidgeClassifier::fit(x.view(), &y, &default_alphas(), 9).unwrap();
        let rev = x.select(Axis(1), &[3, 2, 1, 0]);
        let b = RidgeClassifier::fit(rev.view(), &y, &default_alphas(), 9).unwrap();
        assert_eq!(a.alpha, b.alpha);
        assert_eq!(a.predict(x.view()), b.predict(rev.view()));
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Array2::zeros((4, 2));
        assert!(matches!(RidgeClassifier::fit_alpha(x.view(), &[1, 1, 1, 1], 1.0), Err(Error::Parameter(_))));
    }

    fn epoch(subject: SubjectId, window: Array2<f64>, label: usize) -> Epoch {
        Epoch {
            window,
            tmin: -0.1,
            sfreq: 50.0,
            label: KeyClass::from_id(label).unwrap(),
            meta: EpochMeta {
                subject_id: subject,
                sentence_id: 0,
                position: 0,
                pressed: 'a',
                target: 'a',
                is_typo: false,
                time: 0.0,
            },
        }
    }

    #[test]
    fn time_course_finds_the_informative_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut eps = Vec::new();
        for s in 0..2 {
            for i in 0..100 {
                let label = i % 2;
                let mut w = randn(3, 6, &mut rng);
                w[[0, 4]] += if label == 1 { 3.0 } else { -3.0 };
                eps.push(epoch(s, w, label));
            }
        }
        let cfg = TimeResolvedConfig {
            n_permutations: 200,
            ..Default::default()
        };
        let rows = time_resolved(&eps, |e| Some(e.label.id()), &cfg).unwrap();
        assert_eq!(rows.len(), 3 * 6);
        let peak = peak_time(&rows).unwrap();
        assert!((peak + 0.02).abs() < 1e-9, "peak {peak}");
        let g = group_curve(&rows);
        assert!(g[4].p_fdr < 0.05);
        assert!((g[0].accuracy_mean - 0.5).abs() < 0.15);
        assert_eq!(rows, time_resolved(&eps, |e| Some(e.label.id()), &cfg).unwrap());

        let mut buf = Vec::new();
        write_timecourse(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time_s,accuracy_mean,sem,chance,p,p_fdr,subject_id\n"));
        assert_eq!(text.lines().count(), 19);
    }
}
