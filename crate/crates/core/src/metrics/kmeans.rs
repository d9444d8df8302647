//! k-means with k-means++ seeding and Lloyd iterations.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ITER: usize = 300;
pub const TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    pub iterations: usize,
}

fn sqdist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

pub fn kmeans(x: &Array2<f64>, k: usize, seed: u64) -> Result<KMeans> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("k = {k} must be in 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sqdist(x.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sqdist(x.row(i), centroids.row(c)));
        }
    }

    let mut labels = vec![0; n];
    let mut iterations = 0;
    for it in 0..MAX_ITER {
        iterations = it + 1;
        for (i, l) in labels.iter_mut().enumerate() {
            let mut best = (0, f64::INFINITY);
            for c in 0..k {
                let d = sqdist(x.row(i), centroids.row(c));
                if d < best.1 {
                    best = (c, d);
                }
            }
            *l = best.0;
        }
        let mut next = Array2::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            let mut row = next.row_mut(l);
            row += &x.row(i);
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster at the point farthest from its centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sqdist(x.row(a), centroids.row(labels[a])).total_cmp(&sqdist(x.row(b), centroids.row(labels[b])))
                    })
                    .unwrap();
                next.row_mut(c).assign(&x.row(far));
            } else {
                next.row_mut(c).mapv_inplace(|v| v / counts[c] as f64);
            }
        }
        let shift = (&next - &centroids).iter().map(|v| v * v).sum::<f64>().sqrt();
        centroids = next;
        if shift < TOL {
            break;
        }
    }
    for (i, l) in labels.iter_mut().enumerate() {
        *l = (0..k).min_by(|&a, &b| sqdist(x.row(i), centroids.row(a)).total_cmp(&sqdist(x.row(i), centroids.row(b)))).unwrap();
    }
    let inertia = labels.iter().enumerate().map(|(i, &l)| sqdist(x.row(i), centroids.row(l))).sum();
    Ok(KMeans {
        labels,
        centroids,
        inertia,
        iterations,
    })
}

/// Agreement between a two-way clustering and binary truth, maximised over
/// the two label matchings.
pub fn binary_alignment(labels: &[usize], truth: &[bool]) -> f64 {
    let agree = labels.iter().zip(truth).filter(|(l, t)| (**l == 1) == **t).count();
    let n = labels.len().max(1);
    agree.max(labels.len() - agree) as f64 / n as f64
}
