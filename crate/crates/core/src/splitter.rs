//! Train/validation/test splits that keep similar sentences together.
//!
//! Sentences are embedded with TF-IDF, clustered by average-linkage
//! agglomeration on cosine distance, and whole clusters are dealt to splits.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textalign::SentenceId;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

/// Row-normalised TF-IDF vectors, stored sparsely.
#[derive(Debug, Clone)]
pub struct TfidfMatrix {
    pub vocab: BTreeMap<String, usize>,
    /// Per sentence: (column, weight), sorted by column.
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl TfidfMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cosine(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.rows[i], &self.rows[j]);
        let (mut x, mut y, mut acc) = (0, 0, 0.0);
        while x < a.len() && y < b.len() {
            match a[x].0.cmp(&b[y].0) {
                std::cmp::Ordering::Less => x += 1,
                std::cmp::Ordering::Greater => y += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[x].1 * b[y].1;
                    x += 1;
                    y += 1;
                }
            }
        }
        acc
    }

    pub fn similarity_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.n_rows();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let s = self.cosine(i, j);
                m[i][j] = s;
                m[j][i] = s;
            }
        }
        m
    }
}

/// Lowercase word unigrams, `idf = ln(N / df)`, L2-normalised rows.
pub fn tfidf<S: AsRef<str>>(sentences: &[S]) -> Result<TfidfMatrix> {
    if sentences.len() < 2 {
        return Err(Error::Parameter("TF-IDF needs at least two sentences".into()));
    }
    let docs: Vec<Vec<String>> = sentences
        .iter()
        .map(|s| s.as_ref().to_lowercase().split_whitespace().map(str::to_string).collect())
        .collect();
    let mut vocab = BTreeMap::new();
    for w in docs.iter().flatten() {
        let next = vocab.len();
        vocab.entry(w.clone()).or_insert(next);
    }
    // renumber columns alphabetically
    for (i, v) in vocab.values_mut().enumerate() {
        *v = i;
    }
    let mut df = vec![0usize; vocab.len()];
    let counts: Vec<BTreeMap<usize, usize>> = docs
        .iter()
        .map(|d| {
            let mut c = BTreeMap::new();
            for w in d {
                *c.entry(vocab[w]).or_insert(0) += 1;
            }
            for &col in c.keys() {
                df[col] += 1;
            }
            c
        })
        .collect();
    let n = docs.len() as f64;
    let rows = counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut row: Vec<(usize, f64)> = c
                .into_iter()
                .map(|(col, tf)| (col, tf as f64 * (n / df[col] as f64).ln()))
                .filter(|&(_, w)| w != 0.0)
                .collect();
            let norm = row.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|(_, w)| *w /= norm);
            } else {
                log::warn!("sentence {i} has an all-zero TF-IDF vector");
            }
            row
        })
        .collect();
    Ok(TfidfMatrix { vocab, rows })
}

/// Average-linkage agglomerative clustering on cosine distance. Clusters are
/// merged while their average distance is below `threshold`; the closest
/// pair merges first, ties going to the pair with the smallest member ids.
/// Returns a cluster id per row, numbered by first appearance.
pub fn agglomerate(m: &TfidfMatrix, threshold: f64) -> Vec<usize> {
    let sim = m.similarity_matrix();
    let dist: Vec<Vec<f64>> = sim.iter().map(|r| r.iter().map(|s| 1.0 - s).collect()).collect();
    agglomerate_distances(&dist, threshold)
}

pub fn agglomerate_distances(dist: &[Vec<f64>], threshold: f64) -> Vec<usize> {
    let n = dist.len();
    // active clusters keyed by their smallest member
    let mut size = vec![1usize; n];
    let mut alive = vec![true; n];
    let mut parent: Vec<usize> = (0..n).collect();
    let mut d: Vec<Vec<f64>> = dist.to_vec();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in i + 1..n {
                if alive[j] && best.is_none_or(|(bd, _, _)| d[i][j] < bd) {
                    best = Some((d[i][j], i, j));
                }
            }
        }
        let Some((bd, i, j)) = best else { break };
        if bd >= threshold {
            break;
        }
        // Lance-Williams update for average linkage
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if alive[k] && k != i && k != j {
                let v = (ni * d[i][k] + nj * d[j][k]) / (ni + nj);
                d[i][k] = v;
                d[k][i] = v;
            }
        }
        size[i] += size[j];
        alive[j] = false;
        parent[j] = i;
    }
    let root = |mut x: usize| {
        while parent[x] != x {
            x = parent[x];
        }
        x
    };
    relabel(&(0..n).map(root).collect::<Vec<_>>())
}

/// Renumbers labels by order of first appearance.
pub fn relabel(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Merges clusters joined by any sentence pair with similarity above
/// `threshold`, so no such pair can straddle two clusters.
pub fn close_over_pairs(m: &TfidfMatrix, clusters: &[usize], threshold: f64) -> Vec<usize> {
    let n = clusters.len();
    let k = clusters.iter().max().map_or(0, |&c| c + 1);
    let mut uf: Vec<usize> = (0..k).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if clusters[i] != clusters[j] && m.cosine(i, j) > threshold {
                let (a, b) = (find(&mut uf, clusters[i]), find(&mut uf, clusters[j]));
                if a != b {
                    uf[a.max(b)] = a.min(b);
                }
            }
        }
    }
    relabel(&clusters.iter().map(|&c| find(&mut uf, c)).collect::<Vec<_>>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub split: BTreeMap<SentenceId, Split>,
    pub cluster: BTreeMap<SentenceId, usize>,
}

impl SplitAssignment {
    pub fn of(&self, id: SentenceId) -> Option<Split> {
        self.split.get(&id).copied()
    }

    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for s in self.split.values() {
            c[*s as usize] += 1;
        }
        c
    }

    pub fn ids(&self, which: Split) -> Vec<SentenceId> {
        self.split.iter().filter(|(_, &s)| s == which).map(|(&id, _)| id).collect()
    }
}

/// Deals clusters, largest first, to the split with the largest remaining
/// deficit (ties to train, then valid, then test). The seed shuffles
/// clusters of equal size.
pub fn assign(clusters: &[usize], ids: &[SentenceId], ratios: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    if clusters.len() != ids.len() {
        return Err(Error::Shape("one cluster id per sentence required".into()));
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in clusters.iter().enumerate() {
        members.entry(c).or_default().push(i);
    }
    if members.len() < 3 {
        return Err(Error::Config(format!(
            "{} clusters cannot fill three splits",
            members.len()
        )));
    }
    let total: f64 = ratios.iter().sum();
    if !(total > 0.0) || ratios.iter().any(|r| *r < 0.0) {
        return Err(Error::Config(format!("invalid split ratios {ratios:?}")));
    }
    let n = ids.len() as f64;
    let targets: Vec<f64> = ratios.iter().map(|r| r / total * n).collect();

    let mut order: Vec<(usize, Vec<usize>)> = members.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by(|a, b| b.1.len().cmp(&a.1.len()));

    let mut filled = [0usize; 3];
    let mut out = SplitAssignment {
        split: BTreeMap::new(),
        cluster: BTreeMap::new(),
    };
    for (cluster, rows) in order {
        let mut pick = 0;
        for s in 1..3 {
            if targets[s] - filled[s] as f64 > targets[pick] - filled[pick] as f64 {
                pick = s;
            }
        }
        filled[pick] += rows.len();
        for r in rows {
            out.split.insert(ids[r], Split::ALL[pick]);
            out.cluster.insert(ids[r], cluster);
        }
    }
    Ok(out)
}

/// TF-IDF, clustering, pairwise closure and assignment in one call.
pub fn split_sentences(
    sentences: &[(SentenceId, String)],
    threshold: f64,
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitAssignment> {
    let texts: Vec<&str> = sentences.iter().map(|(_, s)| s.as_str()).collect();
    let ids: Vec<SentenceId> = sentences.iter().map(|(id, _)| *id).collect();
    let m = tfidf(&texts)?;
    let clusters = close_over_pairs(&m, &agglomerate(&m, threshold), threshold);
    assign(&clusters, &ids, ratios, seed)
}

#[derive(Serialize, Deserialize)]
struct SplitRow {
    sentence_id: SentenceId,
    cluster_id: usize,
    split: Split,
}

pub fn write_splits_csv<W: Write>(w: W, a: &SplitAssignment) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for (&id, &split) in &a.split {
        wr.serialize(SplitRow {
            sentence_id: id,
            cluster_id: a.cluster[&id],
            split,
        })?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_splits_csv<R: Read>(r: R) -> Result<SplitAssignment> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = SplitAssignment {
        split: BTreeMap::new(),
        cluster: BTreeMap::new(),
    };
    for row in rd.deserialize::<SplitRow>() {
        let row = row?;
        out.split.insert(row.sentence_id, row.split);
        out.cluster.insert(row.sentence_id, row.cluster_id);
    }
    Ok(out)
}
