//! Convolutional keystroke encoder followed by a sentence-level transformer.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::keyboard::N_CLASSES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub n_sensors: usize,
    /// Samples per keystroke window.
    pub t: usize,
    pub d_spatial: usize,
    /// Number of Fourier features of the sensor positions (even).
    pub n_fourier: usize,
    pub h: usize,
    pub n_conv_blocks: usize,
    pub dilation_cycle: Vec<usize>,
    pub dropout: f64,
    pub n_transformer_layers: usize,
    pub n_heads: usize,
    pub ffn_mult: usize,
    pub n_subjects: usize,
    pub n_classes: usize,
    pub max_sentence_len: usize,
    pub seed: u64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            n_sensors: 61,
            t: 25,
            d_spatial: 32,
            n_fourier: 32,
            h: 64,
            n_conv_blocks: 8,
            dilation_cycle: vec![1, 3, 9],
            dropout: 0.3,
            n_transformer_layers: 4,
            n_heads: 2,
            ffn_mult: 2,
            n_subjects: 1,
            n_classes: N_CLASSES,
            max_sentence_len: 256,
            seed: 0,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.h == 0 || self.n_heads == 0 || self.h % self.n_heads != 0 {
            return bad(format!("h={} must be a positive multiple of n_heads={}", self.h, self.n_heads));
        }
        if self.n_sensors == 0 || self.t == 0 || self.d_spatial == 0 || self.n_subjects == 0 {
            return bad("sensor, window, spatial and subject sizes must be positive".into());
        }
        if self.n_fourier == 0 || self.n_fourier % 2 != 0 {
            return bad(format!("n_fourier must be even and positive, got {}", self.n_fourier));
        }
        if self.dilation_cycle.is_empty() || self.dilation_cycle.contains(&0) {
            return bad("dilation cycle must be non-empty and positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.n_classes < 2 || self.max_sentence_len == 0 || self.ffn_mult == 0 {
            return bad("n_classes >= 2, max_sentence_len > 0 and ffn_mult > 0 required".into());
        }
        Ok(())
    }

    pub fn dilation(&self, block: usize) -> usize {
        self.dilation_cycle[block % self.dilation_cycle.len()]
    }
}

/// One sentence of keystroke windows from one subject.
#[derive(Debug, Clone)]
pub struct Sentence {
    pub subject: usize,
    /// `n * t` rows (keystroke-major, time within), one column per sensor.
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Sentence {
    /// Builds from channel-by-time windows.
    pub fn from_windows(subject: usize, windows: &[ArrayView2<f64>], labels: Vec<usize>) -> Result<Self> {
        if windows.len() != labels.len() || windows.is_empty() {
            return Err(Error::Shape("one label per keystroke window required".into()));
        }
        let (ch, t) = windows[0].dim();
        let mut x = Array2::zeros((windows.len() * t, ch));
        for (i, w) in windows.iter().enumerate() {
            if w.dim() != (ch, t) {
                return Err(Error::Shape("windows differ in shape".into()));
            }
            x.slice_mut(ndarray::s![i * t..(i + 1) * t, ..]).assign(&w.t());
        }
        Ok(Sentence { subject, x, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Rows of several sentences stacked for one forward pass.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Array2<f64>,
    pub subjects: Vec<usize>,
    /// `(first keystroke, length)` per sentence.
    pub segs: Vec<(usize, usize)>,
    pub labels: Vec<Option<usize>>,
    pub key_valid: Vec<bool>,
}

impl Batch {
    pub fn new(sentences: &[&Sentence]) -> Self {
        let rows: usize = sentences.iter().map(|s| s.x.nrows()).sum();
        let cols = sentences.first().map_or(0, |s| s.x.ncols());
        let mut x = Array2::zeros((rows, cols));
        let (mut subjects, mut segs, mut labels) = (Vec::new(), Vec::new(), Vec::new());
        let (mut r, mut k) = (0, 0);
        for s in sentences {
            x.slice_mut(ndarray::s![r..r + s.x.nrows(), ..]).assign(&s.x);
            r += s.x.nrows();
            segs.push((k, s.len()));
            k += s.len();
            subjects.extend(std::iter::repeat_n(s.subject, s.len()));
            labels.extend(s.labels.iter().map(|&l| Some(l)));
        }
        Batch {
            x,
            subjects,
            segs,
            key_valid: vec![true; labels.len()],
            labels,
        }
    }

    pub fn n_keystrokes(&self) -> usize {
        self.labels.len()
    }
}

/// Named trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub names: Vec<String>,
    pub values: Vec<Array2<f64>>,
}

impl Params {
    fn add(&mut self, name: impl Into<String>, v: Array2<f64>) -> usize {
        self.names.push(name.into());
        self.values.push(v);
        self.values.len() - 1
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

#[derive(Debug, Clone)]
struct LayerIdx {
    ln1: (usize, usize),
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    bo: usize,
    ln2: (usize, usize),
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone)]
struct Index {
    spatial: usize,
    subject: Vec<usize>,
    w_in: usize,
    b_in: usize,
    conv: Vec<(usize, usize)>,
    pool_k: usize,
    pool_q: usize,
    pool_v: usize,
    layers: Vec<LayerIdx>,
    ln_f: (usize, usize),
    head_w: usize,
    head_b: usize,
}

#[derive(Debug, Clone)]
pub struct DecoderModel {
    pub config: DecoderConfig,
    pub params: Params,
    /// Sensor positions the spatial attention was built for.
    pub positions: Vec<[f64; 2]>,
    fourier: Array2<f64>,
    idx: Index,
}

/// Fixed random Fourier features of sensor positions rescaled to the unit
/// square: `n_fourier x n_sensors`.
fn fourier_features(positions: &[[f64; 2]], n_fourier: usize, seed: u64) -> Array2<f64> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in positions {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf0f0);
    let normal = Normal::new(0.0, 2.0).unwrap();
    let freqs: Vec<[f64; 2]> = (0..n_fourier / 2).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let mut f = Array2::zeros((n_fourier, positions.len()));
    for (s, p) in positions.iter().enumerate() {
        let u = [0, 1].map(|d| if hi[d] > lo[d] { (p[d] - lo[d]) / (hi[d] - lo[d]) } else { 0.5 });
        for (j, w) in freqs.iter().enumerate() {
            let a = 2.0 * PI * (w[0] * u[0] + w[1] * u[1]);
            f[[2 * j, s]] = a.cos();
            f[[2 * j + 1, s]] = a.sin();
        }
    }
    f
}

/// Sinusoidal position encodings for positions `0..n`.
pub fn positional_encoding(n: usize, h: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, h), |(p, i)| {
        let k = (i / 2) as f64;
        let a = p as f64 / 10000f64.powf(2.0 * k / h as f64);
        if i % 2 == 0 { a.sin() } else { a.cos() }
    })
}

pub struct ForwardOut {
    pub embeddings: Var,
    pub logits: Var,
}

impl DecoderModel {
    pub fn new(config: DecoderConfig, positions: &[[f64; 2]]) -> Result<Self> {
        config.validate()?;
        if positions.len() != config.n_sensors {
            return Err(Error::Shape(format!(
                "{} sensor positions for a model with {} sensors",
                positions.len(),
                config.n_sensors
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut p = Params {
            names: Vec::new(),
            values: Vec::new(),
        };
        let mut init = |r: usize, c: usize, std: f64| {
            let n = Normal::new(0.0, std).unwrap();
            Array2::from_shape_fn((r, c), |_| n.sample(&mut rng))
        };
        let (d, h, f) = (config.d_spatial, config.h, config.n_fourier);
        let spatial = p.add("spatial", init(d, f, 1.0 / (f as f64).sqrt()));
        let subject = (0..config.n_subjects).map(|s| p.add(format!("subject.{s}"), Array2::eye(d))).collect();
        let w_in = p.add("input.w", init(d, h, 1.0 / (d as f64).sqrt()));
        let b_in = p.add("input.b", Array2::zeros((1, h)));
        let conv = (0..config.n_conv_blocks)
            .map(|b| {
                let w = p.add(format!("conv.{b}.w"), init(3 * h, h, 0.5 / (3.0 * h as f64).sqrt()));
                let bias = p.add(format!("conv.{b}.b"), Array2::zeros((1, h)));
                (w, bias)
            })
            .collect();
        let sh = 1.0 / (h as f64).sqrt();
        let pool_k = p.add("pool.k", init(h, h, sh));
        let pool_q = p.add("pool.q", init(h, 1, 1.0));
        let pool_v = p.add("pool.v", init(h, h, sh));
        let fh = config.ffn_mult * h;
        let layers = (0..config.n_transformer_layers)
            .map(|l| {
                let ln = |p: &mut Params, n: &str| {
                    (
                        p.add(format!("layer.{l}.{n}.gain"), Array2::ones((1, h))),
                        p.add(format!("layer.{l}.{n}.bias"), Array2::zeros((1, h))),
                    )
                };
                let ln1 = ln(&mut p, "ln1");
                let wq = p.add(format!("layer.{l}.wq"), init(h, h, sh));
                let wk = p.add(format!("layer.{l}.wk"), init(h, h, sh));
                let wv = p.add(format!("layer.{l}.wv"), init(h, h, sh));
                let wo = p.add(format!("layer.{l}.wo"), init(h, h, sh));
                let bo = p.add(format!("layer.{l}.bo"), Array2::zeros((1, h)));
                let ln2 = ln(&mut p, "ln2");
                let w1 = p.add(format!("layer.{l}.ffn.w1"), init(h, fh, sh));
                let b1 = p.add(format!("layer.{l}.ffn.b1"), Array2::zeros((1, fh)));
                let w2 = p.add(format!("layer.{l}.ffn.w2"), init(fh, h, 1.0 / (fh as f64).sqrt()));
                let b2 = p.add(format!("layer.{l}.ffn.b2"), Array2::zeros((1, h)));
                LayerIdx {
                    ln1,
                    wq,
                    wk,
                    wv,
                    wo,
                    bo,
                    ln2,
                    w1,
                    b1,
                    w2,
                    b2,
                }
            })
            .collect();
        let ln_f = (p.add("final.gain", Array2::ones((1, h))), p.add("final.bias", Array2::zeros((1, h))));
        let head_w = p.add("head.w", init(h, config.n_classes, sh));
        let head_b = p.add("head.b", Array2::zeros((1, config.n_classes)));
        let idx = Index {
            spatial,
            subject,
            w_in,
            b_in,
            conv,
            pool_k,
            pool_q,
            pool_v,
            layers,
            ln_f,
            head_w,
            head_b,
        };
        let fourier = fourier_features(positions, f, config.seed);
        Ok(DecoderModel {
            config,
            params: p,
            positions: positions.to_vec(),
            fourier,
            idx,
        })
    }

    /// Rebuilds a model and installs saved parameter values.
    pub fn with_params(config: DecoderConfig, positions: &[[f64; 2]], values: Vec<(String, Array2<f64>)>) -> Result<Self> {
        let mut m = Self::new(config, positions)?;
        if values.len() != m.params.values.len() {
            return Err(Error::Format(format!("{} tensors, expected {}", values.len(), m.params.values.len())));
        }
        for (name, v) in values {
            let i = m.params.index(&name).ok_or_else(|| Error::Format(format!("unknown tensor {name}")))?;
            if v.dim() != m.params.values[i].dim() {
                return Err(Error::Format(format!("tensor {name} has shape {:?}", v.dim())));
            }
            m.params.values[i] = v;
        }
        Ok(m)
    }

    fn check(&self, b: &Batch) -> Result<()> {
        let c = &self.config;
        if b.x.ncols() != c.n_sensors {
            return Err(Error::Shape(format!("{} sensors in data, model expects {}", b.x.ncols(), c.n_sensors)));
        }
        if b.x.nrows() != b.n_keystrokes() * c.t {
            return Err(Error::Shape(format!("{} rows for {} keystrokes of {} samples", b.x.nrows(), b.n_keystrokes(), c.t)));
        }
        if let Some(&s) = b.subjects.iter().find(|&&s| s >= c.n_subjects) {
            return Err(Error::Domain(format!("subject {s} but the model has {} subject layers", c.n_subjects)));
        }
        if let Some(&(_, len)) = b.segs.iter().find(|s| s.1 > c.max_sentence_len) {
            return Err(Error::SequenceLength {
                len,
                max: c.max_sentence_len,
            });
        }
        Ok(())
    }

    /// Spatial attention weights, `d_spatial x n_sensors`; rows sum to one.
    pub fn spatial_weights(&self) -> Array2<f64> {
        let mut t = Tape::new();
        let z = t.constant(self.params.values[self.idx.spatial].clone());
        let f = t.constant(self.fourier.clone());
        let a = t.matmul(z, f);
        let a = t.softmax_rows(a);
        t.value(a).clone()
    }

    fn p(&self, t: &mut Tape, i: usize) -> Var {
        t.param(i, self.params.values[i].clone())
    }

    /// Convolutional module: one embedding row per keystroke.
    fn conv(&self, t: &mut Tape, b: &Batch, mut rng: Option<&mut ChaCha8Rng>) -> Var {
        let c = &self.config;
        let z = self.p(t, self.idx.spatial);
        let f = t.constant(self.fourier.clone());
        let a = t.matmul(z, f);
        let a = t.softmax_rows(a);
        let x = t.constant(b.x.clone());
        let v = t.matmul_bt(x, a);
        let ws: Vec<Var> = self.idx.subject.iter().map(|&i| self.p(t, i)).collect();
        let groups: Vec<usize> = b.subjects.iter().flat_map(|&s| std::iter::repeat_n(s, c.t)).collect();
        let u = t.group_matmul(v, &ws, &groups);
        let w_in = self.p(t, self.idx.w_in);
        let b_in = self.p(t, self.idx.b_in);
        let h = t.matmul(u, w_in);
        let mut h = t.add_row(h, b_in);
        for (blk, &(wi, bi)) in self.idx.conv.iter().enumerate() {
            let w = self.p(t, wi);
            let bias = self.p(t, bi);
            let y = t.conv1d(h, w, c.dilation(blk), c.t);
            let y = t.add_row(y, bias);
            let mut y = t.gelu(y);
            if let Some(rng) = rng.as_deref_mut() {
                if c.dropout > 0.0 {
                    let keep = 1.0 - c.dropout;
                    let dim = t.value(y).dim();
                    let mask = Array2::from_shape_fn(dim, |_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
                    y = t.dropout(y, mask);
                }
            }
            h = t.add(h, y);
        }
        let wk = self.p(t, self.idx.pool_k);
        let q = self.p(t, self.idx.pool_q);
        let wv = self.p(t, self.idx.pool_v);
        let k = t.matmul(h, wk);
        let s = t.matmul(k, q);
        let s = t.scale(s, 1.0 / (c.h as f64).sqrt());
        let vals = t.matmul(h, wv);
        t.attn_pool(s, vals, c.t)
    }

    fn layer_norm(&self, t: &mut Tape, x: Var, (g, b): (usize, usize)) -> Var {
        let g = self.p(t, g);
        let b = self.p(t, b);
        t.layer_norm(x, g, b)
    }

    /// Transformer over each sentence segment of the embedding rows.
    fn transformer(&self, t: &mut Tape, z: Var, segs: &[(usize, usize)], key_valid: &[bool]) -> Var {
        let c = &self.config;
        let n = t.value(z).nrows();
        let mut pe = Array2::zeros((n, c.h));
        for &(start, len) in segs {
            pe.slice_mut(ndarray::s![start..start + len, ..]).assign(&positional_encoding(len, c.h));
        }
        let pe = t.constant(pe);
        let mut x = t.add(z, pe);
        for l in &self.idx.layers {
            let y = self.layer_norm(t, x, l.ln1);
            let (wq, wk, wv) = (self.p(t, l.wq), self.p(t, l.wk), self.p(t, l.wv));
            let q = t.matmul(y, wq);
            let k = t.matmul(y, wk);
            let v = t.matmul(y, wv);
            let a = t.self_attention(q, k, v, segs, c.n_heads, key_valid);
            let wo = self.p(t, l.wo);
            let bo = self.p(t, l.bo);
            let o = t.matmul(a, wo);
            let o = t.add_row(o, bo);
            x = t.add(x, o);
            let y = self.layer_norm(t, x, l.ln2);
            let (w1, b1, w2, b2) = (self.p(t, l.w1), self.p(t, l.b1), self.p(t, l.w2), self.p(t, l.b2));
            let f = t.matmul(y, w1);
            let f = t.add_row(f, b1);
            let f = t.gelu(f);
            let f = t.matmul(f, w2);
            let f = t.add_row(f, b2);
            x = t.add(x, f);
        }
        let x = self.layer_norm(t, x, self.idx.ln_f);
        let hw = self.p(t, self.idx.head_w);
        let hb = self.p(t, self.idx.head_b);
        let logits = t.matmul(x, hw);
        t.add_row(logits, hb)
    }

    /// Full forward pass. Dropout is active only when `rng` is given.
    pub fn forward(&self, t: &mut Tape, b: &Batch, rng: Option<&mut ChaCha8Rng>) -> Result<ForwardOut> {
        self.check(b)?;
        let embeddings = self.conv(t, b, rng);
        let logits = self.transformer(t, embeddings, &b.segs, &b.key_valid);
        Ok(ForwardOut { embeddings, logits })
    }

    /// Transformer and head applied to given embeddings (`n x h`).
    pub fn transformer_forward(&self, z: &Array2<f64>, segs: &[(usize, usize)], key_valid: &[bool]) -> Result<Array2<f64>> {
        if z.ncols() != self.config.h {
            return Err(Error::Shape(format!("embeddings have {} columns, expected {}", z.ncols(), self.config.h)));
        }
        if let Some(&(_, len)) = segs.iter().find(|s| s.1 > self.config.max_sentence_len) {
            return Err(Error::SequenceLength {
                len,
                max: self.config.max_sentence_len,
            });
        }
        let mut t = Tape::new();
        let zv = t.constant(z.clone());
        let l = self.transformer(&mut t, zv, segs, key_valid);
        Ok(t.value(l).clone())
    }

    /// Loss and gradients for one batch.
    pub fn loss_and_grad(&self, b: &Batch, rng: Option<&mut ChaCha8Rng>) -> Result<(f64, Vec<Array2<f64>>)> {
        let mut t = Tape::new();
        let out = self.forward(&mut t, b, rng)?;
        let loss = t.cross_entropy(out.logits, &b.labels);
        let l = t.scalar(loss);
        if !l.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss {l} on a batch of {} sentences / {} keystrokes",
                b.segs.len(),
                b.n_keystrokes()
            )));
        }
        let mut grads: Vec<Array2<f64>> = self.params.values.iter().map(|v| Array2::zeros(v.dim())).collect();
        for (i, g) in t.backward(loss) {
            grads[i] += &g;
        }
        Ok((l, grads))
    }

    /// Eval-mode logits, `keystrokes x classes`.
    pub fn logits(&self, b: &Batch) -> Result<Array2<f64>> {
        let mut t = Tape::new();
        let out = self.forward(&mut t, b, None)?;
        Ok(t.value(out.logits).clone())
    }

    /// Eval-mode mean loss and the number of correct argmax predictions.
    pub fn evaluate(&self, b: &Batch) -> Result<(f64, usize)> {
        let mut t = Tape::new();
        let out = self.forward(&mut t, b, None)?;
        let loss = t.cross_entropy(out.logits, &b.labels);
        let lv = t.value(out.logits);
        let correct = lv
            .rows()
            .into_iter()
            .zip(&b.labels)
            .filter(|(r, y)| y.is_some_and(|y| argmax(r.as_slice().unwrap()) == y))
            .count();
        Ok((t.scalar(loss), correct))
    }

    /// Conv-module embeddings for every keystroke in the batch.
    pub fn embed(&self, b: &Batch) -> Result<Array2<f64>> {
        self.check(b)?;
        let mut t = Tape::new();
        let z = self.conv(&mut t, b, None);
        Ok(t.value(z).clone())
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}
