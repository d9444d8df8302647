//! Backoff character n-gram model over the 29 key classes.
//!
//! Interpolated Kneser-Ney with a single absolute discount, stored in
//! backoff form in a prefix trie: the node for `h w` holds
//! `log10 P(w | h)` and the node for a history `h` holds `log10 γ(h)`.
//! Histories are padded with `order - 1` begin markers. Order 0 is the
//! uniform distribution over the 29 classes.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::keyboard::{classify_str, KeyClass, N_CLASSES};

/// Begin-of-sentence marker; the 29 classes use symbols `0..29`.
pub const BOS: u8 = N_CLASSES as u8;
pub const DEFAULT_ORDER: usize = 9;
pub const DEFAULT_DISCOUNT: f64 = 0.75;
const MAX_ORDER: usize = 12;

const MAGIC: &[u8; 4] = b"KDLM";
const VERSION: u32 = 1;

/// Packs a symbol string into a u64, five bits per symbol, first symbol in
/// the most significant position. Symbols are stored `+1` so length is
/// recoverable.
fn pack(syms: &[u8]) -> u64 {
    syms.iter().fold(0u64, |k, &s| (k << 5) | (s as u64 + 1))
}

fn drop_first(key: u64, len: usize) -> u64 {
    key & ((1u64 << (5 * (len - 1))) - 1)
}

fn first_sym(key: u64, len: usize) -> u8 {
    ((key >> (5 * (len - 1))) & 31) as u8 - 1
}

#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    discount: f64,
    sym: Vec<u8>,
    /// Children of node `i` are `child_start[i]..child_start[i + 1]`,
    /// sorted by symbol.
    child_start: Vec<u32>,
    /// `log10 P(w | h)`; NaN for nodes that are histories only.
    log_prob: Vec<f64>,
    log_backoff: Vec<f64>,
}

impl NgramModel {
    /// Fits on a corpus with one sentence per line. Characters are mapped
    /// through [`classify_str`]; blank lines are skipped.
    pub fn fit(corpus: &str, order: usize, discount: f64) -> Result<Self> {
        let sentences: Vec<Vec<KeyClass>> = corpus
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.trim().is_empty())
            .map(classify_str)
            .collect();
        Self::fit_sentences(&sentences, order, discount)
    }

    pub fn fit_sentences(sentences: &[Vec<KeyClass>], order: usize, discount: f64) -> Result<Self> {
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::Parameter(format!("order must be in 1..={MAX_ORDER}, got {order}")));
        }
        if !(0.0..=1.0).contains(&discount) {
            return Err(Error::Parameter(format!("discount must be in [0, 1], got {discount}")));
        }
        if sentences.iter().all(|s| s.is_empty()) {
            return Err(Error::DataIntegrity("empty corpus".into()));
        }
        let m = order;

        // raw[k] counts k-grams (index k-1) ending at a real character
        let mut raw: Vec<HashMap<u64, u32>> = vec![HashMap::new(); m];
        let mut buf: Vec<u8> = Vec::new();
        for s in sentences {
            buf.clear();
            buf.resize(m - 1, BOS);
            buf.extend(s.iter().map(|c| c.id() as u8));
            for end in m - 1..buf.len() {
                for k in 1..=m {
                    *raw[k - 1].entry(pack(&buf[end + 1 - k..=end])).or_insert(0) += 1;
                }
            }
        }

        // Kneser-Ney counts: raw at the top order and for n-grams that start
        // with the begin marker, distinct left extensions otherwise.
        let mut kn: Vec<HashMap<u64, u32>> = vec![HashMap::new(); m];
        kn[m - 1] = raw[m - 1].clone();
        for k in 1..m {
            let mut cont: HashMap<u64, u32> = HashMap::new();
            for &key in raw[k].keys() {
                *cont.entry(drop_first(key, k + 1)).or_insert(0) += 1;
            }
            for (&key, &c) in &raw[k - 1] {
                let v = if first_sym(key, k) == BOS { c } else { cont[&key] };
                kn[k - 1].insert(key, v);
            }
        }

        // (len, key) -> (log10 prob, log10 backoff)
        let mut nodes: HashMap<(usize, u64), (f64, f64)> = HashMap::new();
        nodes.insert((0, 0), (f64::NAN, 0.0));
        let d = discount;
        for k in 1..=m {
            // per-history totals and type counts
            let mut hist: HashMap<u64, (u64, u64)> = HashMap::new();
            for (&key, &c) in &kn[k - 1] {
                let e = hist.entry(key >> 5).or_insert((0, 0));
                e.0 += c as u64;
                e.1 += 1;
            }
            for (&h, &(total, types)) in &hist {
                let gamma = d * types as f64 / total as f64;
                nodes.entry((k - 1, h)).or_insert((f64::NAN, 0.0)).1 = gamma.log10();
            }
            let mut probs = Vec::with_capacity(kn[k - 1].len());
            for (&key, &c) in &kn[k - 1] {
                let (total, types) = hist[&(key >> 5)];
                let w = (key & 31) as u8 - 1;
                let lower = if k == 1 {
                    1.0 / N_CLASSES as f64
                } else {
                    let h = unpack(key >> 5, k - 1);
                    10f64.powf(query_map(&nodes, &h[1..], w))
                };
                let gamma = d * types as f64 / total as f64;
                let p = (c as f64 - d).max(0.0) / total as f64 + gamma * lower;
                probs.push((key, p.log10()));
            }
            for (key, lp) in probs {
                nodes.entry((k, key)).or_insert((f64::NAN, 0.0)).0 = lp;
            }
        }
        // every prefix of a node must exist so the trie is connected
        let keys: Vec<(usize, u64)> = nodes.keys().copied().collect();
        for (mut len, mut key) in keys {
            while len > 1 {
                len -= 1;
                key >>= 5;
                nodes.entry((len, key)).or_insert((f64::NAN, 0.0));
            }
        }
        Ok(Self::from_nodes(order, discount, nodes))
    }

    fn from_nodes(order: usize, discount: f64, nodes: HashMap<(usize, u64), (f64, f64)>) -> Self {
        let mut entries: Vec<((usize, u64), (f64, f64))> = nodes.into_iter().collect();
        entries.sort_by_key(|e| e.0);
        let n = entries.len();
        let index: HashMap<(usize, u64), usize> = entries.iter().enumerate().map(|(i, e)| (e.0, i)).collect();
        let mut n_children = vec![0u32; n];
        let mut sym = Vec::with_capacity(n);
        let mut log_prob = Vec::with_capacity(n);
        let mut log_backoff = Vec::with_capacity(n);
        for &((len, key), (lp, lb)) in &entries {
            if len == 0 {
                sym.push(u8::MAX);
            } else {
                sym.push((key & 31) as u8 - 1);
                n_children[index[&(len - 1, key >> 5)]] += 1;
            }
            log_prob.push(lp);
            log_backoff.push(lb);
        }
        // children are laid out in parent order right after the root
        let mut child_start = Vec::with_capacity(n + 1);
        let mut acc = 1u32;
        for c in &n_children {
            child_start.push(acc);
            acc += c;
        }
        child_start.push(acc);
        NgramModel {
            order,
            discount,
            sym,
            child_start,
            log_prob,
            log_backoff,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn n_nodes(&self) -> usize {
        self.sym.len()
    }

    /// Number of stored n-grams (nodes with a probability).
    pub fn n_ngrams(&self) -> usize {
        self.log_prob.iter().filter(|p| !p.is_nan()).count()
    }

    /// Deepest node depth; never exceeds the order.
    pub fn depth(&self) -> usize {
        let mut depth = 0;
        let mut frontier = 0..1usize;
        while !frontier.is_empty() {
            let lo = self.child_start[frontier.start] as usize;
            let hi = self.child_start[frontier.end] as usize;
            if hi > lo {
                depth += 1;
            }
            frontier = lo..hi;
        }
        depth
    }

    fn child(&self, node: usize, s: u8) -> Option<usize> {
        let lo = self.child_start[node] as usize;
        let hi = self.child_start[node + 1] as usize;
        self.sym[lo..hi].binary_search(&s).ok().map(|i| lo + i)
    }

    fn find(&self, syms: &[u8]) -> Option<usize> {
        syms.iter().try_fold(0usize, |n, &s| self.child(n, s))
    }

    fn trim<'a>(&self, ctx: &'a [u8]) -> &'a [u8] {
        &ctx[ctx.len().saturating_sub(self.order - 1)..]
    }

    /// `log10 P(w | ctx)` where `ctx` is a symbol string (classes or
    /// [`BOS`]); only its last `order - 1` symbols are used.
    pub fn log10prob_syms(&self, w: u8, ctx: &[u8]) -> f64 {
        let ctx = self.trim(ctx);
        let mut acc = 0.0;
        for k in (0..=ctx.len()).rev() {
            if let Some(h) = self.find(&ctx[ctx.len() - k..]) {
                if let Some(c) = self.child(h, w) {
                    return acc + self.log_prob[c];
                }
                acc += self.log_backoff[h];
            }
        }
        acc - (N_CLASSES as f64).log10()
    }

    /// Natural-log probabilities of all 29 classes after `ctx`.
    pub fn logprobs_syms(&self, ctx: &[u8]) -> [f64; N_CLASSES] {
        let ctx = self.trim(ctx);
        // nodes for every suffix, longest first
        let hists: Vec<Option<usize>> = (0..=ctx.len()).rev().map(|k| self.find(&ctx[ctx.len() - k..])).collect();
        let mut out = [0.0; N_CLASSES];
        for (w, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            let mut hit = None;
            for h in hists.iter().flatten() {
                if let Some(c) = self.child(*h, w as u8) {
                    hit = Some(self.log_prob[c]);
                    break;
                }
                acc += self.log_backoff[*h];
            }
            let l10 = acc + hit.unwrap_or(-(N_CLASSES as f64).log10());
            *o = l10 * std::f64::consts::LN_10;
        }
        out
    }

    /// Symbol context for a sentence prefix: begin markers followed by the
    /// last classes of `history`.
    pub fn context(&self, history: &[KeyClass]) -> Vec<u8> {
        let keep = history.len().min(self.order - 1);
        let mut ctx = vec![BOS; self.order - 1 - keep];
        ctx.extend(history[history.len() - keep..].iter().map(|c| c.id() as u8));
        ctx
    }

    /// Natural-log probability of `c` following the sentence prefix
    /// `history` (shorter prefixes are padded as sentence starts).
    pub fn logprob(&self, c: KeyClass, history: &[KeyClass]) -> f64 {
        self.log10prob_syms(c.id() as u8, &self.context(history)) * std::f64::consts::LN_10
    }

    /// Natural-log probability of a whole sentence by the chain rule.
    pub fn sentence_logprob(&self, sentence: &[KeyClass]) -> f64 {
        (0..sentence.len()).map(|i| self.logprob(sentence[i], &sentence[..i])).sum()
    }

    /// Per-character perplexity over the lines of `text`.
    pub fn perplexity(&self, text: &str) -> f64 {
        let (mut lp, mut n) = (0.0, 0usize);
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let s = classify_str(line);
            lp += self.sentence_logprob(&s);
            n += s.len();
        }
        (-lp / n.max(1) as f64).exp()
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let alphabet: String = KeyClass::all().map(|c| c.glyph()).chain(['^']).collect();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.order as u32).to_le_bytes())?;
        w.write_all(&self.discount.to_le_bytes())?;
        w.write_all(&(alphabet.len() as u32).to_le_bytes())?;
        w.write_all(alphabet.as_bytes())?;
        w.write_all(&(self.sym.len() as u64).to_le_bytes())?;
        w.write_all(&self.sym)?;
        for c in &self.child_start {
            w.write_all(&c.to_le_bytes())?;
        }
        for v in self.log_prob.iter().chain(&self.log_backoff) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("not a language model file (bad magic)".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let order = cur.u32()? as usize;
        let discount = cur.f64()?;
        let alen = cur.u32()? as usize;
        let alphabet = cur.take(alen)?;
        let expected: String = KeyClass::all().map(|c| c.glyph()).chain(['^']).collect();
        if alphabet != expected.as_bytes() {
            return Err(Error::Format("alphabet mismatch".into()));
        }
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::Format(format!("bad order {order}")));
        }
        let n = cur.u64()? as usize;
        if n == 0 || n > bytes.len() {
            return Err(Error::Format(format!("bad node count {n}")));
        }
        let sym = cur.take(n)?.to_vec();
        let child_start = (0..=n).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
        let log_prob = (0..n).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let log_backoff = (0..n).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        if cur.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after model".into()));
        }
        if child_start.windows(2).any(|w| w[0] > w[1]) || child_start[n] as usize != n {
            return Err(Error::Format("corrupt child index".into()));
        }
        Ok(NgramModel {
            order,
            discount,
            sym,
            child_start,
            log_prob,
            log_backoff,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }
}

fn unpack(mut key: u64, len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len];
    for i in (0..len).rev() {
        out[i] = (key & 31) as u8 - 1;
        key >>= 5;
    }
    out
}

/// Backoff query against the partially built node map.
fn query_map(nodes: &HashMap<(usize, u64), (f64, f64)>, ctx: &[u8], w: u8) -> f64 {
    let mut acc = 0.0;
    for k in (0..=ctx.len()).rev() {
        let h = &ctx[ctx.len() - k..];
        let hk = pack(h);
        if let Some(&(lp, _)) = nodes.get(&(k + 1, (hk << 5) | (w as u64 + 1))) {
            if !lp.is_nan() {
                return acc + lp;
            }
        }
        if let Some(&(_, lb)) = nodes.get(&(k, hk)) {
            acc += lb;
        }
    }
    acc - (N_CLASSES as f64).log10()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated language model file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
