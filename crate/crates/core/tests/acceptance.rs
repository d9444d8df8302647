//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Criteria 6-8 share one desk-scale pipeline run.

use std::collections::{HashMap, HashSet, VecDeque};
use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use keydecode::charlm::NgramModel;
use keydecode::corpus::{corpus_text, unique_sentences};
use keydecode::decoder::beam_search_with;
use keydecode::metrics::report::EvalReport;
use keydecode::metrics::stats::{fdr, mannwhitney, pearson, pearson_r, wilcoxon};
use keydecode::metrics::{cer, levenshtein};
use keydecode::neural::{Batch, DecoderConfig, DecoderModel, Sentence};
use keydecode::signal::{bandpass, resample_channel, sensor_layout, Device, Epoch, EpochMeta, Recording, RobustScaler};
use keydecode::splitter::{agglomerate_distances, split_sentences, tfidf, Split};
use keydecode::{KeyClass, N_CLASSES};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn keydecode(args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_keydecode"))
        .args(args)
        .env("RUST_LOG", "warn")
        .status()
        .map_err(|e| format!("cannot launch keydecode: {e}"))?;
    ensure(status.success(), format!("keydecode {} exited with {status}", args.join(" ")))
}

fn copy_dir(from: &Path, to: &Path) -> std::io::Result<()> {
    fs::create_dir_all(to)?;
    for entry in fs::read_dir(from)? {
        let entry = entry?;
        let dest = to.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_dir(&entry.path(), &dest)?;
        } else {
            fs::copy(entry.path(), dest)?;
        }
    }
    Ok(())
}

fn metric(report: &EvalReport, name: &str) -> Result<f64, String> {
    report.get(name).map(|e| e.value).ok_or_else(|| format!("report has no {name}"))
}

fn metric_p(report: &EvalReport, name: &str) -> Result<f64, String> {
    report.get(name).and_then(|e| e.p).ok_or_else(|| format!("report has no p for {name}"))
}

// ---------------------------------------------------------------- 1

/// All sequences of length <= `max_len` over `k` symbols.
fn all_sequences(k: u8, max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for c in 0..k {
                let mut t: Vec<u8> = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Edit distances by breadth-first search over single insertions,
/// deletions and substitutions, never leaving the length bound.
fn edit_graph(seqs: &[Vec<u8>], k: u8, max_len: usize) -> Vec<Vec<u32>> {
    let index: HashMap<&[u8], u32> = seqs.iter().enumerate().map(|(i, s)| (s.as_slice(), i as u32)).collect();
    seqs.iter()
        .map(|s| {
            let mut nb = HashSet::new();
            for i in 0..s.len() {
                let mut d = s.clone();
                d.remove(i);
                nb.insert(index[d.as_slice()]);
                for c in 0..k {
                    if c != s[i] {
                        let mut t = s.clone();
                        t[i] = c;
                        nb.insert(index[t.as_slice()]);
                    }
                }
            }
            if s.len() < max_len {
                for i in 0..=s.len() {
                    for c in 0..k {
                        let mut t = s.clone();
                        t.insert(i, c);
                        nb.insert(index[t.as_slice()]);
                    }
                }
            }
            let mut v: Vec<u32> = nb.into_iter().collect();
            v.sort_unstable();
            v
        })
        .collect()
}

fn bfs(adj: &[Vec<u32>], src: usize, dist: &mut [u32]) {
    dist.fill(u32::MAX);
    dist[src] = 0;
    let mut q = VecDeque::from([src as u32]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[u as usize] {
            if dist[v as usize] == u32::MAX {
                dist[v as usize] = dist[u as usize] + 1;
                q.push_back(v);
            }
        }
    }
}

fn oracle_log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z = row.iter().map(|x| (x - m).exp()).sum::<f64>().ln() + m;
    row.iter().map(|x| x - z).collect()
}

/// Average linkage by direct recomputation of every cluster-pair mean.
fn brute_force_linkage(dist: &[Vec<f64>], thr: f64) -> Vec<usize> {
    let mut clusters: Vec<Vec<usize>> = (0..dist.len()).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut s = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        s += dist[i][j];
                    }
                }
                let d = s / (clusters[a].len() * clusters[b].len()) as f64;
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        match best {
            Some((d, a, b)) if d < thr => {
                let moved = clusters.remove(b);
                clusters[a].extend(moved);
            }
            _ => break,
        }
    }
    let mut owner = vec![0; dist.len()];
    for (c, members) in clusters.iter().enumerate() {
        for &i in members {
            owner[i] = c;
        }
    }
    // number by first appearance
    let mut map = HashMap::new();
    owner
        .iter()
        .map(|c| {
            let next = map.len();
            *map.entry(*c).or_insert(next)
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let (k, max_len) = (3u8, 7usize);
    let seqs = all_sequences(k, max_len);
    let adj = edit_graph(&seqs, k, max_len);
    let mut dist = vec![0u32; seqs.len()];
    let mut pairs = 0u64;
    for (i, a) in seqs.iter().enumerate() {
        bfs(&adj, i, &mut dist);
        for (j, b) in seqs.iter().enumerate() {
            let d = levenshtein(a, b);
            if d as u32 != dist[j] {
                return Err(format!("levenshtein({a:?}, {b:?}) = {d}, search says {}", dist[j]));
            }
            if !a.is_empty() {
                let c = cer(b, a).map_err(|e| e.to_string())?;
                if c != dist[j] as f64 / a.len() as f64 {
                    return Err(format!("cer({b:?}, {a:?}) = {c}"));
                }
            }
            pairs += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, v, beam) = (4usize, 3usize, 81usize);
    let mut prefixes: Vec<Vec<usize>> = vec![Vec::new()];
    for len in 1..n {
        prefixes.extend(all_sequences(v as u8, len).into_iter().filter(|p| p.len() == len).map(|p| p.into_iter().map(usize::from).collect()));
    }
    for trial in 0..200 {
        let logits: Vec<Vec<f64>> = (0..n).map(|_| (0..v).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let lm: HashMap<Vec<usize>, Vec<f64>> = prefixes
            .iter()
            .map(|p| (p.clone(), oracle_log_softmax(&(0..v).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>())))
            .collect();
        let alpha = [0.0, 0.5, 2.0, 5.0][trial % 4];
        let hyps = beam_search_with(&logits, beam, alpha, |p| lm[p].clone()).map_err(|e| e.to_string())?;
        let mut exhaustive: Vec<(f64, Vec<usize>)> = all_sequences(v as u8, n)
            .into_iter()
            .filter(|s| s.len() == n)
            .map(|s| {
                let s: Vec<usize> = s.into_iter().map(usize::from).collect();
                let score = (0..n).map(|t| oracle_log_softmax(&logits[t])[s[t]] + alpha * lm[&s[..t].to_vec()][s[t]]).sum();
                (score, s)
            })
            .collect();
        exhaustive.sort_by(|a, b| b.0.total_cmp(&a.0));
        ensure(hyps.len() == exhaustive.len(), format!("beam kept {} of {} sequences", hyps.len(), exhaustive.len()))?;
        for (h, (_, s)) in hyps.iter().zip(&exhaustive) {
            ensure(&h.sequence == s, format!("trial {trial}: beam ranking {:?} differs from exhaustive {s:?}", h.sequence))?;
        }
    }

    let mut linkage = 0;
    for n in 2..=8 {
        for _ in 0..100 {
            let mut d = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i + 1..n {
                    d[i][j] = rng.random_range(0.0..1.0);
                    d[j][i] = d[i][j];
                }
            }
            let thr = rng.random_range(0.1..0.9);
            let got = agglomerate_distances(&d, thr);
            let want = brute_force_linkage(&d, thr);
            ensure(got == want, format!("n={n} thr={thr}: clustering {got:?} vs brute force {want:?}"))?;
            linkage += 1;
        }
    }
    Ok(format!("{pairs} sequence pairs, 200 beam fixtures, {linkage} clusterings agree"))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let c = DecoderConfig {
        n_sensors: 4,
        t: 6,
        d_spatial: 3,
        n_fourier: 4,
        h: 8,
        n_conv_blocks: 2,
        dropout: 0.0,
        n_transformer_layers: 1,
        n_heads: 2,
        n_subjects: 2,
        max_sentence_len: 8,
        ..Default::default()
    };
    let mut m = DecoderModel::new(c.clone(), &sensor_layout(c.n_sensors)).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for v in m.params.values.iter_mut() {
        v.mapv_inplace(|x| x + rng.random_range(-0.3..0.3));
    }
    let s = Sentence {
        subject: 1,
        x: Array2::from_shape_fn((3 * c.t, c.n_sensors), |_| rng.random_range(-2.0..2.0)),
        labels: (0..3).map(|_| rng.random_range(0..c.n_classes)).collect(),
    };
    let b = Batch::new(&[&s]);
    let (_, grads) = m.loss_and_grad(&b, None).map_err(|e| e.to_string())?;
    let sizes: Vec<usize> = m.params.values.iter().map(|v| v.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let mut flat = rng.random_range(0..total);
        let mut pi = 0;
        while flat >= sizes[pi] {
            flat -= sizes[pi];
            pi += 1;
        }
        let cols = m.params.values[pi].ncols();
        let at = (flat / cols, flat % cols);
        let orig = m.params.values[pi][at];
        let eps = 1e-5;
        let mut loss_at = |x: f64| -> Result<f64, String> {
            m.params.values[pi][at] = x;
            Ok(m.loss_and_grad(&b, None).map_err(|e| e.to_string())?.0)
        };
        let fd = (loss_at(orig + eps)? - loss_at(orig - eps)?) / (2.0 * eps);
        loss_at(orig)?;
        let an = grads[pi][at];
        worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-6));
    }
    ensure(worst < 1e-4, format!("max relative error {worst:.2e}"))?;
    Ok(format!("max relative error {worst:.2e} over 200 parameters of {total}"))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let corpus = corpus_text(1_000_000, 31, &HashSet::new());
    let lm = NgramModel::fit(&corpus, 9, 0.75).map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    lm.write(&mut bytes).map_err(|e| e.to_string())?;
    let back = NgramModel::read(bytes.as_slice()).map_err(|e| e.to_string())?;
    let text: Vec<KeyClass> = keydecode::keyboard::classify_str(&corpus[..10_000]);
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let len = rng.random_range(0..12);
        // half random strings, half real text
        let hist: Vec<KeyClass> = if i % 2 == 0 {
            (0..len).map(|_| KeyClass::from_id(rng.random_range(0..N_CLASSES)).unwrap()).collect()
        } else {
            let start = rng.random_range(0..text.len() - len);
            text[start..start + len].to_vec()
        };
        let ctx = lm.context(&hist);
        let lp = lm.logprobs_syms(&ctx);
        let total: f64 = lp.iter().map(|l| l.exp()).sum();
        worst = worst.max((total - 1.0).abs());
        let lp2 = back.logprobs_syms(&back.context(&hist));
        for (a, b) in lp.iter().zip(&lp2) {
            ensure(a.to_bits() == b.to_bits(), format!("round trip changed a log-prob: {a} vs {b}"))?;
        }
    }
    ensure(worst <= 1e-9, format!("normalisation error {worst:.2e}"))?;
    Ok(format!("{} bytes of text, max |sum - 1| = {worst:.1e}, round trip bit-exact", corpus.len()))
}

// ---------------------------------------------------------------- 4

/// Amplitude of the `freq` component by projection on sine and cosine.
fn amplitude(x: &[f64], sfreq: f64, freq: f64) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let ph = 2.0 * PI * freq * i as f64 / sfreq;
        s += v * ph.sin();
        c += v * ph.cos();
    }
    2.0 * s.hypot(c) / x.len() as f64
}

fn sine(freq: f64, sfreq: f64, secs: f64) -> Vec<f64> {
    (0..(secs * sfreq) as usize).map(|i| (2.0 * PI * freq * i as f64 / sfreq).sin()).collect()
}

/// Linear-interpolation quantile, recomputed here.
fn oracle_quantile(x: &[f64], q: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = q * (s.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

fn criterion_4() -> Outcome {
    let fs = 250.0;
    let secs = 30.0;
    // middle 10 s, an integer number of cycles of both probes
    let mid = (10.0 * fs) as usize..(20.0 * fs) as usize;
    let through = |freq: f64| -> Result<f64, String> {
        let x = sine(freq, fs, secs);
        let rec = Recording::new(Array2::from_shape_vec((1, x.len()), x).unwrap(), fs, vec![[0.0, 0.0]], Device::Eeg, 0)
            .map_err(|e| e.to_string())?;
        let y = bandpass(&rec, 0.1, 20.0).map_err(|e| e.to_string())?;
        let row = y.data.row(0).to_vec();
        Ok(amplitude(&row[mid.clone()], fs, freq))
    };
    let a5 = through(5.0)?;
    let a35 = through(35.0)?;
    let att = -20.0 * a35.log10();
    ensure((a5 - 1.0).abs() <= 0.02, format!("5 Hz amplitude {a5:.4} after bandpass"))?;
    ensure(att >= 20.0, format!("35 Hz attenuated by only {att:.1} dB"))?;

    let x = sine(5.0, fs, secs);
    let y = resample_channel(&x, fs, 50.0).map_err(|e| e.to_string())?;
    let ar = amplitude(&y[500..1000], 50.0, 5.0);
    ensure((ar - 1.0).abs() <= 0.01, format!("5 Hz amplitude {ar:.4} after resampling"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let epochs: Vec<Epoch> = (0..40)
        .map(|i| Epoch {
            window: Array2::from_shape_fn((5, 25), |(ch, _)| {
                let u: f64 = rng.random_range(-1.0..1.0);
                (ch as f64 + 1.0) * u.powi(3) + 10.0 * ch as f64
            }),
            tmin: -0.2,
            sfreq: 50.0,
            label: KeyClass::from_id(0).unwrap(),
            meta: EpochMeta {
                subject_id: 0,
                sentence_id: i,
                position: 0,
                pressed: 'a',
                target: 'a',
                is_typo: false,
                time: 0.0,
            },
        })
        .collect();
    let refs: Vec<&Epoch> = epochs.iter().collect();
    let scaler = RobustScaler::fit(&refs).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let scaled: Vec<Epoch> = epochs.iter().map(|e| scaler.transform(e, f64::INFINITY)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    for ch in 0..5 {
        let v: Vec<f64> = scaled.iter().flat_map(|e| e.window.row(ch).to_vec()).collect();
        let med = oracle_quantile(&v, 0.5);
        let iqr = oracle_quantile(&v, 0.75) - oracle_quantile(&v, 0.25);
        worst = worst.max(med.abs()).max((iqr - 1.0).abs());
    }
    ensure(worst <= 1e-9, format!("scaled median / IQR off by {worst:.2e}"))?;
    Ok(format!("5 Hz gain {a5:.4}, 35 Hz -{att:.1} dB, resampled gain {ar:.4}, scaler error {worst:.1e}"))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let mut worst_sim: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    for seed in 0..5u64 {
        let texts = unique_sentences(128, seed);
        let pairs: Vec<(u32, String)> = texts.iter().enumerate().map(|(i, s)| (i as u32, s.clone())).collect();
        let a = split_sentences(&pairs, 0.5, [0.8, 0.1, 0.1], seed).map_err(|e| e.to_string())?;
        let m = tfidf(&texts).map_err(|e| e.to_string())?;
        for i in 0..texts.len() {
            for j in i + 1..texts.len() {
                if a.of(i as u32) != a.of(j as u32) {
                    worst_sim = worst_sim.max(m.cosine(i, j));
                }
            }
        }
        let counts = a.counts();
        for (k, want) in [0.8, 0.1, 0.1].into_iter().enumerate() {
            worst_ratio = worst_ratio.max((counts[k] as f64 / 128.0 - want).abs());
        }
        ensure(a.ids(Split::Train).len() + a.ids(Split::Valid).len() + a.ids(Split::Test).len() == 128, "sentences lost in split")?;
    }
    ensure(worst_sim <= 0.5, format!("cross-split similarity {worst_sim:.3}"))?;
    ensure(worst_ratio <= 0.05, format!("split ratio off by {:.1} points", 100.0 * worst_ratio))?;
    Ok(format!(
        "5 corpora: max cross-split cosine {worst_sim:.3}, max ratio deviation {:.1} points",
        100.0 * worst_ratio
    ))
}

// ---------------------------------------------------------------- 6-8

struct Desk {
    _dir: tempfile::TempDir,
    out: PathBuf,
    report: EvalReport,
    secs: f64,
}

fn desk_run() -> Result<Desk, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("desk");
    let config = repo_path("configs/desk.json");
    let t0 = Instant::now();
    keydecode(&["run-all", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])?;
    let secs = t0.elapsed().as_secs_f64();
    let report = EvalReport::load_json(&out.join("report.json")).map_err(|e| e.to_string())?;
    Ok(Desk {
        _dir: dir,
        out,
        report,
        secs,
    })
}

fn criterion_6(d: &Desk) -> Outcome {
    let r = &d.report;
    let (c, dummy, nolm) = (metric(r, "cer")?, metric(r, "cer_dummy")?, metric(r, "cer_nolm")?);
    let delta = metric(r, "delta_cer_lm")?;
    ensure(dummy - c >= 0.20, format!("CER {c:.3} beats dummy {dummy:.3} by less than 20 points"))?;
    ensure(delta <= 0.0, format!("LM fusion worsens CER: {nolm:.3} -> {c:.3}"))?;
    ensure(d.secs < 1800.0, format!("run-all took {:.0} s", d.secs))?;
    Ok(format!("CER {c:.3} (no LM {nolm:.3}, dummy {dummy:.3}), delta {delta:+.3}, {:.0} s", d.secs))
}

fn criterion_7(d: &Desk) -> Outcome {
    let peak = metric(&d.report, "timecourse_hand_peak_s")?;
    let pre = metric(&d.report, "timecourse_hand_prepress_max_deviation")?;
    ensure((peak - 0.04).abs() <= 0.02 + 1e-9, format!("hand decoding peaks at {:.0} ms", peak * 1e3))?;
    ensure(pre <= 0.05, format!("pre-press accuracy departs {:.1} points from chance", pre * 100.0))?;
    Ok(format!("peak {:.0} ms, max pre-press deviation {:.1} points", peak * 1e3, pre * 100.0))
}

fn fraction_cer(d: &Desk, fraction: f64) -> Result<f64, String> {
    let out = d.out.with_file_name(format!("fraction_{fraction}"));
    copy_dir(&d.out, &out).map_err(|e| e.to_string())?;
    let config = repo_path("configs/desk.json");
    let f = fraction.to_string();
    for stage in ["train", "decode", "evaluate"] {
        keydecode(&[stage, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--train-fraction", &f])?;
    }
    let report = EvalReport::load_json(&out.join("eval_report.json")).map_err(|e| e.to_string())?;
    metric(&report, "cer")
}

fn criterion_8(d: &Desk) -> Outcome {
    let r = &d.report;
    let (typo, correct) = (metric(r, "cer_typo")?, metric(r, "cer_correct")?);
    ensure(typo >= correct, format!("CER on typos {typo:.3} below correct keystrokes {correct:.3}"))?;
    let (ratio, p) = (metric(r, "interval_ratio")?, metric_p(r, "interval_ratio")?);
    ensure((ratio - 2.0).abs() <= 0.2 && p < 0.01, format!("interval ratio {ratio:.2} (p {p:.4})"))?;
    let align = metric(r, "kmeans_hand_alignment")?;
    ensure(align >= 0.9, format!("k-means hand alignment {align:.3}"))?;
    let full = metric(r, "cer")?;
    let quarter = fraction_cer(d, 0.25)?;
    let half = fraction_cer(d, 0.5)?;
    ensure(quarter >= half && half >= full, format!("CER over fractions 0.25/0.5/1: {quarter:.3}/{half:.3}/{full:.3}"))?;
    Ok(format!(
        "CER typo {typo:.3} >= correct {correct:.3}; interval ratio {ratio:.2} (p {p:.4}); k-means {align:.3}; \
         CER by fraction {quarter:.3}/{half:.3}/{full:.3}"
    ))
}

// ---------------------------------------------------------------- 9

fn oracle_midranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let less = x.iter().filter(|w| *w < v).count() as f64;
            let equal = x.iter().filter(|w| *w == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn u_stat(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            u += if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 };
        }
    }
    u
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn criterion_9() -> Outcome {
    let fixtures: [([f64; 4], [f64; 4]); 4] = [
        ([0.0625, 0.25, 0.1875, 0.03125], [0.125, 0.25, 0.25, 0.125]),
        ([0.5, 0.6, 0.7, 0.8], [0.8, 0.8, 0.8, 0.8]),
        ([0.02, 0.02, 0.02, 0.02], [0.02, 0.02, 0.02, 0.02]),
        ([0.25, 0.0, 1.0, 0.375], [0.5, 0.0, 1.0, 0.5]),
    ];
    for (p, want) in &fixtures {
        let got = fdr(p).map_err(|e| e.to_string())?;
        ensure(got == want.to_vec(), format!("BH of {p:?} gave {got:?}, expected {want:?}"))?;
    }

    let n_perm = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let mut worst: f64 = 0.0;
    for trial in 0..6u64 {
        let n = 5 + (trial as usize % 4);
        // coarse values so that ties occur
        let x: Vec<f64> = (0..n).map(|_| (rng.random_range(0.0..4.0f64) * 2.0).round() / 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.random_range(-1.0..1.5f64)).collect();

        let na = n / 2;
        let (a, b) = x.split_at(na);
        let e = (na * (n - na)) as f64 / 2.0;
        let obs = (u_stat(a, b) - e).abs();
        let splits = subsets(n, na);
        let hits = splits
            .iter()
            .filter(|s| {
                let ga: Vec<f64> = s.iter().map(|&i| x[i]).collect();
                let gb: Vec<f64> = (0..n).filter(|i| !s.contains(i)).map(|i| x[i]).collect();
                (u_stat(&ga, &gb) - e).abs() >= obs - 1e-9
            })
            .count();
        let exact = hits as f64 / splits.len() as f64;
        let got = mannwhitney(a, b, n_perm, trial).map_err(|e| e.to_string())?.p;
        worst = worst.max((got - exact).abs());

        let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
        let ranks = oracle_midranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
        let half = ranks.iter().sum::<f64>() / 2.0;
        let w: f64 = ranks.iter().zip(&d).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
        let flips = 1u32 << d.len();
        let hits = (0..flips)
            .filter(|m| {
                let s: f64 = (0..d.len()).filter(|i| m >> i & 1 == 1).map(|i| ranks[i]).sum();
                (s - half).abs() >= (w - half).abs() - 1e-9
            })
            .count();
        let exact = hits as f64 / flips as f64;
        let got = wilcoxon(&x, &y, n_perm, trial).map_err(|e| e.to_string())?.p;
        worst = worst.max((got - exact).abs());

        let r = pearson_r(&x, &y).ok_or("constant fixture")?;
        let perms = permutations(n);
        let hits = perms
            .iter()
            .filter(|p| {
                let yp: Vec<f64> = p.iter().map(|&i| y[i]).collect();
                pearson_r(&x, &yp).unwrap_or(0.0).abs() >= r.abs() - 1e-9
            })
            .count();
        let exact = hits as f64 / perms.len() as f64;
        let got = pearson(&x, &y, n_perm, trial).map_err(|e| e.to_string())?.p;
        worst = worst.max((got - exact).abs());
    }
    ensure(worst <= 0.02, format!("permutation p off exact by {worst:.4}"))?;
    Ok(format!("4 BH fixtures exact; permutation p within {worst:.4} of exact over 18 tests"))
}

// ---------------------------------------------------------------- 10

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = repo_path("configs/tiny.json");
    let runs: Vec<PathBuf> = ["a", "b"].iter().map(|r| dir.path().join(r)).collect();
    for out in &runs {
        keydecode(&["run-all", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])?;
    }
    for name in ["predictions.csv", "report.json"] {
        let a = fs::read(runs[0].join(name)).map_err(|e| e.to_string())?;
        let b = fs::read(runs[1].join(name)).map_err(|e| e.to_string())?;
        ensure(a == b, format!("{name} differs between runs"))?;
    }
    Ok("predictions.csv and report.json byte-identical across two runs".into())
}

// ----------------------------------------------------------------

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful for this suite
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let names = [
        "oracle equivalences",
        "gradient check",
        "LM normalisation",
        "DSP probes",
        "split leakage",
        "end-to-end decoding",
        "time-resolved hand decoding",
        "analysis directions",
        "statistics fixtures",
        "reproducibility",
    ];
    let mut failed = 0;
    let mut report = |i: usize, outcome: Outcome, secs: f64| {
        match outcome {
            Ok(detail) => println!("criterion {:>2} {:<28} PASS  {detail} [{secs:.1}s]", i, names[i - 1]),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {:<28} FAIL  {detail} [{secs:.1}s]", i, names[i - 1]);
            }
        }
    };
    let timed = |f: &dyn Fn() -> Outcome| {
        let t0 = Instant::now();
        let o = guarded(f);
        (o, t0.elapsed().as_secs_f64())
    };

    let standalone: [(usize, fn() -> Outcome); 5] =
        [(1, criterion_1), (2, criterion_2), (3, criterion_3), (4, criterion_4), (5, criterion_5)];
    for (i, f) in standalone {
        let (o, s) = timed(&f);
        report(i, o, s);
    }
    let desk = catch_unwind(desk_run).unwrap_or_else(|_| Err("desk run panicked".into()));
    match &desk {
        Ok(d) => {
            for (i, f) in [(6, criterion_6 as fn(&Desk) -> Outcome), (7, criterion_7), (8, criterion_8)] {
                let (o, s) = timed(&|| f(d));
                report(i, o, s);
            }
        }
        Err(e) => {
            for i in 6..=8 {
                report(i, Err(format!("desk pipeline failed: {e}")), 0.0);
            }
        }
    }
    let (o, s) = timed(&criterion_9);
    report(9, o, s);
    let (o, s) = timed(&criterion_10);
    report(10, o, s);

    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
