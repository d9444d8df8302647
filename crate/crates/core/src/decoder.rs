//! Beam-search shallow fusion of classifier logits with the n-gram model.
//!
//! Each step adds `log_softmax(logits) + alpha * ln P_lm(c | history)` for
//! the chosen class. Hypotheses at a step all have the same length, so no
//! length normalisation is applied.

use std::cmp::Ordering;

use crate::charlm::NgramModel;
use crate::error::{Error, Result};
use crate::keyboard::{render, KeyClass, N_CLASSES};
use crate::neural::{Batch, DecoderModel, Sentence};

pub const DEFAULT_BEAM: usize = 30;
pub const DEFAULT_ALPHA: f64 = 5.0;

/// Natural-log softmax of one logit row.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

/// Per-class fusion score.
pub fn fuse(logits: &[f64], lm_logprobs: &[f64], alpha: f64) -> Vec<f64> {
    log_softmax(logits).iter().zip(lm_logprobs).map(|(t, l)| t + alpha * l).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub sequence: Vec<usize>,
    pub score: f64,
}

fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.sequence.last().cmp(&b.sequence.last()))
        .then_with(|| a.sequence.cmp(&b.sequence))
}

/// Breadth-first beam search over an arbitrary alphabet. `lm` returns the
/// next-symbol log-probabilities for a prefix; with `alpha == 0` it is never
/// called. Returns the surviving hypotheses, best first.
pub fn beam_search_with<F>(logits: &[Vec<f64>], beam: usize, alpha: f64, mut lm: F) -> Result<Vec<Hypothesis>>
where
    F: FnMut(&[usize]) -> Vec<f64>,
{
    if beam < 1 {
        return Err(Error::Parameter("beam width must be at least 1".into()));
    }
    if logits.is_empty() {
        return Err(Error::Parameter("cannot decode an empty sequence".into()));
    }
    if alpha < 0.0 {
        return Err(Error::Parameter(format!("alpha must be non-negative, got {alpha}")));
    }
    let v = logits[0].len();
    let mut beams = vec![Hypothesis {
        sequence: Vec::new(),
        score: 0.0,
    }];
    for row in logits {
        if row.len() != v {
            return Err(Error::Shape("logit rows differ in width".into()));
        }
        let trans = log_softmax(row);
        let mut next = Vec::with_capacity(beams.len() * v);
        for h in &beams {
            let lmp = if alpha == 0.0 { vec![0.0; v] } else { lm(&h.sequence) };
            for c in 0..v {
                let mut seq = h.sequence.clone();
                seq.push(c);
                next.push(Hypothesis {
                    sequence: seq,
                    score: h.score + trans[c] + alpha * lmp[c],
                });
            }
        }
        next.sort_by(rank);
        next.truncate(beam);
        beams = next;
    }
    Ok(beams)
}

/// Beam search with the character model over the 29 classes.
pub fn beam_search(logits: &[Vec<f64>], lm: &NgramModel, beam: usize, alpha: f64) -> Result<Hypothesis> {
    if logits.iter().any(|r| r.len() != N_CLASSES) {
        return Err(Error::Shape(format!("expected {N_CLASSES} logits per keystroke")));
    }
    let beams = beam_search_with(logits, beam, alpha, |prefix| {
        let hist: Vec<KeyClass> = prefix.iter().map(|&c| KeyClass::from_id(c).unwrap()).collect();
        lm.logprobs_syms(&lm.context(&hist)).to_vec()
    })?;
    Ok(beams.into_iter().next().unwrap())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub classes: Vec<KeyClass>,
    /// Rendered with `#` for numbers and `*` for other symbols.
    pub text: String,
    pub score: f64,
}

/// Runs the classifier over one sentence and decodes it. Without a language
/// model this is the per-keystroke argmax, scored by its log-softmax sum.
pub fn decode_sentence(model: &DecoderModel, lm: Option<&NgramModel>, sentence: &Sentence, beam: usize, alpha: f64) -> Result<Decoded> {
    let logits = model.logits(&Batch::new(&[sentence]))?;
    let rows: Vec<Vec<f64>> = logits.rows().into_iter().map(|r| r.to_vec()).collect();
    let (seq, score) = match lm {
        Some(lm) => {
            let h = beam_search(&rows, lm, beam, alpha)?;
            (h.sequence, h.score)
        }
        None => {
            let seq = greedy(&rows);
            let score = rows.iter().zip(&seq).map(|(r, &c)| log_softmax(r)[c]).sum();
            (seq, score)
        }
    };
    let classes = to_classes(&seq);
    Ok(Decoded {
        text: render(&classes),
        classes,
        score,
    })
}

/// Per-position argmax, lowest class id on ties.
pub fn greedy(logits: &[Vec<f64>]) -> Vec<usize> {
    logits
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
                .0
        })
        .collect()
}

pub fn to_classes(seq: &[usize]) -> Vec<KeyClass> {
    seq.iter().map(|&c| KeyClass::from_id(c).expect("class id")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::DecoderConfig;
    use crate::signal::sensor_layout;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn toy_lm(table: &[[f64; 3]; 4]) -> impl Fn(&[usize]) -> Vec<f64> + '_ {
        // bigram table; row 3 is the sentence start
        move |prefix: &[usize]| table[prefix.last().copied().unwrap_or(3)].to_vec()
    }

    fn random_table(rng: &mut impl Rng) -> [[f64; 3]; 4] {
        let mut t = [[0.0; 3]; 4];
        for row in &mut t {
            let w: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 0.05).collect();
            let s: f64 = w.iter().sum();
            for (c, x) in row.iter_mut().enumerate() {
                *x = (w[c] / s).ln();
            }
        }
        t
    }

    fn exhaustive(logits: &[Vec<f64>], alpha: f64, lm: &dyn Fn(&[usize]) -> Vec<f64>) -> Hypothesis {
        let n = logits.len();
        let mut all = Vec::new();
        for code in 0..3usize.pow(n as u32) {
            let seq: Vec<usize> = (0..n).map(|i| code / 3usize.pow((n - 1 - i) as u32) % 3).collect();
            let mut score = 0.0;
            for i in 0..n {
                let t = log_softmax(&logits[i]);
                score += t[seq[i]] + alpha * lm(&seq[..i])[seq[i]];
            }
            all.push(Hypothesis { sequence: seq, score });
        }
        all.sort_by(rank);
        all.swap_remove(0)
    }

    #[test]
    fn fuse_matches_hand_computation() {
        let logits = [1.0, -2.0, 0.5];
        let lm = [-0.2, -1.5, -3.0];
        let z: f64 = logits.iter().map(|l: &f64| l.exp()).sum();
        let got = fuse(&logits, &lm, 5.0);
        for i in 0..3 {
            let want = (logits[i].exp() / z).ln() + 5.0 * lm[i];
            assert!((got[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_logits_follow_lm() {
        let f = fuse(&[0.3; 4], &[-2.0, -0.1, -1.0, -5.0], 5.0);
        assert_eq!(greedy(&[f]), vec![1]);
    }

    #[test]
    fn rejects_zero_beam() {
        assert!(matches!(beam_search_with(&[vec![0.0; 3]], 0, 1.0, |_| vec![0.0; 3]), Err(Error::Parameter(_))));
    }

    proptest! {
        #[test]
        fn full_beam_equals_exhaustive(seed in 0u64..10_000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let logits: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let table = random_table(&mut rng);
            let lm = toy_lm(&table);
            let got = beam_search_with(&logits, 81, 5.0, &lm).unwrap().swap_remove(0);
            let want = exhaustive(&logits, 5.0, &lm);
            prop_assert_eq!(&got.sequence, &want.sequence);
            prop_assert!((got.score - want.score).abs() < 1e-12);
        }

        #[test]
        fn narrow_beam_never_beats_exhaustive(seed in 0u64..10_000, beam in 1usize..10) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let logits: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let table = random_table(&mut rng);
            let lm = toy_lm(&table);
            let got = beam_search_with(&logits, beam, 5.0, &lm).unwrap().swap_remove(0);
            prop_assert!(got.score <= exhaustive(&logits, 5.0, &lm).score + 1e-12);
        }

        #[test]
        fn alpha_zero_is_greedy(seed in 0u64..10_000, beam in 1usize..5) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let logits: Vec<Vec<f64>> = (0..6).map(|_| (0..29).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let h = beam_search_with(&logits, beam, 0.0, |_| unreachable!()).unwrap().swap_remove(0);
            prop_assert_eq!(h.sequence, greedy(&logits));
        }

        #[test]
        fn score_decomposes_and_never_increases(seed in 0u64..10_000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let logits: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let table = random_table(&mut rng);
            let lm = toy_lm(&table);
            let h = beam_search_with(&logits, 4, 2.0, &lm).unwrap().swap_remove(0);
            let mut total = 0.0;
            for i in 0..5 {
                let step = fuse(&logits[i], &lm(&h.sequence[..i]), 2.0)[h.sequence[i]];
                prop_assert!(step <= 0.0);
                total += step;
            }
            prop_assert!((total - h.score).abs() < 1e-9);
        }
    }

    #[test]
    fn ngram_beam_is_deterministic() {
        let lm = NgramModel::fit("la casa\nla cosa\nel caso", 3, 0.75).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let logits: Vec<Vec<f64>> = (0..7).map(|_| (0..29).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let a = beam_search(&logits, &lm, 30, 5.0).unwrap();
        let b = beam_search(&logits, &lm, 30, 5.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lm_repairs_a_flat_position() {
        let lm = NgramModel::fit(&["la casa"; 20].join("\n"), 4, 0.75).unwrap();
        // confident on every key except the fourth, which is flat
        let target = crate::keyboard::classify_str("la casa");
        let logits: Vec<Vec<f64>> = target
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut r = vec![0.0; 29];
                if i != 3 {
                    r[c.id()] = 6.0;
                }
                r
            })
            .collect();
        let h = beam_search(&logits, &lm, 30, 5.0).unwrap();
        assert_eq!(to_classes(&h.sequence), target);
        assert_ne!(greedy(&logits)[3], target[3].id());
    }

    #[test]
    fn decode_sentence_is_deterministic() {
        let c = DecoderConfig {
            n_sensors: 4,
            t: 5,
            d_spatial: 4,
            n_fourier: 4,
            h: 8,
            n_conv_blocks: 1,
            n_transformer_layers: 1,
            ..Default::default()
        };
        let model = DecoderModel::new(c, &sensor_layout(4)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let x = ndarray::Array2::from_shape_fn((15, 4), |_| rng.random::<f64>() - 0.5);
        let s = Sentence { subject: 0, x, labels: vec![0, 1, 2] };
        let lm = NgramModel::fit("la casa es grande\nel perro come\n", 3, 0.75).unwrap();
        let a = decode_sentence(&model, Some(&lm), &s, 30, 5.0).unwrap();
        assert_eq!(a, decode_sentence(&model, Some(&lm), &s, 30, 5.0).unwrap());
        assert_eq!(a.text.chars().count(), 3);
        let plain = decode_sentence(&model, None, &s, 30, 5.0).unwrap();
        let zero = decode_sentence(&model, Some(&lm), &s, 30, 0.0).unwrap();
        assert_eq!(plain.classes, zero.classes);
        assert!((plain.score - zero.score).abs() < 1e-9);
    }
}
