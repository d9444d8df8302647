//! Behavioural and error analyses over decoded sentences.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cer::edits_per_target;
use super::stats::{mannwhitney, mean, pearson, sem, TestResult};
use crate::error::{Error, Result};
use crate::keyboard::{KeyClass, KeyboardLayout, N_CLASSES, N_LETTERS};
use crate::textalign::SentenceTrial;

/// Counts of (target, predicted) over position-aligned keystrokes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: Vec<Vec<u64>>,
}

impl Default for Confusion {
    fn default() -> Self {
        Confusion {
            counts: vec![vec![0; N_CLASSES]; N_CLASSES],
        }
    }
}

impl Confusion {
    pub fn add(&mut self, pred: &[KeyClass], target: &[KeyClass]) -> Result<()> {
        if pred.len() != target.len() {
            return Err(Error::Shape(format!("{} predictions for {} targets", pred.len(), target.len())));
        }
        for (p, t) in pred.iter().zip(target) {
            self.counts[t.id()][p.id()] += 1;
        }
        Ok(())
    }

    pub fn row_total(&self, target: usize) -> u64 {
        self.counts[target].iter().sum()
    }

    /// Per-class accuracy; `None` for classes never targeted.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        (0..N_CLASSES)
            .map(|c| {
                let n = self.row_total(c);
                (n > 0).then(|| self.counts[c][c] as f64 / n as f64)
            })
            .collect()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..N_CLASSES).map(|c| self.counts[c][c]).sum();
        let total: u64 = self.counts.iter().flatten().sum();
        diag as f64 / total.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceBin {
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    pub n_pairs: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceConfusion {
    pub bins: Vec<DistanceBin>,
    /// `None` when the letter confusions are all on the diagonal.
    pub test: Option<TestResult>,
}

/// Relates confusion between distinct letters to their keyboard distance.
///
/// Ordered letter pairs are binned by normalised distance into `n_bins`
/// equal-width bins over (0, 1]. A bin's rate is the mean confusion count of
/// its pairs divided by the total off-diagonal letter mass, so bins holding
/// many pairs are not favoured. Pearson r between bin centres and rates,
/// with a permutation p-value.
pub fn confusion_vs_distance(conf: &Confusion, layout: &KeyboardLayout, n_bins: usize, n_perm: usize, seed: u64) -> Result<DistanceConfusion> {
    if n_bins < 3 {
        return Err(Error::Parameter("need at least three distance bins".into()));
    }
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    let mut total = 0.0;
    for a in 0..N_LETTERS {
        for b in 0..N_LETTERS {
            if a == b {
                continue;
            }
            let d = layout.key_distance(KeyClass::from_id(a)?, KeyClass::from_id(b)?)?;
            let bin = ((d * n_bins as f64).ceil() as usize).clamp(1, n_bins) - 1;
            let c = conf.counts[a][b] as f64;
            sums[bin] += c;
            counts[bin] += 1;
            total += c;
        }
    }
    let width = 1.0 / n_bins as f64;
    let bins: Vec<DistanceBin> = (0..n_bins)
        .filter(|&i| counts[i] > 0)
        .map(|i| DistanceBin {
            lo: i as f64 * width,
            hi: (i + 1) as f64 * width,
            center: (i as f64 + 0.5) * width,
            n_pairs: counts[i],
            rate: if total > 0.0 { sums[i] / counts[i] as f64 / total } else { 0.0 },
        })
        .collect();
    if total == 0.0 {
        return Ok(DistanceConfusion { bins, test: None });
    }
    let x: Vec<f64> = bins.iter().map(|b| b.center).collect();
    let y: Vec<f64> = bins.iter().map(|b| b.rate).collect();
    let test = pearson(&x, &y, n_perm, seed)?;
    Ok(DistanceConfusion {
        test: test.statistic.is_finite().then_some(test),
        bins,
    })
}

/// One decoded sentence with a label per target keystroke (`None` leaves
/// the keystroke out of every group).
#[derive(Debug, Clone)]
pub struct GroupedSentence<'a> {
    pub pred: &'a [KeyClass],
    pub target: &'a [KeyClass],
    pub groups: Vec<Option<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    /// Attributed edits over keystrokes in the group, pooled over sentences.
    pub cer: f64,
    /// Standard error across sentences of the per-sentence group CER.
    pub sem: f64,
    /// Keystrokes in the group.
    pub n: usize,
    pub n_sentences: usize,
}

/// CER restricted to groups of target keystrokes. Edits of a minimal
/// alignment are charged to target positions (see
/// [`edits_per_target`](super::cer::edits_per_target)), so the
/// keystroke-weighted mean of the group CERs equals the pooled CER.
pub fn cer_by_group(items: &[GroupedSentence]) -> Result<Vec<GroupRow>> {
    let mut acc: BTreeMap<String, (usize, usize, Vec<f64>)> = BTreeMap::new();
    for (s, it) in items.iter().enumerate() {
        if it.groups.len() != it.target.len() {
            return Err(Error::DataIntegrity(format!(
                "sentence {s}: {} group labels for {} keystrokes",
                it.groups.len(),
                it.target.len()
            )));
        }
        let edits = edits_per_target(it.pred, it.target)?;
        let mut local: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for (e, g) in edits.iter().zip(&it.groups) {
            if let Some(g) = g {
                let l = local.entry(g).or_default();
                l.0 += e;
                l.1 += 1;
            }
        }
        for (g, (e, n)) in local {
            let a = acc.entry(g.to_string()).or_default();
            a.0 += e;
            a.1 += n;
            a.2.push(e as f64 / n as f64);
        }
    }
    Ok(acc
        .into_iter()
        .map(|(group, (e, n, per))| GroupRow {
            group,
            cer: e as f64 / n as f64,
            sem: sem(&per),
            n,
            n_sentences: per.len(),
        })
        .collect())
}

/// Word index of every keystroke; spaces belong to no word.
pub fn word_spans(target: &[KeyClass]) -> Vec<Option<usize>> {
    let mut w = 0;
    let mut in_word = false;
    target
        .iter()
        .map(|c| {
            if *c == KeyClass::SPACE {
                if in_word {
                    w += 1;
                }
                in_word = false;
                None
            } else {
                in_word = true;
                Some(w)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalStats {
    pub mean_correct: f64,
    pub sem_correct: f64,
    pub n_correct: usize,
    pub mean_typo: f64,
    pub sem_typo: f64,
    pub n_typo: usize,
    pub ratio: f64,
    pub test: TestResult,
}

/// Per keystroke, the sum of the intervals to the previous and next key
/// press within its sentence (only the existing one at either end).
pub fn keystroke_intervals(trial: &SentenceTrial) -> Vec<f64> {
    let t: Vec<f64> = trial.events.iter().map(|e| e.time).collect();
    let n = t.len();
    (0..n)
        .map(|i| {
            let before = if i > 0 { t[i] - t[i - 1] } else { 0.0 };
            let after = if i + 1 < n { t[i + 1] - t[i] } else { 0.0 };
            before + after
        })
        .collect()
}

/// Compares interval sums of typo and correctly typed keystrokes.
pub fn interkey_intervals(trials: &[SentenceTrial], n_perm: usize, seed: u64) -> Result<IntervalStats> {
    let (mut correct, mut typo) = (Vec::new(), Vec::new());
    for tr in trials.iter().filter(|t| t.events.len() >= 2) {
        for (e, iv) in tr.events.iter().zip(keystroke_intervals(tr)) {
            if e.is_typo {
                typo.push(iv);
            } else {
                correct.push(iv);
            }
        }
    }
    if correct.len() + typo.len() < 2 {
        return Err(Error::DataIntegrity("need at least two keystrokes with neighbours".into()));
    }
    if correct.is_empty() || typo.is_empty() {
        return Err(Error::DataIntegrity("need both typo and correct keystrokes".into()));
    }
    let test = mannwhitney(&typo, &correct, n_perm, seed)?;
    Ok(IntervalStats {
        mean_correct: mean(&correct),
        sem_correct: sem(&correct),
        n_correct: correct.len(),
        mean_typo: mean(&typo),
        sem_typo: sem(&typo),
        n_typo: typo.len(),
        ratio: mean(&typo) / mean(&correct),
        test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFrequencyRow {
    pub class: char,
    pub frequency: f64,
    pub accuracy: f64,
    pub n: u64,
}

/// Class frequency against per-class accuracy (classes with targets only),
/// with a Pearson test when at least three classes occur.
pub fn frequency_vs_accuracy(conf: &Confusion, n_perm: usize, seed: u64) -> Result<(Vec<ClassFrequencyRow>, Option<TestResult>)> {
    let total: u64 = conf.counts.iter().flatten().sum();
    let acc = conf.per_class_accuracy();
    let rows: Vec<ClassFrequencyRow> = KeyClass::all()
        .filter_map(|c| {
            acc[c.id()].map(|a| ClassFrequencyRow {
                class: c.glyph(),
                frequency: conf.row_total(c.id()) as f64 / total as f64,
                accuracy: a,
                n: conf.row_total(c.id()),
            })
        })
        .collect();
    let test = if rows.len() >= 3 {
        let x: Vec<f64> = rows.iter().map(|r| r.frequency).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
        let t = pearson(&x, &y, n_perm, seed)?;
        t.statistic.is_finite().then_some(t)
    } else {
        None
    };
    Ok((rows, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyboard::classify_str;
    use crate::metrics::cer::levenshtein;
    use crate::textalign::KeystrokeEvent;
    use proptest::prelude::*;

    #[test]
    fn distance_fixture_gives_strong_negative_r() {
        let layout = KeyboardLayout::qwerty();
        let mut conf = Confusion::default();
        for a in 0..26 {
            conf.counts[a][a] = 1000;
            for b in 0..26 {
                if a != b {
                    let d = layout.key_distance(KeyClass::from_id(a).unwrap(), KeyClass::from_id(b).unwrap()).unwrap();
                    conf.counts[a][b] = (1000.0 * (1.0 - d)).round() as u64;
                }
            }
        }
        let r = confusion_vs_distance(&conf, &layout, 10, 2000, 0).unwrap();
        let t = r.test.unwrap();
        assert!(t.statistic < -0.95, "r = {}", t.statistic);
        let mass: f64 = r.bins.iter().map(|b| b.rate * b.n_pairs as f64).sum();
        assert!((mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identity_confusion_is_undefined() {
        let mut conf = Confusion::default();
        for a in 0..29 {
            conf.counts[a][a] = 5;
        }
        let r = confusion_vs_distance(&conf, &KeyboardLayout::qwerty(), 10, 100, 0).unwrap();
        assert!(r.test.is_none());
    }

    #[test]
    fn confusion_rows_match_target_counts() {
        let mut conf = Confusion::default();
        let t = classify_str("hola mundo");
        let p = classify_str("hila nundo");
        conf.add(&p, &t).unwrap();
        for c in KeyClass::all() {
            assert_eq!(conf.row_total(c.id()), t.iter().filter(|x| **x == c).count() as u64);
        }
        assert!((conf.accuracy() - 0.8).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn group_cers_average_to_pooled(
            sents in proptest::collection::vec(
                (proptest::collection::vec(0usize..4, 0..9), proptest::collection::vec((0usize..4, any::<bool>()), 1..9)),
                1..6)
        ) {
            let cls = |v: &[usize]| v.iter().map(|&c| KeyClass::from_id(c).unwrap()).collect::<Vec<_>>();
            let owned: Vec<(Vec<KeyClass>, Vec<KeyClass>, Vec<Option<String>>)> = sents
                .iter()
                .map(|(p, t)| {
                    let tc: Vec<usize> = t.iter().map(|x| x.0).collect();
                    let g = t.iter().map(|x| Some(if x.1 { "a" } else { "b" }.to_string())).collect();
                    (cls(p), cls(&tc), g)
                })
                .collect();
            let items: Vec<GroupedSentence> = owned.iter().map(|(p, t, g)| GroupedSentence { pred: p, target: t, groups: g.clone() }).collect();
            let rows = cer_by_group(&items).unwrap();
            let n: usize = rows.iter().map(|r| r.n).sum();
            let weighted: f64 = rows.iter().map(|r| r.cer * r.n as f64).sum::<f64>() / n as f64;
            let dist: usize = owned.iter().map(|(p, t, _)| levenshtein(p, t)).sum();
            let total: usize = owned.iter().map(|(_, t, _)| t.len()).sum();
            prop_assert!((weighted - dist as f64 / total as f64).abs() < 1e-9);

            let single: Vec<GroupedSentence> = owned.iter().map(|(p, t, _)| GroupedSentence { pred: p, target: t, groups: vec![Some("all".into()); t.len()] }).collect();
            let one = cer_by_group(&single).unwrap();
            prop_assert_eq!(one.len(), 1);
            prop_assert!((one[0].cer - dist as f64 / total as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_grouping_is_rejected() {
        let t = classify_str("abc");
        let items = [GroupedSentence {
            pred: &t,
            target: &t,
            groups: vec![None],
        }];
        assert!(cer_by_group(&items).is_err());
    }

    #[test]
    fn words() {
        let w = word_spans(&classify_str("el  gato"));
        assert_eq!(w, vec![Some(0), Some(0), None, None, Some(1), Some(1), Some(1), Some(1)]);
    }

    fn trial(times: &[f64], typos: &[bool]) -> SentenceTrial {
        SentenceTrial {
            subject_id: 0,
            sentence_id: 0,
            read_text: "x".repeat(times.len()),
            typed_text: "x".repeat(times.len()),
            events: times
                .iter()
                .zip(typos)
                .map(|(&time, &is_typo)| KeystrokeEvent {
                    time,
                    pressed: 'x',
                    target: Some('x'),
                    is_typo,
                })
                .collect(),
        }
    }

    #[test]
    fn boundary_keystrokes_use_one_interval() {
        let t = trial(&[0.0, 0.2, 0.5, 0.6], &[false; 4]);
        let iv = keystroke_intervals(&t);
        let want = [0.2, 0.5, 0.4, 0.1];
        for (a, b) in iv.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_events() {
        assert!(interkey_intervals(&[trial(&[0.0], &[true])], 100, 0).is_err());
    }
}
