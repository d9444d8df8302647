//! Alignment of typed keystrokes against the displayed sentence.
//!
//! Typed and target strings are aligned with recursive longest-common-
//! substring matching (Ratcliff/Obershelp). Each keystroke then receives the
//! character that should have been pressed, or none for an inserted key.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type SubjectId = u32;
pub type SentenceId = u32;

/// Characters that terminate a trial; never labelled.
pub const RETURN_KEYS: [char; 2] = ['\n', '\r'];

/// Sentences with strictly more edits than this are discarded.
pub const MAX_EDITS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditTag {
    Match,
    Substitute,
    Insert,
    Delete,
}

/// One aligned position. `pressed` is absent for deletions and `intended`
/// for insertions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlignedPair {
    pub pressed: Option<char>,
    pub intended: Option<char>,
    pub tag: EditTag,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub matches: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EditCounts {
    pub fn edits(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    pub fn of(pairs: &[AlignedPair]) -> Self {
        let mut c = EditCounts::default();
        for p in pairs {
            match p.tag {
                EditTag::Match => c.matches += 1,
                EditTag::Substitute => c.substitutions += 1,
                EditTag::Insert => c.insertions += 1,
                EditTag::Delete => c.deletions += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeystrokeEvent {
    /// Seconds from recording start.
    pub time: f64,
    pub pressed: char,
    pub target: Option<char>,
    pub is_typo: bool,
}

impl KeystrokeEvent {
    pub fn unlabeled(time: f64, pressed: char) -> Self {
        KeystrokeEvent {
            time,
            pressed,
            target: None,
            is_typo: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceTrial {
    pub subject_id: SubjectId,
    pub sentence_id: SentenceId,
    pub read_text: String,
    pub typed_text: String,
    pub events: Vec<KeystrokeEvent>,
}

impl SentenceTrial {
    /// Builds a trial from raw events, dropping a terminating return key.
    pub fn from_events(
        subject_id: SubjectId,
        sentence_id: SentenceId,
        read_text: &str,
        mut events: Vec<KeystrokeEvent>,
    ) -> Result<Self> {
        while events.last().is_some_and(|e| RETURN_KEYS.contains(&e.pressed)) {
            events.pop();
        }
        for w in events.windows(2) {
            if w[1].time <= w[0].time {
                return Err(Error::DataIntegrity(format!(
                    "subject {subject_id} sentence {sentence_id}: event times not strictly increasing ({} then {})",
                    w[0].time, w[1].time
                )));
            }
        }
        let typed_text = events.iter().map(|e| e.pressed.to_ascii_lowercase()).collect();
        Ok(SentenceTrial {
            subject_id,
            sentence_id,
            read_text: read_text.to_lowercase(),
            typed_text,
            events,
        })
    }

    pub fn edit_counts(&self) -> EditCounts {
        EditCounts::of(&align(&self.typed_text, &self.read_text))
    }
}

/// Aligns `typed` against `target`.
///
/// Every character of both strings appears exactly once in the output, in
/// order. When several longest common substrings exist the leftmost in the
/// target wins, then the leftmost in the typed string.
pub fn align(typed: &str, target: &str) -> Vec<AlignedPair> {
    let a: Vec<char> = typed.chars().collect();
    let b: Vec<char> = target.chars().collect();
    let mut blocks = Vec::new();
    matching_blocks(&a, &b, 0, a.len(), 0, b.len(), &mut blocks);
    blocks.sort_unstable();

    let mut out = Vec::with_capacity(a.len().max(b.len()));
    let (mut i, mut j) = (0, 0);
    for &(bi, bj, len) in blocks.iter().chain(std::iter::once(&(a.len(), b.len(), 0))) {
        emit_gap(&a[i..bi], &b[j..bj], &mut out);
        for k in 0..len {
            out.push(AlignedPair {
                pressed: Some(a[bi + k]),
                intended: Some(b[bj + k]),
                tag: EditTag::Match,
            });
        }
        i = bi + len;
        j = bj + len;
    }
    out
}

fn emit_gap(a: &[char], b: &[char], out: &mut Vec<AlignedPair>) {
    let common = a.len().min(b.len());
    for k in 0..common {
        out.push(AlignedPair {
            pressed: Some(a[k]),
            intended: Some(b[k]),
            tag: EditTag::Substitute,
        });
    }
    for &c in &a[common..] {
        out.push(AlignedPair {
            pressed: Some(c),
            intended: None,
            tag: EditTag::Insert,
        });
    }
    for &c in &b[common..] {
        out.push(AlignedPair {
            pressed: None,
            intended: Some(c),
            tag: EditTag::Delete,
        });
    }
}

fn matching_blocks(
    a: &[char],
    b: &[char],
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
    out: &mut Vec<(usize, usize, usize)>,
) {
    let (i, j, len) = longest_match(a, b, alo, ahi, blo, bhi);
    if len == 0 {
        return;
    }
    out.push((i, j, len));
    matching_blocks(a, b, alo, i, blo, j, out);
    matching_blocks(a, b, i + len, ahi, j + len, bhi, out);
}

/// Longest common substring of `a[alo..ahi]` and `b[blo..bhi]` by dynamic
/// programming over suffix lengths.
fn longest_match(
    a: &[char],
    b: &[char],
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
) -> (usize, usize, usize) {
    let width = bhi.saturating_sub(blo);
    let mut prev = vec![0usize; width + 1];
    let mut cur = vec![0usize; width + 1];
    let mut best = (alo, blo, 0usize);
    for i in alo..ahi {
        for j in blo..bhi {
            let k = j - blo + 1;
            cur[k] = if a[i] == b[j] { prev[k - 1] + 1 } else { 0 };
            let len = cur[k];
            if len > 0 {
                let (si, sj) = (i + 1 - len, j + 1 - len);
                let better = len > best.2 || (len == best.2 && (sj, si) < (best.1, best.0));
                if better {
                    best = (si, sj, len);
                }
            }
        }
        std::mem::swap(&mut prev, &mut cur);
        cur.iter_mut().for_each(|v| *v = 0);
    }
    best
}

/// Fills in `target`/`is_typo` on each event from the alignment of the typed
/// text to the read text.
pub fn label_events(trial: &SentenceTrial) -> Result<SentenceTrial> {
    let typed_len = trial.typed_text.chars().count();
    if typed_len != trial.events.len() {
        return Err(Error::DataIntegrity(format!(
            "subject {} sentence {}: {} events but typed text has {} characters",
            trial.subject_id,
            trial.sentence_id,
            trial.events.len(),
            typed_len
        )));
    }
    let pairs = align(&trial.typed_text, &trial.read_text);
    let mut out = trial.clone();
    let mut ev = out.events.iter_mut();
    for p in pairs.iter().filter(|p| p.pressed.is_some()) {
        let e = ev.next().expect("alignment covers every typed character");
        e.target = p.intended;
        e.is_typo = p.tag != EditTag::Match;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterReport {
    pub kept: usize,
    pub removed: usize,
}

impl FilterReport {
    pub fn removal_fraction(&self) -> f64 {
        let total = self.kept + self.removed;
        if total == 0 {
            0.0
        } else {
            self.removed as f64 / total as f64
        }
    }
}

/// Drops trials with more than [`MAX_EDITS`] edits.
pub fn filter_sentences(trials: Vec<SentenceTrial>) -> (Vec<SentenceTrial>, FilterReport) {
    let total = trials.len();
    let kept: Vec<_> = trials
        .into_iter()
        .filter(|t| t.edit_counts().edits() <= MAX_EDITS)
        .collect();
    let report = FilterReport {
        kept: kept.len(),
        removed: total - kept.len(),
    };
    (kept, report)
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    subject_id: SubjectId,
    sentence_id: SentenceId,
    time_s: f64,
    pressed: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SentenceRow {
    sentence_id: SentenceId,
    read_text: String,
}

pub fn write_sentences_csv<W: Write>(w: W, sentences: &[(SentenceId, String)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for (id, text) in sentences {
        wr.serialize(SentenceRow {
            sentence_id: *id,
            read_text: text.clone(),
        })?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_sentences_csv<R: Read>(r: R) -> Result<BTreeMap<SentenceId, String>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = BTreeMap::new();
    for row in rd.deserialize::<SentenceRow>() {
        let row = row?;
        out.insert(row.sentence_id, row.read_text);
    }
    Ok(out)
}

/// Writes raw keystrokes (including any terminating return) for each trial.
pub fn write_events_csv<'a, W: Write>(
    w: W,
    trials: impl IntoIterator<Item = (SubjectId, SentenceId, &'a [KeystrokeEvent])>,
) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for (subject_id, sentence_id, events) in trials {
        for e in events {
            wr.serialize(EventRow {
                subject_id,
                sentence_id,
                time_s: e.time,
                pressed: e.pressed.to_string(),
            })?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Reads the event table and groups consecutive rows into trials.
pub fn read_trials_csv<R: Read>(
    events: R,
    sentences: &BTreeMap<SentenceId, String>,
) -> Result<Vec<SentenceTrial>> {
    let mut rd = csv::Reader::from_reader(events);
    let mut groups: Vec<((SubjectId, SentenceId), Vec<KeystrokeEvent>)> = Vec::new();
    for row in rd.deserialize::<EventRow>() {
        let row = row?;
        let mut chars = row.pressed.chars();
        let pressed = match (chars.next(), chars.next()) {
            (Some(c), None) => c,
            _ => {
                return Err(Error::Format(format!(
                    "pressed column must hold one character, got {:?}",
                    row.pressed
                )))
            }
        };
        let key = (row.subject_id, row.sentence_id);
        match groups.last_mut() {
            Some((k, evs)) if *k == key => evs.push(KeystrokeEvent::unlabeled(row.time_s, pressed)),
            _ => groups.push((key, vec![KeystrokeEvent::unlabeled(row.time_s, pressed)])),
        }
    }
    groups
        .into_iter()
        .map(|((subject, sentence), evs)| {
            let text = sentences.get(&sentence).ok_or_else(|| {
                Error::DataIntegrity(format!("event references unknown sentence {sentence}"))
            })?;
            SentenceTrial::from_events(subject, sentence, text, evs)
        })
        .collect()
}
