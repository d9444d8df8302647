//! The 29-class key space and QWERTY geometry.
//!
//! Letters `a..z` take ids `0..=25` in alphabetical order, followed by
//! space (26), numbers (27) and every other character (28).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_CLASSES: usize = 29;
pub const N_LETTERS: usize = 26;
pub const SPACE_ID: u8 = 26;
pub const NUMBER_ID: u8 = 27;
pub const SPECIAL_ID: u8 = 28;

const ROWS: [&str; 3] = ["qwertyuiop", "asdfghjkl", "zxcvbnm"];
const ROW_STAGGER: [f64; 3] = [0.0, 0.25, 0.75];
const RIGHT_HAND: &str = "yuiophjklnmb";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeyKind {
    Letter(char),
    Space,
    Number,
    Special,
}

/// One of the 29 decoder classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyClass(u8);

impl KeyClass {
    pub const SPACE: KeyClass = KeyClass(SPACE_ID);
    pub const NUMBER: KeyClass = KeyClass(NUMBER_ID);
    pub const SPECIAL: KeyClass = KeyClass(SPECIAL_ID);

    pub fn from_id(id: usize) -> Result<Self> {
        if id < N_CLASSES {
            Ok(KeyClass(id as u8))
        } else {
            Err(Error::Domain(format!("class id {id} outside 0..{N_CLASSES}")))
        }
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }

    pub fn kind(self) -> KeyKind {
        match self.0 {
            SPACE_ID => KeyKind::Space,
            NUMBER_ID => KeyKind::Number,
            SPECIAL_ID => KeyKind::Special,
            l => KeyKind::Letter((b'a' + l) as char),
        }
    }

    pub fn is_letter(self) -> bool {
        (self.0 as usize) < N_LETTERS
    }

    pub fn letter(self) -> Option<char> {
        match self.kind() {
            KeyKind::Letter(c) => Some(c),
            _ => None,
        }
    }

    /// Printable glyph: letters and space as themselves, `#` for the number
    /// class and `*` for the special class.
    pub fn glyph(self) -> char {
        match self.kind() {
            KeyKind::Letter(c) => c,
            KeyKind::Space => ' ',
            KeyKind::Number => '#',
            KeyKind::Special => '*',
        }
    }

    pub fn all() -> impl Iterator<Item = KeyClass> {
        (0..N_CLASSES as u8).map(KeyClass)
    }
}

impl fmt::Display for KeyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.glyph())
    }
}

/// Maps any character to its class. Letters are case-folded first.
pub fn classify_key(c: char) -> KeyClass {
    let lower = c.to_ascii_lowercase();
    match lower {
        'a'..='z' => KeyClass(lower as u8 - b'a'),
        ' ' => KeyClass::SPACE,
        '0'..='9' => KeyClass::NUMBER,
        _ => KeyClass::SPECIAL,
    }
}

pub fn classify_str(s: &str) -> Vec<KeyClass> {
    s.chars().map(classify_key).collect()
}

/// Inverse of [`render`]: `#` reads back as the number class.
pub fn parse_rendered(s: &str) -> Vec<KeyClass> {
    s.chars()
        .map(|c| if c == '#' { KeyClass::NUMBER } else { classify_key(c) })
        .collect()
}

/// Renders a class sequence with [`KeyClass::glyph`].
pub fn render(classes: &[KeyClass]) -> String {
    classes.iter().map(|k| k.glyph()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hand {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyPosition {
    pub x: f64,
    pub y: f64,
}

/// Letter-key coordinates in key units plus the hand split.
#[derive(Debug, Clone)]
pub struct KeyboardLayout {
    positions: [KeyPosition; N_LETTERS],
    hands: [Hand; N_LETTERS],
    max_pairwise_distance: f64,
}

impl Default for KeyboardLayout {
    fn default() -> Self {
        Self::qwerty()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OverrideEntry {
    Tuple(f64, f64, Hand),
}

impl KeyboardLayout {
    pub fn qwerty() -> Self {
        let mut positions = [KeyPosition { x: 0.0, y: 0.0 }; N_LETTERS];
        let mut hands = [Hand::Left; N_LETTERS];
        for (row, keys) in ROWS.iter().enumerate() {
            for (col, c) in keys.chars().enumerate() {
                let i = (c as u8 - b'a') as usize;
                positions[i] = KeyPosition {
                    x: ROW_STAGGER[row] + col as f64,
                    y: row as f64,
                };
                if RIGHT_HAND.contains(c) {
                    hands[i] = Hand::Right;
                }
            }
        }
        Self::from_parts(positions, hands)
    }

    fn from_parts(positions: [KeyPosition; N_LETTERS], hands: [Hand; N_LETTERS]) -> Self {
        let mut max = 0.0f64;
        for a in 0..N_LETTERS {
            for b in a + 1..N_LETTERS {
                max = max.max(euclid(positions[a], positions[b]));
            }
        }
        KeyboardLayout {
            positions,
            hands,
            max_pairwise_distance: max,
        }
    }

    /// Loads a layout override: a JSON object mapping each of the 26 letters
    /// to `[x, y, "left"|"right"]`.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let entries: BTreeMap<String, OverrideEntry> = serde_json::from_str(text)?;
        let mut positions = [None; N_LETTERS];
        let mut hands = [Hand::Left; N_LETTERS];
        for (key, entry) in entries {
            let mut chars = key.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(Error::Format(format!("layout key {key:?} is not a single letter")));
            };
            let class = classify_key(c);
            if !class.is_letter() {
                return Err(Error::Format(format!("layout key {key:?} is not a letter")));
            }
            let OverrideEntry::Tuple(x, y, hand) = entry;
            positions[class.id()] = Some(KeyPosition { x, y });
            hands[class.id()] = hand;
        }
        let mut resolved = [KeyPosition { x: 0.0, y: 0.0 }; N_LETTERS];
        for (i, p) in positions.iter().enumerate() {
            resolved[i] = p.ok_or_else(|| {
                Error::Format(format!("layout is missing letter {}", (b'a' + i as u8) as char))
            })?;
        }
        let layout = Self::from_parts(resolved, hands);
        if layout.max_pairwise_distance <= 0.0 {
            return Err(Error::Format("layout places every letter at one point".into()));
        }
        Ok(layout)
    }

    pub fn max_pairwise_distance(&self) -> f64 {
        self.max_pairwise_distance
    }

    pub fn position(&self, k: KeyClass) -> Result<KeyPosition> {
        letter_index(k).map(|i| self.positions[i])
    }

    pub fn hand_of(&self, k: KeyClass) -> Result<Hand> {
        letter_index(k).map(|i| self.hands[i])
    }

    pub fn hand_of_char(&self, c: char) -> Result<Hand> {
        self.hand_of(classify_key(c))
    }

    /// Euclidean distance normalised by the largest letter-pair distance.
    pub fn key_distance(&self, a: KeyClass, b: KeyClass) -> Result<f64> {
        let (pa, pb) = (self.position(a)?, self.position(b)?);
        Ok(euclid(pa, pb) / self.max_pairwise_distance)
    }

    /// Letters whose raw distance to `k` is at most `radius` key units,
    /// excluding `k` itself, in id order.
    pub fn neighbours(&self, k: KeyClass, radius: f64) -> Result<Vec<KeyClass>> {
        let p = self.position(k)?;
        Ok((0..N_LETTERS)
            .filter(|&j| j != k.id() && euclid(p, self.positions[j]) <= radius + 1e-12)
            .map(|j| KeyClass(j as u8))
            .collect())
    }
}

fn letter_index(k: KeyClass) -> Result<usize> {
    if k.is_letter() {
        Ok(k.id())
    } else {
        Err(Error::Domain(format!("{:?} is not a letter key", k.kind())))
    }
}

fn euclid(a: KeyPosition, b: KeyPosition) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

/// Convenience wrapper over the default QWERTY layout.
pub fn hand_of(c: char) -> Result<Hand> {
    KeyboardLayout::qwerty().hand_of_char(c)
}
