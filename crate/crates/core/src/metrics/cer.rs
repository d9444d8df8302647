//! Character and hand error rates.

use crate::error::{Error, Result};
use crate::keyboard::{KeyClass, KeyboardLayout};

/// Unit-cost Levenshtein distance.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance over target length.
pub fn cer<T: PartialEq>(pred: &[T], target: &[T]) -> Result<f64> {
    if target.is_empty() {
        return Err(Error::Domain("CER is undefined for an empty target".into()));
    }
    Ok(levenshtein(pred, target) as f64 / target.len() as f64)
}

/// Edits of one minimal alignment charged to target positions.
/// Substitutions and deletions count at their own position; an inserted
/// prediction counts at the next target position (the last one at the end).
/// The counts sum to the edit distance.
pub fn edits_per_target<T: PartialEq>(pred: &[T], target: &[T]) -> Result<Vec<usize>> {
    if target.is_empty() {
        return Err(Error::Domain("cannot attribute edits to an empty target".into()));
    }
    let (n, m) = (pred.len(), target.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(pred[i - 1] != target[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut out = vec![0; m];
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + usize::from(pred[i - 1] != target[j - 1]) {
            out[j - 1] += usize::from(pred[i - 1] != target[j - 1]);
            i -= 1;
            j -= 1;
        } else if j > 0 && d[i][j] == d[i][j - 1] + 1 {
            out[j - 1] += 1;
            j -= 1;
        } else {
            out[j.min(m - 1)] += 1;
            i -= 1;
        }
    }
    Ok(out)
}

/// Fraction of letter positions whose predicted key is typed by the other
/// hand. Positions where either side is not a letter are skipped.
pub fn her(pred: &[KeyClass], target: &[KeyClass], layout: &KeyboardLayout) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!("{} predictions for {} targets", pred.len(), target.len())));
    }
    let (mut wrong, mut n) = (0usize, 0usize);
    for (p, t) in pred.iter().zip(target) {
        if p.is_letter() && t.is_letter() {
            n += 1;
            wrong += usize::from(layout.hand_of(*p)? != layout.hand_of(*t)?);
        }
    }
    if n == 0 {
        return Err(Error::Domain("no letter positions to score".into()));
    }
    Ok(wrong as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyboard::classify_str;
    use proptest::prelude::*;

    /// Minimum over every edit script, by exhaustive recursion.
    fn brute(a: &[u8], b: &[u8]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ra)), Some((y, rb))) => {
                let sub = brute(ra, rb) + usize::from(x != y);
                sub.min(brute(ra, b) + 1).min(brute(a, rb) + 1)
            }
        }
    }

    #[test]
    fn examples() {
        assert_eq!(cer(b"abc", b"abc").unwrap(), 0.0);
        assert!((cer(b"ab", b"abc").unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(cer::<u8>(b"ab", b"").is_err());
    }

    #[test]
    fn exhaustive_over_three_symbols_up_to_four() {
        // all pairs up to length 4 here; the full length-7 sweep runs in the
        // acceptance suite
        let mut seqs: Vec<Vec<u8>> = vec![vec![]];
        for len in 1..=4 {
            for code in 0..3usize.pow(len) {
                seqs.push((0..len).map(|i| (code / 3usize.pow(i) % 3) as u8).collect());
            }
        }
        for a in &seqs {
            for b in &seqs {
                assert_eq!(levenshtein(a, b), brute(a, b));
            }
        }
    }

    proptest! {
        #[test]
        fn attribution_sums_to_distance(a in proptest::collection::vec(0u8..3, 0..8), b in proptest::collection::vec(0u8..3, 1..8)) {
            let e = edits_per_target(&a, &b).unwrap();
            prop_assert_eq!(e.len(), b.len());
            prop_assert_eq!(e.iter().sum::<usize>(), levenshtein(&a, &b));
        }
    }

    #[test]
    fn hand_errors() {
        let l = KeyboardLayout::qwerty();
        let t = classify_str("qwerty asdf");
        assert_eq!(her(&t, &t, &l).unwrap(), 0.0);
        let q = classify_str("qqqqq");
        let p = classify_str("ppppp");
        assert_eq!(her(&q, &p, &l).unwrap(), 1.0);
        // one flip among ten letters, non-letters ignored
        let target = classify_str("abcde fghij");
        let pred = classify_str("abcde#fghip");
        assert!((her(&pred, &target, &l).unwrap() - 0.0).abs() < 1e-15);
        let pred = classify_str("abcde fghiq");
        assert!((her(&pred, &target, &l).unwrap() - 0.1).abs() < 1e-15);
        assert!(her(&q, &t, &l).is_err());
    }
}
