//! Leakage-free train/valid/test splits from TF-IDF similarity.

use keydecode::corpus::unique_sentences;
use keydecode::splitter::{split_sentences, tfidf, Split};

fn main() -> keydecode::Result<()> {
    let texts = unique_sentences(128, 4);
    let pairs: Vec<(u32, String)> = texts.iter().cloned().enumerate().map(|(i, t)| (i as u32, t)).collect();
    let a = split_sentences(&pairs, 0.5, [0.8, 0.1, 0.1], 4)?;
    let [tr, va, te] = a.counts();
    println!("train {tr}, valid {va}, test {te}");

    let m = tfidf(&texts)?;
    let mut worst = (0.0, 0, 0);
    for i in 0..texts.len() {
        for j in i + 1..texts.len() {
            if a.of(i as u32) != a.of(j as u32) && m.cosine(i, j) > worst.0 {
                worst = (m.cosine(i, j), i, j);
            }
        }
    }
    println!("most similar pair across splits ({:.3}):", worst.0);
    println!("  {}\n  {}", texts[worst.1], texts[worst.2]);
    for id in a.ids(Split::Test).iter().take(3) {
        println!("test: {}", texts[*id as usize]);
    }
    Ok(())
}
