//! Fusing noisy classifier outputs with the language model by beam search.

use std::collections::HashSet;

use keydecode::charlm::NgramModel;
use keydecode::corpus::corpus_text;
use keydecode::decoder::{beam_search, greedy, to_classes};
use keydecode::keyboard::{classify_str, render};
use keydecode::metrics::cer;
use keydecode::N_CLASSES;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> keydecode::Result<()> {
    let target = classify_str("la vecina compra un coche rojo");
    let exclude: HashSet<String> = HashSet::new();
    let lm = NgramModel::fit(&corpus_text(500_000, 3, &exclude), 9, 0.75)?;

    // a weak classifier: the right key gets a small bump over noise
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let logits: Vec<Vec<f64>> = target
        .iter()
        .map(|k| (0..N_CLASSES).map(|c| rng.random_range(0.0..1.0) + if c == k.id() { 0.8 } else { 0.0 }).collect())
        .collect();

    let plain = to_classes(&greedy(&logits));
    println!("target  {}", render(&target));
    println!("argmax  {}  CER {:.3}", render(&plain), cer(&plain, &target)?);
    for alpha in [0.5, 2.0, 5.0] {
        let h = beam_search(&logits, &lm, 30, alpha)?;
        let fused = to_classes(&h.sequence);
        println!("alpha {alpha:<3} {}  CER {:.3}", render(&fused), cer(&fused, &target)?);
    }
    Ok(())
}
