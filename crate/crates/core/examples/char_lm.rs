//! Character n-gram model: training, next-key distribution, perplexity and
//! a save/load round trip.

use std::collections::HashSet;

use keydecode::charlm::NgramModel;
use keydecode::corpus::corpus_text;
use keydecode::keyboard::classify_str;
use keydecode::KeyClass;

fn main() -> keydecode::Result<()> {
    let corpus = corpus_text(300_000, 2, &HashSet::new());
    let lm = NgramModel::fit(&corpus, 7, 0.75)?;
    println!("{} n-grams up to order {}", lm.n_ngrams(), lm.order());

    let history = classify_str("el perro de ma");
    let lp = lm.logprobs_syms(&lm.context(&history));
    let mut ranked: Vec<(usize, f64)> = lp.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    print!("after \"el perro de ma\":");
    for (c, l) in ranked.iter().take(5) {
        print!(" {:?} {:.3}", KeyClass::from_id(*c)?.glyph(), l.exp());
    }
    println!();

    let held_out = corpus_text(20_000, 99, &HashSet::new());
    println!("held-out perplexity {:.2}", lm.perplexity(&held_out));

    let path = std::env::temp_dir().join("keydecode_example_lm.bin");
    lm.save(&path)?;
    let back = NgramModel::load(&path)?;
    println!("reloaded model agrees: {}", back.logprobs_syms(&back.context(&history)) == lp);
    std::fs::remove_file(path)?;
    Ok(())
}
