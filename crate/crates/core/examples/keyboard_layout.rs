//! Key classes, hands and distances on the QWERTY layout.

use keydecode::keyboard::{classify_str, render};
use keydecode::{KeyClass, KeyboardLayout};

fn main() -> keydecode::Result<()> {
    let layout = KeyboardLayout::qwerty();
    let text = "Type 42 keys, then stop.";
    let classes = classify_str(text);
    println!("{text:?} -> {:?} ({} keystrokes)", render(&classes), classes.len());

    for c in "qpgh".chars() {
        let k = keydecode::classify_key(c);
        println!("{c}: class {:>2}, {:?} hand", k.id(), layout.hand_of(k)?);
    }

    let f = keydecode::classify_key('f');
    let near: Vec<char> = layout.neighbours(f, 1.3)?.iter().map(|k| k.glyph()).collect();
    println!("neighbours of f: {near:?}");
    for c in ['g', 'j', 'p'] {
        let d = layout.key_distance(f, keydecode::classify_key(c))? / layout.max_pairwise_distance();
        println!("distance f-{c}: {d:.3} (normalised)");
    }
    println!("{} classes in total", KeyClass::all().count());
    Ok(())
}
