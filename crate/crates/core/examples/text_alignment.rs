//! Aligning what was typed with what was read, and labelling each keystroke.

use keydecode::textalign::{align, label_events, KeystrokeEvent, SentenceTrial};

fn main() -> keydecode::Result<()> {
    let read = "el perro come";
    let typed = "el pwrro coem";
    for p in align(typed, read) {
        println!("{:?} {:?} -> {:?}", p.tag, p.pressed, p.intended);
    }

    let events: Vec<KeystrokeEvent> = typed
        .chars()
        .enumerate()
        .map(|(i, c)| KeystrokeEvent::unlabeled(0.25 * i as f64, c))
        .collect();
    let trial = label_events(&SentenceTrial::from_events(0, 7, read, events)?)?;
    let typos: String = trial.events.iter().map(|e| if e.is_typo { '^' } else { ' ' }).collect();
    println!("{}\n{typos}", trial.typed_text);
    println!("{:?}", trial.edit_counts());
    Ok(())
}
