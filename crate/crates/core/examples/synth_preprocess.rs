//! Synthetic recordings through the preprocessing chain: bandpass,
//! resampling, epoching, baseline correction and robust scaling.

use keydecode::corpus::unique_sentences;
use keydecode::signal::{
    bandpass, baseline_correct, epochize, resample, synth_generate, EpochWindow, SubjectScalers, SynthConfig,
};
use keydecode::textalign::label_events;

fn main() -> keydecode::Result<()> {
    let cfg = SynthConfig {
        n_subjects: 2,
        sentences: unique_sentences(10, 1),
        n_channels: Some(16),
        seed: 1,
        ..Default::default()
    };
    let subjects = synth_generate(&cfg)?;
    let mut epochs = Vec::new();
    for s in &subjects {
        let rec = resample(&bandpass(&s.recording, 0.1, 20.0)?, 50.0)?;
        let trials: Vec<_> = s.trials.iter().map(label_events).collect::<Result<_, _>>()?;
        let eps = epochize(&rec, &trials, EpochWindow::default());
        println!(
            "subject {}: {:.0} s at {} Hz, {} keystrokes, {} typos injected, {} epochs",
            rec.subject_id,
            s.recording.duration(),
            rec.sfreq,
            s.n_keystrokes(),
            s.injected_typos,
            eps.len()
        );
        epochs.extend(eps.iter().map(baseline_correct));
    }
    let scalers = SubjectScalers::fit(&epochs, 20.0)?;
    let scaled = scalers.transform_all(&epochs)?;
    let e = &scaled[0];
    println!(
        "first epoch: {} channels x {} samples from {:+.2} s, label {:?}",
        e.window.nrows(),
        e.window.ncols(),
        e.tmin,
        e.label.glyph()
    );
    Ok(())
}
