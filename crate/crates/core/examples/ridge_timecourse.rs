//! Time-resolved left/right-hand decoding with the ridge baseline on wide
//! synthetic epochs.

use keydecode::baselines::{group_curve, peak_time, time_resolved, TimeResolvedConfig};
use keydecode::corpus::unique_sentences;
use keydecode::keyboard::Hand;
use keydecode::signal::{bandpass, baseline_correct, epochize, resample, synth_generate, EpochWindow, SubjectScalers, SynthConfig};
use keydecode::textalign::label_events;
use keydecode::KeyboardLayout;

fn main() -> keydecode::Result<()> {
    let cfg = SynthConfig {
        n_subjects: 2,
        sentences: unique_sentences(20, 6),
        n_channels: Some(8),
        snr: 1.0,
        seed: 6,
        ..Default::default()
    };
    let mut epochs = Vec::new();
    for s in synth_generate(&cfg)? {
        let rec = resample(&bandpass(&s.recording, 0.1, 20.0)?, 50.0)?;
        let trials: Vec<_> = s.trials.iter().map(label_events).collect::<Result<_, _>>()?;
        epochs.extend(epochize(&rec, &trials, EpochWindow::WIDE).iter().map(baseline_correct));
    }
    let epochs = SubjectScalers::fit(&epochs, 20.0)?.transform_all(&epochs)?;

    let layout = KeyboardLayout::qwerty();
    let hand = |e: &keydecode::signal::Epoch| match layout.hand_of(e.label) {
        Ok(Hand::Left) => Some(0),
        Ok(Hand::Right) => Some(1),
        Err(_) => None,
    };
    // 20 shuffles keep this quick; p-values need a few thousand
    let tr = TimeResolvedConfig {
        n_permutations: 20,
        ..Default::default()
    };
    let rows = time_resolved(&epochs, hand, &tr)?;
    for r in group_curve(&rows).iter().step_by(5) {
        println!("{:+.2} s  accuracy {:.3}  chance {:.3}  p_fdr {:.3}", r.time_s, r.accuracy_mean, r.chance, r.p_fdr);
    }
    println!("peak at {:+.3} s", peak_time(&rows).unwrap_or(f64::NAN));
    Ok(())
}
