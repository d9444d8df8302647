//! Trains a small conv + transformer decoder on synthetic data and decodes
//! a few held-out sentences without a language model.

use std::collections::BTreeMap;

use keydecode::corpus::unique_sentences;
use keydecode::decoder::decode_sentence;
use keydecode::keyboard::render;
use keydecode::neural::{fit, DecoderConfig, DecoderModel, Sentence, TrainConfig};
use keydecode::signal::{bandpass, baseline_correct, epochize, resample, synth_generate, Epoch, EpochWindow, SubjectScalers, SynthConfig};
use keydecode::textalign::label_events;

fn main() -> keydecode::Result<()> {
    let synth = SynthConfig {
        n_subjects: 1,
        sentences: unique_sentences(90, 8),
        n_channels: Some(8),
        seed: 8,
        ..Default::default()
    };
    let subject = synth_generate(&synth)?.remove(0);
    let rec = resample(&bandpass(&subject.recording, 0.1, 20.0)?, 50.0)?;
    let trials: Vec<_> = subject.trials.iter().map(label_events).collect::<Result<_, _>>()?;
    let epochs: Vec<Epoch> = epochize(&rec, &trials, EpochWindow::default()).iter().map(baseline_correct).collect();

    let mut by_sentence: BTreeMap<u32, Vec<Epoch>> = BTreeMap::new();
    for e in epochs {
        by_sentence.entry(e.meta.sentence_id).or_default().push(e);
    }
    let ids: Vec<u32> = by_sentence.keys().copied().collect();
    let (train_ids, rest) = ids.split_at(78);
    let (valid_ids, test_ids) = rest.split_at(8);
    let scalers = SubjectScalers::fit(train_ids.iter().flat_map(|id| &by_sentence[id]), 20.0)?;
    let to_sentences = |ids: &[u32]| -> keydecode::Result<Vec<Sentence>> {
        ids.iter()
            .map(|id| {
                let scaled = scalers.transform_all(&by_sentence[id])?;
                let views: Vec<_> = scaled.iter().map(|e| e.window.view()).collect();
                Sentence::from_windows(0, &views, scaled.iter().map(|e| e.label.id()).collect())
            })
            .collect()
    };
    let (train, valid, test) = (to_sentences(train_ids)?, to_sentences(valid_ids)?, to_sentences(test_ids)?);

    let config = DecoderConfig {
        n_sensors: rec.n_channels(),
        t: EpochWindow::default().n_samples(rec.sfreq),
        d_spatial: 8,
        n_fourier: 8,
        h: 16,
        n_conv_blocks: 3,
        n_transformer_layers: 1,
        dropout: 0.1,
        n_subjects: 1,
        ..Default::default()
    };
    let mut model = DecoderModel::new(config, &rec.channel_positions)?;
    let log = fit(
        &mut model,
        &train,
        &valid,
        &TrainConfig {
            epochs: 15,
            peak_lr: 3e-3,
            ..Default::default()
        },
    )?;
    println!("best epoch {} of {}, valid loss {:.3}", log.best_epoch, log.epochs.len(), log.best_valid_loss);
    for (s, id) in test.iter().zip(test_ids) {
        let d = decode_sentence(&model, None, s, 1, 0.0)?;
        let target: Vec<_> = by_sentence[id].iter().map(|e| e.label).collect();
        println!("target  {}\ndecoded {}\n", render(&target), d.text);
    }
    Ok(())
}
