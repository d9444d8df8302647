//! Binary formats: one JSON header line followed by row-major little-endian
//! `f32` samples.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Device, Epoch, EpochMeta, Recording};
use crate::error::{Error, Result};
use crate::keyboard::classify_key;
use crate::textalign::SubjectId;

#[derive(Debug, Serialize, Deserialize)]
struct RecordingHeader {
    channels: usize,
    samples: usize,
    sfreq: f64,
    device: Device,
    subject_id: SubjectId,
    positions: Vec<[f64; 2]>,
}

fn write_f32s<'a, W: Write>(w: &mut W, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    let mut buf = Vec::with_capacity(4096);
    for v in values {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
        if buf.len() >= 4096 {
            w.write_all(&buf)?;
            buf.clear();
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("sample block truncated: {e}")))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after sample block", rest.len())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn read_header_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if !line.ends_with('\n') {
        return Err(Error::Format("missing JSON header line".into()));
    }
    Ok(line)
}

pub fn write_recording<W: Write>(mut w: W, rec: &Recording) -> Result<()> {
    let header = RecordingHeader {
        channels: rec.n_channels(),
        samples: rec.n_samples(),
        sfreq: rec.sfreq,
        device: rec.device,
        subject_id: rec.subject_id,
        positions: rec.channel_positions.clone(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    write_f32s(&mut w, rec.data.iter())?;
    w.flush()?;
    Ok(())
}

pub fn read_recording<R: Read>(r: R) -> Result<Recording> {
    let mut r = BufReader::new(r);
    let header: RecordingHeader = serde_json::from_str(&read_header_line(&mut r)?)
        .map_err(|e| Error::Format(format!("recording header: {e}")))?;
    let values = read_f32s(&mut r, header.channels * header.samples)?;
    let data = Array2::from_shape_vec((header.channels, header.samples), values)
        .map_err(|e| Error::Format(e.to_string()))?;
    Recording::new(data, header.sfreq, header.positions, header.device, header.subject_id)
}

pub fn save_recording(path: &Path, rec: &Recording) -> Result<()> {
    write_recording(std::io::BufWriter::new(std::fs::File::create(path)?), rec)
}

pub fn load_recording(path: &Path) -> Result<Recording> {
    read_recording(std::fs::File::open(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct EpochHeader {
    channels: usize,
    samples: usize,
    sfreq: f64,
    tmin: f64,
    epochs: Vec<EpochMeta>,
}

/// Writes a set of equally shaped epochs.
pub fn write_epochs<W: Write>(mut w: W, epochs: &[Epoch]) -> Result<()> {
    let (channels, samples) = epochs.first().map(|e| e.window.dim()).unwrap_or((0, 0));
    let (sfreq, tmin) = epochs.first().map(|e| (e.sfreq, e.tmin)).unwrap_or((0.0, 0.0));
    if epochs.iter().any(|e| e.window.dim() != (channels, samples)) {
        return Err(Error::Shape("epochs in one bundle must share a shape".into()));
    }
    let header = EpochHeader {
        channels,
        samples,
        sfreq,
        tmin,
        epochs: epochs.iter().map(|e| e.meta.clone()).collect(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    write_f32s(&mut w, epochs.iter().flat_map(|e| e.window.iter()))?;
    w.flush()?;
    Ok(())
}

pub fn read_epochs<R: Read>(r: R) -> Result<Vec<Epoch>> {
    let mut r = BufReader::new(r);
    let header: EpochHeader = serde_json::from_str(&read_header_line(&mut r)?)
        .map_err(|e| Error::Format(format!("epoch header: {e}")))?;
    let per = header.channels * header.samples;
    let values = read_f32s(&mut r, per * header.epochs.len())?;
    header
        .epochs
        .into_iter()
        .enumerate()
        .map(|(i, meta)| {
            let window = Array2::from_shape_vec(
                (header.channels, header.samples),
                values[i * per..(i + 1) * per].to_vec(),
            )
            .map_err(|e| Error::Format(e.to_string()))?;
            Ok(Epoch {
                window,
                tmin: header.tmin,
                sfreq: header.sfreq,
                label: classify_key(meta.target),
                meta,
            })
        })
        .collect()
}

pub fn save_epochs(path: &Path, epochs: &[Epoch]) -> Result<()> {
    write_epochs(std::io::BufWriter::new(std::fs::File::create(path)?), epochs)
}

pub fn load_epochs(path: &Path) -> Result<Vec<Epoch>> {
    read_epochs(std::fs::File::open(path)?)
}
