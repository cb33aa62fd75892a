//! Audio handling: WAV I/O, resampling, segment cutting, STFT, spectral-gating
//! noise reduction and MFCC features.

mod denoise;
mod mfcc;
mod stft;

pub use denoise::{spectral_gate_denoise, NoiseGateConfig};
pub use mfcc::{mel_filterbank, mfcc, pool_features, MfccConfig};
pub use stft::{hann_window, istft, stft, Spectrogram};

use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};

use crate::corpus::SegmentRef;
use crate::error::{Error, Result};

/// Sample rate the feature extractors expect.
pub const TARGET_SAMPLE_RATE: u32 = 16_000;

/// Segments longer than this are cut, keeping the head.
pub const DEFAULT_MAX_SECONDS: f64 = 8.0;

/// Mono PCM audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Validation("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Validation(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

fn format_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Reads 16-bit integer or 32-bit float PCM, averaging stereo to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| format_err(path, e))?;
    let spec = reader.spec();
    if !(1..=2).contains(&spec.channels) {
        return Err(Error::Format(format!("{}: {} channels", path.display(), spec.channels)));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(path, e))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(path, e))?,
        (fmt, bits) => {
            return Err(Error::Format(format!("{}: {bits}-bit {fmt:?} samples", path.display())));
        }
    };
    let channels = spec.channels as usize;
    let samples = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Waveform::new(samples, spec.sample_rate)
}

/// Writes 16-bit mono PCM.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| format_err(path, e))?;
    for &s in &w.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| format_err(path, e))?;
    }
    writer.finalize().map_err(|e| format_err(path, e))
}

/// Linear-interpolation resampling; output length is `round(len * target / source)`.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::Validation("target rate must be positive".into()));
    }
    if target_rate == w.sample_rate || w.is_empty() {
        return Ok(Waveform {
            samples: w.samples.clone(),
            sample_rate: target_rate,
        });
    }
    let ratio = w.sample_rate as f64 / target_rate as f64;
    let n_out = (w.len() as f64 * target_rate as f64 / w.sample_rate as f64).round() as usize;
    let last = w.len() - 1;
    let samples = (0..n_out)
        .map(|i| {
            let pos = i as f64 * ratio;
            let lo = (pos.floor() as usize).min(last);
            let hi = (lo + 1).min(last);
            let frac = pos - lo as f64;
            w.samples[lo] + (w.samples[hi] - w.samples[lo]) * frac
        })
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: target_rate,
    })
}

fn ms_to_sample(ms: u64, rate: u32) -> usize {
    (ms as u128 * rate as u128 / 1000) as usize
}

/// Cuts the samples of `seg` out of a recording, keeping at most
/// `max_seconds` from the segment start. An end past the recording is
/// clamped (with a warning); a start past it is an error.
pub fn cut_segment(w: &Waveform, seg: &SegmentRef, max_seconds: f64) -> Result<Waveform> {
    let start = ms_to_sample(seg.start_ms, w.sample_rate);
    if start >= w.len() {
        return Err(Error::Range(format!(
            "segment {}:{} starts at {} ms but the recording lasts {:.3} s",
            seg.event_id,
            seg.line_no,
            seg.start_ms,
            w.duration_secs()
        )));
    }
    let mut end = ms_to_sample(seg.end_ms, w.sample_rate);
    if end > w.len() {
        log::warn!(
            "segment {}:{} ends at {} ms, past the end of the recording; clamping",
            seg.event_id,
            seg.line_no,
            seg.end_ms
        );
        end = w.len();
    }
    let cap = (max_seconds * w.sample_rate as f64).round() as usize;
    let end = end.min(start + cap);
    Ok(Waveform {
        samples: w.samples[start..end].to_vec(),
        sample_rate: w.sample_rate,
    })
}

/// Pooled MFCC vector for one segment: cut (keeping at most `max_seconds`),
/// resample to 16 kHz, optionally denoise, then MFCC mean/std pooling.
pub fn segment_features(
    recording: &Waveform,
    seg: &SegmentRef,
    max_seconds: f64,
    gate: Option<&NoiseGateConfig>,
    cfg: &MfccConfig,
) -> Result<Vec<f64>> {
    let mut w = resample(&cut_segment(recording, seg, max_seconds)?, TARGET_SAMPLE_RATE)?;
    if let Some(gate) = gate {
        w = spectral_gate_denoise(&w, gate)?;
    }
    Ok(pool_features(&mfcc(&w, cfg)?)?.to_vec())
}
