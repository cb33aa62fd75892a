//! Stationary spectral gating.
//!
//! Noise statistics come from the clip itself: for every frequency bin the
//! threshold is `mean + n_std_thresh * std` of that bin's magnitude over all
//! frames. Cells above threshold pass; the binary mask is smoothed with a
//! separable moving average and sub-threshold energy is scaled by
//! `1 - prop_decrease`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::stft::{istft, stft};
use super::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseGateConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub n_std_thresh: f64,
    pub prop_decrease: f64,
    pub freq_smooth_bins: usize,
    pub time_smooth_frames: usize,
}

impl Default for NoiseGateConfig {
    fn default() -> Self {
        Self {
            n_fft: 1024,
            hop: 256,
            n_std_thresh: 1.5,
            prop_decrease: 1.0,
            freq_smooth_bins: 2,
            time_smooth_frames: 4,
        }
    }
}

impl NoiseGateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fft == 0 || self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::Config(format!("hop {} must be in 1..={}", self.hop, self.n_fft)));
        }
        if self.n_std_thresh.is_nan() || self.n_std_thresh < 0.0 {
            return Err(Error::Config("n_std_thresh must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.prop_decrease) {
            return Err(Error::Config("prop_decrease must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Moving average along one axis with a `±radius` window truncated at the edges.
fn smooth_axis(m: &Array2<f64>, radius: usize, axis: usize) -> Array2<f64> {
    if radius == 0 {
        return m.clone();
    }
    let (rows, cols) = m.dim();
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let (pos, n) = if axis == 0 { (r, rows) } else { (c, cols) };
            let lo = pos.saturating_sub(radius);
            let hi = (pos + radius).min(n - 1);
            let mut sum = 0.0;
            for p in lo..=hi {
                sum += if axis == 0 { m[[p, c]] } else { m[[r, p]] };
            }
            out[[r, c]] = sum / (hi - lo + 1) as f64;
        }
    }
    out
}

pub fn spectral_gate_denoise(w: &Waveform, cfg: &NoiseGateConfig) -> Result<Waveform> {
    cfg.validate()?;
    if w.len() < cfg.n_fft {
        return Err(Error::Length(format!("{} samples, need at least {}", w.len(), cfg.n_fft)));
    }
    // Zero-pad so every input sample sits under full window coverage.
    let pad = cfg.n_fft / 2;
    let mut padded = vec![0.0; pad];
    padded.extend_from_slice(&w.samples);
    padded.extend(std::iter::repeat_n(0.0, pad));
    let rem = (padded.len() - cfg.n_fft) % cfg.hop;
    if rem != 0 {
        padded.extend(std::iter::repeat_n(0.0, cfg.hop - rem));
    }

    let mut spec = stft(&padded, cfg.n_fft, cfg.hop)?;
    let mag = spec.magnitudes();
    let n_frames = mag.nrows() as f64;
    let mean = mag.sum_axis(ndarray::Axis(0)) / n_frames;
    let var = mag
        .rows()
        .into_iter()
        .fold(ndarray::Array1::<f64>::zeros(mag.ncols()), |acc, row| {
            acc + (&row - &mean).mapv(|d| d * d)
        })
        / n_frames;
    let thresh = &mean + &(var.mapv(f64::sqrt) * cfg.n_std_thresh);

    let mut mask = Array2::<f64>::zeros(mag.dim());
    for ((f, k), m) in mask.indexed_iter_mut() {
        *m = if mag[[f, k]] > thresh[k] { 1.0 } else { 0.0 };
    }
    let mask = smooth_axis(&smooth_axis(&mask, cfg.freq_smooth_bins, 1), cfg.time_smooth_frames, 0);

    for ((f, k), z) in spec.bins.indexed_iter_mut() {
        let gain = 1.0 - cfg.prop_decrease * (1.0 - mask[[f, k]]);
        *z *= gain;
    }
    let out = istft(&spec, padded.len());
    let samples = out[pad..pad + w.len()].iter().map(|s| s.clamp(-1.0, 1.0)).collect();
    Ok(Waveform {
        samples,
        sample_rate: w.sample_rate,
    })
}
