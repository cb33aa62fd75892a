use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::stft::hann_window;
use super::Waveform;
use crate::error::{Error, Result};

const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub win_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub preemphasis: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            win_ms: 25.0,
            hop_ms: 10.0,
            n_mels: 26,
            n_coeffs: 13,
            preemphasis: 0.97,
        }
    }
}

impl MfccConfig {
    fn geometry(&self, sample_rate: u32) -> Result<(usize, usize, usize)> {
        if self.n_coeffs == 0 || self.n_coeffs > self.n_mels {
            return Err(Error::Config(format!(
                "n_coeffs {} must be in 1..={}",
                self.n_coeffs, self.n_mels
            )));
        }
        if !(0.0..1.0).contains(&self.preemphasis) {
            return Err(Error::Config("preemphasis must be in [0, 1)".into()));
        }
        let win = (self.win_ms * sample_rate as f64 / 1000.0).round() as usize;
        let hop = (self.hop_ms * sample_rate as f64 / 1000.0).round() as usize;
        if win == 0 || hop == 0 {
            return Err(Error::Config("window and hop must span at least one sample".into()));
        }
        Ok((win, hop, win.next_power_of_two()))
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular HTK-mel filters over `[0, sr/2]`, shape `n_mels x (n_fft/2 + 1)`.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Array2<f64> {
    let n_bins = n_fft / 2 + 1;
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate as f64 / n_fft as f64;
            let w = ((f - lo) / (mid - lo)).min((hi - f) / (hi - mid));
            fb[[m, k]] = w.max(0.0);
        }
    }
    fb
}

/// Orthonormal DCT-II matrix, `n_out x n_in`.
fn dct_matrix(n_out: usize, n_in: usize) -> Array2<f64> {
    Array2::from_shape_fn((n_out, n_in), |(k, m)| {
        let scale = if k == 0 {
            (1.0 / n_in as f64).sqrt()
        } else {
            (2.0 / n_in as f64).sqrt()
        };
        scale * (PI * k as f64 * (2 * m + 1) as f64 / (2 * n_in) as f64).cos()
    })
}

/// MFCC matrix, `frames x n_coeffs`. Frames are not padded, so a signal of
/// `len` samples yields `floor((len - win) / hop) + 1` frames. The power
/// spectrum uses an FFT of the window length rounded up to a power of two.
pub fn mfcc(w: &Waveform, cfg: &MfccConfig) -> Result<Array2<f64>> {
    let (win, hop, n_fft) = cfg.geometry(w.sample_rate)?;
    if w.len() < win {
        return Err(Error::Length(format!("{} samples, need at least {win}", w.len())));
    }
    let x = &w.samples;
    let emphasized: Vec<f64> = (0..x.len())
        .map(|t| x[t] - if t > 0 { cfg.preemphasis * x[t - 1] } else { 0.0 })
        .collect();

    let n_frames = (x.len() - win) / hop + 1;
    let n_bins = n_fft / 2 + 1;
    let window = hann_window(win);
    let fb = mel_filterbank(cfg.n_mels, n_fft, w.sample_rate);
    let dct = dct_matrix(cfg.n_coeffs, cfg.n_mels);
    let fft = FftPlanner::new().plan_fft_forward(n_fft);

    let mut power = Array2::<f64>::zeros((n_frames, n_bins));
    let mut buf = vec![Complex64::default(); n_fft];
    for f in 0..n_frames {
        buf.fill(Complex64::default());
        for i in 0..win {
            buf[i] = Complex64::new(emphasized[f * hop + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            power[[f, k]] = buf[k].norm_sqr();
        }
    }
    let log_mel = power.dot(&fb.t()).mapv(|e| e.max(LOG_FLOOR).ln());
    Ok(log_mel.dot(&dct.t()))
}

/// Per-coefficient mean followed by population standard deviation.
pub fn pool_features(m: &Array2<f64>) -> Result<Array1<f64>> {
    if m.nrows() == 0 {
        return Err(Error::Length("cannot pool an empty feature matrix".into()));
    }
    let mean = m.mean_axis(Axis(0)).expect("non-empty");
    let std = m.std_axis(Axis(0), 0.0);
    Ok(ndarray::concatenate(Axis(0), &[mean.view(), std.view()]).expect("same rank"))
}
