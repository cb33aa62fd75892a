use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// One-sided complex spectrogram, `frames x (n_fft/2 + 1)`.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub n_fft: usize,
    pub hop: usize,
    pub bins: Array2<Complex64>,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.bins.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.bins.ncols()
    }

    pub fn magnitudes(&self) -> Array2<f64> {
        self.bins.mapv(|c| c.norm())
    }
}

/// Hann-windowed STFT without padding: `floor((len - n_fft) / hop) + 1` frames.
pub fn stft(samples: &[f64], n_fft: usize, hop: usize) -> Result<Spectrogram> {
    if n_fft == 0 || hop == 0 || hop > n_fft {
        return Err(Error::Config(format!("invalid STFT geometry n_fft={n_fft} hop={hop}")));
    }
    if samples.len() < n_fft {
        return Err(Error::Length(format!("{} samples, need at least {n_fft}", samples.len())));
    }
    let n_frames = (samples.len() - n_fft) / hop + 1;
    let n_bins = n_fft / 2 + 1;
    let window = hann_window(n_fft);
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let mut bins = Array2::zeros((n_frames, n_bins));
    let mut buf = vec![Complex64::default(); n_fft];
    for f in 0..n_frames {
        let frame = &samples[f * hop..f * hop + n_fft];
        for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&window) {
            *b = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (k, v) in buf[..n_bins].iter().enumerate() {
            bins[[f, k]] = *v;
        }
    }
    Ok(Spectrogram { n_fft, hop, bins })
}

/// Weighted overlap-add inverse of [`stft`], producing `len` samples.
///
/// Samples covered by no window with nonzero weight come back as zero.
pub fn istft(spec: &Spectrogram, len: usize) -> Vec<f64> {
    let n_fft = spec.n_fft;
    let window = hann_window(n_fft);
    let ifft = FftPlanner::new().plan_fft_inverse(n_fft);
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let mut buf = vec![Complex64::default(); n_fft];
    for f in 0..spec.n_frames() {
        let row = spec.bins.row(f);
        for k in 0..n_fft {
            buf[k] = if k < row.len() { row[k] } else { row[n_fft - k].conj() };
        }
        ifft.process(&mut buf);
        let offset = f * spec.hop;
        for i in 0..n_fft {
            let t = offset + i;
            if t >= len {
                break;
            }
            out[t] += window[i] * buf[i].re / n_fft as f64;
            norm[t] += window[i] * window[i];
        }
    }
    for (o, n) in out.iter_mut().zip(&norm) {
        *o = if *n > 1e-10 { *o / n } else { 0.0 };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_formula() {
        let s = stft(&vec![0.1; 16_000], 400, 160).unwrap();
        assert_eq!(s.n_frames(), (16_000 - 400) / 160 + 1);
        assert_eq!(s.n_frames(), 98);
        assert_eq!(s.n_bins(), 201);
    }

    #[test]
    fn too_short_is_length_error() {
        assert!(matches!(stft(&[0.0; 10], 16, 4), Err(Error::Length(_))));
    }

    #[test]
    fn zeros_stay_zero() {
        let s = stft(&vec![0.0; 2048], 512, 128).unwrap();
        assert!(s.magnitudes().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn dc_concentrates_in_bin_zero() {
        // Periodic Hann times a constant c: X[0] = c*N/2, X[1] = -c*N/4, rest 0.
        let n = 256;
        let c = 0.3;
        let s = stft(&vec![c; n * 2], n, n / 2).unwrap();
        for f in 0..s.n_frames() {
            let row = s.bins.row(f);
            assert!((row[0].re - c * n as f64 / 2.0).abs() < 1e-9);
            assert!((row[1].re + c * n as f64 / 4.0).abs() < 1e-9);
            for k in 2..s.n_bins() {
                assert!(row[k].norm() < 1e-9);
            }
            let total: f64 = row.iter().map(|z| z.norm_sqr()).sum();
            assert!(row[0].norm_sqr() / total > 0.79);
        }
    }

    #[test]
    fn round_trip_interior() {
        let n_fft = 512;
        let hop = n_fft / 4;
        let x: Vec<f64> = (0..8192)
            .map(|i| (i as f64 * 0.013).sin() * 0.4 + (i as f64 * 0.31).cos() * 0.2)
            .collect();
        let y = istft(&stft(&x, n_fft, hop).unwrap(), x.len());
        let last_full = ((x.len() - n_fft) / hop) * hop + n_fft;
        let err = (n_fft..last_full - n_fft)
            .map(|i| (x[i] - y[i]).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "max error {err}");
    }
}
