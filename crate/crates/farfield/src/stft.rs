//! STFT analysis/synthesis front end.
//!
//! Defaults follow the common far-field recipe: 512-point FFT, 32 ms
//! square-root Hann window and 16 ms hop at 16 kHz. Analysis and synthesis
//! use the same window, so the sqrt-Hann pair multiplies to a Hann that sums
//! to one at 50% overlap and reconstruction is exact. The signal is zero
//! padded by `window_length - hop` samples before the first frame (the same
//! amount, rounded up to the frame grid, after the last) and the padding is
//! trimmed again after synthesis, so `istft(stft(x))` returns exactly
//! `x.len()` samples.

use ndarray::{Array1, Array2, Array3};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wave::MultiChannelWave;
use crate::C64;

/// Floor added to |X|^2 before the log in [`log_power_spectrum`].
pub const LPS_FLOOR: f64 = 1e-12;

/// Analysis/synthesis window shape. All windows are periodic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Window {
    /// Square root of a periodic Hann; the default analysis/synthesis pair.
    SqrtHann,
    Hann,
    Rect,
}

/// STFT geometry. `window_length <= fft_size`; shorter windows are zero
/// padded to the FFT size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub window_length: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: 512,
            window_length: 512,
            hop: 256,
            window: Window::SqrtHann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 || self.window_length == 0 || self.hop == 0 {
            return Err(Error::config("fft_size, window_length and hop must be positive"));
        }
        if self.window_length > self.fft_size {
            return Err(Error::config(format!(
                "window_length {} exceeds fft_size {}",
                self.window_length, self.fft_size
            )));
        }
        if self.hop > self.window_length {
            return Err(Error::config(format!(
                "hop {} exceeds window_length {} (gaps between frames)",
                self.hop, self.window_length
            )));
        }
        Ok(())
    }

    /// Number of one-sided frequency bins.
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Leading zero padding before the first sample.
    pub fn leading_pad(&self) -> usize {
        self.window_length - self.hop
    }

    /// Frame count for an input of `n` samples (0 for empty input).
    pub fn frames_for_len(&self, n: usize) -> usize {
        if n == 0 {
            0
        } else {
            (n + self.leading_pad()).div_ceil(self.hop)
        }
    }

    /// Sampled analysis window (synthesis uses the same one).
    pub fn window_samples(&self) -> Vec<f64> {
        let n = self.window_length;
        (0..n)
            .map(|i| {
                let hann = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos());
                match self.window {
                    Window::SqrtHann => hann.sqrt(),
                    Window::Hann => hann,
                    Window::Rect => 1.0,
                }
            })
            .collect()
    }
}

/// One-sided multi-channel complex spectrogram.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    /// channels x frames x bins
    pub values: Array3<C64>,
    pub config: StftConfig,
    pub sample_rate: u32,
    /// Length of the time-domain signal this spectrogram came from; `istft`
    /// trims its output back to this many samples.
    pub signal_len: usize,
}

impl Spectrogram {
    pub fn channels(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn bins(&self) -> usize {
        self.values.shape()[2]
    }

    /// Center frequency of bin `f` in Hz.
    pub fn bin_hz(&self, f: usize) -> f64 {
        f as f64 * f64::from(self.sample_rate) / self.config.fft_size as f64
    }

    /// The R-channel snapshot y(t, f).
    pub fn snapshot(&self, t: usize, f: usize) -> Array1<C64> {
        Array1::from_iter((0..self.channels()).map(|ch| self.values[(ch, t, f)]))
    }

    /// Single-channel copy keeping config and length bookkeeping.
    pub fn take_channel(&self, ch: usize) -> Spectrogram {
        let (_, t, f) = (self.channels(), self.frames(), self.bins());
        let mut values = Array3::zeros((1, t, f));
        values
            .index_axis_mut(ndarray::Axis(0), 0)
            .assign(&self.values.index_axis(ndarray::Axis(0), ch));
        Spectrogram {
            values,
            config: self.config,
            sample_rate: self.sample_rate,
            signal_len: self.signal_len,
        }
    }

    /// Same geometry, zeroed values.
    pub fn zeros_like(&self, channels: usize) -> Spectrogram {
        Spectrogram {
            values: Array3::zeros((channels, self.frames(), self.bins())),
            config: self.config,
            sample_rate: self.sample_rate,
            signal_len: self.signal_len,
        }
    }

    /// Mean of |X|^2 over all channels, frames and bins.
    pub fn mean_power(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }
}

/// Analyze a multi-channel wave.
pub fn stft(wave: &MultiChannelWave, config: &StftConfig) -> Result<Spectrogram> {
    config.validate()?;
    let n = wave.len();
    let channels = wave.channels();
    let frames = config.frames_for_len(n);
    let bins = config.bins();
    let window = config.window_samples();
    let pad = config.leading_pad();

    let mut values = Array3::zeros((channels, frames, bins));
    if frames > 0 {
        let fft = FftPlanner::<f64>::new().plan_fft_forward(config.fft_size);
        let padded_len = (frames - 1) * config.hop + config.window_length;
        let mut padded = vec![0.0f64; padded_len];
        let mut buf: Vec<C64> = vec![C64::new(0.0, 0.0); config.fft_size];
        for ch in 0..channels {
            padded.iter_mut().for_each(|v| *v = 0.0);
            for (i, v) in wave.channel(ch).iter().enumerate() {
                padded[pad + i] = *v;
            }
            for t in 0..frames {
                let start = t * config.hop;
                for i in 0..config.fft_size {
                    let s = if i < config.window_length {
                        window[i] * padded[start + i]
                    } else {
                        0.0
                    };
                    buf[i] = C64::new(s, 0.0);
                }
                fft.process(&mut buf);
                for f in 0..bins {
                    values[(ch, t, f)] = buf[f];
                }
            }
        }
    }

    Ok(Spectrogram {
        values,
        config: *config,
        sample_rate: wave.sample_rate,
        signal_len: n,
    })
}

/// Synthesize a wave, trimming back to the recorded input length.
pub fn istft(spec: &Spectrogram) -> Result<MultiChannelWave> {
    spec.config.validate()?;
    let config = &spec.config;
    let channels = spec.channels();
    let frames = spec.frames();
    let n = spec.signal_len;
    let pad = config.leading_pad();
    if frames == 0 || n == 0 {
        return Ok(MultiChannelWave::zeros(channels.max(1), n, spec.sample_rate));
    }
    if spec.bins() != config.bins() {
        return Err(Error::shape(format!(
            "spectrogram has {} bins but config implies {}",
            spec.bins(),
            config.bins()
        )));
    }

    let window = config.window_samples();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(config.fft_size);
    let padded_len = (frames - 1) * config.hop + config.window_length;

    // Accumulated analysis*synthesis window power; dividing by it makes
    // reconstruction exact for every overlap-covering window pair, not just
    // the sqrt-Hann one whose sum is identically 1.
    let mut norm = vec![0.0f64; padded_len];
    for t in 0..frames {
        let start = t * config.hop;
        for (i, w) in window.iter().enumerate() {
            norm[start + i] += w * w;
        }
    }

    let mut out = Array2::zeros((channels, n));
    let mut buf: Vec<C64> = vec![C64::new(0.0, 0.0); config.fft_size];
    let mut acc = vec![0.0f64; padded_len];
    let scale = 1.0 / config.fft_size as f64;
    for ch in 0..channels {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for t in 0..frames {
            // Rebuild the two-sided spectrum from the one-sided half.
            buf[0] = spec.values[(ch, t, 0)];
            for f in 1..config.bins() {
                buf[f] = spec.values[(ch, t, f)];
            }
            for f in config.bins()..config.fft_size {
                buf[f] = spec.values[(ch, t, config.fft_size - f)].conj();
            }
            ifft.process(&mut buf);
            let start = t * config.hop;
            for i in 0..config.window_length {
                acc[start + i] += buf[i].re * scale * window[i];
            }
        }
        for i in 0..n {
            let j = pad + i;
            if norm[j] > 1e-12 {
                out[(ch, i)] = acc[j] / norm[j];
            }
        }
    }

    MultiChannelWave::new(out, spec.sample_rate)
}

/// Log power spectrum log(|X|^2 + [`LPS_FLOOR`]) of one channel.
pub fn log_power_spectrum(spec: &Spectrogram, channel: usize) -> Array2<f64> {
    log_power_spectrum_with_floor(spec, channel, LPS_FLOOR)
}

/// Log power spectrum with an explicit floor (0 is allowed; silent bins then
/// map to -inf).
pub fn log_power_spectrum_with_floor(
    spec: &Spectrogram,
    channel: usize,
    floor: f64,
) -> Array2<f64> {
    let (t, f) = (spec.frames(), spec.bins());
    Array2::from_shape_fn((t, f), |(ti, fi)| {
        (spec.values[(channel, ti, fi)].norm_sqr() + floor).ln()
    })
}
