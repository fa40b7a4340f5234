//! Multi-channel time-domain audio and WAV file I/O.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use ndarray::Array2;

use crate::error::{Error, Result};

/// Multi-channel signal, one row per channel, f64 samples in [-1, 1] by
/// convention (not enforced; simulation can overshoot before scaling).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelWave {
    /// channels x samples
    pub samples: Array2<f64>,
    pub sample_rate: u32,
}

impl MultiChannelWave {
    pub fn new(samples: Array2<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        if samples.nrows() == 0 {
            return Err(Error::shape("wave needs at least one channel"));
        }
        Ok(Self { samples, sample_rate })
    }

    /// Zero-filled wave of the given shape.
    pub fn zeros(channels: usize, len: usize, sample_rate: u32) -> Self {
        Self {
            samples: Array2::zeros((channels, len)),
            sample_rate,
        }
    }

    /// Wrap a mono signal.
    pub fn from_mono(samples: Vec<f64>, sample_rate: u32) -> Self {
        let n = samples.len();
        Self {
            samples: Array2::from_shape_vec((1, n), samples).expect("shape"),
            sample_rate,
        }
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    /// Borrow one channel as a contiguous slice.
    pub fn channel(&self, ch: usize) -> ndarray::ArrayView1<'_, f64> {
        self.samples.row(ch)
    }

    /// Single-channel copy.
    pub fn take_channel(&self, ch: usize) -> MultiChannelWave {
        MultiChannelWave {
            samples: self
                .samples
                .row(ch)
                .to_owned()
                .insert_axis(ndarray::Axis(0)),
            sample_rate: self.sample_rate,
        }
    }

    /// Mean power over all channels and samples.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    /// Energy (sum of squares) of one channel.
    pub fn channel_energy(&self, ch: usize) -> f64 {
        self.samples.row(ch).iter().map(|s| s * s).sum()
    }
}

/// Full linear convolution (output length a + b - 1), FFT-based.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    use rustfft::FftPlanner;
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut fa: Vec<crate::C64> = (0..n)
        .map(|i| crate::C64::new(a.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    let mut fb: Vec<crate::C64> = (0..n)
        .map(|i| crate::C64::new(b.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    fft.process(&mut fa);
    fft.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= *y;
    }
    ifft.process(&mut fa);
    fa.truncate(out_len);
    fa.into_iter().map(|v| v.re / n as f64).collect()
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for k in 1..200 {
        let factor = half / k as f64;
        term *= factor * factor;
        sum += term;
        if term < sum * 1e-16 {
            break;
        }
    }
    sum
}

/// Rational-factor sample-rate conversion with a Kaiser-windowed sinc
/// low-pass (β = 5, half-length 10·max(up, down) taps, unit DC gain).
pub fn resample(x: &[f64], from: u32, to: u32) -> Result<Vec<f64>> {
    if from == 0 || to == 0 {
        return Err(Error::config("sample rates must be positive"));
    }
    if from == to || x.is_empty() {
        return Ok(x.to_vec());
    }
    let g = gcd(from, to);
    let up = (to / g) as i64;
    let down = (from / g) as i64;
    let max_rate = up.max(down);
    let half_len = 10 * max_rate;
    let n_taps = 2 * half_len + 1;
    let fc = 1.0 / max_rate as f64;
    let beta = 5.0;
    let i0_beta = bessel_i0(beta);

    let mut h = vec![0.0f64; n_taps as usize];
    let mut dc = 0.0;
    for (i, tap) in h.iter_mut().enumerate() {
        let t = i as f64 - half_len as f64;
        let arg = std::f64::consts::PI * fc * t;
        let sinc = if arg == 0.0 { 1.0 } else { arg.sin() / arg };
        let u = t / half_len as f64;
        let w = bessel_i0(beta * (1.0 - u * u).max(0.0).sqrt()) / i0_beta;
        *tap = fc * sinc * w;
        dc += *tap;
    }
    let gain = up as f64 / dc;
    for tap in &mut h {
        *tap *= gain;
    }

    let n_in = x.len() as i64;
    let n_out = (n_in * up + down - 1) / down;
    let mut y = vec![0.0f64; n_out as usize];
    for (j, out) in y.iter_mut().enumerate() {
        // Output sample j sits at position j·down on the up-rate grid; sum
        // the input taps whose filter index lands inside the kernel.
        let center = j as i64 * down;
        let m_lo = (center - half_len + up - 1).div_euclid(up).max(0);
        let m_hi = (center + half_len).div_euclid(up).min(n_in - 1);
        let mut acc = 0.0;
        for m in m_lo..=m_hi {
            acc += x[m as usize] * h[(center + half_len - m * up) as usize];
        }
        *out = acc;
    }
    Ok(y)
}

/// Sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    /// RIFF PCM, 16-bit signed integers. Values are clamped to [-1, 1).
    Pcm16,
    /// IEEE float, 32-bit.
    Float32,
}

/// Read a PCM 16-bit or IEEE float 32-bit WAV into channel-major f64.
pub fn read_wav(path: impl AsRef<Path>) -> Result<MultiChannelWave> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Format {
            path: path.display().to_string(),
            detail: "zero channels".into(),
        });
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::Format {
                path: path.display().to_string(),
                detail: format!("unsupported sample format {fmt:?}/{bits} bits"),
            })
        }
    };

    let frames = interleaved.len() / channels;
    let mut samples = Array2::zeros((channels, frames));
    for (i, v) in interleaved.iter().enumerate() {
        samples[(i % channels, i / channels)] = *v;
    }
    MultiChannelWave::new(samples, spec.sample_rate)
}

/// Write a multi-channel WAV with the requested encoding.
pub fn write_wav(
    path: impl AsRef<Path>,
    wave: &MultiChannelWave,
    encoding: WavEncoding,
) -> Result<()> {
    let spec = WavSpec {
        channels: wave.channels() as u16,
        sample_rate: wave.sample_rate,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => SampleFormat::Int,
            WavEncoding::Float32 => SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec)?;
    for t in 0..wave.len() {
        for ch in 0..wave.channels() {
            let v = wave.samples[(ch, t)];
            match encoding {
                WavEncoding::Pcm16 => {
                    let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(q)?;
                }
                WavEncoding::Float32 => writer.write_sample(v as f32)?,
            }
        }
    }
    writer.finalize()?;
    Ok(())
}
