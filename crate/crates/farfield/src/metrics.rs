//! Objective enhancement-quality metrics: SI-SNR, spectral MSE, STOI and
//! SRMR, plus the per-utterance report the evaluation driver aggregates.
//!
//! STOI follows the classic short-time objective intelligibility measure
//! (Taal et al.): 10 kHz analysis rate, 15 one-third-octave bands from
//! 150 Hz, 384 ms segments and clipped, normalized band-envelope
//! correlations. SRMR follows the speech-to-reverberation modulation
//! energy ratio (Falk et al.): a 23-channel gammatone front end, Hilbert
//! temporal envelopes and an eight-band modulation energy analysis whose
//! low-to-high band ratio is returned. PESQ is license-encumbered; the
//! report schema reserves its column as permanently absent.

use ndarray::Array2;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stft::Spectrogram;
use crate::wave::{convolve, resample, MultiChannelWave};
use crate::C64;

/// SI-SNR values are clamped to this magnitude in dB.
pub const SISNR_CAP_DB: f64 = 60.0;

const EPS: f64 = f64::EPSILON;

/// Scale-invariant signal-to-noise ratio in dB, capped at ±60.
///
/// Both signals are mean-centered, the estimate is projected onto the
/// reference to form the target component, and the energy ratio of target
/// to residual is returned. Scaling the estimate by any positive factor
/// leaves the value unchanged.
pub fn sisnr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::shape(format!(
            "sisnr length mismatch: estimate {} vs reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::degenerate("sisnr on empty signals"));
    }
    let n = reference.len() as f64;
    let mean_e = estimate.iter().sum::<f64>() / n;
    let mean_r = reference.iter().sum::<f64>() / n;

    let mut dot = 0.0;
    let mut ref_pow = 0.0;
    for (e, r) in estimate.iter().zip(reference) {
        let (ec, rc) = (e - mean_e, r - mean_r);
        dot += ec * rc;
        ref_pow += rc * rc;
    }
    if ref_pow == 0.0 {
        return Err(Error::degenerate("sisnr with silent reference"));
    }
    let scale = dot / ref_pow;
    let mut target_pow = 0.0;
    let mut noise_pow = 0.0;
    for (e, r) in estimate.iter().zip(reference) {
        let (ec, rc) = (e - mean_e, r - mean_r);
        let t = scale * rc;
        target_pow += t * t;
        let d = ec - t;
        noise_pow += d * d;
    }
    if target_pow == 0.0 {
        return Ok(-SISNR_CAP_DB);
    }
    if noise_pow == 0.0 {
        return Ok(SISNR_CAP_DB);
    }
    Ok((10.0 * (target_pow / noise_pow).log10()).clamp(-SISNR_CAP_DB, SISNR_CAP_DB))
}

/// Mean squared complex spectrogram difference over all channels, frames
/// and bins.
pub fn spectral_mse(estimate: &Spectrogram, reference: &Spectrogram) -> Result<f64> {
    if estimate.values.dim() != reference.values.dim() {
        return Err(Error::shape(format!(
            "spectral_mse dim mismatch: {:?} vs {:?}",
            estimate.values.dim(),
            reference.values.dim()
        )));
    }
    let count = estimate.values.len();
    if count == 0 {
        return Err(Error::degenerate("spectral_mse on empty spectrograms"));
    }
    let sum: f64 = estimate
        .values
        .iter()
        .zip(reference.values.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(sum / count as f64)
}

const STOI_FS: u32 = 10_000;
const STOI_FRAME: usize = 256;
const STOI_HOP: usize = 128;
const STOI_NFFT: usize = 512;
const STOI_BANDS: usize = 15;
const STOI_MIN_FREQ: f64 = 150.0;
const STOI_SEG: usize = 30;
const STOI_BETA_DB: f64 = -15.0;
const STOI_DYN_RANGE_DB: f64 = 40.0;

/// 256-point Hann window without the zero endpoints (the convention of the
/// reference STOI implementation: a 258-point symmetric Hann, trimmed).
fn stoi_window() -> Vec<f64> {
    (0..STOI_FRAME)
        .map(|i| {
            let phase = 2.0 * std::f64::consts::PI * (i + 1) as f64 / (STOI_FRAME + 1) as f64;
            0.5 - 0.5 * phase.cos()
        })
        .collect()
}

/// Drop frames in which the reference is more than 40 dB below its loudest
/// frame, then rebuild both signals by overlap-adding the kept frames.
fn remove_silent_frames(x: &[f64], y: &[f64], w: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let starts: Vec<usize> = (0..)
        .map(|k| k * STOI_HOP)
        .take_while(|&i| i + STOI_FRAME < x.len())
        .collect();
    if starts.is_empty() {
        return Err(Error::degenerate(format!(
            "stoi input too short: {} samples at 10 kHz",
            x.len()
        )));
    }
    let energies: Vec<f64> = starts
        .iter()
        .map(|&i| {
            let e: f64 = (0..STOI_FRAME).map(|k| (w[k] * x[i + k]).powi(2)).sum();
            20.0 * (e.sqrt() + EPS).log10()
        })
        .collect();
    let max_e = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| e > max_e - STOI_DYN_RANGE_DB)
        .map(|(&i, _)| i)
        .collect();
    let n_sil = (kept.len() - 1) * STOI_HOP + STOI_FRAME;
    let mut x_sil = vec![0.0f64; n_sil];
    let mut y_sil = vec![0.0f64; n_sil];
    for (slot, &i) in kept.iter().enumerate() {
        let base = slot * STOI_HOP;
        for k in 0..STOI_FRAME {
            x_sil[base + k] += w[k] * x[i + k];
            y_sil[base + k] += w[k] * y[i + k];
        }
    }
    Ok((x_sil, y_sil))
}

/// Windowed 512-point one-sided spectra of 256-sample frames, hop 128.
fn stoi_frames(x: &[f64], w: &[f64]) -> Vec<Vec<C64>> {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(STOI_NFFT);
    let mut spectra = Vec::new();
    let mut i = 0;
    while i + STOI_FRAME < x.len() {
        let mut buf = vec![C64::new(0.0, 0.0); STOI_NFFT];
        for k in 0..STOI_FRAME {
            buf[k] = C64::new(w[k] * x[i + k], 0.0);
        }
        fft.process(&mut buf);
        buf.truncate(STOI_NFFT / 2 + 1);
        spectra.push(buf);
        i += STOI_HOP;
    }
    spectra
}

/// Bin ranges of the 15 one-third-octave bands starting at 150 Hz, with
/// band edges snapped to the nearest FFT bin.
fn third_octave_bands() -> Vec<(usize, usize)> {
    let bin_hz = |i: usize| i as f64 * STOI_FS as f64 / STOI_NFFT as f64;
    let nearest_bin = |target: f64| -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for i in 0..=STOI_NFFT / 2 {
            let d = (bin_hz(i) - target).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    };
    (0..STOI_BANDS)
        .map(|k| {
            let lo = STOI_MIN_FREQ * 2f64.powf((2.0 * k as f64 - 1.0) / 6.0);
            let hi = STOI_MIN_FREQ * 2f64.powf((2.0 * k as f64 + 1.0) / 6.0);
            (nearest_bin(lo), nearest_bin(hi))
        })
        .collect()
}

/// Short-time objective intelligibility of `estimate` against `reference`.
///
/// Signals are resampled to 10 kHz, reference-silent frames are removed,
/// and clipped normalized correlations between one-third-octave band
/// envelopes are averaged over 384 ms segments. Typically in [0, 1];
/// slightly negative values are possible for adversarial inputs.
pub fn stoi(estimate: &[f64], reference: &[f64], sample_rate: u32) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::shape(format!(
            "stoi length mismatch: estimate {} vs reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    if reference.iter().all(|&v| v == 0.0) {
        return Err(Error::degenerate("stoi with silent reference"));
    }
    let x = resample(reference, sample_rate, STOI_FS)?;
    let y = resample(estimate, sample_rate, STOI_FS)?;
    let w = stoi_window();
    let (x_sil, y_sil) = remove_silent_frames(&x, &y, &w)?;
    let xs = stoi_frames(&x_sil, &w);
    let ys = stoi_frames(&y_sil, &w);
    if xs.len() < STOI_SEG {
        return Err(Error::degenerate(format!(
            "stoi needs at least {STOI_SEG} frames after silent-frame removal, got {}",
            xs.len()
        )));
    }

    let bands = third_octave_bands();
    let envelope = |spectra: &[Vec<C64>]| -> Array2<f64> {
        Array2::from_shape_fn((STOI_BANDS, spectra.len()), |(b, m)| {
            let (lo, hi) = bands[b];
            spectra[m][lo..hi]
                .iter()
                .map(|v| v.norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
    };
    let ex = envelope(&xs);
    let ey = envelope(&ys);

    let clip = 10f64.powf(-STOI_BETA_DB / 20.0);
    let frames = xs.len();
    let mut acc = 0.0;
    let mut count = 0usize;
    for m in STOI_SEG..=frames {
        for b in 0..STOI_BANDS {
            let xr: Vec<f64> = (m - STOI_SEG..m).map(|t| ex[(b, t)]).collect();
            let yr: Vec<f64> = (m - STOI_SEG..m).map(|t| ey[(b, t)]).collect();
            let nx = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = yr.iter().map(|v| v * v).sum::<f64>().sqrt();
            let alpha = nx / (ny + EPS);
            let yc: Vec<f64> = yr
                .iter()
                .zip(&xr)
                .map(|(&y, &x)| (alpha * y).min(x * (1.0 + clip)))
                .collect();
            let mx = xr.iter().sum::<f64>() / STOI_SEG as f64;
            let my = yc.iter().sum::<f64>() / STOI_SEG as f64;
            let mut dot = 0.0;
            let mut sx = 0.0;
            let mut sy = 0.0;
            for (x, y) in xr.iter().zip(&yc) {
                let (a, b) = (x - mx, y - my);
                dot += a * b;
                sx += a * a;
                sy += b * b;
            }
            acc += dot / (sx.sqrt() * sy.sqrt() + EPS);
            count += 1;
        }
    }
    Ok(acc / count as f64)
}

const SRMR_FS: u32 = 16_000;
const SRMR_CHANNELS: usize = 23;
const SRMR_LOW_FREQ: f64 = 125.0;
const EAR_Q: f64 = 9.26449;
const MIN_BW: f64 = 24.7;
const SRMR_MOD_CENTERS: [f64; 8] = [4.0, 6.5, 10.7, 17.6, 28.9, 47.5, 78.1, 128.0];
const SRMR_WIN_S: f64 = 0.256;
const SRMR_HOP_S: f64 = 0.064;

/// Center frequencies of `n` gammatone channels equally spaced on the ERB
/// scale between `low` and `high`, ascending.
fn erb_space(low: f64, high: f64, n: usize) -> Vec<f64> {
    let q_bw = EAR_Q * MIN_BW;
    let step = ((low + q_bw) / (high + q_bw)).ln() / n as f64;
    let mut cfs: Vec<f64> = (1..=n)
        .map(|i| -q_bw + (high + q_bw) * (step * i as f64).exp())
        .collect();
    cfs.reverse();
    cfs
}

/// 64 ms FIR approximation of a fourth-order gammatone filter at `cf`,
/// normalized to unit gain at its own center frequency.
fn gammatone_fir(cf: f64, fs: f64) -> Vec<f64> {
    let erb = cf / EAR_Q + MIN_BW;
    let decay = 2.0 * std::f64::consts::PI * 1.019 * erb;
    let len = (0.064 * fs).round() as usize;
    let mut g: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 / fs;
            t.powi(3) * (-decay * t).exp() * (2.0 * std::f64::consts::PI * cf * t).cos()
        })
        .collect();
    let mut re = 0.0;
    let mut im = 0.0;
    for (i, &v) in g.iter().enumerate() {
        let phase = -2.0 * std::f64::consts::PI * cf * i as f64 / fs;
        re += v * phase.cos();
        im += v * phase.sin();
    }
    let gain = re.hypot(im);
    for v in &mut g {
        *v /= gain;
    }
    g
}

/// Magnitude of the analytic signal via the FFT Hilbert transform.
fn hilbert_envelope(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        if k == 0 || (n % 2 == 0 && k == n / 2) {
            // Leave DC and Nyquist untouched.
        } else if k < n.div_ceil(2) {
            *v *= 2.0;
        } else {
            *v = C64::new(0.0, 0.0);
        }
    }
    ifft.process(&mut buf);
    buf.iter().map(|v| v.norm() / n as f64).collect()
}

/// Edges of the eight modulation bands: geometric midpoints between
/// adjacent centers, extrapolated at both ends.
fn modulation_band_edges() -> [f64; 9] {
    let c = SRMR_MOD_CENTERS;
    let mut edges = [0.0f64; 9];
    for j in 1..8 {
        edges[j] = (c[j - 1] * c[j]).sqrt();
    }
    edges[0] = c[0] * c[0] / edges[1];
    edges[8] = c[7] * c[7] / edges[7];
    edges
}

/// Speech-to-reverberation modulation energy ratio.
///
/// The signal is resampled to 16 kHz and passed through a 23-channel
/// gammatone filterbank spanning 125 Hz to Nyquist. Each channel's Hilbert
/// envelope is analyzed in 256 ms Hamming frames hopped by 64 ms; per-frame
/// modulation energy is binned into eight bands centered 4–128 Hz and the
/// ratio of the energy in bands 1–4 to bands 5–8 is returned. Reverberant
/// tails smear energy into the high modulation bands, lowering the score.
pub fn srmr(signal: &[f64], sample_rate: u32) -> Result<f64> {
    if signal.iter().all(|&v| v == 0.0) {
        return Err(Error::degenerate("srmr on silent input"));
    }
    let x = resample(signal, sample_rate, SRMR_FS)?;
    let fs = f64::from(SRMR_FS);
    let win = (SRMR_WIN_S * fs).round() as usize;
    let hop = (SRMR_HOP_S * fs).round() as usize;
    if x.len() < win {
        return Err(Error::degenerate(format!(
            "srmr needs at least {:.0} ms of signal, got {:.0} ms",
            SRMR_WIN_S * 1e3,
            x.len() as f64 / fs * 1e3
        )));
    }
    let hamming: Vec<f64> = (0..win)
        .map(|i| {
            0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (win - 1) as f64).cos()
        })
        .collect();
    // Zero-padding the modulation FFT refines the grid enough to resolve
    // the lowest (4 Hz) band.
    let fft_n = (win * 2).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(fft_n);
    let edges = modulation_band_edges();
    let bin_ranges: Vec<(usize, usize)> = (0..8)
        .map(|j| {
            let lo = (edges[j] * fft_n as f64 / fs).ceil() as usize;
            let hi = ((edges[j + 1] * fft_n as f64 / fs).ceil() as usize).min(fft_n / 2 + 1);
            (lo, hi)
        })
        .collect();

    let mut band_energy = [0.0f64; 8];
    for cf in erb_space(SRMR_LOW_FREQ, fs / 2.0, SRMR_CHANNELS) {
        let fir = gammatone_fir(cf, fs);
        let mut band = convolve(&x, &fir);
        band.truncate(x.len());
        let env = hilbert_envelope(&band);
        let mut start = 0;
        while start + win <= env.len() {
            let mut buf = vec![C64::new(0.0, 0.0); fft_n];
            for k in 0..win {
                buf[k] = C64::new(hamming[k] * env[start + k], 0.0);
            }
            fft.process(&mut buf);
            for (j, &(lo, hi)) in bin_ranges.iter().enumerate() {
                band_energy[j] += buf[lo..hi].iter().map(|v| v.norm_sqr()).sum::<f64>();
            }
            start += hop;
        }
    }
    let low: f64 = band_energy[..4].iter().sum();
    let high: f64 = band_energy[4..].iter().sum();
    if high == 0.0 {
        return Err(Error::degenerate("srmr high modulation bands carry no energy"));
    }
    Ok(low / high)
}

/// Per-utterance metric row. `pesq` is reserved and always `None`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricReport {
    pub sisnr: f64,
    pub spectral_mse: f64,
    pub stoi: f64,
    pub srmr: f64,
    pub pesq: Option<f64>,
}

impl MetricReport {
    /// Arithmetic mean over a batch of reports; `None` for an empty batch.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        Some(MetricReport {
            sisnr: reports.iter().map(|r| r.sisnr).sum::<f64>() / n,
            spectral_mse: reports.iter().map(|r| r.spectral_mse).sum::<f64>() / n,
            stoi: reports.iter().map(|r| r.stoi).sum::<f64>() / n,
            srmr: reports.iter().map(|r| r.srmr).sum::<f64>() / n,
            pesq: None,
        })
    }
}

/// Compute all metrics of a mono estimate against a mono reference.
///
/// Both waves must share sample rate and length (trim beforehand if
/// needed); channel 0 is used when either has several.
pub fn evaluate_utterance(
    estimate: &MultiChannelWave,
    reference: &MultiChannelWave,
) -> Result<MetricReport> {
    if estimate.sample_rate != reference.sample_rate {
        return Err(Error::config(format!(
            "sample-rate mismatch: estimate {} vs reference {}",
            estimate.sample_rate, reference.sample_rate
        )));
    }
    let est: Vec<f64> = estimate.channel(0).to_vec();
    let refr: Vec<f64> = reference.channel(0).to_vec();
    let cfg = crate::stft::StftConfig::default();
    let est_spec = crate::stft::stft(&estimate.take_channel(0), &cfg)?;
    let ref_spec = crate::stft::stft(&reference.take_channel(0), &cfg)?;
    Ok(MetricReport {
        sisnr: sisnr(&est, &refr)?,
        spectral_mse: spectral_mse(&est_spec, &ref_spec)?,
        stoi: stoi(&est, &refr, estimate.sample_rate)?,
        srmr: srmr(&est, estimate.sample_rate)?,
        pesq: None,
    })
}
