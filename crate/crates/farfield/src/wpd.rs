//! Weighted power minimization distortionless response (WPD) convolutional
//! beamforming: separation and dereverberation in a single filter.
//!
//! The filter acts on the stacked vector ỹ(t,f) = [y(t,f)ᵀ, y(t−D,f)ᵀ, …,
//! y(t−D−L+1,f)ᵀ]ᵀ of dimension (L+1)·R. Weights take the same
//! trace-normalized form as MVDR, with the target PSD Φ_x̃ estimated by a
//! mask over stacked vectors and the distortion statistics Φ_ỹ accumulated
//! as ỹỹ^H weighted by the inverse of a masked power estimate λ.

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::dereverb::stack_delayed;
use crate::linalg::{floor_matrix, masked_psd, solve_hermitian, trace};
use crate::mask::ComplexMask;
use crate::mvdr::{BeamformerWeights, TRACE_GUARD};
use crate::stft::Spectrogram;
use crate::{Error, Result, C64};

/// λ floor, relative to the mean input power (same policy as WPE).
pub const LAMBDA_FLOOR_REL: f64 = 1e-10;

/// Convolutional beamformer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WpdConfig {
    /// Delayed taps L per channel; zero degenerates to a plain spatial
    /// filter over the current frame.
    pub taps: usize,
    /// Prediction delay D in frames.
    pub delay: usize,
    /// Diagonal flooring for Φ_ỹ.
    pub eps: f64,
    /// λ floor relative to mean input power.
    pub lambda_floor: f64,
}

impl Default for WpdConfig {
    fn default() -> Self {
        Self { taps: 1, delay: 2, eps: 1e-4, lambda_floor: LAMBDA_FLOOR_REL }
    }
}

impl WpdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delay == 0 {
            return Err(Error::config("WPD prediction delay must be at least one frame"));
        }
        if !(self.eps >= 0.0) || !(self.lambda_floor >= 0.0) {
            return Err(Error::config("WPD flooring values must be non-negative"));
        }
        Ok(())
    }

    pub fn stacked_dim(&self, channels: usize) -> usize {
        (self.taps + 1) * channels
    }
}

/// Stacked observation [y(t,f)ᵀ, x̃(t−D,f)ᵀ]ᵀ: current frame first, then L
/// delayed frames.
pub fn wpd_stack(spec: &Spectrogram, taps: usize, delay: usize, t: usize, f: usize) -> Array1<C64> {
    let channels = spec.channels();
    let mut v = Array1::zeros((taps + 1) * channels);
    for m in 0..channels {
        v[m] = spec.values[(m, t, f)];
    }
    if taps > 0 {
        let delayed = stack_delayed(spec, taps, delay, t, f);
        for (i, value) in delayed.into_iter().enumerate() {
            v[channels + i] = value;
        }
    }
    v
}

/// The whole spectrogram restacked as an (L+1)·R-channel spectrogram, so
/// masked PSD estimation applies unchanged to stacked vectors.
pub fn wpd_stacked_spectrogram(spec: &Spectrogram, taps: usize, delay: usize) -> Spectrogram {
    let (frames, bins) = (spec.frames(), spec.bins());
    let dim = (taps + 1) * spec.channels();
    let mut values = Array3::zeros((dim, frames, bins));
    for t in 0..frames {
        for f in 0..bins {
            let stacked = wpd_stack(spec, taps, delay, t, f);
            for (k, value) in stacked.into_iter().enumerate() {
                values[(k, t, f)] = value;
            }
        }
    }
    Spectrogram {
        values,
        config: spec.config.clone(),
        sample_rate: spec.sample_rate,
        signal_len: spec.signal_len,
    }
}

/// Masked power estimate λ(t,f) = |M^λ(t,f)|²·‖y(t,f)‖²/R, floored relative
/// to the mean input power.
pub fn wpd_lambda(spec: &Spectrogram, mask_lambda: &ComplexMask, lambda_floor: f64) -> Array2<f64> {
    let floor = (spec.mean_power() * lambda_floor).max(f64::MIN_POSITIVE);
    let channels = spec.channels();
    let mut out = Array2::zeros((spec.frames(), spec.bins()));
    for t in 0..spec.frames() {
        for f in 0..spec.bins() {
            let mut power = 0.0;
            for m in 0..channels {
                power += spec.values[(m, t, f)].norm_sqr();
            }
            let lam = mask_lambda.values[(t, f)].norm_sqr() * power / channels as f64;
            out[(t, f)] = lam.max(floor);
        }
    }
    out
}

/// Convolutional beamformer weights of dimension (L+1)·R.
///
/// Per bin: Φ_x̃ comes from `mask_x` applied to stacked vectors, Φ_ỹ is the
/// λ-weighted stacked covariance floored by `cfg.eps`, and
/// w̃ = Φ_ỹ⁻¹Φ_x̃ũ_r / tr(Φ_ỹ⁻¹Φ_x̃) with ũ_r selecting the reference
/// channel inside the current-frame block. Vanishing traces fall back to the
/// padded passthrough and are flagged.
pub fn wpd_weights(
    spec: &Spectrogram,
    mask_x: &ComplexMask,
    mask_lambda: &ComplexMask,
    cfg: &WpdConfig,
    ref_channel: usize,
) -> Result<BeamformerWeights> {
    cfg.validate()?;
    if ref_channel >= spec.channels() {
        return Err(Error::config(format!(
            "reference channel {ref_channel} out of range for {} channels",
            spec.channels()
        )));
    }
    for (name, mask) in [("target", mask_x), ("lambda", mask_lambda)] {
        if mask.frames() != spec.frames() || mask.bins() != spec.bins() {
            return Err(Error::shape(format!(
                "{name} mask {}x{} vs spectrogram {} frames x {} bins",
                mask.frames(),
                mask.bins(),
                spec.frames(),
                spec.bins()
            )));
        }
    }

    let stacked = wpd_stacked_spectrogram(spec, cfg.taps, cfg.delay);
    let phi_x = masked_psd(&stacked, mask_x)?;
    let lambda = wpd_lambda(spec, mask_lambda, cfg.lambda_floor);

    let dim = cfg.stacked_dim(spec.channels());
    let bins = spec.bins();
    let mut values = Array2::zeros((bins, dim));
    let mut degenerate = vec![false; bins];
    for f in 0..bins {
        let mut phi_y = Array2::<C64>::zeros((dim, dim));
        for t in 0..spec.frames() {
            let w = 1.0 / lambda[(t, f)];
            for i in 0..dim {
                let si = stacked.values[(i, t, f)] * w;
                if si.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..dim {
                    phi_y[(i, j)] += si * stacked.values[(j, t, f)].conj();
                }
            }
        }
        let floored = floor_matrix(&phi_y, cfg.eps);
        let x = solve_hermitian(&floored, &phi_x.mats[f])?;
        let tr = trace(&x);
        if tr.norm() < TRACE_GUARD {
            values[(f, ref_channel)] = C64::new(1.0, 0.0);
            degenerate[f] = true;
            continue;
        }
        for k in 0..dim {
            values[(f, k)] = x[(k, ref_channel)] / tr;
        }
    }
    Ok(BeamformerWeights { values, degenerate })
}

/// d̂(t,f) = w̃(f)^H ỹ(t,f): weights, then the stacked inner product.
pub fn wpd_enhance(
    spec: &Spectrogram,
    mask_x: &ComplexMask,
    mask_lambda: &ComplexMask,
    cfg: &WpdConfig,
    ref_channel: usize,
) -> Result<Spectrogram> {
    let weights = wpd_weights(spec, mask_x, mask_lambda, cfg, ref_channel)?;
    apply_stacked_filter(&weights, spec, cfg)
}

/// Frame-wise w̃^H ỹ for precomputed stacked weights.
pub fn apply_stacked_filter(
    weights: &BeamformerWeights,
    spec: &Spectrogram,
    cfg: &WpdConfig,
) -> Result<Spectrogram> {
    let dim = cfg.stacked_dim(spec.channels());
    if weights.dim() != dim || weights.bins() != spec.bins() {
        return Err(Error::shape(format!(
            "weights {}x{} vs stacked dim {} over {} bins",
            weights.bins(),
            weights.dim(),
            dim,
            spec.bins()
        )));
    }
    let (frames, bins) = (spec.frames(), spec.bins());
    let mut out = Array3::zeros((1, frames, bins));
    for t in 0..frames {
        for f in 0..bins {
            let stacked = wpd_stack(spec, cfg.taps, cfg.delay, t, f);
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..dim {
                acc += weights.values[(f, k)].conj() * stacked[k];
            }
            out[(0, t, f)] = acc;
        }
    }
    Ok(Spectrogram {
        values: out,
        config: spec.config.clone(),
        sample_rate: spec.sample_rate,
        signal_len: spec.signal_len,
    })
}
