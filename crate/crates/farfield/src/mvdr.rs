//! Mask-based MVDR beamforming.
//!
//! Weights follow the trace-normalized form w(f) = Φ_n(f)⁻¹Φ_x(f) u_r /
//! tr(Φ_n(f)⁻¹Φ_x(f)), with both PSDs estimated from time-frequency masks
//! over the same mixture. The reference channel picks which column of the
//! solved system becomes the weight vector, so a rank-one target PSD with a
//! reference-normalized steering vector is passed through undistorted.

use ndarray::{Array2, Array3};

use crate::linalg::{floor_matrix, masked_psd, solve_hermitian, trace, NarrowbandMatrixSet};
use crate::mask::ComplexMask;
use crate::stft::Spectrogram;
use crate::{Error, Result, C64};

/// Trace magnitudes below this fall back to a reference-channel passthrough
/// instead of dividing by a vanishing normalizer.
pub const TRACE_GUARD: f64 = 1e-10;

/// Default diagonal flooring applied to the noise PSD before the solve.
pub const DEFAULT_MVDR_EPS: f64 = 1e-5;

/// One weight vector per frequency bin.
#[derive(Debug, Clone)]
pub struct BeamformerWeights {
    /// bins x dim; row f holds w(f).
    pub values: Array2<C64>,
    /// Bins where the trace guard tripped and the weight fell back to the
    /// reference selector u_r.
    pub degenerate: Vec<bool>,
}

impl BeamformerWeights {
    pub fn bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn degenerate_count(&self) -> usize {
        self.degenerate.iter().filter(|d| **d).count()
    }

    /// Reference-channel passthrough for every bin.
    pub fn passthrough(bins: usize, dim: usize, ref_channel: usize) -> Self {
        let mut values = Array2::zeros((bins, dim));
        for f in 0..bins {
            values[(f, ref_channel)] = C64::new(1.0, 0.0);
        }
        Self { values, degenerate: vec![true; bins] }
    }
}

/// MVDR weights from target and noise PSD sets.
///
/// Per bin: Φ_n is floored by `eps` (relative to its trace), the system
/// Φ_n X = Φ_x is solved, and w = X u_r / tr(X). A trace magnitude under
/// [`TRACE_GUARD`] marks the bin degenerate and substitutes u_r.
pub fn mvdr_weights(
    phi_x: &NarrowbandMatrixSet,
    phi_n: &NarrowbandMatrixSet,
    ref_channel: usize,
    eps: f64,
) -> Result<BeamformerWeights> {
    if phi_x.bins() != phi_n.bins() || phi_x.dim != phi_n.dim {
        return Err(Error::shape(format!(
            "PSD sets disagree: {}x{} bins of dim {} vs {}",
            phi_x.bins(),
            phi_n.bins(),
            phi_x.dim,
            phi_n.dim
        )));
    }
    if ref_channel >= phi_x.dim {
        return Err(Error::config(format!(
            "reference channel {ref_channel} out of range for dim {}",
            phi_x.dim
        )));
    }
    if !(eps >= 0.0) {
        return Err(Error::config(format!("flooring eps {eps} must be non-negative")));
    }
    let dim = phi_x.dim;
    let bins = phi_x.bins();
    let mut values = Array2::zeros((bins, dim));
    let mut degenerate = vec![false; bins];
    for f in 0..bins {
        let floored = floor_matrix(&phi_n.mats[f], eps);
        let x = solve_hermitian(&floored, &phi_x.mats[f])?;
        let tr = trace(&x);
        if tr.norm() < TRACE_GUARD {
            values[(f, ref_channel)] = C64::new(1.0, 0.0);
            degenerate[f] = true;
            continue;
        }
        for m in 0..dim {
            values[(f, m)] = x[(m, ref_channel)] / tr;
        }
    }
    Ok(BeamformerWeights { values, degenerate })
}

/// Frame-wise inner product Ŝ(t,f) = w(f)^H y(t,f), producing a single
/// channel.
pub fn apply_filter(weights: &BeamformerWeights, spec: &Spectrogram) -> Result<Spectrogram> {
    if weights.dim() != spec.channels() || weights.bins() != spec.bins() {
        return Err(Error::shape(format!(
            "weights {}x{} vs spectrogram {} channels x {} bins",
            weights.bins(),
            weights.dim(),
            spec.channels(),
            spec.bins()
        )));
    }
    let (frames, bins, channels) = (spec.frames(), spec.bins(), spec.channels());
    let mut out = Array3::zeros((1, frames, bins));
    for t in 0..frames {
        for f in 0..bins {
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..channels {
                acc += weights.values[(f, m)].conj() * spec.values[(m, t, f)];
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

/// Masked-PSD MVDR separation: estimate Φ_x and Φ_n from the two masks over
/// the mixture, form weights, and beamform.
pub fn separate_mvdr(
    mixture: &Spectrogram,
    mask_x: &ComplexMask,
    mask_n: &ComplexMask,
    ref_channel: usize,
    eps: f64,
) -> Result<Spectrogram> {
    let phi_x = masked_psd(mixture, mask_x)?;
    let phi_n = masked_psd(mixture, mask_n)?;
    let weights = mvdr_weights(&phi_x, &phi_n, ref_channel, eps)?;
    apply_filter(&weights, mixture)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_set(bins: usize, dim: usize) -> NarrowbandMatrixSet {
        let mut set = NarrowbandMatrixSet::zeros(bins, dim);
        for m in &mut set.mats {
            for i in 0..dim {
                m[(i, i)] = C64::new(1.0, 0.0);
            }
        }
        set
    }

    fn random_pd(rng: &mut ChaCha8Rng, dim: usize) -> Array2<C64> {
        let a = Array2::from_shape_fn((dim, dim), |_| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let mut m = Array2::<C64>::zeros((dim, dim));
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..dim {
                    acc += a[(i, k)] * a[(j, k)].conj();
                }
                m[(i, j)] = acc;
            }
            m[(i, i)] += C64::new(0.1, 0.0);
        }
        m
    }

    /// Steering vector with the reference entry pinned to 1.
    fn reference_normalized_steering(rng: &mut ChaCha8Rng, dim: usize) -> Array1<C64> {
        let mut g = Array1::from_shape_fn(dim, |_| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        g[0] = C64::new(1.0, 0.0);
        g
    }

    #[test]
    fn identity_psds_give_half_reference_selector() {
        let phi = identity_set(3, 2);
        let w = mvdr_weights(&phi, &phi, 0, 0.0).unwrap();
        for f in 0..3 {
            assert!((w.values[(f, 0)] - C64::new(0.5, 0.0)).norm() < 1e-12);
            assert!(w.values[(f, 1)].norm() < 1e-12);
            assert!(!w.degenerate[f]);
        }
    }

    #[test]
    fn rank_one_target_is_distortionless_for_any_pd_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let dim = 4;
            let g = reference_normalized_steering(&mut rng, dim);
            let sigma = rng.gen_range(0.1..4.0);
            let mut phi_x = NarrowbandMatrixSet::zeros(1, dim);
            for i in 0..dim {
                for j in 0..dim {
                    phi_x.mats[0][(i, j)] = g[i] * g[j].conj() * sigma;
                }
            }
            let mut phi_n = NarrowbandMatrixSet::zeros(1, dim);
            phi_n.mats[0] = random_pd(&mut rng, dim);
            let w = mvdr_weights(&phi_x, &phi_n, 0, 1e-5).unwrap();
            let mut response = C64::new(0.0, 0.0);
            for m in 0..dim {
                response += w.values[(0, m)].conj() * g[m];
            }
            assert!(
                (response - C64::new(1.0, 0.0)).norm() < 1e-10,
                "w^H g = {response} off unity"
            );
        }
    }

    #[test]
    fn weights_ignore_psd_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = 3;
        let mut phi_x = NarrowbandMatrixSet::zeros(1, dim);
        phi_x.mats[0] = random_pd(&mut rng, dim);
        let mut phi_n = NarrowbandMatrixSet::zeros(1, dim);
        phi_n.mats[0] = random_pd(&mut rng, dim);

        let base = mvdr_weights(&phi_x, &phi_n, 0, 1e-5).unwrap();

        let mut phi_x2 = NarrowbandMatrixSet::zeros(1, dim);
        phi_x2.mats[0] = phi_x.mats[0].mapv(|v| v * 7.3);
        let mut phi_n2 = NarrowbandMatrixSet::zeros(1, dim);
        phi_n2.mats[0] = phi_n.mats[0].mapv(|v| v * 0.02);
        let scaled = mvdr_weights(&phi_x2, &phi_n2, 0, 1e-5).unwrap();

        for m in 0..dim {
            assert!((base.values[(0, m)] - scaled.values[(0, m)]).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_target_psd_falls_back_to_passthrough() {
        let phi_x = NarrowbandMatrixSet::zeros(2, 3);
        let phi_n = identity_set(2, 3);
        let w = mvdr_weights(&phi_x, &phi_n, 1, 1e-5).unwrap();
        for f in 0..2 {
            assert!(w.degenerate[f]);
            assert!((w.values[(f, 1)] - C64::new(1.0, 0.0)).norm() == 0.0);
        }
        assert_eq!(w.degenerate_count(), 2);
    }

    fn random_spectrogram(rng: &mut ChaCha8Rng, channels: usize, frames: usize) -> Spectrogram {
        let config = crate::stft::StftConfig::default();
        let bins = config.bins();
        let values = Array3::from_shape_fn((channels, frames, bins), |_| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        Spectrogram { values, config, sample_rate: 16_000, signal_len: frames * 256 }
    }

    #[test]
    fn passthrough_weights_return_reference_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = random_spectrogram(&mut rng, 3, 4);
        let w = BeamformerWeights::passthrough(spec.bins(), 3, 2);
        let out = apply_filter(&w, &spec).unwrap();
        assert_eq!(out.channels(), 1);
        for t in 0..spec.frames() {
            for f in 0..spec.bins() {
                assert_eq!(out.values[(0, t, f)], spec.values[(2, t, f)]);
            }
        }
    }

    #[test]
    fn apply_filter_is_linear_in_the_spectrogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_spectrogram(&mut rng, 2, 3);
        let b = random_spectrogram(&mut rng, 2, 3);
        let mut sum = a.clone();
        sum.values = &a.values + &b.values;

        let mut w = BeamformerWeights::passthrough(a.bins(), 2, 0);
        for f in 0..a.bins() {
            w.values[(f, 0)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            w.values[(f, 1)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let out_sum = apply_filter(&w, &sum).unwrap();
        let out_a = apply_filter(&w, &a).unwrap();
        let out_b = apply_filter(&w, &b).unwrap();
        for t in 0..a.frames() {
            for f in 0..a.bins() {
                let lhs = out_sum.values[(0, t, f)];
                let rhs = out_a.values[(0, t, f)] + out_b.values[(0, t, f)];
                assert!((lhs - rhs).norm() < 1e-12);
            }
        }
    }

    /// A noiseless plane-wave source with oracle masks comes back unchanged
    /// at the reference channel.
    #[test]
    fn separate_mvdr_recovers_noiseless_single_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let channels = 4;
        let frames = 24;
        let config = crate::stft::StftConfig::default();
        let bins = config.bins();

        let mut g = vec![C64::new(1.0, 0.0); channels];
        for item in g.iter_mut().skip(1) {
            let phase = rng.gen_range(-3.0..3.0);
            *item = C64::new(0.0, phase).exp();
        }
        let mut values = Array3::zeros((channels, frames, bins));
        let mut target = Array3::zeros((channels, frames, bins));
        for t in 0..frames {
            for f in 0..bins {
                let s = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                for (m, gm) in g.iter().enumerate() {
                    values[(m, t, f)] = s * gm;
                    target[(m, t, f)] = s * gm;
                }
            }
        }
        let mixture = Spectrogram {
            values,
            config: config.clone(),
            sample_rate: 16_000,
            signal_len: frames * 256,
        };
        let target = Spectrogram { values: target, config, sample_rate: 16_000, signal_len: frames * 256 };

        let mask_x = oracle(&target, &mixture);
        let mask_n = mask_x.complement();
        let out = separate_mvdr(&mixture, &mask_x, &mask_n, 0, 1e-5).unwrap();

        let mut err = 0.0f64;
        let mut refpow = 0.0f64;
        for t in 0..frames {
            for f in 0..bins {
                err += (out.values[(0, t, f)] - mixture.values[(0, t, f)]).norm_sqr();
                refpow += mixture.values[(0, t, f)].norm_sqr();
            }
        }
        assert!(err / refpow < 1e-16, "relative error {}", err / refpow);
    }

    #[test]
    fn identical_masks_still_produce_finite_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let spec = random_spectrogram(&mut rng, 3, 16);
        let mask = oracle(&spec, &spec);
        let out = separate_mvdr(&spec, &mask, &mask, 0, 1e-5).unwrap();
        assert!(out.values.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
    }

    fn oracle(target: &Spectrogram, mixture: &Spectrogram) -> ComplexMask {
        crate::mask::oracle_complex_mask(target, mixture, 0).unwrap()
    }
}
