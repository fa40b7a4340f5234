//! Deterministic synthetic test signals.
//!
//! Real recordings are not bundled with the crate, so fixtures, examples and
//! the simulation corpus are driven by these generators: seeded white noise
//! and a speech-shaped signal (tilted spectrum plus syllabic on/off
//! envelope) that behaves like speech for masking, dereverberation and the
//! modulation-based metrics.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Uniform white noise in [-1, 1], RMS-normalized to 0.1.
pub fn white_noise(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut v: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize_rms(&mut v, 0.1);
    v
}

/// Speech-shaped signal: lowpass-tilted noise with random syllable-rate
/// bursts and pauses, RMS-normalized to 0.1.
pub fn speech_like(seed: u64, len: usize, fs: u32) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x5851_f42d_4c95_7f2d));
    let fsf = f64::from(fs);

    // Spectral tilt: two cascaded one-pole lowpasses over white noise.
    let mut v = vec![0.0f64; len];
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    let pole = 0.86;
    for x in v.iter_mut() {
        let w: f64 = rng.gen_range(-1.0..1.0);
        s1 = pole * s1 + (1.0 - pole) * w;
        s2 = pole * s2 + (1.0 - pole) * s1;
        *x = s2;
    }

    // Syllabic envelope: alternating voiced bursts and near-silent gaps with
    // 20 ms raised-cosine ramps.
    let ramp = (0.02 * fsf) as usize;
    let mut envelope = vec![0.0f64; len];
    let mut pos = 0usize;
    let mut voiced = rng.gen_bool(0.7);
    while pos < len {
        let seg_ms = if voiced {
            rng.gen_range(120.0..350.0)
        } else {
            rng.gen_range(60.0..200.0)
        };
        let seg = ((seg_ms / 1000.0 * fsf) as usize).max(1);
        let level = if voiced { rng.gen_range(0.5..1.0) } else { 0.02 };
        for i in 0..seg.min(len - pos) {
            let fade_in = if i < ramp {
                0.5 - 0.5 * (std::f64::consts::PI * i as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            envelope[pos + i] = envelope[pos + i].max(level * fade_in);
        }
        pos += seg;
        voiced = !voiced;
    }
    // Smooth the envelope to avoid clicks at segment boundaries.
    let mut e = 0.0f64;
    let a = (-1.0 / (0.01 * fsf)).exp();
    for i in 0..len {
        e = a * e + (1.0 - a) * envelope[i];
        envelope[i] = e;
    }

    for (x, g) in v.iter_mut().zip(envelope.iter()) {
        *x *= g;
    }
    normalize_rms(&mut v, 0.1);
    v
}

fn normalize_rms(v: &mut [f64], target: f64) {
    let energy: f64 = v.iter().map(|x| x * x).sum();
    if energy > 0.0 {
        let g = target / (energy / v.len() as f64).sqrt();
        v.iter_mut().for_each(|x| *x *= g);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(white_noise(5, 100), white_noise(5, 100));
        assert_eq!(speech_like(5, 1000, 16_000), speech_like(5, 1000, 16_000));
        assert_ne!(speech_like(5, 1000, 16_000), speech_like(6, 1000, 16_000));
    }

    #[test]
    fn speech_like_has_pauses_and_bursts() {
        let v = speech_like(11, 48_000, 16_000);
        let frame = 1600;
        let mut powers: Vec<f64> = v
            .chunks(frame)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>() / c.len() as f64)
            .collect();
        powers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let quiet = powers[powers.len() / 10];
        let loud = powers[powers.len() * 9 / 10];
        assert!(loud > 20.0 * quiet.max(1e-12), "loud {loud} quiet {quiet}");
    }

    #[test]
    fn rms_is_normalized() {
        for v in [white_noise(1, 4096), speech_like(2, 4096, 16_000)] {
            let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
            assert!((rms - 0.1).abs() < 1e-9);
        }
    }
}
