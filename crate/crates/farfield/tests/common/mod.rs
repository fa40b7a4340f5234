//! Shared fixtures for the integration tests: a synthetic source/noise corpus
//! on disk plus a few random-tensor helpers.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use farfield::synth::{speech_like, white_noise};
use farfield::wave::{write_wav, MultiChannelWave, WavEncoding};
use farfield::C64;
use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FS: u32 = 16_000;

/// Manifest paths for a corpus written by [`write_corpus`].
pub struct Corpus {
    pub sources: PathBuf,
    pub noises: PathBuf,
}

/// Writes `n_sources` speech-shaped WAVs and `n_noises` white-noise WAVs of
/// `secs` seconds under `dir`, plus the two newline-list manifests that the
/// simulator consumes.
pub fn write_corpus(dir: &Path, n_sources: usize, n_noises: usize, secs: f64, seed: u64) -> Corpus {
    let len = (secs * FS as f64).round() as usize;
    let src_dir = dir.join("sources");
    let noise_dir = dir.join("noises");
    fs::create_dir_all(&src_dir).unwrap();
    fs::create_dir_all(&noise_dir).unwrap();
    let mut src_list = String::new();
    for i in 0..n_sources {
        let name = format!("src_{i:02}.wav");
        let wave = MultiChannelWave::from_mono(speech_like(seed + i as u64, len, FS), FS);
        write_wav(src_dir.join(&name), &wave, WavEncoding::Float32).unwrap();
        src_list.push_str(&format!("sources/{name}\n"));
    }
    let mut noise_list = String::new();
    for i in 0..n_noises {
        let name = format!("noise_{i:02}.wav");
        let wave =
            MultiChannelWave::from_mono(white_noise(seed + 1000 + i as u64, len), FS);
        write_wav(noise_dir.join(&name), &wave, WavEncoding::Float32).unwrap();
        noise_list.push_str(&format!("noises/{name}\n"));
    }
    let sources = dir.join("sources.txt");
    let noises = dir.join("noises.txt");
    fs::write(&sources, src_list).unwrap();
    fs::write(&noises, noise_list).unwrap();
    Corpus { sources, noises }
}

/// Random complex matrix with entries uniform in the unit square.
pub fn random_complex_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<C64> {
    Array2::from_shape_fn((rows, cols), |_| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

/// A * A^H: Hermitian positive semi-definite with rank ≤ cols.
pub fn gram(a: &Array2<C64>) -> Array2<C64> {
    let (n, k) = (a.nrows(), a.ncols());
    let mut m = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for p in 0..k {
                acc += a[(i, p)] * a[(j, p)].conj();
            }
            m[(i, j)] = acc;
        }
    }
    m
}

/// Random multichannel STFT-domain tensor (channels x frames x bins).
pub fn random_spectrogram_values(
    rng: &mut ChaCha8Rng,
    channels: usize,
    frames: usize,
    bins: usize,
) -> Array3<C64> {
    Array3::from_shape_fn((channels, frames, bins), |_| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
}

/// Relative l2 error between two real signals of equal length.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}
