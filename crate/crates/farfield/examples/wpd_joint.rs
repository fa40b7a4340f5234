//! Joint dereverberation and beamforming with a single convolutional
//! filter.
//!
//! The stacked weight acts on the current frame and a window of delayed
//! frames at once, so one solve removes both the interfering sources and
//! the late reverberation. Compared against MVDR alone on the same scene.
//!
//!     cargo run --example wpd_joint

use farfield::mask::oracle_complex_mask;
use farfield::metrics::{sisnr, srmr};
use farfield::mvdr::separate_mvdr;
use farfield::pipeline::VARIANCE_MASK_FLOOR;
use farfield::room::{sample_scene, simulate_mixture, CorpusManifest};
use farfield::stft::{istft, stft, Spectrogram, StftConfig};
use farfield::synth::{speech_like, white_noise};
use farfield::wave::MultiChannelWave;
use farfield::wpd::{wpd_enhance, WpdConfig};
use farfield::C64;

fn main() -> farfield::Result<()> {
    let fs = 16_000;
    let len = 2 * fs as usize;
    let manifest = CorpusManifest { sources: vec![], noises: vec!["n.wav".into()] };
    let scene = sample_scene(33, &manifest)?;

    let target = MultiChannelWave::from_mono(speech_like(1, len, fs), fs);
    let interferer = MultiChannelWave::from_mono(speech_like(2, len, fs), fs);
    let noise = MultiChannelWave::from_mono(white_noise(3, len), fs);
    let sim = simulate_mixture(&target, &interferer, &noise, &scene)?;

    let cfg = StftConfig::default();
    let mixture = stft(&sim.mixture, &cfg)?;
    let early_spec = stft(&sim.early_target, &cfg)?;
    let reverberant_spec = stft(&sim.reverberant_target, &cfg)?;

    // One mask drives both jobs: it selects the early target for the
    // numerator PSD and, floored, models the desired-signal variance.
    let mask = oracle_complex_mask(&early_spec, &mixture, 0)?;
    let lambda_mask = farfield::mask::ComplexMask::new(mask.values.mapv(|v| {
        if v.norm() < VARIANCE_MASK_FLOOR { C64::new(VARIANCE_MASK_FLOOR, 0.0) } else { v }
    }));

    let wpd_cfg = WpdConfig::default();
    let joint = wpd_enhance(&mixture, &mask, &lambda_mask, &wpd_cfg, 0)?;

    let mask_n = oracle_complex_mask(
        &Spectrogram { values: &mixture.values - &reverberant_spec.values, ..mixture.clone() },
        &mixture,
        0,
    )?;
    let mvdr_only = separate_mvdr(&mixture, &mask, &mask_n, 0, 1e-5)?;

    let reference: Vec<f64> = sim.early_target.channel(0).to_vec();
    println!(
        "scene: T60 {:.2} s, SNR {:+.0} dB, SIR {:+.0} dB | WPD taps {} delay {}",
        scene.t60, scene.snr_db, scene.sir_db, wpd_cfg.taps, wpd_cfg.delay
    );
    println!("{:<22} {:>12} {:>8}", "", "SISNR(early)", "SRMR");
    for (name, spec) in [
        ("raw channel 0", mixture.take_channel(0)),
        ("MVDR", mvdr_only),
        ("WPD joint filter", joint),
    ] {
        let x: Vec<f64> = istft(&spec)?.channel(0).to_vec();
        println!("{name:<22} {:>+12.2} {:>8.3}", sisnr(&x, &reference)?, srmr(&x, fs)?);
    }
    Ok(())
}
