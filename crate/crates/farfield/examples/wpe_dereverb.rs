//! Dereverberation with the weighted-prediction-error filter.
//!
//! Reverberates a speech-like source, then compares iterative WPE,
//! mask-weighted WPE and direct spectral masking on the single reference
//! channel. SRMR rises and the late-tail MSE falls as the tail is removed.
//!
//!     cargo run --example wpe_dereverb

use farfield::dereverb::{specm_apply, wpe_iterative, wpe_masked, WpeConfig};
use farfield::mask::{oracle_complex_mask, ComplexMask};
use farfield::pipeline::VARIANCE_MASK_FLOOR;
use farfield::metrics::{spectral_mse, srmr};
use farfield::room::{image_method_rir, RoomScene};
use farfield::room::ArrayGeometry;
use farfield::stft::{istft, stft, Spectrogram, StftConfig};
use farfield::synth::speech_like;

fn main() -> farfield::Result<()> {
    let fs = 16_000;
    let dry = speech_like(5, 3 * fs as usize, fs);

    let scene = RoomScene {
        room: [6.0, 5.0, 3.2],
        t60: 0.6,
        array_center: [3.0, 1.8, 1.5],
        geometry: ArrayGeometry { positions: vec![[0.0, 0.0, 0.0]] },
        target_pos: [3.0, 3.8, 1.6],
        interferer_pos: [1.5, 3.0, 1.6],
        noise_pos: [5.0, 3.5, 1.8],
        snr_db: 0.0,
        sir_db: 0.0,
        angle_bin: 0,
        angle_diff_deg: 0.0,
        noise_id: 0,
        seed: 0,
    };
    let rir = image_method_rir(&scene.room, &scene.target_pos, &scene.mic_positions(), scene.t60, fs)?;
    let reverberant = rir.convolve_mono(&dry);
    let early = rir.truncated_early().convolve_mono(&dry);

    let cfg = StftConfig::default();
    let spec = stft(&reverberant, &cfg)?;
    let early_spec = stft(&early, &cfg)?;
    let wpe_cfg = WpeConfig::single_channel();

    let oracle = oracle_complex_mask(&early_spec, &spec, 0)?;
    // As a variance model the oracle mask needs a floor: it is exactly zero
    // in target-silent frames, which would hand those frames unbounded
    // least-squares weight.
    let variance = ComplexMask::new(oracle.values.mapv(|v| {
        if v.norm() < VARIANCE_MASK_FLOOR {
            farfield::C64::new(VARIANCE_MASK_FLOOR, 0.0)
        } else {
            v
        }
    }));

    let outputs: Vec<(&str, Spectrogram)> = vec![
        ("reverberant input", spec.clone()),
        ("WPE, iterative", wpe_iterative(&spec, &wpe_cfg)?),
        ("WPE, oracle mask", wpe_masked(&spec, &variance, &wpe_cfg)?),
        ("spectral masking", specm_apply(&spec, &oracle)?),
    ];

    println!(
        "T60 {:.2} s | prediction: {} taps, delay {} frames",
        scene.t60, wpe_cfg.taps, wpe_cfg.delay
    );
    println!("{:<20} {:>8} {:>14}", "", "SRMR", "MSE vs early");
    for (name, out) in &outputs {
        let wave = istft(out)?;
        let x: Vec<f64> = wave.channel(0).to_vec();
        println!(
            "{name:<20} {:>8.3} {:>14.4e}",
            srmr(&x, fs)?,
            spectral_mse(out, &early_spec)?
        );
    }
    Ok(())
}
