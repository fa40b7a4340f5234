//! What the evaluation metrics reward and punish.
//!
//! Scores a clean utterance against progressively degraded copies of
//! itself: gain changes (which SISNR and STOI forgive), additive noise,
//! and a reverberant tail (which SRMR punishes without needing the
//! reference at all).
//!
//!     cargo run --example evaluate_metrics

use farfield::metrics::{evaluate_utterance, sisnr, MetricReport};
use farfield::room::{image_method_rir, ArrayGeometry, RoomScene};
use farfield::synth::{speech_like, white_noise};
use farfield::wave::MultiChannelWave;

fn row(name: &str, r: &MetricReport) {
    println!(
        "{name:<22} {:>+9.2} {:>12.3e} {:>8.1} {:>7.3}",
        r.sisnr,
        r.spectral_mse,
        100.0 * r.stoi,
        r.srmr
    );
}

fn main() -> farfield::Result<()> {
    let fs = 16_000;
    let len = 3 * fs as usize;
    let clean = speech_like(9, len, fs);
    let noise = white_noise(10, len);
    let reference = MultiChannelWave::from_mono(clean.clone(), fs);

    println!(
        "{:<22} {:>9} {:>12} {:>8} {:>7}",
        "estimate", "SISNR(dB)", "spec. MSE", "STOI(%)", "SRMR"
    );

    row("identical", &evaluate_utterance(&reference, &reference)?);

    let louder: Vec<f64> = clean.iter().map(|v| 3.7 * v).collect();
    row(
        "3.7x louder",
        &evaluate_utterance(&MultiChannelWave::from_mono(louder, fs), &reference)?,
    );

    for snr_db in [20.0, 5.0] {
        let g = (clean.iter().map(|v| v * v).sum::<f64>()
            / (noise.iter().map(|v| v * v).sum::<f64>() * 10f64.powf(snr_db / 10.0)))
        .sqrt();
        let noisy: Vec<f64> = clean.iter().zip(&noise).map(|(s, n)| s + g * n).collect();
        row(
            &format!("noise at {snr_db:.0} dB SNR"),
            &evaluate_utterance(&MultiChannelWave::from_mono(noisy, fs), &reference)?,
        );
    }

    let scene = RoomScene {
        room: [6.0, 5.0, 3.2],
        t60: 0.7,
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
    let rir = image_method_rir(&scene.room, &scene.target_pos, &scene.mic_positions(), 0.7, fs)?;
    let reverberant = rir.convolve_mono(&clean);
    row("reverberated, T60 0.7", &evaluate_utterance(&reverberant, &reference)?);

    // SISNR is exactly scale invariant: any positive or negative gain maps
    // to the same score.
    let att: Vec<f64> = clean.iter().map(|v| -1e-3 * v).collect();
    println!(
        "\nsisnr(-0.001x) = {} dB (capped: estimate is a scaled reference)",
        sisnr(&att, &clean)?
    );
    Ok(())
}
