//! Sample one cocktail-party scene and render it.
//!
//! Draws a random room, source layout, T60 and SNR/SIR, renders the
//! mixture with the image method and verifies the requested ratios and the
//! Schroeder-measured reverberation time.
//!
//!     cargo run --example simulate_scene [seed]

use farfield::room::{measure_t60, sample_scene, simulate_mixture, CorpusManifest};
use farfield::synth::{speech_like, white_noise};
use farfield::wave::MultiChannelWave;

fn main() -> farfield::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let fs = 16_000;
    let len = 2 * fs as usize;

    // The scene sampler only needs the noise list to draw a noise index;
    // the audio itself is synthetic here.
    let manifest = CorpusManifest {
        sources: vec![],
        noises: vec!["noise_0.wav".into(), "noise_1.wav".into()],
    };
    let scene = sample_scene(seed, &manifest)?;

    println!("seed {seed}");
    println!(
        "room {:.2} x {:.2} x {:.2} m | T60 {:.2} s",
        scene.room[0], scene.room[1], scene.room[2], scene.t60
    );
    println!(
        "array at ({:.2}, {:.2}, {:.2}), target {:.2} m away, interferer split {:.1} deg (bin {})",
        scene.array_center[0],
        scene.array_center[1],
        scene.array_center[2],
        dist(&scene.target_pos, &scene.array_center),
        scene.angle_diff_deg,
        scene.angle_bin
    );
    println!("requested SNR {:+.1} dB | SIR {:+.1} dB", scene.snr_db, scene.sir_db);

    let target = MultiChannelWave::from_mono(speech_like(seed, len, fs), fs);
    let interferer = MultiChannelWave::from_mono(speech_like(seed + 1, len, fs), fs);
    let noise = MultiChannelWave::from_mono(white_noise(seed + 2, len), fs);
    let sim = simulate_mixture(&target, &interferer, &noise, &scene)?;

    let e_target = sim.reverberant_target.channel_energy(0);
    let snr = 10.0 * (e_target / sim.noise.channel_energy(0)).log10();
    let sir = 10.0 * (e_target / sim.interferer.channel_energy(0)).log10();
    let t60 = measure_t60(&sim.target_rir, 0)?;

    println!(
        "rendered  SNR {snr:+.3} dB | SIR {sir:+.3} dB | Schroeder T60 {t60:.2} s ({:+.0}%)",
        100.0 * (t60 - scene.t60) / scene.t60
    );
    println!(
        "mixture: {} channels x {} samples ({:.1} s)",
        sim.mixture.channels(),
        sim.mixture.len(),
        sim.mixture.len() as f64 / f64::from(fs)
    );
    Ok(())
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}
