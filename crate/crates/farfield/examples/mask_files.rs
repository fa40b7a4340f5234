//! Supplying stage masks from files instead of oracles.
//!
//! Pipelines normally take masks from an estimator; here the masks are
//! computed once, written to disk in the crate's mask file format
//! (magic `CFMK`, dimensions, interleaved complex f32), loaded back and fed
//! to the separation pipeline explicitly. The file round trip costs only
//! f32 quantization.
//!
//!     cargo run --example mask_files

use farfield::mask::{load_mask, oracle_complex_mask, save_mask};
use farfield::metrics::sisnr;
use farfield::pipeline::{run, ExplicitMasks, MaskProvider, OracleRefs, PipelineConfig};
use farfield::room::{sample_scene, simulate_mixture, CorpusManifest};
use farfield::stft::{istft, stft, Spectrogram, StftConfig};
use farfield::synth::{speech_like, white_noise};
use farfield::wave::MultiChannelWave;

fn main() -> farfield::Result<()> {
    let fs = 16_000;
    let len = 2 * fs as usize;
    let manifest = CorpusManifest { sources: vec![], noises: vec!["n.wav".into()] };
    let scene = sample_scene(3, &manifest)?;

    let target = MultiChannelWave::from_mono(speech_like(1, len, fs), fs);
    let interferer = MultiChannelWave::from_mono(speech_like(2, len, fs), fs);
    let noise = MultiChannelWave::from_mono(white_noise(3, len), fs);
    let sim = simulate_mixture(&target, &interferer, &noise, &scene)?;

    let cfg = StftConfig::default();
    let mixture = stft(&sim.mixture, &cfg)?;
    let reverberant = stft(&sim.reverberant_target, &cfg)?;

    let mask_x = oracle_complex_mask(&reverberant, &mixture, 0)?;
    let residual = Spectrogram {
        values: &mixture.values - &reverberant.values,
        ..mixture.clone()
    };
    let mask_n = oracle_complex_mask(&residual, &mixture, 0)?;

    let dir = std::env::temp_dir().join("farfield_mask_demo");
    std::fs::create_dir_all(&dir)?;
    let x_path = dir.join("utt_0000.sep_target.cfmk");
    let n_path = dir.join("utt_0000.sep_noise.cfmk");
    save_mask(&x_path, &mask_x)?;
    save_mask(&n_path, &mask_n)?;
    println!(
        "wrote {} ({} frames x {} bins, {} bytes)",
        x_path.display(),
        mask_x.frames(),
        mask_x.bins(),
        std::fs::metadata(&x_path)?.len()
    );

    let explicit = ExplicitMasks {
        separation_target: Some(load_mask(&x_path)?),
        separation_noise: Some(load_mask(&n_path)?),
        ..Default::default()
    };

    let pipe = PipelineConfig::sep_only();
    let from_files = run(&mixture, &MaskProvider::Explicit(&explicit), &pipe)?;

    let refs = OracleRefs {
        reverberant_target: reverberant,
        early_target: stft(&sim.early_target, &cfg)?,
    };
    let from_oracle = run(&mixture, &MaskProvider::Oracle(&refs), &pipe)?;

    let reference: Vec<f64> = sim.reverberant_target.channel(0).to_vec();
    let est_files: Vec<f64> = istft(&from_files)?.channel(0).to_vec();
    let est_oracle: Vec<f64> = istft(&from_oracle)?.channel(0).to_vec();

    println!("SISNR from file masks  : {:+.3} dB", sisnr(&est_files, &reference)?);
    println!("SISNR from oracle masks: {:+.3} dB", sisnr(&est_oracle, &reference)?);
    let diff: f64 = est_files
        .iter()
        .zip(&est_oracle)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    println!("output difference (f32 mask quantization only): {diff:.2e}");
    Ok(())
}
