//! The three ways of combining separation and dereverberation.
//!
//! Runs every architecture on one simulated mixture with oracle masks and
//! prints a metric table: separation alone, separation before or after a
//! prediction filter, and the joint convolutional beamformer.
//!
//!     cargo run --example pipelines

use farfield::metrics::{sisnr, srmr, stoi};
use farfield::pipeline::{run, Architecture, MaskProvider, OracleRefs, PipelineConfig};
use farfield::room::{sample_scene, simulate_mixture, CorpusManifest};
use farfield::stft::{istft, stft, StftConfig};
use farfield::synth::{speech_like, white_noise};
use farfield::wave::MultiChannelWave;

fn main() -> farfield::Result<()> {
    let fs = 16_000;
    let len = 2 * fs as usize;
    let manifest = CorpusManifest { sources: vec![], noises: vec!["n.wav".into()] };
    let scene = sample_scene(11, &manifest)?;

    let target = MultiChannelWave::from_mono(speech_like(1, len, fs), fs);
    let interferer = MultiChannelWave::from_mono(speech_like(2, len, fs), fs);
    let noise = MultiChannelWave::from_mono(white_noise(3, len), fs);
    let sim = simulate_mixture(&target, &interferer, &noise, &scene)?;

    let cfg = StftConfig::default();
    let mixture = stft(&sim.mixture, &cfg)?;
    let refs = OracleRefs {
        reverberant_target: stft(&sim.reverberant_target, &cfg)?,
        early_target: stft(&sim.early_target, &cfg)?,
    };
    let provider = MaskProvider::Oracle(&refs);
    let reference: Vec<f64> = sim.early_target.channel(0).to_vec();

    println!(
        "scene: T60 {:.2} s, SNR {:+.0} dB, SIR {:+.0} dB, split {:.0} deg",
        scene.t60, scene.snr_db, scene.sir_db, scene.angle_diff_deg
    );
    println!(
        "{:<12} {:>13} {:>9} {:>8}   stage",
        "architecture", "SISNR(early)", "STOI(%)", "SRMR"
    );

    let raw: Vec<f64> = sim.mixture.channel(0).to_vec();
    println!(
        "{:<12} {:>+13.2} {:>9.1} {:>8.3}   raw channel 0",
        "-",
        sisnr(&raw, &reference)?,
        100.0 * stoi(&raw, &reference, fs)?,
        srmr(&raw, fs)?
    );

    for arch in Architecture::ALL {
        let pipe = PipelineConfig::for_architecture(arch);
        let out = run(&mixture, &provider, &pipe)?;
        let est: Vec<f64> = istft(&out)?.channel(0).to_vec();
        let stage = match arch {
            Architecture::SepOnly => format!("MVDR eps {:.0e}", pipe.mvdr_eps),
            Architecture::SepThenDervb | Architecture::DervbThenSep => format!(
                "WPE taps {} delay {} eps {:.0e}",
                pipe.wpe.taps, pipe.wpe.delay, pipe.wpe.floor_eps
            ),
            Architecture::JointWpd => format!(
                "WPD taps {} delay {} eps {:.0e}",
                pipe.wpd.taps, pipe.wpd.delay, pipe.wpd.eps
            ),
        };
        println!(
            "{:<12} {:>+13.2} {:>9.1} {:>8.3}   {stage}",
            arch.name(),
            sisnr(&est, &reference)?,
            100.0 * stoi(&est, &reference, fs)?,
            srmr(&est, fs)?
        );
    }
    Ok(())
}
