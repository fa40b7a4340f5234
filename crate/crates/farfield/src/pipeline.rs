//! The three ways of chaining separation and dereverberation.
//!
//! * **Sep→Dervb** — mask-based MVDR first, then single-channel
//!   dereverberation of the beamformer output (long prediction filter).
//! * **Dervb→Sep** — multi-channel dereverberation of the full array first
//!   (short filter), then MVDR on the dereverberated channels.
//! * **Joint** — one convolutional (WPD) beamformer doing both at once.
//!
//! Every stage is driven by time-frequency masks. A [`MaskProvider`] either
//! derives them from oracle reference signals (the simulator's reverberant
//! and direct-plus-early target images) or takes them pre-computed, e.g.
//! loaded from mask files. By default each stage's oracle masks are computed
//! against that stage's own input, the way a stage-wise estimator would see
//! it; [`PipelineConfig::reuse_mixture_masks`] switches to mixture-domain
//! masks everywhere.

use serde::{Deserialize, Serialize};

use crate::dereverb::{specm_apply, wpe_iterative, wpe_masked, WpeConfig};
use crate::error::{Error, Result};
use crate::mask::{oracle_complex_mask, ComplexMask};
use crate::mvdr::separate_mvdr;
use crate::stft::Spectrogram;
use crate::wpd::{wpd_enhance, WpdConfig};

/// Which enhancement chain to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// MVDR separation only.
    SepOnly,
    /// MVDR, then single-channel dereverberation of its output.
    SepThenDervb,
    /// Multi-channel dereverberation, then MVDR.
    DervbThenSep,
    /// Single convolutional beamformer (WPD).
    JointWpd,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::SepOnly,
        Architecture::SepThenDervb,
        Architecture::DervbThenSep,
        Architecture::JointWpd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::SepOnly => "sep-only",
            Architecture::SepThenDervb => "sep-then-dervb",
            Architecture::DervbThenSep => "dervb-then-sep",
            Architecture::JointWpd => "joint-wpd",
        }
    }

    pub fn parse(name: &str) -> Result<Architecture> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == name)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown architecture {name:?}; expected one of sep-only, \
                     sep-then-dervb, dervb-then-sep, joint-wpd"
                ))
            })
    }
}

/// Dereverberation variant used inside the pipelined architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DervbKind {
    /// Blind WPE with alternating filter/variance updates.
    WpeIterative,
    /// WPE with the frame variance read off a mask in a single pass.
    WpeMasked,
    /// Plain spectral masking, no linear filter.
    SpecM,
}

/// Settings for one enhancement run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub architecture: Architecture,
    pub dervb_kind: DervbKind,
    pub ref_channel: usize,
    /// Diagonal flooring of the noise PSD inside MVDR.
    pub mvdr_eps: f64,
    pub wpe: WpeConfig,
    pub wpd: WpdConfig,
    /// Compute every oracle stage mask against the original mixture instead
    /// of the stage's own input.
    pub reuse_mixture_masks: bool,
}

impl PipelineConfig {
    /// MVDR separation alone.
    pub fn sep_only() -> Self {
        Self {
            architecture: Architecture::SepOnly,
            dervb_kind: DervbKind::WpeMasked,
            ref_channel: 0,
            mvdr_eps: 1e-5,
            wpe: WpeConfig::single_channel(),
            wpd: WpdConfig::default(),
            reuse_mixture_masks: false,
        }
    }

    /// MVDR, then a long (18-tap) single-channel prediction filter.
    pub fn sep_then_dervb() -> Self {
        Self {
            architecture: Architecture::SepThenDervb,
            wpe: WpeConfig::single_channel(),
            ..Self::sep_only()
        }
    }

    /// Short (2-tap) multi-channel prediction filter, then MVDR.
    pub fn dervb_then_sep() -> Self {
        Self {
            architecture: Architecture::DervbThenSep,
            wpe: WpeConfig::multi_channel(),
            ..Self::sep_only()
        }
    }

    /// Single WPD beamformer.
    pub fn joint_wpd() -> Self {
        Self {
            architecture: Architecture::JointWpd,
            ..Self::sep_only()
        }
    }

    pub fn for_architecture(architecture: Architecture) -> Self {
        match architecture {
            Architecture::SepOnly => Self::sep_only(),
            Architecture::SepThenDervb => Self::sep_then_dervb(),
            Architecture::DervbThenSep => Self::dervb_then_sep(),
            Architecture::JointWpd => Self::joint_wpd(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mvdr_eps.is_finite() && self.mvdr_eps > 0.0) {
            return Err(Error::config("mvdr_eps must be positive and finite"));
        }
        self.wpe.validate()?;
        self.wpd.validate()
    }
}

/// Reference images an oracle provider derives stage masks from.
///
/// Both come straight out of the simulator: the target convolved with the
/// full RIR, and with the RIR truncated at the early/late split. Frames and
/// bins must match the mixture they will be used with.
#[derive(Debug, Clone)]
pub struct OracleRefs {
    pub reverberant_target: Spectrogram,
    pub early_target: Spectrogram,
}

/// Pre-computed masks for every stage a pipeline might run. Only the fields
/// the chosen architecture touches need to be present.
#[derive(Debug, Clone, Default)]
pub struct ExplicitMasks {
    pub separation_target: Option<ComplexMask>,
    pub separation_noise: Option<ComplexMask>,
    /// Variance mask for masked WPE, or the multiplicative SpecM mask.
    pub dereverb: Option<ComplexMask>,
    pub wpd_target: Option<ComplexMask>,
    pub wpd_lambda: Option<ComplexMask>,
}

/// Where stage masks come from.
#[derive(Debug, Clone)]
pub enum MaskProvider<'a> {
    Oracle(&'a OracleRefs),
    Explicit(&'a ExplicitMasks),
}

/// Magnitude floor applied to oracle variance masks (WPE and WPD λ).
///
/// The desired-signal variance drives the weights 1/λ of the prediction
/// least squares. An oracle ratio mask is exactly zero wherever the target
/// is silent, which would hand those frames unbounded weight and let
/// residual leakage there dictate the filter. No estimator is ever that
/// confident; flooring the magnitude at 0.1 keeps λ at or above 1% of the
/// observed frame power.
pub const VARIANCE_MASK_FLOOR: f64 = 0.1;

fn floor_variance_mask(mask: ComplexMask) -> ComplexMask {
    ComplexMask::new(mask.values.mapv(|v| {
        if v.norm() < VARIANCE_MASK_FLOOR {
            crate::C64::new(VARIANCE_MASK_FLOOR, 0.0)
        } else {
            v
        }
    }))
}

fn require(mask: &Option<ComplexMask>, what: &str) -> Result<ComplexMask> {
    mask.clone()
        .ok_or_else(|| Error::config(format!("explicit mask set lacks the {what} mask")))
}

fn residual_of(stage_input: &Spectrogram, desired: &Spectrogram) -> Result<Spectrogram> {
    if stage_input.values.dim() != desired.values.dim() {
        return Err(Error::shape(format!(
            "stage input {:?} vs reference {:?}",
            stage_input.values.dim(),
            desired.values.dim()
        )));
    }
    Ok(Spectrogram {
        values: &stage_input.values - &desired.values,
        config: stage_input.config,
        sample_rate: stage_input.sample_rate,
        signal_len: stage_input.signal_len,
    })
}

/// Target and complementary noise masks for a separation stage: the desired
/// image rated against the stage input, and the leftover rated likewise.
fn separation_masks(
    stage_input: &Spectrogram,
    desired: &Spectrogram,
    channel: usize,
) -> Result<(ComplexMask, ComplexMask)> {
    let mask_x = oracle_complex_mask(desired, stage_input, channel)?;
    let residual = residual_of(stage_input, desired)?;
    let mask_n = oracle_complex_mask(&residual, stage_input, channel)?;
    Ok((mask_x, mask_n))
}

/// Run the architecture selected by `cfg`.
pub fn run(
    mixture: &Spectrogram,
    masks: &MaskProvider,
    cfg: &PipelineConfig,
) -> Result<Spectrogram> {
    cfg.validate()?;
    match cfg.architecture {
        Architecture::SepOnly => run_sep_only(mixture, masks, cfg),
        Architecture::SepThenDervb => run_sep_then_dervb(mixture, masks, cfg),
        Architecture::DervbThenSep => run_dervb_then_sep(mixture, masks, cfg),
        Architecture::JointWpd => run_joint_wpd(mixture, masks, cfg),
    }
}

/// Mask-based MVDR on the mixture; single-channel output.
pub fn run_sep_only(
    mixture: &Spectrogram,
    masks: &MaskProvider,
    cfg: &PipelineConfig,
) -> Result<Spectrogram> {
    let (mask_x, mask_n) = match masks {
        MaskProvider::Oracle(refs) => {
            separation_masks(mixture, &refs.reverberant_target, cfg.ref_channel)?
        }
        MaskProvider::Explicit(set) => (
            require(&set.separation_target, "separation target")?,
            require(&set.separation_noise, "separation noise")?,
        ),
    };
    separate_mvdr(mixture, &mask_x, &mask_n, cfg.ref_channel, cfg.mvdr_eps)
}

/// MVDR, then dereverberation of its single-channel output.
pub fn run_sep_then_dervb(
    mixture: &Spectrogram,
    masks: &MaskProvider,
    cfg: &PipelineConfig,
) -> Result<Spectrogram> {
    let separated = run_sep_only(mixture, masks, cfg)?;
    let dervb_mask = |what: &str| -> Result<ComplexMask> {
        match masks {
            MaskProvider::Oracle(refs) => {
                let desired = refs.early_target.take_channel(cfg.ref_channel);
                if cfg.reuse_mixture_masks {
                    oracle_complex_mask(&desired, &mixture.take_channel(cfg.ref_channel), 0)
                } else {
                    oracle_complex_mask(&desired, &separated, 0)
                }
            }
            MaskProvider::Explicit(set) => require(&set.dereverb, what),
        }
    };
    match cfg.dervb_kind {
        DervbKind::WpeIterative => wpe_iterative(&separated, &cfg.wpe),
        DervbKind::WpeMasked => {
            let mask = match masks {
                MaskProvider::Oracle(_) => floor_variance_mask(dervb_mask("WPE variance")?),
                MaskProvider::Explicit(_) => dervb_mask("WPE variance")?,
            };
            wpe_masked(&separated, &mask, &cfg.wpe)
        }
        DervbKind::SpecM => specm_apply(&separated, &dervb_mask("SpecM")?),
    }
}

/// Multi-channel dereverberation of the array, then MVDR.
pub fn run_dervb_then_sep(
    mixture: &Spectrogram,
    masks: &MaskProvider,
    cfg: &PipelineConfig,
) -> Result<Spectrogram> {
    let dereverbed = match cfg.dervb_kind {
        DervbKind::WpeIterative => wpe_iterative(mixture, &cfg.wpe)?,
        DervbKind::WpeMasked => {
            let mask = match masks {
                MaskProvider::Oracle(refs) => floor_variance_mask(oracle_complex_mask(
                    &refs.early_target,
                    mixture,
                    cfg.ref_channel,
                )?),
                MaskProvider::Explicit(set) => require(&set.dereverb, "WPE variance")?,
            };
            wpe_masked(mixture, &mask, &cfg.wpe)?
        }
        DervbKind::SpecM => {
            let mask = match masks {
                MaskProvider::Oracle(refs) => {
                    oracle_complex_mask(&refs.early_target, mixture, cfg.ref_channel)?
                }
                MaskProvider::Explicit(set) => require(&set.dereverb, "SpecM")?,
            };
            specm_apply(mixture, &mask)?
        }
    };
    let (mask_x, mask_n) = match masks {
        MaskProvider::Oracle(refs) => {
            if cfg.reuse_mixture_masks {
                separation_masks(mixture, &refs.reverberant_target, cfg.ref_channel)?
            } else {
                separation_masks(&dereverbed, &refs.early_target, cfg.ref_channel)?
            }
        }
        MaskProvider::Explicit(set) => (
            require(&set.separation_target, "separation target")?,
            require(&set.separation_noise, "separation noise")?,
        ),
    };
    separate_mvdr(&dereverbed, &mask_x, &mask_n, cfg.ref_channel, cfg.mvdr_eps)
}

/// One WPD beamformer straight on the mixture.
pub fn run_joint_wpd(
    mixture: &Spectrogram,
    masks: &MaskProvider,
    cfg: &PipelineConfig,
) -> Result<Spectrogram> {
    let (mask_x, mask_lambda) = match masks {
        MaskProvider::Oracle(refs) => {
            let m = oracle_complex_mask(&refs.early_target, mixture, cfg.ref_channel)?;
            let lambda = floor_variance_mask(m.clone());
            (m, lambda)
        }
        MaskProvider::Explicit(set) => (
            require(&set.wpd_target, "WPD target")?,
            require(&set.wpd_lambda, "WPD variance")?,
        ),
    };
    wpd_enhance(mixture, &mask_x, &mask_lambda, &cfg.wpd, cfg.ref_channel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::room::{direct_path_rir, image_method_rir, ArrayGeometry, RoomScene};
    use crate::stft::{stft, StftConfig};
    use crate::synth::{speech_like, white_noise};
    use crate::wave::MultiChannelWave;

    fn tiny_array() -> ArrayGeometry {
        ArrayGeometry {
            positions: vec![[-0.05, 0.0, 0.0], [0.0, 0.0, 0.0], [0.05, 0.0, 0.0]],
        }
    }

    struct Fixture {
        mixture: Spectrogram,
        refs: OracleRefs,
    }

    /// Two speech-like sources rendered at a 3-mic array, either anechoic
    /// (direct path only) or in a reverberant room.
    fn scene(reverberant: bool) -> Fixture {
        scene_with_len(reverberant, 24_000)
    }

    fn scene_with_len(reverberant: bool, n: usize) -> Fixture {
        let fs = 16_000;
        let target = speech_like(31, n, fs);
        let interferer = speech_like(32, n, fs);
        let noise = white_noise(33, n);

        let scene = RoomScene {
            room: [5.0, 4.0, 3.0],
            t60: 0.35,
            array_center: [2.5, 1.5, 1.4],
            geometry: tiny_array(),
            target_pos: [2.5, 3.0, 1.5],
            interferer_pos: [1.2, 2.4, 1.5],
            noise_pos: [4.0, 2.8, 1.8],
            snr_db: 15.0,
            sir_db: 0.0,
            angle_bin: 2,
            angle_diff_deg: 55.0,
            noise_id: 0,
            seed: 7,
        };
        let mics = scene.mic_positions();
        let (target_rir, interferer_rir) = if reverberant {
            (
                image_method_rir(&scene.room, &scene.target_pos, &mics, scene.t60, fs).unwrap(),
                image_method_rir(&scene.room, &scene.interferer_pos, &mics, scene.t60, fs)
                    .unwrap(),
            )
        } else {
            (
                direct_path_rir(&scene.target_pos, &mics, fs).unwrap(),
                direct_path_rir(&scene.interferer_pos, &mics, fs).unwrap(),
            )
        };

        let reverberant_target = target_rir.convolve_mono(&target);
        let early_target = target_rir.truncated_early().convolve_mono(&target);
        let interferer_img = interferer_rir.convolve_mono(&interferer);
        let mut samples = &reverberant_target.samples + &interferer_img.samples;
        for (i, row) in samples.rows_mut().into_iter().enumerate() {
            let scale = 0.003;
            for (t, v) in row.into_iter().enumerate() {
                *v += scale * noise[(t + i * 37) % n];
            }
        }
        let mixture_wave = MultiChannelWave { samples, sample_rate: fs };

        let cfg = StftConfig::default();
        Fixture {
            mixture: stft(&mixture_wave, &cfg).unwrap(),
            refs: OracleRefs {
                reverberant_target: stft(&reverberant_target, &cfg).unwrap(),
                early_target: stft(&early_target, &cfg).unwrap(),
            },
        }
    }

    #[test]
    fn sep_only_is_the_plain_mvdr_composition() {
        let fx = scene(false);
        let cfg = PipelineConfig::sep_only();
        let out = run(&fx.mixture, &MaskProvider::Oracle(&fx.refs), &cfg).unwrap();

        let (mask_x, mask_n) =
            separation_masks(&fx.mixture, &fx.refs.reverberant_target, 0).unwrap();
        let direct = separate_mvdr(&fx.mixture, &mask_x, &mask_n, 0, cfg.mvdr_eps).unwrap();
        assert_eq!(out.values, direct.values);
    }

    #[test]
    fn identity_specm_stage_keeps_the_mvdr_output() {
        let fx = scene(false);
        let sep = run_sep_only(
            &fx.mixture,
            &MaskProvider::Oracle(&fx.refs),
            &PipelineConfig::sep_only(),
        )
        .unwrap();

        let (mask_x, mask_n) =
            separation_masks(&fx.mixture, &fx.refs.reverberant_target, 0).unwrap();
        let explicit = ExplicitMasks {
            separation_target: Some(mask_x),
            separation_noise: Some(mask_n),
            dereverb: Some(ComplexMask::ones(fx.mixture.frames(), fx.mixture.bins())),
            ..ExplicitMasks::default()
        };
        let cfg = PipelineConfig {
            dervb_kind: DervbKind::SpecM,
            ..PipelineConfig::sep_then_dervb()
        };
        let out = run(&fx.mixture, &MaskProvider::Explicit(&explicit), &cfg).unwrap();
        assert_eq!(out.values, sep.values);
    }

    #[test]
    fn zero_iteration_wpe_stage_is_the_identity() {
        let fx = scene(false);
        let mut cfg = PipelineConfig::sep_then_dervb();
        cfg.dervb_kind = DervbKind::WpeIterative;
        cfg.wpe.iterations = 0;
        let out = run(&fx.mixture, &MaskProvider::Oracle(&fx.refs), &cfg).unwrap();
        let sep = run_sep_only(&fx.mixture, &MaskProvider::Oracle(&fx.refs), &cfg).unwrap();
        assert_eq!(out.values, sep.values);
    }

    #[test]
    fn anechoic_scene_leaves_the_dereverb_stage_nearly_idle() {
        // Long enough that the 18 prediction taps per bin cannot soak up
        // energy by overfitting: the filter only changes the output if the
        // scene genuinely has a predictable late component.
        let fx = scene_with_len(false, 160_000);
        let cfg = PipelineConfig::sep_then_dervb();
        let sep = run_sep_only(&fx.mixture, &MaskProvider::Oracle(&fx.refs), &cfg).unwrap();
        let out = run(&fx.mixture, &MaskProvider::Oracle(&fx.refs), &cfg).unwrap();
        let num: f64 = out
            .values
            .iter()
            .zip(sep.values.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let den: f64 = sep.values.iter().map(|v| v.norm_sqr()).sum();
        assert!(num / den < 0.05, "relative MSE {}", num / den);
    }

    #[test]
    fn every_architecture_yields_one_bounded_channel_of_the_same_shape() {
        let fx = scene(true);
        let input_energy: f64 = fx
            .mixture
            .take_channel(0)
            .values
            .iter()
            .map(|v| v.norm_sqr())
            .sum();
        for arch in Architecture::ALL {
            let cfg = PipelineConfig::for_architecture(arch);
            let out = run(&fx.mixture, &MaskProvider::Oracle(&fx.refs), &cfg).unwrap();
            assert_eq!(out.channels(), 1, "{}", arch.name());
            assert_eq!(out.frames(), fx.mixture.frames(), "{}", arch.name());
            assert_eq!(out.bins(), fx.mixture.bins(), "{}", arch.name());
            let energy: f64 = out.values.iter().map(|v| v.norm_sqr()).sum();
            assert!(energy.is_finite(), "{}", arch.name());
            assert!(
                energy <= 10.0 * input_energy,
                "{}: output energy {energy:.3} vs input {input_energy:.3}",
                arch.name()
            );
        }
    }

    #[test]
    fn reruns_are_bit_identical() {
        let fx = scene(true);
        for arch in [Architecture::DervbThenSep, Architecture::JointWpd] {
            let cfg = PipelineConfig::for_architecture(arch);
            let a = run(&fx.mixture, &MaskProvider::Oracle(&fx.refs), &cfg).unwrap();
            let b = run(&fx.mixture, &MaskProvider::Oracle(&fx.refs), &cfg).unwrap();
            assert_eq!(a.values, b.values, "{}", arch.name());
        }
    }

    #[test]
    fn mixture_domain_mask_reuse_is_a_distinct_mode_that_runs() {
        let fx = scene(true);
        let mut cfg = PipelineConfig::dervb_then_sep();
        let fresh = run(&fx.mixture, &MaskProvider::Oracle(&fx.refs), &cfg).unwrap();
        cfg.reuse_mixture_masks = true;
        let reused = run(&fx.mixture, &MaskProvider::Oracle(&fx.refs), &cfg).unwrap();
        assert_eq!(reused.values.dim(), fresh.values.dim());
        assert!(reused.values != fresh.values);
    }

    #[test]
    fn explicit_provider_demands_the_masks_each_stage_needs() {
        let fx = scene(false);
        let empty = ExplicitMasks::default();
        for arch in Architecture::ALL {
            let cfg = PipelineConfig::for_architecture(arch);
            let err = run(&fx.mixture, &MaskProvider::Explicit(&empty), &cfg).unwrap_err();
            assert!(
                matches!(err, Error::Config(_)),
                "{}: unexpected error {err}",
                arch.name()
            );
        }
    }

    #[test]
    fn architecture_names_round_trip() {
        for arch in Architecture::ALL {
            assert_eq!(Architecture::parse(arch.name()).unwrap(), arch);
        }
        assert!(Architecture::parse("mystery").is_err());
    }
}
