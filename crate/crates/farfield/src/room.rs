//! Shoebox room simulation and cocktail-party scene synthesis.
//!
//! Rooms are simulated with the Allen-Berkley image method: every mirror
//! image of the source contributes one attenuated, fractionally delayed tap
//! per microphone. Wall absorption is uniform and derived from the requested
//! reverberation time through Sabine's formula, image order is chosen so the
//! enumerated paths cover the full -60 dB decay, and fractional delays use
//! an 8-tap Hann-windowed sinc.
//!
//! Scene sampling follows a fixed cocktail-party protocol: shoebox rooms
//! between 4x4x3 m and 10x10x6 m, T60 in [0.14, 0.92] s, two speakers and
//! one point noise source placed 1-5 m from the array, SNR drawn from
//! {0, 5, 10, 15, 20} dB, SIR from {-6, 0, 6} dB, and the speaker angle
//! difference drawn uniformly over four bins ([0,15), [15,45), [45,90),
//! [90,180) degrees) via rejection sampling.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wave::{convolve, MultiChannelWave};

pub const SPEED_OF_SOUND: f64 = 343.0;

/// Boundaries of the direct-path window in seconds; taps later than this
/// after the first arrival count as late reverberation.
pub const EARLY_WINDOW_S: f64 = 0.05;

/// Angle-difference bins in degrees, lower inclusive, upper exclusive.
pub const ANGLE_BINS_DEG: [(f64, f64); 4] = [(0.0, 15.0), (15.0, 45.0), (45.0, 90.0), (90.0, 180.0)];

pub const SNR_CHOICES_DB: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];
pub const SIR_CHOICES_DB: [f64; 3] = [-6.0, 0.0, 6.0];

/// Draw budget for each rejection-sampled quantity in [`sample_scene`].
pub const SAMPLING_BUDGET: usize = 1000;

const SINC_HALF_WIDTH: i64 = 4;

/// Microphone positions in meters relative to the array center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub positions: Vec<[f64; 3]>,
}

impl ArrayGeometry {
    /// 15-microphone linear array on the x axis with mirror-symmetric
    /// spacings [7, 6, 5, 4, 3, 2, 1, 1, 2, 3, 4, 5, 6, 7] cm.
    pub fn linear_15() -> Self {
        let spacings_cm = [7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let mut xs = vec![0.0f64];
        for s in spacings_cm {
            xs.push(xs.last().unwrap() + s / 100.0);
        }
        let mid = xs.last().unwrap() / 2.0;
        Self {
            positions: xs.into_iter().map(|x| [x - mid, 0.0, 0.0]).collect(),
        }
    }

    pub fn channels(&self) -> usize {
        self.positions.len()
    }

    /// Largest mic distance from the array center.
    pub fn half_span(&self) -> f64 {
        self.positions
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
            .fold(0.0, f64::max)
    }

    /// Far-field arrival-time advance per mic (seconds, relative to the
    /// array center) for a plane wave from azimuth `doa` radians in the
    /// horizontal plane, measured from the array axis. Mics closer to the
    /// source receive the wave earlier, i.e. get a positive delay here.
    pub fn steering_delays(&self, doa: f64) -> Vec<f64> {
        let u = [doa.cos(), doa.sin(), 0.0];
        self.positions
            .iter()
            .map(|p| (p[0] * u[0] + p[1] * u[1] + p[2] * u[2]) / SPEED_OF_SOUND)
            .collect()
    }
}

/// One sampled cocktail-party scene: everything needed to re-run the
/// simulation deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomScene {
    pub room: [f64; 3],
    pub t60: f64,
    pub array_center: [f64; 3],
    pub geometry: ArrayGeometry,
    pub target_pos: [f64; 3],
    pub interferer_pos: [f64; 3],
    pub noise_pos: [f64; 3],
    pub snr_db: f64,
    pub sir_db: f64,
    pub angle_bin: usize,
    pub angle_diff_deg: f64,
    pub noise_id: usize,
    pub seed: u64,
}

impl RoomScene {
    /// Mic positions in room coordinates.
    pub fn mic_positions(&self) -> Vec<[f64; 3]> {
        self.geometry
            .positions
            .iter()
            .map(|p| {
                [
                    self.array_center[0] + p[0],
                    self.array_center[1] + p[1],
                    self.array_center[2] + p[2],
                ]
            })
            .collect()
    }

    /// Azimuth of a point as seen from the array center, radians.
    pub fn azimuth_of(&self, pos: &[f64; 3]) -> f64 {
        (pos[1] - self.array_center[1]).atan2(pos[0] - self.array_center[0])
    }

    pub fn validate(&self) -> Result<()> {
        let inside = |p: &[f64; 3]| {
            (0..3).all(|a| p[a] > 0.0 && p[a] < self.room[a])
        };
        for mic in self.mic_positions() {
            if !inside(&mic) {
                return Err(Error::config(format!("microphone at {mic:?} outside room")));
            }
        }
        for (name, p) in [
            ("target", &self.target_pos),
            ("interferer", &self.interferer_pos),
            ("noise", &self.noise_pos),
        ] {
            if !inside(p) {
                return Err(Error::config(format!("{name} source at {p:?} outside room")));
            }
        }
        for (name, p) in [("target", &self.target_pos), ("interferer", &self.interferer_pos)] {
            let d = dist(p, &self.array_center);
            if !(1.0..=5.0).contains(&d) {
                return Err(Error::config(format!(
                    "{name} source is {d:.2} m from the array, outside [1, 5] m"
                )));
            }
        }
        if self.t60 <= 0.0 {
            return Err(Error::config("T60 must be positive"));
        }
        Ok(())
    }
}

/// Multi-channel room impulse response.
#[derive(Debug, Clone)]
pub struct Rir {
    /// channels x taps
    pub taps: Array2<f64>,
    pub sample_rate: u32,
    /// First-arrival sample index across channels.
    pub direct_index: usize,
    /// Direct index plus the early window; taps from here on are late.
    pub split_index: usize,
}

impl Rir {
    pub fn channels(&self) -> usize {
        self.taps.nrows()
    }

    pub fn len(&self) -> usize {
        self.taps.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.ncols() == 0
    }

    /// Copy with every tap at or past the early/late split zeroed.
    pub fn truncated_early(&self) -> Rir {
        let mut taps = self.taps.clone();
        for ch in 0..taps.nrows() {
            for i in self.split_index..taps.ncols() {
                taps[(ch, i)] = 0.0;
            }
        }
        Rir { taps, ..self.clone() }
    }

    /// Convolve a mono signal with every channel, trimmed to the input
    /// length so sources and references stay sample aligned.
    pub fn convolve_mono(&self, mono: &[f64]) -> MultiChannelWave {
        let n = mono.len();
        let mut out = Array2::zeros((self.channels(), n));
        for ch in 0..self.channels() {
            let full = convolve(mono, self.taps.row(ch).as_slice().unwrap());
            for i in 0..n {
                out[(ch, i)] = full[i];
            }
        }
        MultiChannelWave {
            samples: out,
            sample_rate: self.sample_rate,
        }
    }
}

/// Sabine absorption coefficient for a shoebox of dimensions `room` and the
/// requested reverberation time.
pub fn sabine_absorption(room: &[f64; 3], t60: f64) -> f64 {
    let volume = room[0] * room[1] * room[2];
    let surface = 2.0 * (room[0] * room[1] + room[0] * room[2] + room[1] * room[2]);
    0.161 * volume / (surface * t60)
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Place one attenuated image tap with an 8-tap Hann-windowed sinc around
/// the fractional delay.
fn place_tap(taps: &mut [f64], delay_samples: f64, gain: f64) {
    let center = delay_samples.ceil() as i64;
    for j in (center - SINC_HALF_WIDTH)..(center + SINC_HALF_WIDTH) {
        if j < 0 || j as usize >= taps.len() {
            continue;
        }
        let u = j as f64 - delay_samples;
        let sinc = if u.abs() < 1e-12 {
            1.0
        } else {
            (std::f64::consts::PI * u).sin() / (std::f64::consts::PI * u)
        };
        let win = 0.5 * (1.0 + (std::f64::consts::PI * u / SINC_HALF_WIDTH as f64).cos());
        taps[j as usize] += gain * sinc * win;
    }
}

/// Direct-path-only impulse responses: one 1/distance tap per microphone at
/// distance/c. Used for anechoic references.
pub fn direct_path_rir(source: &[f64; 3], mics: &[[f64; 3]], fs: u32) -> Result<Rir> {
    if mics.is_empty() {
        return Err(Error::config("need at least one microphone"));
    }
    let delays: Vec<f64> = mics.iter().map(|m| dist(source, m) / SPEED_OF_SOUND * f64::from(fs)).collect();
    let max_delay = delays.iter().cloned().fold(0.0, f64::max);
    let min_delay = delays.iter().cloned().fold(f64::INFINITY, f64::min);
    let len = max_delay.ceil() as usize + 2 * SINC_HALF_WIDTH as usize;
    let mut taps = Array2::zeros((mics.len(), len));
    for (ch, m) in mics.iter().enumerate() {
        let d = dist(source, m);
        if d < 1e-6 {
            return Err(Error::config("source collocated with a microphone"));
        }
        place_tap(taps.row_mut(ch).as_slice_mut().unwrap(), delays[ch], 1.0 / d);
    }
    let direct_index = min_delay.round() as usize;
    Ok(Rir {
        taps,
        sample_rate: fs,
        direct_index,
        split_index: direct_index + (EARLY_WINDOW_S * f64::from(fs)).round() as usize,
    })
}

/// Allen-Berkley image-method impulse responses for all microphones.
///
/// Absorption comes from Sabine's formula; requesting a T60 the room cannot
/// reach (absorption outside (0, 1)) is an error. The tap buffer covers the
/// direct delay plus a full T60 so the -60 dB decay is represented.
pub fn image_method_rir(
    room: &[f64; 3],
    source: &[f64; 3],
    mics: &[[f64; 3]],
    t60: f64,
    fs: u32,
) -> Result<Rir> {
    if mics.is_empty() {
        return Err(Error::config("need at least one microphone"));
    }
    for (axis, l) in room.iter().enumerate() {
        if *l <= 0.0 {
            return Err(Error::config(format!("room axis {axis} not positive")));
        }
    }
    if !(t60 > 0.0) {
        return Err(Error::config("T60 must be positive"));
    }
    let alpha = sabine_absorption(room, t60);
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::config(format!(
            "Sabine absorption {alpha:.3} outside (0, 1); T60 {t60:.2} s unreachable for this room"
        )));
    }
    let beta = (1.0 - alpha).sqrt();

    let fsf = f64::from(fs);
    let delays: Vec<f64> = mics.iter().map(|m| dist(source, m) / SPEED_OF_SOUND * fsf).collect();
    let min_delay = delays.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_delay = delays.iter().cloned().fold(0.0, f64::max);
    let len = (t60 * fsf).ceil() as usize + max_delay.ceil() as usize + 2 * SINC_HALF_WIDTH as usize;

    // Paths longer than the tap buffer cannot contribute.
    let dist_cut = (len as f64 + SINC_HALF_WIDTH as f64) / fsf * SPEED_OF_SOUND;
    let order: Vec<i64> = room
        .iter()
        .map(|l| ((dist_cut / (2.0 * l)).ceil() as i64) + 1)
        .collect();

    // beta^k lookup for the worst-case reflection count.
    let max_refl: usize = (0..3).map(|a| 2 * order[a] as usize + 1).sum();
    let mut beta_pow = vec![1.0f64; max_refl + 1];
    for k in 1..=max_refl {
        beta_pow[k] = beta_pow[k - 1] * beta;
    }

    // Per-axis image coordinates and reflection counts, shared by all mics.
    let axis_images: Vec<Vec<(f64, usize)>> = (0..3)
        .map(|a| {
            let mut v = Vec::new();
            for m in -order[a]..=order[a] {
                for q in 0..2i64 {
                    let coord = (1 - 2 * q) as f64 * source[a] + 2.0 * m as f64 * room[a];
                    let refl = (m - q).unsigned_abs() as usize + m.unsigned_abs() as usize;
                    v.push((coord, refl));
                }
            }
            v
        })
        .collect();

    // Each microphone's tap row is an independent deterministic sum, so
    // mic-level parallelism cannot change the output.
    use rayon::prelude::*;
    let rows: Vec<Vec<f64>> = mics
        .par_iter()
        .map(|mic| {
            let mut row = vec![0.0f64; len];
            accumulate_images(&mut row, mic, &axis_images, &beta_pow, dist_cut, fsf);
            // Allen–Berkley 100 Hz high-pass. Every image tap is positive, so
            // the dense late arrivals pile up into a near-DC component that
            // does not decay with the reverberant tail; the classic
            // post-filter removes it.
            let w = 2.0 * std::f64::consts::PI * 100.0 / fsf;
            let r1 = (-w).exp();
            let b1 = 2.0 * r1 * w.cos();
            let b2 = -r1 * r1;
            let a1 = -(1.0 + r1);
            let (mut y0, mut y1) = (0.0f64, 0.0f64);
            let mut y2;
            for v in &mut row {
                let x0 = *v;
                y2 = y1;
                y1 = y0;
                y0 = b1 * y1 + b2 * y2 + x0;
                *v = y0 + a1 * y1 + r1 * y2;
            }
            row
        })
        .collect();

    let mut taps = Array2::zeros((mics.len(), len));
    for (ch, row) in rows.into_iter().enumerate() {
        for (i, v) in row.into_iter().enumerate() {
            taps[(ch, i)] = v;
        }
    }
    let direct_index = min_delay.round() as usize;
    Ok(Rir {
        taps,
        sample_rate: fs,
        direct_index,
        split_index: direct_index + (EARLY_WINDOW_S * fsf).round() as usize,
    })
}

fn accumulate_images(
    row: &mut [f64],
    mic: &[f64; 3],
    axis_images: &[Vec<(f64, usize)>],
    beta_pow: &[f64],
    dist_cut: f64,
    fsf: f64,
) {
    for &(zi, rz) in &axis_images[2] {
        let dz = zi - mic[2];
        let dz2 = dz * dz;
        if dz.abs() > dist_cut {
            continue;
        }
        for &(yi, ry) in &axis_images[1] {
            let dy = yi - mic[1];
            let dyz2 = dz2 + dy * dy;
            if dyz2 > dist_cut * dist_cut {
                continue;
            }
            for &(xi, rx) in &axis_images[0] {
                let dx = xi - mic[0];
                let d2 = dyz2 + dx * dx;
                if d2 > dist_cut * dist_cut {
                    continue;
                }
                let d = d2.sqrt().max(1e-6);
                let delay = d / SPEED_OF_SOUND * fsf;
                let gain = beta_pow[rx + ry + rz] / d;
                place_tap(row, delay, gain);
            }
        }
    }
}

/// Reverberation time via Schroeder backward integration, fitting the decay
/// between -5 and -35 dB.
pub fn measure_t60(rir: &Rir, channel: usize) -> Result<f64> {
    let row = rir.taps.row(channel);
    let mut energy: Vec<f64> = row.iter().map(|v| v * v).collect();
    for i in (0..energy.len().saturating_sub(1)).rev() {
        energy[i] += energy[i + 1];
    }
    let total = energy.first().copied().unwrap_or(0.0);
    if total <= 0.0 {
        return Err(Error::degenerate("silent impulse response"));
    }
    let db: Vec<f64> = energy.iter().map(|e| 10.0 * (e / total).log10()).collect();
    let t5 = db.iter().position(|v| *v <= -5.0);
    let t35 = db.iter().position(|v| *v <= -35.0);
    let (Some(a), Some(b)) = (t5, t35) else {
        return Err(Error::degenerate("decay curve never reaches -35 dB"));
    };
    if b <= a + 8 {
        return Err(Error::degenerate("decay range too short for a fit"));
    }
    // Least-squares line on the Schroeder curve over [-5, -35] dB.
    let n = (b - a + 1) as f64;
    let fsf = f64::from(rir.sample_rate);
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for i in a..=b {
        let x = i as f64 / fsf;
        let y = db[i];
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-18 {
        return Err(Error::degenerate("degenerate decay fit"));
    }
    let slope = (n * sxy - sx * sy) / denom;
    if slope >= 0.0 {
        return Err(Error::degenerate("non-decaying impulse response"));
    }
    Ok(-60.0 / slope)
}

/// Everything [`simulate_mixture`] produces for one utterance.
#[derive(Debug)]
pub struct SimulatedMixture {
    pub mixture: MultiChannelWave,
    /// Target convolved with the full RIR.
    pub reverberant_target: MultiChannelWave,
    /// Target convolved with the RIR truncated at the early/late split.
    pub early_target: MultiChannelWave,
    /// Target convolved with the direct path only.
    pub anechoic_target: MultiChannelWave,
    /// Interferer image after SIR scaling.
    pub interferer: MultiChannelWave,
    /// Noise image after SNR scaling.
    pub noise: MultiChannelWave,
    pub target_rir: Rir,
}

/// Render one cocktail-party mixture. Inputs are mono; the interferer and
/// noise are tiled or trimmed to the target length. SIR and SNR are exact
/// energy ratios against the reverberant target at reference channel 0.
pub fn simulate_mixture(
    target: &MultiChannelWave,
    interferer: &MultiChannelWave,
    noise: &MultiChannelWave,
    scene: &RoomScene,
) -> Result<SimulatedMixture> {
    scene.validate()?;
    for (name, w) in [("target", target), ("interferer", interferer), ("noise", noise)] {
        if w.channels() != 1 {
            return Err(Error::shape(format!("{name} source must be mono")));
        }
        if w.is_empty() || w.mean_power() == 0.0 {
            return Err(Error::degenerate(format!("{name} source is silent")));
        }
        if w.sample_rate != target.sample_rate {
            return Err(Error::config(format!(
                "{name} sample rate {} != target {}",
                w.sample_rate, target.sample_rate
            )));
        }
    }
    let fs = target.sample_rate;
    let n = target.len();
    let mics = scene.mic_positions();

    let target_rir = image_method_rir(&scene.room, &scene.target_pos, &mics, scene.t60, fs)?;
    let interferer_rir = image_method_rir(&scene.room, &scene.interferer_pos, &mics, scene.t60, fs)?;
    let noise_rir = image_method_rir(&scene.room, &scene.noise_pos, &mics, scene.t60, fs)?;
    let anechoic_rir = direct_path_rir(&scene.target_pos, &mics, fs)?;

    let target_mono: Vec<f64> = target.channel(0).to_vec();
    let interferer_mono = tile_to(interferer.channel(0).as_slice().unwrap(), n);
    let noise_mono = tile_to(noise.channel(0).as_slice().unwrap(), n);

    let reverberant_target = target_rir.convolve_mono(&target_mono);
    let early_target = target_rir.truncated_early().convolve_mono(&target_mono);
    let anechoic_target = anechoic_rir.convolve_mono(&target_mono);
    let mut interferer_img = interferer_rir.convolve_mono(&interferer_mono);
    let mut noise_img = noise_rir.convolve_mono(&noise_mono);

    let e_target = reverberant_target.channel_energy(0);
    let e_interf = interferer_img.channel_energy(0);
    let e_noise = noise_img.channel_energy(0);
    if e_target <= 0.0 || e_interf <= 0.0 || e_noise <= 0.0 {
        return Err(Error::degenerate("a rendered image is silent at the reference channel"));
    }
    let g_interf = (e_target / (e_interf * 10f64.powf(scene.sir_db / 10.0))).sqrt();
    let g_noise = (e_target / (e_noise * 10f64.powf(scene.snr_db / 10.0))).sqrt();
    interferer_img.samples.mapv_inplace(|v| v * g_interf);
    noise_img.samples.mapv_inplace(|v| v * g_noise);

    let mixture = MultiChannelWave {
        samples: &reverberant_target.samples + &interferer_img.samples + &noise_img.samples,
        sample_rate: fs,
    };
    Ok(SimulatedMixture {
        mixture,
        reverberant_target,
        early_target,
        anechoic_target,
        interferer: interferer_img,
        noise: noise_img,
        target_rir,
    })
}

fn tile_to(src: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| src[i % src.len()]).collect()
}

/// Lists of source and noise WAV paths backing a simulation run.
#[derive(Debug, Clone, Default)]
pub struct CorpusManifest {
    pub sources: Vec<std::path::PathBuf>,
    pub noises: Vec<std::path::PathBuf>,
}

impl CorpusManifest {
    /// Read newline-separated WAV paths; blank lines and '#' comments are
    /// skipped. Relative paths are resolved against the manifest location.
    pub fn load(
        sources: impl AsRef<std::path::Path>,
        noises: impl AsRef<std::path::Path>,
    ) -> Result<Self> {
        Ok(Self {
            sources: read_path_list(sources.as_ref())?,
            noises: read_path_list(noises.as_ref())?,
        })
    }
}

fn read_path_list(path: &std::path::Path) -> Result<Vec<std::path::PathBuf>> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| std::path::Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let p = std::path::PathBuf::from(l);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        })
        .collect())
}

/// Draw one scene. All quantities are uniform over their documented ranges;
/// the speaker angle difference is drawn by first picking one of the four
/// bins and then rejection-sampling the interferer position. T60 draws the
/// room cannot reach (Sabine absorption >= 1) are rejected and redrawn, so
/// small-room scenes keep the full T60 range while large rooms stay
/// physical.
pub fn sample_scene(seed: u64, manifest: &CorpusManifest) -> Result<RoomScene> {
    if manifest.noises.is_empty() {
        return Err(Error::Sampling("noise manifest is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geometry = ArrayGeometry::linear_15();

    let room = [
        rng.gen_range(4.0..=10.0),
        rng.gen_range(4.0..=10.0),
        rng.gen_range(3.0..=6.0),
    ];
    let t60 = {
        let mut t = rng.gen_range(0.14..=0.92);
        let mut tries = 0;
        while sabine_absorption(&room, t) >= 1.0 {
            t = rng.gen_range(0.14..=0.92);
            tries += 1;
            if tries > SAMPLING_BUDGET {
                return Err(Error::Sampling("no reachable T60 for drawn room".into()));
            }
        }
        t
    };

    let wall = 0.3;
    let span = geometry.half_span();
    let array_center = [
        rng.gen_range(span + wall..=room[0] - span - wall),
        rng.gen_range(wall..=room[1] - wall),
        rng.gen_range(1.0..=2.0),
    ];

    let draw_source = |rng: &mut ChaCha8Rng| -> Result<[f64; 3]> {
        for _ in 0..SAMPLING_BUDGET {
            let p = [
                rng.gen_range(wall..=room[0] - wall),
                rng.gen_range(wall..=room[1] - wall),
                rng.gen_range(1.2..=2.0),
            ];
            let d = dist(&p, &array_center);
            if (1.0..=5.0).contains(&d) {
                return Ok(p);
            }
        }
        Err(Error::Sampling("source distance budget exceeded".into()))
    };

    let target_pos = draw_source(&mut rng)?;
    let target_az = (target_pos[1] - array_center[1]).atan2(target_pos[0] - array_center[0]);

    let angle_bin = rng.gen_range(0..ANGLE_BINS_DEG.len());
    let (lo, hi) = ANGLE_BINS_DEG[angle_bin];
    let mut interferer_pos = None;
    let mut angle_diff_deg = 0.0;
    for _ in 0..SAMPLING_BUDGET {
        let p = draw_source(&mut rng)?;
        let az = (p[1] - array_center[1]).atan2(p[0] - array_center[0]);
        let mut diff = (az - target_az).abs().to_degrees();
        if diff > 180.0 {
            diff = 360.0 - diff;
        }
        if diff >= lo && diff < hi {
            interferer_pos = Some(p);
            angle_diff_deg = diff;
            break;
        }
    }
    let Some(interferer_pos) = interferer_pos else {
        return Err(Error::Sampling(format!(
            "angle bin [{lo}, {hi}) budget of {SAMPLING_BUDGET} draws exceeded"
        )));
    };

    let noise_pos = draw_source(&mut rng)?;
    let snr_db = SNR_CHOICES_DB[rng.gen_range(0..SNR_CHOICES_DB.len())];
    let sir_db = SIR_CHOICES_DB[rng.gen_range(0..SIR_CHOICES_DB.len())];
    let noise_id = rng.gen_range(0..manifest.noises.len());

    let scene = RoomScene {
        room,
        t60,
        array_center,
        geometry,
        target_pos,
        interferer_pos,
        noise_pos,
        snr_db,
        sir_db,
        angle_bin,
        angle_diff_deg,
        noise_id,
        seed,
    };
    scene.validate()?;
    Ok(scene)
}
