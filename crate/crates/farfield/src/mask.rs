//! Complex time-frequency masks and spatial features.
//!
//! Masks are complex ratios estimated per TF bin. Oracle masks divide a
//! reference spectrogram by the observed mixture, which explodes wherever the
//! mixture is nearly silent, so construction clamps magnitudes to
//! [`MASK_CLIP`] and zeroes bins below the silence floor. The same clamping
//! applies to masks loaded from files.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::room::ArrayGeometry;
use crate::stft::Spectrogram;
use crate::C64;

/// Maximum mask magnitude after construction.
pub const MASK_CLIP: f64 = 10.0;

/// Mixture magnitude below which an oracle mask bin is set to zero.
pub const ORACLE_SILENCE_FLOOR: f64 = 1e-8;

const MASK_MAGIC: &[u8; 4] = b"CFMK";

/// Complex mask over frames x bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMask {
    pub values: Array2<C64>,
}

impl ComplexMask {
    /// Wraps raw values, zeroing non-finite entries and clamping magnitudes
    /// to [`MASK_CLIP`] while preserving phase.
    pub fn new(mut values: Array2<C64>) -> Self {
        values.mapv_inplace(|v| {
            if !v.re.is_finite() || !v.im.is_finite() {
                C64::new(0.0, 0.0)
            } else {
                let mag = v.norm();
                if mag > MASK_CLIP {
                    v * (MASK_CLIP / mag)
                } else {
                    v
                }
            }
        });
        Self { values }
    }

    /// All-pass mask (every bin 1 + 0i).
    pub fn ones(frames: usize, bins: usize) -> Self {
        Self {
            values: Array2::from_elem((frames, bins), C64::new(1.0, 0.0)),
        }
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn bins(&self) -> usize {
        self.values.ncols()
    }

    /// Elementwise complement 1 - M, clamped like any constructed mask.
    pub fn complement(&self) -> ComplexMask {
        ComplexMask::new(self.values.mapv(|v| C64::new(1.0, 0.0) - v))
    }
}

/// Oracle complex ratio mask target/mixture on one reference channel.
pub fn oracle_complex_mask(
    target: &Spectrogram,
    mixture: &Spectrogram,
    channel: usize,
) -> Result<ComplexMask> {
    if target.frames() != mixture.frames() || target.bins() != mixture.bins() {
        return Err(Error::shape(format!(
            "target {}x{} vs mixture {}x{}",
            target.frames(),
            target.bins(),
            mixture.frames(),
            mixture.bins()
        )));
    }
    if channel >= target.channels() || channel >= mixture.channels() {
        return Err(Error::shape(format!(
            "channel {channel} out of range ({} target / {} mixture channels)",
            target.channels(),
            mixture.channels()
        )));
    }
    let (t, f) = (mixture.frames(), mixture.bins());
    let values = Array2::from_shape_fn((t, f), |(ti, fi)| {
        let y = mixture.values[(channel, ti, fi)];
        if y.norm() < ORACLE_SILENCE_FLOOR {
            C64::new(0.0, 0.0)
        } else {
            target.values[(channel, ti, fi)] / y
        }
    });
    Ok(ComplexMask::new(values))
}

/// Microphone index pairs for phase-difference features.
#[derive(Debug, Clone)]
pub struct MicPairList {
    pub pairs: Vec<(usize, usize)>,
}

impl MicPairList {
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        Self { pairs }
    }

    /// The nine wide-to-narrow pairs used with the 15-channel linear array.
    pub fn default_15ch() -> Self {
        Self {
            pairs: vec![
                (0, 14),
                (1, 13),
                (2, 12),
                (0, 6),
                (11, 3),
                (10, 4),
                (11, 7),
                (6, 9),
                (7, 8),
            ],
        }
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::config("at least one microphone pair is required"));
        }
        for &(i, j) in &self.pairs {
            if i >= channels || j >= channels {
                return Err(Error::config(format!(
                    "pair ({i}, {j}) out of range for {channels} channels"
                )));
            }
            if i == j {
                return Err(Error::config(format!("pair ({i}, {j}) is degenerate")));
            }
        }
        Ok(())
    }
}

/// Cosine inter-channel phase differences, one F-column block per pair:
/// out[t, p*F + f] = cos(angle(y_i) - angle(y_j)).
pub fn ipd_features(spec: &Spectrogram, pairs: &MicPairList) -> Result<Array2<f64>> {
    pairs.validate(spec.channels())?;
    let (t, f, p) = (spec.frames(), spec.bins(), pairs.pairs.len());
    let mut out = Array2::zeros((t, f * p));
    for (pi, &(i, j)) in pairs.pairs.iter().enumerate() {
        for ti in 0..t {
            for fi in 0..f {
                let phasor = spec.values[(i, ti, fi)] * spec.values[(j, ti, fi)].conj();
                let n = phasor.norm();
                out[(ti, pi * f + fi)] = if n > 0.0 { phasor.re / n } else { 0.0 };
            }
        }
    }
    Ok(out)
}

/// Directional angle feature: mean over pairs of the cosine similarity
/// between the observed inter-channel phasor and the far-field plane-wave
/// steering phasor for a source at azimuth `doa` (radians, measured from the
/// array axis in the horizontal plane).
pub fn angle_feature(
    spec: &Spectrogram,
    doa: f64,
    geometry: &ArrayGeometry,
    pairs: &MicPairList,
) -> Result<Array2<f64>> {
    pairs.validate(spec.channels())?;
    if geometry.positions.len() != spec.channels() {
        return Err(Error::shape(format!(
            "geometry has {} mics, spectrogram {} channels",
            geometry.positions.len(),
            spec.channels()
        )));
    }
    let delays = geometry.steering_delays(doa);
    let (t, f, p) = (spec.frames(), spec.bins(), pairs.pairs.len());
    let mut out = Array2::zeros((t, f));
    for (i_pair, &(i, j)) in pairs.pairs.iter().enumerate() {
        let _ = i_pair;
        let dt = delays[i] - delays[j];
        for fi in 0..f {
            let phase = 2.0 * std::f64::consts::PI * spec.bin_hz(fi) * dt;
            let steer = C64::new(phase.cos(), phase.sin());
            for ti in 0..t {
                let obs = spec.values[(i, ti, fi)] * spec.values[(j, ti, fi)].conj();
                let n = obs.norm();
                if n > 0.0 {
                    out[(ti, fi)] += (obs * steer.conj()).re / n;
                }
            }
        }
    }
    out.mapv_inplace(|v| v / p as f64);
    Ok(out)
}

/// Write a mask: magic "CFMK", little-endian u32 frames, u32 bins, then
/// frames*bins interleaved (re, im) f32 pairs, row-major by frame.
pub fn save_mask(path: impl AsRef<Path>, mask: &ComplexMask) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(MASK_MAGIC)?;
    file.write_all(&(mask.frames() as u32).to_le_bytes())?;
    file.write_all(&(mask.bins() as u32).to_le_bytes())?;
    for t in 0..mask.frames() {
        for f in 0..mask.bins() {
            let v = mask.values[(t, f)];
            file.write_all(&(v.re as f32).to_le_bytes())?;
            file.write_all(&(v.im as f32).to_le_bytes())?;
        }
    }
    file.flush()?;
    Ok(())
}

/// Read a mask written by [`save_mask`]. Values pass through the usual
/// construction clamp.
pub fn load_mask(path: impl AsRef<Path>) -> Result<ComplexMask> {
    let path = path.as_ref();
    let bad = |detail: &str| Error::Format {
        path: path.display().to_string(),
        detail: detail.into(),
    };
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header = [0u8; 12];
    file.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
    if &header[0..4] != MASK_MAGIC {
        return Err(bad("bad magic, expected CFMK"));
    }
    let frames = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let bins = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let count = frames
        .checked_mul(bins)
        .ok_or_else(|| bad("dimension overflow"))?;
    let mut payload = vec![0u8; count * 8];
    file.read_exact(&mut payload).map_err(|_| bad("truncated payload"))?;
    let mut extra = [0u8; 1];
    if file.read(&mut extra)? != 0 {
        return Err(bad("trailing bytes after payload"));
    }
    let mut values = Array2::zeros((frames, bins));
    for idx in 0..count {
        let re = f32::from_le_bytes(payload[idx * 8..idx * 8 + 4].try_into().unwrap());
        let im = f32::from_le_bytes(payload[idx * 8 + 4..idx * 8 + 8].try_into().unwrap());
        values[(idx / bins, idx % bins)] = C64::new(f64::from(re), f64::from(im));
    }
    Ok(ComplexMask::new(values))
}
