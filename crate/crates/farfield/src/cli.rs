//! Batch drivers behind the `farfield` binary.
//!
//! Three subcommands chain into a reproducible experiment:
//!
//! * `simulate` — render a seeded corpus of cocktail-party mixtures with
//!   all reference images and a `scenes.jsonl` provenance record,
//! * `enhance` — run one of the [`Architecture`]s over a simulated corpus,
//!   with oracle masks or a directory of mask files,
//! * `evaluate` — score estimate/reference pairs and print per-utterance
//!   lines plus an aggregate table, optionally gating the exit code on
//!   metric thresholds.
//!
//! Every option can come from a JSON `--config` file; explicit flags
//! override the file. Parallelism is at utterance granularity only and
//! results are merged in manifest order, so for a fixed seed the output
//! bytes do not depend on the worker count.

use std::env;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::s;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{load_mask, ComplexMask};
use crate::metrics::{evaluate_utterance, MetricReport};
use crate::pipeline::{self, Architecture, ExplicitMasks, MaskProvider, OracleRefs, PipelineConfig};
use crate::room::{measure_t60, sample_scene, simulate_mixture, CorpusManifest};
use crate::room::RoomScene;
use crate::stft::{istft, stft, StftConfig};
use crate::wave::{read_wav, resample, write_wav, MultiChannelWave, WavEncoding};

/// Sample rate every corpus is rendered at; sources at other rates are
/// resampled on read.
pub const CORPUS_FS: u32 = 16_000;

/// Exit code for malformed invocations (also what clap uses).
pub const EXIT_USAGE: i32 = 2;

/// Ceiling for failure-count exit codes, keeping them inside the range
/// shells report faithfully.
pub const EXIT_FAILURE_CAP: i32 = 100;

#[derive(Debug, Parser)]
#[command(name = "farfield", version, about = "Far-field speech enhancement experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a seeded corpus of simulated cocktail-party mixtures.
    Simulate(SimulateArgs),
    /// Enhance a simulated corpus with one pipeline architecture.
    Enhance(EnhanceArgs),
    /// Score estimate/reference pairs and print aggregate metrics.
    Evaluate(EvaluateArgs),
}

/// Parse the process arguments, run the selected subcommand and return the
/// process exit code.
pub fn run() -> i32 {
    match Cli::parse().command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Enhance(args) => cmd_enhance(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        _ => 1,
    }
}

fn failure_exit(failures: usize) -> i32 {
    (failures as i32).min(EXIT_FAILURE_CAP)
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).map_err(|e| Error::Format {
            path: p.display().to_string(),
            detail: e.to_string(),
        }),
    }
}

fn required<T: Clone>(value: &Option<T>, what: &str) -> Result<T> {
    value.clone().ok_or_else(|| Error::config(format!("missing required option: {what}")))
}

fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))
}

/// Resolve a possibly relative manifest entry against the manifest's
/// directory.
fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Express `target` relative to `base` when it lives underneath it, so
/// manifests stay valid after the directory is moved; anything outside is
/// stored absolute so the manifest resolves from any working directory.
fn relative_to(base: &Path, target: &Path) -> PathBuf {
    if let Ok(rel) = target.strip_prefix(base) {
        return rel.to_path_buf();
    }
    if target.is_absolute() {
        target.to_path_buf()
    } else {
        env::current_dir().map(|d| d.join(target)).unwrap_or_else(|_| target.to_path_buf())
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Format {
                path: path.display().to_string(),
                detail: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Seed for utterance `index` of a run seeded with `seed`: one splitmix64
/// step, so neighbouring indices get uncorrelated streams and the mapping
/// is stable when the corpus grows.
pub fn utterance_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------- simulate

/// Options for `simulate`; also the schema of its `--config` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Newline-separated list of source-speech WAV paths.
    pub sources: Option<PathBuf>,
    /// Newline-separated list of noise WAV paths.
    pub noises: Option<PathBuf>,
    /// Output directory.
    pub out: Option<PathBuf>,
    /// Number of utterances to render.
    pub count: usize,
    /// Global seed.
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Largest number of failed scenes tolerated with a zero exit.
    pub max_failures: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            sources: None,
            noises: None,
            out: None,
            count: 10,
            seed: 0,
            workers: 0,
            max_failures: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    /// JSON config file; explicit flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Newline-separated list of source-speech WAV paths.
    #[arg(long)]
    pub sources: Option<PathBuf>,
    /// Newline-separated list of noise WAV paths.
    #[arg(long)]
    pub noises: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of utterances to render.
    #[arg(long)]
    pub count: Option<usize>,
    /// Global seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Largest number of failed scenes tolerated with a zero exit.
    #[arg(long)]
    pub max_failures: Option<usize>,
}

impl SimulateArgs {
    pub fn resolve(&self) -> Result<SimulateConfig> {
        let mut cfg: SimulateConfig = load_config(self.config.as_deref())?;
        if self.sources.is_some() {
            cfg.sources = self.sources.clone();
        }
        if self.noises.is_some() {
            cfg.noises = self.noises.clone();
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if let Some(v) = self.count {
            cfg.count = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = self.max_failures {
            cfg.max_failures = v;
        }
        Ok(cfg)
    }
}

/// One line of `scenes.jsonl`: everything needed to regenerate and to
/// enhance the utterance. Output WAV paths are relative to the record
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub id: String,
    pub index: usize,
    pub seed: u64,
    pub source: PathBuf,
    pub interferer_source: PathBuf,
    pub noise_source: PathBuf,
    pub scene: RoomScene,
    pub measured_t60: f64,
    pub measured_snr_db: f64,
    pub measured_sir_db: f64,
    pub mixture: PathBuf,
    pub reverberant: PathBuf,
    pub early: PathBuf,
    pub anechoic: PathBuf,
}

#[derive(Debug, Clone)]
pub struct SimulateSummary {
    pub written: usize,
    pub failures: usize,
    pub mean_t60: f64,
    pub mean_snr_db: f64,
    pub mean_sir_db: f64,
    /// Path of the `scenes.jsonl` record file.
    pub records: PathBuf,
}

/// Distinguishes the source-file draw from the scene draw sharing the same
/// utterance seed.
const SOURCE_DRAW_SALT: u64 = 0x736f_7572_6365;

fn read_source(path: &Path) -> Result<MultiChannelWave> {
    let wave = read_wav(path)?;
    let mono = if wave.channels() == 1 { wave } else { wave.take_channel(0) };
    if mono.sample_rate == CORPUS_FS {
        return Ok(mono);
    }
    let samples = resample(&mono.channel(0).to_vec(), mono.sample_rate, CORPUS_FS)?;
    Ok(MultiChannelWave::from_mono(samples, CORPUS_FS))
}

fn render_utterance(
    index: usize,
    global_seed: u64,
    manifest: &CorpusManifest,
    out: &Path,
) -> Result<SceneRecord> {
    let seed = utterance_seed(global_seed, index as u64);
    let scene = sample_scene(seed, manifest)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SOURCE_DRAW_SALT);
    let target_id = rng.gen_range(0..manifest.sources.len());
    let interferer_id = if manifest.sources.len() > 1 {
        // Uniform over the other files.
        let mut j = rng.gen_range(0..manifest.sources.len() - 1);
        if j >= target_id {
            j += 1;
        }
        j
    } else {
        target_id
    };

    let target = read_source(&manifest.sources[target_id])?;
    let interferer = read_source(&manifest.sources[interferer_id])?;
    let noise = read_source(&manifest.noises[scene.noise_id])?;
    let sim = simulate_mixture(&target, &interferer, &noise, &scene)?;

    let id = format!("utt_{index:04}");
    for (tag, wave) in [
        ("mixture", &sim.mixture),
        ("reverberant", &sim.reverberant_target),
        ("early", &sim.early_target),
        ("anechoic", &sim.anechoic_target),
    ] {
        write_wav(out.join(format!("{id}_{tag}.wav")), wave, WavEncoding::Float32)?;
    }

    let e_target = sim.reverberant_target.channel_energy(0);
    Ok(SceneRecord {
        id: id.clone(),
        index,
        seed,
        source: manifest.sources[target_id].clone(),
        interferer_source: manifest.sources[interferer_id].clone(),
        noise_source: manifest.noises[scene.noise_id].clone(),
        measured_t60: measure_t60(&sim.target_rir, 0)?,
        measured_snr_db: 10.0 * (e_target / sim.noise.channel_energy(0)).log10(),
        measured_sir_db: 10.0 * (e_target / sim.interferer.channel_energy(0)).log10(),
        scene,
        mixture: PathBuf::from(format!("{id}_mixture.wav")),
        reverberant: PathBuf::from(format!("{id}_reverberant.wav")),
        early: PathBuf::from(format!("{id}_early.wav")),
        anechoic: PathBuf::from(format!("{id}_anechoic.wav")),
    })
}

/// Render `cfg.count` seeded scenes into `cfg.out` along with
/// `scenes.jsonl`. Individual scene failures are reported on stderr and
/// tallied; everything that succeeded is still written.
pub fn simulate(cfg: &SimulateConfig) -> Result<SimulateSummary> {
    let sources = required(&cfg.sources, "--sources")?;
    let noises = required(&cfg.noises, "--noises")?;
    let out = required(&cfg.out, "--out")?;
    let manifest = CorpusManifest::load(&sources, &noises)?;
    if manifest.sources.is_empty() {
        return Err(Error::config(format!("source manifest {} is empty", sources.display())));
    }
    if manifest.noises.is_empty() {
        return Err(Error::config(format!("noise manifest {} is empty", noises.display())));
    }
    fs::create_dir_all(&out)?;

    let pool = worker_pool(cfg.workers)?;
    let results: Vec<Result<SceneRecord>> = pool.install(|| {
        (0..cfg.count)
            .into_par_iter()
            .map(|i| render_utterance(i, cfg.seed, &manifest, &out))
            .collect()
    });

    let mut records = Vec::new();
    let mut failures = 0usize;
    for (index, result) in results.into_iter().enumerate() {
        match result {
            Ok(record) => records.push(record),
            Err(e) => {
                failures += 1;
                eprintln!("utt_{index:04}: simulation failed: {e}");
            }
        }
    }

    let records_path = out.join("scenes.jsonl");
    write_jsonl(&records_path, &records)?;

    let n = records.len().max(1) as f64;
    Ok(SimulateSummary {
        written: records.len(),
        failures,
        mean_t60: records.iter().map(|r| r.measured_t60).sum::<f64>() / n,
        mean_snr_db: records.iter().map(|r| r.measured_snr_db).sum::<f64>() / n,
        mean_sir_db: records.iter().map(|r| r.measured_sir_db).sum::<f64>() / n,
        records: records_path,
    })
}

fn cmd_simulate(args: &SimulateArgs) -> i32 {
    let cfg = match args.resolve() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match simulate(&cfg) {
        Ok(summary) => {
            println!(
                "simulated {} scenes ({} failed) -> {}",
                summary.written,
                summary.failures,
                summary.records.display()
            );
            println!(
                "mean T60 {:.3} s | mean measured SNR {:+.2} dB | mean measured SIR {:+.2} dB",
                summary.mean_t60, summary.mean_snr_db, summary.mean_sir_db
            );
            if summary.failures > cfg.max_failures {
                eprintln!(
                    "error: {} scenes failed (tolerated: {})",
                    summary.failures, cfg.max_failures
                );
                failure_exit(summary.failures)
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

// ----------------------------------------------------------------- enhance

/// Options for `enhance`; also the schema of its `--config` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhanceConfig {
    /// `scenes.jsonl` written by `simulate`.
    pub scenes: Option<PathBuf>,
    /// Output directory.
    pub out: Option<PathBuf>,
    /// Architecture name: sep-only, sep-then-dervb, dervb-then-sep or joint-wpd.
    pub arch: String,
    /// `oracle`, or a directory of `<id>.<stage>.cfmk` mask files.
    pub masks: String,
    /// Override the prediction filter length of the architecture's stage.
    pub taps: Option<usize>,
    /// Override the prediction delay.
    pub delay: Option<usize>,
    /// Override the stage's flooring constant (the MVDR flooring for
    /// sep-only).
    pub eps: Option<f64>,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            scenes: None,
            out: None,
            arch: Architecture::SepOnly.name().into(),
            masks: "oracle".into(),
            taps: None,
            delay: None,
            eps: None,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct EnhanceArgs {
    /// JSON config file; explicit flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// scenes.jsonl written by `simulate`.
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Architecture name: sep-only, sep-then-dervb, dervb-then-sep or joint-wpd.
    #[arg(long)]
    pub arch: Option<String>,
    /// `oracle`, or a directory of `<id>.<stage>.cfmk` mask files.
    #[arg(long)]
    pub masks: Option<String>,
    /// Override the prediction filter length of the architecture's stage.
    #[arg(long)]
    pub taps: Option<usize>,
    /// Override the prediction delay.
    #[arg(long)]
    pub delay: Option<usize>,
    /// Override the stage's flooring constant.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl EnhanceArgs {
    pub fn resolve(&self) -> Result<EnhanceConfig> {
        let mut cfg: EnhanceConfig = load_config(self.config.as_deref())?;
        if self.scenes.is_some() {
            cfg.scenes = self.scenes.clone();
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if let Some(v) = &self.arch {
            cfg.arch = v.clone();
        }
        if let Some(v) = &self.masks {
            cfg.masks = v.clone();
        }
        if self.taps.is_some() {
            cfg.taps = self.taps;
        }
        if self.delay.is_some() {
            cfg.delay = self.delay;
        }
        if self.eps.is_some() {
            cfg.eps = self.eps;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        Ok(cfg)
    }
}

/// Where `enhance` takes its stage masks from.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskSource {
    /// Compute oracle masks from the corpus reference images.
    Oracle,
    /// Load `<id>.<stage>.cfmk` files from this directory; stages are
    /// `sep_target`, `sep_noise`, `dereverb`, `wpd_target`, `wpd_lambda`.
    Dir(PathBuf),
}

impl MaskSource {
    pub fn parse(value: &str) -> Result<MaskSource> {
        if value == "oracle" {
            return Ok(MaskSource::Oracle);
        }
        let dir = PathBuf::from(value);
        if !dir.is_dir() {
            return Err(Error::config(format!(
                "--masks must be `oracle` or an existing directory, got {value}"
            )));
        }
        Ok(MaskSource::Dir(dir))
    }
}

fn load_mask_set(dir: &Path, id: &str) -> Result<ExplicitMasks> {
    let load = |stage: &str| -> Result<Option<ComplexMask>> {
        let path = dir.join(format!("{id}.{stage}.cfmk"));
        if path.exists() {
            Ok(Some(load_mask(&path)?))
        } else {
            Ok(None)
        }
    };
    Ok(ExplicitMasks {
        separation_target: load("sep_target")?,
        separation_noise: load("sep_noise")?,
        dereverb: load("dereverb")?,
        wpd_target: load("wpd_target")?,
        wpd_lambda: load("wpd_lambda")?,
    })
}

/// Pipeline configuration for `arch` with the stage that architecture
/// actually runs patched by the overrides: the prediction filter for the
/// chained and joint architectures, the MVDR flooring for separation alone.
pub fn effective_pipeline(
    arch: Architecture,
    taps: Option<usize>,
    delay: Option<usize>,
    eps: Option<f64>,
) -> PipelineConfig {
    let mut cfg = PipelineConfig::for_architecture(arch);
    match arch {
        Architecture::SepOnly => {
            if let Some(e) = eps {
                cfg.mvdr_eps = e;
            }
        }
        Architecture::SepThenDervb | Architecture::DervbThenSep => {
            if let Some(t) = taps {
                cfg.wpe.taps = t;
            }
            if let Some(d) = delay {
                cfg.wpe.delay = d;
            }
            if let Some(e) = eps {
                cfg.wpe.floor_eps = e;
            }
        }
        Architecture::JointWpd => {
            if let Some(t) = taps {
                cfg.wpd.taps = t;
            }
            if let Some(d) = delay {
                cfg.wpd.delay = d;
            }
            if let Some(e) = eps {
                cfg.wpd.eps = e;
            }
        }
    }
    cfg
}

/// The tap count, delay and flooring constant of the stage `cfg` runs.
pub fn stage_knobs(cfg: &PipelineConfig) -> (usize, usize, f64) {
    match cfg.architecture {
        Architecture::SepOnly => (0, 0, cfg.mvdr_eps),
        Architecture::SepThenDervb | Architecture::DervbThenSep => {
            (cfg.wpe.taps, cfg.wpe.delay, cfg.wpe.floor_eps)
        }
        Architecture::JointWpd => (cfg.wpd.taps, cfg.wpd.delay, cfg.wpd.eps),
    }
}

/// One line of `enhanced.jsonl`: the estimate with enough provenance to
/// regenerate it. Paths are relative to the record file's directory when
/// the files live underneath it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceRecord {
    pub id: String,
    pub architecture: String,
    pub masks: String,
    pub taps: usize,
    pub delay: usize,
    pub eps: f64,
    pub estimate: PathBuf,
    pub reference: PathBuf,
    pub mixture: PathBuf,
}

#[derive(Debug, Clone)]
pub struct EnhanceSummary {
    pub written: usize,
    pub failures: usize,
    /// Path of the `enhanced.jsonl` record file.
    pub records: PathBuf,
}

fn enhance_utterance(
    record: &SceneRecord,
    base: &Path,
    out: &Path,
    cfg: &PipelineConfig,
    masks: &MaskSource,
    masks_name: &str,
) -> Result<EnhanceRecord> {
    let stft_cfg = StftConfig::default();
    let mixture_path = resolve(base, &record.mixture);
    let mixture = stft(&read_wav(&mixture_path)?, &stft_cfg)?;

    let enhanced = match masks {
        MaskSource::Oracle => {
            let refs = OracleRefs {
                reverberant_target: stft(&read_wav(resolve(base, &record.reverberant))?, &stft_cfg)?,
                early_target: stft(&read_wav(resolve(base, &record.early))?, &stft_cfg)?,
            };
            pipeline::run(&mixture, &MaskProvider::Oracle(&refs), cfg)?
        }
        MaskSource::Dir(dir) => {
            let set = load_mask_set(dir, &record.id)?;
            pipeline::run(&mixture, &MaskProvider::Explicit(&set), cfg)?
        }
    };

    let estimate = istft(&enhanced)?;
    let estimate_name = format!("{}_enhanced.wav", record.id);
    write_wav(out.join(&estimate_name), &estimate, WavEncoding::Float32)?;

    let (taps, delay, eps) = stage_knobs(cfg);
    Ok(EnhanceRecord {
        id: record.id.clone(),
        architecture: cfg.architecture.name().into(),
        masks: masks_name.into(),
        taps,
        delay,
        eps,
        estimate: PathBuf::from(estimate_name),
        reference: relative_to(out, &resolve(base, &record.early)),
        mixture: relative_to(out, &mixture_path),
    })
}

/// Enhance every utterance of a simulated corpus; writes one mono estimate
/// per scene plus `enhanced.jsonl`. Per-utterance failures are reported on
/// stderr and tallied.
pub fn enhance(cfg: &EnhanceConfig) -> Result<EnhanceSummary> {
    let scenes_path = required(&cfg.scenes, "--scenes")?;
    let out = required(&cfg.out, "--out")?;
    let arch = Architecture::parse(&cfg.arch)?;
    let masks = MaskSource::parse(&cfg.masks)?;
    let records: Vec<SceneRecord> = read_jsonl(&scenes_path)?;
    if records.is_empty() {
        return Err(Error::config(format!("scene record file {} is empty", scenes_path.display())));
    }
    fs::create_dir_all(&out)?;

    let base = scenes_path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let pipeline_cfg = effective_pipeline(arch, cfg.taps, cfg.delay, cfg.eps);
    pipeline_cfg.validate()?;

    let pool = worker_pool(cfg.workers)?;
    let results: Vec<Result<EnhanceRecord>> = pool.install(|| {
        records
            .par_iter()
            .map(|r| enhance_utterance(r, &base, &out, &pipeline_cfg, &masks, &cfg.masks))
            .collect()
    });

    let mut rows = Vec::new();
    let mut failures = 0usize;
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(row) => {
                eprintln!(
                    "{}: {} masks={} taps={} delay={} eps={:.0e} -> {}",
                    row.id,
                    row.architecture,
                    row.masks,
                    row.taps,
                    row.delay,
                    row.eps,
                    out.join(&row.estimate).display()
                );
                rows.push(row);
            }
            Err(e) => {
                failures += 1;
                eprintln!("{}: enhancement failed: {e}", record.id);
            }
        }
    }

    let records_path = out.join("enhanced.jsonl");
    write_jsonl(&records_path, &rows)?;
    Ok(EnhanceSummary { written: rows.len(), failures, records: records_path })
}

fn cmd_enhance(args: &EnhanceArgs) -> i32 {
    let cfg = match args.resolve() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match enhance(&cfg) {
        Ok(summary) => {
            println!(
                "enhanced {} utterances ({} failed) -> {}",
                summary.written,
                summary.failures,
                summary.records.display()
            );
            failure_exit(summary.failures)
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

// ---------------------------------------------------------------- evaluate

/// Options for `evaluate`; also the schema of its `--config` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// JSONL manifest with at least `id`, `estimate` and `reference` per
    /// line; `enhanced.jsonl` qualifies.
    pub manifest: Option<PathBuf>,
    /// Per-utterance report JSONL destination; omitted, rows go to stdout.
    pub report: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    /// Exit nonzero when the mean STOI falls below this.
    pub min_stoi: Option<f64>,
    /// Exit nonzero when the mean SISNR falls below this.
    pub min_sisnr: Option<f64>,
    /// Exit nonzero when the mean SRMR falls below this.
    pub min_srmr: Option<f64>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            report: None,
            workers: 0,
            min_stoi: None,
            min_sisnr: None,
            min_srmr: None,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvaluateArgs {
    /// JSON config file; explicit flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSONL manifest of {id, estimate, reference} rows.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Per-utterance report JSONL destination.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Exit nonzero when the mean STOI falls below this.
    #[arg(long)]
    pub min_stoi: Option<f64>,
    /// Exit nonzero when the mean SISNR falls below this.
    #[arg(long)]
    pub min_sisnr: Option<f64>,
    /// Exit nonzero when the mean SRMR falls below this.
    #[arg(long)]
    pub min_srmr: Option<f64>,
}

impl EvaluateArgs {
    pub fn resolve(&self) -> Result<EvaluateConfig> {
        let mut cfg: EvaluateConfig = load_config(self.config.as_deref())?;
        if self.manifest.is_some() {
            cfg.manifest = self.manifest.clone();
        }
        if self.report.is_some() {
            cfg.report = self.report.clone();
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if self.min_stoi.is_some() {
            cfg.min_stoi = self.min_stoi;
        }
        if self.min_sisnr.is_some() {
            cfg.min_sisnr = self.min_sisnr;
        }
        if self.min_srmr.is_some() {
            cfg.min_srmr = self.min_srmr;
        }
        Ok(cfg)
    }
}

/// Input row of the evaluation manifest; extra fields are ignored.
#[derive(Debug, Clone, Deserialize)]
pub struct EvalPair {
    pub id: String,
    pub estimate: PathBuf,
    pub reference: PathBuf,
}

/// Output row of the evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    #[serde(flatten)]
    pub metrics: MetricReport,
}

#[derive(Debug, Clone)]
pub struct EvaluateSummary {
    pub rows: Vec<EvalRecord>,
    pub failures: usize,
    pub mean: Option<MetricReport>,
    /// Human-readable descriptions of every violated `min_*` threshold.
    pub gate_violations: Vec<String>,
}

fn truncate_wave(wave: &MultiChannelWave, len: usize) -> MultiChannelWave {
    MultiChannelWave {
        samples: wave.samples.slice(s![.., ..len]).to_owned(),
        sample_rate: wave.sample_rate,
    }
}

fn evaluate_pair(pair: &EvalPair, base: &Path) -> Result<(EvalRecord, Option<String>)> {
    let mut estimate = read_wav(resolve(base, &pair.estimate))?;
    let mut reference = read_wav(resolve(base, &pair.reference))?;
    let warning = if estimate.len() != reference.len() {
        let len = estimate.len().min(reference.len());
        let msg = format!(
            "{}: length mismatch ({} vs {} samples), trimmed to {len}",
            pair.id,
            estimate.len(),
            reference.len()
        );
        estimate = truncate_wave(&estimate, len);
        reference = truncate_wave(&reference, len);
        Some(msg)
    } else {
        None
    };
    let metrics = evaluate_utterance(&estimate, &reference)?;
    Ok((EvalRecord { id: pair.id.clone(), metrics }, warning))
}

/// Score every manifest pair; returns rows in manifest order plus the
/// aggregate mean and any violated gates. Mismatched lengths are trimmed to
/// the shorter side with a warning on stderr.
pub fn evaluate(cfg: &EvaluateConfig) -> Result<EvaluateSummary> {
    let manifest_path = required(&cfg.manifest, "--manifest")?;
    let pairs: Vec<EvalPair> = read_jsonl(&manifest_path)?;
    if pairs.is_empty() {
        return Err(Error::config(format!(
            "evaluation manifest {} is empty",
            manifest_path.display()
        )));
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();

    let pool = worker_pool(cfg.workers)?;
    let results: Vec<Result<(EvalRecord, Option<String>)>> =
        pool.install(|| pairs.par_iter().map(|p| evaluate_pair(p, &base)).collect());

    let mut rows = Vec::new();
    let mut failures = 0usize;
    for (pair, result) in pairs.iter().zip(results) {
        match result {
            Ok((row, warning)) => {
                if let Some(msg) = warning {
                    eprintln!("warning: {msg}");
                }
                rows.push(row);
            }
            Err(e) => {
                failures += 1;
                eprintln!("{}: evaluation failed: {e}", pair.id);
            }
        }
    }

    if let Some(report) = &cfg.report {
        write_jsonl(report, &rows)?;
    }

    let reports: Vec<MetricReport> = rows.iter().map(|r| r.metrics.clone()).collect();
    let mean = MetricReport::mean(&reports);

    let mut gate_violations = Vec::new();
    if let Some(mean) = &mean {
        for (name, value, min) in [
            ("SISNR", mean.sisnr, cfg.min_sisnr),
            ("STOI", mean.stoi, cfg.min_stoi),
            ("SRMR", mean.srmr, cfg.min_srmr),
        ] {
            if let Some(min) = min {
                if value < min {
                    gate_violations.push(format!("mean {name} {value:.4} below required {min}"));
                }
            }
        }
    }

    Ok(EvaluateSummary { rows, failures, mean, gate_violations })
}

/// Aggregate table printed after evaluation; STOI is scaled to percent
/// here and nowhere else.
pub fn format_mean_table(mean: &MetricReport, rows: usize) -> String {
    format!(
        "{:>10}  {:>10}  {:>13}  {:>8}  {:>7}\n{:>10}  {:>10.2}  {:>13.4e}  {:>8.2}  {:>7.2}",
        "",
        "SISNR(dB)",
        "spectral MSE",
        "STOI(%)",
        "SRMR",
        format!("mean({rows})"),
        mean.sisnr,
        mean.spectral_mse,
        100.0 * mean.stoi,
        mean.srmr
    )
}

fn cmd_evaluate(args: &EvaluateArgs) -> i32 {
    let cfg = match args.resolve() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    match evaluate(&cfg) {
        Ok(summary) => {
            if cfg.report.is_none() {
                for row in &summary.rows {
                    match serde_json::to_string(row) {
                        Ok(line) => println!("{line}"),
                        Err(e) => eprintln!("{}: serialization failed: {e}", row.id),
                    }
                }
            }
            if let Some(mean) = &summary.mean {
                println!("{}", format_mean_table(mean, summary.rows.len()));
            }
            for violation in &summary.gate_violations {
                eprintln!("gate: {violation}");
            }
            if summary.failures > 0 {
                failure_exit(summary.failures)
            } else if !summary.gate_violations.is_empty() {
                1
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{speech_like, white_noise};

    fn write_mono(path: &Path, samples: Vec<f64>) {
        let wave = MultiChannelWave::from_mono(samples, CORPUS_FS);
        write_wav(path, &wave, WavEncoding::Float32).unwrap();
    }

    /// Tiny on-disk corpus: three speech-like sources and one noise file.
    fn corpus_manifests(dir: &Path) -> (PathBuf, PathBuf) {
        let len = 19_200;
        for i in 0..3 {
            write_mono(&dir.join(format!("src_{i}.wav")), speech_like(100 + i, len, CORPUS_FS));
        }
        write_mono(&dir.join("noise_0.wav"), white_noise(7, len));
        let sources = dir.join("sources.txt");
        fs::write(&sources, "# synthetic sources\nsrc_0.wav\nsrc_1.wav\nsrc_2.wav\n").unwrap();
        let noises = dir.join("noises.txt");
        fs::write(&noises, "noise_0.wav\n").unwrap();
        (sources, noises)
    }

    #[test]
    fn utterance_seeds_are_stable_and_distinct() {
        let a = utterance_seed(42, 0);
        assert_eq!(a, utterance_seed(42, 0));
        let mut seeds: Vec<u64> = (0..64).map(|i| utterance_seed(42, i)).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 64);
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("sim.json");
        fs::write(&config, r#"{"count": 3, "seed": 9, "out": "from_file"}"#).unwrap();
        let args = SimulateArgs {
            config: Some(config),
            seed: Some(11),
            ..Default::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.count, 3);
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.out.as_deref(), Some(Path::new("from_file")));
    }

    #[test]
    fn unknown_config_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("sim.json");
        fs::write(&config, r#"{"cont": 3}"#).unwrap();
        let args = SimulateArgs { config: Some(config), ..Default::default() };
        assert!(args.resolve().is_err());
    }

    #[test]
    fn pipeline_overrides_land_on_the_architecture_stage() {
        let cfg = effective_pipeline(Architecture::DervbThenSep, Some(5), Some(4), Some(1e-3));
        assert_eq!((cfg.wpe.taps, cfg.wpe.delay, cfg.wpe.floor_eps), (5, 4, 1e-3));
        assert_eq!(stage_knobs(&cfg), (5, 4, 1e-3));

        let cfg = effective_pipeline(Architecture::JointWpd, Some(2), Some(3), Some(1e-2));
        assert_eq!((cfg.wpd.taps, cfg.wpd.delay, cfg.wpd.eps), (2, 3, 1e-2));

        let cfg = effective_pipeline(Architecture::SepOnly, Some(9), Some(9), Some(1e-4));
        assert_eq!(cfg.mvdr_eps, 1e-4);
        assert_eq!(stage_knobs(&cfg), (0, 0, 1e-4));
    }

    #[test]
    fn mask_source_requires_oracle_or_a_directory() {
        assert_eq!(MaskSource::parse("oracle").unwrap(), MaskSource::Oracle);
        assert!(MaskSource::parse("/no/such/dir").is_err());
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(
            MaskSource::parse(dir.path().to_str().unwrap()).unwrap(),
            MaskSource::Dir(dir.path().to_path_buf())
        );
    }

    #[test]
    fn eval_pair_rows_accept_enhance_records() {
        let row = EnhanceRecord {
            id: "utt_0000".into(),
            architecture: "sep-only".into(),
            masks: "oracle".into(),
            taps: 0,
            delay: 0,
            eps: 1e-5,
            estimate: "utt_0000_enhanced.wav".into(),
            reference: "utt_0000_early.wav".into(),
            mixture: "utt_0000_mixture.wav".into(),
        };
        let pair: EvalPair = serde_json::from_str(&serde_json::to_string(&row).unwrap()).unwrap();
        assert_eq!(pair.id, "utt_0000");
        assert_eq!(pair.estimate, PathBuf::from("utt_0000_enhanced.wav"));
        assert_eq!(pair.reference, PathBuf::from("utt_0000_early.wav"));
    }

    #[test]
    fn simulate_rejects_empty_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let sources = dir.path().join("sources.txt");
        let noises = dir.path().join("noises.txt");
        fs::write(&sources, "# nothing\n").unwrap();
        fs::write(&noises, "").unwrap();
        let cfg = SimulateConfig {
            sources: Some(sources),
            noises: Some(noises),
            out: Some(dir.path().join("out")),
            count: 1,
            ..Default::default()
        };
        let err = simulate(&cfg).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_USAGE);
    }

    #[test]
    fn enhance_rejects_unknown_architectures() {
        let cfg = EnhanceConfig {
            scenes: Some(PathBuf::from("scenes.jsonl")),
            out: Some(PathBuf::from("out")),
            arch: "separate-harder".into(),
            ..Default::default()
        };
        let err = enhance(&cfg).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_USAGE);
    }

    #[test]
    fn simulate_enhance_evaluate_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (sources, noises) = corpus_manifests(dir.path());

        let sim_out = dir.path().join("corpus");
        let sim_cfg = SimulateConfig {
            sources: Some(sources),
            noises: Some(noises),
            out: Some(sim_out.clone()),
            count: 2,
            seed: 5,
            workers: 1,
            max_failures: 0,
        };
        let sim = simulate(&sim_cfg).unwrap();
        assert_eq!(sim.written, 2);
        assert_eq!(sim.failures, 0);
        assert!(sim_out.join("utt_0001_mixture.wav").exists());
        assert!(sim.mean_t60 > 0.0);

        let records: Vec<SceneRecord> = read_jsonl(&sim.records).unwrap();
        assert_eq!(records.len(), 2);
        for record in &records {
            assert!((record.measured_snr_db - record.scene.snr_db).abs() < 0.01);
            assert!((record.measured_sir_db - record.scene.sir_db).abs() < 0.01);
        }

        let enh_out = dir.path().join("enhanced");
        let enh_cfg = EnhanceConfig {
            scenes: Some(sim.records.clone()),
            out: Some(enh_out.clone()),
            arch: "sep-only".into(),
            workers: 1,
            ..Default::default()
        };
        let enh = enhance(&enh_cfg).unwrap();
        assert_eq!(enh.written, 2);
        assert_eq!(enh.failures, 0);

        let rows: Vec<EnhanceRecord> = read_jsonl(&enh.records).unwrap();
        let estimate = read_wav(enh_out.join(&rows[0].estimate)).unwrap();
        let mixture = read_wav(sim_out.join(&records[0].mixture)).unwrap();
        assert_eq!(estimate.channels(), 1);
        assert_eq!(estimate.len(), mixture.len());

        let report = dir.path().join("report.jsonl");
        let eval_cfg = EvaluateConfig {
            manifest: Some(enh.records.clone()),
            report: Some(report.clone()),
            workers: 1,
            ..Default::default()
        };
        let eval = evaluate(&eval_cfg).unwrap();
        assert_eq!(eval.rows.len(), 2);
        assert_eq!(eval.failures, 0);
        assert!(eval.gate_violations.is_empty());
        let mean = eval.mean.unwrap();
        assert!(mean.stoi > 0.0 && mean.stoi <= 1.0);
        assert!(mean.pesq.is_none());

        let reread: Vec<EvalRecord> = read_jsonl(&report).unwrap();
        assert_eq!(reread, eval.rows);

        let gated = EvaluateConfig { min_stoi: Some(1.1), ..eval_cfg };
        let gated = evaluate(&gated).unwrap();
        assert_eq!(gated.gate_violations.len(), 1);
    }

    #[test]
    fn evaluate_trims_mismatched_lengths() {
        let dir = tempfile::tempdir().unwrap();
        let x = speech_like(3, 24_000, CORPUS_FS);
        write_mono(&dir.path().join("est.wav"), x[..23_000].to_vec());
        write_mono(&dir.path().join("ref.wav"), x);
        let manifest = dir.path().join("pairs.jsonl");
        fs::write(
            &manifest,
            "{\"id\":\"utt_0000\",\"estimate\":\"est.wav\",\"reference\":\"ref.wav\"}\n",
        )
        .unwrap();
        let cfg = EvaluateConfig {
            manifest: Some(manifest),
            workers: 1,
            ..Default::default()
        };
        let summary = evaluate(&cfg).unwrap();
        assert_eq!(summary.rows.len(), 1);
        assert_eq!(summary.rows[0].metrics.sisnr, crate::metrics::SISNR_CAP_DB);
        assert!((summary.rows[0].metrics.stoi - 1.0).abs() < 1e-6);
    }
}
