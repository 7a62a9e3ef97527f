//! Neural-network receiver.
//!
//! The received pilot and data blocks are flattened into one real feature
//! vector. The `2N` data bits are split into groups of 16; each group has its
//! own independently trained network that maps the full feature vector to the
//! group's bits. Training data are simulated on the fly from the same
//! transmitter and channel model used for evaluation.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{sample_channel, transmit_frame, ChannelConfig, ChannelRealization, ChannelSource, ReceivedFrame};
use crate::error::{invalid, Error, Result};
use crate::neuralnet::{
    adam_step, batch_loss, init_params, layer_specs, load_weights, save_weights, AdamState, Mlp, TrainConfig,
    WeightFile,
};
use crate::rng::{derive_seed, random_bits, rng_from_seed, SimRng};
use crate::signal::{build_frame, FrameConfig};

/// Data bits predicted by each sub-network.
pub const BITS_PER_MODEL: usize = 16;

/// Noise level of the simulated training frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum TrainSnr {
    Fixed {
        snr_db: f64,
    },
    /// Uniform in dB, drawn per frame.
    Mixed {
        low_db: f64,
        high_db: f64,
    },
}

impl Default for TrainSnr {
    fn default() -> Self {
        TrainSnr::Fixed { snr_db: 20.0 }
    }
}

impl TrainSnr {
    fn draw<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            TrainSnr::Fixed { snr_db } => snr_db,
            TrainSnr::Mixed { low_db, high_db } => rng.random_range(low_db..=high_db),
        }
    }
}

/// Everything needed to simulate frames for one experimental setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: String,
    pub frame: FrameConfig,
    pub channel: ChannelConfig,
    pub train_snr: TrainSnr,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            id: "default".into(),
            frame: FrameConfig::default(),
            channel: ChannelConfig::default(),
            train_snr: TrainSnr::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains([',', '\n', '"']) {
            return invalid(format!("scenario id {:?} must be non-empty and CSV-safe", self.id));
        }
        self.frame.validate()?;
        self.channel.validate()?;
        if let TrainSnr::Mixed { low_db, high_db } = self.train_snr {
            if !(low_db <= high_db) || !low_db.is_finite() || !high_db.is_finite() {
                return invalid("mixed training SNR needs finite low_db <= high_db");
            }
        }
        Ok(())
    }

    pub fn has_cp(&self) -> bool {
        self.frame.cp_len > 0
    }

    pub fn is_clipped(&self) -> bool {
        self.frame.clip.is_some()
    }
}

/// `[Re Yp, Im Yp, Re Yd, Im Yd]`, each block in subcarrier order.
pub fn featurize(y_pilot: &[Complex64], y_data: &[Complex64]) -> Result<Vec<f64>> {
    if y_pilot.len() != y_data.len() {
        return invalid("pilot and data blocks differ in length");
    }
    let mut out = vec![0.0; 4 * y_pilot.len()];
    write_features(y_pilot, y_data, &mut out, |v| v);
    Ok(out)
}

fn write_features<T>(y_pilot: &[Complex64], y_data: &[Complex64], out: &mut [T], conv: impl Fn(f64) -> T) {
    let n = y_pilot.len();
    for k in 0..n {
        out[k] = conv(y_pilot[k].re);
        out[n + k] = conv(y_pilot[k].im);
        out[2 * n + k] = conv(y_data[k].re);
        out[3 * n + k] = conv(y_data[k].im);
    }
}

/// Splits a feature vector back into its two blocks.
pub fn unfeaturize(features: &[f64]) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    if features.len() % 4 != 0 {
        return invalid("feature length must be a multiple of 4");
    }
    let n = features.len() / 4;
    let block = |re: usize, im: usize| (0..n).map(|k| Complex64::new(features[re + k], features[im + k])).collect();
    Ok((block(0, n), block(2 * n, 3 * n)))
}

/// Bits predicted by sub-network `group`.
pub fn group_targets(bits: &[u8], group: usize) -> &[u8] {
    &bits[group * BITS_PER_MODEL..(group + 1) * BITS_PER_MODEL]
}

/// One simulated frame as seen by a receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedFrame {
    pub bits: Vec<u8>,
    pub channel: ChannelRealization,
    pub received: ReceivedFrame,
}

/// Random bits through a given channel at a given SNR.
pub fn simulate_frame_with_channel<R: RngCore + ?Sized>(
    frame_cfg: &FrameConfig,
    channel: ChannelRealization,
    snr_db: f64,
    rng: &mut R,
) -> Result<SimulatedFrame> {
    let bits = random_bits(frame_cfg.bits_per_frame(), rng);
    let frame = build_frame(&bits, frame_cfg, rng)?;
    let received = transmit_frame(&frame, &channel, snr_db, frame_cfg, rng)?;
    Ok(SimulatedFrame { bits, channel, received })
}

/// Random bits through a freshly drawn channel.
pub fn simulate_frame<R: RngCore + ?Sized>(
    frame_cfg: &FrameConfig,
    channel_cfg: &ChannelConfig,
    snr_db: f64,
    rng: &mut R,
) -> Result<SimulatedFrame> {
    let channel = sample_channel(channel_cfg, rng);
    simulate_frame_with_channel(frame_cfg, channel, snr_db, rng)
}

pub fn simulate_frame_from<R: RngCore + ?Sized>(
    frame_cfg: &FrameConfig,
    source: &ChannelSource,
    snr_db: f64,
    rng: &mut R,
) -> Result<SimulatedFrame> {
    let channel = source.realize(rng);
    simulate_frame_with_channel(frame_cfg, channel, snr_db, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub features: Vec<f64>,
    pub bits: Vec<u8>,
}

/// Endless, seeded stream of labelled training frames.
pub struct TrainingStream {
    scenario: ScenarioConfig,
    channel: ChannelSource,
    rng: SimRng,
}

impl TrainingStream {
    pub(crate) fn new(scenario: &ScenarioConfig, channel: &ChannelSource, seed: u64) -> Self {
        Self { scenario: scenario.clone(), channel: channel.clone(), rng: rng_from_seed(seed) }
    }

    fn next_frame(&mut self) -> Result<SimulatedFrame> {
        let snr = self.scenario.train_snr.draw(&mut self.rng);
        simulate_frame_from(&self.scenario.frame, &self.channel, snr, &mut self.rng)
    }
}

impl Iterator for TrainingStream {
    type Item = TrainingSample;

    fn next(&mut self) -> Option<TrainingSample> {
        let f = self.next_frame().expect("scenario validated before streaming");
        let features = featurize(&f.received.pilot, &f.received.data).expect("equal block lengths");
        Some(TrainingSample { features, bits: f.bits })
    }
}

pub fn generate_training_stream(scenario: &ScenarioConfig, seed: u64) -> Result<TrainingStream> {
    generate_training_stream_on(scenario, &ChannelSource::Draw(scenario.channel), seed)
}

/// Like [`generate_training_stream`] with channels taken from `channel`
/// instead of the scenario's channel profile.
pub fn generate_training_stream_on(
    scenario: &ScenarioConfig,
    channel: &ChannelSource,
    seed: u64,
) -> Result<TrainingStream> {
    scenario.validate()?;
    channel.validate()?;
    Ok(TrainingStream::new(scenario, channel, seed))
}

/// Hidden-layer widths of every sub-network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiverArch {
    pub hidden: Vec<usize>,
}

impl Default for ReceiverArch {
    fn default() -> Self {
        Self { hidden: vec![500, 250, 120] }
    }
}

impl ReceiverArch {
    pub fn dims(&self, n_subcarriers: usize) -> Vec<usize> {
        let mut dims = vec![4 * n_subcarriers];
        dims.extend(&self.hidden);
        dims.push(BITS_PER_MODEL);
        dims
    }
}

pub fn n_groups(n_subcarriers: usize) -> Result<usize> {
    let bits = 2 * n_subcarriers;
    if bits % BITS_PER_MODEL != 0 {
        return invalid(format!("{bits} data bits do not split into groups of {BITS_PER_MODEL}"));
    }
    Ok(bits / BITS_PER_MODEL)
}

/// The trained ensemble; model `g` predicts data bits `[16 g, 16 g + 16)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DnnReceiver {
    pub n_subcarriers: usize,
    pub models: Vec<Mlp<f32>>,
}

/// Sigmoid outputs at or above one half decode as 1.
pub fn decide(outputs: &[f32]) -> Vec<u8> {
    outputs.iter().map(|&v| (v >= 0.5) as u8).collect()
}

impl DnnReceiver {
    pub fn new(n_subcarriers: usize, models: Vec<Mlp<f32>>) -> Result<Self> {
        let groups = n_groups(n_subcarriers)?;
        if models.len() != groups {
            return invalid(format!("expected {groups} sub-models, got {}", models.len()));
        }
        if models.iter().any(|m| m.input_dim() != 4 * n_subcarriers || m.output_dim() != BITS_PER_MODEL) {
            return invalid("sub-model shapes do not match the frame layout");
        }
        Ok(Self { n_subcarriers, models })
    }

    pub fn input_dim(&self) -> usize {
        4 * self.n_subcarriers
    }

    /// Detects every row of a feature matrix.
    pub fn detect_batch(&self, features: ArrayView2<'_, f32>) -> Result<Vec<Vec<u8>>> {
        let rows = features.nrows();
        let mut bits = vec![Vec::with_capacity(2 * self.n_subcarriers); rows];
        for model in &self.models {
            let cache = model.forward_batch(features)?;
            for (row, out) in bits.iter_mut().zip(cache.output().rows()) {
                row.extend(out.iter().map(|&v| (v >= 0.5) as u8));
            }
        }
        Ok(bits)
    }
}

pub fn features_matrix(frames: &[&ReceivedFrame], n_subcarriers: usize) -> Array2<f32> {
    let mut x = Array2::zeros((frames.len(), 4 * n_subcarriers));
    for (mut row, rx) in x.rows_mut().into_iter().zip(frames) {
        let slice = row.as_slice_mut().expect("standard layout");
        write_features(&rx.pilot, &rx.data, slice, |v| v as f32);
    }
    x
}

/// Online detection: no channel estimate, no randomness.
pub fn detect_bits(rx: &DnnReceiver, y_pilot: &[Complex64], y_data: &[Complex64]) -> Result<Vec<u8>> {
    if y_pilot.len() != rx.n_subcarriers || y_data.len() != rx.n_subcarriers {
        return invalid("received blocks do not match the receiver's subcarrier count");
    }
    let frame = ReceivedFrame { pilot: y_pilot.to_vec().into(), data: y_data.to_vec().into() };
    let x = features_matrix(&[&frame], rx.n_subcarriers);
    Ok(rx.detect_batch(x.view())?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubModelReport {
    pub group: usize,
    pub init_seed: u64,
    pub data_seed: u64,
    pub initial_loss: f64,
    /// Mean batch loss over the last (up to) 100 steps.
    pub final_loss: f64,
    pub steps: usize,
}

/// Progress callback: `(group, step, batch loss)`.
pub type Progress<'a> = &'a (dyn Fn(usize, usize, f64) + Sync);

const INIT_STREAM: u64 = 1;
const DATA_STREAM: u64 = 2;

/// Trains all sub-networks for a scenario; sub-networks run in parallel.
pub fn train_receiver(
    scenario: &ScenarioConfig,
    arch: &ReceiverArch,
    cfg: &TrainConfig,
    progress: Option<Progress<'_>>,
) -> Result<(DnnReceiver, Vec<SubModelReport>)> {
    train_receiver_on(scenario, &ChannelSource::Draw(scenario.channel), arch, cfg, progress)
}

/// Trains on channels from `channel` in place of the scenario's profile.
pub fn train_receiver_on(
    scenario: &ScenarioConfig,
    channel: &ChannelSource,
    arch: &ReceiverArch,
    cfg: &TrainConfig,
    progress: Option<Progress<'_>>,
) -> Result<(DnnReceiver, Vec<SubModelReport>)> {
    scenario.validate()?;
    channel.validate()?;
    cfg.validate()?;
    let n = scenario.frame.n_subcarriers;
    let groups = n_groups(n)?;
    let results: Vec<Result<(Mlp<f32>, SubModelReport)>> =
        (0..groups).into_par_iter().map(|g| train_group(scenario, channel, arch, cfg, g, progress)).collect();
    let mut models = Vec::with_capacity(groups);
    let mut reports = Vec::with_capacity(groups);
    for r in results {
        let (m, rep) = r?;
        models.push(m);
        reports.push(rep);
    }
    Ok((DnnReceiver::new(n, models)?, reports))
}

fn train_group(
    scenario: &ScenarioConfig,
    channel: &ChannelSource,
    arch: &ReceiverArch,
    cfg: &TrainConfig,
    group: usize,
    progress: Option<Progress<'_>>,
) -> Result<(Mlp<f32>, SubModelReport)> {
    let n = scenario.frame.n_subcarriers;
    let init_seed = derive_seed(cfg.seed, &[INIT_STREAM, group as u64]);
    let data_seed = derive_seed(cfg.seed, &[DATA_STREAM, group as u64]);
    let mut mlp: Mlp<f32> = init_params(&layer_specs(&arch.dims(n)), &mut rng_from_seed(init_seed))?;
    let mut adam = AdamState::new(&mlp);
    let mut stream = TrainingStream::new(scenario, channel, data_seed);

    let mut x = Array2::<f32>::zeros((cfg.batch_size, 4 * n));
    let mut y = Array2::<f32>::zeros((cfg.batch_size, BITS_PER_MODEL));
    let tail = cfg.n_steps.min(100);
    let mut tail_sum = 0.0;
    let mut initial_loss = f64::NAN;

    for step in 0..cfg.n_steps {
        for (mut xr, mut yr) in x.rows_mut().into_iter().zip(y.rows_mut()) {
            let f = stream.next_frame()?;
            write_features(&f.received.pilot, &f.received.data, xr.as_slice_mut().expect("row"), |v| v as f32);
            for (t, &b) in yr.iter_mut().zip(group_targets(&f.bits, group)) {
                *t = b as f32;
            }
        }
        let cache = mlp.forward_batch(x.view())?;
        let loss = batch_loss(cache.output(), y.view()) as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("group {group}: loss {loss} at step {step}")));
        }
        if step == 0 {
            initial_loss = loss;
        }
        if step + tail >= cfg.n_steps {
            tail_sum += loss;
        }
        if let Some(p) = progress {
            p(group, step, loss);
        }
        let grads = mlp.backward(&cache, y.view())?;
        adam_step(&mut mlp, &grads, &mut adam, cfg);
    }
    let report = SubModelReport {
        group,
        init_seed,
        data_seed,
        initial_loss,
        final_loss: tail_sum / tail as f64,
        steps: cfg.n_steps,
    };
    Ok((mlp, report))
}

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format_version: u32,
    pub scenario: ScenarioConfig,
    pub arch: ReceiverArch,
    pub train_config: TrainConfig,
    pub reports: Vec<SubModelReport>,
    pub model_files: Vec<String>,
}

/// Writes the sub-network weight files and a manifest into `dir`.
pub fn save_bundle(dir: &Path, rx: &DnnReceiver, manifest_base: BundleManifest) -> Result<BundleManifest> {
    fs::create_dir_all(dir)?;
    let mut manifest = manifest_base;
    manifest.format_version = BUNDLE_FORMAT_VERSION;
    manifest.model_files = (0..rx.models.len()).map(|g| format!("model_{g}.json")).collect();
    for (g, (model, name)) in rx.models.iter().zip(&manifest.model_files).enumerate() {
        let seed = manifest.reports.get(g).map(|r| r.init_seed);
        save_weights(&dir.join(name), &WeightFile::from_mlp(model, Some(manifest.train_config), seed))?;
    }
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format { path: dir.display().to_string(), reason: e.to_string() })?;
    fs::write(dir.join(MANIFEST_NAME), text)?;
    Ok(manifest)
}

pub fn load_bundle(dir: &Path) -> Result<(DnnReceiver, BundleManifest)> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingResource(format!("receiver bundle {}", dir.display())),
        _ => Error::Io(e),
    })?;
    let bad = |reason: String| Error::Format { path: path.display().to_string(), reason };
    let manifest: BundleManifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if manifest.format_version != BUNDLE_FORMAT_VERSION {
        return Err(bad(format!("unsupported format_version {}", manifest.format_version)));
    }
    let models = manifest
        .model_files
        .iter()
        .map(|name| {
            let p = dir.join(name);
            load_weights::<f32>(&p)?.to_mlp().map_err(|reason| Error::Format { path: p.display().to_string(), reason })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((DnnReceiver::new(manifest.scenario.frame.n_subcarriers, models)?, manifest))
}

/// Directory name under a cache root for a given training setup.
pub fn bundle_key(scenario: &ScenarioConfig, arch: &ReceiverArch, cfg: &TrainConfig) -> String {
    let json = serde_json::to_string(&(BUNDLE_FORMAT_VERSION, scenario, arch, cfg)).expect("setup serializes");
    let digest = Sha256::digest(json.as_bytes());
    format!("{}-{}", scenario.id, &hex::encode(digest)[..16])
}

/// Loads the bundle for this setup from `cache_root`, training and saving it first if absent.
pub fn train_or_load(
    cache_root: &Path,
    scenario: &ScenarioConfig,
    arch: &ReceiverArch,
    cfg: &TrainConfig,
    progress: Option<Progress<'_>>,
) -> Result<(DnnReceiver, BundleManifest)> {
    let dir = cache_root.join(bundle_key(scenario, arch, cfg));
    match load_bundle(&dir) {
        Ok(found) => return Ok(found),
        Err(Error::MissingResource(_)) => {}
        Err(e) => return Err(e),
    }
    let (rx, reports) = train_receiver(scenario, arch, cfg, progress)?;
    let manifest = BundleManifest {
        format_version: BUNDLE_FORMAT_VERSION,
        scenario: scenario.clone(),
        arch: arch.clone(),
        train_config: *cfg,
        reports,
        model_files: Vec::new(),
    };
    // Write beside the final location and rename, so a killed run never leaves a half bundle.
    let staging = cache_root.join(format!(".{}.partial", bundle_key(scenario, arch, cfg)));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    let manifest = save_bundle(&staging, &rx, manifest)?;
    fs::rename(&staging, &dir)?;
    Ok((rx, manifest))
}
