//! Monte Carlo BER evaluation, resumable SNR sweeps and the channel-mismatch
//! robustness grid.
//!
//! Frame `i` of an evaluation is simulated from a generator seeded by
//! `(seed, i)`, so error counts do not depend on how frames are sharded
//! across threads. The same seed reuses the same bits, channels and noise
//! shapes across detectors and SNR points.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ChannelConfig, ChannelSource};
use crate::error::{invalid, Error, Result};
use crate::estimators::{
    equalize_and_detect, ls_channel_estimate, ls_estimate, perfect_csi_detect, CorrelationStats, MmseFilter,
    PilotPattern,
};
use crate::receiver::{features_matrix, simulate_frame_from, DnnReceiver, ScenarioConfig, SimulatedFrame};
use crate::rng::{derive_seed, derived_rng};
use crate::signal::{ClipConfig, FrameConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Ls,
    Mmse,
    Dnn,
    PerfectCsi,
}

impl Detector {
    pub const ALL: [Detector; 4] = [Detector::Ls, Detector::Mmse, Detector::Dnn, Detector::PerfectCsi];

    pub fn name(self) -> &'static str {
        match self {
            Detector::Ls => "ls",
            Detector::Mmse => "mmse",
            Detector::Dnn => "dnn",
            Detector::PerfectCsi => "perfect_csi",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Detector::ALL
            .into_iter()
            .find(|d| d.name() == s.trim())
            .ok_or_else(|| Error::InvalidInput(format!("unknown detector {s:?}")))
    }
}

pub fn parse_detectors(list: &str) -> Result<Vec<Detector>> {
    let mut out: Vec<Detector> = Vec::new();
    for item in list.split(',').filter(|s| !s.trim().is_empty()) {
        let d: Detector = item.parse()?;
        if !out.contains(&d) {
            out.push(d);
        }
    }
    if out.is_empty() {
        return invalid("detector list is empty");
    }
    Ok(out)
}

/// One Monte Carlo BER measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub scenario_id: String,
    pub detector: Detector,
    pub snr_db: f64,
    pub n_bits: u64,
    pub n_errors: u64,
    pub seed: u64,
}

impl BerPoint {
    pub fn ber(&self) -> f64 {
        if self.n_bits == 0 {
            0.0
        } else {
            self.n_errors as f64 / self.n_bits as f64
        }
    }

    /// Binomial standard deviation of the estimate.
    pub fn std_error(&self) -> f64 {
        let p = self.ber();
        (p * (1.0 - p) / self.n_bits.max(1) as f64).sqrt()
    }

    fn key(&self) -> PointKey {
        PointKey::new(&self.scenario_id, self.detector, self.snr_db, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct PointKey(String, Detector, u64, u64);

impl PointKey {
    fn new(id: &str, d: Detector, snr: f64, seed: u64) -> Self {
        Self(id.to_string(), d, snr.to_bits(), seed)
    }
}

/// Raw counts from a detector run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ErrorCount {
    pub n_bits: u64,
    pub n_errors: u64,
}

impl std::ops::Add for ErrorCount {
    type Output = ErrorCount;
    fn add(self, o: ErrorCount) -> ErrorCount {
        ErrorCount { n_bits: self.n_bits + o.n_bits, n_errors: self.n_errors + o.n_errors }
    }
}

/// A frame handed to a detector during evaluation.
#[derive(Debug, Clone)]
pub struct EvalFrame {
    pub index: u64,
    pub snr_db: f64,
    pub sim: SimulatedFrame,
}

/// Anything that turns received frames into data-bit decisions.
pub trait FrameDetector: Sync {
    fn detect(&self, frames: &[EvalFrame]) -> Result<Vec<Vec<u8>>>;
}

pub struct LsDetector {
    pattern: PilotPattern,
    n_subcarriers: usize,
}

impl LsDetector {
    pub fn new(frame: &FrameConfig) -> Self {
        Self { pattern: PilotPattern::for_frame(frame), n_subcarriers: frame.n_subcarriers }
    }
}

impl FrameDetector for LsDetector {
    fn detect(&self, frames: &[EvalFrame]) -> Result<Vec<Vec<u8>>> {
        frames
            .iter()
            .map(|f| {
                let rx = &f.sim.received;
                let h = ls_channel_estimate(&rx.pilot, &self.pattern, self.n_subcarriers)?;
                Ok(equalize_and_detect(&rx.data, &h)?.bits)
            })
            .collect()
    }
}

pub struct MmseDetector {
    pattern: PilotPattern,
    filter: MmseFilter,
}

impl MmseDetector {
    pub fn new(frame: &FrameConfig, stats: &CorrelationStats, snr_db: f64) -> Result<Self> {
        let pattern = PilotPattern::for_frame(frame);
        if stats.pilot_indices != pattern.indices || stats.n_subcarriers != frame.n_subcarriers {
            return Err(Error::MissingResource("correlation stats were built for a different pilot layout".into()));
        }
        Ok(Self { pattern, filter: MmseFilter::new(stats, snr_db)? })
    }
}

impl FrameDetector for MmseDetector {
    fn detect(&self, frames: &[EvalFrame]) -> Result<Vec<Vec<u8>>> {
        frames
            .iter()
            .map(|f| {
                let rx = &f.sim.received;
                let h = self.filter.apply(&ls_estimate(&rx.pilot, &self.pattern));
                Ok(equalize_and_detect(&rx.data, &h)?.bits)
            })
            .collect()
    }
}

/// Zero-forcing with the true channel response.
pub struct PerfectCsiDetector;

impl FrameDetector for PerfectCsiDetector {
    fn detect(&self, frames: &[EvalFrame]) -> Result<Vec<Vec<u8>>> {
        frames.iter().map(|f| Ok(perfect_csi_detect(&f.sim.received.data, &f.sim.channel)?.bits)).collect()
    }
}

pub struct DnnDetector<'a> {
    pub receiver: &'a DnnReceiver,
}

impl FrameDetector for DnnDetector<'_> {
    fn detect(&self, frames: &[EvalFrame]) -> Result<Vec<Vec<u8>>> {
        let rx: Vec<_> = frames.iter().map(|f| &f.sim.received).collect();
        let x = features_matrix(&rx, self.receiver.n_subcarriers);
        self.receiver.detect_batch(x.view())
    }
}

/// Prebuilt state the detectors depend on.
#[derive(Debug, Default, Clone)]
pub struct Resources {
    pub stats: Option<CorrelationStats>,
    pub receiver: Option<DnnReceiver>,
}

impl Resources {
    pub fn detector(&self, which: Detector, frame: &FrameConfig, snr_db: f64) -> Result<Box<dyn FrameDetector + '_>> {
        Ok(match which {
            Detector::Ls => Box::new(LsDetector::new(frame)),
            Detector::PerfectCsi => Box::new(PerfectCsiDetector),
            Detector::Mmse => {
                let stats =
                    self.stats.as_ref().ok_or_else(|| Error::MissingResource("mmse needs correlation stats".into()))?;
                Box::new(MmseDetector::new(frame, stats, snr_db)?)
            }
            Detector::Dnn => {
                let receiver = self
                    .receiver
                    .as_ref()
                    .ok_or_else(|| Error::MissingResource("dnn needs a trained receiver".into()))?;
                if receiver.n_subcarriers != frame.n_subcarriers {
                    return invalid("receiver was trained for a different subcarrier count");
                }
                Box::new(DnnDetector { receiver })
            }
        })
    }
}

/// The five settings of the study: full pilots with CP, 8 pilots, no CP,
/// clipping at CR = 1, and all three adversities together.
pub fn paper_scenarios() -> Vec<ScenarioConfig> {
    let clip = ClipConfig::with_ratio(1.0);
    let mk = |id: &str, cp: usize, pilots: usize, clipped: bool| {
        let mut frame = FrameConfig::new(64, cp, pilots).expect("valid layout");
        if clipped {
            frame = frame.with_clip(clip);
        }
        ScenarioConfig { id: id.into(), frame, ..ScenarioConfig::default() }
    };
    vec![
        mk("default", 16, 64, false),
        mk("pilots8", 16, 8, false),
        mk("no_cp", 0, 64, false),
        mk("clip1", 16, 64, true),
        mk("combined", 0, 8, true),
    ]
}

pub fn paper_scenario(id: &str) -> Result<ScenarioConfig> {
    paper_scenarios()
        .into_iter()
        .find(|s| s.id == id)
        .ok_or_else(|| Error::InvalidInput(format!("unknown scenario {id:?}")))
}

/// Frames evaluated per detector call.
const CHUNK: u64 = 256;

pub fn frames_for_bits(min_bits: u64, frame: &FrameConfig) -> u64 {
    min_bits.div_ceil(frame.bits_per_frame() as u64)
}

pub fn simulate_eval_frame(
    frame: &FrameConfig,
    channel: &ChannelSource,
    snr_db: f64,
    seed: u64,
    index: u64,
) -> Result<EvalFrame> {
    let mut rng = derived_rng(seed, &[index]);
    Ok(EvalFrame { index, snr_db, sim: simulate_frame_from(frame, channel, snr_db, &mut rng)? })
}

/// Counts bit errors over `n_frames` frames split into `n_shards` parallel shards.
pub fn count_errors(
    detector: &dyn FrameDetector,
    frame: &FrameConfig,
    channel: &ChannelSource,
    snr_db: f64,
    n_frames: u64,
    seed: u64,
    n_shards: usize,
) -> Result<ErrorCount> {
    frame.validate()?;
    channel.validate()?;
    let shards = n_shards.max(1) as u64;
    let per_shard = n_frames.div_ceil(shards);
    (0..shards)
        .into_par_iter()
        .map(|s| {
            let start = (s * per_shard).min(n_frames);
            let end = ((s + 1) * per_shard).min(n_frames);
            let mut total = ErrorCount::default();
            let mut i = start;
            while i < end {
                let stop = (i + CHUNK).min(end);
                let batch = (i..stop)
                    .map(|idx| simulate_eval_frame(frame, channel, snr_db, seed, idx))
                    .collect::<Result<Vec<_>>>()?;
                let decided = detector.detect(&batch)?;
                for (f, bits) in batch.iter().zip(&decided) {
                    if bits.len() != f.sim.bits.len() {
                        return Err(Error::Numeric(format!(
                            "detector returned {} bits for a {}-bit frame",
                            bits.len(),
                            f.sim.bits.len()
                        )));
                    }
                    total.n_bits += bits.len() as u64;
                    total.n_errors += bits.iter().zip(&f.sim.bits).filter(|(a, b)| a != b).count() as u64;
                }
                i = stop;
            }
            Ok(total)
        })
        .try_reduce(ErrorCount::default, |a, b| Ok(a + b))
}

fn default_shards() -> usize {
    rayon::current_num_threads() * 4
}

/// BER of one detector at one SNR, over at least `min_bits` data bits.
pub fn evaluate_ber(
    detector: Detector,
    resources: &Resources,
    scenario: &ScenarioConfig,
    snr_db: f64,
    min_bits: u64,
    seed: u64,
) -> Result<BerPoint> {
    let channel = ChannelSource::Draw(scenario.channel);
    evaluate_ber_on(detector, resources, scenario, &channel, &scenario.id, snr_db, min_bits, seed)
}

/// Like [`evaluate_ber`] but draws test channels from `channel`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_ber_on(
    detector: Detector,
    resources: &Resources,
    scenario: &ScenarioConfig,
    channel: &ChannelSource,
    scenario_id: &str,
    snr_db: f64,
    min_bits: u64,
    seed: u64,
) -> Result<BerPoint> {
    scenario.validate()?;
    let det = resources.detector(detector, &scenario.frame, snr_db)?;
    let n_frames = frames_for_bits(min_bits, &scenario.frame);
    let count = count_errors(det.as_ref(), &scenario.frame, channel, snr_db, n_frames, seed, default_shards())?;
    Ok(BerPoint {
        scenario_id: scenario_id.to_string(),
        detector,
        snr_db,
        n_bits: count.n_bits,
        n_errors: count.n_errors,
        seed,
    })
}

/// A full detector-by-SNR sweep for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub scenario: ScenarioConfig,
    pub snr_grid: Vec<f64>,
    pub detectors: Vec<Detector>,
    pub min_bits: u64,
    pub max_frames: Option<u64>,
    pub seed: u64,
}

pub const DEFAULT_SNR_GRID: [f64; 5] = [5.0, 10.0, 15.0, 20.0, 25.0];
pub const DEFAULT_MIN_BITS: u64 = 1_000_000;

impl SweepSpec {
    pub fn new(scenario: ScenarioConfig, detectors: Vec<Detector>, seed: u64) -> Self {
        Self {
            scenario,
            snr_grid: DEFAULT_SNR_GRID.to_vec(),
            detectors,
            min_bits: DEFAULT_MIN_BITS,
            max_frames: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.snr_grid.is_empty() || self.snr_grid.iter().any(|s| s.is_nan()) {
            return invalid("snr_grid must be a non-empty list of numbers");
        }
        if self.detectors.is_empty() {
            return invalid("at least one detector is required");
        }
        if self.min_bits < 10_000 {
            return invalid(format!("min_bits must be at least 10000, got {}", self.min_bits));
        }
        if self.max_frames == Some(0) {
            return invalid("max_frames must be positive");
        }
        Ok(())
    }

    /// SHA-256 of the spec's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    fn n_frames(&self) -> u64 {
        let n = frames_for_bits(self.min_bits, &self.scenario.frame);
        self.max_frames.map_or(n, |cap| n.min(cap))
    }
}

pub const CSV_HEADER: &str = "scenario_id,detector,snr_db,n_bits,n_errors,ber,seed";

pub fn to_csv(points: &[BerPoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.scenario_id,
            p.detector,
            p.snr_db,
            p.n_bits,
            p.n_errors,
            p.ber(),
            p.seed
        ));
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<BerPoint>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => {}
        Some(h) => return invalid(format!("unexpected CSV header {h:?}")),
        None => return Ok(Vec::new()),
    }
    let field = |name: &str, v: &str| Error::InvalidInput(format!("bad {name} field {v:?}"));
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 7 {
                return invalid(format!("expected 7 columns in {line:?}"));
            }
            let p = BerPoint {
                scenario_id: cols[0].to_string(),
                detector: cols[1].parse()?,
                snr_db: cols[2].parse().map_err(|_| field("snr_db", cols[2]))?,
                n_bits: cols[3].parse().map_err(|_| field("n_bits", cols[3]))?,
                n_errors: cols[4].parse().map_err(|_| field("n_errors", cols[4]))?,
                seed: cols[6].parse().map_err(|_| field("seed", cols[6]))?,
            };
            if p.n_errors > p.n_bits {
                return invalid(format!("n_errors exceeds n_bits in {line:?}"));
            }
            Ok(p)
        })
        .collect()
}

pub fn read_results(path: &Path) -> Result<Vec<BerPoint>> {
    match fs::read_to_string(path) {
        Ok(text) => parse_csv(&text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}

/// Writes the file through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn hash_path(results: &Path) -> PathBuf {
    let mut p = results.as_os_str().to_owned();
    p.push(".specs.json");
    PathBuf::from(p)
}

/// Runs every detector x SNR point of `spec`, appending new points to the CSV
/// at `results`. Points already present (same scenario, detector, SNR and
/// seed) are reused, so an interrupted sweep resumes where it stopped. The
/// spec hash of each scenario is kept next to the CSV; resuming with a
/// changed spec for the same scenario id is refused.
pub fn run_sweep(spec: &SweepSpec, resources: &Resources, results: &Path) -> Result<Vec<BerPoint>> {
    spec.validate()?;
    let hashes_file = hash_path(results);
    let mut hashes: BTreeMap<String, String> = match fs::read_to_string(&hashes_file) {
        Ok(t) => serde_json::from_str(&t)
            .map_err(|e| Error::Format { path: hashes_file.display().to_string(), reason: e.to_string() })?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
        Err(e) => return Err(e.into()),
    };
    let mut all = read_results(results)?;
    let id = &spec.scenario.id;
    let hash = spec.hash();
    match hashes.get(id) {
        Some(h) if *h != hash && all.iter().any(|p| &p.scenario_id == id) => {
            return Err(Error::InvalidConfig(format!(
                "{} already holds results for scenario {id:?} from a different sweep spec",
                results.display()
            )));
        }
        _ => {}
    }
    hashes.insert(id.clone(), hash);
    if let Some(dir) = results.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_atomic(&hashes_file, &serde_json::to_string_pretty(&hashes).expect("map serializes"))?;

    let present: HashSet<PointKey> = all.iter().map(BerPoint::key).collect();
    let n_frames = spec.n_frames();
    let mut out = Vec::new();
    for &detector in &spec.detectors {
        for &snr in &spec.snr_grid {
            let key = PointKey::new(id, detector, snr, spec.seed);
            if present.contains(&key) {
                out.extend(all.iter().find(|p| p.key() == key).cloned());
                continue;
            }
            let det = resources.detector(detector, &spec.scenario.frame, snr)?;
            let count = count_errors(
                det.as_ref(),
                &spec.scenario.frame,
                &ChannelSource::Draw(spec.scenario.channel),
                snr,
                n_frames,
                spec.seed,
                default_shards(),
            )?;
            let point = BerPoint {
                scenario_id: id.clone(),
                detector,
                snr_db: snr,
                n_bits: count.n_bits,
                n_errors: count.n_errors,
                seed: spec.seed,
            };
            all.push(point.clone());
            write_atomic(results, &to_csv(&all))?;
            out.push(point);
        }
    }
    if !results.exists() {
        write_atomic(results, &to_csv(&all))?;
    }
    Ok(out)
}

/// `n_paths` in {12, 24, 36} x `max_delay` in {8, 12, 16}, keeping the decay constant.
pub fn default_variations(base: &ChannelConfig) -> Vec<ChannelConfig> {
    let mut out = Vec::new();
    for n_paths in [12, 24, 36] {
        for max_delay in [8, 12, 16] {
            out.push(ChannelConfig { n_paths, max_delay, decay_const: base.decay_const });
        }
    }
    out
}

pub fn variation_id(base_id: &str, ch: &ChannelConfig) -> String {
    format!("{base_id}-paths{}-delay{}", ch.n_paths, ch.max_delay)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessCell {
    pub scenario_id: String,
    pub channel: ChannelConfig,
    /// Test channel is longer than the cyclic prefix.
    pub exceeds_cp: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub cells: Vec<RobustnessCell>,
    pub points: Vec<BerPoint>,
}

impl RobustnessReport {
    /// `BER(cell) / BER(matched)` at `snr_db` for every cell.
    pub fn degradation(&self, matched_id: &str, snr_db: f64) -> Vec<(String, f64)> {
        let at = |id: &str| self.points.iter().find(|p| p.scenario_id == id && p.snr_db == snr_db).map(BerPoint::ber);
        let Some(reference) = at(matched_id) else { return Vec::new() };
        self.cells.iter().filter_map(|c| at(&c.scenario_id).map(|b| (c.scenario_id.clone(), b / reference))).collect()
    }
}

/// Evaluates a fixed receiver on test channels whose statistics differ from training.
pub fn run_robustness_grid(
    base: &ScenarioConfig,
    variations: &[ChannelConfig],
    rx: &DnnReceiver,
    snr_grid: &[f64],
    min_bits: u64,
    seed: u64,
) -> Result<RobustnessReport> {
    base.validate()?;
    if snr_grid.is_empty() || variations.is_empty() {
        return invalid("robustness grid needs SNR points and channel variations");
    }
    let resources = Resources { stats: None, receiver: Some(rx.clone()) };
    let mut cells = Vec::new();
    let mut points = Vec::new();
    for ch in variations {
        ch.validate()?;
        let id = variation_id(&base.id, ch);
        for &snr in snr_grid {
            points.push(evaluate_ber_on(
                Detector::Dnn,
                &resources,
                base,
                &ChannelSource::Draw(*ch),
                &id,
                snr,
                min_bits,
                seed,
            )?);
        }
        cells.push(RobustnessCell { scenario_id: id, channel: *ch, exceeds_cp: ch.max_delay > base.frame.cp_len });
    }
    Ok(RobustnessReport { cells, points })
}

/// Control detector that guesses every bit; used to sanity-check the counting.
pub struct RandomGuess {
    pub seed: u64,
}

impl FrameDetector for RandomGuess {
    fn detect(&self, frames: &[EvalFrame]) -> Result<Vec<Vec<u8>>> {
        Ok(frames
            .iter()
            .map(|f| {
                let mut rng = derived_rng(derive_seed(self.seed, &[0xC0]), &[f.index]);
                let n = f.sim.bits.len();
                crate::rng::random_bits(n, &mut rng)
            })
            .collect())
    }
}
