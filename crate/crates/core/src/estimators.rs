//! Pilot-based baseline receivers: LS and LMMSE channel estimation followed by
//! one-tap zero-forcing equalization and hard QPSK decisions.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::channel::{frequency_response, noise_variance, sample_channel, ChannelConfig};
use crate::error::{invalid, Error, Result};
use crate::signal::{pilot_sequence, qpsk_demodulate_hard, FrameConfig, FreqBlock};

/// Known pilot tones and their symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPattern {
    pub indices: Vec<usize>,
    pub values: Vec<Complex64>,
}

impl PilotPattern {
    pub fn for_frame(cfg: &FrameConfig) -> Self {
        let seq = pilot_sequence(cfg.n_subcarriers);
        Self { indices: cfg.pilot_indices.clone(), values: cfg.pilot_indices.iter().map(|&k| seq[k]).collect() }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub const STATS_FORMAT_VERSION: u32 = 1;

/// Second-order channel statistics in the frequency domain.
///
/// `r_full_pilot` is `N x P`, `r_pilot_pilot` is `P x P`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationStats {
    pub n_subcarriers: usize,
    pub pilot_indices: Vec<usize>,
    pub r_full_pilot: Vec<Complex64>,
    pub r_pilot_pilot: Vec<Complex64>,
    pub n_draws: usize,
    pub channel: ChannelConfig,
}

impl CorrelationStats {
    pub fn n_pilots(&self) -> usize {
        self.pilot_indices.len()
    }

    pub fn full_pilot(&self, k: usize, p: usize) -> Complex64 {
        self.r_full_pilot[k * self.n_pilots() + p]
    }

    pub fn pilot_pilot(&self, i: usize, j: usize) -> Complex64 {
        self.r_pilot_pilot[i * self.n_pilots() + j]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = StatsFile::from(self);
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Format { path: path.display().to_string(), reason: e.to_string() })?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingResource(format!("correlation stats {}", path.display())),
            _ => Error::Io(e),
        })?;
        let bad = |reason: String| Error::Format { path: path.display().to_string(), reason };
        let file: StatsFile = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        file.into_stats().map_err(bad)
    }
}

#[derive(Serialize, Deserialize)]
struct StatsFile {
    format_version: u32,
    n_subcarriers: usize,
    pilot_indices: Vec<usize>,
    /// `[rows, cols]` of `r_full_pilot`.
    r_full_pilot_dims: [usize; 2],
    r_full_pilot: Vec<[f64; 2]>,
    r_pilot_pilot_dims: [usize; 2],
    r_pilot_pilot: Vec<[f64; 2]>,
    n_draws: usize,
    channel: ChannelConfig,
}

impl From<&CorrelationStats> for StatsFile {
    fn from(s: &CorrelationStats) -> Self {
        let pairs = |v: &[Complex64]| v.iter().map(|c| [c.re, c.im]).collect();
        let p = s.n_pilots();
        Self {
            format_version: STATS_FORMAT_VERSION,
            n_subcarriers: s.n_subcarriers,
            pilot_indices: s.pilot_indices.clone(),
            r_full_pilot_dims: [s.n_subcarriers, p],
            r_full_pilot: pairs(&s.r_full_pilot),
            r_pilot_pilot_dims: [p, p],
            r_pilot_pilot: pairs(&s.r_pilot_pilot),
            n_draws: s.n_draws,
            channel: s.channel,
        }
    }
}

impl StatsFile {
    fn into_stats(self) -> std::result::Result<CorrelationStats, String> {
        if self.format_version != STATS_FORMAT_VERSION {
            return Err(format!("unsupported format_version {}", self.format_version));
        }
        let p = self.pilot_indices.len();
        if self.r_full_pilot_dims != [self.n_subcarriers, p] || self.r_full_pilot.len() != self.n_subcarriers * p {
            return Err("r_full_pilot shape does not match pilot layout".into());
        }
        if self.r_pilot_pilot_dims != [p, p] || self.r_pilot_pilot.len() != p * p {
            return Err("r_pilot_pilot shape does not match pilot layout".into());
        }
        let unpair = |v: Vec<[f64; 2]>| v.into_iter().map(|[re, im]| Complex64::new(re, im)).collect();
        Ok(CorrelationStats {
            n_subcarriers: self.n_subcarriers,
            pilot_indices: self.pilot_indices,
            r_full_pilot: unpair(self.r_full_pilot),
            r_pilot_pilot: unpair(self.r_pilot_pilot),
            n_draws: self.n_draws,
            channel: self.channel,
        })
    }
}

pub const MIN_STATS_DRAWS: usize = 10_000;

/// Empirical `E[H(k) conj(H(p))]` over `n_draws` channel realizations.
///
/// The pilot-pilot block is averaged with its conjugate transpose so it is
/// exactly Hermitian.
pub fn estimate_correlation_stats<R: RngCore + ?Sized>(
    cfg: &ChannelConfig,
    pattern: &PilotPattern,
    n_subcarriers: usize,
    n_draws: usize,
    rng: &mut R,
) -> Result<CorrelationStats> {
    cfg.validate()?;
    if n_draws < MIN_STATS_DRAWS {
        return invalid(format!("need at least {MIN_STATS_DRAWS} channel draws, got {n_draws}"));
    }
    if pattern.indices.iter().any(|&k| k >= n_subcarriers) {
        return invalid("pilot index outside the subcarrier range");
    }
    let p = pattern.len();
    let n = n_subcarriers;
    let mut r_fp = vec![Complex64::new(0.0, 0.0); n * p];
    for _ in 0..n_draws {
        let h = frequency_response(&sample_channel(cfg, rng), n)?;
        for k in 0..n {
            let row = &mut r_fp[k * p..(k + 1) * p];
            for (slot, &pi) in row.iter_mut().zip(&pattern.indices) {
                *slot += h[k] * h[pi].conj();
            }
        }
    }
    let scale = 1.0 / n_draws as f64;
    r_fp.iter_mut().for_each(|v| *v *= scale);

    let mut r_pp = vec![Complex64::new(0.0, 0.0); p * p];
    for i in 0..p {
        for j in 0..p {
            let a = r_fp[pattern.indices[i] * p + j];
            let b = r_fp[pattern.indices[j] * p + i].conj();
            r_pp[i * p + j] = (a + b) * 0.5;
        }
    }
    Ok(CorrelationStats {
        n_subcarriers: n,
        pilot_indices: pattern.indices.clone(),
        r_full_pilot: r_fp,
        r_pilot_pilot: r_pp,
        n_draws,
        channel: *cfg,
    })
}

/// `Y(p) / X(p)` at each pilot tone.
pub fn ls_estimate(y_pilot: &[Complex64], pattern: &PilotPattern) -> Vec<Complex64> {
    pattern.indices.iter().zip(&pattern.values).map(|(&k, &x)| y_pilot[k] / x).collect()
}

/// Piecewise-linear interpolation over subcarriers, wrapping from the last
/// pilot back to the first.
pub fn interpolate_linear(indices: &[usize], values: &[Complex64], n: usize) -> Result<FreqBlock> {
    if indices.len() != values.len() {
        return invalid("pilot indices and values differ in length");
    }
    if indices.len() < 2 {
        return invalid(format!("interpolation needs at least 2 pilots, got {}", indices.len()));
    }
    if indices.windows(2).any(|w| w[0] >= w[1]) || indices[indices.len() - 1] >= n {
        return invalid("pilot indices must be increasing and below N");
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let m = indices.len();
    for seg in 0..m {
        let (k0, v0) = (indices[seg], values[seg]);
        let (next, v1) = (indices[(seg + 1) % m], values[(seg + 1) % m]);
        let k1 = if next > k0 { next } else { next + n };
        let span = (k1 - k0) as f64;
        for k in k0..k1 {
            let t = (k - k0) as f64 / span;
            out[k % n] = v0 + (v1 - v0) * t;
        }
    }
    Ok(FreqBlock(out))
}

/// LS at the pilots followed by linear interpolation.
pub fn ls_channel_estimate(y_pilot: &[Complex64], pattern: &PilotPattern, n: usize) -> Result<FreqBlock> {
    let sparse = ls_estimate(y_pilot, pattern);
    if pattern.len() == n {
        return Ok(FreqBlock(sparse));
    }
    interpolate_linear(&pattern.indices, &sparse, n)
}

/// LMMSE filter `W = R_fp (R_pp + s2 I)^-1` for one noise level.
///
/// `W` is found by solving `(R_pp + s2 I) W^H = R_fp^H`; no inverse is formed.
#[derive(Debug, Clone)]
pub struct MmseFilter {
    n_subcarriers: usize,
    n_pilots: usize,
    weights: Vec<Complex64>,
}

impl MmseFilter {
    pub fn new(stats: &CorrelationStats, snr_db: f64) -> Result<Self> {
        let p = stats.n_pilots();
        let n = stats.n_subcarriers;
        let s2 = noise_variance(snr_db);
        let a = DMatrix::from_fn(p, p, |i, j| {
            let v = stats.pilot_pilot(i, j);
            if i == j {
                v + s2
            } else {
                v
            }
        });
        let rhs = DMatrix::from_fn(p, n, |i, k| stats.full_pilot(k, i).conj());
        let lu = a.lu();
        let diag = lu.u().diagonal();
        let max_pivot = diag.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let min_pivot = diag.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
        if !(min_pivot > max_pivot * p as f64 * f64::EPSILON) {
            return Err(Error::Numeric(format!(
                "LMMSE system is singular (pivot ratio {:.3e}) at {snr_db} dB",
                min_pivot / max_pivot
            )));
        }
        let x = lu.solve(&rhs).ok_or_else(|| Error::Numeric(format!("LMMSE solve failed at {snr_db} dB")))?;
        let weights = (0..n).flat_map(|k| (0..p).map(move |i| (k, i))).map(|(k, i)| x[(i, k)].conj()).collect();
        Ok(Self { n_subcarriers: n, n_pilots: p, weights })
    }

    pub fn apply(&self, ls_at_pilots: &[Complex64]) -> FreqBlock {
        let p = self.n_pilots;
        FreqBlock(
            (0..self.n_subcarriers)
                .map(|k| self.weights[k * p..(k + 1) * p].iter().zip(ls_at_pilots).map(|(w, h)| w * h).sum())
                .collect(),
        )
    }
}

/// LMMSE channel estimate on every subcarrier from the pilot block.
pub fn mmse_estimate(
    y_pilot: &[Complex64],
    pattern: &PilotPattern,
    stats: &CorrelationStats,
    snr_db: f64,
) -> Result<FreqBlock> {
    if stats.pilot_indices != pattern.indices {
        return invalid("correlation stats were computed for a different pilot pattern");
    }
    Ok(MmseFilter::new(stats, snr_db)?.apply(&ls_estimate(y_pilot, pattern)))
}

/// Channel magnitudes below this are replaced before zero-forcing.
pub const ZF_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bits: Vec<u8>,
    /// Subcarriers whose channel estimate hit the zero-forcing guard.
    pub guarded: usize,
}

/// Zero-forcing equalization followed by hard QPSK decisions.
pub fn equalize_and_detect(y_data: &[Complex64], h_est: &[Complex64]) -> Result<Detection> {
    if y_data.len() != h_est.len() {
        return invalid("data block and channel estimate differ in length");
    }
    let mut guarded = 0;
    let equalized: Vec<Complex64> = y_data
        .iter()
        .zip(h_est)
        .map(|(&y, &h)| {
            let mag = h.norm();
            if mag < ZF_GUARD || !mag.is_finite() {
                guarded += 1;
                let unit = if mag > 0.0 && mag.is_finite() { h / mag } else { Complex64::new(1.0, 0.0) };
                y / (unit * ZF_GUARD)
            } else {
                y / h
            }
        })
        .collect();
    Ok(Detection { bits: qpsk_demodulate_hard(&equalized), guarded })
}

/// Perfect-CSI detection given the channel taps.
pub fn perfect_csi_detect(y_data: &[Complex64], h: &crate::channel::ChannelRealization) -> Result<Detection> {
    let hf = frequency_response(h, y_data.len())?;
    equalize_and_detect(y_data, &hf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::transmit_frame;
    use crate::rng::{random_bits, rng_from_seed};
    use crate::signal::build_frame;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn ls_examples() {
        let pattern = PilotPattern { indices: vec![0], values: vec![c(1.0, 0.0)] };
        assert_eq!(ls_estimate(&[c(2.0, 2.0)], &pattern), vec![c(2.0, 2.0)]);

        let cfg = FrameConfig::default();
        let pattern = PilotPattern::for_frame(&cfg);
        let mut rng = rng_from_seed(1);
        let frame = build_frame(&random_bits(128, &mut rng), &cfg, &mut rng).unwrap();
        let h = sample_channel(&ChannelConfig::default(), &mut rng);
        let hf = frequency_response(&h, 64).unwrap();
        let rx = transmit_frame(&frame, &h, f64::INFINITY, &cfg, &mut rng).unwrap();
        for (est, truth) in ls_estimate(&rx.pilot, &pattern).iter().zip(hf.iter()) {
            assert!((est - truth).norm() < 1e-10);
        }
    }

    #[test]
    fn interpolation_examples() {
        let idx: Vec<usize> = (0..64).collect();
        let vals: Vec<Complex64> = idx.iter().map(|&k| c(k as f64, -(k as f64))).collect();
        assert_eq!(interpolate_linear(&idx, &vals, 64).unwrap().0, vals);

        let out = interpolate_linear(&[0, 8], &[c(0.0, 0.0), c(8.0, 0.0)], 16).unwrap();
        assert!((out[4] - c(4.0, 0.0)).norm() < 1e-12);
        // wraparound segment 8 -> 16 (= 0)
        assert!((out[12] - c(4.0, 0.0)).norm() < 1e-12);

        let flat = interpolate_linear(&[3, 20, 41], &[c(0.3, 0.1); 3], 64).unwrap();
        assert!(flat.iter().all(|v| (v - c(0.3, 0.1)).norm() < 1e-12));

        assert!(interpolate_linear(&[5], &[c(1.0, 0.0)], 64).is_err());
    }

    #[test]
    fn flat_channel_stats_are_all_ones() {
        let cfg = ChannelConfig { n_paths: 24, max_delay: 0, decay_const: 4.0 };
        let pattern = PilotPattern::for_frame(&FrameConfig::new(64, 16, 8).unwrap());
        let stats = estimate_correlation_stats(&cfg, &pattern, 64, 100_000, &mut rng_from_seed(2)).unwrap();
        assert!(stats.r_full_pilot.iter().all(|v| (v - c(1.0, 0.0)).norm() < 0.02 + 1e-12));
        assert!(estimate_correlation_stats(&cfg, &pattern, 64, 100, &mut rng_from_seed(2)).is_err());
    }

    #[test]
    fn stats_diagonal_and_symmetry() {
        let pattern = PilotPattern::for_frame(&FrameConfig::default());
        let stats = estimate_correlation_stats(&ChannelConfig::default(), &pattern, 64, 100_000, &mut rng_from_seed(3))
            .unwrap();
        let p = stats.n_pilots();
        for i in 0..p {
            let d = stats.pilot_pilot(i, i);
            assert!((d.re - 1.0).abs() < 0.02 && d.im.abs() < 1e-12, "{d}");
            for j in 0..p {
                assert!((stats.pilot_pilot(i, j) - stats.pilot_pilot(j, i).conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn stats_file_round_trip() {
        let pattern = PilotPattern::for_frame(&FrameConfig::new(64, 16, 8).unwrap());
        let stats =
            estimate_correlation_stats(&ChannelConfig::default(), &pattern, 64, 10_000, &mut rng_from_seed(4)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.json");
        stats.save(&path).unwrap();
        assert_eq!(CorrelationStats::load(&path).unwrap(), stats);
        assert!(matches!(CorrelationStats::load(&dir.path().join("nope.json")), Err(Error::MissingResource(_))));
    }

    #[test]
    fn mmse_reduces_to_ls_without_noise() {
        // Long, slowly decaying profile so that all 64 taps carry energy and R_pp is well conditioned.
        let cfg = ChannelConfig { n_paths: 400, max_delay: 63, decay_const: 1000.0 };
        let frame_cfg = FrameConfig::default();
        let pattern = PilotPattern::for_frame(&frame_cfg);
        let stats = estimate_correlation_stats(&cfg, &pattern, 64, 20_000, &mut rng_from_seed(5)).unwrap();
        let mut rng = rng_from_seed(6);
        let frame = build_frame(&random_bits(128, &mut rng), &frame_cfg, &mut rng).unwrap();
        let h = sample_channel(&cfg, &mut rng);
        let rx = transmit_frame(&frame, &h, f64::INFINITY, &frame_cfg, &mut rng).unwrap();
        let ls = ls_estimate(&rx.pilot, &pattern);
        let mmse = mmse_estimate(&rx.pilot, &pattern, &stats, f64::INFINITY).unwrap();
        for (a, b) in mmse.iter().zip(&ls) {
            assert!((a - b).norm() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn singular_system_is_reported() {
        // 17-tap channel: R_pp over 64 pilots has rank 17.
        let pattern = PilotPattern::for_frame(&FrameConfig::default());
        let stats =
            estimate_correlation_stats(&ChannelConfig::default(), &pattern, 64, 10_000, &mut rng_from_seed(7)).unwrap();
        let y = vec![c(1.0, 0.0); 64];
        assert!(matches!(mmse_estimate(&y, &pattern, &stats, f64::INFINITY), Err(Error::Numeric(_))));
        assert!(mmse_estimate(&y, &pattern, &stats, 20.0).is_ok());
    }

    #[test]
    fn mmse_on_flat_channel_shrinks_variance() {
        let cfg = ChannelConfig { n_paths: 24, max_delay: 0, decay_const: 4.0 };
        let frame_cfg = FrameConfig::new(64, 16, 8).unwrap();
        let pattern = PilotPattern::for_frame(&frame_cfg);
        let stats = estimate_correlation_stats(&cfg, &pattern, 64, 10_000, &mut rng_from_seed(8)).unwrap();
        let filter = MmseFilter::new(&stats, 5.0).unwrap();
        let mut rng = rng_from_seed(9);
        let (mut err_ls, mut err_mmse) = (0.0, 0.0);
        let frames = 5_000;
        for _ in 0..frames {
            let frame = build_frame(&random_bits(128, &mut rng), &frame_cfg, &mut rng).unwrap();
            let h = sample_channel(&cfg, &mut rng);
            let rx = transmit_frame(&frame, &h, 5.0, &frame_cfg, &mut rng).unwrap();
            let ls = ls_estimate(&rx.pilot, &pattern);
            let mmse = filter.apply(&ls);
            err_ls += (ls[0] - h.taps[0]).norm_sqr();
            err_mmse += (mmse[0] - h.taps[0]).norm_sqr();
        }
        assert!(err_mmse < err_ls, "{err_mmse} vs {err_ls}");
        assert!(err_mmse / (frames as f64) < 0.1 * noise_variance(5.0) * 2.0);
    }

    #[test]
    fn ls_mse_equals_noise_variance() {
        let cfg = FrameConfig::default();
        let pattern = PilotPattern::for_frame(&cfg);
        let mut rng = rng_from_seed(10);
        let frames = 10_000;
        let mut mse = 0.0;
        for _ in 0..frames {
            let frame = build_frame(&random_bits(128, &mut rng), &cfg, &mut rng).unwrap();
            let h = sample_channel(&ChannelConfig::default(), &mut rng);
            let hf = frequency_response(&h, 64).unwrap();
            let rx = transmit_frame(&frame, &h, 10.0, &cfg, &mut rng).unwrap();
            let ls = ls_estimate(&rx.pilot, &pattern);
            mse += ls.iter().zip(hf.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / 64.0;
        }
        let mse = mse / frames as f64;
        assert!((mse / 0.1 - 1.0).abs() < 0.1, "{mse}");
    }

    #[test]
    fn equalizer_examples() {
        let mut rng = rng_from_seed(11);
        let cfg = FrameConfig::default();
        let bits = random_bits(128, &mut rng);
        let frame = build_frame(&bits, &cfg, &mut rng).unwrap();
        let h = sample_channel(&ChannelConfig::default(), &mut rng);
        let rx = transmit_frame(&frame, &h, f64::INFINITY, &cfg, &mut rng).unwrap();
        let det = perfect_csi_detect(&rx.data, &h).unwrap();
        assert_eq!(det.bits, bits);
        assert_eq!(det.guarded, 0);

        let zeros = vec![c(0.0, 0.0); 64];
        let det = equalize_and_detect(&zeros, &vec![c(1.0, 0.0); 64]).unwrap();
        assert!(det.bits.iter().all(|&b| b == 0));
        assert_eq!(det.bits.len(), 128);

        let det = equalize_and_detect(&[c(1.0, -1.0), c(1.0, 1.0)], &[c(0.0, 0.0), c(1e-13, 0.0)]).unwrap();
        assert_eq!(det.guarded, 2);
        assert_eq!(det.bits, vec![0, 1, 0, 0]);
    }
}
