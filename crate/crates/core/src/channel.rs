//! Sample-spaced multipath channel, propagation and AWGN.
//!
//! The channel is a tapped delay line. Each frame draws `n_paths` paths with
//! integer delays uniform over `0..=max_delay`; a path's complex gain is
//! circular Gaussian with variance proportional to `exp(-delay / decay_const)`.
//! Gains are scaled so the expected total tap energy is one.

use num_complex::Complex64;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::signal::{dft, remove_cp, FrameConfig, FreqBlock, TimeSignal, TxFrame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub n_paths: usize,
    /// Largest path delay, in samples.
    pub max_delay: usize,
    /// Time constant of the exponential power-delay profile, in samples.
    pub decay_const: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self { n_paths: 24, max_delay: 16, decay_const: 4.0 }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return invalid("n_paths must be at least 1");
        }
        if !(self.decay_const > 0.0) {
            return invalid(format!("decay_const must be positive, got {}", self.decay_const));
        }
        Ok(())
    }

    /// Expected energy of each tap, `E|h(l)|^2`, summing to one.
    pub fn power_delay_profile(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..=self.max_delay).map(|l| (-(l as f64) / self.decay_const).exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }
}

/// Taps `h(0..=D)` of one channel draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub taps: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn new(taps: Vec<Complex64>) -> Self {
        Self { taps }
    }

    /// Single unit tap.
    pub fn identity() -> Self {
        Self::new(vec![Complex64::new(1.0, 0.0)])
    }

    pub fn max_delay(&self) -> usize {
        self.taps.len().saturating_sub(1)
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|h| h.norm_sqr()).sum()
    }
}

/// Circular complex Gaussian with `E|z|^2 = variance`.
pub(crate) fn complex_gaussian<R: RngCore + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

pub fn sample_channel<R: RngCore + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> ChannelRealization {
    let d = cfg.max_delay;
    // Expected per-path variance factor over the uniform delay draw.
    let mean_profile: f64 = (0..=d).map(|l| (-(l as f64) / cfg.decay_const).exp()).sum::<f64>() / (d + 1) as f64;
    let scale = 1.0 / (cfg.n_paths as f64 * mean_profile);

    let mut taps = vec![Complex64::new(0.0, 0.0); d + 1];
    for _ in 0..cfg.n_paths {
        let delay = rng.random_range(0..=d);
        let var = scale * (-(delay as f64) / cfg.decay_const).exp();
        taps[delay] += complex_gaussian(rng, var);
    }
    ChannelRealization { taps }
}

/// `y(n) = sum_l h(l) x((n - l) mod N)`.
pub fn circular_convolve(x: &[Complex64], h: &ChannelRealization) -> TimeSignal {
    let n = x.len();
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    if n == 0 {
        return TimeSignal(y);
    }
    for (l, &tap) in h.taps.iter().enumerate() {
        for (i, out) in y.iter_mut().enumerate() {
            *out += tap * x[(i + n - l % n) % n];
        }
    }
    TimeSignal(y)
}

/// Full linear convolution; the output keeps the `D`-sample tail.
pub fn linear_convolve(x: &[Complex64], h: &ChannelRealization) -> TimeSignal {
    if x.is_empty() || h.taps.is_empty() {
        return TimeSignal(Vec::new());
    }
    let mut y = vec![Complex64::new(0.0, 0.0); x.len() + h.taps.len() - 1];
    for (l, &tap) in h.taps.iter().enumerate() {
        for (i, &v) in x.iter().enumerate() {
            y[i + l] += tap * v;
        }
    }
    TimeSignal(y)
}

/// Per-sample noise variance for an SNR in dB against unit received power.
/// `f64::INFINITY` gives zero noise.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

pub fn add_awgn<R: RngCore + ?Sized>(y: &[Complex64], snr_db: f64, rng: &mut R) -> TimeSignal {
    let var = noise_variance(snr_db);
    if var == 0.0 {
        return TimeSignal(y.to_vec());
    }
    TimeSignal(y.iter().map(|&v| v + complex_gaussian(rng, var)).collect())
}

/// `H(k) = sum_l h(l) exp(-j 2 pi k l / N)`, so that `Y = X H` holds with unitary block DFTs.
pub fn frequency_response(h: &ChannelRealization, n: usize) -> Result<FreqBlock> {
    if h.taps.len() > n {
        return invalid(format!("channel delay {} needs at least {} subcarriers", h.max_delay(), h.taps.len()));
    }
    let mut padded = h.taps.clone();
    padded.resize(n, Complex64::new(0.0, 0.0));
    let scale = (n as f64).sqrt();
    Ok(FreqBlock(dft(&padded, n)?.iter().map(|v| v * scale).collect()))
}

/// Where simulated frames get their channel from.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSource {
    /// A fresh realization per frame.
    Draw(ChannelConfig),
    /// The same taps for every frame.
    Fixed(ChannelRealization),
}

impl ChannelSource {
    /// The distortion-free channel `h = [1]`.
    pub fn flat() -> Self {
        ChannelSource::Fixed(ChannelRealization::identity())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ChannelSource::Draw(cfg) => cfg.validate(),
            ChannelSource::Fixed(h) if h.taps.is_empty() => invalid("fixed channel has no taps"),
            ChannelSource::Fixed(_) => Ok(()),
        }
    }

    pub fn realize<R: RngCore + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        match self {
            ChannelSource::Draw(cfg) => sample_channel(cfg, rng),
            ChannelSource::Fixed(h) => h.clone(),
        }
    }
}

impl From<ChannelConfig> for ChannelSource {
    fn from(cfg: ChannelConfig) -> Self {
        ChannelSource::Draw(cfg)
    }
}

/// Received pilot and data blocks in the frequency domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub pilot: FreqBlock,
    pub data: FreqBlock,
}

/// Sends a frame through the channel and returns the two demodulated blocks.
///
/// With a cyclic prefix each block's prefix is stripped before the DFT. Without
/// one, each block is the raw `N`-sample window of the received stream, so
/// energy from the previous block leaks in.
pub fn transmit_frame<R: RngCore + ?Sized>(
    frame: &TxFrame,
    h: &ChannelRealization,
    snr_db: f64,
    cfg: &FrameConfig,
    rng: &mut R,
) -> Result<ReceivedFrame> {
    let n = cfg.n_subcarriers;
    let block_len = cfg.block_len();
    if frame.time_signal.len() != 2 * block_len {
        return invalid(format!("frame has {} samples, layout expects {}", frame.time_signal.len(), 2 * block_len));
    }
    let received = add_awgn(&linear_convolve(&frame.time_signal, h), snr_db, rng);
    let demod = |b: usize| -> Result<FreqBlock> {
        let window = &received[b * block_len..(b + 1) * block_len];
        dft(&remove_cp(window, cfg.cp_len)?, n)
    };
    Ok(ReceivedFrame { pilot: demod(0)?, data: demod(1)? })
}
