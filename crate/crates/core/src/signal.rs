//! OFDM baseband primitives.
//!
//! QPSK mapping, unitary DFT/IDFT, cyclic prefix handling, clipping and
//! assembly of a two-block frame (pilot block followed by a data block).
//!
//! Both transform directions are scaled by `1/sqrt(N)`, so unit-power QPSK
//! symbols produce unit-power time-domain samples.

use std::cell::RefCell;
use std::f64::consts::FRAC_1_SQRT_2;
use std::ops::Deref;
use std::sync::Arc;

use num_complex::Complex64;
use rand::RngCore;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{random_bits, rng_from_seed};

/// Seed of the generator that produces the fixed pilot bit pattern.
pub const PILOT_SEED: u64 = 0x0FD3_5EED;

macro_rules! complex_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Default)]
        pub struct $name(pub Vec<Complex64>);

        impl $name {
            pub fn into_inner(self) -> Vec<Complex64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = [Complex64];
            fn deref(&self) -> &[Complex64] {
                &self.0
            }
        }

        impl From<Vec<Complex64>> for $name {
            fn from(v: Vec<Complex64>) -> Self {
                Self(v)
            }
        }
    };
}

complex_newtype!(
    /// One OFDM block of frequency-domain symbols, one entry per subcarrier.
    FreqBlock
);
complex_newtype!(
    /// Complex baseband samples in the time domain.
    TimeSignal
);

/// Maps bit pairs to Gray-labelled unit-energy QPSK symbols.
///
/// `(b0, b1)` becomes `((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)`.
pub fn qpsk_modulate(bits: &[u8]) -> Result<Vec<Complex64>> {
    if bits.len() % 2 != 0 {
        return invalid(format!("QPSK needs an even number of bits, got {}", bits.len()));
    }
    if let Some(b) = bits.iter().find(|&&b| b > 1) {
        return invalid(format!("bit value {b} is not 0 or 1"));
    }
    Ok(bits
        .chunks_exact(2)
        .map(|p| Complex64::new((1.0 - 2.0 * p[0] as f64) * FRAC_1_SQRT_2, (1.0 - 2.0 * p[1] as f64) * FRAC_1_SQRT_2))
        .collect())
}

/// Hard QPSK decisions. A component exactly equal to zero decodes as bit 0.
pub fn qpsk_demodulate_hard(symbols: &[Complex64]) -> Vec<u8> {
    symbols.iter().flat_map(|s| [(s.re < 0.0) as u8, (s.im < 0.0) as u8]).collect()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

fn unitary_transform(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf = x.to_vec();
    plan(n, inverse).process(&mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= scale);
    buf
}

/// Unitary DFT of an `n`-sample block.
pub fn dft(x: &[Complex64], n: usize) -> Result<FreqBlock> {
    if x.len() != n {
        return invalid(format!("DFT length mismatch: {} samples for N = {n}", x.len()));
    }
    Ok(FreqBlock(unitary_transform(x, false)))
}

/// Unitary inverse DFT.
pub fn idft(x: &[Complex64]) -> TimeSignal {
    TimeSignal(unitary_transform(x, true))
}

/// Prepends the last `cp_len` samples of the block.
pub fn add_cp(t: &[Complex64], cp_len: usize) -> Result<TimeSignal> {
    if cp_len > t.len() {
        return invalid(format!("cyclic prefix {cp_len} longer than block {}", t.len()));
    }
    let mut out = Vec::with_capacity(t.len() + cp_len);
    out.extend_from_slice(&t[t.len() - cp_len..]);
    out.extend_from_slice(t);
    Ok(TimeSignal(out))
}

/// Drops the first `cp_len` samples.
pub fn remove_cp(t: &[Complex64], cp_len: usize) -> Result<TimeSignal> {
    if cp_len > t.len() {
        return invalid(format!("cyclic prefix {cp_len} longer than signal {}", t.len()));
    }
    Ok(TimeSignal(t[cp_len..].to_vec()))
}

/// Transmitter clipping: threshold `A = clip_ratio * sigma_ref`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig {
    pub clip_ratio: f64,
    /// Reference rms of the unclipped signal; 1 under the unit-power convention.
    pub sigma_ref: f64,
}

impl ClipConfig {
    pub fn with_ratio(clip_ratio: f64) -> Self {
        Self { clip_ratio, sigma_ref: 1.0 }
    }

    pub fn threshold(&self) -> f64 {
        self.clip_ratio * self.sigma_ref
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.threshold();
        if !(self.clip_ratio > 0.0 && self.sigma_ref > 0.0) || a.is_nan() {
            return invalid(format!("clip threshold must be positive, got {a}"));
        }
        Ok(())
    }
}

/// Limits every sample magnitude to the threshold while keeping its phase.
pub fn clip_signal(t: &[Complex64], clip: &ClipConfig) -> TimeSignal {
    let a = clip.threshold();
    TimeSignal(
        t.iter()
            .map(|&x| {
                let mag = x.norm();
                if mag <= a {
                    x
                } else {
                    x * (a / mag)
                }
            })
            .collect(),
    )
}

/// Layout of one frame: subcarrier count, cyclic prefix, pilots and clipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub n_subcarriers: usize,
    /// Zero means no cyclic prefix.
    pub cp_len: usize,
    pub pilot_indices: Vec<usize>,
    pub clip: Option<ClipConfig>,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self::new(64, 16, 64).expect("default frame layout is valid")
    }
}

impl FrameConfig {
    /// Frame with `n_pilots` evenly spaced pilot tones starting at subcarrier 0.
    pub fn new(n_subcarriers: usize, cp_len: usize, n_pilots: usize) -> Result<Self> {
        if n_pilots == 0 || n_pilots > n_subcarriers {
            return invalid(format!("n_pilots must be in 1..={n_subcarriers}, got {n_pilots}"));
        }
        let cfg =
            Self { n_subcarriers, cp_len, pilot_indices: even_pilot_indices(n_subcarriers, n_pilots), clip: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_clip(mut self, clip: ClipConfig) -> Self {
        self.clip = Some(clip);
        self
    }

    pub fn n_pilots(&self) -> usize {
        self.pilot_indices.len()
    }

    /// Samples per block including the prefix.
    pub fn block_len(&self) -> usize {
        self.n_subcarriers + self.cp_len
    }

    /// Data bits carried by one frame.
    pub fn bits_per_frame(&self) -> usize {
        2 * self.n_subcarriers
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_subcarriers;
        if n == 0 {
            return invalid("n_subcarriers must be positive");
        }
        if self.cp_len > n {
            return invalid(format!("cp_len {} exceeds n_subcarriers {n}", self.cp_len));
        }
        if self.pilot_indices.is_empty() {
            return invalid("at least one pilot tone is required");
        }
        if self.pilot_indices.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("pilot_indices must be strictly increasing");
        }
        if let Some(&last) = self.pilot_indices.last() {
            if last >= n {
                return invalid(format!("pilot index {last} outside 0..{n}"));
            }
        }
        if let Some(clip) = &self.clip {
            clip.validate()?;
        }
        Ok(())
    }
}

/// `n_pilots` tones spread as evenly as possible over `0..n`.
pub fn even_pilot_indices(n: usize, n_pilots: usize) -> Vec<usize> {
    (0..n_pilots).map(|i| i * n / n_pilots).collect()
}

/// The fixed, receiver-known pilot symbol for every subcarrier.
///
/// QPSK modulation of `2 n` bits drawn from a ChaCha8 generator seeded with
/// [`PILOT_SEED`]. Only the entries at pilot indices are used as pilots.
pub fn pilot_sequence(n: usize) -> Vec<Complex64> {
    let mut rng = rng_from_seed(PILOT_SEED);
    qpsk_modulate(&random_bits(2 * n, &mut rng)).expect("even bit count")
}

/// A transmitted frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TxFrame {
    pub pilot_block: FreqBlock,
    pub data_block: FreqBlock,
    pub data_bits: Vec<u8>,
    /// Both blocks in the time domain, prefixes included, clipped when configured.
    pub time_signal: TimeSignal,
}

/// Assembles the pilot and data blocks and their transmitted waveform.
///
/// When fewer than `N` pilots are configured, the remaining tones of the
/// pilot block carry random QPSK filler drawn from `rng`.
pub fn build_frame<R: RngCore + ?Sized>(data_bits: &[u8], cfg: &FrameConfig, rng: &mut R) -> Result<TxFrame> {
    cfg.validate()?;
    let n = cfg.n_subcarriers;
    if data_bits.len() != 2 * n {
        return invalid(format!("frame needs {} data bits, got {}", 2 * n, data_bits.len()));
    }
    let data_block = FreqBlock(qpsk_modulate(data_bits)?);

    let pilots = pilot_sequence(n);
    let pilot_block = if cfg.n_pilots() == n {
        FreqBlock(pilots)
    } else {
        let mut block = qpsk_modulate(&random_bits(2 * n, rng))?;
        for &k in &cfg.pilot_indices {
            block[k] = pilots[k];
        }
        FreqBlock(block)
    };

    let mut samples = Vec::with_capacity(2 * cfg.block_len());
    for block in [&pilot_block, &data_block] {
        samples.extend(add_cp(&idft(block), cfg.cp_len)?.into_inner());
    }
    let time_signal = match &cfg.clip {
        Some(clip) => clip_signal(&samples, clip),
        None => TimeSignal(samples),
    };
    Ok(TxFrame { pilot_block, data_block, data_bits: data_bits.to_vec(), time_signal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, &v)| v * Complex64::from_polar(1.0, -2.0 * PI * (k * t) as f64 / n as f64))
                    .sum::<Complex64>()
                    / (n as f64).sqrt()
            })
            .collect()
    }

    #[test]
    fn qpsk_mapping_examples() {
        let s = qpsk_modulate(&[0, 0]).unwrap();
        assert_abs_diff_eq!(s[0].re, 0.70711, epsilon = 1e-5);
        assert_abs_diff_eq!(s[0].im, 0.70711, epsilon = 1e-5);
        let s = qpsk_modulate(&[1, 1]).unwrap();
        assert_abs_diff_eq!(s[0].re, -0.70711, epsilon = 1e-5);
        assert_abs_diff_eq!(s[0].im, -0.70711, epsilon = 1e-5);
        let s = qpsk_modulate(&[0, 1, 1, 0]).unwrap();
        assert_abs_diff_eq!(s[0].re, 0.70711, epsilon = 1e-5);
        assert_abs_diff_eq!(s[0].im, -0.70711, epsilon = 1e-5);
        assert_abs_diff_eq!(s[1].re, -0.70711, epsilon = 1e-5);
        assert_abs_diff_eq!(s[1].im, 0.70711, epsilon = 1e-5);
    }

    #[test]
    fn qpsk_rejects_bad_input() {
        assert!(qpsk_modulate(&[0, 1, 1]).is_err());
        assert!(qpsk_modulate(&[0, 2]).is_err());
    }

    #[test]
    fn hard_decisions() {
        assert_eq!(qpsk_demodulate_hard(&[c(0.70711, 0.70711)]), vec![0, 0]);
        assert_eq!(qpsk_demodulate_hard(&[c(-0.1, 0.9)]), vec![1, 0]);
        assert_eq!(qpsk_demodulate_hard(&[c(0.0, 0.0)]), vec![0, 0]);
        for word in 0u8..16 {
            let bits: Vec<u8> = (0..4).map(|i| (word >> i) & 1).collect();
            assert_eq!(qpsk_demodulate_hard(&qpsk_modulate(&bits).unwrap()), bits);
        }
    }

    #[test]
    fn dft_of_impulse() {
        let x = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let y = dft(&x, 4).unwrap();
        for v in y.iter() {
            assert_abs_diff_eq!(v.re, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-12);
        }
        assert!(dft(&x, 8).is_err());
    }

    #[test]
    fn dft_matches_direct_sum() {
        let mut rng = rng_from_seed(11);
        for n in [4usize, 7, 64] {
            let x: Vec<Complex64> =
                (0..n).map(|_| c(rng.next_u32() as f64 / 4e9 - 0.5, rng.next_u32() as f64 / 4e9 - 0.5)).collect();
            let fast = dft(&x, n).unwrap();
            for (a, b) in fast.iter().zip(naive_dft(&x)) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn cyclic_prefix() {
        let t = [c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)];
        let with = add_cp(&t, 2).unwrap();
        assert_eq!(&with[..], &[t[2], t[3], t[0], t[1], t[2], t[3]]);
        assert_eq!(&remove_cp(&with, 2).unwrap()[..], &t);
        assert_eq!(&add_cp(&t, 0).unwrap()[..], &t);
        assert!(add_cp(&t, 5).is_err());
    }

    #[test]
    fn clipping_examples() {
        let clip = ClipConfig::with_ratio(1.0);
        let below = Complex64::from_polar(0.5, PI / 3.0);
        assert_eq!(clip_signal(&[below], &clip)[0], below);
        let above = Complex64::from_polar(2.0, PI / 4.0);
        let out = clip_signal(&[above], &clip)[0];
        assert_abs_diff_eq!(out.norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.arg(), PI / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn clipping_at_unit_ratio_on_ofdm_samples() {
        // Unit-power OFDM samples are close to circular Gaussian. For |x|^2 ~ Exp(1)
        // the clipped power is E[min(|x|^2, 1)] = 1 - e^{-1}.
        let mut rng = rng_from_seed(5);
        let clip = ClipConfig::with_ratio(1.0);
        let mut power = 0.0;
        let mut count = 0usize;
        let mut peak: f64 = 0.0;
        for _ in 0..2000 {
            let sym = qpsk_modulate(&random_bits(128, &mut rng)).unwrap();
            let out = clip_signal(&idft(&sym), &clip);
            for v in out.iter() {
                power += v.norm_sqr();
                peak = peak.max(v.norm());
                count += 1;
            }
        }
        let rms = (power / count as f64).sqrt();
        assert!(count >= 100_000);
        assert!((rms - (1.0 - (-1.0f64).exp()).sqrt()).abs() < 0.01, "rms {rms}");
        assert_abs_diff_eq!(peak, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn frame_lengths_and_pilots() {
        let mut rng = rng_from_seed(1);
        let bits = random_bits(128, &mut rng);
        let cfg = FrameConfig::default();
        let frame = build_frame(&bits, &cfg, &mut rng).unwrap();
        assert_eq!(frame.time_signal.len(), 160);
        assert_eq!(&frame.pilot_block[..], &pilot_sequence(64)[..]);

        let no_cp = FrameConfig::new(64, 0, 64).unwrap();
        assert_eq!(build_frame(&bits, &no_cp, &mut rng).unwrap().time_signal.len(), 128);

        let sparse = FrameConfig::new(64, 16, 8).unwrap();
        assert_eq!(sparse.pilot_indices, vec![0, 8, 16, 24, 32, 40, 48, 56]);
        let pilots = pilot_sequence(64);
        for seed in 0..5 {
            let f = build_frame(&bits, &sparse, &mut rng_from_seed(seed)).unwrap();
            for &k in &sparse.pilot_indices {
                assert_eq!(f.pilot_block[k], pilots[k]);
            }
        }
        assert!(build_frame(&bits[..100], &cfg, &mut rng).is_err());
    }

    #[test]
    fn frame_config_validation() {
        assert!(FrameConfig::new(64, 65, 64).is_err());
        assert!(FrameConfig::new(64, 16, 0).is_err());
        let mut cfg = FrameConfig::default();
        cfg.pilot_indices = vec![3, 3];
        assert!(cfg.validate().is_err());
        cfg.pilot_indices = vec![70];
        assert!(cfg.validate().is_err());
        let clipped = FrameConfig::default().with_clip(ClipConfig::with_ratio(0.0));
        assert!(clipped.validate().is_err());
    }
}
