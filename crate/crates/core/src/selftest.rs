//! Quick invariant suites with analytic answers. The `selftest` subcommand
//! runs them at reduced sizes; the acceptance suite runs the same functions
//! at full size.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{circular_convolve, complex_gaussian, linear_convolve, ChannelRealization, ChannelSource};
use crate::error::Result;
use crate::experiments::{count_errors, Detector, LsDetector, PerfectCsiDetector, Resources};
use crate::neuralnet::{gradient_check, init_params, layer_specs, GradCheckReport, Mlp, DEFAULT_DIMS};
use crate::rng::{derived_rng, random_bits};
use crate::signal::{add_cp, dft, idft, qpsk_demodulate_hard, qpsk_modulate, remove_cp, FrameConfig};

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Per-bit error probability of Gray QPSK on an AWGN channel.
pub fn qpsk_awgn_ber(ebn0_db: f64) -> f64 {
    q_function((2.0 * 10f64.powf(ebn0_db / 10.0)).sqrt())
}

/// The simulator's SNR is symbol energy over noise; QPSK carries two bits per symbol.
pub fn ebn0_to_snr_db(ebn0_db: f64) -> f64 {
    ebn0_db + 10.0 * 2f64.log10()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

/// Worst-case errors over random cases of the three algebraic identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityErrors {
    /// Norm preservation and inverse round trip of the unitary DFT.
    pub dft: f64,
    /// Linear convolution with a long-enough prefix versus circular convolution.
    pub cp: f64,
    /// Bits in, bits out.
    pub qpsk_bit_errors: usize,
}

pub fn identity_errors(n_cases: usize, seed: u64) -> Result<IdentityErrors> {
    let mut out = IdentityErrors { dft: 0.0, cp: 0.0, qpsk_bit_errors: 0 };
    for case in 0..n_cases as u64 {
        let mut rng = derived_rng(seed, &[case]);
        let n = [8, 16, 64, 100][rng.random_range(0..4)];
        let x: Vec<Complex64> = (0..n).map(|_| complex_gaussian(&mut rng, 1.0)).collect();

        let f = dft(&x, n)?;
        let energy = |v: &[Complex64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>();
        let back = idft(&f);
        let round = x.iter().zip(back.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        out.dft = out.dft.max(round).max((energy(&f) - energy(&x)).abs() / energy(&x));

        let d = rng.random_range(0..=n / 4);
        let cp = rng.random_range(d..=n / 4);
        let h = ChannelRealization::new((0..=d).map(|_| complex_gaussian(&mut rng, 1.0)).collect());
        let through = linear_convolve(&add_cp(&x, cp)?, &h);
        let kept = remove_cp(&through[..n + cp], cp)?;
        let circ = circular_convolve(&x, &h);
        let err = kept.iter().zip(circ.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        out.cp = out.cp.max(err);

        let bits = random_bits(2 * n, &mut rng);
        let decoded = qpsk_demodulate_hard(&qpsk_modulate(&bits)?);
        out.qpsk_bit_errors += bits.iter().zip(&decoded).filter(|(a, b)| a != b).count();
        out.qpsk_bit_errors += bits.len().abs_diff(decoded.len());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AwgnPoint {
    pub ebn0_db: f64,
    pub n_bits: u64,
    pub n_errors: u64,
    pub expected: f64,
    /// |measured - expected| in binomial standard deviations of the expected rate.
    pub z: f64,
}

/// Perfect-CSI QPSK over `h = [1]` at each Eb/N0.
pub fn awgn_calibration(ebn0_db: &[f64], min_bits: u64, seed: u64) -> Result<Vec<AwgnPoint>> {
    let frame = FrameConfig::default();
    let n_frames = min_bits.div_ceil(frame.bits_per_frame() as u64);
    ebn0_db
        .iter()
        .map(|&e| {
            let c = count_errors(
                &PerfectCsiDetector,
                &frame,
                &ChannelSource::flat(),
                ebn0_to_snr_db(e),
                n_frames,
                seed,
                8,
            )?;
            let expected = qpsk_awgn_ber(e);
            let sd = (expected * (1.0 - expected) / c.n_bits as f64).sqrt();
            let measured = c.n_errors as f64 / c.n_bits as f64;
            Ok(AwgnPoint {
                ebn0_db: e,
                n_bits: c.n_bits,
                n_errors: c.n_errors,
                expected,
                z: (measured - expected).abs() / sd,
            })
        })
        .collect()
}

/// Finite-difference check of backpropagation on the full-size network.
pub fn full_network_gradient_check(n_coords: usize, batch: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = derived_rng(seed, &[0x6C]);
    let mlp: Mlp<f64> = init_params(&layer_specs(&DEFAULT_DIMS), &mut rng)?;
    let x = Array2::from_shape_simple_fn((batch, DEFAULT_DIMS[0]), || rng.random_range(-1.5..1.5));
    let t = Array2::from_shape_simple_fn((batch, DEFAULT_DIMS[4]), || (rng.random::<bool>()) as u8 as f64);
    gradient_check(&mlp, x.view(), t.view(), n_coords, &mut rng)
}

/// Noise-free, full-pilot links must be decoded perfectly by LS and perfect CSI.
pub fn noiseless_exactness(n_frames: u64, seed: u64) -> Result<u64> {
    let frame = FrameConfig::default();
    let channel = ChannelSource::Draw(Default::default());
    let ls = count_errors(&LsDetector::new(&frame), &frame, &channel, f64::INFINITY, n_frames, seed, 4)?;
    let pc = count_errors(&PerfectCsiDetector, &frame, &channel, f64::INFINITY, n_frames, seed, 4)?;
    Ok(ls.n_errors + pc.n_errors)
}

/// Counts are identical however the frames are split across workers.
pub fn shard_independence(n_frames: u64, seed: u64) -> Result<bool> {
    let frame = FrameConfig::default();
    let res = Resources::default();
    let det = res.detector(Detector::Ls, &frame, 10.0)?;
    let channel = ChannelSource::Draw(Default::default());
    let counts = [1, 4, 16]
        .iter()
        .map(|&s| count_errors(det.as_ref(), &frame, &channel, 10.0, n_frames, seed, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(counts.windows(2).all(|w| w[0] == w[1]))
}

/// Runs every suite. `quick` trims sample sizes to a few seconds in total.
pub fn run_all(quick: bool, seed: u64) -> Result<Vec<Check>> {
    let scale = if quick { 10 } else { 1 };
    let mut checks = Vec::new();

    let id = identity_errors(1000 / scale, seed)?;
    checks.push(Check::new("dft unitarity", id.dft < 1e-9, format!("max error {:.2e}", id.dft)));
    checks.push(Check::new("cyclic prefix equivalence", id.cp < 1e-9, format!("max error {:.2e}", id.cp)));
    checks.push(Check::new("qpsk round trip", id.qpsk_bit_errors == 0, format!("{} bit errors", id.qpsk_bit_errors)));

    for p in awgn_calibration(&[0.0, 4.0, 8.0], 1_000_000 / scale as u64, seed)? {
        checks.push(Check::new(
            &format!("awgn ber at Eb/N0 {} dB", p.ebn0_db),
            p.z <= 3.0,
            format!("{} errors in {} bits, expected {:.4e}, {:.2} sd", p.n_errors, p.n_bits, p.expected, p.z),
        ));
    }

    let g = full_network_gradient_check(200 / scale, 4, seed)?;
    checks.push(Check::new(
        "backpropagation vs finite differences",
        g.max_rel_error < 1e-5,
        format!("max relative error {:.2e} over {} coordinates", g.max_rel_error, g.n_coords),
    ));

    let errs = noiseless_exactness(800 / scale as u64, seed)?;
    checks.push(Check::new("noiseless detection", errs == 0, format!("{errs} bit errors")));

    let same = shard_independence(400 / scale as u64, seed)?;
    checks.push(Check::new("shard independence", same, String::new()));
    Ok(checks)
}
