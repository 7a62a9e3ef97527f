//! Peak-to-average power of the OFDM waveform before and after clipping, and
//! what clipping does to detection with perfect channel knowledge.

use deepofdm::channel::{ChannelConfig, ChannelSource};
use deepofdm::experiments::{count_errors, PerfectCsiDetector};
use deepofdm::rng::{random_bits, rng_from_seed};
use deepofdm::signal::{build_frame, ClipConfig, FrameConfig};

fn papr_db(x: &[num_complex::Complex64]) -> f64 {
    let p: Vec<f64> = x.iter().map(|c| c.norm_sqr()).collect();
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    10.0 * (p.iter().cloned().fold(0.0, f64::max) / mean).log10()
}

fn main() -> deepofdm::Result<()> {
    let mut rng = rng_from_seed(5);
    for cr in [None, Some(2.0), Some(1.4), Some(1.0)] {
        let mut cfg = FrameConfig::default();
        if let Some(r) = cr {
            cfg = cfg.with_clip(ClipConfig::with_ratio(r));
        }
        let mut paprs: Vec<f64> = (0..2_000)
            .map(|_| {
                let bits = random_bits(cfg.bits_per_frame(), &mut rng);
                build_frame(&bits, &cfg, &mut rng).map(|f| papr_db(&f.time_signal))
            })
            .collect::<deepofdm::Result<_>>()?;
        paprs.sort_by(f64::total_cmp);
        let c =
            count_errors(&PerfectCsiDetector, &cfg, &ChannelSource::Draw(ChannelConfig::default()), 25.0, 2_000, 1, 8)?;
        println!(
            "clip ratio {:>4}: median PAPR {:>5.2} dB, 99th percentile {:>5.2} dB, BER at 25 dB {:.3e}",
            cr.map_or("none".to_string(), |r| r.to_string()),
            paprs[paprs.len() / 2],
            paprs[paprs.len() * 99 / 100],
            c.n_errors as f64 / c.n_bits as f64
        );
    }
    Ok(())
}
