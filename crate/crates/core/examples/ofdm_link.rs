//! One frame end to end: bits, QPSK, IDFT and cyclic prefix, a multipath
//! channel, noise, and back to the frequency domain.

use deepofdm::channel::{frequency_response, sample_channel, transmit_frame, ChannelConfig};
use deepofdm::rng::{random_bits, rng_from_seed};
use deepofdm::signal::{build_frame, qpsk_demodulate_hard, FrameConfig};

fn main() -> deepofdm::Result<()> {
    let cfg = FrameConfig::default();
    let mut rng = rng_from_seed(42);
    let bits = random_bits(cfg.bits_per_frame(), &mut rng);
    let frame = build_frame(&bits, &cfg, &mut rng)?;
    println!("{} subcarriers, prefix {}, {} samples on air", cfg.n_subcarriers, cfg.cp_len, frame.time_signal.len());

    let h = sample_channel(&ChannelConfig::default(), &mut rng);
    println!("channel: {} taps, energy {:.3}", h.taps.len(), h.energy());
    let big = h.taps.iter().filter(|t| t.norm() > 0.0).count();
    println!("nonzero taps: {big}");

    for snr in [f64::INFINITY, 20.0, 10.0] {
        let rx = transmit_frame(&frame, &h, snr, &cfg, &mut rng)?;
        let hk = frequency_response(&h, cfg.n_subcarriers)?;
        let equalized: Vec<_> = rx.data.iter().zip(hk.iter()).map(|(y, h)| y / h).collect();
        let decided = qpsk_demodulate_hard(&equalized);
        let errors = decided.iter().zip(&bits).filter(|(a, b)| a != b).count();
        println!("snr {snr:>5} dB: {errors:>3} of {} bits wrong with the true channel", bits.len());
    }
    Ok(())
}
