//! LS and LMMSE channel estimates against the true response: mean squared
//! error per subcarrier over a batch of frames.

use deepofdm::channel::{frequency_response, ChannelConfig};
use deepofdm::estimators::{estimate_correlation_stats, ls_channel_estimate, MmseFilter, PilotPattern};
use deepofdm::receiver::simulate_frame;
use deepofdm::rng::rng_from_seed;
use deepofdm::signal::FrameConfig;

fn main() -> deepofdm::Result<()> {
    let ch = ChannelConfig::default();
    println!("{:>7} {:>6} {:>11} {:>11}", "pilots", "snr", "mse ls", "mse lmmse");
    for pilots in [64, 16, 8] {
        let frame = FrameConfig::new(64, 16, pilots)?;
        let pattern = PilotPattern::for_frame(&frame);
        let stats = estimate_correlation_stats(&ch, &pattern, 64, 20_000, &mut rng_from_seed(1))?;
        for snr in [5.0, 15.0, 25.0] {
            let filter = MmseFilter::new(&stats, snr)?;
            let mut rng = rng_from_seed(2);
            let (mut ls, mut mmse, mut count) = (0.0, 0.0, 0.0);
            for _ in 0..2_000 {
                let sim = simulate_frame(&frame, &ch, snr, &mut rng)?;
                let truth = frequency_response(&sim.channel, 64)?;
                let h_ls = ls_channel_estimate(&sim.received.pilot, &pattern, 64)?;
                let at_pilots: Vec<_> =
                    pattern.indices.iter().zip(&pattern.values).map(|(&k, x)| sim.received.pilot[k] / x).collect();
                let h_mmse = filter.apply(&at_pilots);
                for k in 0..64 {
                    ls += (h_ls[k] - truth[k]).norm_sqr();
                    mmse += (h_mmse[k] - truth[k]).norm_sqr();
                    count += 1.0;
                }
            }
            println!("{pilots:>7} {snr:>6} {:>11.3e} {:>11.3e}", ls / count, mmse / count);
        }
    }
    Ok(())
}
