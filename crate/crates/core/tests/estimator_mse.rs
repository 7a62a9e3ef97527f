use deepofdm::channel::{frequency_response, ChannelConfig};
use deepofdm::estimators::{estimate_correlation_stats, ls_estimate, MmseFilter, PilotPattern};
use deepofdm::receiver::simulate_frame;
use deepofdm::rng::{derived_rng, rng_from_seed};
use deepofdm::signal::FrameConfig;

#[test]
fn lmmse_never_worse_than_ls_with_full_pilots() {
    let frame = FrameConfig::default();
    let ch = ChannelConfig::default();
    let pattern = PilotPattern::for_frame(&frame);
    let stats = estimate_correlation_stats(&ch, &pattern, 64, 20_000, &mut rng_from_seed(10)).unwrap();
    for snr in [5.0, 10.0, 15.0, 20.0] {
        let filter = MmseFilter::new(&stats, snr).unwrap();
        let (mut ls, mut mmse) = (0.0, 0.0);
        for i in 0..10_000u64 {
            let sim = simulate_frame(&frame, &ch, snr, &mut derived_rng(11, &[i])).unwrap();
            let truth = frequency_response(&sim.channel, 64).unwrap();
            let at_pilots = ls_estimate(&sim.received.pilot, &pattern);
            let h_mmse = filter.apply(&at_pilots);
            for k in 0..64 {
                ls += (at_pilots[k] - truth[k]).norm_sqr();
                mmse += (h_mmse[k] - truth[k]).norm_sqr();
            }
        }
        let n = 10_000.0 * 64.0;
        let sigma2 = 10f64.powf(-snr / 10.0);
        assert!(mmse <= ls, "snr {snr}: mmse {} ls {}", mmse / n, ls / n);
        assert!((ls / n / sigma2 - 1.0).abs() < 0.02, "LS MSE should equal the noise variance");
    }
}
