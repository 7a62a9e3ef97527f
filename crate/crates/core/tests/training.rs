use deepofdm::channel::ChannelSource;
use deepofdm::experiments::{count_errors, DnnDetector};
use deepofdm::neuralnet::TrainConfig;
use deepofdm::receiver::{
    detect_bits, generate_training_stream_on, simulate_frame_from, train_receiver_on, ReceiverArch, ScenarioConfig,
    TrainSnr,
};
use deepofdm::rng::derived_rng;

fn degenerate() -> ScenarioConfig {
    ScenarioConfig {
        id: "noiseless-flat".into(),
        train_snr: TrainSnr::Fixed { snr_db: f64::INFINITY },
        ..Default::default()
    }
}

#[test]
fn noiseless_flat_channel_is_learned_exactly() {
    let sc = degenerate();
    let flat = ChannelSource::flat();
    let cfg = TrainConfig { n_steps: 2_000, batch_size: 64, seed: 3, ..TrainConfig::default() };
    let (rx, reports) = train_receiver_on(&sc, &flat, &ReceiverArch { hidden: vec![32] }, &cfg, None).unwrap();
    for r in &reports {
        assert!(r.final_loss < r.initial_loss, "{r:?}");
    }

    let c = count_errors(&DnnDetector { receiver: &rx }, &sc.frame, &flat, f64::INFINITY, 10_000, 77, 4).unwrap();
    let ber = c.n_errors as f64 / c.n_bits as f64;
    assert!(ber < 1e-3, "held-out BER {ber}");

    for i in 0..1_000u64 {
        let sim = simulate_frame_from(&sc.frame, &flat, f64::INFINITY, &mut derived_rng(5, &[i])).unwrap();
        assert_eq!(detect_bits(&rx, &sim.received.pilot, &sim.received.data).unwrap(), sim.bits);
    }
}

#[test]
fn flat_noiseless_stream_carries_its_labels() {
    let mut stream = generate_training_stream_on(&degenerate(), &ChannelSource::flat(), 1).unwrap();
    for _ in 0..50 {
        let s = stream.next().unwrap();
        let data = &s.features[128..];
        for k in 0..64 {
            assert_eq!((data[k] < 0.0) as u8, s.bits[2 * k]);
            assert_eq!((data[64 + k] < 0.0) as u8, s.bits[2 * k + 1]);
        }
    }
}
