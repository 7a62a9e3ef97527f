use deepofdm::channel::{circular_convolve, frequency_response, linear_convolve, ChannelRealization};
use deepofdm::estimators::interpolate_linear;
use deepofdm::experiments::{parse_csv, to_csv, BerPoint, Detector};
use deepofdm::receiver::{featurize, unfeaturize};
use deepofdm::signal::{add_cp, clip_signal, dft, idft, qpsk_demodulate_hard, qpsk_modulate, remove_cp, ClipConfig};
use num_complex::Complex64;
use proptest::prelude::*;

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64).prop_map(|(a, b)| Complex64::new(a, b)), n)
}

fn block_and_taps() -> impl Strategy<Value = (Vec<Complex64>, Vec<Complex64>)> {
    (4usize..96).prop_flat_map(|n| (complex_vec(n), (1usize..=n / 2).prop_flat_map(complex_vec)))
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn qpsk_round_trip(bits in prop::collection::vec(0u8..2, 0..64).prop_map(|mut v| { if v.len() % 2 == 1 { v.pop(); } v })) {
        let symbols = qpsk_modulate(&bits).unwrap();
        prop_assert!(symbols.iter().all(|s| (s.norm() - 1.0).abs() < 1e-12));
        prop_assert_eq!(qpsk_demodulate_hard(&symbols), bits);
    }

    #[test]
    fn dft_is_unitary(x in (1usize..130).prop_flat_map(complex_vec)) {
        let f = dft(&x, x.len()).unwrap();
        let e = |v: &[Complex64]| v.iter().map(|c| c.norm_sqr()).sum::<f64>();
        prop_assert!((e(&f) - e(&x)).abs() <= 1e-9 * e(&x).max(1.0));
        prop_assert!(max_diff(&idft(&f), &x) < 1e-9);
    }

    #[test]
    fn prefix_turns_linear_into_circular((x, taps) in block_and_taps()) {
        let h = ChannelRealization::new(taps);
        let cp = h.max_delay();
        let n = x.len();
        let rx = linear_convolve(&add_cp(&x, cp).unwrap(), &h);
        let kept = remove_cp(&rx[..n + cp], cp).unwrap();
        prop_assert!(max_diff(&kept, &circular_convolve(&x, &h)) < 1e-9);
    }

    #[test]
    fn convolution_theorem((x, taps) in block_and_taps()) {
        let h = ChannelRealization::new(taps);
        let n = x.len();
        let y = dft(&circular_convolve(&x, &h), n).unwrap();
        let xf = dft(&x, n).unwrap();
        let hf = frequency_response(&h, n).unwrap();
        let prod: Vec<_> = xf.iter().zip(hf.iter()).map(|(a, b)| a * b).collect();
        prop_assert!(max_diff(&y, &prod) < 1e-9);
    }

    #[test]
    fn clipping_bounds_magnitude_and_keeps_phase(x in complex_vec(64), cr in 0.2..4.0f64) {
        let clip = ClipConfig::with_ratio(cr);
        let y = clip_signal(&x, &clip);
        for (a, b) in x.iter().zip(y.iter()) {
            prop_assert!(b.norm() <= cr + 1e-12);
            if a.norm() > 1e-9 {
                prop_assert!((a / a.norm() - b / b.norm()).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn featurize_is_invertible(p in complex_vec(64), d in complex_vec(64)) {
        let f = featurize(&p, &d).unwrap();
        prop_assert_eq!(f.len(), 256);
        let (p2, d2) = unfeaturize(&f).unwrap();
        prop_assert_eq!(p2, p);
        prop_assert_eq!(d2, d);
    }

    #[test]
    fn interpolation_hits_the_pilots(step in 1usize..16, values in complex_vec(64)) {
        let idx: Vec<usize> = (0..64).step_by(step).collect();
        let vals = &values[..idx.len()];
        let full = interpolate_linear(&idx, vals, 64).unwrap();
        for (&k, v) in idx.iter().zip(vals) {
            prop_assert!((full[k] - v).norm() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec((0usize..4, -10.0..40.0f64, 1u64..10_000_000, 0.0..1.0f64, any::<u64>()), 0..20)) {
        let pts: Vec<BerPoint> = rows
            .into_iter()
            .map(|(d, snr, bits, frac, seed)| BerPoint {
                scenario_id: "prop".into(),
                detector: Detector::ALL[d],
                snr_db: snr,
                n_bits: bits,
                n_errors: (bits as f64 * frac) as u64,
                seed,
            })
            .collect();
        prop_assert_eq!(parse_csv(&to_csv(&pts)).unwrap(), pts);
    }
}
