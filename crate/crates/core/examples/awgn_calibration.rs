//! Perfect-CSI QPSK on a distortion-free channel against the closed form
//! Q(sqrt(2 Eb/N0)).

use deepofdm::selftest::awgn_calibration;

fn main() -> deepofdm::Result<()> {
    println!("{:>8} {:>12} {:>12} {:>6}", "Eb/N0", "simulated", "theory", "sd");
    for p in awgn_calibration(&[0.0, 2.0, 4.0, 6.0, 8.0], 1_000_000, 7)? {
        println!("{:>8} {:>12.4e} {:>12.4e} {:>6.2}", p.ebn0_db, p.n_errors as f64 / p.n_bits as f64, p.expected, p.z);
    }
    Ok(())
}
