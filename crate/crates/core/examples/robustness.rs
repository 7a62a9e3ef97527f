//! A receiver trained on one channel profile, tested on channels with more or
//! fewer paths and shorter or longer delay spreads.
//!
//! cargo run --release --example robustness -- --receiver target/receivers/<bundle>

use std::path::PathBuf;

use clap::Parser;
use deepofdm::experiments::{default_variations, run_robustness_grid};
use deepofdm::receiver::load_bundle;

#[derive(Parser)]
struct Args {
    #[arg(long)]
    receiver: PathBuf,
    #[arg(long, default_value_t = 200_000)]
    min_bits: u64,
}

fn main() -> deepofdm::Result<()> {
    let args = Args::parse();
    let (rx, manifest) = load_bundle(&args.receiver)?;
    let base = manifest.scenario;
    let report =
        run_robustness_grid(&base, &default_variations(&base.channel), &rx, &[10.0, 15.0, 20.0], args.min_bits, 3)?;
    let matched = report.cells.iter().find(|c| c.channel == base.channel).expect("grid holds the training channel");
    println!("{:32} {:>10} {:>10}", "test channel", "BER 15 dB", "vs matched");
    for (id, factor) in report.degradation(&matched.scenario_id, 15.0) {
        let p = report.points.iter().find(|p| p.scenario_id == id && p.snr_db == 15.0).expect("point");
        println!("{id:32} {:>10.3e} {:>10.2}", p.ber(), factor);
    }
    Ok(())
}
