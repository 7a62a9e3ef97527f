//! A resumable BER sweep written to CSV, then rendered to SVG charts.
//! LS, LMMSE and perfect CSI only; add a trained bundle with --receiver.
//!
//! cargo run --release --example ber_sweep -- --scenario pilots8 --out target/sweep

use std::path::PathBuf;

use clap::Parser;
use deepofdm::estimators::{estimate_correlation_stats, PilotPattern};
use deepofdm::experiments::{paper_scenario, run_sweep, Detector, Resources, SweepSpec};
use deepofdm::receiver::load_bundle;
use deepofdm::report::{emit_report, summary_table};
use deepofdm::rng::rng_from_seed;

#[derive(Parser)]
struct Args {
    #[arg(long, default_value = "default")]
    scenario: String,
    #[arg(long, default_value = "target/sweep")]
    out: PathBuf,
    #[arg(long, default_value_t = 200_000)]
    min_bits: u64,
    /// Receiver bundle directory; enables the dnn detector.
    #[arg(long)]
    receiver: Option<PathBuf>,
}

fn main() -> deepofdm::Result<()> {
    let args = Args::parse();
    let scenario = paper_scenario(&args.scenario)?;
    let pattern = PilotPattern::for_frame(&scenario.frame);
    let stats = estimate_correlation_stats(&scenario.channel, &pattern, 64, 20_000, &mut rng_from_seed(0))?;
    let mut detectors = vec![Detector::Ls, Detector::Mmse, Detector::PerfectCsi];
    let receiver = match &args.receiver {
        Some(dir) => {
            detectors.insert(2, Detector::Dnn);
            Some(load_bundle(dir)?.0)
        }
        None => None,
    };
    let resources = Resources { stats: Some(stats), receiver };
    let mut spec = SweepSpec::new(scenario, detectors, 1);
    spec.min_bits = args.min_bits;
    let points = run_sweep(&spec, &resources, &args.out.join("results.csv"))?;
    print!("{}", summary_table(&points));
    for f in emit_report(&points, None, &args.out)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}
