//! Trains (or loads from a cache) the neural receiver for one scenario and
//! checks it against LS and LMMSE on a few thousand held-out frames.
//!
//! cargo run --release --example dnn_receiver -- --scenario pilots8 --steps 2000

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::Parser;
use deepofdm::estimators::{estimate_correlation_stats, PilotPattern};
use deepofdm::experiments::{evaluate_ber, paper_scenario, Detector, Resources};
use deepofdm::neuralnet::TrainConfig;
use deepofdm::receiver::{train_or_load, ReceiverArch};
use deepofdm::rng::rng_from_seed;

#[derive(Parser)]
struct Args {
    /// default, pilots8, no_cp, clip1 or combined.
    #[arg(long, default_value = "default")]
    scenario: String,
    #[arg(long, default_value_t = 20_000)]
    steps: usize,
    #[arg(long, default_value = "target/receivers")]
    cache: PathBuf,
    #[arg(long, default_value_t = 200_000)]
    eval_bits: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> deepofdm::Result<()> {
    let args = Args::parse();
    let scenario = paper_scenario(&args.scenario)?;
    let cfg = TrainConfig { n_steps: args.steps, seed: args.seed, ..TrainConfig::default() };
    let done = AtomicUsize::new(0);
    let total = cfg.n_steps * 8;
    let progress = |g: usize, step: usize, loss: f64| {
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        if step % 1000 == 999 {
            eprintln!("[{n}/{total}] group {g} step {} loss {loss:.4}", step + 1);
        }
    };
    let (rx, manifest) = train_or_load(&args.cache, &scenario, &ReceiverArch::default(), &cfg, Some(&progress))?;
    for r in &manifest.reports {
        println!("group {}: loss {:.4} -> {:.4}", r.group, r.initial_loss, r.final_loss);
    }

    let pattern = PilotPattern::for_frame(&scenario.frame);
    let stats = estimate_correlation_stats(&scenario.channel, &pattern, 64, 20_000, &mut rng_from_seed(args.seed))?;
    let res = Resources { stats: Some(stats), receiver: Some(rx) };
    println!("{:>6} {:>10} {:>10} {:>10}", "snr", "ls", "mmse", "dnn");
    for snr in [5.0, 10.0, 15.0, 20.0, 25.0] {
        let ber = |d| evaluate_ber(d, &res, &scenario, snr, args.eval_bits, 1).map(|p| p.ber());
        println!(
            "{snr:>6} {:>10.3e} {:>10.3e} {:>10.3e}",
            ber(Detector::Ls)?,
            ber(Detector::Mmse)?,
            ber(Detector::Dnn)?
        );
    }
    Ok(())
}
