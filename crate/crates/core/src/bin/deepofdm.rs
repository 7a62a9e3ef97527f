use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deepofdm::config::ExperimentConfig;
use deepofdm::estimators::{estimate_correlation_stats, CorrelationStats, PilotPattern};
use deepofdm::experiments::{
    default_variations, evaluate_ber, parse_detectors, read_results, run_robustness_grid, run_sweep, to_csv,
    write_atomic, Detector, Resources,
};
use deepofdm::receiver::{load_bundle, save_bundle, train_receiver, BundleManifest, BUNDLE_FORMAT_VERSION};
use deepofdm::report::emit_report;
use deepofdm::rng::derived_rng;
use deepofdm::{selftest, Error, Result};

#[derive(Parser)]
#[command(name = "deepofdm", about = "OFDM link simulation with LS, LMMSE and neural-network receivers")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for caches, bundles and results.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build the channel correlation cache used by the LMMSE estimator.
    Stats(Common),
    /// Train a receiver bundle for the configured scenario.
    Train(Common),
    /// Evaluate one SNR point per detector and print CSV rows.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        snr: f64,
        #[arg(long, default_value = "ls,mmse,dnn")]
        detectors: String,
    },
    /// Every detector at every SNR of the grid, appended to results.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "ls,mmse,dnn")]
        detectors: String,
    },
    /// The trained receiver on channels with other path counts and delays.
    Robustness(Common),
    /// Charts and a summary table from the result CSVs in --out.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        detectors: Option<String>,
    },
    /// Run the invariant suites.
    Selftest {
        /// Smaller sample sizes.
        #[arg(long)]
        quick: bool,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    match &c.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn stats_path(out: &Path, id: &str) -> PathBuf {
    out.join(format!("stats-{id}.json"))
}

fn bundle_dir(out: &Path, id: &str) -> PathBuf {
    out.join(format!("receiver-{id}"))
}

fn resources(cfg: &ExperimentConfig, out: &Path, detectors: &[Detector]) -> Result<Resources> {
    let id = cfg.scenario()?.id;
    let mut res = Resources::default();
    if detectors.contains(&Detector::Mmse) {
        res.stats = Some(CorrelationStats::load(&stats_path(out, &id)).map_err(|e| match e {
            Error::MissingResource(m) => Error::MissingResource(format!("{m} (run `deepofdm stats` first)")),
            e => e,
        })?);
    }
    if detectors.contains(&Detector::Dnn) {
        res.receiver = Some(load_bundle(&bundle_dir(out, &id))?.0);
    }
    Ok(res)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    match cli.command {
        Command::Stats(c) => {
            let cfg = load_config(&c)?;
            let sc = cfg.scenario()?;
            let pattern = PilotPattern::for_frame(&sc.frame);
            let mut rng = derived_rng(cfg.seed(), &[0x57A7]);
            let stats =
                estimate_correlation_stats(&sc.channel, &pattern, sc.frame.n_subcarriers, cfg.stats_draws(), &mut rng)?;
            std::fs::create_dir_all(&c.out)?;
            let path = stats_path(&c.out, &sc.id);
            stats.save(&path)?;
            println!("wrote {}", path.display());
        }
        Command::Train(c) => {
            let cfg = load_config(&c)?;
            let sc = cfg.scenario()?;
            let train = cfg.train_config()?;
            let arch = cfg.arch();
            let report_every = (train.n_steps / 10).max(1);
            let progress = |g: usize, step: usize, loss: f64| {
                if (step + 1) % report_every == 0 {
                    eprintln!("group {g} step {} loss {loss:.5}", step + 1);
                }
            };
            let (rx, reports) = train_receiver(&sc, &arch, &train, Some(&progress))?;
            let manifest = BundleManifest {
                format_version: BUNDLE_FORMAT_VERSION,
                scenario: sc.clone(),
                arch,
                train_config: train,
                reports,
                model_files: Vec::new(),
            };
            let dir = bundle_dir(&c.out, &sc.id);
            save_bundle(&dir, &rx, manifest)?;
            println!("wrote {}", dir.display());
        }
        Command::Eval { common, snr, detectors } => {
            let cfg = load_config(&common)?;
            let dets = parse_detectors(&detectors).map_err(as_config)?;
            let res = resources(&cfg, &common.out, &dets)?;
            let sc = cfg.scenario()?;
            let min_bits = cfg.sweep_spec(dets.clone())?.min_bits;
            let points = dets
                .iter()
                .map(|&d| evaluate_ber(d, &res, &sc, snr, min_bits, cfg.seed()))
                .collect::<Result<Vec<_>>>()?;
            print!("{}", to_csv(&points));
        }
        Command::Sweep { common, detectors } => {
            let cfg = load_config(&common)?;
            let dets = parse_detectors(&detectors).map_err(as_config)?;
            let spec = cfg.sweep_spec(dets.clone())?;
            let res = resources(&cfg, &common.out, &dets)?;
            let path = common.out.join("results.csv");
            let points = run_sweep(&spec, &res, &path)?;
            print!("{}", to_csv(&points));
        }
        Command::Robustness(c) => {
            let cfg = load_config(&c)?;
            let sc = cfg.scenario()?;
            let spec = cfg.sweep_spec(vec![Detector::Dnn])?;
            let rx = load_bundle(&bundle_dir(&c.out, &sc.id))?.0;
            let report = run_robustness_grid(
                &sc,
                &default_variations(&sc.channel),
                &rx,
                &spec.snr_grid,
                spec.min_bits,
                spec.seed,
            )?;
            let path = c.out.join("robustness.csv");
            write_atomic(&path, &to_csv(&report.points))?;
            let matched =
                report.cells.iter().find(|cell| cell.channel == sc.channel).map(|cell| cell.scenario_id.clone());
            for cell in &report.cells {
                let flag = if cell.exceeds_cp { "  (delay exceeds cyclic prefix)" } else { "" };
                println!("{}{flag}", cell.scenario_id);
            }
            if let (Some(m), Some(&snr)) =
                (matched, spec.snr_grid.iter().find(|&&s| s == 15.0).or(spec.snr_grid.first()))
            {
                println!("BER relative to the matched channel at {snr} dB:");
                for (id, f) in report.degradation(&m, snr) {
                    println!("  {id:32} {f:.3}");
                }
            }
            println!("wrote {}", path.display());
        }
        Command::Report { common, detectors } => {
            let dets = detectors.as_deref().map(parse_detectors).transpose().map_err(as_config)?;
            let mut points = read_results(&common.out.join("results.csv"))?;
            points.extend(read_results(&common.out.join("robustness.csv"))?);
            if points.is_empty() {
                return Err(Error::MissingResource(format!("no result CSVs in {}", common.out.display())));
            }
            for p in emit_report(&points, dets.as_deref(), &common.out.join("report"))? {
                println!("wrote {}", p.display());
            }
        }
        Command::Selftest { quick } => {
            let checks = selftest::run_all(quick, 0)?;
            let failed = checks.iter().filter(|c| !c.passed).count();
            for c in &checks {
                println!("{} {:40} {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
            }
            if failed > 0 {
                return Err(Error::Numeric(format!("{failed} self-test check(s) failed")));
            }
        }
    }
    Ok(())
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::InvalidConfig(m),
        e => e,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
