use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepofdm")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn exit_codes_and_csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("ok.toml"), "id = \"cli\"\nmin_bits = 10000\nsnr_grid = [10.0, 20.0]\nstats_draws = 10000\n")
        .unwrap();
    std::fs::write(d.join("bad.toml"), "n_pilots = 65\n").unwrap();
    std::fs::write(d.join("typo.toml"), "n_subcarrier = 64\n").unwrap();

    assert_eq!(code(&run(d, &["stats", "--config", "bad.toml"])), 2);
    assert_eq!(code(&run(d, &["stats", "--config", "typo.toml"])), 2);
    assert_eq!(code(&run(d, &["stats", "--config", "missing.toml"])), 2);
    assert_eq!(code(&run(d, &["sweep", "--config", "ok.toml", "--detectors", "ls,zf"])), 2);

    // mmse without a stats cache, dnn without a bundle
    assert_eq!(code(&run(d, &["eval", "--config", "ok.toml", "--snr", "10", "--detectors", "mmse"])), 3);
    assert_eq!(code(&run(d, &["eval", "--config", "ok.toml", "--snr", "10", "--detectors", "dnn"])), 3);
    assert_eq!(code(&run(d, &["robustness", "--config", "ok.toml"])), 3);
    assert_eq!(code(&run(d, &["report"])), 3);

    assert_eq!(code(&run(d, &["stats", "--config", "ok.toml"])), 0);
    let sweep = run(d, &["--jobs", "2", "sweep", "--config", "ok.toml", "--detectors", "ls,mmse"]);
    assert_eq!(code(&sweep), 0, "{}", String::from_utf8_lossy(&sweep.stderr));
    let csv = std::fs::read_to_string(d.join("out/results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("scenario_id,detector,snr_db,n_bits,n_errors,ber,seed"));
    assert_eq!(lines.count(), 4);

    assert_eq!(code(&run(d, &["report"])), 0);
    assert!(d.join("out/report/cli.svg").exists());
    assert!(d.join("out/report/summary.txt").exists());

    // singular LMMSE system at infinite SNR is a numeric failure
    assert_eq!(code(&run(d, &["eval", "--config", "ok.toml", "--snr", "inf", "--detectors", "mmse"])), 4);
}

#[test]
fn selftest_quick_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["selftest", "--quick"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().filter(|l| l.starts_with("pass")).count(), 9);
}
