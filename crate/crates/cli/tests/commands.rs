use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nvch(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvch"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn check_on_defaults_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = nvch(dir.path(), &["check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    for tag in [
        "energy-identity",
        "mass-identity",
        "interpolant-identity",
        "mu-positivity",
        "rho-interiority",
        "dense-oracle",
    ] {
        assert!(out.contains(tag), "missing {tag} in\n{out}");
    }
    assert!(!out.contains("FAILED"));
}

#[test]
fn run_with_zero_final_time_writes_one_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.txt"), "time.final = 0\n").unwrap();
    let o = nvch(dir.path(), &["run", "c.txt", "--out", "o", "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    let mut snaps: Vec<_> = fs::read_dir(dir.path().join("o/snapshots"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    snaps.sort();
    assert_eq!(snaps, ["mu_000000.txt", "rho_000000.txt"]);
    let steps = fs::read_to_string(dir.path().join("o/steps.csv")).unwrap();
    assert_eq!(steps.lines().count(), 1);
}

#[test]
fn run_outputs_are_complete_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "grid.cells = 32\ntime.final = 0.05\ntime.tau = 0.005\noutput.dir = a\n";
    fs::write(dir.path().join("c.txt"), cfg).unwrap();
    let first = nvch(dir.path(), &["run", "c.txt"]);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let second = nvch(dir.path(), &["run", "c.txt", "--out", "b", "--quiet"]);
    assert_eq!(second.status.code(), Some(0));

    let a = dir.path().join("a");
    let steps = fs::read_to_string(a.join("steps.csv")).unwrap();
    assert_eq!(steps.lines().next().unwrap(), nvch::io::STEPS_HEADER);
    assert_eq!(steps.lines().count(), 11);
    let diag = fs::read_to_string(a.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().next().unwrap(), nvch::io::DIAGNOSTICS_HEADER);
    assert_eq!(diag.lines().count(), 12);
    assert_eq!(fs::read_dir(a.join("snapshots")).unwrap().count(), 22);

    for name in ["steps.csv", "diagnostics.csv", "snapshots/rho_000010.txt"] {
        let x = fs::read(a.join(name)).unwrap();
        let y = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between runs");
    }

    // the final snapshot restarts a run
    let restart = "grid.cells = 32\ntime.final = 0.01\ntime.tau = 0.005\ninit.preset = snapshot\n\
         init.mu_file = a/snapshots/mu_000010.txt\ninit.rho_file = a/snapshots/rho_000010.txt\n";
    fs::write(dir.path().join("r.txt"), restart).unwrap();
    let o = nvch(dir.path(), &["run", "r.txt", "--out", "r", "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn store_stride_thins_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "grid.cells = 16\ntime.final = 0.05\ntime.tau = 0.005\noutput.store_every = 4\n";
    fs::write(dir.path().join("c.txt"), cfg).unwrap();
    let o = nvch(dir.path(), &["run", "c.txt", "--out", "o", "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // steps 0, 4, 8 and the final step 10
    assert_eq!(
        fs::read_dir(dir.path().join("o/snapshots"))
            .unwrap()
            .count(),
        8
    );
    assert!(!dir.path().join("o/diagnostics.csv").exists());
}

#[test]
fn converge_reports_rates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "grid.cells = 32\ntime.ladder = 8, 16, 32\ntime.reference_steps = 256\n";
    fs::write(dir.path().join("c.txt"), cfg).unwrap();
    let o = nvch(dir.path(), &["converge", "c.txt", "--out", "o"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("rate"));
    let csv = fs::read_to_string(dir.path().join("o/convergence.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), nvch::io::ERROR_REPORT_HEADER);
    let totals: Vec<f64> = lines
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(totals.len(), 3);
    assert!(totals.windows(2).all(|w| w[1] < w[0]));
}

fn assert_failure(o: &Output, code: i32, tag: &str) {
    assert_eq!(o.status.code(), Some(code), "{}", stderr(o));
    let err = stderr(o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error[{tag}]: ")), "{err}");
}

#[test]
fn non_nested_ladder_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.txt"), "time.ladder = 16, 24\n").unwrap();
    let o = nvch(dir.path(), &["converge", "c.txt"]);
    assert_failure(&o, 2, "ladder-not-nested");
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("time.tau = 0.6\n", "inadmissible-step"),
        ("init.rho_amp = 0.6\n", "invalid-initial-data"),
        ("grid.cell = 3\n", "unknown-key"),
        ("time.tau = 0.5\n", "not-divisible"),
        (
            "init.preset = snapshot\ninit.mu_file = nope\ninit.rho_file = nope\n",
            "io-error",
        ),
    ];
    for (text, tag) in cases {
        fs::write(dir.path().join("c.txt"), text).unwrap();
        let o = nvch(dir.path(), &["run", "c.txt", "--quiet"]);
        assert_failure(&o, 2, tag);
    }
    let o = nvch(dir.path(), &["run", "missing.txt"]);
    assert_failure(&o, 2, "io-error");
}

#[test]
fn snapshot_on_wrong_grid_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.txt"), "grid.cells = 8\ntime.final = 0\n").unwrap();
    assert_eq!(
        nvch(dir.path(), &["run", "c.txt", "--out", "o"])
            .status
            .code(),
        Some(0)
    );
    let cfg = "grid.cells = 16\ninit.preset = snapshot\n\
               init.mu_file = o/snapshots/mu_000000.txt\ninit.rho_file = o/snapshots/rho_000000.txt\n";
    fs::write(dir.path().join("r.txt"), cfg).unwrap();
    assert_failure(&nvch(dir.path(), &["run", "r.txt"]), 2, "grid-mismatch");
}

#[test]
fn numerical_failure_exits_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "grid.cells = 16\ntime.final = 0.01\ntime.tau = 0.005\nsolver.cg_max_iters = 1\n";
    fs::write(dir.path().join("c.txt"), cfg).unwrap();
    let o = nvch(dir.path(), &["run", "c.txt", "--out", "o"]);
    assert_failure(&o, 1, "cg-not-converged");
    // the initial state is still written
    assert!(dir.path().join("o/snapshots/rho_000000.txt").exists());
}
