use std::path::PathBuf;
use std::process::Command;

use tumor_branching::cli;

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
        .display()
        .to_string()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tumorbp"))
}

#[test]
fn kappa0_single_type() {
    let out = cli::run(["tumorbp", "kappa0", "--config", &fixture("single.toml")]);
    assert_eq!(out.exit, 0, "{}", out.summary);
    assert!(out.summary.contains("kappa0=0.5 subcritical"));
    assert!(out.summary.contains("# [model]"));
}

#[test]
fn m3_kappa0_and_certificates() {
    let out = cli::run(["tumorbp", "kappa0", "--config", &fixture("m3.toml")]);
    assert!(out.summary.contains("kappa0=1.8 supercritical"), "{}", out.summary);
    let out = cli::run(["tumorbp", "certify", "--config", &fixture("m3.toml")]);
    assert_eq!(out.exit, 0);
    assert!(out.summary.contains("K3.lyapunov.q.verdict=fail"));
    assert!(out.summary.contains("K3.lyapunov.q.offending=2 3"));
}

#[test]
fn gompertz_certify_routes() {
    let out = cli::run(["tumorbp", "certify", "--config", &fixture("gompertz_sub.toml")]);
    assert_eq!(out.exit, 0);
    for key in [
        "overall.lyapunov.q=pass",
        "K60.birth_death.a_monotone=pass",
        "K60.birth_death.b_ratio_limit=pass",
        "K60.birth_death.c_reciprocal_sum=fail",
    ] {
        assert!(out.summary.contains(key), "missing {key}");
    }
}

#[test]
fn simulate_is_deterministic_and_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let st = bin()
            .args([
                "simulate",
                "--config",
                &fixture("gompertz_super.toml"),
                "--replicas",
                "8",
                "--out",
            ])
            .arg(&out)
            .output()
            .unwrap();
        assert!(st.status.success());
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["trajectory.csv", "stats.csv"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap());
    }
    let stats = std::fs::read_to_string(a.join("stats.csv")).unwrap();
    assert!(stats.contains("# replicas = 8"));
    assert!(stats
        .lines()
        .any(|l| l == "time,survivors,mean_log_growth,ci_lo,ci_hi,tv_to_nu"));
    let traj = std::fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert!(traj.lines().any(|l| l == "replica,time,type,count"));
}

#[test]
fn seed_override_changes_trajectories() {
    let args = |seed: &str| {
        cli::run([
            "tumorbp",
            "simulate",
            "--config",
            &fixture("gompertz_super.toml"),
            "--replicas",
            "4",
            "--seed",
            seed,
        ])
        .summary
    };
    let body = |s: String| {
        s.lines()
            .filter(|l| !l.starts_with('#'))
            .map(String::from)
            .collect::<Vec<_>>()
    };
    assert_eq!(body(args("1")), body(args("1")));
    assert_ne!(body(args("1")), body(args("2")));
}

#[test]
fn zero_horizon_emits_initial_snapshot() {
    let out = cli::run([
        "tumorbp",
        "simulate",
        "--config",
        &fixture("single.toml"),
        "--replicas",
        "1",
        "--horizon",
        "0",
    ]);
    assert_eq!(out.exit, 0, "{}", out.summary);
    let lines: Vec<&str> = out.summary.lines().collect();
    let h = lines.iter().position(|l| *l == "replica,time,type,count").unwrap();
    assert_eq!(lines[h + 1], "0,0,1,1");
}

#[test]
fn spectrum_csv_schema() {
    let out = cli::run(["tumorbp", "spectrum", "--config", &fixture("m3.toml")]);
    assert_eq!(out.exit, 0);
    assert!(out
        .summary
        .contains("K,lambda_star,residual_left,residual_right,x,nu_x,mu_x\n3,0.404046996464,"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "[model]\nbuilder = \"single\"\ndeath = 1\n[beta]\nfamily = \"constant\"\nkappa = 1\n[run]\nhorizn = 3\n",
    )
    .unwrap();
    let out = bin().args(["kappa0", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizn"));
    assert_eq!(bin().arg("kappa0").status().unwrap().code(), Some(2));
    assert_eq!(
        bin()
            .args(["kappa0", "--config", "/nonexistent.toml"])
            .status()
            .unwrap()
            .code(),
        Some(2)
    );
    assert_eq!(bin().arg("frobnicate").status().unwrap().code(), Some(2));
    assert_eq!(
        bin().args(["verify", "--criteria", "0"]).status().unwrap().code(),
        Some(2)
    );
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("q.txt"), "1 2 1\n2 1 1\n").unwrap();
    let cfg = dir.path().join("q.toml");
    std::fs::write(
        &cfg,
        "[model]\nbuilder = \"triples\"\npath = \"q.txt\"\n[beta]\nfamily = \"constant\"\nkappa = 1\n",
    )
    .unwrap();
    // conservative chain: no absorption, the Green solve is singular
    let out = bin().args(["kappa0", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_subset_passes() {
    let out = bin().args(["verify", "--criteria", "2,7"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("criterion  2 PASS"));
    assert!(text.contains("criterion  7 PASS"));
}

#[test]
fn help_lists_defaults() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("numerics.tol"));
}
