//! `tumorbp` subcommands.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::acceptance;
use crate::branching::{critical_kappa, Criticality};
use crate::certificates::{check_bd_conditions, check_doeblin, check_lyapunov, KeyValue};
use crate::config::{ExperimentConfig, ModelSpec, Overrides, DEFAULTS_HELP};
use crate::error::{Error, Result};
use crate::fmt_sig;
use crate::simulator::{run_ensemble, survival_stats, write_stats_csv, write_trajectory_csv, Outcome, RNG_FAMILY};
use crate::spectral::{perron_triple, truncation_sweep, MatrixKind, TRIPLE_CSV_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICS: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "tumorbp",
    version,
    about = "Branching particle systems driven by an absorbed Markov chain",
    after_help = DEFAULTS_HELP
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Directory for output files; without it CSVs go to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides run.replicas.
    #[arg(long, global = true, value_name = "N")]
    pub replicas: Option<usize>,
    /// Overrides run.horizon.
    #[arg(long, global = true, value_name = "T")]
    pub horizon: Option<f64>,
    /// Overrides model.k and numerics.k_list.
    #[arg(long, global = true, value_name = "K")]
    pub truncation: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// κ₀ by the Green solve and by quadrature, with the criticality verdict.
    Kappa0,
    /// Lyapunov, Doeblin and birth–death certificates at K and 2K.
    Certify,
    /// Perron triples over numerics.k_list.
    Spectrum,
    /// Yaglom limit of the driving chain against its Perron vector.
    Yaglom,
    /// Monte Carlo ensemble with trajectory and statistics CSVs.
    Simulate,
    /// Runs the acceptance criteria.
    Verify {
        /// Comma-separated criterion numbers; all by default.
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        criteria: Vec<usize>,
    },
}

/// Text written to stdout plus named files for `--out`.
#[derive(Debug, Default)]
pub struct Output {
    pub summary: String,
    pub files: Vec<(String, String)>,
    pub exit: i32,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::Io(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICS,
    }
}

/// Parses `args` and runs the command; usage errors map to exit code 2.
pub fn run<I, T>(args: I) -> Output
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let exit = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            return Output {
                summary: e.to_string(),
                files: Vec::new(),
                exit,
            };
        }
    };
    match execute(&cli) {
        Ok(o) => o,
        Err(e) => Output {
            summary: format!("error: {e}\n"),
            files: Vec::new(),
            exit: exit_code(&e),
        },
    }
}

/// Writes `files` under `--out`, or appends them to the summary.
pub fn emit(cli_out: Option<&PathBuf>, output: &mut Output) -> Result<()> {
    match cli_out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for (name, body) in &output.files {
                std::fs::write(dir.join(name), body)?;
            }
        }
        None => {
            for (name, body) in &output.files {
                if *body == output.summary {
                    continue;
                }
                let _ = writeln!(output.summary, "\n# file: {name}");
                output.summary.push_str(body);
            }
        }
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<Output> {
    if let Command::Verify { criteria } = &cli.command {
        return Ok(verify(criteria));
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config PATH is required for this command".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply_overrides(&Overrides {
        seed: cli.seed,
        replicas: cli.replicas,
        horizon: cli.horizon,
        truncation: cli.truncation,
    })?;
    let mut out = match cli.command {
        Command::Kappa0 => kappa0(&cfg)?,
        Command::Certify => certify(&cfg)?,
        Command::Spectrum => spectrum(&cfg)?,
        Command::Yaglom => yaglom(&cfg)?,
        Command::Simulate => simulate(&cfg)?,
        Command::Verify { .. } => unreachable!(),
    };
    emit(cli.out.as_ref(), &mut out)?;
    Ok(out)
}

fn header(cfg: &ExperimentConfig, command: &str) -> String {
    format!(
        "# tumorbp {} {command}\n# resolved config:\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.echo()
    )
}

fn kappa0(cfg: &ExperimentConfig) -> Result<Output> {
    let model = cfg.build_model()?;
    let k = model.kappa0(cfg.numerics.tol)?;
    let verdict = Criticality::classify(k.green);
    let mut s = header(cfg, "kappa0");
    let _ = writeln!(s, "kappa0_green={}", fmt_sig(k.green));
    let _ = writeln!(s, "kappa0_quadrature={}", fmt_sig(k.quadrature));
    let _ = writeln!(s, "quadrature_error_bound={}", fmt_sig(k.quadrature_error));
    let _ = writeln!(s, "quadrature_horizon={}", fmt_sig(k.horizon));
    let _ = writeln!(s, "beta={}", model.beta_spec().map_or("table".into(), |b| b.describe()));
    let _ = writeln!(s, "verdict={verdict}");
    if cfg.numerics.kappa_star {
        let ks = critical_kappa(|c| cfg.build_model_with_kappa(c), 1e-12)?;
        let _ = writeln!(s, "kappa_star={}", fmt_sig(ks));
    }
    let _ = writeln!(s, "kappa0={} {verdict}", fmt_sig(k.green));
    Ok(Output {
        files: vec![("kappa0.txt".into(), s.clone())],
        summary: s,
        exit: EXIT_OK,
    })
}

/// Rows whose rates were folded at the truncation boundary.
fn folded_rows(model: &crate::BranchingModel) -> Vec<usize> {
    let q = model.rates();
    (1..=q.size()).filter(|&x| q.tail_rate(x) > 0.0).collect()
}

fn certify(cfg: &ExperimentConfig) -> Result<Output> {
    let k = cfg.build_rates()?.size();
    let doubled = matches!(cfg.model, ModelSpec::Gompertz { .. });
    let sizes: Vec<usize> = if doubled { vec![k, 2 * k] } else { vec![k] };
    let mut s = header(cfg, "certify");
    let mut verdicts: Vec<(String, Vec<String>)> = Vec::new();
    let mut record = |name: &str, v: String| match verdicts.iter_mut().find(|e| e.0 == name) {
        Some(e) => e.1.push(v),
        None => verdicts.push((name.to_string(), vec![v])),
    };
    for &kk in &sizes {
        let model = if kk == k {
            cfg.build_model()?
        } else {
            cfg.build_model_at(kk)?
        };
        let mm = model.mean_rates()?;
        let v = cfg.numerics.lyapunov.values(kk);
        let excluded = folded_rows(&model);
        for (label, m) in [("q", model.rates().generator()), ("a_shift", &mm.a_shift)] {
            let c = check_lyapunov(m, &v, cfg.numerics.rho, &excluded)?;
            s.push_str(&c.to_kv(&format!("K{kk}.lyapunov.{label}.")));
            record(&format!("lyapunov.{label}"), c.verdict.to_string());
        }
        let d = check_doeblin(&mm.a_shift)?;
        s.push_str(&d.to_kv(&format!("K{kk}.doeblin.a_shift.")));
        record("doeblin.a_shift", d.verdict.to_string());
        match check_bd_conditions(model.rates()) {
            Ok(b) => {
                s.push_str(&b.to_kv(&format!("K{kk}.birth_death.")));
                record("birth_death.a", b.verdict_a.to_string());
                record("birth_death.b", b.verdict_b.to_string());
                record("birth_death.c", b.verdict_c.to_string());
            }
            Err(Error::NotBirthDeath { x, y }) => {
                let _ = writeln!(s, "K{kk}.birth_death.verdict=not_applicable");
                let _ = writeln!(s, "K{kk}.birth_death.witness={x}->{y}");
            }
            Err(Error::InvalidParameter(msg)) => {
                let _ = writeln!(s, "K{kk}.birth_death.verdict=not_applicable");
                let _ = writeln!(s, "K{kk}.birth_death.reason={msg}");
            }
            Err(e) => return Err(e),
        }
    }
    for (name, vs) in &verdicts {
        let overall = if vs.iter().all(|v| v == &vs[0]) {
            vs[0].clone()
        } else {
            "unstable".to_string()
        };
        let _ = writeln!(s, "overall.{name}={overall}");
    }
    Ok(Output {
        files: vec![("certificates.txt".into(), s.clone())],
        summary: s,
        exit: EXIT_OK,
    })
}

fn spectrum(cfg: &ExperimentConfig) -> Result<Output> {
    let n = &cfg.numerics;
    let k_list = if n.k_list.is_empty() {
        vec![cfg.build_rates()?.size()]
    } else {
        n.k_list.clone()
    };
    let single_k = !matches!(cfg.model, ModelSpec::Gompertz { .. });
    if single_k && k_list.iter().any(|&k| k != k_list[0]) {
        return Err(Error::Config(
            "numerics.k_list can only vary for gompertz models".into(),
        ));
    }
    let report = truncation_sweep(
        |k| {
            if single_k {
                cfg.build_model()
            } else {
                cfg.build_model_at(k)
            }
        },
        &k_list,
        n.matrix,
        n.tol,
        n.max_iter,
    )?;
    let mut s = header(cfg, "spectrum");
    let _ = writeln!(s, "matrix={}", matrix_name(n.matrix));
    for (i, t) in report.triples.iter().enumerate() {
        let _ = writeln!(
            s,
            "K={} lambda_star={} skeleton_growth={} mu_ratio={} upper_half_mass={} iterations={}",
            t.k,
            fmt_sig(t.lambda_star),
            fmt_sig(t.skeleton_growth()),
            fmt_sig(t.mu_ratio()),
            fmt_sig(t.upper_half_mass()),
            t.iterations
        );
        if i > 0 {
            let _ = writeln!(s, "tv_nu_successive={}", fmt_sig(report.tv_successive[i - 1]));
        }
    }
    let _ = writeln!(s, "lambda_nondecreasing={}", report.lambda_nondecreasing());
    let mut csv = header(cfg, "spectrum");
    csv.push_str(TRIPLE_CSV_HEADER);
    csv.push('\n');
    for t in &report.triples {
        let mut buf = Vec::new();
        t.write_csv(&mut buf)?;
        let body = String::from_utf8(buf).expect("ascii csv");
        csv.push_str(&body);
    }
    Ok(Output {
        summary: s,
        files: vec![("spectrum.csv".into(), csv)],
        exit: EXIT_OK,
    })
}

fn matrix_name(m: MatrixKind) -> &'static str {
    match m {
        MatrixKind::Q => "q",
        MatrixKind::A => "a",
        MatrixKind::AShift => "a_shift",
        MatrixKind::Skeleton => "skeleton",
    }
}

fn yaglom(cfg: &ExperimentConfig) -> Result<Output> {
    let q = cfg.build_rates()?;
    let n = &cfg.numerics;
    let k = q.size();
    let x0 = cfg.run.initial_type;
    if x0 > k {
        return Err(Error::Config(format!("run.initial_type {x0} exceeds k = {k}")));
    }
    let a = q.yaglom_iterate(x0, n.yaglom_dt, n.tol, n.max_iter)?;
    let b = q.yaglom_iterate(k, n.yaglom_dt, n.tol, n.max_iter)?;
    let nu = perron_triple(q.generator(), n.tol, n.max_iter)?;
    let dev = a
        .distribution
        .weights
        .iter()
        .zip(&nu.nu)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let mut s = header(cfg, "yaglom");
    let _ = writeln!(s, "start={x0} steps={} last_change={}", a.steps, fmt_sig(a.last_change));
    let _ = writeln!(s, "start={k} steps={} last_change={}", b.steps, fmt_sig(b.last_change));
    let _ = writeln!(s, "tv_between_starts={}", fmt_sig(a.distribution.tv(&b.distribution)));
    let _ = writeln!(s, "max_abs_deviation_from_nu={}", fmt_sig(dev));
    let _ = writeln!(s, "decay_rate={}", fmt_sig(-nu.lambda_star));
    let mut csv = header(cfg, "yaglom");
    csv.push_str("x,yaglom,nu_x\n");
    for x in 0..k {
        let _ = writeln!(
            csv,
            "{},{},{}",
            x + 1,
            fmt_sig(a.distribution.weights[x]),
            fmt_sig(nu.nu[x])
        );
    }
    Ok(Output {
        summary: s,
        files: vec![("yaglom.csv".into(), csv)],
        exit: EXIT_OK,
    })
}

fn simulate(cfg: &ExperimentConfig) -> Result<Output> {
    let model = cfg.build_model()?;
    let k = model.size();
    let rc = cfg.run_config(k)?;
    let nu = perron_triple(&model.mean_rates()?.a, cfg.numerics.tol, cfg.numerics.max_iter).ok();
    let trs = run_ensemble(&model, &rc)?;
    let rows = survival_stats(&trs, &rc, nu.as_ref().map(|t| t.nu.as_slice()));
    let mut head = header(cfg, "simulate");
    let _ = writeln!(head, "# rng={RNG_FAMILY}");
    let _ = writeln!(
        head,
        "# tv_to_nu compares survivor-averaged proportions with the left Perron vector of A at each snapshot"
    );
    let _ = writeln!(
        head,
        "# mean_log_growth averages (log|eta_t| - log|eta_s|)/(t - s) from the previous snapshot s"
    );
    let mut s = head.clone();
    let extinct = trs
        .iter()
        .filter(|t| matches!(t.outcome, Outcome::Extinct { .. }))
        .count();
    let censored = trs
        .iter()
        .filter(|t| matches!(t.outcome, Outcome::Censored { .. }))
        .count();
    let _ = writeln!(s, "replicas={} extinct={extinct} censored={censored}", trs.len());
    if let Some(t) = &nu {
        let _ = writeln!(s, "lambda_star={}", fmt_sig(t.lambda_star));
    }
    for r in &rows {
        let _ = writeln!(
            s,
            "t={} survivors={} survival_fraction={}",
            fmt_sig(r.time),
            r.survivors,
            fmt_sig(r.survival_fraction)
        );
    }
    let mut traj = Vec::new();
    write_trajectory_csv(&mut traj, &trs)?;
    let mut stats = Vec::new();
    write_stats_csv(&mut stats, &rows)?;
    let utf8 = |b: Vec<u8>| String::from_utf8(b).expect("ascii csv");
    Ok(Output {
        summary: s,
        files: vec![
            ("trajectory.csv".into(), format!("{head}{}", utf8(traj))),
            ("stats.csv".into(), format!("{head}{}", utf8(stats))),
        ],
        exit: EXIT_OK,
    })
}

fn verify(criteria: &[usize]) -> Output {
    let selected: Vec<usize> = if criteria.is_empty() {
        (1..=acceptance::CRITERIA.len()).collect()
    } else {
        criteria.to_vec()
    };
    if let Some(bad) = selected.iter().find(|&&c| c == 0 || c > acceptance::CRITERIA.len()) {
        return Output {
            summary: format!("error: no criterion {bad}\n"),
            files: Vec::new(),
            exit: EXIT_CONFIG,
        };
    }
    let mut s = format!("# tumorbp {} verify\n", env!("CARGO_PKG_VERSION"));
    let mut first_fail = None;
    for c in selected {
        let r = acceptance::CRITERIA[c - 1]();
        s.push_str(&r.to_string());
        if !r.pass && first_fail.is_none() {
            first_fail = Some((c, r.first_failure().unwrap_or("").to_string()));
        }
    }
    let exit = match first_fail {
        Some((c, why)) => {
            let _ = writeln!(s, "verify failed: criterion {c}: {why}");
            EXIT_ACCEPTANCE
        }
        None => {
            let _ = writeln!(s, "verify passed");
            EXIT_OK
        }
    };
    Output {
        summary: s,
        files: Vec::new(),
        exit,
    }
}
