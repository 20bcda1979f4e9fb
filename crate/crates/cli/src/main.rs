//! `memamp`: gain tables, simulations, sweeps, oracle checks and Monte Carlo
//! runs for heralded amplification of collective atomic excitations.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 protocol or check
//! failure, 3 resource, truncation or grid guard.

mod config;
mod error;
mod output;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use memamp::dicke::{relative_gain, Schedule};
use memamp::montecarlo::{monte_carlo, MAX_TRIALS};
use memamp::joint::{apply_read, apply_write, build_joint};
use memamp::oracle::{verify_ladder, MAX_ORACLE_ATOMS};
use memamp::protocol::{run_schedule, AmplificationReport, AtomicState, ProtocolConfig, StageKind};
use serde_json::json;

use crate::error::CliError;
use crate::output::{ensure_dir, float, opt_float, write_csv, write_json, RunManifest};
use crate::sweep::{Axis, SWEEP_HEADER};

#[derive(Debug, Parser)]
#[command(name = "memamp", version, about = "Heralded amplification of collective atomic excitations")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "MEMAMP_OUT", default_value = "memamp-out")]
    out: PathBuf,

    /// Worker threads for sweeps and Monte Carlo (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form type-I and type-II gains for n = 0..n_max.
    Gain {
        /// Number of atoms.
        #[arg(short = 'N', long = "atoms")]
        n_atoms: usize,
        /// Largest number of stages.
        #[arg(long, default_value_t = 10)]
        n_max: usize,
    },
    /// Runs one schedule and writes report.json, stages.csv and manifest.json.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write state.txt, the first stage's joint tensor before heralding.
        #[arg(long)]
        dump_state: bool,
    },
    /// Evaluates the config over a parameter grid and writes sweep.csv.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `key=v1,v2`, `key=lin:start:stop:count` or `key=log:start:stop:count`;
        /// keys N, n, alpha, p_w, p_r, p, beta_w, beta_r, beta, schedule.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
    },
    /// Cross-checks the Dicke ladder against brute force for N = 2..n_max.
    OracleCheck {
        #[arg(long, default_value_t = 10)]
        n_max: usize,
    },
    /// Samples herald outcomes of the configured schedule.
    Mc {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        // Fails only if a global pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Gain { n_atoms, n_max } => cmd_gain(&cli.out, *n_atoms, *n_max),
        Command::Simulate { config, dump_state } => cmd_simulate(&cli.out, config.as_deref(), *dump_state),
        Command::Sweep { config, axes } => cmd_sweep(&cli.out, config.as_deref(), axes),
        Command::OracleCheck { n_max } => cmd_oracle_check(&cli.out, *n_max),
        Command::Mc { config, trials, seed } => cmd_mc(&cli.out, config.as_deref(), *trials, *seed),
    }
}

fn cmd_gain(out: &Path, n_atoms: usize, n_max: usize) -> Result<u8, CliError> {
    if n_atoms < n_max + 2 {
        return Err(CliError::Config(format!(
            "headroom violation: N = {n_atoms} must be at least n_max + 2 = {}",
            n_max + 2
        )));
    }
    ensure_dir(out)?;
    let rows: Vec<Vec<String>> = (0..=n_max)
        .map(|n| {
            vec![
                n.to_string(),
                float(relative_gain(Schedule::TypeI, n, n_atoms)),
                float(relative_gain(Schedule::TypeII, n, n_atoms)),
            ]
        })
        .collect();
    let path = out.join("gain.csv");
    write_csv(&path, &["n", "gain_type1", "gain_type2"], &rows)?;
    let mut manifest = RunManifest::new("gain", None, json!({ "N": n_atoms, "n_max": n_max }));
    manifest.files.push(path.clone());
    manifest.write(out)?;
    println!("wrote {}", path.display());
    Ok(0)
}

const STAGE_HEADER: [&str; 10] = [
    "index",
    "kind",
    "detect_a",
    "detect_b",
    "probability",
    "cumulative_probability",
    "projected_weight",
    "gain_so_far",
    "failed",
    "state",
];

fn stage_rows(report: &AmplificationReport) -> Vec<Vec<String>> {
    report
        .stage_reports
        .iter()
        .map(|s| {
            vec![
                s.index.to_string(),
                format!("{:?}", s.kind),
                s.pattern.detect_a.to_string(),
                s.pattern.detect_b.to_string(),
                float(s.probability),
                float(s.cumulative_probability),
                float(s.projected_weight),
                opt_float(s.gain_so_far),
                s.failed.to_string(),
                match &s.state {
                    Some(AtomicState::Pure { .. }) => "pure".into(),
                    Some(AtomicState::Mixed { .. }) => "mixed".into(),
                    None => String::new(),
                },
            ]
        })
        .collect()
}

/// Pre-herald joint tensor of the first stage, evolved with the config's order.
fn first_stage_dump(config: &ProtocolConfig) -> Result<String, CliError> {
    let mut joint = build_joint(&config.initial_state()?, config.truncation)?;
    let Some(&kind) = config.stage_plan().first() else {
        return Ok(joint.dump_text());
    };
    if kind != StageKind::ReadOnly {
        joint = apply_write(&joint, config.p_w, config.beta_w, config.order)?;
    }
    if kind != StageKind::WriteOnly {
        joint = apply_read(&joint, config.p_r, config.beta_r, config.order)?;
    }
    Ok(joint.dump_text())
}

fn cmd_simulate(out: &Path, config_path: Option<&Path>, dump_state: bool) -> Result<u8, CliError> {
    let (config, _) = config::load(config_path)?;
    ensure_dir(out)?;
    let report = run_schedule(&config)?;
    let report_path = out.join("report.json");
    let stages_path = out.join("stages.csv");
    write_json(&report_path, &report)?;
    write_csv(&stages_path, &STAGE_HEADER, &stage_rows(&report))?;
    let code = if report.success { 0 } else { 2 };
    let mut manifest = RunManifest::new("simulate", Some(&config), json!({ "config_path": config_path }));
    manifest.seed = Some(config.seed);
    manifest.exit_code = code;
    manifest.files.extend([report_path.clone(), stages_path]);
    if dump_state {
        let state_path = out.join("state.txt");
        std::fs::write(&state_path, first_stage_dump(&config)?)?;
        manifest.files.push(state_path);
    }
    manifest.write(out)?;
    match report.failed_stage {
        None => println!(
            "success probability {:e}, gain {} (analytic {})",
            report.success_probability,
            opt_float(report.final_gain),
            report.analytic_gain
        ),
        Some(stage) => eprintln!("protocol failed at stage {stage}; report written to {}", report_path.display()),
    }
    Ok(code)
}

fn cmd_sweep(out: &Path, config_path: Option<&Path>, axes: &[String]) -> Result<u8, CliError> {
    let (template, spec) = config::load(config_path)?;
    let axes: Vec<Axis> = axes.iter().map(|a| a.parse()).collect::<Result<_, _>>()?;
    let points = sweep::grid_size(&axes)?;
    ensure_dir(out)?;
    let rows = sweep::run_grid(&template, &spec, &axes)?;
    let path = out.join("sweep.csv");
    write_csv(&path, &SWEEP_HEADER, &rows)?;
    let mut manifest = RunManifest::new(
        "sweep",
        Some(&template),
        json!({ "config_path": config_path, "axes": axes_echo(&axes), "points": points }),
    );
    manifest.seed = Some(template.seed);
    manifest.files.push(path.clone());
    manifest.write(out)?;
    println!("wrote {points} points to {}", path.display());
    Ok(0)
}

fn axes_echo(axes: &[Axis]) -> serde_json::Value {
    axes.iter()
        .map(|a| json!({ "key": format!("{:?}", a.key), "values": a.values }))
        .collect()
}

fn cmd_oracle_check(out: &Path, n_max: usize) -> Result<u8, CliError> {
    if n_max > MAX_ORACLE_ATOMS {
        return Err(CliError::Guard(format!(
            "oracle check is limited to N <= {MAX_ORACLE_ATOMS} (2^N amplitudes), got {n_max}"
        )));
    }
    if n_max < 2 {
        return Err(CliError::Config(format!("n_max must be at least 2, got {n_max}")));
    }
    ensure_dir(out)?;
    let reports = (2..=n_max).map(verify_ladder).collect::<Result<Vec<_>, _>>()?;
    let max_deviation = reports.iter().map(|r| r.max_deviation).fold(0.0, f64::max);
    let max_residual = reports.iter().map(|r| r.max_residual).fold(0.0, f64::max);
    let pass = max_deviation <= 1e-10 && max_residual <= 1e-10;
    let path = out.join("oracle.json");
    write_json(
        &path,
        &json!({ "n_max": n_max, "pass": pass, "max_deviation": max_deviation, "max_residual": max_residual, "reports": reports }),
    )?;
    let code = if pass { 0 } else { 2 };
    let mut manifest = RunManifest::new("oracle-check", None, json!({ "n_max": n_max }));
    manifest.exit_code = code;
    manifest.files.push(path);
    manifest.write(out)?;
    println!(
        "oracle check N = 2..{n_max}: {} (max deviation {max_deviation:e}, max residual {max_residual:e})",
        if pass { "pass" } else { "FAIL" }
    );
    Ok(code)
}

fn cmd_mc(out: &Path, config_path: Option<&Path>, trials: u64, seed: Option<u64>) -> Result<u8, CliError> {
    let (mut config, _) = config::load(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if trials == 0 || trials > MAX_TRIALS {
        return Err(CliError::Guard(format!("--trials must be in 1..={MAX_TRIALS}")));
    }
    ensure_dir(out)?;
    let report = monte_carlo(&config, trials, config.seed)?;
    let report_path = out.join("mc.json");
    let outcomes_path = out.join("mc_outcomes.csv");
    write_json(&report_path, &report)?;
    let rows: Vec<Vec<String>> = report
        .first_stage_outcomes
        .iter()
        .map(|o| {
            vec![
                o.pattern.detect_a.to_string(),
                o.pattern.detect_b.to_string(),
                o.observed.to_string(),
                float(o.expected_probability),
            ]
        })
        .collect();
    write_csv(&outcomes_path, &["detect_a", "detect_b", "observed", "expected_probability"], &rows)?;
    let mut manifest = RunManifest::new("mc", Some(&config), json!({ "config_path": config_path, "trials": trials }));
    manifest.seed = Some(config.seed);
    manifest.files.extend([report_path, outcomes_path]);
    manifest.write(out)?;
    println!(
        "{} / {} successes (frequency {:e}, expected {:e}, z = {:.2})",
        report.successes, report.trials, report.success_frequency, report.expected_success_probability, report.z_score
    );
    Ok(0)
}
