//! Command-line front end: subcommand dispatch, report files and field dumps.
//!
//! Exit codes: 0 success, 2 when a study ran but a verdict failed, 1 for any
//! error (bad usage, bad config, refused study, failed run, I/O).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config, Config};
use crate::experiments::{self, StudyReport};
use crate::grid::fmt17;
use crate::stepper::{self, Trajectory};

#[derive(Parser, Debug)]
#[command(name = "hyperch", about = "Relaxed phase-field tumor-growth solver and verification studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one configuration and write its diagnostics.
    Simulate(Opts),
    /// Error against the alpha = 0 limit over the alpha ladder.
    SweepAlpha(Opts),
    /// Cauchy differences over the epsilon ladder.
    SweepEps(Opts),
    /// Stability under scaled control perturbations.
    Contdep(Opts),
    /// Distance of phi from the pure phases (logarithmic potential).
    Separation(Opts),
    /// Standing invariant suite.
    Check(Opts),
}

#[derive(Args, Debug)]
struct Opts {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the randomized batteries.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Concurrent runs inside a study (0 = all cores).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

pub fn dispatch(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (name, opts) = match &cli.command {
        Command::Simulate(o) => ("simulate", o),
        Command::SweepAlpha(o) => ("sweep-alpha", o),
        Command::SweepEps(o) => ("sweep-eps", o),
        Command::Contdep(o) => ("contdep", o),
        Command::Separation(o) => ("separation", o),
        Command::Check(o) => ("check", o),
    };
    let cfg = match load_config(&opts.config) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("{msg}");
            return 1;
        }
    };
    let out = opts
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output_dir));

    if let Command::Simulate(_) = cli.command {
        return match simulate(&cfg, &out) {
            Ok(line) => {
                println!("{line}");
                0
            }
            Err(msg) => {
                eprintln!("simulate: {msg}");
                1
            }
        };
    }

    let report = match cli.command {
        Command::SweepAlpha(_) => experiments::sweep_alpha(&cfg, opts.jobs),
        Command::SweepEps(_) => experiments::sweep_eps(&cfg, opts.jobs),
        Command::Contdep(_) => experiments::contdep(&cfg, opts.jobs),
        Command::Separation(_) => experiments::separation(&cfg, opts.jobs),
        _ => Ok(experiments::invariant_suite(&cfg, opts.seed, opts.jobs)),
    };
    let report = match report {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{name}: {e}");
            return 1;
        }
    };
    if let Err(e) = write_report(&report, &out) {
        eprintln!("{name}: cannot write report under {}: {e}", out.display());
        return 1;
    }
    println!("{}", report.summary());
    for v in report.verdicts.iter().filter(|v| v.passed() == Some(false)) {
        println!("  failed: {} = {:e} (required {})", v.name, v.value, v.bound);
    }
    if report.passed() {
        0
    } else {
        2
    }
}

fn load_config(path: &Path) -> Result<Config, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_config(&text).map_err(|errs| {
        let lines: Vec<String> = errs.iter().map(|e| format!("{}: {e}", path.display())).collect();
        lines.join("\n")
    })
}

fn csv_text(s: &str) -> String {
    s.replace(',', ";")
}

fn verdict_table(report: &StudyReport) -> String {
    let mut s = String::from("check,value,bound,passed\n");
    for v in &report.verdicts {
        let passed = match v.passed() {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "n/a",
        };
        s.push_str(&format!(
            "{},{},{},{}\n",
            csv_text(&v.name),
            fmt17(v.value),
            csv_text(&v.bound.to_string()),
            passed
        ));
    }
    s
}

/// Writes `<study>_<digest>.csv` (the data table, or the verdict table for
/// `check`), `<study>_<digest>_verdicts.csv`, and for the alpha sweep
/// `<study>_<digest>_summary.csv`. Returns the paths written.
pub fn write_report(report: &StudyReport, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stem = format!("{}_{}", report.kind.name(), report.digest);
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> io::Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };

    if report.kind == experiments::StudyKind::Check {
        put(format!("{stem}.csv"), verdict_table(report))?;
        return Ok(written);
    }
    let mut table = report.columns().join(",");
    table.push('\n');
    for row in &report.rows {
        let cells: Vec<String> = row.iter().map(|&v| fmt17(v)).collect();
        table.push_str(&cells.join(","));
        table.push('\n');
    }
    put(format!("{stem}.csv"), table)?;
    put(format!("{stem}_verdicts.csv"), verdict_table(report))?;
    if let (experiments::StudyKind::SweepAlpha, Some(fit)) = (report.kind, &report.fit) {
        put(
            format!("{stem}_summary.csv"),
            format!(
                "slope,intercept,residual,verdict\n{},{},{},{}\n",
                fmt17(fit.slope),
                fmt17(fit.intercept),
                fmt17(fit.residual),
                if report.passed() { "pass" } else { "fail" }
            ),
        )?;
    }
    Ok(written)
}

fn simulate(cfg: &Config, out: &Path) -> Result<String, String> {
    let potential = cfg.potential().map_err(|e| e.to_string())?;
    let init = cfg.initial_data().map_err(|e| e.to_string())?;
    let traj = stepper::run(&cfg.params, &potential, &cfg.controls, &init, cfg.t_final, &cfg.scheme())
        .map_err(|e| e.to_string())?;
    let run_id = cfg.digest();
    write_diagnostics(&traj, out, &run_id).map_err(|e| e.to_string())?;
    if cfg.dump_fields {
        dump_fields(&traj, &out.join(&run_id)).map_err(|e| e.to_string())?;
    }
    let last = traj.diagnostics.last().copied().unwrap_or(traj.initial);
    Ok(format!(
        "simulate [{run_id}]: {} steps to t = {}, phi in [{:.6}, {:.6}], int phi = {:.6e}, int sigma = {:.6e}",
        traj.steps(),
        last.t,
        last.phi_min,
        last.phi_max,
        last.mass_phi,
        last.mass_sigma
    ))
}

/// `simulate_<run_id>.csv`: one line per time level including `t = 0`.
pub fn write_diagnostics(traj: &Trajectory, dir: &Path, run_id: &str) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut s = String::from(
        "step,t,mass_phi,mass_sigma,alpha_mass_v,newton_iterations,phi_min,phi_max,xi_sup\n",
    );
    for d in std::iter::once(&traj.initial).chain(&traj.diagnostics) {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            d.step,
            fmt17(d.t),
            fmt17(d.mass_phi),
            fmt17(d.mass_sigma),
            fmt17(d.alpha_mass_v),
            d.newton_iterations,
            fmt17(d.phi_min),
            fmt17(d.phi_max),
            fmt17(d.xi_sup)
        ));
    }
    let path = dir.join(format!("simulate_{run_id}.csv"));
    fs::write(&path, s)?;
    Ok(path)
}

/// One `<field>_<step>.csv` per recorded snapshot and field.
pub fn dump_fields(traj: &Trajectory, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for snap in &traj.snapshots {
        let s = &snap.state;
        for (name, f) in [("mu", &s.mu), ("v", &s.v), ("phi", &s.phi), ("sigma", &s.sigma), ("xi", &s.xi)] {
            let path = dir.join(format!("{name}_{:06}.csv", snap.step));
            fs::write(&path, f.to_csv())?;
            out.push(path);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(args: &[&str]) -> Vec<String> {
        std::iter::once("hyperch").chain(args.iter().copied()).map(String::from).collect()
    }

    #[test]
    fn unknown_subcommand_is_an_error() {
        assert_eq!(dispatch(&argv(&["integrate"])), 1);
        assert_eq!(dispatch(&argv(&[])), 1);
    }

    #[test]
    fn missing_config_file_is_an_error() {
        assert_eq!(dispatch(&argv(&["check", "--config", "/nonexistent/cfg"])), 1);
    }
}
