use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use hyperch::config::parse_config;
use hyperch::grid::{Field, Grid};

const SMALL: &str = "grid.n = 16\ntime.T = 0.02\ntime.dt = 1e-3\npotential.kind = regular\n";

fn hyperch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperch")).args(args).output().unwrap()
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run_study(study: &str, cfg: &Path, out: &Path) -> Output {
    hyperch(&[study, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn csv_files(dir: &Path, prefix: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let name = p.file_name().unwrap().to_str().unwrap();
            name.starts_with(prefix) && name.ends_with(".csv")
        })
        .collect();
    v.sort();
    v
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        if let Err(errs) = parse_config(&text) {
            panic!("{}: {errs:?}", path.display());
        }
        seen += 1;
    }
    assert!(seen >= 7);
}

#[test]
fn check_passes_and_rewrites_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "small.cfg", SMALL);
    let out = tmp.path().join("out");
    let first = run_study("check", &cfg, &out);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stdout));
    let files = csv_files(&out, "check_");
    assert_eq!(files.len(), 1);
    let before = fs::read(&files[0]).unwrap();
    assert!(String::from_utf8_lossy(&before).starts_with("check,value,bound,passed\n"));

    assert_eq!(run_study("check", &cfg, &out).status.code(), Some(0));
    assert_eq!(fs::read(&files[0]).unwrap(), before);
}

#[test]
fn usage_and_config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(hyperch(&["integrate"]).status.code(), Some(1));
    let bad = write_cfg(tmp.path(), "bad.cfg", "grid.n = 16\ntime.T = 0.02\n");
    let o = run_study("simulate", &bad, tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    let typo = write_cfg(tmp.path(), "typo.cfg", &format!("{SMALL}model.tua = 1\n"));
    let o = run_study("simulate", &typo, tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.tua"));
}

#[test]
fn alpha_sweep_refuses_ramp_proliferation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "ramp.cfg", &format!("{SMALL}model.P.kind = ramp\n"));
    let o = run_study("sweep-alpha", &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("positive constant"));
}

#[test]
fn separation_refuses_other_potentials() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "s.cfg", SMALL);
    let o = run_study("separation", &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("logarithmic"));
}

#[test]
fn alpha_sweep_writes_one_row_per_alpha() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "a.cfg", &format!("{SMALL}model.P.kind = constant\nmodel.P.p0 = 2\n"));
    let out = tmp.path().join("out");
    let o = run_study("sweep-alpha", &cfg, &out);
    assert!(matches!(o.status.code(), Some(0) | Some(2)));
    let files = csv_files(&out, "sweep_alpha_");
    let table = files.iter().find(|p| !p.to_str().unwrap().contains("_verdicts") && !p.to_str().unwrap().contains("_summary")).unwrap();
    let text = fs::read_to_string(table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 9);
    assert!(files.iter().any(|p| p.to_str().unwrap().ends_with("_summary.csv")));
}

#[test]
fn contdep_writes_one_row_per_delta() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "c.cfg", &format!("{SMALL}study.deltas = 1, 0.5, 0.25\n"));
    let out = tmp.path().join("out");
    let o = run_study("contdep", &cfg, &out);
    assert!(matches!(o.status.code(), Some(0) | Some(2)));
    let files = csv_files(&out, "contdep_");
    let table = files.iter().find(|p| !p.to_str().unwrap().contains("_verdicts")).unwrap();
    let text = fs::read_to_string(table).unwrap();
    assert_eq!(text.lines().next().unwrap(), "delta,lhs,rhs,ratio");
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn simulate_dumps_fields_that_read_back() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_text = format!("{SMALL}output.dump_fields = true\ntime.record_every = 10\n");
    let cfg = write_cfg(tmp.path(), "sim.cfg", &cfg_text);
    let out = tmp.path().join("out");
    let o = run_study("simulate", &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let digest = parse_config(&cfg_text).unwrap().digest();
    let diag = fs::read_to_string(out.join(format!("simulate_{digest}.csv"))).unwrap();
    assert_eq!(diag.lines().count(), 1 + 21);

    let grid = Arc::new(Grid::uniform_1d(16, 1.0).unwrap());
    for step in [0, 10, 20] {
        for name in ["mu", "v", "phi", "sigma", "xi"] {
            let text = fs::read_to_string(out.join(&digest).join(format!("{name}_{step:06}.csv"))).unwrap();
            let f = Field::from_csv(&grid, &text).unwrap();
            assert_eq!(f.to_csv(), text);
        }
    }
    // phi at t = 0 is the configured cosine bump
    let text = fs::read_to_string(out.join(&digest).join("phi_000000.csv")).unwrap();
    let phi0 = Field::from_csv(&grid, &text).unwrap();
    let want = Field::from_fn(&grid, |x| 0.5 * (std::f64::consts::PI * x[0]).cos());
    assert!(phi0.sub(&want).max_abs() < 1e-15);
}
