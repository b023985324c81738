//! Verification studies built on the stepper: the alpha sweep against the
//! viscous Cahn-Hilliard limit, the epsilon Cauchy sweep, continuous
//! dependence on the controls, the separation check for the logarithmic
//! potential, and the standing invariant suite.

use std::fmt;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::Config;
use crate::grid::{Field, Grid, GridError};
use crate::model::{
    self, ControlSource, Controls, InitialData, ModelParams, PerturbedControls, ProliferationSpec,
};
use crate::norms::{self, fit_rate, NormError, RateFit};
use crate::potentials::{PotentialError, PotentialKind, SplitPotential, YosidaParams};
use crate::stepper::{self, RunError, SchemeConfig, Trajectory};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("study refused: {0}")]
    Refused(String),
    #[error("{label}: {source}")]
    Run {
        label: String,
        #[source]
        source: RunError,
    },
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    SweepAlpha,
    SweepEps,
    ContDep,
    Separation,
    Check,
}

impl StudyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StudyKind::SweepAlpha => "sweep_alpha",
            StudyKind::SweepEps => "sweep_eps",
            StudyKind::ContDep => "contdep",
            StudyKind::Separation => "separation",
            StudyKind::Check => "check",
        }
    }

    pub fn columns(&self) -> &'static [&'static str] {
        match self {
            StudyKind::SweepAlpha => &[
                "alpha",
                "err_mu_weighted",
                "err_conv_mu_linfV",
                "err_phi_linfH",
                "err_phi_l2V",
                "err_sigma_l2H",
                "err_conv_sigma_linfV",
                "composite",
            ],
            StudyKind::SweepEps => &["epsilon", "d_phi", "d_mu", "d_sigma", "max_abs_phi"],
            StudyKind::ContDep => &["delta", "lhs", "rhs", "ratio"],
            StudyKind::Separation => &["r_min", "r_max", "xi_sup", "margin", "epsilon"],
            StudyKind::Check => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
    Within(f64, f64),
    NotApplicable,
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Bound::AtMost(t) => write!(f, "<= {t:e}"),
            Bound::AtLeast(t) => write!(f, ">= {t:e}"),
            Bound::Within(lo, hi) => write!(f, "between {lo} and {hi}"),
            Bound::NotApplicable => write!(f, "n/a"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
}

impl Verdict {
    pub fn new(name: impl Into<String>, value: f64, bound: Bound) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
        }
    }

    /// `None` when the check does not apply. NaN values fail.
    pub fn passed(&self) -> Option<bool> {
        let v = self.value;
        match self.bound {
            Bound::AtMost(t) => Some(v <= t),
            Bound::AtLeast(t) => Some(v >= t),
            Bound::Within(lo, hi) => Some(v >= lo && v <= hi),
            Bound::NotApplicable => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub kind: StudyKind,
    pub digest: String,
    /// Sorted by the leading parameter, descending.
    pub rows: Vec<Vec<f64>>,
    pub fit: Option<RateFit>,
    pub verdicts: Vec<Verdict>,
}

impl StudyReport {
    pub fn columns(&self) -> &'static [&'static str] {
        self.kind.columns()
    }

    /// True when no applicable verdict failed.
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed() != Some(false))
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn summary(&self) -> String {
        let failed: Vec<&str> = self
            .verdicts
            .iter()
            .filter(|v| v.passed() == Some(false))
            .map(|v| v.name.as_str())
            .collect();
        let mut s = format!(
            "{} [{}]: {} rows, {} verdicts, ",
            self.kind.name(),
            self.digest,
            self.rows.len(),
            self.verdicts.len()
        );
        if let Some(fit) = &self.fit {
            s.push_str(&format!("slope {:.4}, ", fit.slope));
        }
        if failed.is_empty() {
            s.push_str("PASS");
        } else {
            s.push_str(&format!("FAIL ({})", failed.join(", ")));
        }
        s
    }
}

/// Range of phi and size of the Yosida selection over all steps of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationReport {
    pub r_min: f64,
    pub r_max: f64,
    pub xi_sup: f64,
    pub margin: f64,
    pub epsilon: f64,
}

impl SeparationReport {
    pub fn measure(traj: &Trajectory) -> Self {
        let all = std::iter::once(&traj.initial).chain(&traj.diagnostics);
        let (mut r_min, mut r_max, mut xi_sup) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for d in all {
            r_min = r_min.min(d.phi_min);
            r_max = r_max.max(d.phi_max);
            xi_sup = xi_sup.max(d.xi_sup);
        }
        Self {
            r_min,
            r_max,
            xi_sup,
            margin: (1.0 + r_min).min(1.0 - r_max),
            epsilon: traj.eps,
        }
    }

    fn row(&self) -> Vec<f64> {
        vec![self.r_min, self.r_max, self.xi_sup, self.margin, self.epsilon]
    }
}

struct Setup {
    potential: SplitPotential,
    init: InitialData,
}

fn setup(cfg: &Config) -> Result<Setup, ExperimentError> {
    let grid = cfg.grid()?;
    Ok(Setup {
        potential: cfg.potential()?,
        init: InitialData::from_presets(&cfg.init, &grid),
    })
}

fn scheme(cfg: &Config, dt: f64, eps: f64, record_every: usize) -> SchemeConfig {
    SchemeConfig {
        dt,
        eps,
        record_every,
        ..cfg.scheme()
    }
}

/// Maps `f` over `items` on at most `jobs` threads (0 = rayon default);
/// results keep the input order.
fn par_map<T: Sync, R: Send>(jobs: usize, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    if jobs == 1 || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

fn labelled(label: String) -> impl FnOnce(RunError) -> ExperimentError {
    move |source| ExperimentError::Run { label, source }
}

fn nonincreasing(values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0)
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v.dedup();
    v
}

/// Vanishing-relaxation study: one limit run plus one run per alpha in
/// `cfg.alphas`, all at the same grid, dt, epsilon, data and controls.
pub fn sweep_alpha(cfg: &Config, jobs: usize) -> Result<StudyReport, ExperimentError> {
    match cfg.params.proliferation {
        ProliferationSpec::Constant(p0) if p0 > 0.0 => {}
        other => {
            return Err(ExperimentError::Refused(format!(
                "the alpha sweep compares against the viscous Cahn-Hilliard limit, which \
                 assumes P is a positive constant; got {other:?}"
            )))
        }
    }
    let alphas = sorted_desc(cfg.alphas.clone());
    if alphas.len() < 3 {
        return Err(NormError::DegenerateFit(format!(
            "the alpha ladder needs at least 3 distinct values, got {}",
            alphas.len()
        ))
        .into());
    }
    if let Some(a) = alphas.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
        return Err(ExperimentError::Refused(format!("alpha {a} is outside (0, 1]")));
    }
    let s = setup(cfg)?;
    let sc = scheme(cfg, cfg.dt, cfg.epsilon, cfg.record_every);
    // the limit run goes first in the same batch
    let ladder: Vec<f64> = std::iter::once(0.0).chain(alphas.iter().copied()).collect();
    let runs = par_map(jobs, &ladder, |&alpha| {
        let params = ModelParams { alpha, ..cfg.params };
        stepper::run(&params, &s.potential, &cfg.controls, &s.init, cfg.t_final, &sc)
            .map_err(labelled(format!("alpha = {alpha}")))
    });
    let mut runs = runs.into_iter();
    let limit = runs.next().expect("limit run")?;

    let mut rows = Vec::new();
    let mut points = Vec::new();
    for (alpha, run) in alphas.iter().zip(runs) {
        let e = norms::alpha_error(&run?, &limit, *alpha)?;
        let c = e.composite();
        points.push((*alpha, c));
        rows.push(vec![
            *alpha,
            e.mu_weighted,
            e.conv_mu_linf_v,
            e.phi_linf_h,
            e.phi_l2_v,
            e.sigma_l2_h,
            e.conv_sigma_linf_v,
            c,
        ]);
    }
    let fit = fit_rate(&points)?;
    let composites: Vec<f64> = points.iter().map(|p| p.1).collect();
    let verdicts = vec![
        Verdict::new(
            "composite nonincreasing as alpha decreases (largest increase)",
            nonincreasing(&composites),
            Bound::AtMost(0.0),
        ),
        Verdict::new("fitted log-log slope", fit.slope, Bound::AtLeast(0.24)),
    ];
    Ok(StudyReport {
        kind: StudyKind::SweepAlpha,
        digest: cfg.digest(),
        rows,
        fit: Some(fit),
        verdicts,
    })
}

/// Yosida-limit Cauchy study: for every epsilon in the ladder compares the
/// run at epsilon with the run at epsilon / 2.
pub fn sweep_eps(cfg: &Config, jobs: usize) -> Result<StudyReport, ExperimentError> {
    if !(cfg.params.alpha > 0.0) {
        return Err(ExperimentError::Refused(
            "the epsilon sweep runs the relaxed system and needs alpha > 0".into(),
        ));
    }
    let eps = sorted_desc(cfg.epsilons.clone());
    let report = |rows, verdicts| StudyReport {
        kind: StudyKind::SweepEps,
        digest: cfg.digest(),
        rows,
        fit: None,
        verdicts,
    };
    if eps.len() < 2 {
        return Ok(report(
            Vec::new(),
            vec![Verdict::new("difference sequence", f64::NAN, Bound::NotApplicable)],
        ));
    }
    let s = setup(cfg)?;
    let mut levels: Vec<f64> = eps.iter().flat_map(|&e| [e, 0.5 * e]).collect();
    levels = sorted_desc(levels);
    let runs = par_map(jobs, &levels, |&e| {
        let sc = scheme(cfg, cfg.dt, e, cfg.record_every);
        stepper::run(&cfg.params, &s.potential, &cfg.controls, &s.init, cfg.t_final, &sc)
            .map_err(labelled(format!("epsilon = {e}")))
    });
    let mut by_level = Vec::new();
    for (e, r) in levels.iter().zip(runs) {
        by_level.push((*e, r?));
    }
    let find = |e: f64| &by_level.iter().find(|(l, _)| *l == e).expect("level was run").1;
    let linf = |a: &Trajectory, b: &Trajectory, pick: fn(&model::State) -> &Field| {
        a.snapshots
            .iter()
            .zip(&b.snapshots)
            .map(|(x, y)| pick(&x.state).sub(pick(&y.state)).h_norm())
            .fold(0.0, f64::max)
    };

    let mut rows = Vec::new();
    for &e in &eps {
        let (a, b) = (find(e), find(0.5 * e));
        let max_abs_phi = std::iter::once(&a.initial)
            .chain(&a.diagnostics)
            .map(|d| d.phi_max.abs().max(d.phi_min.abs()))
            .fold(0.0, f64::max);
        rows.push(vec![
            e,
            linf(a, b, |s| &s.phi),
            linf(a, b, |s| &s.mu),
            linf(a, b, |s| &s.sigma),
            max_abs_phi,
        ]);
    }
    let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
    let mut verdicts = vec![
        Verdict::new("d_phi nonincreasing (largest increase)", nonincreasing(&col(1)), Bound::AtMost(0.0)),
        Verdict::new("d_mu nonincreasing (largest increase)", nonincreasing(&col(2)), Bound::AtMost(0.0)),
        Verdict::new("d_sigma nonincreasing (largest increase)", nonincreasing(&col(3)), Bound::AtMost(0.0)),
    ];
    let row_at = |e: f64| rows.iter().find(|r| (r[0] - e).abs() <= 1e-12 * e);
    match s.potential.kind() {
        PotentialKind::Regular => {
            if let (Some(hi), Some(lo)) = (row_at(1e-1), row_at(1e-3)) {
                verdicts.push(Verdict::new(
                    "d_phi(1e-3) / d_phi(1e-1)",
                    lo[1] / hi[1],
                    Bound::AtMost(1e-2),
                ));
            }
        }
        PotentialKind::Obstacle { .. } => {
            let overshoot: Vec<f64> = col(4).iter().map(|m| m - 1.0).collect();
            verdicts.push(Verdict::new(
                "max|phi| - 1 nonincreasing (largest increase)",
                nonincreasing(&overshoot),
                Bound::AtMost(0.0),
            ));
        }
        PotentialKind::Logarithmic { .. } => {}
    }
    Ok(report(rows, verdicts))
}

/// Stability under control perturbations `u + delta * w` for each delta in
/// the ladder, with `w` the configured perturbation direction.
pub fn contdep(cfg: &Config, jobs: usize) -> Result<StudyReport, ExperimentError> {
    let deltas = sorted_desc(cfg.deltas.clone());
    if let Some(d) = deltas.iter().find(|&&d| !(d > 0.0 && d.is_finite())) {
        return Err(ExperimentError::Refused(format!("delta {d} must be positive")));
    }
    let s = setup(cfg)?;
    let sc = cfg.scheme();
    let ladder: Vec<f64> = std::iter::once(0.0).chain(deltas.iter().copied()).collect();
    let perturbed = |delta: f64| PerturbedControls {
        base: cfg.controls,
        direction: cfg.perturbation,
        delta,
    };
    let mut all = vec![(-1.0, cfg.controls.into())];
    all.extend(ladder.iter().map(|&d| (d, Source::Perturbed(perturbed(d)))));
    let runs = par_map(jobs, &all, |(d, c): &(f64, Source)| {
        stepper::run(&cfg.params, &s.potential, c.as_dyn(), &s.init, cfg.t_final, &sc)
            .map_err(labelled(if *d < 0.0 { "base run".into() } else { format!("delta = {d}") }))
    });
    let mut runs = runs.into_iter();
    let base = runs.next().expect("base run")?;
    let same = runs.next().expect("delta 0 run")?;
    let lhs0 = norms::contdep_lhs(&base, &same)?;
    let times = base.times();

    let mut rows = Vec::new();
    for (&d, run) in deltas.iter().zip(runs) {
        let run = run?;
        let lhs = norms::contdep_lhs(&base, &run)?;
        let rhs = norms::contdep_rhs(&cfg.controls, &perturbed(d), base.grid(), &times);
        rows.push(vec![d, lhs, rhs, lhs / rhs]);
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    let spread = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let lhs: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let verdicts = vec![
        Verdict::new("lhs at delta = 0", lhs0, Bound::AtMost(1e-10)),
        Verdict::new("max ratio / min ratio", spread, Bound::AtMost(2.0)),
        Verdict::new("lhs decreasing with delta (largest increase)", nonincreasing(&lhs), Bound::AtMost(0.0)),
    ];
    Ok(StudyReport {
        kind: StudyKind::ContDep,
        digest: cfg.digest(),
        rows,
        fit: None,
        verdicts,
    })
}

enum Source {
    Plain(Controls),
    Perturbed(PerturbedControls),
}

impl Source {
    fn as_dyn(&self) -> &dyn ControlSource {
        match self {
            Source::Plain(c) => c,
            Source::Perturbed(p) => p,
        }
    }
}

impl From<Controls> for Source {
    fn from(c: Controls) -> Self {
        Source::Plain(c)
    }
}

/// Separation check for the logarithmic potential, run at the configured
/// epsilon and at half of it.
pub fn separation(cfg: &Config, jobs: usize) -> Result<StudyReport, ExperimentError> {
    let s = setup(cfg)?;
    if !matches!(s.potential.kind(), PotentialKind::Logarithmic { .. }) {
        return Err(ExperimentError::Refused(format!(
            "the separation property is stated for the logarithmic potential only, got {}",
            s.potential.kind().name()
        )));
    }
    let violations = model::validate_separation_data(&s.potential, &s.init);
    if !violations.is_empty() {
        let msg: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(ExperimentError::Refused(msg.join("; ")));
    }
    let levels = [cfg.epsilon, 0.5 * cfg.epsilon];
    let runs = par_map(jobs, &levels, |&e| {
        let sc = scheme(cfg, cfg.dt, e, cfg.record_every);
        stepper::run(&cfg.params, &s.potential, &cfg.controls, &s.init, cfg.t_final, &sc)
            .map(|t| SeparationReport::measure(&t))
            .map_err(labelled(format!("epsilon = {e}")))
    });
    let mut runs = runs.into_iter();
    let coarse = runs.next().expect("two runs")?;
    let fine = runs.next().expect("two runs")?;
    let xi_growth = if coarse.xi_sup > 0.0 {
        fine.xi_sup / coarse.xi_sup - 1.0
    } else if fine.xi_sup == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let verdicts = vec![
        Verdict::new("margin", coarse.margin, Bound::AtLeast(1e-3)),
        Verdict::new(
            "relative margin change under epsilon halving",
            (fine.margin - coarse.margin).abs() / coarse.margin,
            Bound::AtMost(0.1),
        ),
        Verdict::new("relative growth of sup|xi| under epsilon halving", xi_growth, Bound::AtMost(0.05)),
    ];
    Ok(StudyReport {
        kind: StudyKind::Separation,
        digest: cfg.digest(),
        rows: vec![coarse.row(), fine.row()],
        fit: None,
        verdicts,
    })
}

pub const BATTERY_EPSILONS: [f64; 3] = [1e-1, 1e-2, 1e-3];

/// Randomized checks of the Moreau-Yosida properties for all three kinds:
/// envelope bounds, nonexpansive resolvent, `1/eps`-Lipschitz derivative
/// vanishing at zero, domination by the minimal section and monotone
/// convergence to it. Values are the largest violation found.
pub fn yosida_battery(seed: u64, samples: usize) -> Vec<Verdict> {
    let mut rng = StdRng::seed_from_u64(seed);
    let kinds = [
        SplitPotential::regular(),
        SplitPotential::logarithmic(2.0).expect("k1 > 1"),
        SplitPotential::obstacle(1.0).expect("k2 > 0"),
    ];
    let mut out = Vec::new();
    for pot in &kinds {
        let name = pot.kind().name();
        let (dlo, dhi) = pot.domain().unwrap_or((-2.0, 2.0));
        let interior = |rng: &mut StdRng| loop {
            let r = rng.gen_range(dlo..=dhi);
            if pot.in_subdifferential_domain(r) {
                return r;
            }
        };
        let (mut env, mut nonexp, mut lip, mut zero, mut dom, mut mono) = (0f64, 0f64, 0f64, 0f64, 0f64, 0f64);
        let mut failures = 0usize;
        for &eps in &BATTERY_EPSILONS {
            let yp = YosidaParams::new(eps).expect("eps > 0");
            match pot.yosida_prime(&yp, 0.0) {
                Ok(v) => zero = zero.max(v.abs()),
                Err(_) => failures += 1,
            }
            for _ in 0..samples {
                let r = rng.gen_range(dlo..=dhi);
                let s = rng.gen_range(-3.0..=3.0);
                let t = rng.gen_range(-3.0..=3.0);
                let checks = (|| -> Result<(), PotentialError> {
                    let m = pot.moreau_value(&yp, r)?;
                    let f = pot.f1_value(r);
                    env = env.max(-m).max(m - f);
                    let (js, jt) = (pot.resolvent(&yp, s)?, pot.resolvent(&yp, t)?);
                    nonexp = nonexp.max((js - jt).abs() - (s - t).abs());
                    let (ys, yt) = (pot.yosida_prime(&yp, s)?, pot.yosida_prime(&yp, t)?);
                    lip = lip.max((ys - yt).abs() - (s - t).abs() / eps);
                    let q = interior(&mut rng);
                    let sec = pot.minimal_section(q)?;
                    dom = dom.max(pot.yosida_prime(&yp, q)?.abs() - sec.abs());
                    let mut prev = f64::INFINITY;
                    for e in [eps, 0.1 * eps, 0.01 * eps] {
                        let gap = (pot.yosida_prime(&YosidaParams::new(e)?, q)? - sec).abs();
                        mono = mono.max(gap - prev);
                        prev = gap;
                    }
                    Ok(())
                })();
                if checks.is_err() {
                    failures += 1;
                }
            }
        }
        let tol = Bound::AtMost(1e-10);
        out.push(Verdict::new(format!("{name}: envelope bounds"), env, tol));
        out.push(Verdict::new(format!("{name}: resolvent nonexpansive"), nonexp, tol));
        out.push(Verdict::new(format!("{name}: derivative 1/eps-Lipschitz"), lip, tol));
        out.push(Verdict::new(format!("{name}: derivative at zero"), zero, tol));
        out.push(Verdict::new(format!("{name}: dominated by minimal section"), dom, tol));
        out.push(Verdict::new(format!("{name}: gap to minimal section monotone in eps"), mono, tol));
        out.push(Verdict::new(format!("{name}: evaluation errors"), failures as f64, Bound::AtMost(0.0)));
    }
    out
}

fn random_field(grid: &Arc<Grid>, rng: &mut StdRng) -> Field {
    let mut f = Field::zeros(grid);
    for v in f.values_mut() {
        *v = rng.gen_range(-1.0..=1.0);
    }
    f
}

/// Summation by parts, symmetry and mass-free range of the Neumann Laplacian
/// on random fields, plus the cosine eigenpairs at `n = 8`. Values are
/// relative defects.
pub fn operator_battery(seed: u64) -> Vec<Verdict> {
    let mut rng = StdRng::seed_from_u64(seed);
    let grids = [
        ("1d n=64", Grid::uniform_1d(64, 1.0)),
        ("2d n=16x16", Grid::square_2d(16, 1.0)),
    ];
    let mut out = Vec::new();
    for (label, grid) in grids {
        let grid = Arc::new(grid.expect("valid grid"));
        let (mut sbp, mut sym, mut mass) = (0f64, 0f64, 0f64);
        for _ in 0..20 {
            let u = random_field(&grid, &mut rng);
            let v = random_field(&grid, &mut rng);
            let (lu, lv) = (u.laplacian(), v.laplacian());
            let a = -lu.inner_product(&v).expect("same grid");
            let b = u.grad_form(&v).expect("same grid");
            let c = u.inner_product(&lv).expect("same grid");
            let scale = lu.h_norm() * v.h_norm() + u.h_norm() * lv.h_norm();
            sbp = sbp.max((a - b).abs() / scale);
            sym = sym.max((a + c).abs() / scale);
            mass = mass.max(lu.integrate().abs() / u.h_norm());
        }
        out.push(Verdict::new(format!("{label}: summation by parts"), sbp, Bound::AtMost(1e-12)));
        out.push(Verdict::new(format!("{label}: laplacian symmetry"), sym, Bound::AtMost(1e-12)));
        out.push(Verdict::new(format!("{label}: laplacian mass"), mass, Bound::AtMost(1e-12)));
    }

    let n = 8;
    let grid = Arc::new(Grid::uniform_1d(n, 1.0).expect("valid grid"));
    let h = grid.h()[0];
    let mut eig = 0f64;
    for k in 0..n {
        let lambda = (2.0 / h * (k as f64 * std::f64::consts::PI / (2.0 * n as f64)).sin()).powi(2);
        let mode = Field::from_fn(&grid, |x| (k as f64 * std::f64::consts::PI * x[0]).cos());
        let mut r = mode.laplacian();
        r.axpy(lambda, &mode);
        eig = eig.max(r.h_norm() / (mode.h_norm() * lambda.max(1.0)));
    }
    out.push(Verdict::new("1d n=8: cosine eigenpairs", eig, Bound::AtMost(1e-10)));
    out
}

/// Drift of `alpha int v + int phi` and of `int sigma` over a run with
/// `P = 0` and zero controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationDrift {
    pub relaxed_mass: f64,
    pub sigma_mass: f64,
}

pub fn conservation_drift(cfg: &Config) -> Result<ConservationDrift, ExperimentError> {
    let s = setup(cfg)?;
    let params = ModelParams {
        proliferation: ProliferationSpec::Constant(0.0),
        ..cfg.params
    };
    let traj = stepper::run(&params, &s.potential, &Controls::default(), &s.init, cfg.t_final, &cfg.scheme())
        .map_err(labelled("conservation run".into()))?;
    let m0 = traj.initial.relaxed_mass();
    let s0 = traj.initial.mass_sigma;
    let mut drift = ConservationDrift {
        relaxed_mass: 0.0,
        sigma_mass: 0.0,
    };
    for d in &traj.diagnostics {
        drift.relaxed_mass = drift.relaxed_mass.max((d.relaxed_mass() - m0).abs());
        drift.sigma_mass = drift.sigma_mass.max((d.mass_sigma - s0).abs());
    }
    Ok(drift)
}

/// Multiples of `cfg.dt` used by the temporal self-convergence check, and
/// the reference divisor.
pub const DT_LADDER: [f64; 4] = [4.0, 2.0, 1.0, 0.5];
pub const DT_REFERENCE_DIVISOR: f64 = 8.0;

/// Errors `max_t |phi_dt - phi_ref|_H` over the times shared by all runs,
/// for `dt` in `DT_LADDER * cfg.dt`, against a run at `cfg.dt / 8`. The
/// horizon is `cfg.t_final` rounded down to a multiple of the coarsest step.
pub fn temporal_errors(cfg: &Config, jobs: usize) -> Result<Vec<(f64, f64)>, ExperimentError> {
    let s = setup(cfg)?;
    let base = cfg.dt / DT_REFERENCE_DIVISOR;
    // steps in units of the reference step: 32, 16, 8, 4 and 1
    let factors: Vec<usize> = DT_LADDER
        .iter()
        .map(|m| (m * DT_REFERENCE_DIVISOR).round() as usize)
        .chain(std::iter::once(1))
        .collect();
    let stride = factors[0];
    let coarse = base * stride as f64;
    let horizon = (cfg.t_final / coarse + 1e-9).floor() * coarse;
    if horizon <= 0.0 {
        return Err(ExperimentError::Refused(format!(
            "T = {} is shorter than the coarsest step {coarse}",
            cfg.t_final
        )));
    }
    let runs = par_map(jobs, &factors, |&f| {
        let sc = scheme(cfg, base * f as f64, cfg.epsilon, stride / f);
        stepper::run(&cfg.params, &s.potential, &cfg.controls, &s.init, horizon, &sc)
            .map_err(labelled(format!("dt = {}", base * f as f64)))
    });
    let mut runs: Vec<Trajectory> = runs.into_iter().collect::<Result<_, _>>()?;
    let reference = runs.pop().expect("reference run");
    let mut out = Vec::new();
    for (f, run) in factors.iter().zip(&runs) {
        let mut err = 0f64;
        for (a, b) in run.snapshots.iter().zip(&reference.snapshots) {
            debug_assert!((a.state.t - b.state.t).abs() < 1e-9 * horizon);
            err = err.max(a.state.phi.sub(&b.state.phi).h_norm());
        }
        out.push((base * *f as f64, err));
    }
    Ok(out)
}

/// Runs every standing check against `cfg` and collects the verdicts.
/// Run failures become failed verdicts rather than errors.
pub fn invariant_suite(cfg: &Config, seed: u64, jobs: usize) -> StudyReport {
    let mut verdicts = yosida_battery(seed, 1000);
    verdicts.extend(operator_battery(seed));
    match conservation_drift(cfg) {
        Ok(d) => {
            verdicts.push(Verdict::new(
                "conservation: alpha int v + int phi drift",
                d.relaxed_mass,
                Bound::AtMost(1e-8),
            ));
            verdicts.push(Verdict::new("conservation: int sigma drift", d.sigma_mass, Bound::AtMost(1e-8)));
        }
        Err(e) => verdicts.push(Verdict::new(
            format!("conservation: {e}"),
            f64::NAN,
            Bound::AtMost(1e-8),
        )),
    }
    let order = temporal_errors(cfg, jobs)
        .map_err(|e| e.to_string())
        .and_then(|pts| fit_rate(&pts).map_err(|e| e.to_string()));
    let mut fit = None;
    match order {
        Ok(f) => {
            verdicts.push(Verdict::new("temporal order of phi", f.slope, Bound::Within(0.8, 1.2)));
            fit = Some(f);
        }
        Err(e) => verdicts.push(Verdict::new(
            format!("temporal order of phi: {e}"),
            f64::NAN,
            Bound::Within(0.8, 1.2),
        )),
    }
    StudyReport {
        kind: StudyKind::Check,
        digest: cfg.digest(),
        rows: Vec::new(),
        fit,
        verdicts,
    }
}
