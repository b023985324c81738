//! First-order IMEX time stepping for the relaxed system and for its
//! `alpha = 0` viscous Cahn-Hilliard limit.
//!
//! Each time level runs three substeps in the order phi, mu, sigma:
//!
//! * phi: backward Euler with the Yosida derivative implicit and `F2'`
//!   lagged, solved by damped Newton (the Jacobian is SPD);
//! * mu: the inertial term is written as a first-order system in
//!   `(mu, v)`, implicit in `v` with `mu' = mu + dt v'`; sigma is lagged;
//! * sigma: linear backward Euler with the updated phi and mu.
//!
//! Every linear solve is of the form `diag(c) - laplacian` with `c > 0`.

use std::sync::Arc;

use thiserror::Error;

use crate::grid::{Field, GridError, ShiftedLaplacian};
use crate::model::{self, ControlSource, InitialData, ModelParams, State, Violation};
use crate::potentials::{PotentialError, SplitPotential, YosidaParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepFailure {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("phase Newton did not converge: residual {residual:e} after {iterations} iterations")]
    NewtonDivergence { iterations: usize, residual: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("inadmissible data: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidData(Vec<Violation>),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("run failed at step {step}: {source}")]
pub struct RunError {
    pub step: usize,
    #[source]
    pub source: StepFailure,
}

/// Discretization and solver controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub dt: f64,
    /// Yosida level.
    pub eps: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub cg_tol: f64,
    /// Snapshot stride in steps.
    pub record_every: usize,
}

impl SchemeConfig {
    pub const DEFAULT_CG_TOL: f64 = 1e-10;

    /// Defaults: `eps = min(dt, 1e-3)`, Newton 1e-12 / 100, CG 1e-10,
    /// recording every step.
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            eps: dt.min(1e-3),
            newton_tol: YosidaParams::DEFAULT_NEWTON_TOL,
            newton_max_iter: YosidaParams::DEFAULT_NEWTON_MAX_ITER,
            cg_tol: Self::DEFAULT_CG_TOL,
            record_every: 1,
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn validate(&self) -> Result<(), StepFailure> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(StepFailure::InvalidParams(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.cg_tol > 0.0) {
            return Err(StepFailure::InvalidParams(format!(
                "cg_tol must be positive, got {}",
                self.cg_tol
            )));
        }
        if self.record_every == 0 {
            return Err(StepFailure::InvalidParams("record_every must be at least 1".into()));
        }
        self.yosida().map(|_| ()).map_err(StepFailure::from)
    }

    pub fn yosida(&self) -> Result<YosidaParams, PotentialError> {
        YosidaParams::with_tolerance(self.eps, self.newton_tol, self.newton_max_iter)
    }

    fn cg_max_iter(&self, cells: usize) -> usize {
        10 * cells + 100
    }

    /// Stopping level for the phase Newton, relative to `max(|b|_h, 1)`.
    /// Kept independent of `cg_tol`: an inexact inner solve only slows the
    /// outer iteration down.
    fn phase_tol(&self) -> f64 {
        self.newton_tol
    }
}

/// Result of the phase substep.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiStep {
    pub phi: Field,
    pub xi: Field,
    pub newton_iterations: usize,
    /// Final `h_norm` of the Newton residual.
    pub residual: f64,
}

fn yosida_fields(
    potential: &SplitPotential,
    yp: &YosidaParams,
    psi: &Field,
) -> Result<(Field, Field), PotentialError> {
    let mut xi = Field::zeros(psi.grid());
    let mut slope = Field::zeros(psi.grid());
    for ((x, s), &p) in xi
        .values_mut()
        .iter_mut()
        .zip(slope.values_mut().iter_mut())
        .zip(psi.values())
    {
        *x = potential.yosida_prime(yp, p)?;
        *s = potential.yosida_second(yp, p)?;
    }
    Ok((xi, slope))
}

/// Convex functional whose gradient is the phase residual; used for the
/// Newton line search.
fn phase_energy(
    potential: &SplitPotential,
    yp: &YosidaParams,
    psi: &Field,
    b: &Field,
    mass: f64,
) -> Result<f64, PotentialError> {
    let mut envelope = 0.0;
    for &p in psi.values() {
        envelope += potential.moreau_value(yp, p)?;
    }
    let vol = psi.grid().cell_volume();
    let h = psi.h_norm();
    Ok(0.5 * mass * h * h + 0.5 * psi.grad_energy() + vol * envelope
        - psi.inner_product(b).expect("same grid"))
}

/// `tau (psi - phi)/dt - lap psi + F1,eps'(psi) - (mu + chi sigma - F2'(phi))`
fn phase_residual(psi: &Field, xi: &Field, mass: f64, b: &Field) -> Field {
    let mut g = psi.laplacian().scale(-1.0);
    g.axpy(mass, psi);
    g.axpy(1.0, xi);
    g.axpy(-1.0, b);
    g
}

/// Phase substep: solves
/// `tau (phi' - phi)/dt - lap phi' + F1,eps'(phi') = mu + chi sigma - F2'(phi)`.
pub fn step_phi(
    state: &State,
    params: &ModelParams,
    potential: &SplitPotential,
    sc: &SchemeConfig,
) -> Result<PhiStep, StepFailure> {
    let yp = sc.yosida()?;
    let mass = params.tau / sc.dt;
    let mut b = state.phi.map(|p| mass * p - potential.f2_prime(p));
    b.axpy(1.0, &state.mu);
    b.axpy(params.chi, &state.sigma);
    let tol = sc.phase_tol() * b.h_norm().max(1.0);
    let cg_max = sc.cg_max_iter(b.grid().len());

    let mut psi = state.phi.clone();
    let (mut xi, mut slope) = yosida_fields(potential, &yp, &psi)?;
    let mut g = phase_residual(&psi, &xi, mass, &b);
    let mut res = g.h_norm();
    let mut iterations = 0;
    while res > tol {
        if iterations >= sc.newton_max_iter {
            return Err(StepFailure::NewtonDivergence {
                iterations,
                residual: res,
            });
        }
        iterations += 1;
        let jac = ShiftedLaplacian::new(slope.map(|s| s + mass));
        let delta = jac.solve(&g.scale(-1.0), None, sc.cg_tol, cg_max)?;
        let slope_along = g.inner_product(&delta)?;

        let mut lambda = 1.0;
        let mut energy0 = None;
        loop {
            let mut trial = psi.clone();
            trial.axpy(lambda, &delta);
            let (xi_t, slope_t) = yosida_fields(potential, &yp, &trial)?;
            let g_t = phase_residual(&trial, &xi_t, mass, &b);
            let res_t = g_t.h_norm();
            let accept = if res_t < res || lambda < 1e-8 {
                true
            } else {
                let e0 = match energy0 {
                    Some(e) => e,
                    None => {
                        let e = phase_energy(potential, &yp, &psi, &b, mass)?;
                        energy0 = Some(e);
                        e
                    }
                };
                let e_t = phase_energy(potential, &yp, &trial, &b, mass)?;
                e_t <= e0 + 1e-4 * lambda * slope_along
            };
            if accept {
                psi = trial;
                xi = xi_t;
                slope = slope_t;
                g = g_t;
                res = res_t;
                break;
            }
            lambda *= 0.5;
        }
    }
    Ok(PhiStep {
        phi: psi,
        xi,
        newton_iterations: iterations,
        residual: res,
    })
}

fn proliferation_field(params: &ModelParams, phi: &Field) -> Field {
    phi.map(|p| params.proliferation.eval(p))
}

/// `P(phi')(sigma + chi (1 - phi')) - h(phi') u1`
fn mu_source(params: &ModelParams, phi_next: &Field, sigma: &Field, u1: &Field) -> Field {
    let chi = params.chi;
    let mut out = Field::zeros(phi_next.grid());
    for (((o, &p), &s), &u) in out
        .values_mut()
        .iter_mut()
        .zip(phi_next.values())
        .zip(sigma.values())
        .zip(u1.values())
    {
        let pr = params.proliferation.eval(p);
        *o = pr * (s + chi * (1.0 - p)) - params.truncation.eval(p) * u;
    }
    out
}

/// Chemical-potential substep for `alpha > 0`; returns `(mu', v')`.
///
/// Solves `(alpha + dt^2 (-lap + P)) v' = alpha v - (phi' - phi) + dt lap mu
/// - dt P mu + dt S` (scaled by `1/dt^2`) and sets `mu' = mu + dt v'`.
pub fn step_mu(
    state: &State,
    phi_next: &Field,
    params: &ModelParams,
    sc: &SchemeConfig,
    u1: &Field,
) -> Result<(Field, Field), StepFailure> {
    if !(params.alpha > 0.0) {
        return Err(StepFailure::InvalidParams(
            "step_mu needs alpha > 0; use step_mu_limit for alpha = 0".into(),
        ));
    }
    let dt = sc.dt;
    let alpha = params.alpha;
    let p = proliferation_field(params, phi_next);
    let source = mu_source(params, phi_next, &state.sigma, u1);
    let lap_mu = state.mu.laplacian();
    let inv_dt2 = 1.0 / (dt * dt);

    let mut rhs = Field::zeros(phi_next.grid());
    for (i, r) in rhs.values_mut().iter_mut().enumerate() {
        let full = alpha * state.v.values()[i] - (phi_next.values()[i] - state.phi.values()[i])
            + dt * lap_mu.values()[i]
            - dt * p.values()[i] * state.mu.values()[i]
            + dt * source.values()[i];
        *r = full * inv_dt2;
    }
    let op = ShiftedLaplacian::new(p.map(|pi| pi + alpha * inv_dt2));
    let v_next = op.solve(&rhs, Some(&state.v), sc.cg_tol, sc.cg_max_iter(rhs.grid().len()))?;
    let mut mu_next = state.mu.clone();
    mu_next.axpy(dt, &v_next);
    Ok((mu_next, v_next))
}

/// Chemical-potential substep of the limit system:
/// `(-lap + P) mu' = P (sigma + chi (1 - phi')) - h u1 - (phi' - phi)/dt`.
pub fn step_mu_limit(
    state: &State,
    phi_next: &Field,
    params: &ModelParams,
    sc: &SchemeConfig,
    u1: &Field,
) -> Result<Field, StepFailure> {
    if !(params.proliferation.infimum() > 0.0) {
        return Err(StepFailure::InvalidParams(
            "limit system needs P bounded away from zero".into(),
        ));
    }
    let p = proliferation_field(params, phi_next);
    let mut rhs = mu_source(params, phi_next, &state.sigma, u1);
    rhs.axpy(-1.0 / sc.dt, phi_next);
    rhs.axpy(1.0 / sc.dt, &state.phi);
    let op = ShiftedLaplacian::new(p);
    Ok(op.solve(&rhs, Some(&state.mu), sc.cg_tol, sc.cg_max_iter(rhs.grid().len()))?)
}

/// Nutrient substep:
/// `(1/dt + P) sigma' - lap sigma' = sigma/dt - chi lap phi'
///  - P (chi (1 - phi') - mu') + u2`.
pub fn step_sigma(
    state: &State,
    phi_next: &Field,
    mu_next: &Field,
    params: &ModelParams,
    sc: &SchemeConfig,
    u2: &Field,
) -> Result<Field, StepFailure> {
    let chi = params.chi;
    let p = proliferation_field(params, phi_next);
    let lap_phi = phi_next.laplacian();
    let mut rhs = Field::zeros(phi_next.grid());
    for (i, r) in rhs.values_mut().iter_mut().enumerate() {
        let ph = phi_next.values()[i];
        *r = state.sigma.values()[i] / sc.dt - chi * lap_phi.values()[i]
            - p.values()[i] * (chi * (1.0 - ph) - mu_next.values()[i])
            + u2.values()[i];
    }
    let op = ShiftedLaplacian::new(p.map(|pi| pi + 1.0 / sc.dt));
    Ok(op.solve(&rhs, Some(&state.sigma), sc.cg_tol, sc.cg_max_iter(rhs.grid().len()))?)
}

/// Advances one full time level to `state.t + dt`.
pub fn advance(
    state: &State,
    params: &ModelParams,
    potential: &SplitPotential,
    controls: &dyn ControlSource,
    sc: &SchemeConfig,
) -> Result<(State, usize), StepFailure> {
    let t_next = state.t + sc.dt;
    let (u1, u2) = controls.sample(t_next, state.phi.grid());
    let phase = step_phi(state, params, potential, sc)?;
    let (mu, v) = if params.alpha > 0.0 {
        step_mu(state, &phase.phi, params, sc, &u1)?
    } else {
        let mu = step_mu_limit(state, &phase.phi, params, sc, &u1)?;
        let v = mu.sub(&state.mu).scale(1.0 / sc.dt);
        (mu, v)
    };
    let sigma = step_sigma(state, &phase.phi, &mu, params, sc, &u2)?;
    Ok((
        State {
            mu,
            v,
            phi: phase.phi,
            sigma,
            xi: phase.xi,
            t: t_next,
        },
        phase.newton_iterations,
    ))
}

/// Scalars recorded at every time level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub mass_phi: f64,
    pub mass_sigma: f64,
    /// `alpha * integral of v`
    pub alpha_mass_v: f64,
    pub newton_iterations: usize,
    pub phi_min: f64,
    pub phi_max: f64,
    pub xi_sup: f64,
}

impl StepDiagnostics {
    fn of(state: &State, step: usize, alpha: f64, newton_iterations: usize) -> Self {
        Self {
            step,
            t: state.t,
            mass_phi: state.phi.integrate(),
            mass_sigma: state.sigma.integrate(),
            alpha_mass_v: alpha * state.v.integrate(),
            newton_iterations,
            phi_min: state.phi.min(),
            phi_max: state.phi.max(),
            xi_sup: state.xi.max_abs(),
        }
    }

    /// `alpha int v + int phi`, conserved when `P = 0` and `u1 = 0`.
    pub fn relaxed_mass(&self) -> f64 {
        self.alpha_mass_v + self.mass_phi
    }
}

/// Running `max_t h_norm`, `max_t v_norm` and `sum dt v_norm^2` of one field.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NormAccumulator {
    pub linf_h: f64,
    pub linf_v: f64,
    pub l2_v_sq: f64,
}

impl NormAccumulator {
    fn push(&mut self, f: &Field, dt: Option<f64>) {
        let h = f.h_norm();
        let v = f.v_norm();
        self.linf_h = self.linf_h.max(h);
        self.linf_v = self.linf_v.max(v);
        if let Some(dt) = dt {
            self.l2_v_sq += dt * v * v;
        }
    }

    pub fn l2_v(&self) -> f64 {
        self.l2_v_sq.sqrt()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulators {
    pub mu: NormAccumulator,
    pub phi: NormAccumulator,
    pub sigma: NormAccumulator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub state: State,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub alpha: f64,
    pub dt: f64,
    pub eps: f64,
    pub snapshots: Vec<Snapshot>,
    pub initial: StepDiagnostics,
    /// One entry per step (not including `t = 0`).
    pub diagnostics: Vec<StepDiagnostics>,
    pub accumulators: Accumulators,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.diagnostics.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.state.t).collect()
    }

    pub fn final_state(&self) -> &State {
        &self.snapshots.last().expect("trajectory has t = 0").state
    }

    pub fn series(&self, pick: impl Fn(&State) -> &Field) -> Vec<&Field> {
        self.snapshots.iter().map(|s| pick(&s.state)).collect()
    }

    pub fn grid(&self) -> &Arc<crate::grid::Grid> {
        self.snapshots[0].state.phi.grid()
    }
}

/// Number of steps for horizon `t_final`; it must be an integer multiple of
/// `dt` up to rounding.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize, StepFailure> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(StepFailure::InvalidParams(format!("T must be positive, got {t_final}")));
    }
    let n = (t_final / dt).round();
    if n < 1.0 || (n * dt - t_final).abs() > 1e-9 * t_final {
        return Err(StepFailure::InvalidParams(format!(
            "T = {t_final} is not a positive multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

/// Integrates from `t = 0` to `t_final`. Snapshots are kept at `t = 0`, every
/// `record_every` steps and at the final step.
pub fn run(
    params: &ModelParams,
    potential: &SplitPotential,
    controls: &dyn ControlSource,
    init: &InitialData,
    t_final: f64,
    sc: &SchemeConfig,
) -> Result<Trajectory, RunError> {
    let fail = |source| RunError { step: 0, source };
    sc.validate().map_err(fail)?;
    let violations = model::validate(params, potential, init, controls);
    if !violations.is_empty() {
        return Err(fail(StepFailure::InvalidData(violations)));
    }
    let n_steps = step_count(t_final, sc.dt).map_err(fail)?;
    let yp = sc.yosida().map_err(|e| fail(e.into()))?;
    let mut state = model::initial_state(init, potential, &yp).map_err(|e| fail(e.into()))?;

    let mut acc = Accumulators::default();
    acc.mu.push(&state.mu, None);
    acc.phi.push(&state.phi, None);
    acc.sigma.push(&state.sigma, None);
    let initial = StepDiagnostics::of(&state, 0, params.alpha, 0);
    let mut snapshots = vec![Snapshot {
        step: 0,
        state: state.clone(),
    }];
    let mut diagnostics = Vec::with_capacity(n_steps);

    for step in 1..=n_steps {
        let (mut next, newton) = advance(&state, params, potential, controls, sc)
            .map_err(|source| RunError { step, source })?;
        next.t = step as f64 * sc.dt;
        acc.mu.push(&next.mu, Some(sc.dt));
        acc.phi.push(&next.phi, Some(sc.dt));
        acc.sigma.push(&next.sigma, Some(sc.dt));
        diagnostics.push(StepDiagnostics::of(&next, step, params.alpha, newton));
        if step % sc.record_every == 0 || step == n_steps {
            snapshots.push(Snapshot {
                step,
                state: next.clone(),
            });
        }
        state = next;
    }

    Ok(Trajectory {
        alpha: params.alpha,
        dt: sc.dt,
        eps: sc.eps,
        snapshots,
        initial,
        diagnostics,
        accumulators: acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::{ProliferationSpec, TruncationSpec};

    fn grid(n: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform_1d(n, 1.0).unwrap())
    }

    fn uniform_state(g: &Arc<Grid>, mu: f64, v: f64, phi: f64, sigma: f64) -> State {
        State {
            mu: Field::constant(g, mu),
            v: Field::constant(g, v),
            phi: Field::constant(g, phi),
            sigma: Field::constant(g, sigma),
            xi: Field::zeros(g),
            t: 0.0,
        }
    }

    fn params(p0: f64) -> ModelParams {
        ModelParams {
            alpha: 0.1,
            tau: 1.0,
            chi: 1.0,
            proliferation: ProliferationSpec::Constant(p0),
            truncation: TruncationSpec::Ramp,
        }
    }

    #[test]
    fn zero_state_is_a_phase_fixed_point() {
        let g = grid(16);
        let s = uniform_state(&g, 0.0, 0.0, 0.0, 0.0);
        for pot in [
            SplitPotential::regular(),
            SplitPotential::logarithmic(2.0).unwrap(),
            SplitPotential::obstacle(1.0).unwrap(),
        ] {
            let out = step_phi(&s, &params(1.0), &pot, &SchemeConfig::new(1e-2)).unwrap();
            assert_eq!(out.phi.max_abs(), 0.0);
            assert_eq!(out.xi.max_abs(), 0.0);
            assert_eq!(out.newton_iterations, 0);
        }
    }

    #[test]
    fn phase_step_matches_scalar_oracle() {
        // spatially constant data: tau (x - phi)/dt + F1,eps'(x) = mu + chi sigma - F2'(phi)
        let g = grid(4);
        let (mu, phi, sigma) = (0.8, 0.3, 0.4);
        let s = uniform_state(&g, mu, 0.0, phi, sigma);
        let sc = SchemeConfig::new(0.05).with_eps(0.01);
        let yp = sc.yosida().unwrap();
        for pot in [
            SplitPotential::regular(),
            SplitPotential::logarithmic(2.0).unwrap(),
            SplitPotential::obstacle(1.0).unwrap(),
        ] {
            let out = step_phi(&s, &params(1.0), &pot, &sc).unwrap();
            let target = mu + sigma - pot.f2_prime(phi);
            let f = |x: f64| (x - phi) / sc.dt + pot.yosida_prime(&yp, x).unwrap() - target;
            let (mut lo, mut hi) = (-5.0f64, 5.0f64);
            for _ in 0..200 {
                let m = 0.5 * (lo + hi);
                if f(m) > 0.0 {
                    hi = m
                } else {
                    lo = m
                }
            }
            for &x in out.phi.values() {
                assert!((x - lo).abs() < 1e-10, "{:?}: {x} vs {lo}", pot.kind());
            }
        }
    }

    #[test]
    fn stationary_phase_is_kept() {
        let g = grid(8);
        let pot = SplitPotential::regular();
        let sc = SchemeConfig::new(1e-2);
        let yp = sc.yosida().unwrap();
        let phi = 0.4;
        // choose mu so that F1,eps'(phi) = mu + chi sigma - F2'(phi) with sigma = 0
        let mu = pot.yosida_prime(&yp, phi).unwrap() + pot.f2_prime(phi);
        let s = uniform_state(&g, mu, 0.0, phi, 0.0);
        let out = step_phi(&s, &params(1.0), &pot, &sc).unwrap();
        assert!(out.phi.values().iter().all(|&x| (x - phi).abs() < 1e-12));
    }

    #[test]
    fn mu_step_with_no_proliferation() {
        let g = grid(4);
        let s = uniform_state(&g, 0.3, 0.7, 0.1, 0.2);
        let phi_next = Field::constant(&g, 0.15);
        let p = params(0.0);
        let sc = SchemeConfig::new(1e-2);
        let (mu, v) = step_mu(&s, &phi_next, &p, &sc, &Field::zeros(&g)).unwrap();
        let expected = 0.7 - (0.15 - 0.1) / p.alpha;
        assert!(v.values().iter().all(|&x| (x - expected).abs() < 1e-12));
        assert!(mu.values().iter().all(|&x| (x - (0.3 + sc.dt * expected)).abs() < 1e-12));
    }

    #[test]
    fn mu_step_vanishing_source() {
        let g = grid(4);
        let s = uniform_state(&g, 0.0, 0.0, 1.0, 0.0);
        let phi_next = Field::constant(&g, 1.0);
        let (mu, v) = step_mu(&s, &phi_next, &params(1.0), &SchemeConfig::new(1e-2), &Field::zeros(&g))
            .unwrap();
        assert_eq!(mu.max_abs(), 0.0);
        assert_eq!(v.max_abs(), 0.0);
        assert!(step_mu(&s, &phi_next, &ModelParams { alpha: 0.0, ..params(1.0) }, &SchemeConfig::new(1e-2), &Field::zeros(&g)).is_err());
    }

    #[test]
    fn limit_mu_step_scalar_algebra() {
        let g = grid(4);
        let s = uniform_state(&g, 0.0, 0.0, 0.2, 0.5);
        let phi_next = Field::constant(&g, 0.25);
        let p = params(2.0);
        let sc = SchemeConfig::new(0.1);
        let u1 = Field::constant(&g, 0.3);
        let mu = step_mu_limit(&s, &phi_next, &p, &sc, &u1).unwrap();
        let h = TruncationSpec::Ramp.eval(0.25);
        let expected = (2.0 * (0.5 + 1.0 * (1.0 - 0.25)) - h * 0.3 - (0.25 - 0.2) / 0.1) / 2.0;
        assert!(mu.values().iter().all(|&x| (x - expected).abs() < 1e-12));

        let zero = uniform_state(&g, 0.0, 0.0, 1.0, 0.0);
        let mu = step_mu_limit(&zero, &Field::constant(&g, 1.0), &p, &sc, &Field::zeros(&g)).unwrap();
        assert_eq!(mu.max_abs(), 0.0);

        let ramp = ModelParams {
            proliferation: ProliferationSpec::Ramp(1.0),
            ..p
        };
        assert!(matches!(
            step_mu_limit(&s, &phi_next, &ramp, &sc, &u1),
            Err(StepFailure::InvalidParams(_))
        ));
    }

    #[test]
    fn sigma_step_scalar_backward_euler() {
        let g = grid(4);
        let s = uniform_state(&g, 0.0, 0.0, 0.2, 0.5);
        let phi_next = Field::constant(&g, 0.3);
        let mu_next = Field::constant(&g, -0.4);
        let p = params(1.5);
        let sc = SchemeConfig::new(0.02);
        let u2 = Field::constant(&g, 0.25);
        let sigma = step_sigma(&s, &phi_next, &mu_next, &p, &sc, &u2).unwrap();
        // (x - 0.5)/dt + 1.5 x = -1.5 (1 (1 - 0.3) + 0.4) + 0.25
        let expected = (0.5 / 0.02 - 1.5 * (0.7 + 0.4) + 0.25) / (1.0 / 0.02 + 1.5);
        assert!(sigma.values().iter().all(|&x| (x - expected).abs() < 1e-12));

        let zero = uniform_state(&g, 0.0, 0.0, 1.0, 0.0);
        let sigma = step_sigma(&zero, &Field::constant(&g, 1.0), &Field::zeros(&g), &p, &sc, &Field::zeros(&g)).unwrap();
        assert_eq!(sigma.max_abs(), 0.0);
    }

    #[test]
    fn sigma_mass_conserved_without_proliferation() {
        let g = grid(32);
        let mut s = uniform_state(&g, 0.0, 0.0, 0.0, 0.0);
        s.sigma = Field::from_fn(&g, |x| 1.0 + (3.0 * x[0]).sin());
        let phi_next = Field::from_fn(&g, |x| (6.0 * x[0]).cos() * 0.5);
        let mu_next = Field::from_fn(&g, |x| x[0]);
        let sc = SchemeConfig::new(1e-3);
        let sigma = step_sigma(&s, &phi_next, &mu_next, &params(0.0), &sc, &Field::zeros(&g)).unwrap();
        assert!((sigma.integrate() - s.sigma.integrate()).abs() < 1e-10);
    }

    #[test]
    fn tiny_alpha_step_matches_limit_step() {
        let g = grid(32);
        let mut s = uniform_state(&g, 0.0, 0.0, 0.0, 1.0);
        s.phi = Field::from_fn(&g, |x| 0.5 * (std::f64::consts::PI * x[0]).cos());
        s.mu = Field::from_fn(&g, |x| 0.2 * x[0]);
        let p = ModelParams { alpha: 1e-8, ..params(2.0) };
        let sc = SchemeConfig::new(1e-3);
        let u1 = Field::constant(&g, 0.3);
        let phi_next = step_phi(&s, &p, &SplitPotential::regular(), &sc).unwrap().phi;
        // start from a chemical potential already close to the limit one so
        // that alpha dv/dt stays O(alpha)
        s.mu = step_mu_limit(&s, &phi_next, &p, &sc, &u1).unwrap();
        let (relaxed, _) = step_mu(&s, &phi_next, &p, &sc, &u1).unwrap();
        let limit = step_mu_limit(&s, &phi_next, &p, &sc, &u1).unwrap();
        assert!(relaxed.sub(&limit).max_abs() < 1e-4);
    }

    #[test]
    fn pure_phase_drifts_by_order_eps() {
        // phi = 1 is a well of the regular potential; with zero mu, sigma and
        // controls only the Yosida bias moves it
        let g = grid(8);
        let zero = crate::model::InitPresets {
            mu0: crate::model::InitPreset::Constant(0.0),
            mu0_prime: crate::model::InitPreset::Constant(0.0),
            phi0: crate::model::InitPreset::Constant(1.0),
            sigma0: crate::model::InitPreset::Constant(0.0),
        };
        let init = InitialData::from_presets(&zero, &g);
        let p = ModelParams {
            proliferation: ProliferationSpec::Constant(0.0),
            truncation: TruncationSpec::Zero,
            ..params(0.0)
        };
        for eps in [1e-2, 1e-3] {
            let sc = SchemeConfig::new(1e-2).with_eps(eps);
            let traj = run(&p, &SplitPotential::regular(), &crate::model::Controls::default(), &init, 0.5, &sc).unwrap();
            let end = traj.final_state();
            let drift = end.phi.map(|x| x - 1.0).max_abs();
            assert!(drift <= 1.5 * eps, "eps {eps}: drift {drift}");
            assert!(drift > 0.0);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let g = grid(16);
        let init = InitialData::from_presets(&crate::model::InitPresets::default(), &g);
        let c = crate::model::Controls {
            u1: crate::model::ControlSpec::Sinusoid { amplitude: 1.0, mode: 1, omega: 3.0 },
            u2: crate::model::ControlSpec::Constant(0.2),
        };
        let pot = SplitPotential::logarithmic(2.0).unwrap();
        let sc = SchemeConfig::new(1e-3);
        let a = run(&params(1.0), &pot, &c, &init, 0.05, &sc).unwrap();
        let b = run(&params(1.0), &pot, &c, &init, 0.05, &sc).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.diagnostics.len(), 50);
        assert!(a.times().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn step_count_checks_multiples() {
        assert_eq!(step_count(0.25, 1e-3).unwrap(), 250);
        assert!(step_count(0.25, 0.3).is_err());
        assert!(step_count(0.0, 0.1).is_err());
    }
}
