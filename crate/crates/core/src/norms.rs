//! Discrete space-time norms over recorded trajectories, the running time
//! integral `1 * w`, the two composite error quantities, and log-log fits.
//!
//! Sup-in-time norms are maxima over the recorded snapshots. L2-in-time norms
//! use the rectangle rule with the value at the right end of each interval,
//! matching backward Euler; `1 * w` uses the left-endpoint rule.

use std::sync::Arc;

use thiserror::Error;

use crate::grid::{Field, Grid};
use crate::model::ControlSource;
use crate::stepper::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormError {
    #[error("trajectories do not share grid, time step and snapshot schedule")]
    ScheduleMismatch,
    #[error("degenerate rate fit: {0}")]
    DegenerateFit(String),
}

/// `L^inf(0,T;H)`, `L^inf(0,T;V)`, `L^2(0,T;H)` and `L^2(0,T;V)` of a series.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SeriesNorms {
    pub linf_h: f64,
    pub linf_v: f64,
    pub l2_h: f64,
    pub l2_v: f64,
}

impl SeriesNorms {
    /// `series[k]` is the value at `times[k]`; `times` is increasing and the
    /// first entry only contributes to the sup norms.
    pub fn of(series: &[Field], times: &[f64]) -> Self {
        assert_eq!(series.len(), times.len(), "series and times differ in length");
        let mut out = SeriesNorms::default();
        let (mut l2h, mut l2v) = (0.0, 0.0);
        for (k, f) in series.iter().enumerate() {
            let h = f.h_norm();
            let v = f.v_norm();
            out.linf_h = out.linf_h.max(h);
            out.linf_v = out.linf_v.max(v);
            if k > 0 {
                let w = times[k] - times[k - 1];
                l2h += w * h * h;
                l2v += w * v * v;
            }
        }
        out.l2_h = l2h.sqrt();
        out.l2_v = l2v.sqrt();
        out
    }

    /// Norm in `L^inf(0,T;H) ∩ L^2(0,T;V)`.
    pub fn linf_h_l2_v(&self) -> f64 {
        self.linf_h + self.l2_v
    }
}

/// `(1 * w)(t_n) = sum_{k<n} (t_{k+1} - t_k) w(t_k)`, cellwise.
pub fn convolve_one(series: &[Field], times: &[f64], n: usize) -> Field {
    let mut acc = Field::zeros(series[0].grid());
    for k in 0..n {
        acc.axpy(times[k + 1] - times[k], &series[k]);
    }
    acc
}

/// `1 * w` at every recorded time.
pub fn convolve_all(series: &[Field], times: &[f64]) -> Vec<Field> {
    let mut out = Vec::with_capacity(series.len());
    let mut acc = Field::zeros(series[0].grid());
    out.push(acc.clone());
    for k in 1..series.len() {
        acc.axpy(times[k] - times[k - 1], &series[k - 1]);
        out.push(acc.clone());
    }
    out
}

fn check_schedule(a: &Trajectory, b: &Trajectory) -> Result<(), NormError> {
    let same_times = a.snapshots.len() == b.snapshots.len()
        && a
            .snapshots
            .iter()
            .zip(&b.snapshots)
            .all(|(x, y)| x.step == y.step && x.state.t == y.state.t);
    if same_times && a.dt == b.dt && a.grid() == b.grid() {
        Ok(())
    } else {
        Err(NormError::ScheduleMismatch)
    }
}

fn differences(a: &Trajectory, b: &Trajectory, pick: impl Fn(&crate::model::State) -> &Field) -> Vec<Field> {
    a.snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| pick(&x.state).sub(pick(&y.state)))
        .collect()
}

/// Terms of the stability estimate for two runs with different controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContDepTerms {
    pub mu_linf_h: f64,
    pub conv_mu_linf_v: f64,
    pub phi_linf_h_l2_v: f64,
    pub sigma_linf_h_l2_v: f64,
}

impl ContDepTerms {
    pub fn total(&self) -> f64 {
        self.mu_linf_h + self.conv_mu_linf_v + self.phi_linf_h_l2_v + self.sigma_linf_h_l2_v
    }
}

pub fn contdep_terms(a: &Trajectory, b: &Trajectory) -> Result<ContDepTerms, NormError> {
    check_schedule(a, b)?;
    let times = a.times();
    let dmu = differences(a, b, |s| &s.mu);
    let dphi = differences(a, b, |s| &s.phi);
    let dsigma = differences(a, b, |s| &s.sigma);
    Ok(ContDepTerms {
        mu_linf_h: SeriesNorms::of(&dmu, &times).linf_h,
        conv_mu_linf_v: SeriesNorms::of(&convolve_all(&dmu, &times), &times).linf_v,
        phi_linf_h_l2_v: SeriesNorms::of(&dphi, &times).linf_h_l2_v(),
        sigma_linf_h_l2_v: SeriesNorms::of(&dsigma, &times).linf_h_l2_v(),
    })
}

/// Left side of the stability estimate:
/// `|mu1-mu2|_{Linf H} + |1*(mu1-mu2)|_{Linf V} + |phi1-phi2|_{Linf H ∩ L2 V}
///  + |sigma1-sigma2|_{Linf H ∩ L2 V}`.
pub fn contdep_lhs(a: &Trajectory, b: &Trajectory) -> Result<f64, NormError> {
    contdep_terms(a, b).map(|t| t.total())
}

/// Right side without the constant:
/// `|u1^1 - u1^2|_{L2 H} + |u2^1 - u2^2|_{L2 H}`, with the controls sampled
/// at the given times (the stepper samples at the right end of each step).
pub fn contdep_rhs(
    c1: &dyn ControlSource,
    c2: &dyn ControlSource,
    grid: &Arc<Grid>,
    times: &[f64],
) -> f64 {
    let (mut d1, mut d2) = (Vec::new(), Vec::new());
    for &t in times {
        let (a1, a2) = c1.sample(t, grid);
        let (b1, b2) = c2.sample(t, grid);
        d1.push(a1.sub(&b1));
        d2.push(a2.sub(&b2));
    }
    SeriesNorms::of(&d1, times).l2_h + SeriesNorms::of(&d2, times).l2_h
}

/// Terms of the vanishing-relaxation error composite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaError {
    /// `alpha^{1/2} |mu_alpha|_{Linf H}`
    pub mu_weighted: f64,
    pub conv_mu_linf_v: f64,
    pub phi_linf_h: f64,
    pub phi_l2_v: f64,
    pub sigma_l2_h: f64,
    pub conv_sigma_linf_v: f64,
}

impl AlphaError {
    pub fn composite(&self) -> f64 {
        self.mu_weighted
            + self.conv_mu_linf_v
            + self.phi_linf_h
            + self.phi_l2_v
            + self.sigma_l2_h
            + self.conv_sigma_linf_v
    }
}

/// `alpha^{1/2}|mu_a|_{Linf H} + |1*(mu_a - mu)|_{Linf V}
///  + |phi_a - phi|_{Linf H ∩ L2 V} + |sigma_a - sigma|_{L2 H}
///  + |1*(sigma_a - sigma)|_{Linf V}`
pub fn alpha_error(
    relaxed: &Trajectory,
    limit: &Trajectory,
    alpha: f64,
) -> Result<AlphaError, NormError> {
    check_schedule(relaxed, limit)?;
    let times = relaxed.times();
    let mu_a: Vec<Field> = relaxed.series(|s| &s.mu).into_iter().cloned().collect();
    let dmu = differences(relaxed, limit, |s| &s.mu);
    let dphi = differences(relaxed, limit, |s| &s.phi);
    let dsigma = differences(relaxed, limit, |s| &s.sigma);
    let phi = SeriesNorms::of(&dphi, &times);
    Ok(AlphaError {
        mu_weighted: alpha.sqrt() * SeriesNorms::of(&mu_a, &times).linf_h,
        conv_mu_linf_v: SeriesNorms::of(&convolve_all(&dmu, &times), &times).linf_v,
        phi_linf_h: phi.linf_h,
        phi_l2_v: phi.l2_v,
        sigma_l2_h: SeriesNorms::of(&dsigma, &times).l2_h,
        conv_sigma_linf_v: SeriesNorms::of(&convolve_all(&dsigma, &times), &times).linf_v,
    })
}

/// Least-squares line through `(ln param, ln error)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: Vec<(f64, f64)>,
    /// Root of the summed squared residuals in log-log coordinates.
    pub residual: f64,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit, NormError> {
    if points.len() < 3 {
        return Err(NormError::DegenerateFit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(p, e)) = points.iter().find(|&&(p, e)| !(p > 0.0) || !(e > 0.0)) {
        return Err(NormError::DegenerateFit(format!(
            "parameters and errors must be positive, got ({p}, {e})"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(NormError::DegenerateFit("all parameters coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(RateFit {
        slope,
        intercept,
        points: points.to_vec(),
        residual,
    })
}
