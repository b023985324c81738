//! Coefficients, controls and initial data of the tumor-growth system, plus
//! the checks that admissible data must pass before a run.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::grid::{Field, Grid};
use crate::potentials::{PotentialError, PotentialKind, SplitPotential, YosidaParams};

/// Proliferation function `P(phi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProliferationSpec {
    Constant(f64),
    /// `p0 * clamp((1 + phi) / 2, 0, 1)`
    Ramp(f64),
}

impl ProliferationSpec {
    pub fn eval(&self, phi: f64) -> f64 {
        match *self {
            ProliferationSpec::Constant(p0) => p0,
            ProliferationSpec::Ramp(p0) => p0 * ramp(phi),
        }
    }

    pub fn bound(&self) -> f64 {
        match *self {
            ProliferationSpec::Constant(p0) | ProliferationSpec::Ramp(p0) => p0,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            ProliferationSpec::Constant(_) => 0.0,
            ProliferationSpec::Ramp(p0) => 0.5 * p0,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ProliferationSpec::Constant(_))
    }

    /// Smallest value over all phi.
    pub fn infimum(&self) -> f64 {
        match *self {
            ProliferationSpec::Constant(p0) => p0,
            ProliferationSpec::Ramp(_) => 0.0,
        }
    }
}

/// Truncation `h(phi)` localizing the cytotoxic control.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationSpec {
    Ramp,
    One,
    Zero,
}

impl TruncationSpec {
    pub fn eval(&self, phi: f64) -> f64 {
        match self {
            TruncationSpec::Ramp => ramp(phi),
            TruncationSpec::One => 1.0,
            TruncationSpec::Zero => 0.0,
        }
    }
}

fn ramp(phi: f64) -> f64 {
    (0.5 * (1.0 + phi)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Inertial coefficient; zero selects the viscous Cahn-Hilliard limit.
    pub alpha: f64,
    pub tau: f64,
    pub chi: f64,
    pub proliferation: ProliferationSpec,
    pub truncation: TruncationSpec,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            tau: 1.0,
            chi: 1.0,
            // tau * P > 1 keeps the lagged phi/mu coupling of the limit
            // stepper contractive on the mean mode
            proliferation: ProliferationSpec::Constant(2.0),
            truncation: TruncationSpec::Ramp,
        }
    }
}

/// Space-time control preset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlSpec {
    Zero,
    Constant(f64),
    /// Gaussian bump switched on for `t` in `[t_on, t_off]`; `t_off` may be
    /// infinite.
    GaussianPulse {
        amplitude: f64,
        center: [f64; 2],
        width: f64,
        t_on: f64,
        t_off: f64,
    },
    /// `amplitude * prod_d cos(mode pi x_d / L_d) * cos(omega t)`
    Sinusoid { amplitude: f64, mode: u32, omega: f64 },
}

impl ControlSpec {
    pub fn eval(&self, t: f64, grid: &Arc<Grid>) -> Field {
        match *self {
            ControlSpec::Zero => Field::zeros(grid),
            ControlSpec::Constant(c) => Field::constant(grid, c),
            ControlSpec::GaussianPulse {
                amplitude,
                center,
                width,
                t_on,
                t_off,
            } => {
                if t < t_on || t > t_off {
                    return Field::zeros(grid);
                }
                let two_d = grid.dim() == 2;
                Field::from_fn(grid, |x| {
                    let dx = x[0] - center[0];
                    let dy = if two_d { x[1] - center[1] } else { 0.0 };
                    amplitude * (-(dx * dx + dy * dy) / (2.0 * width * width)).exp()
                })
            }
            ControlSpec::Sinusoid {
                amplitude,
                mode,
                omega,
            } => {
                let time = (omega * t).cos();
                let len = grid.length().to_vec();
                Field::from_fn(grid, |x| {
                    let space: f64 = len
                        .iter()
                        .enumerate()
                        .map(|(d, l)| (mode as f64 * PI * x[d] / l).cos())
                        .product();
                    amplitude * space * time
                })
            }
        }
    }

    /// Uniform bound on `|u(t, x)|`.
    pub fn amplitude(&self) -> f64 {
        match *self {
            ControlSpec::Zero => 0.0,
            ControlSpec::Constant(c) => c.abs(),
            ControlSpec::GaussianPulse { amplitude, .. } | ControlSpec::Sinusoid { amplitude, .. } => {
                amplitude.abs()
            }
        }
    }

    fn params_finite(&self) -> bool {
        match *self {
            ControlSpec::Zero => true,
            ControlSpec::Constant(c) => c.is_finite(),
            ControlSpec::GaussianPulse {
                amplitude,
                center,
                width,
                t_on,
                t_off,
            } => {
                amplitude.is_finite()
                    && center.iter().all(|c| c.is_finite())
                    && width > 0.0
                    && width.is_finite()
                    && t_on.is_finite()
                    && t_on <= t_off
            }
            ControlSpec::Sinusoid {
                amplitude, omega, ..
            } => amplitude.is_finite() && omega.is_finite(),
        }
    }
}

/// Sample a control at cell centers.
pub fn eval_control(spec: &ControlSpec, t: f64, grid: &Arc<Grid>) -> Field {
    spec.eval(t, grid)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controls {
    pub u1: ControlSpec,
    pub u2: ControlSpec,
}

impl Default for Controls {
    fn default() -> Self {
        Self {
            u1: ControlSpec::Zero,
            u2: ControlSpec::Zero,
        }
    }
}

/// Anything that yields the control pair `(u1, u2)` at a given time.
pub trait ControlSource: Sync {
    fn sample(&self, t: f64, grid: &Arc<Grid>) -> (Field, Field);
    fn violations(&self) -> Vec<Violation>;
}

impl ControlSource for Controls {
    fn sample(&self, t: f64, grid: &Arc<Grid>) -> (Field, Field) {
        (self.u1.eval(t, grid), self.u2.eval(t, grid))
    }

    fn violations(&self) -> Vec<Violation> {
        [("u1", &self.u1), ("u2", &self.u2)]
            .into_iter()
            .filter(|(_, c)| !c.params_finite())
            .map(|(name, c)| Violation {
                code: ViolationCode::ControlInvalid,
                message: format!("control {name} has invalid parameters: {c:?}"),
            })
            .collect()
    }
}

/// `base + delta * direction`, componentwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbedControls {
    pub base: Controls,
    pub direction: Controls,
    pub delta: f64,
}

impl ControlSource for PerturbedControls {
    fn sample(&self, t: f64, grid: &Arc<Grid>) -> (Field, Field) {
        let (mut u1, mut u2) = self.base.sample(t, grid);
        if self.delta != 0.0 {
            let (d1, d2) = self.direction.sample(t, grid);
            u1.axpy(self.delta, &d1);
            u2.axpy(self.delta, &d2);
        }
        (u1, u2)
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = self.base.violations();
        out.extend(self.direction.violations());
        if !self.delta.is_finite() {
            out.push(Violation {
                code: ViolationCode::ControlInvalid,
                message: format!("perturbation size {} is not finite", self.delta),
            });
        }
        out
    }
}

/// Initial-field preset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitPreset {
    Constant(f64),
    /// `amplitude * prod_d cos(mode pi x_d / L_d)`
    CosineBump { amplitude: f64, mode: u32 },
    /// Interface along x: `mid + half * tanh((x - center) / width)` running
    /// from `low` to `high`.
    TanhInterface {
        center: f64,
        width: f64,
        low: f64,
        high: f64,
    },
}

impl InitPreset {
    pub fn sample(&self, grid: &Arc<Grid>) -> Field {
        match *self {
            InitPreset::Constant(c) => Field::constant(grid, c),
            InitPreset::CosineBump { amplitude, mode } => {
                let len = grid.length().to_vec();
                Field::from_fn(grid, |x| {
                    amplitude
                        * len
                            .iter()
                            .enumerate()
                            .map(|(d, l)| (mode as f64 * PI * x[d] / l).cos())
                            .product::<f64>()
                })
            }
            InitPreset::TanhInterface {
                center,
                width,
                low,
                high,
            } => {
                let mid = 0.5 * (low + high);
                let half = 0.5 * (high - low);
                Field::from_fn(grid, |x| mid + half * ((x[0] - center) / width).tanh())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitPresets {
    pub mu0: InitPreset,
    pub mu0_prime: InitPreset,
    pub phi0: InitPreset,
    pub sigma0: InitPreset,
}

impl Default for InitPresets {
    fn default() -> Self {
        Self {
            mu0: InitPreset::Constant(0.0),
            mu0_prime: InitPreset::Constant(0.0),
            phi0: InitPreset::CosineBump {
                amplitude: 0.5,
                mode: 1,
            },
            sigma0: InitPreset::Constant(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub mu0: Field,
    /// Initial `d mu / dt`; ignored by the limit stepper.
    pub mu0_prime: Field,
    pub phi0: Field,
    pub sigma0: Field,
}

impl InitialData {
    pub fn from_presets(presets: &InitPresets, grid: &Arc<Grid>) -> Self {
        Self {
            mu0: presets.mu0.sample(grid),
            mu0_prime: presets.mu0_prime.sample(grid),
            phi0: presets.phi0.sample(grid),
            sigma0: presets.sigma0.sample(grid),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.phi0.grid()
    }
}

/// The unknowns at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub mu: Field,
    /// Discrete `d mu / dt`.
    pub v: Field,
    pub phi: Field,
    pub sigma: Field,
    /// Yosida selection `F1,eps'(phi)`.
    pub xi: Field,
    pub t: f64,
}

pub fn initial_state(
    init: &InitialData,
    potential: &SplitPotential,
    yp: &YosidaParams,
) -> Result<State, PotentialError> {
    let mut xi = Field::zeros(init.grid());
    for (x, &p) in xi.values_mut().iter_mut().zip(init.phi0.values()) {
        *x = potential.yosida_prime(yp, p)?;
    }
    Ok(State {
        mu: init.mu0.clone(),
        v: init.mu0_prime.clone(),
        phi: init.phi0.clone(),
        sigma: init.sigma0.clone(),
        xi,
        t: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationCode {
    AlphaNegative,
    TauNotPositive,
    ChiNotPositive,
    ProliferationInvalid,
    LimitNeedsPositiveProliferation,
    NonFiniteInitialData,
    Phi0OutsideDomain,
    Phi0OnSubdifferentialBoundary,
    GridMismatch,
    ControlInvalid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.code, self.message)
    }
}

/// Returns every violated admissibility condition; an empty list means the
/// data may be run.
pub fn validate(
    params: &ModelParams,
    potential: &SplitPotential,
    init: &InitialData,
    controls: &dyn ControlSource,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |code, message: String| out.push(Violation { code, message });

    if !(params.alpha >= 0.0 && params.alpha.is_finite()) {
        push(
            ViolationCode::AlphaNegative,
            format!("alpha must be nonnegative, got {}", params.alpha),
        );
    }
    if !(params.tau > 0.0 && params.tau.is_finite()) {
        push(
            ViolationCode::TauNotPositive,
            format!("tau must be positive, got {}", params.tau),
        );
    }
    if !(params.chi > 0.0 && params.chi.is_finite()) {
        push(
            ViolationCode::ChiNotPositive,
            format!("chi must be positive, got {}", params.chi),
        );
    }
    let p_ok = match params.proliferation {
        ProliferationSpec::Constant(p0) => p0 >= 0.0 && p0.is_finite(),
        ProliferationSpec::Ramp(p0) => p0 > 0.0 && p0.is_finite(),
    };
    if !p_ok {
        push(
            ViolationCode::ProliferationInvalid,
            format!("proliferation {:?} is not nonnegative and bounded", params.proliferation),
        );
    }
    if params.alpha == 0.0 && !(params.proliferation.infimum() > 0.0) {
        push(
            ViolationCode::LimitNeedsPositiveProliferation,
            "the alpha = 0 limit system needs a positive constant proliferation".into(),
        );
    }

    let fields = [
        ("mu0", &init.mu0),
        ("mu0_prime", &init.mu0_prime),
        ("phi0", &init.phi0),
        ("sigma0", &init.sigma0),
    ];
    for (name, f) in fields {
        if !f.same_grid(&init.phi0) {
            push(
                ViolationCode::GridMismatch,
                format!("{name} is not on the phi0 grid"),
            );
        } else if f.check_finite().is_err() {
            push(
                ViolationCode::NonFiniteInitialData,
                format!("{name} has non-finite values"),
            );
        }
    }

    let phi0 = init.phi0.values();
    if phi0.iter().any(|&p| !potential.in_domain(p)) {
        push(
            ViolationCode::Phi0OutsideDomain,
            "phi0 leaves the effective domain of F1".into(),
        );
    } else if phi0.iter().any(|&p| !potential.in_subdifferential_domain(p)) {
        push(
            ViolationCode::Phi0OnSubdifferentialBoundary,
            "phi0 on boundary of domain of dF1".into(),
        );
    }

    out.extend(controls.violations());
    out
}

/// Requires a logarithmic potential and `|(dF1)°(phi0)|` bounded, the data
/// class under which phi separates from the pure phases.
pub fn validate_separation_data(potential: &SplitPotential, init: &InitialData) -> Vec<Violation> {
    let mut out = Vec::new();
    if !matches!(potential.kind(), PotentialKind::Logarithmic { .. }) {
        out.push(Violation {
            code: ViolationCode::Phi0OutsideDomain,
            message: "separation is stated for the logarithmic potential only".into(),
        });
        return out;
    }
    let sup = init
        .phi0
        .values()
        .iter()
        .map(|&p| potential.minimal_section(p).map(f64::abs).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    if !sup.is_finite() {
        out.push(Violation {
            code: ViolationCode::Phi0OnSubdifferentialBoundary,
            message: "minimal section of dF1 at phi0 is unbounded".into(),
        });
    }
    out
}
