//! Double-well potentials written as `F = F1 + F2`, with `F1` convex and
//! lower semicontinuous (`F1 >= 0`, `F1(0) = 0`) and `F2` smooth with a
//! globally Lipschitz derivative.
//!
//! The singular part `F1` is only ever touched through its Moreau-Yosida
//! regularization: the resolvent `J = (I + eps dF1)^-1`, the Yosida derivative
//! `(r - J r) / eps` and the Moreau envelope. All three built-in kinds admit a
//! scalar monotone resolvent equation, solved here by safeguarded Newton.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("invalid potential parameter: {0}")]
    InvalidParameter(String),
    #[error("resolvent Newton did not converge for r = {r}: residual {residual:e} after {iterations} iterations")]
    NewtonDivergence {
        r: f64,
        residual: f64,
        iterations: usize,
    },
    #[error("subdifferential of F1 is empty at r = {r}")]
    OutsideSubdifferentialDomain { r: f64 },
}

/// The three built-in double wells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialKind {
    /// `(1 - r^2)^2 / 4`
    Regular,
    /// Flory-Huggins type logarithmic potential, `k1 > 1`.
    Logarithmic { k1: f64 },
    /// Double obstacle, `k2 > 0`.
    Obstacle { k2: f64 },
}

impl PotentialKind {
    pub fn name(&self) -> &'static str {
        match self {
            PotentialKind::Regular => "regular",
            PotentialKind::Logarithmic { .. } => "logarithmic",
            PotentialKind::Obstacle { .. } => "obstacle",
        }
    }
}

/// Regularization level and scalar root-finding controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YosidaParams {
    pub epsilon: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl YosidaParams {
    pub const DEFAULT_NEWTON_TOL: f64 = 1e-12;
    pub const DEFAULT_NEWTON_MAX_ITER: usize = 100;

    pub fn new(epsilon: f64) -> Result<Self, PotentialError> {
        Self::with_tolerance(
            epsilon,
            Self::DEFAULT_NEWTON_TOL,
            Self::DEFAULT_NEWTON_MAX_ITER,
        )
    }

    pub fn with_tolerance(
        epsilon: f64,
        newton_tol: f64,
        newton_max_iter: usize,
    ) -> Result<Self, PotentialError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(PotentialError::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(newton_tol > 0.0) {
            return Err(PotentialError::InvalidParameter(format!(
                "newton_tol must be positive, got {newton_tol}"
            )));
        }
        if newton_max_iter == 0 {
            return Err(PotentialError::InvalidParameter(
                "newton_max_iter must be at least 1".into(),
            ));
        }
        Ok(Self {
            epsilon,
            newton_tol,
            newton_max_iter,
        })
    }
}

/// Resolvent point together with the subgradient it selects:
/// `point + eps * slope = r` and `slope` lies in `dF1(point)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventPoint {
    pub point: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPotential {
    kind: PotentialKind,
}

impl SplitPotential {
    pub fn new(kind: PotentialKind) -> Result<Self, PotentialError> {
        match kind {
            PotentialKind::Regular => {}
            PotentialKind::Logarithmic { k1 } => {
                if !(k1 > 1.0 && k1.is_finite()) {
                    return Err(PotentialError::InvalidParameter(format!(
                        "logarithmic potential requires k1 > 1, got {k1}"
                    )));
                }
            }
            PotentialKind::Obstacle { k2 } => {
                if !(k2 > 0.0 && k2.is_finite()) {
                    return Err(PotentialError::InvalidParameter(format!(
                        "obstacle potential requires k2 > 0, got {k2}"
                    )));
                }
            }
        }
        Ok(Self { kind })
    }

    pub fn regular() -> Self {
        Self {
            kind: PotentialKind::Regular,
        }
    }

    pub fn logarithmic(k1: f64) -> Result<Self, PotentialError> {
        Self::new(PotentialKind::Logarithmic { k1 })
    }

    pub fn obstacle(k2: f64) -> Result<Self, PotentialError> {
        Self::new(PotentialKind::Obstacle { k2 })
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    /// Effective domain of `F1`; `None` means the whole real line.
    pub fn domain(&self) -> Option<(f64, f64)> {
        match self.kind {
            PotentialKind::Regular => None,
            _ => Some((-1.0, 1.0)),
        }
    }

    pub fn in_domain(&self, r: f64) -> bool {
        match self.domain() {
            None => r.is_finite(),
            Some((lo, hi)) => (lo..=hi).contains(&r),
        }
    }

    /// Whether `dF1(r)` is nonempty.
    pub fn in_subdifferential_domain(&self, r: f64) -> bool {
        match self.kind {
            PotentialKind::Regular => r.is_finite(),
            PotentialKind::Logarithmic { .. } => r.abs() < 1.0,
            PotentialKind::Obstacle { .. } => r.abs() <= 1.0,
        }
    }

    /// Full double well `F1 + F2`.
    pub fn f_value(&self, r: f64) -> f64 {
        self.f1_value(r) + self.f2_value(r)
    }

    pub fn f1_value(&self, r: f64) -> f64 {
        match self.kind {
            PotentialKind::Regular => 0.25 * r.powi(4),
            PotentialKind::Logarithmic { .. } => {
                if r.abs() > 1.0 || r.is_nan() {
                    f64::INFINITY
                } else {
                    entropy(r)
                }
            }
            PotentialKind::Obstacle { .. } => {
                if r.abs() <= 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn f2_value(&self, r: f64) -> f64 {
        match self.kind {
            PotentialKind::Regular => 0.25 - 0.5 * r * r,
            PotentialKind::Logarithmic { k1 } => -k1 * r * r,
            PotentialKind::Obstacle { k2 } => k2 * (1.0 - r * r),
        }
    }

    pub fn f2_prime(&self, r: f64) -> f64 {
        match self.kind {
            PotentialKind::Regular => -r,
            PotentialKind::Logarithmic { k1 } => -2.0 * k1 * r,
            PotentialKind::Obstacle { k2 } => -2.0 * k2 * r,
        }
    }

    /// Lipschitz constant of `F2'`.
    pub fn f2_lipschitz(&self) -> f64 {
        match self.kind {
            PotentialKind::Regular => 1.0,
            PotentialKind::Logarithmic { k1 } => 2.0 * k1,
            PotentialKind::Obstacle { k2 } => 2.0 * k2,
        }
    }

    /// Constants `(c1, c2)` with `|F2(r)| <= c1 + c2 r^2`.
    pub fn f2_growth(&self) -> (f64, f64) {
        match self.kind {
            PotentialKind::Regular => (0.25, 0.5),
            PotentialKind::Logarithmic { k1 } => (0.0, k1),
            PotentialKind::Obstacle { k2 } => (k2, k2),
        }
    }

    /// Solves `x + eps * s = r`, `s in dF1(x)`.
    pub fn resolvent_point(
        &self,
        yp: &YosidaParams,
        r: f64,
    ) -> Result<ResolventPoint, PotentialError> {
        let eps = yp.epsilon;
        match self.kind {
            PotentialKind::Regular => {
                let x = solve_cubic_resolvent(eps, r, yp)?;
                Ok(ResolventPoint {
                    point: x,
                    slope: (r - x) / eps,
                })
            }
            PotentialKind::Logarithmic { .. } => {
                let w = solve_log_resolvent(eps, r, yp)?;
                Ok(ResolventPoint {
                    point: (0.5 * w).tanh(),
                    slope: w,
                })
            }
            PotentialKind::Obstacle { .. } => {
                let x = r.clamp(-1.0, 1.0);
                Ok(ResolventPoint {
                    point: x,
                    slope: (r - x) / eps,
                })
            }
        }
    }

    pub fn resolvent(&self, yp: &YosidaParams, r: f64) -> Result<f64, PotentialError> {
        self.resolvent_point(yp, r).map(|p| p.point)
    }

    /// Yosida derivative `F1,eps'(r) = (r - J r) / eps`.
    pub fn yosida_prime(&self, yp: &YosidaParams, r: f64) -> Result<f64, PotentialError> {
        self.resolvent_point(yp, r).map(|p| p.slope)
    }

    /// Derivative of the Yosida derivative with respect to `r`, in `[0, 1/eps]`.
    /// At the kinks of the obstacle case the interior branch (0) is taken.
    pub fn yosida_second(&self, yp: &YosidaParams, r: f64) -> Result<f64, PotentialError> {
        let eps = yp.epsilon;
        match self.kind {
            PotentialKind::Regular => {
                let x = self.resolvent(yp, r)?;
                let curv = 3.0 * x * x;
                Ok(curv / (1.0 + eps * curv))
            }
            PotentialKind::Logarithmic { .. } => {
                // F1'' = 2 / (1 - x^2) and 1 - x^2 = sech^2(w/2)
                let w = self.yosida_prime(yp, r)?;
                let c = (0.5 * w).cosh();
                let half_gap = 0.5 / (c * c);
                Ok(1.0 / (half_gap + eps))
            }
            PotentialKind::Obstacle { .. } => Ok(if r.abs() > 1.0 { 1.0 / eps } else { 0.0 }),
        }
    }

    /// Moreau envelope `F1(J r) + |r - J r|^2 / (2 eps)`.
    pub fn moreau_value(&self, yp: &YosidaParams, r: f64) -> Result<f64, PotentialError> {
        let p = self.resolvent_point(yp, r)?;
        Ok(self.f1_value(p.point) + 0.5 * yp.epsilon * p.slope * p.slope)
    }

    /// Element of least modulus in `dF1(r)`.
    pub fn minimal_section(&self, r: f64) -> Result<f64, PotentialError> {
        if !self.in_subdifferential_domain(r) {
            return Err(PotentialError::OutsideSubdifferentialDomain { r });
        }
        Ok(match self.kind {
            PotentialKind::Regular => r * r * r,
            PotentialKind::Logarithmic { .. } => 2.0 * r.atanh(),
            PotentialKind::Obstacle { .. } => 0.0,
        })
    }
}

/// `(1+r) ln(1+r) + (1-r) ln(1-r)` on `[-1, 1]` with `0 ln 0 = 0`.
fn entropy(r: f64) -> f64 {
    let plus = if r == -1.0 { 0.0 } else { (1.0 + r) * r.ln_1p() };
    let minus = if r == 1.0 { 0.0 } else { (1.0 - r) * (-r).ln_1p() };
    plus + minus
}

/// Solves `x + eps x^3 = r`. The root has the sign of `r` and `|x| <= |r|`,
/// so `[min(0, r), max(0, r)]` is a bracket.
fn solve_cubic_resolvent(eps: f64, r: f64, yp: &YosidaParams) -> Result<f64, PotentialError> {
    if r == 0.0 {
        return Ok(0.0);
    }
    let g = |x: f64| x + eps * x * x * x - r;
    let dg = |x: f64| 1.0 + 3.0 * eps * x * x;
    let scale = r.abs().max(1.0);
    safeguarded_newton(g, dg, r.min(0.0), r.max(0.0), r, scale, r, yp)
}

/// Solves `tanh(w/2) + eps w = |r|` for `w = ln((1+x)/(1-x))` and restores the
/// sign. In this variable the equation has no endpoint singularity.
fn solve_log_resolvent(eps: f64, r: f64, yp: &YosidaParams) -> Result<f64, PotentialError> {
    if r == 0.0 {
        return Ok(0.0);
    }
    let a = r.abs();
    let g = |w: f64| (0.5 * w).tanh() + eps * w - a;
    let dg = |w: f64| {
        let c = (0.5 * w).cosh();
        0.5 / (c * c) + eps
    };
    let hi = a / eps;
    // seed at the clamped point x0 = clamp(r, domain)
    let x0 = a.min(1.0 - 1e-12);
    let seed = (2.0 * x0.atanh()).min(hi);
    let w = safeguarded_newton(g, dg, 0.0, hi, seed, a.max(1.0), r, yp)?;
    Ok(w.copysign(r))
}

/// Newton on a monotone increasing scalar function with a sign-change bracket
/// `[lo, hi]`; falls back to bisection whenever a step leaves the bracket.
/// Iterates down to machine precision and then checks `|g| <= tol * scale`.
#[allow(clippy::too_many_arguments)]
fn safeguarded_newton(
    g: impl Fn(f64) -> f64,
    dg: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    seed: f64,
    scale: f64,
    r: f64,
    yp: &YosidaParams,
) -> Result<f64, PotentialError> {
    let mut x = seed.clamp(lo, hi);
    for _ in 0..yp.newton_max_iter {
        let gx = g(x);
        if gx == 0.0 {
            return Ok(x);
        }
        if gx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - gx / dg(x);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= 2.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) || hi - lo <= 2.0 * f64::EPSILON * hi.abs().max(lo.abs()) {
            break;
        }
    }
    let residual = g(x).abs();
    if residual <= yp.newton_tol * scale {
        Ok(x)
    } else {
        Err(PotentialError::NewtonDivergence {
            r,
            residual,
            iterations: yp.newton_max_iter,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_kinds() -> Vec<SplitPotential> {
        vec![
            SplitPotential::regular(),
            SplitPotential::logarithmic(2.0).unwrap(),
            SplitPotential::obstacle(1.0).unwrap(),
        ]
    }

    fn yp(eps: f64) -> YosidaParams {
        YosidaParams::new(eps).unwrap()
    }

    #[test]
    fn construction_rejects_bad_constants() {
        assert!(SplitPotential::logarithmic(1.0).is_err());
        assert!(SplitPotential::logarithmic(0.5).is_err());
        assert!(SplitPotential::obstacle(0.0).is_err());
        assert!(SplitPotential::obstacle(-1.0).is_err());
        assert!(YosidaParams::new(0.0).is_err());
        assert!(YosidaParams::with_tolerance(0.1, 0.0, 10).is_err());
    }

    #[test]
    fn f1_examples() {
        for p in all_kinds() {
            assert_eq!(p.f1_value(0.0), 0.0);
        }
        let obs = SplitPotential::obstacle(1.0).unwrap();
        assert_eq!(obs.f1_value(2.0), f64::INFINITY);
        let log = SplitPotential::logarithmic(2.0).unwrap();
        assert!((log.f1_value(1.0) - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!((log.f1_value(-1.0) - 1.386_294_4).abs() < 1e-7);
        assert_eq!(log.f1_value(1.5), f64::INFINITY);
    }

    #[test]
    fn split_reproduces_the_double_wells() {
        let reg = SplitPotential::regular();
        let log = SplitPotential::logarithmic(1.5).unwrap();
        let obs = SplitPotential::obstacle(0.7).unwrap();
        for i in 0..=200 {
            let r = -1.0 + 0.01 * i as f64;
            let f_reg = 0.25 * (1.0 - r * r).powi(2);
            assert!((reg.f_value(r) - f_reg).abs() < 1e-14);
            let f_log = if r.abs() < 1.0 {
                (1.0 + r) * (1.0 + r).ln() + (1.0 - r) * (1.0 - r).ln() - 1.5 * r * r
            } else {
                2.0 * 2f64.ln() - 1.5
            };
            assert!((log.f_value(r) - f_log).abs() < 1e-13, "r={r}");
            assert!((obs.f_value(r) - 0.7 * (1.0 - r * r)).abs() < 1e-15);
        }
        assert_eq!(obs.f_value(1.01), f64::INFINITY);
    }

    #[test]
    fn f2_examples_and_growth() {
        for p in all_kinds() {
            assert_eq!(p.f2_prime(0.0), 0.0);
            let (c1, c2) = p.f2_growth();
            for i in -50..=50 {
                let r = 0.37 * i as f64;
                assert!(p.f2_value(r).abs() <= c1 + c2 * r * r + 1e-12);
            }
            let lip = p.f2_lipschitz();
            assert!((p.f2_prime(1.3) - p.f2_prime(-0.4)).abs() <= lip * 1.7 + 1e-12);
        }
        assert_eq!(SplitPotential::regular().f2_prime(1.0), -1.0);
        assert_eq!(SplitPotential::logarithmic(2.0).unwrap().f2_value(0.5), -0.5);
    }

    #[test]
    fn resolvent_examples() {
        for p in all_kinds() {
            assert_eq!(p.resolvent(&yp(0.3), 0.0).unwrap(), 0.0);
            assert_eq!(p.yosida_prime(&yp(0.3), 0.0).unwrap(), 0.0);
            assert_eq!(p.moreau_value(&yp(0.3), 0.0).unwrap(), 0.0);
        }
        let obs = SplitPotential::obstacle(1.0).unwrap();
        assert_eq!(obs.resolvent(&yp(0.5), 2.0).unwrap(), 1.0);
        assert_eq!(obs.yosida_prime(&yp(0.5), 2.0).unwrap(), 2.0);
        assert_eq!(obs.moreau_value(&yp(0.5), 2.0).unwrap(), 1.0);

        // x^3 + x - 2 = (x - 1)(x^2 + x + 2)
        let reg = SplitPotential::regular();
        assert!((reg.resolvent(&yp(1.0), 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((reg.yosida_prime(&yp(1.0), 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((reg.moreau_value(&yp(1.0), 2.0).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn minimal_section_examples() {
        for p in all_kinds() {
            assert_eq!(p.minimal_section(0.0).unwrap(), 0.0);
        }
        let obs = SplitPotential::obstacle(1.0).unwrap();
        assert_eq!(obs.minimal_section(1.0).unwrap(), 0.0);
        assert!(matches!(
            obs.minimal_section(1.5),
            Err(PotentialError::OutsideSubdifferentialDomain { .. })
        ));
        let log = SplitPotential::logarithmic(2.0).unwrap();
        assert!((log.minimal_section(0.5).unwrap() - 3f64.ln()).abs() < 1e-15);
        assert!(log.minimal_section(1.0).is_err());
        assert!(log.minimal_section(-1.0).is_err());
    }

    #[test]
    fn log_resolvent_residual_and_extreme_inputs() {
        let log = SplitPotential::logarithmic(2.0).unwrap();
        for &eps in &[1e-1, 1e-3, 1e-6] {
            let y = yp(eps);
            for &r in &[0.3, 0.999, 1.0, 1.2, 5.0, 50.0, -3.0] {
                let p = log.resolvent_point(&y, r).unwrap();
                assert!(p.point.abs() <= 1.0);
                let x = p.point;
                if x.abs() < 1.0 {
                    let implied = ((1.0 + x) / (1.0 - x)).ln();
                    let res = (x + eps * implied - r).abs();
                    // the logarithm amplifies rounding of x near the endpoints
                    let tol = 1e-12 * r.abs().max(1.0) + eps * 4.0 * f64::EPSILON / (1.0 - x.abs());
                    assert!(res <= tol, "eps={eps} r={r} res={res}");
                }
                assert!((p.point + eps * p.slope - r).abs() <= 1e-12 * r.abs().max(1.0));
            }
        }
    }

    #[test]
    fn yosida_second_matches_finite_differences() {
        let y = yp(0.05);
        for p in all_kinds() {
            for &r in &[-1.7, -0.6, 0.2, 0.9, 1.4] {
                let h = 1e-6;
                let fd = (p.yosida_prime(&y, r + h).unwrap() - p.yosida_prime(&y, r - h).unwrap())
                    / (2.0 * h);
                let d = p.yosida_second(&y, r).unwrap();
                assert!((fd - d).abs() < 1e-5 * d.abs().max(1.0), "{:?} r={r} fd={fd} d={d}", p.kind());
                assert!(d >= 0.0 && d <= 1.0 / y.epsilon + 1e-9);
            }
        }
    }
}
