//! Solver and potential outputs compared against independent computations:
//! dense linear algebra, closed forms, bisection.

use std::f64::consts::PI;
use std::sync::Arc;

use hyperch::grid::{Field, Grid, ShiftedLaplacian};
use hyperch::norms::{convolve_all, fit_rate, SeriesNorms};
use hyperch::potentials::{SplitPotential, YosidaParams};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

fn dense(grid: &Arc<Grid>, op: impl Fn(&Field) -> Field) -> DMatrix<f64> {
    let n = grid.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = Field::zeros(grid);
        e.values_mut()[j] = 1.0;
        let col = op(&e);
        for i in 0..n {
            m[(i, j)] = col.values()[i];
        }
    }
    m
}

#[test]
fn shifted_solve_matches_dense_lu() {
    for grid in [Grid::uniform_1d(16, 1.0).unwrap(), Grid::square_2d(4, 2.0).unwrap()] {
        let grid = Arc::new(grid);
        let shift = Field::from_fn(&grid, |x| 0.5 + x[0] * x[0]);
        let op = ShiftedLaplacian::new(shift);
        let rhs = Field::from_fn(&grid, |x| (3.0 * x[0]).sin() + x[1]);
        let got = op.solve(&rhs, None, 1e-14, 500).unwrap();

        let m = dense(&grid, |u| op.apply(u));
        let want = m.lu().solve(&DVector::from_column_slice(rhs.values())).unwrap();
        let err = got
            .values()
            .iter()
            .zip(want.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "max difference {err}");
    }
}

#[test]
fn laplacian_spectrum_at_n8() {
    let grid = Arc::new(Grid::uniform_1d(8, 1.0).unwrap());
    let m = dense(&grid, Field::laplacian);
    assert!((&m - m.transpose()).amax() < 1e-12);
    let eig = SymmetricEigen::new(m);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    assert!(vals[0].abs() < 1e-10);
    assert!(vals[1] < -1.0, "second eigenvalue {}", vals[1]);
    // the kernel vector is constant
    let k = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap()
        .0;
    let v = eig.eigenvectors.column(k);
    let spread = v.max() - v.min();
    assert!(spread < 1e-10, "kernel vector not constant: spread {spread}");
}

/// Real root of `eps x^3 + x = r` by Cardano.
fn cardano(eps: f64, r: f64) -> f64 {
    let p = 1.0 / (3.0 * eps);
    let q = r / (2.0 * eps);
    let d = (q * q + p * p * p).sqrt();
    (q + d).cbrt() + (q - d).cbrt()
}

/// `w` with `tanh(w/2) + eps w = r`.
fn log_slope_bisect(eps: f64, r: f64) -> f64 {
    let g = |w: f64| (0.5 * w).tanh() + eps * w - r;
    let (mut lo, mut hi) = (-1e6, 1e6);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn regular_resolvent_matches_cardano() {
    let pot = SplitPotential::regular();
    for eps in [1e-1, 1e-2, 1e-3] {
        let yp = YosidaParams::new(eps).unwrap();
        for i in 0..=40 {
            let r = -5.0 + 0.25 * i as f64;
            let want = cardano(eps, r);
            let got = pot.resolvent(&yp, r).unwrap();
            assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()), "eps {eps} r {r}: {got} vs {want}");
            let slope = pot.yosida_prime(&yp, r).unwrap();
            assert!((slope - want.powi(3)).abs() <= 1e-8 * (1.0 + want.abs().powi(3)));
        }
    }
}

#[test]
fn logarithmic_resolvent_matches_bisection() {
    let pot = SplitPotential::logarithmic(2.0).unwrap();
    for eps in [1e-1, 1e-2, 1e-3] {
        let yp = YosidaParams::new(eps).unwrap();
        for i in 0..=40 {
            let r = -3.0 + 0.15 * i as f64;
            let w = log_slope_bisect(eps, r);
            let got = pot.yosida_prime(&yp, r).unwrap();
            assert!((got - w).abs() <= 1e-8 * (1.0 + w.abs()), "eps {eps} r {r}: {got} vs {w}");
            let x = pot.resolvent(&yp, r).unwrap();
            assert!((x - (0.5 * w).tanh()).abs() < 1e-10);
        }
    }
}

#[test]
fn obstacle_envelope_is_scaled_squared_distance() {
    let pot = SplitPotential::obstacle(1.0).unwrap();
    let eps = 0.01;
    let yp = YosidaParams::new(eps).unwrap();
    for i in 0..=30 {
        let r = -3.0 + 0.2 * i as f64;
        let dist = (r.abs() - 1.0).max(0.0);
        let env = pot.moreau_value(&yp, r).unwrap();
        assert!((env - dist * dist / (2.0 * eps)).abs() < 1e-10);
    }
}

#[test]
fn envelope_matches_brute_force_minimum() {
    // min over a fine grid of y of F1(y) + (r - y)^2 / (2 eps)
    let eps = 0.1;
    let yp = YosidaParams::new(eps).unwrap();
    for pot in [SplitPotential::regular(), SplitPotential::logarithmic(2.0).unwrap()] {
        for r in [-2.0, -0.7, 0.0, 0.3, 1.5] {
            let brute = (0..=400_000)
                .map(|k| -2.0 + 4.0 * k as f64 / 400_000.0)
                .map(|y| pot.f1_value(y) + (r - y) * (r - y) / (2.0 * eps))
                .fold(f64::INFINITY, f64::min);
            let env = pot.moreau_value(&yp, r).unwrap();
            assert!(env <= brute + 1e-12, "{:?} r {r}", pot.kind());
            assert!(brute - env < 1e-6, "{:?} r {r}: {env} vs {brute}", pot.kind());
        }
    }
}

#[test]
fn series_norms_of_a_known_signal() {
    // w(t, x) = t cos(pi x): |w(t)|_H = t / sqrt(2), right-endpoint L2 sum
    let grid = Arc::new(Grid::uniform_1d(64, 1.0).unwrap());
    let mode = Field::from_fn(&grid, |x| (PI * x[0]).cos());
    let hm = mode.h_norm();
    let times: Vec<f64> = (0..=10).map(|k| 0.1 * k as f64).collect();
    let series: Vec<Field> = times.iter().map(|&t| mode.scale(t)).collect();
    let norms = SeriesNorms::of(&series, &times);
    assert!((norms.linf_h - hm).abs() < 1e-14);
    let l2: f64 = times[1..].iter().map(|t| 0.1 * t * t).sum::<f64>().sqrt() * hm;
    assert!((norms.l2_h - l2).abs() < 1e-14);

    // left-endpoint running integral: (1*w)(t_n) = 0.01 n(n-1)/2 cos(pi x)
    let conv = convolve_all(&series, &times);
    for (n, c) in conv.iter().enumerate() {
        let want = mode.scale(0.01 * (n * n.saturating_sub(1)) as f64 / 2.0);
        assert!(c.sub(&want).max_abs() < 1e-13);
    }
}

#[test]
fn rate_fit_recovers_exact_power_law() {
    let pts: Vec<(f64, f64)> = (2..=9).map(|k| 2f64.powi(-k)).map(|a| (a, 3.0 * a.powf(0.5))).collect();
    let fit = fit_rate(&pts).unwrap();
    assert!((fit.slope - 0.5).abs() < 1e-12);
    assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
    assert!(fit.residual < 1e-12);
}
