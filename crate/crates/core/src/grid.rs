//! Cell-centered box grids (1D or 2D) with homogeneous-Neumann finite
//! differences.
//!
//! Boundary conditions are realized through mirror ghost cells, so the
//! Laplacian is assembled in flux form over interior faces only. This makes
//! the discrete operator symmetric, negative semidefinite with kernel equal to
//! the constants, and exactly mass-conservative.

use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("conjugate gradient did not converge: {iterations} iterations, relative residual {residual:e}")]
    CgNoConvergence { iterations: usize, residual: f64 },
    #[error("field has non-finite value at cell {index}")]
    NonFinite { index: usize },
    #[error("malformed field CSV at line {line}: {message}")]
    Csv { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: Vec<usize>,
    length: Vec<f64>,
    h: Vec<f64>,
}

impl Grid {
    pub fn new(n: &[usize], length: &[f64]) -> Result<Self, GridError> {
        if n.is_empty() || n.len() > 2 {
            return Err(GridError::InvalidGrid(format!(
                "dimension must be 1 or 2, got {}",
                n.len()
            )));
        }
        if n.len() != length.len() {
            return Err(GridError::InvalidGrid(
                "cell counts and edge lengths differ in dimension".into(),
            ));
        }
        if let Some(&bad) = n.iter().find(|&&k| k < 2) {
            return Err(GridError::InvalidGrid(format!(
                "need at least 2 cells per axis, got {bad}"
            )));
        }
        if let Some(&bad) = length.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(GridError::InvalidGrid(format!(
                "edge length must be positive, got {bad}"
            )));
        }
        let h = n.iter().zip(length).map(|(&k, &l)| l / k as f64).collect();
        Ok(Self {
            n: n.to_vec(),
            length: length.to_vec(),
            h,
        })
    }

    pub fn uniform_1d(n: usize, length: f64) -> Result<Self, GridError> {
        Self::new(&[n], &[length])
    }

    pub fn square_2d(n: usize, length: f64) -> Result<Self, GridError> {
        Self::new(&[n, n], &[length, length])
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn length(&self) -> &[f64] {
        &self.length
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    /// Measure of the whole box.
    pub fn measure(&self) -> f64 {
        self.length.iter().product()
    }

    /// Cell-center coordinates of flat index `idx` (x first, row-major with x
    /// fastest).
    pub fn center(&self, idx: usize) -> [f64; 2] {
        let nx = self.n[0];
        let ix = idx % nx;
        let iy = idx / nx;
        let x = (ix as f64 + 0.5) * self.h[0];
        let y = if self.dim() == 2 {
            (iy as f64 + 0.5) * self.h[1]
        } else {
            0.0
        };
        [x, y]
    }

    /// Number of interior neighbours of each cell weighted by `1/h^2`, i.e. the
    /// diagonal of `-laplacian`.
    pub fn stencil_diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.len()];
        let nx = self.n[0];
        for (idx, d) in diag.iter_mut().enumerate() {
            let ix = idx % nx;
            let iy = idx / nx;
            let hx2 = self.h[0] * self.h[0];
            *d += (usize::from(ix > 0) + usize::from(ix + 1 < nx)) as f64 / hx2;
            if self.dim() == 2 {
                let ny = self.n[1];
                let hy2 = self.h[1] * self.h[1];
                *d += (usize::from(iy > 0) + usize::from(iy + 1 < ny)) as f64 / hy2;
            }
        }
        diag
    }

    /// Visits each interior face once as `(left, right, 1/h^2)`.
    fn for_each_face(&self, mut f: impl FnMut(usize, usize, f64)) {
        let nx = self.n[0];
        let ny = if self.dim() == 2 { self.n[1] } else { 1 };
        let wx = 1.0 / (self.h[0] * self.h[0]);
        for iy in 0..ny {
            for ix in 0..nx - 1 {
                let i = iy * nx + ix;
                f(i, i + 1, wx);
            }
        }
        if self.dim() == 2 {
            let wy = 1.0 / (self.h[1] * self.h[1]);
            for iy in 0..ny - 1 {
                for ix in 0..nx {
                    let i = iy * nx + ix;
                    f(i, i + nx, wy);
                }
            }
        }
    }
}

/// A scalar unknown sampled at the cell centers of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.center(i))).collect();
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    fn check(&self, other: &Field) -> Result<(), GridError> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(GridError::GridMismatch)
        }
    }

    pub fn check_finite(&self) -> Result<(), GridError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(GridError::NonFinite { index }),
            None => Ok(()),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination; panics on grid mismatch.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert!(self.same_grid(other), "zip_map on mismatched grids");
        Field {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Field) {
        assert!(self.same_grid(x), "axpy on mismatched grids");
        for (s, &v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Neumann Laplacian with mirror ghosts, assembled as a sum of face fluxes.
    pub fn laplacian(&self) -> Field {
        let mut out = vec![0.0; self.values.len()];
        let u = &self.values;
        self.grid.for_each_face(|i, j, w| {
            let flux = w * (u[j] - u[i]);
            out[i] += flux;
            out[j] -= flux;
        });
        Field {
            grid: Arc::clone(&self.grid),
            values: out,
        }
    }

    pub fn inner_product(&self, other: &Field) -> Result<f64, GridError> {
        self.check(other)?;
        Ok(self.dot_unchecked(other))
    }

    fn dot_unchecked(&self, other: &Field) -> f64 {
        self.grid.cell_volume()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn h_norm(&self) -> f64 {
        self.dot_unchecked(self).sqrt()
    }

    /// Face-difference bilinear form `sum_faces |cell| (du/h)(dv/h)`; equals
    /// `(-laplacian(u), v)`.
    pub fn grad_form(&self, other: &Field) -> Result<f64, GridError> {
        self.check(other)?;
        let (u, v) = (&self.values, &other.values);
        let mut acc = 0.0;
        self.grid.for_each_face(|i, j, w| {
            acc += w * (u[j] - u[i]) * (v[j] - v[i]);
        });
        Ok(self.grid.cell_volume() * acc)
    }

    pub fn grad_energy(&self) -> f64 {
        self.grad_form(self).expect("same field")
    }

    pub fn v_norm(&self) -> f64 {
        let h = self.h_norm();
        (h * h + self.grad_energy()).sqrt()
    }

    pub fn integrate(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    /// CSV dump: header `x[,y],value`, one row per cell, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let two = self.grid.dim() == 2;
        s.push_str(if two { "x,y,value\n" } else { "x,value\n" });
        for (i, v) in self.values.iter().enumerate() {
            let c = self.grid.center(i);
            if two {
                let _ = writeln!(s, "{},{},{}", fmt17(c[0]), fmt17(c[1]), fmt17(*v));
            } else {
                let _ = writeln!(s, "{},{}", fmt17(c[0]), fmt17(*v));
            }
        }
        s
    }

    /// Reads a dump produced by [`Field::to_csv`] back onto `grid`.
    pub fn from_csv(grid: &Arc<Grid>, text: &str) -> Result<Field, GridError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(GridError::Csv {
            line: 1,
            message: "empty input".into(),
        })?;
        let expected = if grid.dim() == 2 { "x,y,value" } else { "x,value" };
        if header.trim() != expected {
            return Err(GridError::Csv {
                line: 1,
                message: format!("expected header `{expected}`, got `{header}`"),
            });
        }
        let mut values = Vec::with_capacity(grid.len());
        for (k, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let last = line.rsplit(',').next().unwrap_or("");
            let v: f64 = last.trim().parse().map_err(|_| GridError::Csv {
                line: k + 2,
                message: format!("bad number `{last}`"),
            })?;
            values.push(v);
        }
        Field::from_values(grid, values).map_err(|e| GridError::Csv {
            line: 0,
            message: e.to_string(),
        })
    }
}

/// 17-significant-digit scientific rendering; round-trips every binary64.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Operator `diag(shift) - laplacian` with `shift > 0`, the form of every
/// linear system the stepper solves.
#[derive(Debug, Clone)]
pub struct ShiftedLaplacian {
    shift: Field,
    diagonal: Vec<f64>,
}

impl ShiftedLaplacian {
    pub fn new(shift: Field) -> Self {
        let diagonal = shift
            .grid()
            .stencil_diagonal()
            .iter()
            .zip(shift.values())
            .map(|(d, s)| d + s)
            .collect();
        Self { shift, diagonal }
    }

    pub fn apply(&self, u: &Field) -> Field {
        let mut out = u.laplacian();
        for ((o, &s), &x) in out.values.iter_mut().zip(&self.shift.values).zip(&u.values) {
            *o = s * x - *o;
        }
        out
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn solve(
        &self,
        rhs: &Field,
        guess: Option<&Field>,
        tol: f64,
        max_iter: usize,
    ) -> Result<Field, GridError> {
        solve_spd_with(|u| self.apply(u), rhs, guess, Some(&self.diagonal), tol, max_iter)
    }
}

/// Conjugate gradients for an operator that is SPD in the grid inner
/// product. Stops at relative residual `||b - Ax|| <= tol ||b||`.
pub fn solve_spd(
    apply: impl Fn(&Field) -> Field,
    rhs: &Field,
    tol: f64,
    max_iter: usize,
) -> Result<Field, GridError> {
    solve_spd_with(apply, rhs, None, None, tol, max_iter)
}

/// [`solve_spd`] with an optional initial guess and Jacobi preconditioner.
pub fn solve_spd_with(
    apply: impl Fn(&Field) -> Field,
    rhs: &Field,
    guess: Option<&Field>,
    diagonal: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<Field, GridError> {
    let b_norm = rhs.h_norm();
    if b_norm == 0.0 {
        return Ok(Field::zeros(rhs.grid()));
    }
    let mut x = match guess {
        Some(g) => {
            rhs.check(g)?;
            g.clone()
        }
        None => Field::zeros(rhs.grid()),
    };
    let mut r = rhs.sub(&apply(&x));
    let precondition = |r: &Field| -> Field {
        match diagonal {
            Some(d) => Field {
                grid: Arc::clone(&r.grid),
                values: r.values.iter().zip(d).map(|(v, d)| v / d).collect(),
            },
            None => r.clone(),
        }
    };
    let mut res = r.h_norm() / b_norm;
    if res <= tol {
        return Ok(x);
    }
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = r.dot_unchecked(&z);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = p.dot_unchecked(&ap);
        if !(pap > 0.0) {
            return Err(GridError::CgNoConvergence {
                iterations: it,
                residual: res,
            });
        }
        let a = rz / pap;
        x.axpy(a, &p);
        r.axpy(-a, &ap);
        res = r.h_norm() / b_norm;
        if res <= tol {
            return Ok(x);
        }
        z = precondition(&r);
        let rz_next = r.dot_unchecked(&z);
        let beta = rz_next / rz;
        rz = rz_next;
        for (pi, &zi) in p.values.iter_mut().zip(&z.values) {
            *pi = zi + beta * *pi;
        }
    }
    Err(GridError::CgNoConvergence {
        iterations: max_iter,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1(n: usize, l: f64) -> Arc<Grid> {
        Arc::new(Grid::uniform_1d(n, l).unwrap())
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::uniform_1d(1, 1.0).is_err());
        assert!(Grid::uniform_1d(4, 0.0).is_err());
        assert!(Grid::new(&[2, 2, 2], &[1.0, 1.0, 1.0]).is_err());
        let g = Grid::new(&[4, 3], &[2.0, 1.5]).unwrap();
        assert_eq!(g.len(), 12);
        assert_eq!(g.h(), &[0.5, 0.5]);
        assert_eq!(g.center(5), [0.75, 0.75]);
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = Arc::new(Grid::square_2d(5, 1.0).unwrap());
        let u = Field::constant(&g, 3.5);
        assert!(u.laplacian().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inner_product_examples() {
        let g = grid1(10, 1.0);
        let one = Field::constant(&g, 1.0);
        assert!((one.inner_product(&one).unwrap() - 1.0).abs() < 1e-15);
        let a = Field::from_fn(&g, |c| if c[0] < 0.5 { 1.0 } else { 0.0 });
        let b = Field::from_fn(&g, |c| if c[0] < 0.5 { 0.0 } else { 1.0 });
        assert_eq!(a.inner_product(&b).unwrap(), 0.0);
        let other = grid1(12, 1.0);
        assert_eq!(
            a.inner_product(&Field::zeros(&other)),
            Err(GridError::GridMismatch)
        );
    }

    #[test]
    fn grad_energy_two_cells() {
        let g = grid1(2, 1.0);
        let u = Field::from_values(&g, vec![0.0, 1.0]).unwrap();
        assert!((u.grad_energy() - 2.0).abs() < 1e-15);
        assert_eq!(Field::constant(&g, 7.0).grad_energy(), 0.0);
        assert!((u.v_norm() - (0.5f64 + 2.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cg_identity_and_constants() {
        let g = grid1(16, 1.0);
        let rhs = Field::from_fn(&g, |c| c[0].sin());
        let x = solve_spd(|u| u.clone(), &rhs, 1e-12, 10).unwrap();
        assert!(x.sub(&rhs).max_abs() < 1e-14);

        let op = ShiftedLaplacian::new(Field::constant(&g, 1.0));
        let c = Field::constant(&g, 2.5);
        let x = op.solve(&c, None, 1e-12, 100).unwrap();
        assert!(x.sub(&c).max_abs() < 1e-12);
    }

    #[test]
    fn cg_reports_non_convergence() {
        let g = grid1(64, 1.0);
        let op = ShiftedLaplacian::new(Field::constant(&g, 1e-3));
        let rhs = Field::from_fn(&g, |c| c[0] * c[0]);
        match op.solve(&rhs, None, 1e-14, 2) {
            Err(GridError::CgNoConvergence { iterations, .. }) => assert_eq!(iterations, 2),
            other => panic!("expected CgNoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_2d() {
        let g = Arc::new(Grid::new(&[3, 2], &[1.0, 2.0]).unwrap());
        let u = Field::from_fn(&g, |c| (c[0] * 7.1).exp() / 3.0 - c[1]);
        let text = u.to_csv();
        assert!(text.starts_with("x,y,value\n"));
        assert_eq!(text.lines().count(), 7);
        let back = Field::from_csv(&g, &text).unwrap();
        assert_eq!(back, u);
    }
}
