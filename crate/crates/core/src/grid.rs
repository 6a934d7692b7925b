//! Uniform interior grid on (a, b) with zero Dirichlet values at both ends,
//! second-order difference operators and the matching quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    a: f64,
    b: f64,
    n: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("grid needs at least one interior node".into()));
        }
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::InvalidArgument(format!("bad interval ({a}, {b})")));
        }
        Ok(Grid { a, b, n })
    }

    /// Grid on (0, pi).
    pub fn interval_pi(n: usize) -> Result<Self> {
        Grid::new(0.0, std::f64::consts::PI, n)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / (self.n as f64 + 1.0)
    }

    /// Coordinate of interior node j, 1-based as in x_j = a + j h.
    pub fn x(&self, j: usize) -> f64 {
        self.a + j as f64 * self.h()
    }

    /// Interior node coordinates x_1 .. x_n.
    pub fn nodes(&self) -> Vec<f64> {
        (1..=self.n).map(|j| self.x(j)).collect()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: *self,
            values: self.nodes().into_iter().map(f).collect(),
        }
    }
}

/// Interior values of a function on a grid. Boundary values are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::InvalidArgument(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.n
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite field value".into()));
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Field {
            grid,
            values: vec![0.0; grid.n],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Field {
            grid,
            values: vec![c; grid.n],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        same_grid(self, other)?;
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }
}

fn same_grid(f: &Field, g: &Field) -> Result<()> {
    if f.grid != g.grid {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Ghost value used for the transported density at the two boundary nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ghost {
    /// Dirichlet: u_0 = u_{n+1} = 0.
    #[default]
    Zero,
    /// u_0 = u_{n+1} = 1, so that a unit density reproduces the Laplacian.
    Unit,
}

pub(crate) fn laplacian_into(h: f64, f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let c = 1.0 / (h * h);
    for j in 0..n {
        let left = if j > 0 { f[j - 1] } else { 0.0 };
        let right = if j + 1 < n { f[j + 1] } else { 0.0 };
        out[j] = (left - 2.0 * f[j] + right) * c;
    }
}

/// Face fluxes F_{j+1/2} for j = 0..n (n+1 faces).
fn face_flux(h: f64, u: &[f64], w: &[f64], ghost: Ghost, j: usize) -> f64 {
    let n = u.len();
    let g = match ghost {
        Ghost::Zero => 0.0,
        Ghost::Unit => 1.0,
    };
    let ul = if j == 0 { g } else { u[j - 1] };
    let ur = if j == n { g } else { u[j] };
    let wl = if j == 0 { 0.0 } else { w[j - 1] };
    let wr = if j == n { 0.0 } else { w[j] };
    0.5 * (ul + ur) * (wr - wl) / h
}

pub(crate) fn flux_divergence_into(h: f64, u: &[f64], w: &[f64], ghost: Ghost, out: &mut [f64]) {
    let n = u.len();
    let mut left = face_flux(h, u, w, ghost, 0);
    for j in 0..n {
        let right = face_flux(h, u, w, ghost, j + 1);
        out[j] = (right - left) / h;
        left = right;
    }
}

/// Second-order central difference with zero ghost values.
pub fn laplacian(f: &Field) -> Field {
    let mut out = vec![0.0; f.values.len()];
    laplacian_into(f.grid.h(), &f.values, &mut out);
    Field {
        grid: f.grid,
        values: out,
    }
}

/// Conservative discretization of div(u grad w).
pub fn flux_divergence(u: &Field, w: &Field) -> Result<Field> {
    flux_divergence_with(u, w, Ghost::Zero)
}

pub fn flux_divergence_with(u: &Field, w: &Field, ghost: Ghost) -> Result<Field> {
    same_grid(u, w)?;
    let mut out = vec![0.0; u.values.len()];
    flux_divergence_into(u.grid.h(), &u.values, &w.values, ghost, &mut out);
    Field::new(u.grid, out)
}

/// Boundary face fluxes (F_{1/2}, F_{n+1/2}).
pub fn boundary_fluxes(u: &Field, w: &Field, ghost: Ghost) -> Result<(f64, f64)> {
    same_grid(u, w)?;
    let h = u.grid.h();
    let n = u.values.len();
    Ok((
        face_flux(h, &u.values, &w.values, ghost, 0),
        face_flux(h, &u.values, &w.values, ghost, n),
    ))
}

pub fn inner_product(f: &Field, g: &Field) -> Result<f64> {
    same_grid(f, g)?;
    Ok(dot(f.grid.h(), &f.values, &g.values))
}

pub(crate) fn dot(h: f64, f: &[f64], g: &[f64]) -> f64 {
    h * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
}

pub fn l2_norm(f: &Field) -> f64 {
    dot(f.grid.h(), &f.values, &f.values).sqrt()
}

/// h * sum of values.
pub fn integral(f: &Field) -> f64 {
    f.grid.h() * f.values.iter().sum::<f64>()
}

/// Discrete Dirichlet energy: forward differences over all n+1 intervals,
/// boundary intervals included.
pub fn gradient_energy(f: &Field) -> f64 {
    let h = f.grid.h();
    let v = &f.values;
    let n = v.len();
    let mut s = 0.0;
    for j in 0..=n {
        let l = if j == 0 { 0.0 } else { v[j - 1] };
        let r = if j == n { 0.0 } else { v[j] };
        s += (r - l) * (r - l);
    }
    s / h
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn max_err(f: &Field, exact: impl Fn(f64) -> f64, skip: usize) -> f64 {
        let g = f.grid();
        let n = g.n();
        (skip..n - skip)
            .map(|j| (f.values()[j] - exact(g.x(j + 1))).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn grid_geometry() {
        let g = Grid::interval_pi(9).unwrap();
        assert!((g.h() - PI / 10.0).abs() < 1e-15);
        assert!(g.x(1) > 0.0 && g.x(9) < PI);
        assert!(Grid::new(1.0, 1.0, 3).is_err());
        assert!(Grid::new(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn laplacian_of_sine() {
        let mut errs = vec![];
        for n in [100, 200, 400] {
            let g = Grid::interval_pi(n).unwrap();
            let l = laplacian(&g.sample(f64::sin));
            errs.push(max_err(&l, |x| -x.sin(), 0));
        }
        assert!(errs[1] < 1e-4);
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
        }
    }

    #[test]
    fn laplacian_of_quadratic_is_exact() {
        let g = Grid::interval_pi(50).unwrap();
        let l = laplacian(&g.sample(|x| x * (PI - x)));
        for v in l.values() {
            assert!((v + 2.0).abs() < 1e-9);
        }
        assert_eq!(laplacian(&Field::zeros(g)).max_abs(), 0.0);
    }

    #[test]
    fn unit_density_flux_is_laplacian() {
        let g = Grid::interval_pi(40).unwrap();
        let w = g.sample(|x| x.sin() + 0.3 * (3.0 * x).sin());
        let one = Field::constant(g, 1.0);
        let lap = laplacian(&w);
        let exact = flux_divergence_with(&one, &w, Ghost::Unit).unwrap();
        for (a, b) in exact.values().iter().zip(lap.values()) {
            assert!((a - b).abs() < 1e-10);
        }
        // zero ghost only disturbs the two end nodes
        let zero = flux_divergence(&one, &w).unwrap();
        let n = g.n();
        for j in 1..n - 1 {
            assert!((zero.values()[j] - lap.values()[j]).abs() < 1e-10);
        }
        assert!((zero.values()[0] - lap.values()[0]).abs() > 1e-6);
    }

    #[test]
    fn flux_of_constant_potential_vanishes_inside() {
        let g = Grid::interval_pi(30).unwrap();
        let u = g.sample(|x| 1.0 + x);
        let w = Field::constant(g, 2.5);
        let d = flux_divergence(&u, &w).unwrap();
        for j in 1..g.n() - 1 {
            assert_eq!(d.values()[j], 0.0);
        }
    }

    #[test]
    fn flux_of_sine_against_identity() {
        let mut errs = vec![];
        for n in [100, 200] {
            let g = Grid::interval_pi(n).unwrap();
            let s = g.sample(f64::sin);
            let d = flux_divergence(&s, &s).unwrap();
            errs.push(max_err(&d, |x| (2.0 * x).cos(), n / 10));
        }
        assert!(errs[1] < 1e-3);
        assert!(errs[0] / errs[1] > 3.5);
    }

    #[test]
    fn flux_grid_mismatch() {
        let a = Field::zeros(Grid::interval_pi(4).unwrap());
        let b = Field::zeros(Grid::interval_pi(5).unwrap());
        assert!(matches!(flux_divergence(&a, &b), Err(Error::GridMismatch)));
        assert!(inner_product(&a, &b).is_err());
    }

    #[test]
    fn quadrature_of_trig_products() {
        let g = Grid::interval_pi(400).unwrap();
        let s = g.sample(f64::sin);
        let s2 = g.sample(|x| (2.0 * x).sin());
        assert!((inner_product(&s, &s).unwrap() - PI / 2.0).abs() < 1e-4);
        assert!(inner_product(&s, &s2).unwrap().abs() < 1e-4);
        assert!((l2_norm(&s) - (PI / 2.0).sqrt()).abs() < 1e-4);
        assert_eq!(l2_norm(&Field::zeros(g)), 0.0);
        let c = -3.5;
        assert!((l2_norm(&s.scaled(c)) - c.abs() * l2_norm(&s)).abs() < 1e-14);
    }

    #[test]
    fn gradient_energy_matches_quadratic_form() {
        let g = Grid::interval_pi(25).unwrap();
        let f = g.sample(|x| x.sin() * (1.0 + x));
        let q = -inner_product(&f, &laplacian(&f)).unwrap();
        assert!((gradient_energy(&f) - q).abs() < 1e-12 * q.abs());
    }
}
