//! Weighted Dirichlet eigenproblems  -phi'' = lambda r(x) phi  on the grid.
//!
//! The discrete problem is the pencil L phi = lambda R phi with L the negated
//! Laplacian (SPD tridiagonal) and R = diag(r). For 0 <= sigma the number of
//! negative pivots of L - sigma R counts the positive eigenvalues below sigma,
//! which gives a safe bracket even when r changes sign. The eigenvector then
//! comes from shift-and-invert iteration just below the bracket.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dot, gradient_energy, inner_product, Field, Grid};
use crate::linalg::{sturm_count, symmetric_tridiagonal_eigenvalue, Tridiagonal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSpec {
    /// cos(x) + 1
    Cos1,
    /// sin(x) + 1
    Sin1,
    Constant(f64),
    /// Piecewise linear through (x, r); clamped outside the table.
    Tabulated { x: Vec<f64>, r: Vec<f64> },
}

impl ProfileSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ProfileSpec::Cos1 => x.cos() + 1.0,
            ProfileSpec::Sin1 => x.sin() + 1.0,
            ProfileSpec::Constant(c) => *c,
            ProfileSpec::Tabulated { x: xs, r } => {
                if x <= xs[0] {
                    return r[0];
                }
                let last = xs.len() - 1;
                if x >= xs[last] {
                    return r[last];
                }
                let k = xs.partition_point(|&t| t <= x) - 1;
                let s = (x - xs[k]) / (xs[k + 1] - xs[k]);
                r[k] + s * (r[k + 1] - r[k])
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProfileSpec::Constant(c) if !c.is_finite() => {
                Err(Error::InvalidArgument("constant profile must be finite".into()))
            }
            ProfileSpec::Tabulated { x, r } => {
                if x.len() < 2 || x.len() != r.len() {
                    return Err(Error::InvalidArgument(
                        "tabulated profile needs matching x and r with at least two points".into(),
                    ));
                }
                if x.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidArgument("tabulated x must increase".into()));
                }
                if x.iter().chain(r).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("tabulated profile has non-finite entries".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceProfile {
    pub kind: ProfileSpec,
    pub samples: Field,
}

impl ResourceProfile {
    pub fn new(kind: ProfileSpec, grid: Grid) -> Result<Self> {
        kind.validate()?;
        let samples = grid.sample(|x| kind.eval(x));
        if samples.max() <= 0.0 {
            return Err(Error::NoPositiveResource);
        }
        Ok(ResourceProfile { kind, samples })
    }

    pub fn grid(&self) -> &Grid {
        self.samples.grid()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda_star: f64,
    /// Positive, L2-normalized.
    pub phi: Field,
    /// ||L phi - lambda R phi|| / ||phi||
    pub residual: f64,
    pub iterations: usize,
}

const MAX_ITER: usize = 500;

fn laplace_bands(grid: &Grid) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n();
    let c = 1.0 / (grid.h() * grid.h());
    (vec![2.0 * c; n], vec![-c; n.saturating_sub(1)])
}

fn pencil_count(diag: &[f64], off: &[f64], r: &[f64], sigma: f64) -> usize {
    let shifted: Vec<f64> = diag.iter().zip(r).map(|(d, ri)| d - sigma * ri).collect();
    sturm_count(&shifted, off, 0.0)
}

/// Bracket (lo, hi) around the k-th (0-based) positive generalized eigenvalue.
fn bracket_positive(
    diag: &[f64],
    off: &[f64],
    r: &[f64],
    k: usize,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut grow = 0;
    while pencil_count(diag, off, r, hi) <= k {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::NoConvergence {
                what: "eigenvalue bracketing",
                iterations: grow,
            });
        }
    }
    for _ in 0..200 {
        if hi - lo <= rel_tol * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if pencil_count(diag, off, r, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

fn apply_laplace(diag: &[f64], off: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for j in 0..n {
        let mut s = diag[j] * x[j];
        if j > 0 {
            s += off[j - 1] * x[j - 1];
        }
        if j + 1 < n {
            s += off[j] * x[j + 1];
        }
        out[j] = s;
    }
}

/// Smallest eigenvalue of L phi = lambda R phi among modes with
/// integral r phi^2 > 0, with its positive L2-normalized eigenfunction.
pub fn principal_eigen(profile: &ResourceProfile) -> Result<EigenPair> {
    let grid = *profile.grid();
    let r = profile.samples.values();
    if profile.samples.max() <= 0.0 {
        return Err(Error::NoPositiveResource);
    }
    let n = grid.n();
    let h = grid.h();
    let (diag, off) = laplace_bands(&grid);

    let (lo, hi) = bracket_positive(&diag, &off, r, 0, 1e-9)?;
    // L - sigma R is positive definite for 0 <= sigma < lambda*
    let sigma = lo;
    let shifted: Vec<f64> = diag.iter().zip(r).map(|(d, ri)| d - sigma * ri).collect();
    let solver = Tridiagonal::factor(&off, &shifted, &off)?;

    let tol = 1e-10f64.max(64.0 * f64::EPSILON * 4.0 / (h * h));
    let mut x = vec![1.0; n];
    let mut lx = vec![0.0; n];
    let mut lambda_prev = f64::NAN;
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITER {
        let mut y: Vec<f64> = x.iter().zip(r).map(|(a, b)| a * b).collect();
        solver.solve_in_place(&mut y);
        let norm = dot(h, &y, &y).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NoConvergence {
                what: "inverse iteration",
                iterations: it,
            });
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
        apply_laplace(&diag, &off, &x, &mut lx);
        let num = dot(h, &x, &lx);
        let den: f64 = h * x.iter().zip(r).map(|(a, b)| a * a * b).sum::<f64>();
        let lambda = num / den;
        residual = lx
            .iter()
            .zip(&x)
            .zip(r)
            .map(|((l, xi), ri)| {
                let e = l - lambda * ri * xi;
                e * e
            })
            .sum::<f64>();
        residual = (h * residual).sqrt();
        let settled = (lambda - lambda_prev).abs() < 1e-12 * lambda.abs().max(1.0);
        lambda_prev = lambda;
        if settled && residual < tol {
            if x.iter().sum::<f64>() < 0.0 {
                x.iter_mut().for_each(|v| *v = -*v);
            }
            let phi = Field::new(grid, x)?;
            let weight = inner_product(&profile.samples, &phi.map(|v| v * v))?;
            if weight <= 0.0 || phi.min() <= 0.0 || !(lambda >= lo * (1.0 - 1e-9) && lambda <= hi * (1.0 + 1e-9)) {
                return Err(Error::Admissibility(
                    "converged mode is not the positive principal mode".into(),
                ));
            }
            return Ok(EigenPair {
                lambda_star: lambda,
                phi,
                residual,
                iterations: it,
            });
        }
    }
    let _ = residual;
    Err(Error::NoConvergence {
        what: "inverse iteration",
        iterations: MAX_ITER,
    })
}

/// k-th (0-based) positive generalized eigenvalue by bisection alone.
pub fn generalized_eigenvalue(profile: &ResourceProfile, k: usize) -> Result<f64> {
    if profile.samples.max() <= 0.0 {
        return Err(Error::NoPositiveResource);
    }
    let (diag, off) = laplace_bands(profile.grid());
    let (lo, hi) = bracket_positive(&diag, &off, profile.samples.values(), k, 4.0 * f64::EPSILON)?;
    Ok(0.5 * (lo + hi))
}

/// Second smallest eigenvalue of the standard problem -(Delta + lambda r).
pub fn second_eigenvalue_shifted(profile: &ResourceProfile, lambda: f64) -> Result<f64> {
    if profile.samples.max() <= 0.0 {
        return Err(Error::NoPositiveResource);
    }
    let (mut diag, off) = laplace_bands(profile.grid());
    if diag.len() < 2 {
        return Err(Error::InvalidArgument("need at least two nodes".into()));
    }
    for (d, r) in diag.iter_mut().zip(profile.samples.values()) {
        *d -= lambda * r;
    }
    symmetric_tridiagonal_eigenvalue(&diag, &off, 1)
}

/// Discrete Rayleigh quotient  int |phi'|^2 / int r phi^2.
pub fn rayleigh_quotient(profile: &ResourceProfile, f: &Field) -> Result<f64> {
    let w = inner_product(&profile.samples, &f.map(|v| v * v))?;
    if w <= 0.0 {
        return Err(Error::Admissibility("int r f^2 <= 0".into()));
    }
    Ok(gradient_energy(f) / w)
}

/// Richardson extrapolation for an O(h^2) quantity from two resolutions.
pub fn richardson(h_coarse: f64, v_coarse: f64, h_fine: f64, v_fine: f64) -> f64 {
    let (a, b) = (h_coarse * h_coarse, h_fine * h_fine);
    (v_fine * a - v_coarse * b) / (a - b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extrapolated {
    pub n_coarse: usize,
    pub coarse: f64,
    pub n_fine: usize,
    pub fine: f64,
    pub value: f64,
}

/// Principal eigenvalue at n_fine and n_fine/2, plus the extrapolated limit.
pub fn extrapolated_eigenvalue(kind: &ProfileSpec, a: f64, b: f64, n_fine: usize) -> Result<Extrapolated> {
    let n_coarse = n_fine / 2;
    if n_coarse == 0 {
        return Err(Error::InvalidArgument("n too small to extrapolate".into()));
    }
    let gc = Grid::new(a, b, n_coarse)?;
    let gf = Grid::new(a, b, n_fine)?;
    let coarse = principal_eigen(&ResourceProfile::new(kind.clone(), gc)?)?.lambda_star;
    let fine = principal_eigen(&ResourceProfile::new(kind.clone(), gf)?)?.lambda_star;
    Ok(Extrapolated {
        n_coarse,
        coarse,
        n_fine,
        fine,
        value: richardson(gc.h(), coarse, gf.h(), fine),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::l2_norm;
    use std::f64::consts::PI;

    fn pi_profile(kind: ProfileSpec, n: usize) -> ResourceProfile {
        ResourceProfile::new(kind, Grid::interval_pi(n).unwrap()).unwrap()
    }

    #[test]
    fn unit_weight_gives_sine_mode() {
        let p = pi_profile(ProfileSpec::Constant(1.0), 200);
        let e = principal_eigen(&p).unwrap();
        let h = p.grid().h();
        // exact discrete eigenvalue of the difference operator
        let exact = (2.0 - 2.0 * h.cos()) / (h * h);
        assert!((e.lambda_star - exact).abs() < 1e-11);
        assert!((l2_norm(&e.phi) - 1.0).abs() < 1e-12);
        let c = (2.0 / PI).sqrt();
        for (j, v) in e.phi.values().iter().enumerate() {
            assert!((v - c * p.grid().x(j + 1).sin()).abs() < 1e-6);
        }
    }

    #[test]
    fn builtin_profiles_rough_values() {
        let e1 = principal_eigen(&pi_profile(ProfileSpec::Cos1, 400)).unwrap();
        let e2 = principal_eigen(&pi_profile(ProfileSpec::Sin1, 400)).unwrap();
        assert!((e1.lambda_star - 0.9291).abs() < 1e-3);
        assert!((e2.lambda_star - 0.5403).abs() < 1e-3);
        assert!(e1.phi.min() > 0.0 && e2.phi.min() > 0.0);
    }

    #[test]
    fn bisection_and_inverse_iteration_agree() {
        let p = pi_profile(ProfileSpec::Cos1, 300);
        let e = principal_eigen(&p).unwrap();
        let b = generalized_eigenvalue(&p, 0).unwrap();
        assert!((e.lambda_star - b).abs() < 1e-10);
        assert!(generalized_eigenvalue(&p, 1).unwrap() > e.lambda_star + 0.5);
    }

    #[test]
    fn sign_changing_weight() {
        // r negative on the left half still has a positive principal mode
        let p = pi_profile(ProfileSpec::Tabulated { x: vec![0.0, PI], r: vec![-1.0, 2.0] }, 200);
        let e = principal_eigen(&p).unwrap();
        assert!(e.phi.min() > 0.0);
        let rq = rayleigh_quotient(&p, &e.phi).unwrap();
        assert!((rq - e.lambda_star).abs() < 1e-8);
    }

    #[test]
    fn nonpositive_weight_rejected() {
        let g = Grid::interval_pi(10).unwrap();
        assert!(matches!(
            ResourceProfile::new(ProfileSpec::Constant(-1.0), g),
            Err(Error::NoPositiveResource)
        ));
    }

    #[test]
    fn second_shifted_eigenvalue_unit_weight() {
        let p = pi_profile(ProfileSpec::Constant(1.0), 400);
        assert!((second_eigenvalue_shifted(&p, 0.0).unwrap() - 4.0).abs() < 1e-3);
        assert!((second_eigenvalue_shifted(&p, 1.0).unwrap() - 3.0).abs() < 1e-3);
    }

    #[test]
    fn richardson_removes_h2_term() {
        let v = |h: f64| 2.0 + 0.7 * h * h;
        assert!((richardson(0.2, v(0.2), 0.1, v(0.1)) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn tabulated_interpolation() {
        let t = ProfileSpec::Tabulated { x: vec![0.0, 1.0, 3.0], r: vec![1.0, 3.0, -1.0] };
        assert_eq!(t.eval(-1.0), 1.0);
        assert_eq!(t.eval(0.5), 2.0);
        assert_eq!(t.eval(2.0), 1.0);
        assert_eq!(t.eval(9.0), -1.0);
        assert!(ProfileSpec::Tabulated { x: vec![1.0, 0.0], r: vec![1.0, 1.0] }.validate().is_err());
    }
}
