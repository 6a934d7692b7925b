//! Small banded solvers. Everything in this crate is 1-D, so tridiagonal and
//! narrow banded systems cover all linear algebra needs.

use crate::error::{Error, Result};

/// Factored tridiagonal matrix (Thomas algorithm, no pivoting).
///
/// Only safe for diagonally dominant or symmetric positive definite
/// matrices, which is what the implicit diffusion solves produce.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    sub: Vec<f64>,
    // modified upper diagonal and reciprocal pivots
    cp: Vec<f64>,
    inv_piv: Vec<f64>,
}

impl Tridiagonal {
    /// `sub[i]` couples row i+1 to column i, `sup[i]` row i to column i+1.
    pub fn factor(sub: &[f64], diag: &[f64], sup: &[f64]) -> Result<Self> {
        let n = diag.len();
        if n == 0 || sub.len() + 1 != n || sup.len() + 1 != n {
            return Err(Error::InvalidArgument("tridiagonal band lengths".into()));
        }
        let mut cp = vec![0.0; n.saturating_sub(1)];
        let mut inv_piv = vec![0.0; n];
        let mut piv = diag[0];
        for i in 0..n {
            if i > 0 {
                piv = diag[i] - sub[i - 1] * cp[i - 1];
            }
            if piv == 0.0 || !piv.is_finite() {
                return Err(Error::Singular(format!("zero pivot at row {i}")));
            }
            inv_piv[i] = 1.0 / piv;
            if i + 1 < n {
                cp[i] = sup[i] * inv_piv[i];
            }
        }
        Ok(Tridiagonal {
            sub: sub.to_vec(),
            cp,
            inv_piv,
        })
    }

    pub fn len(&self) -> usize {
        self.inv_piv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_piv.is_empty()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(x.len(), n);
        x[0] *= self.inv_piv[0];
        for i in 1..n {
            x[i] = (x[i] - self.sub[i - 1] * x[i - 1]) * self.inv_piv[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.cp[i] * x[i + 1];
        }
    }
}

/// Number of negative pivots in the LDL^T factorization of a symmetric
/// tridiagonal matrix (diag - shift). By Sylvester's law of inertia this is
/// the number of eigenvalues below `shift`.
pub fn sturm_count(diag: &[f64], off: &[f64], shift: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..diag.len() {
        let coupling = if i > 0 { off[i - 1] * off[i - 1] / d } else { 0.0 };
        d = diag[i] - shift - coupling;
        if d == 0.0 {
            d = -f64::EPSILON * (diag[i].abs() + shift.abs() + 1.0);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Eigenvalue number `k` (0-based, ascending) of a symmetric tridiagonal
/// matrix by Sturm bisection.
pub fn symmetric_tridiagonal_eigenvalue(diag: &[f64], off: &[f64], k: usize) -> Result<f64> {
    let n = diag.len();
    if k >= n {
        return Err(Error::InvalidArgument(format!("eigenvalue index {k} >= {n}")));
    }
    // Gershgorin bounds
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let mut r = 0.0;
        if i > 0 {
            r += off[i - 1].abs();
        }
        if i + 1 < n {
            r += off[i].abs();
        }
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let scale = lo.abs().max(hi.abs()).max(1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 4.0 * f64::EPSILON * scale {
            break;
        }
        if sturm_count(diag, off, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// General banded matrix with partial pivoting, LAPACK gbsv layout.
///
/// Storage keeps `kl` extra superdiagonals for fill-in from row swaps.
#[derive(Debug, Clone)]
pub struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    // row-major, each row holds columns i-kl ..= i+ku+kl
    data: Vec<f64>,
}

impl Banded {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Banded {
            n,
            kl,
            ku,
            data: vec![0.0; n * width],
        }
    }

    fn width(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        // column j of row i sits at offset j + kl - i
        i * self.width() + (j + self.kl - i)
    }

    /// Adds `value` at (i, j). Panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry outside band");
        let k = self.idx(i, j);
        self.data[k] += value;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku + self.kl {
            return 0.0;
        }
        self.data[self.idx(i, j)]
    }

    /// Replaces row i by the unit row e_i.
    pub fn set_identity_row(&mut self, i: usize) {
        let w = self.width();
        for v in &mut self.data[i * w..(i + 1) * w] {
            *v = 0.0;
        }
        let k = self.idx(i, i);
        self.data[k] = 1.0;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let j0 = i.saturating_sub(self.kl);
            let j1 = (i + self.ku).min(self.n - 1);
            for j in j0..=j1 {
                *yi += self.get(i, j) * x[j];
            }
        }
        y
    }

    /// Gaussian elimination with partial pivoting; consumes the matrix.
    pub fn solve(mut self, rhs: &mut [f64]) -> Result<()> {
        let n = self.n;
        let kl = self.kl;
        let reach = self.ku + self.kl;
        let mut scale = 0.0f64;
        for v in &self.data {
            scale = scale.max(v.abs());
        }
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-300 || best <= scale * 1e-15 * f64::EPSILON {
                return Err(Error::Singular(format!("pivot {k} vanishes")));
            }
            let jmax = (k + reach).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
                rhs.swap(k, p);
            }
            let piv = self.get(k, k);
            for i in k + 1..=last {
                let f = self.get(i, k) / piv;
                if f == 0.0 {
                    continue;
                }
                for j in k..=jmax {
                    let v = self.get(k, j);
                    let t = self.idx(i, j);
                    self.data[t] -= f * v;
                }
                rhs[i] -= f * rhs[k];
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + reach).min(n - 1);
            let mut s = rhs[k];
            for j in k + 1..=jmax {
                s -= self.get(k, j) * rhs[j];
            }
            rhs[k] = s / self.get(k, k);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_known_solution() {
        let n = 6;
        let sub = vec![-1.0; n - 1];
        let sup = vec![-1.0; n - 1];
        let diag = vec![4.0; n];
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 2.0).collect();
        let mut b = vec![0.0; n];
        for i in 0..n {
            b[i] = diag[i] * x_true[i];
            if i > 0 {
                b[i] += sub[i - 1] * x_true[i - 1];
            }
            if i + 1 < n {
                b[i] += sup[i] * x_true[i + 1];
            }
        }
        let t = Tridiagonal::factor(&sub, &diag, &sup).unwrap();
        t.solve_in_place(&mut b);
        for i in 0..n {
            assert!((b[i] - x_true[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn sturm_bisection_on_discrete_laplacian() {
        // eigenvalues of tridiag(-1, 2, -1) are 2 - 2 cos(k pi/(n+1))
        let n = 20;
        let diag = vec![2.0; n];
        let off = vec![-1.0; n - 1];
        for k in 0..n {
            let exact = 2.0 - 2.0 * (((k + 1) as f64) * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            let got = symmetric_tridiagonal_eigenvalue(&diag, &off, k).unwrap();
            assert!((got - exact).abs() < 1e-13, "k={k} {got} {exact}");
        }
    }

    #[test]
    fn banded_pivoting_handles_zero_diagonal() {
        // [[0,1,0],[1,0,1],[0,1,1]] needs a row swap
        let mut m = Banded::zeros(3, 1, 1);
        m.add(0, 1, 1.0);
        m.add(1, 0, 1.0);
        m.add(1, 2, 1.0);
        m.add(2, 1, 1.0);
        m.add(2, 2, 1.0);
        let x = [1.0, -2.0, 3.0];
        let mut b = m.matvec(&x);
        m.solve(&mut b).unwrap();
        for i in 0..3 {
            assert!((b[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn banded_singular_is_reported() {
        let mut m = Banded::zeros(2, 1, 1);
        m.add(0, 0, 1.0);
        m.add(0, 1, 1.0);
        m.add(1, 0, 1.0);
        m.add(1, 1, 1.0);
        let mut b = vec![1.0, 1.0];
        assert!(matches!(m.solve(&mut b), Err(Error::Singular(_))));
    }
}
