//! Direct solvers for applying the inverse of the banded preconditioner:
//! Thomas algorithm for the tridiagonal case, unpivoted in-band LU for
//! wider bands.
//!
//! No pivoting is performed; the target matrices are diagonally dominant.
//! A zero pivot or excessive element growth is reported as an error so
//! callers can fall back to the identity preconditioner.

use crate::error::Error;
use crate::linalg::BandedMatrix;

const PIVOT_FLOOR: f64 = 1e-300;
const GROWTH_LIMIT: f64 = 1e100;

/// Solve the tridiagonal system `N x = rhs` in O(n).
pub fn thomas_solve(n: &BandedMatrix, rhs: &[f64]) -> Result<Vec<f64>, Error> {
    thomas_solve_counted(n, rhs).map(|(x, _)| x)
}

/// [`thomas_solve`] with an elementary floating-point operation count,
/// used by the cost-linearity checks.
pub fn thomas_solve_counted(n: &BandedMatrix, rhs: &[f64]) -> Result<(Vec<f64>, usize), Error> {
    if n.half_bandwidth() != 1 {
        return Err(Error::Config(format!(
            "thomas_solve requires d = 1, got d = {}",
            n.half_bandwidth()
        )));
    }
    let dim = n.n();
    if rhs.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: rhs.len(),
        });
    }
    let mut ops = 0usize;
    let mut c = vec![0.0; dim]; // modified superdiagonal
    let mut g = vec![0.0; dim]; // modified rhs

    let mut pivot = n.get(0, 0);
    if pivot.abs() < PIVOT_FLOOR {
        return Err(Error::Singular("zero pivot in row 0".into()));
    }
    if dim > 1 {
        c[0] = n.get(0, 1) / pivot;
        ops += 1;
    }
    g[0] = rhs[0] / pivot;
    ops += 1;

    for i in 1..dim {
        let sub = n.get(i, i - 1);
        pivot = n.get(i, i) - sub * c[i - 1];
        ops += 2;
        if pivot.abs() < PIVOT_FLOOR {
            return Err(Error::Singular(format!("zero pivot in row {i}")));
        }
        if i + 1 < dim {
            c[i] = n.get(i, i + 1) / pivot;
            ops += 1;
        }
        g[i] = (rhs[i] - sub * g[i - 1]) / pivot;
        ops += 3;
        if !g[i].is_finite() || g[i].abs() > GROWTH_LIMIT {
            return Err(Error::Singular(format!("element growth in row {i}")));
        }
    }

    let mut x = g;
    for i in (0..dim.saturating_sub(1)).rev() {
        x[i] -= c[i] * x[i + 1];
        ops += 2;
    }
    Ok((x, ops))
}

/// In-band LU factors of a banded matrix, reusable across solves.
#[derive(Debug, Clone)]
pub struct BandedFactorization {
    n: usize,
    d: usize,
    // combined L (strict lower, unit diagonal implicit) and U, in band
    factors: BandedMatrix,
}

/// Unpivoted LU factorization confined to the band.
pub fn banded_lu_factor(m: &BandedMatrix) -> Result<BandedFactorization, Error> {
    let n = m.n();
    let d = m.half_bandwidth();
    let mut f = m.clone();
    for k in 0..n {
        let pivot = f.get(k, k);
        if pivot.abs() < PIVOT_FLOOR {
            return Err(Error::Singular(format!("zero pivot in row {k}")));
        }
        let hi = (k + d).min(n - 1);
        for i in (k + 1)..=hi {
            let l = f.get(i, k) / pivot;
            if !l.is_finite() || l.abs() > GROWTH_LIMIT {
                return Err(Error::Singular(format!("element growth in row {i}")));
            }
            f.set(i, k, l);
            for j in (k + 1)..=hi.min(k + d) {
                // fill stays in band since |i - j| <= d here
                if i.abs_diff(j) <= d {
                    f.set(i, j, f.get(i, j) - l * f.get(k, j));
                }
            }
        }
    }
    Ok(BandedFactorization { n, d, factors: f })
}

impl BandedFactorization {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Solve `N x = rhs` using the stored factors.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, Error> {
        if rhs.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: rhs.len(),
            });
        }
        // forward substitution with unit lower factor
        let mut y = rhs.to_vec();
        for i in 0..self.n {
            let lo = i.saturating_sub(self.d);
            for j in lo..i {
                y[i] -= self.factors.get(i, j) * y[j];
            }
        }
        // back substitution with upper factor
        let mut x = y;
        for i in (0..self.n).rev() {
            let hi = (i + self.d).min(self.n - 1);
            for j in (i + 1)..=hi {
                x[i] -= self.factors.get(i, j) * x[j];
            }
            x[i] /= self.factors.get(i, i);
            if !x[i].is_finite() {
                return Err(Error::Singular(format!("non-finite solve in row {i}")));
            }
        }
        Ok(x)
    }
}
