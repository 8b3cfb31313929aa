//! Minimal complex linear-algebra and special-function kernel.
//!
//! Everything here operates on small dense matrices (a few hundred rows at
//! most), so the decompositions are Jacobi-style iterations rather than
//! blocked LAPACK calls: simple, allocation-light and accurate to near
//! machine precision at these sizes.

use num_complex::Complex64;
use std::f64::consts::PI;
use std::ops::{Index, IndexMut};
use thiserror::Error;

pub type C64 = Complex64;

/// Maximum Jacobi sweeps before declaring non-convergence.
const MAX_JACOBI_SWEEPS: usize = 128;
/// Relative off-diagonal tolerance for Jacobi convergence.
const JACOBI_TOL: f64 = 1e-14;
/// sigma_min below this fraction of sigma_max counts as numerically zero.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("SVD did not converge after {0} Jacobi sweeps")]
    SvdNoConvergence(usize),
    #[error("Hermitian eigendecomposition did not converge after {0} Jacobi sweeps")]
    EighNoConvergence(usize),
    #[error("matrix is singular to working precision")]
    Singular,
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        assert_eq!(data.len(), rows * cols, "entry count must equal rows*cols");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![C64::new(0.0, 0.0); rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    /// Build from rows of real numbers (imaginary parts zero).
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        Self::from_fn(r, c, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn matmul(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "dimension mismatch in matmul");
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a + b)
            .collect();
        ComplexMatrix::new(self.rows, self.cols, data)
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a - b)
            .collect();
        ComplexMatrix::new(self.rows, self.cols, data)
    }

    pub fn scaled(&self, s: C64) -> ComplexMatrix {
        ComplexMatrix::new(self.rows, self.cols, self.data.iter().map(|a| a * s).collect())
    }

    pub fn scaled_re(&self, s: f64) -> ComplexMatrix {
        self.scaled(C64::new(s, 0.0))
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_offdiag_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.rows {
            for j in 0..self.cols {
                if i != j {
                    m = m.max(self[(i, j)].norm());
                }
            }
        }
        m
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        for i in 0..self.rows {
            for j in i..self.cols {
                if (self[(i, j)] - self[(j, i)].conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Gauss-Jordan inverse with partial pivoting.
    pub fn inverse(&self) -> Result<ComplexMatrix, NumericsError> {
        assert!(self.is_square(), "inverse requires a square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = ComplexMatrix::identity(n);
        for col in 0..n {
            let mut piv = col;
            let mut best = a[(col, col)].norm();
            for r in col + 1..n {
                let m = a[(r, col)].norm();
                if m > best {
                    best = m;
                    piv = r;
                }
            }
            if best < 1e-300 {
                return Err(NumericsError::Singular);
            }
            if piv != col {
                for j in 0..n {
                    a.data.swap(col * n + j, piv * n + j);
                    inv.data.swap(col * n + j, piv * n + j);
                }
            }
            let p = a[(col, col)];
            for j in 0..n {
                a[(col, j)] /= p;
                inv[(col, j)] /= p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)];
                if f == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    let x = a[(col, j)] * f;
                    a[(r, j)] -= x;
                    let y = inv[(col, j)] * f;
                    inv[(r, j)] -= y;
                }
            }
        }
        Ok(inv)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl std::fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Normalized sinc, sin(pi x)/(pi x).
///
/// Integer arguments are snapped to their exact values (1 at zero, 0 at the
/// zero crossings) so that sampling the kernel on the symbol grid reproduces
/// the Nyquist identity exactly.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if x == x.trunc() {
        return 0.0;
    }
    let px = PI * x;
    px.sin() / px
}

/// Bessel function of the first kind, order zero.
pub fn bessel_j0(x: f64) -> f64 {
    libm::j0(x)
}

/// Thin SVD with singular values in descending order.
///
/// For an m x n input with k = min(m, n): `u` is m x k with orthonormal
/// columns, `sigma` has k entries, `v` is n x k with orthonormal columns,
/// and u * diag(sigma) * v^H reconstructs the input.
pub struct SvdResult {
    pub u: ComplexMatrix,
    pub sigma: Vec<f64>,
    pub v: ComplexMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let k = self.sigma.len();
        let mut us = self.u.clone();
        for j in 0..k {
            for i in 0..us.rows() {
                us[(i, j)] *= C64::new(self.sigma[j], 0.0);
            }
        }
        us.matmul(&self.v.hermitian())
    }
}

/// One-sided Jacobi SVD.
///
/// Columns of the working copy are rotated pairwise until mutually
/// orthogonal; column norms are then the singular values. Wide inputs are
/// handled by factoring the conjugate transpose and swapping u/v.
pub fn svd(a: &ComplexMatrix) -> Result<SvdResult, NumericsError> {
    if a.rows() < a.cols() {
        let t = svd(&a.hermitian())?;
        return Ok(SvdResult {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    let m = a.rows();
    let n = a.cols();
    // Work on contiguous columns; the pair rotations are the hot loop.
    let mut cols: Vec<Vec<C64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[j] = C64::new(1.0, 0.0);
            e
        })
        .collect();

    // Columns whose norm has fallen to roundoff noise are numerically zero;
    // without this floor, rank-deficient inputs never meet the pairwise
    // relative tolerance and every sweep runs to the cap.
    let noise_floor = (f64::EPSILON * a.frobenius_norm()).powi(2);

    // Squared column norms, maintained through the rotations (the rotation
    // moves 2 c s g of squared norm between the pair).
    let mut col_sq: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum())
        .collect();

    let mut converged = false;
    for _sweep in 0..MAX_JACOBI_SWEEPS {
        let mut max_rel = 0.0f64;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let app = col_sq[p];
                let aqq = col_sq[q];
                let (head, tail) = cols.split_at_mut(q);
                let cp = &mut head[p];
                let cq = &mut tail[0];
                let mut apq = C64::new(0.0, 0.0);
                for (xp, xq) in cp.iter().zip(cq.iter()) {
                    apq += xp.conj() * xq;
                }
                let g = apq.norm();
                let denom = (app * aqq).sqrt();
                if app <= noise_floor || aqq <= noise_floor || g <= JACOBI_TOL * denom {
                    continue;
                }
                max_rel = max_rel.max(g / denom);
                // Phase-align so the 2x2 Gram block becomes real symmetric,
                // then apply the classic real Jacobi rotation.
                let wph = apq / C64::new(g, 0.0);
                let zeta = (aqq - app) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let sw = wph.conj() * C64::new(s, 0.0);
                let cw = wph.conj() * C64::new(c, 0.0);
                for (xp, xq) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (op, oq) = (*xp, *xq);
                    *xp = op * c - oq * sw;
                    *xq = op * s + oq * cw;
                }
                let (vh, vt) = v.split_at_mut(q);
                for (xp, xq) in vh[p].iter_mut().zip(vt[0].iter_mut()) {
                    let (op, oq) = (*xp, *xq);
                    *xp = op * c - oq * sw;
                    *xq = op * s + oq * cw;
                }
                let shift = 2.0 * c * s * g;
                col_sq[p] = c * c * app + s * s * aqq - shift;
                col_sq[q] = s * s * app + c * c * aqq + shift;
            }
        }
        if max_rel <= JACOBI_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(NumericsError::SvdNoConvergence(MAX_JACOBI_SWEEPS));
    }

    let mut sigma: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    let sorted_sigma: Vec<f64> = order.iter().map(|&j| sigma[j]).collect();
    sigma = sorted_sigma;

    let mut u = ComplexMatrix::zeros(m, n);
    let mut vv = ComplexMatrix::zeros(n, n);
    let sig_max = sigma.first().copied().unwrap_or(0.0);
    let mut null_cols = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            vv[(i, dst)] = v[src][i];
        }
        if sigma[dst] > RANK_TOL * sig_max.max(f64::MIN_POSITIVE) {
            let inv = 1.0 / sigma[dst];
            for i in 0..m {
                u[(i, dst)] = cols[src][i] * C64::new(inv, 0.0);
            }
        } else {
            null_cols.push(dst);
        }
    }
    // Columns with (numerically) zero singular value get an orthonormal
    // completion so u keeps orthonormal columns.
    for &jz in &null_cols {
        let mut best: Option<(f64, Vec<C64>)> = None;
        for k in 0..m {
            let mut cand = vec![C64::new(0.0, 0.0); m];
            cand[k] = C64::new(1.0, 0.0);
            for j in 0..n {
                if null_cols.contains(&j) && j >= jz {
                    continue;
                }
                let proj: C64 = (0..m).map(|i| u[(i, j)].conj() * cand[i]).sum();
                for i in 0..m {
                    let d = u[(i, j)] * proj;
                    cand[i] -= d;
                }
            }
            let nrm = cand.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if best.as_ref().map(|(b, _)| nrm > *b).unwrap_or(true) {
                best = Some((nrm, cand));
            }
        }
        let (nrm, cand) = best.unwrap();
        for i in 0..m {
            u[(i, jz)] = cand[i] / C64::new(nrm, 0.0);
        }
    }
    Ok(SvdResult { u, sigma, v: vv })
}

/// sigma_max / sigma_min; +infinity when the smallest singular value is
/// below `RANK_TOL` times the largest.
pub fn condition_number(a: &ComplexMatrix) -> f64 {
    let s = svd(a).expect("Jacobi SVD convergence").sigma;
    let smax = s[0];
    let smin = *s.last().unwrap();
    if smin < RANK_TOL * smax || smax == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    a.frobenius_norm()
}

/// Eigendecomposition of a Hermitian matrix by two-sided Jacobi rotations.
///
/// Returns eigenvalues in descending order with the matching eigenvector
/// columns; a = q * diag(lambda) * q^H.
pub fn hermitian_eigen(a: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix), NumericsError> {
    assert!(a.is_square(), "hermitian_eigen requires a square matrix");
    let n = a.rows();
    let mut w = a.clone();
    let mut q = ComplexMatrix::identity(n);
    let scale = a.max_abs().max(f64::MIN_POSITIVE);

    let mut converged = false;
    for _sweep in 0..MAX_JACOBI_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n.saturating_sub(1) {
            for qq in p + 1..n {
                let apq = w[(p, qq)];
                let g = apq.norm();
                if g <= JACOBI_TOL * scale {
                    continue;
                }
                off = off.max(g);
                let app = w[(p, p)].re;
                let aqq = w[(qq, qq)].re;
                let wph = apq / C64::new(g, 0.0);
                let zeta = (aqq - app) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let sc = C64::new(s, 0.0);
                let cc = C64::new(c, 0.0);
                // w <- J^H w J with the same phase-aligned rotation as in svd.
                for i in 0..n {
                    let xp = w[(i, p)];
                    let xq = w[(i, qq)];
                    w[(i, p)] = xp * cc - xq * (wph.conj() * sc);
                    w[(i, qq)] = xp * sc + xq * (wph.conj() * cc);
                }
                for j in 0..n {
                    let xp = w[(p, j)];
                    let xq = w[(qq, j)];
                    w[(p, j)] = xp * cc - xq * (wph * sc);
                    w[(qq, j)] = xp * sc + xq * (wph * cc);
                }
                for i in 0..n {
                    let xp = q[(i, p)];
                    let xq = q[(i, qq)];
                    q[(i, p)] = xp * cc - xq * (wph.conj() * sc);
                    q[(i, qq)] = xp * sc + xq * (wph.conj() * cc);
                }
            }
        }
        if off <= JACOBI_TOL * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(NumericsError::EighNoConvergence(MAX_JACOBI_SWEEPS));
    }
    let mut lambda: Vec<f64> = (0..n).map(|i| w[(i, i)].re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| lambda[j].partial_cmp(&lambda[i]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&i| lambda[i]).collect();
    lambda = sorted;
    let mut qs = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            qs[(i, dst)] = q[(i, src)];
        }
    }
    Ok((lambda, qs))
}
