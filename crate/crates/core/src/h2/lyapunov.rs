//! Solvers for the continuous Lyapunov equation `AᵀX + XA = -Q`.
//!
//! Two independent routes: a direct linear solve in the `n(n+1)/2` unique
//! entries of `X` (used for the 2×2 and 3×3 modal systems), and the
//! Bartels–Stewart method on the real Schur form of `A` for full systems.
//! When the Schur iteration fails to converge, [`solve_dense`] falls back to
//! the matrix sign function.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, real_schur};

/// Eigenvalue real parts must lie below `-HURWITZ_RTOL · ‖A‖_max`.
pub const HURWITZ_RTOL: f64 = 1e-10;

/// Above this size [`solve_lyapunov`] switches to [`solve_dense`].
pub const DIRECT_MAX_DIM: usize = 3;

pub const SIGN_MAX_ITER: usize = 100;
const SIGN_TOL: f64 = 1e-12;

fn check_square(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<usize> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension(format!(
            "A is {}x{}, Q is {}x{}",
            a.nrows(),
            a.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    Ok(n)
}

fn hurwitz_margin(a: &DMatrix<f64>) -> f64 {
    HURWITZ_RTOL * a.amax()
}

/// Checks that every eigenvalue of `a` lies strictly inside the left half-plane.
pub fn check_hurwitz(a: &DMatrix<f64>) -> Result<()> {
    let max_real = eigenvalues(a)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_real < -hurwitz_margin(a) {
        Ok(())
    } else {
        Err(Error::NotHurwitz { max_real })
    }
}

/// Solves `AᵀX + XA = -Q` for Hurwitz `A`, dispatching on size.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() <= DIRECT_MAX_DIM {
        solve_direct(a, q)
    } else {
        solve_dense(a, q)
    }
}

/// Bartels–Stewart, or the sign-function iteration if no Schur form is found.
pub fn solve_dense(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match solve_schur(a, q) {
        Err(Error::Convergence(msg)) => {
            log::debug!("{msg} did not converge; using the sign-function solver");
            solve_sign(a, q)
        }
        other => other,
    }
}

/// Direct solve over the unique entries of symmetric `X`. Cost grows like
/// `n⁶`; meant for the small modal systems.
pub fn solve_direct(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = check_square(a, q)?;
    check_hurwitz(a)?;
    let unknowns = n * (n + 1) / 2;
    // Packed upper-triangular index of X[i][j], i <= j.
    let idx = |i: usize, j: usize| {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * n - i * (i + 1) / 2 + j
    };
    let mut lhs = DMatrix::zeros(unknowns, unknowns);
    let mut rhs = nalgebra::DVector::zeros(unknowns);
    for i in 0..n {
        for j in i..n {
            let row = idx(i, j);
            // (AᵀX)_ij = Σ_k A_ki X_kj ; (XA)_ij = Σ_k X_ik A_kj
            for k in 0..n {
                lhs[(row, idx(k, j))] += a[(k, i)];
                lhs[(row, idx(i, k))] += a[(k, j)];
            }
            rhs[row] = -0.5 * (q[(i, j)] + q[(j, i)]);
        }
    }
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or(Error::NotHurwitz { max_real: 0.0 })?;
    Ok(DMatrix::from_fn(n, n, |i, j| sol[idx(i, j)]))
}

/// Bartels–Stewart: with `A = Z T Zᵀ` (real Schur), solve
/// `TᵀY + YT = -ZᵀQZ` block by block and return `X = Z Y Zᵀ`.
pub fn solve_schur(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = check_square(a, q)?;
    check_hurwitz(a)?;
    let (z, t) = real_schur(a)?;
    let f = -(z.transpose() * q * &z);
    let blocks = diagonal_blocks(&t)?;

    let mut y = DMatrix::<f64>::zeros(n, n);
    for &(ri, pi) in &blocks {
        for &(cj, qj) in &blocks {
            // Right-hand side for block (I, J) after eliminating solved blocks.
            let mut r = f.view((ri, cj), (pi, qj)).clone_owned();
            for p in 0..pi {
                for s in 0..qj {
                    let (row, col) = (ri + p, cj + s);
                    let mut acc = 0.0;
                    for k in 0..ri {
                        acc += t[(k, row)] * y[(k, col)];
                    }
                    for l in 0..cj {
                        acc += y[(row, l)] * t[(l, col)];
                    }
                    r[(p, s)] -= acc;
                }
            }
            let t_ii = t.view((ri, ri), (pi, pi));
            let t_jj = t.view((cj, cj), (qj, qj));
            // vec(T_iiᵀ Y) + vec(Y T_jj) = (I ⊗ T_iiᵀ + T_jjᵀ ⊗ I) vec(Y)
            let m = pi * qj;
            let mut k = DMatrix::zeros(m, m);
            for s in 0..qj {
                for p in 0..pi {
                    let row = s * pi + p;
                    for p2 in 0..pi {
                        k[(row, s * pi + p2)] += t_ii[(p2, p)];
                    }
                    for s2 in 0..qj {
                        k[(row, s2 * pi + p)] += t_jj[(s2, s)];
                    }
                }
            }
            let rv = nalgebra::DVector::from_iterator(m, (0..m).map(|i| r[(i % pi, i / pi)]));
            let sol = k
                .lu()
                .solve(&rv)
                .ok_or(Error::NotHurwitz { max_real: 0.0 })?;
            for i in 0..m {
                y[(ri + i % pi, cj + i / pi)] = sol[i];
            }
        }
    }
    let x = &z * y * z.transpose();
    Ok((&x + x.transpose()) * 0.5)
}

/// Newton iteration for the sign of `[[Aᵀ, Q], [0, -A]]`, whose upper-right
/// block converges to `2X`. Uses Frobenius-norm scaling until the iterate is
/// close to `-I`.
pub fn solve_sign(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = check_square(a, q)?;
    check_hurwitz(a)?;
    let ident = DMatrix::<f64>::identity(n, n);
    let mut e = a.transpose();
    let mut w = (q + q.transpose()) * 0.5;
    let mut dist = f64::INFINITY;
    for _ in 0..SIGN_MAX_ITER {
        let inv = e
            .clone()
            .try_inverse()
            .ok_or(Error::NotHurwitz { max_real: 0.0 })?;
        let c = if dist < 1e-2 {
            1.0
        } else {
            (inv.norm() / e.norm()).sqrt()
        };
        let next_w = (&w * c + &inv * &w * inv.transpose() / c) * 0.5;
        e = (&e * c + inv / c) * 0.5;
        w = (&next_w + next_w.transpose()) * 0.5;
        let converged = dist <= SIGN_TOL;
        dist = (&e + &ident).amax();
        // One extra step after reaching tolerance: convergence is quadratic.
        if converged {
            return Ok(w * 0.5);
        }
    }
    Err(Error::Convergence(format!(
        "sign iteration on a {n}x{n} matrix"
    )))
}

/// `(start, size)` of the 1×1 and 2×2 diagonal blocks of a quasi-triangular matrix.
fn diagonal_blocks(t: &DMatrix<f64>) -> Result<Vec<(usize, usize)>> {
    let n = t.nrows();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            if i + 2 < n && t[(i + 2, i + 1)] != 0.0 {
                return Err(Error::Dimension(
                    "Schur factor is not quasi-triangular".into(),
                ));
            }
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    Ok(out)
}

/// `‖AᵀX + XA + Q‖_max`.
pub fn residual(a: &DMatrix<f64>, x: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (a.transpose() * x + x * a + q).amax()
}
