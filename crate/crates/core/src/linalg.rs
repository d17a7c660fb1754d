//! Dense nonsymmetric eigenvalues and real Schur form.
//!
//! Eigenvalues come from faer's multishift QR, which copes with stiff and
//! badly scaled matrices. The real Schur factor uses nalgebra's double-shift
//! QR with a deflation threshold of `SCHUR_EPS` and a bounded iteration count:
//! at machine epsilon it can stall on strongly repeated spectra (complete
//! graphs give an `N−1`-fold eigenvalue per mode). Callers get
//! [`Error::Convergence`] rather than a hang.

use nalgebra::{Complex, DMatrix, Schur};

use crate::error::{Error, Result};

pub const SCHUR_EPS: f64 = 1e-14;
pub const SCHUR_MAX_ITER: usize = 100_000;

fn check(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "{}x{} matrix is not square",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// `(Z, T)` with `A = Z T Zᵀ`, `Z` orthogonal and `T` quasi-upper-triangular.
pub fn real_schur(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check(a)?;
    let schur = Schur::try_new(a.clone(), SCHUR_EPS, SCHUR_MAX_ITER).ok_or_else(|| {
        Error::Convergence(format!("Schur iteration on a {0}x{0} matrix", a.nrows()))
    })?;
    Ok(schur.unpack())
}

pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    check(a)?;
    let n = a.nrows();
    faer::Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)])
        .eigenvalues()
        .map(|zs| zs.into_iter().map(|z| Complex::new(z.re, z.im)).collect())
        .map_err(|e| {
            Error::Convergence(format!("eigenvalue iteration on a {n}x{n} matrix ({e:?})"))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{assemble_dapi, ControllerParams};
    use crate::network::build_complete_graph;

    #[test]
    fn companion_roots() {
        // z³ + 6z² + 11z + 6 = (z+1)(z+2)(z+3)
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -6.0, -11.0, -6.0]);
        let mut re: Vec<f64> = eigenvalues(&a).unwrap().iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        for (got, want) in re.iter().zip([-3.0, -2.0, -1.0]) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn rotation_gives_conjugate_pair() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -2.0, -1.0]);
        let e = eigenvalues(&a).unwrap();
        assert!(e
            .iter()
            .all(|z| (z.re + 1.0).abs() < 1e-12 && (z.im.abs() - 2.0).abs() < 1e-12));
    }

    #[test]
    fn repeated_spectrum_converges() {
        // 49-fold repeated modal eigenvalues; stalls at machine-epsilon deflation.
        let g = build_complete_graph(50, 1.0, 1.0).unwrap();
        let ss = assemble_dapi(&g, &ControllerParams::new(1.0, 1.0, 1.0, 1.0).unwrap()).unwrap();
        let a = ss.deflate_zero_mode().a;
        let (z, t) = real_schur(&a).unwrap();
        assert!((&z * &t * z.transpose() - &a).amax() < 1e-10);
        assert!((z.transpose() * &z - DMatrix::identity(a.nrows(), a.nrows())).amax() < 1e-12);
    }

    #[test]
    fn stiff_spectrum() {
        // Fast integral mode next to slow swing modes; the unbalanced matrix
        // defeats a plain double-shift iteration.
        let g = build_complete_graph(30, 1.0, 1.0).unwrap();
        let p = ControllerParams::new(1.0, 0.01, 1.0, 1.0).unwrap();
        let a = assemble_dapi(&g, &p).unwrap().deflate_zero_mode().a;
        let e = eigenvalues(&a).unwrap();
        assert_eq!(e.len(), a.nrows());
        let trace: f64 = e.iter().map(|z| z.re).sum();
        assert!((trace - a.trace()).abs() < 1e-9 * a.trace().abs());
        assert!(e.iter().all(|z| z.re < 0.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            eigenvalues(&DMatrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
        let mut a = DMatrix::identity(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(eigenvalues(&a).is_err());
    }
}
