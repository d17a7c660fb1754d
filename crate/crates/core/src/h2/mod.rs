//! Squared H₂ norms of the droop and DAPI loss maps.
//!
//! Three routes, kept independent so they can check each other:
//!
//! - closed form: `‖H_std‖² = α(N-1)/(2m)` and the per-eigenvalue DAPI sum,
//! - modal: one small Lyapunov solve per nonzero Laplacian eigenvalue,
//! - full Gramian: one Bartels–Stewart solve on the zero-mode-deflated system.

pub mod lyapunov;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    check_stability, modal_subsystem, ControllerKind, ControllerParams, StateSpace,
};
use crate::error::{ensure, Error, Result};
use crate::network::{Spectrum, ZERO_EIGENVALUE_RTOL};

pub use lyapunov::{solve_dense, solve_direct, solve_lyapunov, solve_schur, solve_sign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum H2Method {
    ClosedForm,
    ModalLyapunov,
    FullGramian,
}

/// Squared H₂ norm, i.e. expected steady-state resistive loss per unit
/// white-noise intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H2Result {
    pub squared_norm: f64,
    pub method: H2Method,
    /// Contributions of modes `2..=N`, in ascending eigenvalue order.
    pub per_mode: Option<Vec<f64>>,
}

impl H2Result {
    fn from_modes(per_mode: Vec<f64>, method: H2Method) -> Self {
        Self {
            squared_norm: per_mode.iter().sum(),
            method,
            per_mode: Some(per_mode),
        }
    }
}

/// `‖H_std‖₂² = α(N-1)/(2m)`, independent of topology.
pub fn h2_droop_closed_form(alpha: f64, m: f64, n_nodes: usize) -> Result<H2Result> {
    ensure(m > 0.0, || format!("m must be > 0, got {m}"))?;
    ensure(alpha >= 0.0, || format!("alpha must be >= 0, got {alpha}"))?;
    ensure(n_nodes >= 1, || "need at least one node".into())?;
    let per_mode = alpha / (2.0 * m);
    Ok(H2Result {
        squared_norm: per_mode * (n_nodes - 1) as f64,
        method: H2Method::ClosedForm,
        per_mode: Some(vec![per_mode; n_nodes - 1]),
    })
}

/// Fraction of the droop per-mode loss `α/(2m)` that survives under DAPI
/// control for Laplacian eigenvalue `lambda > 0`:
///
/// `1 / (1 + (γτλ + k) / (γλ(γτλ + k) + k²mλ))`
pub fn dapi_mode_factor(lambda: f64, p: &ControllerParams) -> f64 {
    let (m, tau, k, gamma) = (p.m(), p.tau(), p.k(), p.gamma());
    let num = gamma * tau * lambda + k;
    let den = gamma * lambda * num + k * k * m * lambda;
    den / (den + num)
}

/// Returns the nonzero eigenvalues, checking there is exactly one zero.
pub(crate) fn nonzero_eigenvalues(eigenvalues: &[f64]) -> Result<&[f64]> {
    ensure(!eigenvalues.is_empty(), || "empty spectrum".into())?;
    let max = eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let threshold = ZERO_EIGENVALUE_RTOL * max;
    ensure(eigenvalues.iter().all(|&l| l >= -threshold), || {
        "Laplacian eigenvalues must be nonnegative".into()
    })?;
    let zeros = eigenvalues.iter().filter(|l| l.abs() <= threshold).count();
    if zeros != 1 {
        return Err(Error::Disconnected { zero_modes: zeros });
    }
    let pos = eigenvalues
        .iter()
        .position(|l| l.abs() <= threshold)
        .unwrap_or(0);
    ensure(pos == 0, || "eigenvalues must be sorted ascending".into())?;
    Ok(&eigenvalues[1..])
}

/// DAPI closed form, summed over the nonzero eigenvalues of `L_B`.
/// `τ = 0` and `γ = 0` are allowed.
pub fn h2_dapi_closed_form(
    alpha: f64,
    p: &ControllerParams,
    eigenvalues: &[f64],
) -> Result<H2Result> {
    ensure(alpha >= 0.0, || format!("alpha must be >= 0, got {alpha}"))?;
    let scale = alpha / (2.0 * p.m());
    let per_mode = nonzero_eigenvalues(eigenvalues)?
        .iter()
        .map(|&l| scale * dapi_mode_factor(l, p))
        .collect();
    Ok(H2Result::from_modes(per_mode, H2Method::ClosedForm))
}

/// Closed form for either controller.
pub fn h2_closed_form(
    spectrum: &Spectrum,
    p: &ControllerParams,
    alpha: f64,
    kind: ControllerKind,
) -> Result<H2Result> {
    match kind {
        ControllerKind::Droop => h2_droop_closed_form(alpha, p.m(), spectrum.n_nodes()),
        ControllerKind::Dapi => h2_dapi_closed_form(alpha, p, spectrum.eigenvalues().as_slice()),
    }
}

/// Sum of `tr(BₙᵀXₙBₙ)` over the nonzero modes, each `Xₙ` the observability
/// Gramian of the modal subsystem.
pub fn h2_modal(
    spectrum: &Spectrum,
    p: &ControllerParams,
    alpha: f64,
    kind: ControllerKind,
) -> Result<H2Result> {
    let per_mode = nonzero_eigenvalues(spectrum.eigenvalues().as_slice())?
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let mode = i + 2;
            if !check_stability(p, lambda, kind)? {
                return Err(Error::UnstableMode { mode, lambda });
            }
            let sub = modal_subsystem(lambda, p, alpha, kind, mode)?;
            let q = sub.c.transpose() * &sub.c;
            let x = solve_direct(&sub.a, &q)?;
            Ok((sub.b.transpose() * x * &sub.b)[(0, 0)])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(H2Result::from_modes(per_mode, H2Method::ModalLyapunov))
}

/// Oracle route: deflate the uniform-phase mode, then one large Lyapunov
/// solve `ÃᵀX + XÃ = -C̃ᵀC̃` and `tr(B̃ᵀXB̃)`.
pub fn h2_full_gramian(ss: &StateSpace) -> Result<H2Result> {
    let d = ss.deflate_zero_mode();
    let q = d.c.transpose() * &d.c;
    let x = solve_dense(&d.a, &q)?;
    let squared_norm = (d.b.transpose() * x * &d.b).trace();
    Ok(H2Result {
        squared_norm: squared_norm.max(0.0),
        method: H2Method::FullGramian,
        per_mode: None,
    })
}
