//! Linearised closed-loop models.
//!
//! States are ordered in blocks `(θ, ω)` for droop control and `(θ, ω, Ω)`
//! for DAPI control, each block of length `N`:
//!
//! ```text
//! droop:  A = [ 0        I     ]    B = [ 0   ]    C = [ L_G^½  0 ]
//!             [ -m/τ L_B  -1/τ I ]        [ 1/τ ]
//!
//! DAPI:   A = [ 0        I       0        ]    B = [ 0   ]    C = [ L_G^½  0  0 ]
//!             [ -m/τ L_B  -1/τ I   1/τ I    ]        [ 1/τ ]
//!             [ 0        -1/k I   -1/k L_C ]        [ 0   ]
//! ```
//!
//! with `L_C = γ L_B` and `L_G = α L_B`. Diagonalising `L_B = U Λ Uᵀ`
//! decouples both systems into one small subsystem per eigenvalue.

use std::io::{self, Write};

use nalgebra::{Complex, DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::network::{laplacians, spectral_decomposition, NetworkGraph, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Droop,
    Dapi,
}

impl ControllerKind {
    /// Number of state blocks of length `N`.
    pub fn blocks(self) -> usize {
        match self {
            ControllerKind::Droop => 2,
            ControllerKind::Dapi => 3,
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ControllerKind::Droop => "droop",
            ControllerKind::Dapi => "dapi",
        })
    }
}

/// Identical-inverter controller gains.
///
/// `m` droop coefficient, `tau` power-filter time constant, `k` integral
/// constant (DAPI), `gamma` communication-to-susceptance gain ratio (DAPI).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    m: f64,
    tau: f64,
    k: f64,
    gamma: f64,
}

impl ControllerParams {
    pub fn new(m: f64, tau: f64, k: f64, gamma: f64) -> Result<Self> {
        let finite = [m, tau, k, gamma].iter().all(|x| x.is_finite());
        ensure(finite, || "controller parameters must be finite".into())?;
        ensure(m > 0.0, || {
            format!("droop coefficient m must be > 0, got {m}")
        })?;
        ensure(k > 0.0, || {
            format!("integral constant k must be > 0, got {k}")
        })?;
        ensure(tau >= 0.0, || {
            format!("time constant tau must be >= 0, got {tau}")
        })?;
        ensure(gamma >= 0.0, || {
            format!("gain ratio gamma must be >= 0, got {gamma}")
        })?;
        Ok(Self { m, tau, k, gamma })
    }

    pub fn m(&self) -> f64 {
        self.m
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_m(self, m: f64) -> Result<Self> {
        Self::new(m, self.tau, self.k, self.gamma)
    }
    pub fn with_tau(self, tau: f64) -> Result<Self> {
        Self::new(self.m, tau, self.k, self.gamma)
    }
    pub fn with_k(self, k: f64) -> Result<Self> {
        Self::new(self.m, self.tau, k, self.gamma)
    }
    pub fn with_gamma(self, gamma: f64) -> Result<Self> {
        Self::new(self.m, self.tau, self.k, gamma)
    }
}

/// Continuous-time LTI system `ẋ = Ax + Bw`, `y = Cx`.
#[derive(Debug, Clone)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    kind: ControllerKind,
    params: ControllerParams,
    alpha: f64,
    n_nodes: usize,
}

impl StateSpace {
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn kind(&self) -> ControllerKind {
        self.kind
    }
    pub fn params(&self) -> &ControllerParams {
        &self.params
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }
    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    /// DAPI with `γ = 0`: every mode keeps a marginal integrator.
    pub fn has_marginal_secondary(&self) -> bool {
        self.kind == ControllerKind::Dapi && self.params.gamma == 0.0
    }

    /// Eigenvalues of `A`.
    pub fn eigenvalues(&self) -> Result<Vec<Complex<f64>>> {
        crate::linalg::eigenvalues(&self.a)
    }

    /// Removes the uniform phase drift `(𝟏, 0, …)` by restricting the θ block
    /// to `𝟏^⊥`. The returned system has one state fewer and the same
    /// input-output map.
    pub fn deflate_zero_mode(&self) -> Deflated {
        let n = self.n_nodes;
        let basis = helmert_basis(n);
        let states = self.n_states();
        let mut t = DMatrix::zeros(states, states - 1);
        t.view_mut((0, 0), (n, n - 1)).copy_from(&basis);
        for i in n..states {
            t[(i, i - 1)] = 1.0;
        }
        let tt = t.transpose();
        Deflated {
            a: &tt * &self.a * &t,
            b: &tt * &self.b,
            c: &self.c * &t,
        }
    }

    /// Writes `A`, `B` and `C` as consecutive text blocks: `rows cols` then
    /// one line of space-separated floats per row.
    pub fn write_dump<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for m in [&self.a, &self.b, &self.c] {
            write_matrix(w, m)?;
        }
        Ok(())
    }
}

/// A system with the marginal uniform-phase direction projected out.
#[derive(Debug, Clone)]
pub struct Deflated {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

/// Orthonormal basis of `𝟏^⊥` (Helmert contrasts), `n × (n-1)`.
pub fn helmert_basis(n: usize) -> DMatrix<f64> {
    let mut v = DMatrix::zeros(n, n.saturating_sub(1));
    for k in 1..n {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            v[(i, k - 1)] = 1.0 / norm;
        }
        v[(k, k - 1)] = -(k as f64) / norm;
    }
    v
}

pub fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> io::Result<()> {
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Reads the blocks written by [`write_matrix`] back, in order.
pub fn read_matrices(text: &str) -> Result<Vec<DMatrix<f64>>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let mut out = Vec::new();
    while let Some((ln, header)) = lines.next() {
        let perr = |line: usize, msg: &str| Error::Parse {
            line: line + 1,
            msg: msg.to_string(),
        };
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| perr(ln, "invalid dimension")))
            .collect::<Result<_>>()?;
        let [rows, cols] = dims[..] else {
            return Err(perr(ln, "expected `rows cols`"));
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (rl, row) = lines.next().ok_or_else(|| perr(ln, "truncated matrix"))?;
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| perr(rl, "invalid float")))
                .collect::<Result<_>>()?;
            if vals.len() != cols {
                return Err(perr(rl, "wrong number of columns"));
            }
            data.extend(vals);
        }
        out.push(DMatrix::from_row_slice(rows, cols, &data));
    }
    Ok(out)
}

fn require_tau(p: &ControllerParams) -> Result<()> {
    if p.tau > 0.0 {
        Ok(())
    } else {
        Err(Error::Assembly(
            "tau = 0 has no state-space realisation; use the closed-form H2 path".into(),
        ))
    }
}

/// Standard droop control system.
pub fn assemble_droop(g: &NetworkGraph, p: &ControllerParams) -> Result<StateSpace> {
    assemble(g, p, ControllerKind::Droop)
}

/// DAPI control system with `L_C = γ L_B`.
pub fn assemble_dapi(g: &NetworkGraph, p: &ControllerParams) -> Result<StateSpace> {
    assemble(g, p, ControllerKind::Dapi)
}

pub fn assemble(
    g: &NetworkGraph,
    p: &ControllerParams,
    kind: ControllerKind,
) -> Result<StateSpace> {
    require_tau(p)?;
    let n = g.n_nodes();
    let laps = laplacians(g, p.gamma);
    let spectrum = spectral_decomposition(&laps.susceptance)?;
    let alpha = g.alpha();
    let sqrt_lg = spectrum.spectral_function(|l| (alpha * l).sqrt());
    let l_b = laps.susceptance.matrix();
    let eye = DMatrix::<f64>::identity(n, n);
    let (m, tau, k) = (p.m, p.tau, p.k);

    let states = kind.blocks() * n;
    let mut a = DMatrix::zeros(states, states);
    a.view_mut((0, n), (n, n)).copy_from(&eye);
    a.view_mut((n, 0), (n, n)).copy_from(&(l_b * (-m / tau)));
    a.view_mut((n, n), (n, n)).copy_from(&(&eye * (-1.0 / tau)));
    if kind == ControllerKind::Dapi {
        if p.gamma == 0.0 {
            log::warn!(
                "assembling DAPI with gamma = 0: decentralised integrators leave marginal modes"
            );
        }
        a.view_mut((n, 2 * n), (n, n))
            .copy_from(&(&eye * (1.0 / tau)));
        a.view_mut((2 * n, n), (n, n))
            .copy_from(&(&eye * (-1.0 / k)));
        a.view_mut((2 * n, 2 * n), (n, n))
            .copy_from(&(laps.communication.matrix() * (-1.0 / k)));
    }

    let mut b = DMatrix::zeros(states, n);
    b.view_mut((n, 0), (n, n)).copy_from(&(&eye * (1.0 / tau)));

    let mut c = DMatrix::zeros(n, states);
    c.view_mut((0, 0), (n, n)).copy_from(&sqrt_lg);

    Ok(StateSpace {
        a,
        b,
        c,
        kind,
        params: *p,
        alpha,
        n_nodes: n,
    })
}

/// One decoupled per-eigenvalue subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalSubsystem {
    /// 1-based position in the ascending spectrum.
    pub mode_index: usize,
    pub lambda: f64,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
}

pub fn modal_subsystem(
    lambda: f64,
    p: &ControllerParams,
    alpha: f64,
    kind: ControllerKind,
    mode_index: usize,
) -> Result<ModalSubsystem> {
    require_tau(p)?;
    let (m, tau, k, gamma) = (p.m, p.tau, p.k, p.gamma);
    let dim = kind.blocks();
    let mut a = DMatrix::zeros(dim, dim);
    a[(0, 1)] = 1.0;
    a[(1, 0)] = -m / tau * lambda;
    a[(1, 1)] = -1.0 / tau;
    if kind == ControllerKind::Dapi {
        a[(1, 2)] = 1.0 / tau;
        a[(2, 1)] = -1.0 / k;
        a[(2, 2)] = -gamma * lambda / k;
    }
    let mut b = DVector::zeros(dim);
    b[1] = 1.0 / tau;
    let mut c = RowDVector::zeros(dim);
    if lambda > 0.0 {
        c[0] = (alpha * lambda).sqrt();
    }
    Ok(ModalSubsystem {
        mode_index,
        lambda,
        a,
        b,
        c,
    })
}

/// All `N` modal subsystems in ascending eigenvalue order; the first has
/// `λ = 0` and a zero output row.
pub fn modal_subsystems(
    spectrum: &Spectrum,
    p: &ControllerParams,
    alpha: f64,
    kind: ControllerKind,
) -> Result<Vec<ModalSubsystem>> {
    spectrum
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(i, &l)| modal_subsystem(l, p, alpha, kind, i + 1))
        .collect()
}

/// Characteristic polynomial of one nonzero mode, highest degree first,
/// scaled by `τ` (droop) or `τk` (DAPI) so that `τ = 0` stays finite:
///
/// ```text
/// droop: τ z² + z + mλ
/// DAPI:  τk z³ + (k + γλτ) z² + (γλ + 1 + mkλ) z + mγλ²
/// ```
pub fn characteristic_polynomial(
    p: &ControllerParams,
    lambda: f64,
    kind: ControllerKind,
) -> Vec<f64> {
    let (m, tau, k, gamma) = (p.m, p.tau, p.k, p.gamma);
    match kind {
        ControllerKind::Droop => vec![tau, 1.0, m * lambda],
        ControllerKind::Dapi => vec![
            tau * k,
            k + gamma * lambda * tau,
            gamma * lambda + 1.0 + m * k * lambda,
            m * gamma * lambda * lambda,
        ],
    }
}

/// Routh–Hurwitz test: true iff every root has strictly negative real part.
/// Coefficients are highest degree first; exact leading zeros are dropped.
pub fn routh_hurwitz(coeffs: &[f64]) -> bool {
    let start = coeffs
        .iter()
        .position(|&c| c != 0.0)
        .unwrap_or(coeffs.len());
    let poly = &coeffs[start..];
    if poly.len() <= 1 {
        return !poly.is_empty();
    }
    let width = poly.len().div_ceil(2);
    let row = |offset: usize| -> Vec<f64> {
        (0..width)
            .map(|i| poly.get(offset + 2 * i).copied().unwrap_or(0.0))
            .collect()
    };
    let mut prev = row(0);
    let mut cur = row(1);
    let sign = prev[0].signum();
    for _ in 1..poly.len() {
        if cur[0] == 0.0 || cur[0].signum() != sign {
            return false;
        }
        let next: Vec<f64> = (0..width)
            .map(|i| {
                let a = prev.get(i + 1).copied().unwrap_or(0.0);
                let b = cur.get(i + 1).copied().unwrap_or(0.0);
                (cur[0] * a - prev[0] * b) / cur[0]
            })
            .collect();
        prev = cur;
        cur = next;
    }
    true
}

/// Stability of the mode belonging to a positive Laplacian eigenvalue,
/// decided on polynomial coefficients alone.
pub fn check_stability(p: &ControllerParams, lambda: f64, kind: ControllerKind) -> Result<bool> {
    ensure(lambda > 0.0, || {
        format!("stability check needs lambda > 0 (zero mode is deflated), got {lambda}")
    })?;
    Ok(routh_hurwitz(&characteristic_polynomial(p, lambda, kind)))
}

/// Largest entrywise deviation between the modal subsystems and the
/// congruence `Wᵀ A W`, `Wᵀ B U`, `Uᵀ C W` with `W = blockdiag(U, …, U)`.
pub fn verify_modal_equivalence(
    ss: &StateSpace,
    subsystems: &[ModalSubsystem],
    spectrum: &Spectrum,
) -> Result<f64> {
    let n = ss.n_nodes;
    let blocks = ss.kind.blocks();
    if spectrum.n_nodes() != n || subsystems.len() != n {
        return Err(Error::Dimension(format!(
            "system has {n} nodes, spectrum {} and {} subsystems",
            spectrum.n_nodes(),
            subsystems.len()
        )));
    }
    if let Some(s) = subsystems.iter().find(|s| s.a.nrows() != blocks) {
        return Err(Error::Dimension(format!(
            "mode {} is {}x{}, expected {blocks}x{blocks}",
            s.mode_index,
            s.a.nrows(),
            s.a.ncols()
        )));
    }
    let u = spectrum.eigenvectors();
    let states = blocks * n;
    let mut w = DMatrix::zeros(states, states);
    for blk in 0..blocks {
        w.view_mut((blk * n, blk * n), (n, n)).copy_from(u);
    }
    let a_hat = w.transpose() * ss.a() * &w;
    let b_hat = w.transpose() * ss.b() * u;
    let c_hat = u.transpose() * ss.c() * &w;

    let mut dev = 0.0f64;
    for r in 0..states {
        let (br, nr) = (r / n, r % n);
        for c in 0..states {
            let (bc, nc) = (c / n, c % n);
            let want = if nr == nc {
                subsystems[nr].a[(br, bc)]
            } else {
                0.0
            };
            dev = dev.max((a_hat[(r, c)] - want).abs());
        }
        for c in 0..n {
            let want = if nr == c { subsystems[nr].b[br] } else { 0.0 };
            dev = dev.max((b_hat[(r, c)] - want).abs());
        }
    }
    for r in 0..n {
        for c in 0..states {
            let (bc, nc) = (c / n, c % n);
            let want = if nc == r { subsystems[r].c[bc] } else { 0.0 };
            dev = dev.max((c_hat[(r, c)] - want).abs());
        }
    }
    Ok(dev)
}
