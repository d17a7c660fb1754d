//! Loss-minimising DAPI tuning and parameter sweeps.
//!
//! The communication gain ratio `γ*` minimises the DAPI closed-form norm.
//! It is found from the analytic `γ`-derivative: bracket a sign change,
//! bisect, and probe the whole bracket for further sign changes so that a
//! non-unique optimum is reported rather than silently missed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::ControllerParams;
use crate::error::{ensure, Error, Result};
use crate::h2::{h2_dapi_closed_form, h2_droop_closed_form, nonzero_eigenvalues};
use crate::network::{
    build_line_graph, build_random_connected_graph, laplacians, random_susceptances,
    spectral_decomposition, Spectrum,
};

/// Upper limit for the geometric growth of the search bracket.
pub const GAMMA_CAP: f64 = 1e6;
/// Bisection stops once the bracket is narrower than this.
pub const GAMMA_TOL: f64 = 1e-10;
const PROBE_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub gamma_star: f64,
    pub norm_at_star: f64,
    /// Total bisection steps.
    pub iterations: usize,
    /// Search interval `[0, γ_max]`.
    pub bracket: (f64, f64),
    /// Every local minimiser found on the bracket (normally one).
    pub local_minima: Vec<f64>,
}

/// `∂/∂γ` of [`crate::h2::dapi_mode_factor`]. With `P = γτλ + k` and
/// `D = γλP + k²mλ` the factor is `D/(D+P)` and
///
/// `∂/∂γ = λ((γτλ + k)² − τk²mλ) / (D + P)²`.
pub fn dapi_mode_factor_dgamma(lambda: f64, p: &ControllerParams) -> f64 {
    let (m, tau, k, gamma) = (p.m(), p.tau(), p.k(), p.gamma());
    let num = gamma * tau * lambda + k;
    let den = gamma * lambda * num + k * k * m * lambda;
    let s = den + num;
    lambda * (num * num - tau * k * k * m * lambda) / (s * s)
}

/// `∂‖H_DAPI‖²/∂γ` over the given nonzero eigenvalues, plus the sum of
/// absolute term magnitudes (used as a rounding scale).
fn norm_dgamma(alpha: f64, p: &ControllerParams, nonzero: &[f64]) -> (f64, f64) {
    let scale = alpha / (2.0 * p.m());
    let (m, tau, k, gamma) = (p.m(), p.tau(), p.k(), p.gamma());
    nonzero.iter().fold((0.0, 0.0), |(sum, mag), &l| {
        let num = gamma * tau * l + k;
        let den = gamma * l * num + k * k * m * l;
        let s = (den + num) * (den + num);
        let d = dapi_mode_factor_dgamma(l, p);
        (
            sum + scale * d,
            mag + scale * l * (num * num + tau * k * k * m * l) / s,
        )
    })
}

/// Loss-minimising `γ ≥ 0` for the given network spectrum. The `gamma` of
/// `p` is ignored.
pub fn optimal_gamma(
    spectrum: &Spectrum,
    p: &ControllerParams,
    alpha: f64,
) -> Result<TuningResult> {
    ensure(alpha > 0.0, || {
        format!("alpha must be > 0 for tuning, got {alpha}")
    })?;
    let nonzero = nonzero_eigenvalues(spectrum.eigenvalues().as_slice())?;
    ensure(!nonzero.is_empty(), || {
        "tuning needs at least two nodes".into()
    })?;

    let deriv = |g: f64| -> Result<f64> {
        let (d, mag) = norm_dgamma(alpha, &p.with_gamma(g)?, nonzero);
        // Treat values lost in rounding as zero.
        Ok(if d.abs() <= 1e-12 * mag { 0.0 } else { d })
    };
    let norm = |g: f64| -> Result<f64> {
        Ok(
            h2_dapi_closed_form(alpha, &p.with_gamma(g)?, spectrum.eigenvalues().as_slice())?
                .squared_norm,
        )
    };

    let mut hi = 1.0;
    while deriv(hi)? <= 0.0 {
        hi *= 2.0;
        if hi > GAMMA_CAP {
            return Err(Error::Tuning(format!(
                "derivative of the DAPI norm is not positive anywhere up to gamma = {GAMMA_CAP:e}"
            )));
        }
    }

    let mut grid: Vec<f64> = (0..=PROBE_POINTS)
        .map(|i| hi * 10f64.powf(-8.0 + 8.0 * i as f64 / PROBE_POINTS as f64))
        .chain((1..=PROBE_POINTS).map(|i| hi * i as f64 / PROBE_POINTS as f64))
        .collect();
    grid.push(0.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let signs: Vec<f64> = grid.iter().map(|&g| deriv(g)).collect::<Result<_>>()?;

    let mut candidates = Vec::new();
    if signs[0] >= 0.0 {
        candidates.push(0.0);
    }
    let mut iterations = 0;
    for w in 0..grid.len() - 1 {
        if signs[w] < 0.0 && signs[w + 1] >= 0.0 {
            let (mut lo, mut up) = (grid[w], grid[w + 1]);
            while up - lo > GAMMA_TOL {
                let mid = 0.5 * (lo + up);
                if deriv(mid)? < 0.0 {
                    lo = mid;
                } else {
                    up = mid;
                }
                iterations += 1;
            }
            candidates.push(0.5 * (lo + up));
        }
    }
    if candidates.len() > 1 {
        log::warn!(
            "derivative of the DAPI norm changes sign more than once: local minima at {candidates:?}"
        );
    }

    let mut best = (f64::NAN, f64::INFINITY);
    for &g in &candidates {
        let v = norm(g)?;
        if v < best.1 {
            best = (g, v);
        }
    }
    Ok(TuningResult {
        gamma_star: best.0,
        norm_at_star: best.1,
        iterations,
        bracket: (0.0, hi),
        local_minima: candidates,
    })
}

/// Closed-form optimum for a complete graph with uniform susceptance `b`:
/// `γ* = k/(Nbτ) (√(Nbmτ) − 1)` when `Nbmτ > 1`, else `0`.
pub fn optimal_gamma_complete(n: usize, b: f64, k: f64, m: f64, tau: f64) -> Result<f64> {
    ensure(n >= 2, || format!("need n >= 2, got {n}"))?;
    ensure(b > 0.0 && k > 0.0 && m > 0.0, || {
        "b, k and m must be > 0".into()
    })?;
    ensure(tau >= 0.0, || format!("tau must be >= 0, got {tau}"))?;
    let nb = n as f64 * b;
    let x = nb * m * tau;
    if tau == 0.0 || x <= 1.0 {
        return Ok(0.0);
    }
    Ok(k / (nb * tau) * (x.sqrt() - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Gamma,
    K,
    Tau,
    M,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Gamma => "gamma",
            SweepParam::K => "k",
            SweepParam::Tau => "tau",
            SweepParam::M => "m",
        }
    }

    pub fn apply(self, p: &ControllerParams, value: f64) -> Result<ControllerParams> {
        match self {
            SweepParam::Gamma => p.with_gamma(value),
            SweepParam::K => p.with_k(value),
            SweepParam::Tau => p.with_tau(value),
            SweepParam::M => p.with_m(value),
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(SweepParam::Gamma),
            "k" => Ok(SweepParam::K),
            "tau" => Ok(SweepParam::Tau),
            "m" => Ok(SweepParam::M),
            _ => Err(Error::Validation(format!("unknown sweep parameter `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMetric {
    /// DAPI squared norm at the given parameters.
    Norm,
    /// `1 − ‖H_DAPI(γ*)‖² / ‖H_std‖²` with `γ` re-optimised at every point.
    RelativeLossReduction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub parameter_name: String,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl SweepCurve {
    /// Grid point with the smallest value (first one on ties).
    pub fn argmin(&self) -> Option<(f64, f64)> {
        self.grid
            .iter()
            .zip(&self.values)
            .fold(None, |best: Option<(f64, f64)>, (&g, &v)| match best {
                Some((_, bv)) if bv <= v => best,
                _ => Some((g, v)),
            })
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    ensure(!grid.is_empty(), || "empty grid".into())?;
    ensure(grid.iter().all(|g| g.is_finite()), || {
        "grid values must be finite".into()
    })?;
    ensure(grid.windows(2).all(|w| w[0] < w[1]), || {
        "grid must be strictly increasing".into()
    })
}

fn map_grid<F>(grid: &[f64], f: F) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    grid.par_iter()
        .enumerate()
        .map(|(index, &value)| {
            f(value).map_err(|e| Error::GridPoint {
                index,
                value,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Relative loss reduction of DAPI (at `γ*`) over droop.
pub fn relative_loss_reduction(
    spectrum: &Spectrum,
    p: &ControllerParams,
    alpha: f64,
) -> Result<(f64, f64)> {
    let t = optimal_gamma(spectrum, p, alpha)?;
    let droop = h2_droop_closed_form(alpha, p.m(), spectrum.n_nodes())?.squared_norm;
    Ok((1.0 - t.norm_at_star / droop, t.gamma_star))
}

/// Evaluates the DAPI closed form (or the relative loss reduction) along
/// `grid` for one parameter, the rest taken from `template`.
pub fn sweep(
    spectrum: &Spectrum,
    template: &ControllerParams,
    alpha: f64,
    param: SweepParam,
    grid: &[f64],
    metric: SweepMetric,
) -> Result<SweepCurve> {
    check_grid(grid)?;
    if metric == SweepMetric::RelativeLossReduction {
        ensure(param != SweepParam::Gamma, || {
            "relative loss reduction re-optimises gamma; sweep k, tau or m instead".into()
        })?;
    }
    let eig = spectrum.eigenvalues().as_slice();
    let values = map_grid(grid, |v| {
        let p = param.apply(template, v)?;
        match metric {
            SweepMetric::Norm => Ok(h2_dapi_closed_form(alpha, &p, eig)?.squared_norm),
            SweepMetric::RelativeLossReduction => {
                Ok(relative_loss_reduction(spectrum, &p, alpha)?.0)
            }
        }
    })?;
    Ok(SweepCurve {
        parameter_name: param.name().to_string(),
        grid: grid.to_vec(),
        values,
    })
}

/// `γ*(k)` along `k_grid`.
pub fn gamma_star_vs_k(
    spectrum: &Spectrum,
    alpha: f64,
    m: f64,
    tau: f64,
    k_grid: &[f64],
) -> Result<SweepCurve> {
    check_grid(k_grid)?;
    let values = map_grid(k_grid, |k| {
        let p = ControllerParams::new(m, tau, k, 0.0)?;
        Ok(optimal_gamma(spectrum, &p, alpha)?.gamma_star)
    })?;
    Ok(SweepCurve {
        parameter_name: "k".into(),
        grid: k_grid.to_vec(),
        values,
    })
}

/// One row of the loss-vs-size comparison: droop norm and seed-averaged
/// DAPI norms on line and complete graphs with random susceptances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub droop: f64,
    pub dapi_complete: f64,
    pub dapi_line: f64,
}

pub fn scaling_row(
    n: usize,
    p: &ControllerParams,
    alpha: f64,
    b_range: (f64, f64),
    seeds: &[u64],
) -> Result<ScalingRow> {
    ensure(!seeds.is_empty(), || "need at least one seed".into())?;
    let droop = h2_droop_closed_form(alpha, p.m(), n)?.squared_norm;
    if n == 1 {
        return Ok(ScalingRow {
            n,
            droop,
            dapi_complete: 0.0,
            dapi_line: 0.0,
        });
    }
    let dapi = |g: &crate::NetworkGraph| -> Result<f64> {
        let spec = spectral_decomposition(&laplacians(g, p.gamma()).susceptance)?;
        Ok(h2_dapi_closed_form(alpha, p, spec.eigenvalues().as_slice())?.squared_norm)
    };
    let per_seed: Vec<(f64, f64)> = seeds
        .par_iter()
        .map(|&seed| {
            let line = build_line_graph(n, &random_susceptances(n - 1, b_range, seed)?, alpha)?;
            let complete = build_random_connected_graph(n, 1.0, b_range, alpha, seed)?;
            Ok((dapi(&complete)?, dapi(&line)?))
        })
        .collect::<Result<_>>()?;
    let count = seeds.len() as f64;
    Ok(ScalingRow {
        n,
        droop,
        dapi_complete: per_seed.iter().map(|r| r.0).sum::<f64>() / count,
        dapi_line: per_seed.iter().map(|r| r.1).sum::<f64>() / count,
    })
}
