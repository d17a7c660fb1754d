//! Euler–Maruyama simulation of the closed loop under white-noise power
//! disturbances, with the resistive loss `θᵀ L_G θ` tracked along the way.
//!
//! The uniform phase drift is marginal but carries no loss, so it is not
//! deflated; instead θ is re-centred on its mean after every step.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControllerKind, StateSpace};
use crate::error::{ensure, Error, Result};
use crate::network::Laplacian;
use crate::numfmt::sig12;

/// Number of batches used for the batch-means standard error.
pub const BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Integration step (s).
    pub dt: f64,
    /// Simulated time span (s).
    pub horizon: f64,
    /// Initial span excluded from statistics (s).
    pub burn_in: f64,
    /// Two-sided spectral density of the per-node white noise.
    pub noise_intensity: f64,
    pub seed: u64,
    /// Defaults to the operating point (zero).
    pub initial_state: Option<Vec<f64>>,
    /// Keep every `record_stride`-th step in the trajectory.
    pub record_stride: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.005,
            horizon: 100.0,
            burn_in: 0.0,
            noise_intensity: 1.0,
            seed: 0,
            initial_state: None,
            record_stride: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.dt.is_finite() && self.dt > 0.0, || {
            format!("dt must be > 0, got {}", self.dt)
        })?;
        ensure(self.horizon.is_finite() && self.horizon > 0.0, || {
            format!("horizon must be > 0, got {}", self.horizon)
        })?;
        ensure(self.burn_in >= 0.0 && self.burn_in < self.horizon, || {
            format!("burn-in {} must lie in [0, horizon)", self.burn_in)
        })?;
        ensure(self.dt <= self.horizon / 100.0, || {
            format!(
                "dt = {} exceeds horizon/100 = {}",
                self.dt,
                self.horizon / 100.0
            )
        })?;
        ensure(
            self.noise_intensity.is_finite() && self.noise_intensity >= 0.0,
            || format!("noise intensity must be >= 0, got {}", self.noise_intensity),
        )?;
        ensure(self.record_stride >= 1, || {
            "record stride must be >= 1".into()
        })
    }

    fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Sampled states and losses of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Row-major, one row of `n_states` per sample.
    pub states: Vec<f64>,
    pub instantaneous_loss: Vec<f64>,
    /// `∫ θᵀL_Gθ dt` over the whole horizon, accumulated at every step.
    pub integrated_loss: f64,
    pub n_nodes: usize,
    pub n_states: usize,
    pub kind: ControllerKind,
    /// `1 / min |Re z|` over the deflated system's eigenvalues.
    pub slowest_time_constant: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.n_states..(i + 1) * self.n_states]
    }

    pub fn theta(&self, i: usize) -> &[f64] {
        &self.state(i)[..self.n_nodes]
    }

    /// CSV with header `t,loss,theta_1..,omega_1..[,Omega_1..]`, one row
    /// per recorded sample, numbers at 12 significant digits.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let mut header = vec!["t".to_string(), "loss".to_string()];
        let names: &[&str] = match self.kind {
            ControllerKind::Droop => &["theta", "omega"],
            ControllerKind::Dapi => &["theta", "omega", "Omega"],
        };
        for name in names {
            header.extend((1..=self.n_nodes).map(|i| format!("{name}_{i}")));
        }
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = Vec::with_capacity(self.n_states + 2);
            row.push(sig12(self.times[i]));
            row.push(sig12(self.instantaneous_loss[i]));
            row.extend(self.state(i).iter().map(|&x| sig12(x)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `θᵀ L_G θ`, clamped at zero against rounding.
pub fn instantaneous_loss(theta: &[f64], l_g: &Laplacian) -> Result<f64> {
    let n = l_g.dim();
    if theta.len() != n {
        return Err(Error::Dimension(format!(
            "theta has {} entries, Laplacian is {n}x{n}",
            theta.len()
        )));
    }
    let m = l_g.matrix();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * theta[j];
        }
        acc += theta[i] * row;
    }
    Ok(acc.max(0.0))
}

/// Largest `dt` for which `|1 + dt z| < 1` on every given eigenvalue.
fn euler_step_bound(eigs: &[nalgebra::Complex<f64>]) -> f64 {
    eigs.iter()
        .map(|z| -2.0 * z.re / z.norm_sqr())
        .fold(f64::INFINITY, f64::min)
}

/// Runs `x ← x + dt·A·x + √(dt·q)·B·ξ` with `ξ ~ N(0, I_N)` per step.
pub fn simulate(ss: &StateSpace, l_g: &Laplacian, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let n = ss.n_nodes();
    let states = ss.n_states();
    if l_g.dim() != n {
        return Err(Error::Dimension(format!(
            "system has {n} nodes but the Laplacian is {0}x{0}",
            l_g.dim()
        )));
    }
    if ss.has_marginal_secondary() {
        return Err(Error::MarginalModes);
    }
    let mut x = match &cfg.initial_state {
        Some(v) if v.len() != states => {
            return Err(Error::Dimension(format!(
                "initial state has {} entries, system has {states} states",
                v.len()
            )))
        }
        Some(v) => DVector::from_column_slice(v),
        None => DVector::zeros(states),
    };

    let eigs = crate::linalg::eigenvalues(&ss.deflate_zero_mode().a)?;
    let max_real = eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if max_real >= 0.0 {
        return Err(Error::NotHurwitz { max_real });
    }
    let radius = eigs
        .iter()
        .map(|z| (nalgebra::Complex::new(1.0, 0.0) + z * cfg.dt).norm())
        .fold(0.0, f64::max);
    if radius >= 1.0 {
        return Err(Error::StepSize {
            dt: cfg.dt,
            bound: euler_step_bound(&eigs),
        });
    }
    let slowest_time_constant = 1.0 / -max_real;

    let a: &DMatrix<f64> = ss.a();
    let b: &DMatrix<f64> = ss.b();
    let noise_scale = (cfg.dt * cfg.noise_intensity).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut xi = DVector::zeros(n);
    let mut next = DVector::zeros(states);

    let steps = cfg.steps();
    let samples = steps / cfg.record_stride + 1;
    let mut traj = Trajectory {
        times: Vec::with_capacity(samples),
        states: Vec::with_capacity(samples * states),
        instantaneous_loss: Vec::with_capacity(samples),
        integrated_loss: 0.0,
        n_nodes: n,
        n_states: states,
        kind: ss.kind(),
        slowest_time_constant,
    };

    recentre(&mut x, n);
    for step in 0..=steps {
        let loss = instantaneous_loss(&x.as_slice()[..n], l_g)?;
        if step % cfg.record_stride == 0 {
            traj.times.push(step as f64 * cfg.dt);
            traj.states.extend_from_slice(x.as_slice());
            traj.instantaneous_loss.push(loss);
        }
        if step == steps {
            break;
        }
        traj.integrated_loss += loss * cfg.dt;

        next.copy_from(&x);
        next.gemv(cfg.dt, a, &x, 1.0);
        if noise_scale > 0.0 {
            for v in xi.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            next.gemv(noise_scale, b, &xi, 1.0);
        }
        std::mem::swap(&mut x, &mut next);
        recentre(&mut x, n);
    }
    Ok(traj)
}

fn recentre(x: &mut DVector<f64>, n: usize) {
    let mean = x.rows(0, n).sum() / n as f64;
    x.rows_mut(0, n).add_scalar_mut(-mean);
}

/// Impulse through the disturbance channel, `x₀ = B ξ` with
/// `ξ ~ N(0, scale² I)`: a kick to every inverter's frequency.
pub fn input_impulse(ss: &StateSpace, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi = DVector::from_fn(ss.n_nodes(), |_, _| {
        scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    });
    (ss.b() * xi).as_slice().to_vec()
}

/// Zero-mean random phase offset of the given scale, all other states zero.
pub fn phase_perturbation(ss: &StateSpace, scale: f64, seed: u64) -> Vec<f64> {
    let n = ss.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; ss.n_states()];
    for v in x.iter_mut().take(n) {
        *v = scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
    }
    let mean = x[..n].iter().sum::<f64>() / n as f64;
    x[..n].iter_mut().for_each(|v| *v -= mean);
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalH2 {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Post-burn-in mean loss divided by the noise intensity, with a
/// batch-means standard error over [`BATCHES`] contiguous batches. With zero
/// noise the undivided mean loss is returned.
pub fn empirical_h2(traj: &Trajectory, cfg: &SimConfig) -> Result<EmpiricalH2> {
    let span = cfg.horizon - cfg.burn_in;
    let needed = 100.0 * traj.slowest_time_constant;
    if span < needed {
        return Err(Error::InsufficientSamples(format!(
            "post-burn-in span {span} s is shorter than 100 slowest time constants ({needed:.1} s)"
        )));
    }
    let start = traj.times.partition_point(|&t| t < cfg.burn_in);
    let losses = &traj.instantaneous_loss[start..];
    let per_batch = losses.len() / BATCHES;
    if per_batch < 2 {
        return Err(Error::InsufficientSamples(format!(
            "{} post-burn-in samples, need at least {}",
            losses.len(),
            2 * BATCHES
        )));
    }
    let used = &losses[..per_batch * BATCHES];
    let means: Vec<f64> = used
        .chunks(per_batch)
        .map(|c| c.iter().sum::<f64>() / per_batch as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / BATCHES as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    let stderr = (var / BATCHES as f64).sqrt();
    let norm = if cfg.noise_intensity > 0.0 {
        cfg.noise_intensity
    } else {
        1.0
    };
    Ok(EmpiricalH2 {
        estimate: mean / norm,
        stderr: stderr / norm,
        samples: used.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{assemble_dapi, assemble_droop, ControllerParams};
    use crate::network::{build_complete_graph, build_line_graph, laplacians, NetworkGraph};
    use approx::assert_relative_eq;

    fn unit() -> ControllerParams {
        ControllerParams::new(1.0, 1.0, 1.0, 1.0).unwrap()
    }

    fn lg(g: &NetworkGraph) -> Laplacian {
        laplacians(g, 1.0).conductance
    }

    #[test]
    fn loss_examples() {
        let g = build_line_graph(2, &[1.0], 1.0).unwrap();
        assert_eq!(instantaneous_loss(&[1.0, 0.0], &lg(&g)).unwrap(), 1.0);
        assert_eq!(instantaneous_loss(&[0.3, 0.3], &lg(&g)).unwrap(), 0.0);
        assert!(instantaneous_loss(&[1.0], &lg(&g)).is_err());

        let g = build_complete_graph(3, 1.0, 0.7).unwrap();
        let theta: [f64; 3] = [0.31, -1.2, 0.77];
        // Edge-sum oracle.
        let mut want = 0.0f64;
        for e in g.edges() {
            want += 0.7 * e.susceptance * (theta[e.i] - theta[e.j]).powi(2);
        }
        assert_relative_eq!(
            instantaneous_loss(&theta, &lg(&g)).unwrap(),
            want,
            epsilon = 1e-12
        );
        let uniform = [2.5; 3];
        assert!(instantaneous_loss(&uniform, &lg(&g)).unwrap() < 1e-12);
    }

    #[test]
    fn loss_equals_output_energy() {
        let g = build_line_graph(4, &[0.5, 1.5, 1.0], 0.6).unwrap();
        let ss = assemble_droop(&g, &unit()).unwrap();
        let theta = [0.2, -0.4, 0.9, 0.1];
        let mut x = DVector::zeros(8);
        x.rows_mut(0, 4).copy_from_slice(&theta);
        let y = ss.c() * x;
        assert_relative_eq!(
            instantaneous_loss(&theta, &lg(&g)).unwrap(),
            y.norm_squared(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn equilibrium_stays_put() {
        let g = build_line_graph(5, &[1.0; 4], 1.0).unwrap();
        let ss = assemble_dapi(&g, &unit()).unwrap();
        let cfg = SimConfig {
            noise_intensity: 0.0,
            horizon: 10.0,
            ..SimConfig::default()
        };
        let t = simulate(&ss, &lg(&g), &cfg).unwrap();
        assert!(t.states.iter().all(|&x| x == 0.0));
        assert!(t.instantaneous_loss.iter().all(|&l| l == 0.0));
        assert_eq!(t.integrated_loss, 0.0);
    }

    #[test]
    fn zero_noise_estimate_is_zero() {
        let g = build_complete_graph(3, 1.0, 1.0).unwrap();
        let ss = assemble_dapi(&g, &unit()).unwrap();
        let cfg = SimConfig {
            noise_intensity: 0.0,
            horizon: 500.0,
            record_stride: 10,
            ..SimConfig::default()
        };
        let t = simulate(&ss, &lg(&g), &cfg).unwrap();
        assert_eq!(empirical_h2(&t, &cfg).unwrap().estimate, 0.0);
    }

    #[test]
    fn seeds_are_deterministic() {
        let g = build_line_graph(4, &[1.0; 3], 1.0).unwrap();
        let ss = assemble_dapi(&g, &unit()).unwrap();
        let cfg = SimConfig {
            horizon: 20.0,
            seed: 42,
            ..SimConfig::default()
        };
        let a = simulate(&ss, &lg(&g), &cfg).unwrap();
        let b = simulate(&ss, &lg(&g), &cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate(&ss, &lg(&g), &SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn refuses_marginal_and_unstable_discretisations() {
        let g = build_line_graph(3, &[1.0; 2], 1.0).unwrap();
        let ss = assemble_dapi(&g, &unit().with_gamma(0.0).unwrap()).unwrap();
        assert!(matches!(
            simulate(&ss, &lg(&g), &SimConfig::default()),
            Err(Error::MarginalModes)
        ));
        let g = build_complete_graph(10, 5.0, 1.0).unwrap();
        let ss = assemble_droop(&g, &unit().with_tau(0.01).unwrap()).unwrap();
        let cfg = SimConfig {
            dt: 0.5,
            horizon: 100.0,
            ..SimConfig::default()
        };
        match simulate(&ss, &lg(&g), &cfg) {
            Err(Error::StepSize { bound, .. }) => assert!(bound < 0.5),
            other => panic!("expected step-size error, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            SimConfig {
                dt: 0.0,
                ..SimConfig::default()
            },
            SimConfig {
                burn_in: 100.0,
                ..SimConfig::default()
            },
            SimConfig {
                dt: 2.0,
                ..SimConfig::default()
            },
            SimConfig {
                noise_intensity: -1.0,
                ..SimConfig::default()
            },
            SimConfig {
                record_stride: 0,
                ..SimConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn raw_loss_is_linear_in_noise_intensity() {
        let g = build_complete_graph(3, 1.0, 1.0).unwrap();
        let ss = assemble_dapi(&g, &unit()).unwrap();
        let base = SimConfig {
            horizon: 200.0,
            seed: 5,
            ..SimConfig::default()
        };
        let a = simulate(&ss, &lg(&g), &base).unwrap();
        let b = simulate(
            &ss,
            &lg(&g),
            &SimConfig {
                noise_intensity: 4.0,
                ..base
            },
        )
        .unwrap();
        let ratio = b.integrated_loss / a.integrated_loss;
        assert!((ratio - 4.0).abs() < 0.05 * 4.0, "ratio {ratio}");
    }

    #[test]
    fn estimate_converges_with_horizon() {
        let g = build_complete_graph(3, 1.0, 1.0).unwrap();
        let ss = assemble_dapi(&g, &unit()).unwrap();
        let target = 15.0 / 19.0;
        let mut errors = Vec::new();
        for horizon in [1000.0, 4000.0] {
            let cfg = SimConfig {
                horizon,
                burn_in: 20.0,
                seed: 11,
                record_stride: 4,
                ..SimConfig::default()
            };
            let t = simulate(&ss, &lg(&g), &cfg).unwrap();
            let e = empirical_h2(&t, &cfg).unwrap();
            assert!(
                (e.estimate - target).abs() <= 3.0 * e.stderr + 0.02 * target,
                "{e:?}"
            );
            errors.push(e.stderr);
        }
        // Standard error shrinks roughly like 1/√T (factor 2 here).
        let ratio = errors[0] / errors[1];
        assert!(ratio > 1.2 && ratio < 3.5, "stderr ratio {ratio}");
    }

    #[test]
    fn short_runs_are_rejected_for_estimation() {
        let g = build_line_graph(20, &[1.0; 19], 1.0).unwrap();
        let ss = assemble_droop(&g, &unit()).unwrap();
        let cfg = SimConfig {
            horizon: 100.0,
            ..SimConfig::default()
        };
        let t = simulate(&ss, &lg(&g), &cfg).unwrap();
        assert!(matches!(
            empirical_h2(&t, &cfg),
            Err(Error::InsufficientSamples(_))
        ));
    }

    #[test]
    fn csv_header_and_rows() {
        let g = build_line_graph(2, &[1.0], 1.0).unwrap();
        let ss = assemble_dapi(&g, &unit()).unwrap();
        let cfg = SimConfig {
            horizon: 1.0,
            record_stride: 100,
            ..SimConfig::default()
        };
        let t = simulate(&ss, &lg(&g), &cfg).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,loss,theta_1,theta_2,omega_1,omega_2,Omega_1,Omega_2"
        );
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn impulse_enters_through_frequency_only() {
        let g = build_line_graph(3, &[1.0; 2], 1.0).unwrap();
        let ss = assemble_dapi(&g, &unit().with_tau(2.0).unwrap()).unwrap();
        let x = input_impulse(&ss, 0.1, 3);
        assert!(x[..3].iter().chain(&x[6..]).all(|&v| v == 0.0));
        assert!(x[3..6].iter().any(|&v| v != 0.0));
        let p = phase_perturbation(&ss, 0.1, 3);
        assert!(p[..3].iter().sum::<f64>().abs() < 1e-15);
    }
}
