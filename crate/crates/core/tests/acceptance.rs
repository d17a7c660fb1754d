//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints one PASS/FAIL line; exits non-zero if any fails.

use std::time::{Duration, Instant};

use lossgrid_core::dynamics::{assemble, assemble_dapi, assemble_droop, check_stability};
use lossgrid_core::h2::{h2_closed_form, h2_full_gramian, h2_modal};
use lossgrid_core::network::{
    build_complete_graph, build_line_graph, build_random_connected_graph, ieee57, laplacians,
    spectral_decomposition,
};
use lossgrid_core::sim::{empirical_h2, input_impulse, simulate};
use lossgrid_core::tuning::{
    gamma_star_vs_k, optimal_gamma, optimal_gamma_complete, scaling_row, sweep, SweepMetric,
    SweepParam,
};
use lossgrid_core::{ControllerKind, ControllerParams, NetworkGraph, SimConfig, Spectrum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn spectrum(g: &NetworkGraph) -> Spectrum {
    spectral_decomposition(&laplacians(g, 1.0).susceptance).unwrap()
}

fn draw_params(rng: &mut ChaCha8Rng, lo: f64) -> ControllerParams {
    let mut d = || 10.0 - rng.random_range(0.0..10.0 - lo);
    ControllerParams::new(d(), d(), d(), d()).unwrap()
}

fn random_graph(rng: &mut ChaCha8Rng, n_range: std::ops::RangeInclusive<usize>) -> NetworkGraph {
    let n = rng.random_range(n_range);
    let p = rng.random_range(0.2..1.0);
    build_random_connected_graph(n, p, (0.5, 1.5), 1.0, rng.random()).unwrap()
}

fn three_way_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut corollary_violations = 0;
    for _ in 0..200 {
        let g = random_graph(&mut rng, 2..=30);
        let p = draw_params(&mut rng, 0.1);
        let spec = spectrum(&g);
        for kind in [ControllerKind::Droop, ControllerKind::Dapi] {
            let closed = h2_closed_form(&spec, &p, g.alpha(), kind).map_err(|e| e.to_string())?;
            let modal = h2_modal(&spec, &p, g.alpha(), kind).map_err(|e| e.to_string())?;
            let ss = assemble(&g, &p, kind).map_err(|e| e.to_string())?;
            let full = h2_full_gramian(&ss).map_err(|e| e.to_string())?;
            worst = worst
                .max(rel(modal.squared_norm, closed.squared_norm))
                .max(rel(full.squared_norm, closed.squared_norm));
        }
        let droop = h2_closed_form(&spec, &p, 1.0, ControllerKind::Droop)
            .unwrap()
            .squared_norm;
        let dapi = h2_closed_form(&spec, &p, 1.0, ControllerKind::Dapi)
            .unwrap()
            .squared_norm;
        if dapi >= droop {
            corollary_violations += 1;
        }
    }
    let elapsed = start.elapsed();
    COROLLARY.with(|c| c.set(corollary_violations));
    if worst > 1e-7 {
        return Err(format!("max relative deviation {worst:.3e} > 1e-7"));
    }
    if elapsed > Duration::from_secs(60) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!(
        "max relative deviation {worst:.3e} over 400 systems in {elapsed:.2?}"
    ))
}

thread_local! {
    static COROLLARY: std::cell::Cell<usize> = const { std::cell::Cell::new(usize::MAX) };
}

fn droop_topology_independence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let alpha = rng.random_range(0.5..2.0);
        let g = random_graph(&mut rng, 2..=30).with_alpha(alpha).unwrap();
        let p = draw_params(&mut rng, 0.1);
        let modal =
            h2_modal(&spectrum(&g), &p, alpha, ControllerKind::Droop).map_err(|e| e.to_string())?;
        let want = alpha / (2.0 * p.m());
        for v in modal.per_mode.unwrap() {
            worst = worst.max(rel(v, want));
        }
    }
    if worst > 1e-9 {
        return Err(format!("per-mode deviation {worst:.3e} > 1e-9"));
    }
    Ok(format!(
        "per-mode deviation from alpha/2m at most {worst:.3e}"
    ))
}

fn dapi_below_droop() -> Outcome {
    match COROLLARY.with(|c| c.get()) {
        0 => Ok("0 violations in 200 draws".into()),
        usize::MAX => Err("agreement draws did not run".into()),
        n => Err(format!("{n} violations")),
    }
}

fn complete_graph_optimum() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let (mut interior, mut boundary) = (0, 0);
    let mut draws = 0;
    while interior < 100 || boundary < 20 {
        let n = rng.random_range(2..=40);
        let b = rng.random_range(0.1..3.0);
        let m = rng.random_range(0.05..3.0);
        let tau = rng.random_range(0.01..3.0);
        let k = rng.random_range(0.1..10.0);
        let x = n as f64 * b * m * tau;
        let is_interior = x > 1.0 && x <= 100.0;
        if (is_interior && interior >= 100) || (!is_interior && (x > 100.0 || boundary >= 20)) {
            continue;
        }
        draws += 1;
        let g = build_complete_graph(n, b, 1.0).unwrap();
        let p = ControllerParams::new(m, tau, k, 0.0).unwrap();
        let numeric = optimal_gamma(&spectrum(&g), &p, 1.0)
            .map_err(|e| e.to_string())?
            .gamma_star;
        let formula = optimal_gamma_complete(n, b, k, m, tau).map_err(|e| e.to_string())?;
        if is_interior {
            interior += 1;
            worst = worst.max((numeric - formula).abs());
        } else {
            boundary += 1;
            if numeric != 0.0 || formula != 0.0 {
                return Err(format!(
                    "Nbm tau = {x:.3}: numeric {numeric}, formula {formula}, want 0"
                ));
            }
        }
    }
    if worst > 1e-6 {
        return Err(format!("max |numeric - formula| = {worst:.3e} > 1e-6"));
    }
    Ok(format!(
        "{interior} interior draws within {worst:.3e}; {boundary} boundary draws at 0 ({draws} total)"
    ))
}

fn gamma_sweep_shape() -> Outcome {
    let g = build_complete_graph(50, 1.0, 1.0).unwrap();
    let spec = spectrum(&g);
    let grid: Vec<f64> = (0..=200).map(|i| i as f64 * 0.01).collect();
    let mut report = Vec::new();
    for tau in [0.0, 1.0, 4.0] {
        let p = ControllerParams::new(1.0, tau, 1.0, 0.0).unwrap();
        let curve = sweep(&spec, &p, 1.0, SweepParam::Gamma, &grid, SweepMetric::Norm)
            .map_err(|e| e.to_string())?;
        let (at, _) = curve.argmin().unwrap();
        let last = *grid.last().unwrap();
        let ok = if tau == 0.0 {
            at == 0.0
        } else {
            at > 0.0 && at < last
        };
        if !ok {
            return Err(format!("tau = {tau}: minimum at gamma = {at}"));
        }
        report.push(format!("tau={tau}: argmin {at:.2}"));
    }
    Ok(report.join(", "))
}

fn size_ordering() -> Outcome {
    let p = ControllerParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
    let seeds: Vec<u64> = (0..20).collect();
    let mut report = Vec::new();
    for n in [10, 30, 50, 100] {
        let row = scaling_row(n, &p, 1.0, (0.5, 1.5), &seeds).map_err(|e| e.to_string())?;
        let exact = (n - 1) as f64 / 2.0;
        if !(row.dapi_line < row.dapi_complete
            && row.dapi_complete < row.droop
            && row.droop == exact)
        {
            return Err(format!("N = {n}: {row:?}"));
        }
        report.push(format!(
            "N={n}: {:.3} < {:.3} < {}",
            row.dapi_line, row.dapi_complete, row.droop
        ));
    }
    Ok(report.join("; "))
}

fn stochastic_validation() -> Outcome {
    let p = ControllerParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
    let k3 = build_complete_graph(3, 1.0, 1.0).unwrap();
    let line = build_line_graph(20, &[1.0; 19], 1.0).unwrap();
    let cases = [
        ("K3 DAPI", assemble_dapi(&k3, &p).unwrap(), &k3, 15.0 / 19.0),
        (
            "line-20 droop",
            assemble_droop(&line, &p).unwrap(),
            &line,
            9.5,
        ),
    ];
    let mut report = Vec::new();
    for (name, ss, g, target) in cases {
        let cfg = SimConfig {
            dt: 0.005,
            horizon: 5000.0,
            burn_in: 200.0,
            seed: 2024,
            record_stride: 1,
            ..SimConfig::default()
        };
        let start = Instant::now();
        let traj =
            simulate(&ss, &laplacians(g, 1.0).conductance, &cfg).map_err(|e| e.to_string())?;
        let est = empirical_h2(&traj, &cfg).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let dev = (est.estimate - target).abs();
        if dev > 3.0 * est.stderr || dev > 0.1 * target || elapsed > Duration::from_secs(120) {
            return Err(format!(
                "{name}: estimate {:.4} +- {:.4}, target {target:.4}, {elapsed:.2?}",
                est.estimate, est.stderr
            ));
        }
        report.push(format!(
            "{name}: {:.4} +- {:.4} vs {target:.4} ({elapsed:.1?})",
            est.estimate, est.stderr
        ));
    }
    Ok(report.join("; "))
}

fn fig3_ordering() -> Outcome {
    let line = build_line_graph(20, &[1.0; 19], 1.0).unwrap();
    let l_g = laplacians(&line, 1.0).conductance;
    let mut report = Vec::new();
    for seed in 0..5 {
        let mut losses = Vec::new();
        for gamma in [0.1, 10.0] {
            let p = ControllerParams::new(1.0, 1.0, 1.0, gamma).unwrap();
            let ss = assemble_dapi(&line, &p).unwrap();
            let cfg = SimConfig {
                dt: 0.005,
                horizon: 200.0,
                noise_intensity: 0.0,
                seed,
                initial_state: Some(input_impulse(&ss, 0.1, seed)),
                record_stride: 100,
                ..SimConfig::default()
            };
            losses.push(
                simulate(&ss, &l_g, &cfg)
                    .map_err(|e| e.to_string())?
                    .integrated_loss,
            );
        }
        if losses[1] <= losses[0] {
            return Err(format!(
                "seed {seed}: gamma=10 loss {} <= gamma=0.1 loss {}",
                losses[1], losses[0]
            ));
        }
        report.push(format!("{:.2e}>{:.2e}", losses[1], losses[0]));
    }
    Ok(format!(
        "gamma=10 vs gamma=0.1 integrated loss: {}",
        report.join(", ")
    ))
}

fn stability_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..1000 {
        let p = draw_params(&mut rng, 1e-9);
        let lambda = 100.0 - rng.random_range(0.0..100.0 - 1e-9);
        for kind in [ControllerKind::Droop, ControllerKind::Dapi] {
            if !check_stability(&p, lambda, kind).map_err(|e| e.to_string())? {
                return Err(format!(
                    "draw {i}: {kind} unstable at lambda = {lambda}, {p:?}"
                ));
            }
        }
    }
    let mut worst = f64::NEG_INFINITY;
    for i in 0..50 {
        let g = random_graph(&mut rng, 2..=30);
        let p = draw_params(&mut rng, 0.1);
        for kind in [ControllerKind::Droop, ControllerKind::Dapi] {
            let ss = assemble(&g, &p, kind).unwrap();
            let eigs = ss.eigenvalues().map_err(|e| e.to_string())?;
            let scale = ss.a().amax();
            let zeros = eigs.iter().filter(|z| z.norm() <= 1e-8 * scale).count();
            let max_re = eigs
                .iter()
                .filter(|z| z.norm() > 1e-8 * scale)
                .map(|z| z.re)
                .fold(f64::NEG_INFINITY, f64::max);
            if zeros != 1 || max_re >= 0.0 {
                return Err(format!(
                    "graph {i} {kind}: {zeros} zero eigenvalues, max Re {max_re:.3e}"
                ));
            }
            worst = worst.max(max_re);
        }
    }
    Ok(format!(
        "1000 Routh draws stable; 100 assembled systems with one zero mode, max other Re {worst:.3e}"
    ))
}

fn ieee57_trends() -> Outcome {
    let g = ieee57(1.0);
    let spec = spectrum(&g);
    let grid: Vec<f64> = (1..=100).map(|i| i as f64 * 0.1).collect();
    let template = ControllerParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
    let reduction = sweep(
        &spec,
        &template,
        1.0,
        SweepParam::K,
        &grid,
        SweepMetric::RelativeLossReduction,
    )
    .map_err(|e| e.to_string())?;
    if let Some(w) = reduction.values.windows(2).position(|w| w[1] >= w[0]) {
        return Err(format!("reduction rises at k = {}", grid[w + 1]));
    }
    let gamma = gamma_star_vs_k(&spec, 1.0, 1.0, 1.0, &grid).map_err(|e| e.to_string())?;
    if let Some(w) = gamma.values.windows(2).position(|w| w[1] < w[0] - 1e-9) {
        return Err(format!("gamma* drops at k = {}", grid[w + 1]));
    }
    Ok(format!(
        "reduction {:.4} -> {:.4}, gamma* {:.4} -> {:.4} over k in [0.1, 10]",
        reduction.values[0], reduction.values[99], gamma.values[0], gamma.values[99]
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("closed form vs modal and full Gramian", three_way_agreement),
        (
            "droop per-mode norm is topology independent",
            droop_topology_independence,
        ),
        ("DAPI norm below droop norm", dapi_below_droop),
        (
            "complete-graph optimal gamma formula",
            complete_graph_optimum,
        ),
        ("K50 gamma sweep shape", gamma_sweep_shape),
        ("line < complete < droop ordering", size_ordering),
        ("empirical norm from simulation", stochastic_validation),
        ("larger gamma loses more after an impulse", fig3_ordering),
        ("stability of every mode", stability_suite),
        ("IEEE 57-bus trends in k", ieee57_trends),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let tag = if outcome.is_ok() { "PASS" } else { "FAIL" };
        let detail = outcome.unwrap_or_else(|e| {
            failed += 1;
            e
        });
        println!(
            "criterion {:>2} {tag} [{:>7.2?}] {name}: {detail}",
            i + 1,
            start.elapsed()
        );
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
