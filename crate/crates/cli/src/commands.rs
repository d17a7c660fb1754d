use anyhow::{Context, Result};
use lossgrid_core::dynamics::assemble;
use lossgrid_core::h2::{h2_closed_form, h2_droop_closed_form, h2_full_gramian, h2_modal};
use lossgrid_core::network::{
    build_complete_graph, build_line_graph, build_random_connected_graph, ingest_edge_list,
    laplacians, random_susceptances, spectral_decomposition,
};
use lossgrid_core::sim::{empirical_h2, input_impulse, phase_perturbation, simulate};
use lossgrid_core::tuning::{
    gamma_star_vs_k, optimal_gamma, optimal_gamma_complete, scaling_row, sweep,
};
use lossgrid_core::{
    ControllerKind, ControllerParams, Error, H2Result, NetworkGraph, SimConfig, Spectrum,
    SweepMetric, SweepParam,
};
use serde_json::{json, Value};

use crate::args::{
    AnalyzeArgs, ControlArgs, Controller, Metric, NetworkArgs, OutputArgs, Param, Perturbation,
    ScalingArgs, SimulateArgs, SweepArgs, TuneArgs,
};
use crate::output::{meta_path, render, sibling, write_atomic, Cell, Table};
use crate::UsageError;

const DEFAULT_B: f64 = 1.0;
const DEFAULT_ALPHA: f64 = 1.0;

/// Input mistakes found while setting up a run are usage errors; anything
/// else (file I/O, parse errors) keeps its own kind.
fn setup(e: Error) -> anyhow::Error {
    match e {
        Error::Validation(msg) => UsageError(msg).into(),
        other => other.into(),
    }
}

pub(crate) struct Network {
    pub graph: NetworkGraph,
    /// `(N, b)` when the network is a complete graph with uniform weights.
    pub uniform_complete: Option<(usize, f64)>,
}

pub(crate) fn build_network(a: &NetworkArgs, seed: u64) -> Result<Network> {
    let src = &a.source;
    let alpha = a.alpha.unwrap_or(DEFAULT_ALPHA);
    let b = a.b.unwrap_or(DEFAULT_B);
    let range = a.b_range.map(|r| (r.lo, r.hi));
    let mut uniform_complete = None;
    let graph = if let Some(n) = src.line {
        let weights = match range {
            Some(r) => random_susceptances(n - 1, r, seed).map_err(setup)?,
            None => vec![b; n - 1],
        };
        build_line_graph(n, &weights, alpha).map_err(setup)?
    } else if let Some(n) = src.complete {
        match range {
            Some(r) => build_random_connected_graph(n, 1.0, r, alpha, seed).map_err(setup)?,
            None => {
                uniform_complete = Some((n, b));
                build_complete_graph(n, b, alpha).map_err(setup)?
            }
        }
    } else if let Some(r) = src.random {
        build_random_connected_graph(r.n, r.p, range.unwrap_or((b, b)), alpha, seed)
            .map_err(setup)?
    } else if let Some(path) = &src.file {
        if a.b.is_some() || a.b_range.is_some() {
            return Err(UsageError("--b and --b-range do not apply to --file".into()).into());
        }
        let g = ingest_edge_list(path)
            .map_err(anyhow::Error::from)
            .with_context(|| format!("reading {}", path.display()))?;
        match a.alpha {
            Some(alpha) => g.with_alpha(alpha).map_err(setup)?,
            None => g,
        }
    } else {
        return Err(UsageError("no network source given".into()).into());
    };
    Ok(Network {
        graph,
        uniform_complete,
    })
}

/// Network and controller values after defaults and overrides are applied.
fn resolved(g: &NetworkGraph, p: &ControllerParams, seed: u64) -> Value {
    let b = g.edges().iter().map(|e| e.susceptance);
    let b_min = b.clone().fold(f64::INFINITY, f64::min);
    let b_max = b.fold(f64::NEG_INFINITY, f64::max);
    json!({
        "n_nodes": g.n_nodes(),
        "n_edges": g.edges().len(),
        "alpha": g.alpha(),
        "susceptance_min": b_min,
        "susceptance_max": b_max,
        "m": p.m(),
        "k": p.k(),
        "tau": p.tau(),
        "gamma": p.gamma(),
        "seed": seed,
    })
}

pub(crate) fn params(c: &ControlArgs) -> Result<ControllerParams> {
    ControllerParams::new(c.m, c.tau, c.k, c.gamma).map_err(setup)
}

fn spectrum(g: &NetworkGraph, p: &ControllerParams) -> Result<Spectrum> {
    Ok(spectral_decomposition(
        &laplacians(g, p.gamma()).susceptance,
    )?)
}

/// Run context shared by every command.
pub(crate) struct Run<'a> {
    pub command: &'a str,
    pub argv: &'a [String],
    pub inputs: Value,
}

impl Run<'_> {
    /// Writes the primary table (and any extra tables) plus the sidecar, or
    /// prints to stdout when no output path is set.
    fn emit(
        &self,
        out: &OutputArgs,
        tables: &[(&str, &Table)],
        resolved: Value,
        results: Value,
    ) -> Result<()> {
        let Some(path) = &out.out else {
            print!("{}", render(tables, out.format));
            return Ok(());
        };
        let mut written = vec![path.display().to_string()];
        match out.format {
            crate::args::Format::Json => write_atomic(path, render(tables, out.format).as_bytes())?,
            crate::args::Format::Csv => {
                let (_, first) = tables[0];
                write_atomic(path, first.to_csv().as_bytes())?;
                for (name, t) in &tables[1..] {
                    let extra = sibling(path, &format!("{name}.csv"));
                    write_atomic(&extra, t.to_csv().as_bytes())?;
                    written.push(extra.display().to_string());
                }
            }
        }
        let meta = json!({
            "tool": "lossgrid",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "argv": self.argv,
            "inputs": self.inputs,
            "resolved": resolved,
            "outputs": written,
            "results": results,
        });
        let mut text = serde_json::to_string_pretty(&meta)?;
        text.push('\n');
        write_atomic(&meta_path(path), text.as_bytes())?;
        Ok(())
    }
}

fn oracle_available(p: &ControllerParams, kind: ControllerKind) -> bool {
    p.tau() > 0.0 && !(kind == ControllerKind::Dapi && p.gamma() == 0.0)
}

struct Norms {
    closed: H2Result,
    modal: Option<H2Result>,
    full: Option<f64>,
}

fn norms(
    g: &NetworkGraph,
    spec: &Spectrum,
    p: &ControllerParams,
    kind: ControllerKind,
) -> Result<Norms> {
    let closed = h2_closed_form(spec, p, g.alpha(), kind)?;
    if !oracle_available(p, kind) {
        log::warn!("{kind}: no state-space realisation at these parameters; reporting the closed form only");
        return Ok(Norms {
            closed,
            modal: None,
            full: None,
        });
    }
    let modal = h2_modal(spec, p, g.alpha(), kind)?;
    let full = h2_full_gramian(&assemble(g, p, kind)?)?.squared_norm;
    Ok(Norms {
        closed,
        modal: Some(modal),
        full: Some(full),
    })
}

fn rel_dev(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub(crate) fn analyze(run: &Run, a: &AnalyzeArgs) -> Result<()> {
    let p = params(&a.control)?;
    let net = build_network(&a.network, a.seed)?;
    let g = &net.graph;
    let spec = spectrum(g, &p)?;
    let droop = norms(g, &spec, &p, ControllerKind::Droop)?;
    let dapi = norms(g, &spec, &p, ControllerKind::Dapi)?;

    let mut deviation = 0.0f64;
    for n in [&droop, &dapi] {
        let c = n.closed.squared_norm;
        for v in n.modal.iter().map(|m| m.squared_norm).chain(n.full) {
            deviation = deviation.max(rel_dev(v, c));
        }
    }
    let (d, q) = (droop.closed.squared_norm, dapi.closed.squared_norm);
    let below = if q < d { "true" } else { "false" };
    let summary = Table::key_value(vec![
        ("n_nodes", g.n_nodes().into()),
        ("n_edges", g.edges().len().into()),
        ("alpha", g.alpha().into()),
        ("droop_closed_form", d.into()),
        (
            "droop_modal_lyapunov",
            droop.modal.as_ref().map(|m| m.squared_norm).into(),
        ),
        ("droop_full_gramian", droop.full.into()),
        ("dapi_closed_form", q.into()),
        (
            "dapi_modal_lyapunov",
            dapi.modal.as_ref().map(|m| m.squared_norm).into(),
        ),
        ("dapi_full_gramian", dapi.full.into()),
        ("max_relative_deviation", deviation.into()),
        ("dapi_below_droop", below.into()),
        (
            "relative_loss_reduction",
            (if d > 0.0 { 1.0 - q / d } else { 0.0 }).into(),
        ),
    ]);

    let mut modes = Table::new(["mode", "lambda", "droop", "dapi", "dapi_modal_lyapunov"]);
    let lambdas = spec.nonzero();
    let droop_pm = droop.closed.per_mode.as_deref().unwrap_or(&[]);
    let dapi_pm = dapi.closed.per_mode.as_deref().unwrap_or(&[]);
    let dapi_modal_pm = dapi.modal.as_ref().and_then(|m| m.per_mode.as_deref());
    for (i, &lambda) in lambdas.iter().enumerate() {
        modes.push(vec![
            (i + 2).into(),
            lambda.into(),
            droop_pm[i].into(),
            dapi_pm[i].into(),
            dapi_modal_pm.map(|v| v[i]).into(),
        ]);
    }
    let results = json!({
        "droop": d,
        "dapi": q,
        "max_relative_deviation": deviation,
        "dapi_below_droop": q < d,
    });
    run.emit(
        &a.output,
        &[("summary", &summary), ("modes", &modes)],
        resolved(g, &p, a.seed),
        results,
    )
}

pub(crate) fn tune(run: &Run, a: &TuneArgs) -> Result<()> {
    let p = params(&a.control)?;
    let net = build_network(&a.network, a.seed)?;
    let g = &net.graph;
    let spec = spectrum(g, &p)?;
    let alpha = g.alpha();

    if let Some(grid) = &a.k_grid {
        let ks = grid.points();
        if ks[0] <= 0.0 {
            return Err(UsageError("k grid must be positive".into()).into());
        }
        let reduction = sweep(
            &spec,
            &p,
            alpha,
            SweepParam::K,
            &ks,
            SweepMetric::RelativeLossReduction,
        )?;
        let gamma = gamma_star_vs_k(&spec, alpha, p.m(), p.tau(), &ks)?;
        let mut t = Table::new(["k", "gamma_star", "relative_loss_reduction"]);
        for ((&k, &star), &r) in ks.iter().zip(&gamma.values).zip(&reduction.values) {
            t.push(vec![k.into(), star.into(), r.into()]);
        }
        let results = json!({ "points": ks.len() });
        return run.emit(&a.output, &[("k", &t)], resolved(g, &p, a.seed), results);
    }

    let t = optimal_gamma(&spec, &p, alpha)?;
    let droop = h2_droop_closed_form(alpha, p.m(), g.n_nodes())?.squared_norm;
    let formula = match net.uniform_complete {
        Some((n, b)) => Some(optimal_gamma_complete(n, b, p.k(), p.m(), p.tau())?),
        None => None,
    };
    let summary = Table::key_value(vec![
        ("gamma_star", t.gamma_star.into()),
        ("norm_at_gamma_star", t.norm_at_star.into()),
        ("droop_norm", droop.into()),
        (
            "relative_loss_reduction",
            (1.0 - t.norm_at_star / droop).into(),
        ),
        ("gamma_star_complete_graph_formula", formula.into()),
        ("local_minima", t.local_minima.len().into()),
        ("bisection_steps", t.iterations.into()),
        ("search_upper_bound", t.bracket.1.into()),
    ]);
    let results = json!({
        "gamma_star": t.gamma_star,
        "norm_at_gamma_star": t.norm_at_star,
        "local_minima": t.local_minima,
    });
    run.emit(
        &a.output,
        &[("summary", &summary)],
        resolved(g, &p, a.seed),
        results,
    )
}

fn sweep_param(p: Param) -> SweepParam {
    match p {
        Param::Gamma => SweepParam::Gamma,
        Param::K => SweepParam::K,
        Param::Tau => SweepParam::Tau,
        Param::M => SweepParam::M,
    }
}

pub(crate) fn sweep_cmd(run: &Run, a: &SweepArgs) -> Result<()> {
    let p = params(&a.control)?;
    let net = build_network(&a.network, a.seed)?;
    let g = &net.graph;
    let spec = spectrum(g, &p)?;
    let grid = a.grid.points();
    let param = sweep_param(a.param);
    // Validate every grid value up front so bad grids are usage errors.
    for &v in &grid {
        param.apply(&p, v).map_err(setup)?;
    }
    let (metric, label) = match a.metric {
        Metric::Norm => (SweepMetric::Norm, "dapi"),
        Metric::RelativeLossReduction => (
            SweepMetric::RelativeLossReduction,
            "relative_loss_reduction",
        ),
    };
    if metric == SweepMetric::RelativeLossReduction && param == SweepParam::Gamma {
        return Err(UsageError(
            "relative-loss-reduction re-optimises gamma; sweep k, tau or m".into(),
        )
        .into());
    }
    let curve = sweep(&spec, &p, g.alpha(), param, &grid, metric)?;

    let mut columns = vec![param.name(), label];
    if metric == SweepMetric::Norm {
        columns.push("droop");
    }
    let mut t = Table::new(columns);
    for (&x, &v) in curve.grid.iter().zip(&curve.values) {
        let mut row = vec![x.into(), v.into()];
        if metric == SweepMetric::Norm {
            let m = if param == SweepParam::M { x } else { p.m() };
            row.push(
                h2_droop_closed_form(g.alpha(), m, g.n_nodes())?
                    .squared_norm
                    .into(),
            );
        }
        t.push(row);
    }
    let (at, min) = curve.argmin().expect("non-empty grid");
    let results = json!({ "argmin": at, "min": min, "points": grid.len() });
    run.emit(
        &a.output,
        &[(param.name(), &t)],
        resolved(g, &p, a.seed),
        results,
    )
}

pub(crate) fn simulate_cmd(run: &Run, a: &SimulateArgs) -> Result<()> {
    let p = params(&a.control)?;
    let net = build_network(&a.network, a.seed)?;
    let g = &net.graph;
    let kind = match a.controller {
        Controller::Droop => ControllerKind::Droop,
        Controller::Dapi => ControllerKind::Dapi,
    };
    let ss = assemble(g, &p, kind).map_err(|e| match e {
        Error::Assembly(msg) => UsageError(msg).into(),
        other => anyhow::Error::from(other),
    })?;
    let initial_state = match a.perturb {
        Perturbation::None => None,
        Perturbation::Impulse => Some(input_impulse(&ss, a.perturb_scale, a.seed)),
        Perturbation::Phase => Some(phase_perturbation(&ss, a.perturb_scale, a.seed)),
    };
    let cfg = SimConfig {
        dt: a.dt,
        horizon: a.horizon,
        burn_in: a.burn_in,
        noise_intensity: a.noise,
        seed: a.seed,
        initial_state,
        record_stride: a.stride as usize,
    };
    cfg.validate().map_err(setup)?;
    let traj = simulate(&ss, &laplacians(g, p.gamma()).conductance, &cfg)?;

    let n = traj.n_nodes;
    let mut columns = vec!["t".to_string(), "loss".to_string()];
    let names: &[&str] = match kind {
        ControllerKind::Droop => &["theta", "omega"],
        ControllerKind::Dapi => &["theta", "omega", "Omega"],
    };
    for name in names {
        columns.extend((1..=n).map(|i| format!("{name}_{i}")));
    }
    let mut t = Table::new(columns);
    for i in 0..traj.len() {
        let mut row = vec![traj.times[i].into(), traj.instantaneous_loss[i].into()];
        row.extend(traj.state(i).iter().map(|&x| Cell::from(x)));
        t.push(row);
    }

    let estimate = match empirical_h2(&traj, &cfg) {
        Ok(e) => Some(e),
        Err(e) => {
            log::info!("no H2 estimate: {e}");
            None
        }
    };
    let summary = Table::key_value(vec![
        ("integrated_loss", traj.integrated_loss.into()),
        ("empirical_h2", estimate.map(|e| e.estimate).into()),
        ("empirical_h2_stderr", estimate.map(|e| e.stderr).into()),
        ("slowest_time_constant", traj.slowest_time_constant.into()),
        ("samples", traj.len().into()),
    ]);
    let results = summary.to_json();
    if a.output.out.is_some() {
        print!("{}", render(&[("summary", &summary)], a.output.format));
    }
    run.emit(
        &a.output,
        &[("trajectory", &t)],
        resolved(g, &p, a.seed),
        results,
    )
}

pub(crate) fn scaling(run: &Run, a: &ScalingArgs) -> Result<()> {
    let p = params(&a.control)?;
    let seeds: Vec<u64> = (0..a.seeds).map(|i| a.seed + i).collect();
    let mut t = Table::new(["N", "droop", "dapi_complete", "dapi_line"]);
    for n in a.n_grid.points() {
        let row = scaling_row(n, &p, a.alpha, (a.b_range.lo, a.b_range.hi), &seeds)
            .with_context(|| format!("N = {n}"))?;
        t.push(vec![
            n.into(),
            row.droop.into(),
            row.dapi_complete.into(),
            row.dapi_line.into(),
        ]);
    }
    let results = json!({ "rows": t.rows.len() });
    let resolved = json!({
        "alpha": a.alpha,
        "susceptance_range": [a.b_range.lo, a.b_range.hi],
        "seeds": seeds,
        "m": p.m(),
        "k": p.k(),
        "tau": p.tau(),
        "gamma": p.gamma(),
    });
    run.emit(&a.output, &[("scaling", &t)], resolved, results)
}
