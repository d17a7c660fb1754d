//! Kron-reduced network graphs, their Laplacians and spectral decompositions.
//!
//! Node indices are 0-based in memory and 1-based in edge-list files.
//! Conductances are never stored: a single resistance-to-reactance ratio
//! `alpha` gives `g_ij = alpha * b_ij` on every line, hence `L_G = alpha L_B`.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Error, Result};

/// Relative threshold (against the largest eigenvalue) below which a
/// Laplacian eigenvalue is treated as exactly zero.
pub const ZERO_EIGENVALUE_RTOL: f64 = 1e-9;

/// Maximum number of Erdős–Rényi draws before giving up on connectivity.
pub const MAX_GENERATION_ATTEMPTS: usize = 1000;

const IEEE57_EDGES: &str = include_str!("../data/ieee57.edges");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub susceptance: f64,
}

/// Undirected, connected, weighted graph of a Kron-reduced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    n_nodes: usize,
    edges: Vec<Edge>,
    alpha: f64,
}

impl NetworkGraph {
    /// Validates and builds a graph. Edges use 0-based node indices.
    pub fn new(n_nodes: usize, edges: Vec<Edge>, alpha: f64) -> Result<Self> {
        ensure(n_nodes >= 1, || "graph needs at least one node".into())?;
        ensure(alpha.is_finite() && alpha >= 0.0, || {
            format!("alpha must be finite and >= 0, got {alpha}")
        })?;
        let mut seen = HashSet::with_capacity(edges.len());
        for e in &edges {
            ensure(e.i < n_nodes && e.j < n_nodes, || {
                format!("edge ({}, {}) out of range for {n_nodes} nodes", e.i, e.j)
            })?;
            ensure(e.i != e.j, || format!("self-loop at node {}", e.i))?;
            ensure(e.susceptance.is_finite() && e.susceptance > 0.0, || {
                format!(
                    "edge ({}, {}) has non-positive susceptance {}",
                    e.i, e.j, e.susceptance
                )
            })?;
            ensure(seen.insert((e.i.min(e.j), e.i.max(e.j))), || {
                format!("duplicate edge ({}, {})", e.i, e.j)
            })?;
        }
        let g = Self {
            n_nodes,
            edges,
            alpha,
        };
        let components = g.component_count();
        if components != 1 {
            return Err(Error::Disconnected {
                zero_modes: components,
            });
        }
        Ok(g)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Same topology and weights with a different `alpha`.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.n_nodes, self.edges.clone(), alpha)
    }

    fn component_count(&self) -> usize {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        let mut seen = vec![false; self.n_nodes];
        let mut components = 0;
        for start in 0..self.n_nodes {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        components
    }

    /// Serialises to the edge-list file format (1-based indices).
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("alpha {}\n", self.alpha);
        for e in &self.edges {
            let _ = writeln!(s, "{} {} {}", e.i + 1, e.j + 1, e.susceptance);
        }
        s
    }
}

/// Path graph `1 - 2 - ... - n` with `b_{i,i+1} = susceptances[i]`.
pub fn build_line_graph(n: usize, susceptances: &[f64], alpha: f64) -> Result<NetworkGraph> {
    ensure(n >= 2, || format!("line graph needs n >= 2, got {n}"))?;
    ensure(susceptances.len() == n - 1, || {
        format!(
            "line graph with {n} nodes needs {} susceptances, got {}",
            n - 1,
            susceptances.len()
        )
    })?;
    let edges = susceptances
        .iter()
        .enumerate()
        .map(|(i, &b)| Edge {
            i,
            j: i + 1,
            susceptance: b,
        })
        .collect();
    NetworkGraph::new(n, edges, alpha)
}

/// Complete graph on `n` nodes with uniform susceptance `b`.
pub fn build_complete_graph(n: usize, b: f64, alpha: f64) -> Result<NetworkGraph> {
    ensure(n >= 2, || format!("complete graph needs n >= 2, got {n}"))?;
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            edges.push(Edge {
                i,
                j,
                susceptance: b,
            });
        }
    }
    NetworkGraph::new(n, edges, alpha)
}

fn check_range(b_range: (f64, f64)) -> Result<()> {
    let (lo, hi) = b_range;
    ensure(
        lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi,
        || format!("susceptance range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"),
    )
}

fn draw_weight(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// `count` i.i.d. susceptances uniform on `b_range`, reproducible per seed.
pub fn random_susceptances(count: usize, b_range: (f64, f64), seed: u64) -> Result<Vec<f64>> {
    check_range(b_range)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| draw_weight(&mut rng, b_range)).collect())
}

/// Erdős–Rényi graph `G(n, p)` redrawn until connected, with weights i.i.d.
/// uniform on `b_range`. Deterministic for a fixed seed.
pub fn build_random_connected_graph(
    n: usize,
    edge_probability: f64,
    b_range: (f64, f64),
    alpha: f64,
    seed: u64,
) -> Result<NetworkGraph> {
    ensure(n >= 1, || "random graph needs n >= 1".into())?;
    ensure(edge_probability > 0.0 && edge_probability <= 1.0, || {
        format!("edge probability must lie in (0, 1], got {edge_probability}")
    })?;
    check_range(b_range)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if edge_probability >= 1.0 || rng.random::<f64>() < edge_probability {
                    edges.push(Edge {
                        i,
                        j,
                        susceptance: draw_weight(&mut rng, b_range),
                    });
                }
            }
        }
        match NetworkGraph::new(n, edges, alpha) {
            Ok(g) => return Ok(g),
            Err(Error::Disconnected { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Generation(MAX_GENERATION_ATTEMPTS))
}

/// Parses the edge-list format:
///
/// ```text
/// # comment
/// alpha 1.0
/// 1 2 0.8
/// 2 3 1.2
/// ```
///
/// The first non-comment line must be `alpha <float>`; every following line
/// is `<i> <j> <b_ij>` with 1-based indices covering `1..=N` contiguously.
pub fn parse_edge_list(text: &str) -> Result<NetworkGraph> {
    let mut alpha = None;
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    let mut max_index = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let perr = |msg: String| Error::Parse { line: line_no, msg };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if alpha.is_none() {
            if fields.len() != 2 || fields[0] != "alpha" {
                return Err(perr(format!("expected `alpha <float>`, found `{content}`")));
            }
            let a: f64 = fields[1]
                .parse()
                .map_err(|_| perr(format!("invalid alpha `{}`", fields[1])))?;
            if !(a.is_finite() && a >= 0.0) {
                return Err(perr(format!("alpha must be >= 0, got {a}")));
            }
            alpha = Some(a);
            continue;
        }
        if fields.len() != 3 {
            return Err(perr(format!(
                "expected `<i> <j> <b_ij>`, found {} fields",
                fields.len()
            )));
        }
        let idx = |s: &str| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(perr(format!("invalid node index `{s}` (1-based)"))),
            }
        };
        let i = idx(fields[0])?;
        let j = idx(fields[1])?;
        let b: f64 = fields[2]
            .parse()
            .map_err(|_| perr(format!("invalid susceptance `{}`", fields[2])))?;
        if i == j {
            return Err(perr(format!("self-loop at node {i}")));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(perr(format!("non-positive susceptance {b}")));
        }
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(perr(format!("duplicate edge ({i}, {j})")));
        }
        max_index = max_index.max(i).max(j);
        edges.push(Edge {
            i: i - 1,
            j: j - 1,
            susceptance: b,
        });
    }
    let alpha = alpha.ok_or_else(|| Error::Parse {
        line: text.lines().count().max(1),
        msg: "missing `alpha <float>` header".into(),
    })?;
    if edges.is_empty() {
        return Err(Error::Validation("edge list contains no edges".into()));
    }
    let mut present = vec![false; max_index];
    for e in &edges {
        present[e.i] = true;
        present[e.j] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(Error::Validation(format!(
            "node indices are not contiguous: node {} never appears",
            missing + 1
        )));
    }
    NetworkGraph::new(max_index, edges, alpha)
}

pub fn ingest_edge_list(path: impl AsRef<Path>) -> Result<NetworkGraph> {
    let text = std::fs::read_to_string(path)?;
    parse_edge_list(&text)
}

/// Topology of the IEEE 57-bus benchmark with uniform unit susceptances.
pub fn ieee57(alpha: f64) -> NetworkGraph {
    parse_edge_list(IEEE57_EDGES)
        .and_then(|g| g.with_alpha(alpha))
        .expect("bundled IEEE-57 edge list is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianKind {
    Susceptance,
    Conductance,
    Communication,
}

/// Weighted graph Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    matrix: DMatrix<f64>,
    kind: LaplacianKind,
}

impl Laplacian {
    fn susceptance(g: &NetworkGraph) -> Self {
        let n = g.n_nodes();
        let mut l = DMatrix::zeros(n, n);
        for e in g.edges() {
            l[(e.i, e.j)] -= e.susceptance;
            l[(e.j, e.i)] -= e.susceptance;
            l[(e.i, e.i)] += e.susceptance;
            l[(e.j, e.j)] += e.susceptance;
        }
        Self {
            matrix: l,
            kind: LaplacianKind::Susceptance,
        }
    }

    fn scaled(&self, factor: f64, kind: LaplacianKind) -> Self {
        Self {
            matrix: &self.matrix * factor,
            kind,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> LaplacianKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// The three Laplacians of one network: `L_G = alpha L_B`, `L_C = gamma L_B`.
#[derive(Debug, Clone)]
pub struct Laplacians {
    pub susceptance: Laplacian,
    pub conductance: Laplacian,
    pub communication: Laplacian,
}

pub fn laplacians(g: &NetworkGraph, gamma: f64) -> Laplacians {
    let lb = Laplacian::susceptance(g);
    if gamma == 0.0 {
        log::debug!("gamma = 0: communication Laplacian vanishes (decentralised integrators)");
    }
    Laplacians {
        conductance: lb.scaled(g.alpha(), LaplacianKind::Conductance),
        communication: lb.scaled(gamma, LaplacianKind::Communication),
        susceptance: lb,
    }
}

/// Ascending eigenvalues and orthonormal eigenvectors of `L_B`.
///
/// Exactly one eigenvalue is zero (clamped), its eigenvector is `1/√N`, and
/// every eigenvector has its first non-negligible component positive.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn n_nodes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// Algebraic connectivity `λ₂` (0 for a single node).
    pub fn lambda_2(&self) -> f64 {
        if self.eigenvalues.len() > 1 {
            self.eigenvalues[1]
        } else {
            0.0
        }
    }

    /// Eigenvalues `λ₂ … λ_N`.
    pub fn nonzero(&self) -> &[f64] {
        &self.eigenvalues.as_slice()[1..]
    }

    /// `U diag(f(λ)) Uᵀ`.
    pub fn spectral_function(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let u = &self.eigenvectors;
        let d = DMatrix::from_diagonal(&self.eigenvalues.map(f));
        u * d * u.transpose()
    }
}

pub fn spectral_decomposition(l_b: &Laplacian) -> Result<Spectrum> {
    let n = l_b.dim();
    ensure(n >= 1, || "empty Laplacian".into())?;
    let eig = l_b.matrix().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);

    let lambda_max = values[n - 1].max(0.0);
    let threshold = ZERO_EIGENVALUE_RTOL * lambda_max;
    let zero_modes = values.iter().filter(|v| v.abs() <= threshold).count();
    if n > 1 && zero_modes != 1 {
        return Err(Error::Disconnected { zero_modes });
    }
    values[0] = 0.0;

    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    vectors.column_mut(0).fill(inv_sqrt_n);
    for mut col in vectors.column_iter_mut().skip(1) {
        let scale = col.amax();
        if let Some(first) = col.iter().copied().find(|x| x.abs() > 1e-10 * scale) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
    Ok(Spectrum {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}
