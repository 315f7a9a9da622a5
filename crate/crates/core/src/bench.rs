//! Reproducible accuracy and iteration-count experiments on random networks.
//!
//! An instance is a random graph with uniform conductivities and a few boundary
//! vertices carrying uniform voltages. The forward solution supplies the measurement
//! `a = |J|` for the Dirichlet run and the boundary flux for the Neumann run, so both
//! algorithms see the same graph and the same magnitudes.

use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{current_from_potential, solve_dirichlet_forward, Conductivity, DirichletData, NeumannData};
use crate::graph::{vertex_flux, Current, Graph, MeasurementMatrix};
use crate::inverse::{solve_inverse_dirichlet, solve_inverse_neumann, AdmmConfig, InverseError, InverseSolution};
use crate::rng::{indexed, substream};

const CONNECT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub nodes: usize,
    /// Density of the directed sampling pattern; an undirected edge appears when either
    /// direction is drawn, i.e. with probability `1 − (1 − density)²`.
    pub density: f64,
    /// Exact number of edges instead of density sampling.
    pub edges: Option<usize>,
    pub boundary: usize,
    pub seed: u64,
    pub alpha: f64,
    pub max_iter: usize,
    pub dirichlet_tols: Vec<f64>,
    pub neumann_tols: Vec<f64>,
    /// Record wall-clock time per row. Off by default so reports are reproducible.
    pub timing: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            nodes: 100,
            density: 0.125,
            edges: None,
            boundary: 5,
            seed: 2024,
            alpha: 0.2,
            max_iter: 100_000,
            dirichlet_tols: vec![1e-3, 1e-4, 1e-5, 1e-6],
            neumann_tols: vec![1e-2, 1e-3, 1e-4, 1e-5],
            timing: false,
        }
    }
}

impl BenchConfig {
    fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return Err(Error::Config("bench needs at least 2 nodes".into()));
        }
        if self.boundary < 2 || self.boundary > self.nodes {
            return Err(Error::Config(format!("boundary size {} must lie in 2..={}", self.boundary, self.nodes)));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Config(format!("density {} must lie in (0, 1]", self.density)));
        }
        let pairs = self.nodes * (self.nodes - 1) / 2;
        if let Some(m) = self.edges {
            if m + 1 < self.nodes || m > pairs {
                return Err(Error::Config(format!("edge count {m} must lie in {}..={pairs}", self.nodes - 1)));
            }
        }
        Ok(())
    }

    fn admm(&self, tol: f64) -> AdmmConfig<f64> {
        AdmmConfig { alpha: self.alpha, tol, max_iter: self.max_iter, ..AdmmConfig::default() }
    }
}

/// A generated network with its forward solution.
#[derive(Debug, Clone)]
pub struct BenchInstance {
    pub graph: Graph,
    pub sigma: Conductivity<f64>,
    pub f: DirichletData<f64>,
    pub potential: Vec<f64>,
    pub current: Current<f64>,
    pub a: MeasurementMatrix<f64>,
    pub neumann: NeumannData<f64>,
}

fn uniform_open(rng: &mut impl Rng) -> f64 {
    loop {
        let x: f64 = rng.random();
        if x > 0.0 {
            return x;
        }
    }
}

fn random_graph(cfg: &BenchConfig, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let n = cfg.nodes;
    match cfg.edges {
        Some(m) => {
            let pairs = n * (n - 1) / 2;
            let mut picked: Vec<usize> = sample(rng, pairs, m).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|k| unrank_pair(n, k)).collect()
        }
        None => {
            let p = 1.0 - (1.0 - cfg.density).powi(2);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    if rng.random::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
            edges
        }
    }
}

/// k-th pair `(i, j)`, `i < j`, in row-major order.
fn unrank_pair(n: usize, mut k: usize) -> (usize, usize) {
    let mut i = 0;
    while k >= n - 1 - i {
        k -= n - 1 - i;
        i += 1;
    }
    (i, i + 1 + k)
}

fn boundary_data(rng: &mut impl Rng, count: usize) -> DirichletData<f64> {
    DirichletData((0..count).map(|_| rng.random::<f64>()).collect())
}

/// Forward data for fixed graph and conductivity.
fn with_voltages(graph: Graph, sigma: Conductivity<f64>, f: DirichletData<f64>) -> Result<BenchInstance> {
    let potential = solve_dirichlet_forward(&graph, &sigma, &f)?.into_inner();
    let current = current_from_potential(&graph, &sigma, &potential)?;
    let a = current.magnitude();
    let flux = vertex_flux(&graph, &current);
    let mut gvals: Vec<f64> = graph.boundary().iter().map(|&v| flux[v]).collect();
    // remove the rounding residue so the data pass the compatibility check exactly
    let mean = gvals.iter().sum::<f64>() / gvals.len() as f64;
    for x in &mut gvals {
        *x -= mean;
    }
    let neumann = NeumannData::new(gvals)?;
    Ok(BenchInstance { graph, sigma, f, potential, current, a, neumann })
}

/// Draws a connected instance. Disconnected draws are resampled.
pub fn generate_bench_instance(cfg: &BenchConfig) -> Result<BenchInstance> {
    cfg.validate()?;
    let mut rng = substream(cfg.seed, "bench-graph");
    for _ in 0..CONNECT_ATTEMPTS {
        let edges = random_graph(cfg, &mut rng);
        let mut boundary: Vec<usize> = sample(&mut rng, cfg.nodes, cfg.boundary).into_vec();
        boundary.sort_unstable();
        let graph = match Graph::new(cfg.nodes, edges, boundary) {
            Ok(g) => g,
            Err(Error::Disconnected) => continue,
            Err(e) => return Err(e),
        };
        let mut srng = substream(cfg.seed, "bench-sigma");
        let sigma = Conductivity::finite(&graph, (0..graph.edge_count()).map(|_| uniform_open(&mut srng)).collect())?;
        let f = boundary_data(&mut substream(cfg.seed, "bench-voltages"), cfg.boundary);
        return with_voltages(graph, sigma, f);
    }
    Err(Error::Config(format!("no connected graph in {CONNECT_ATTEMPTS} draws; raise the density")))
}

/// Same graph and conductivity with new boundary voltages.
pub fn redraw_voltages(inst: &BenchInstance, seed: u64, index: u64) -> Result<BenchInstance> {
    let f = boundary_data(&mut indexed(seed, index), inst.f.0.len());
    with_voltages(inst.graph.clone(), inst.sigma.clone(), f)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub algorithm: &'static str,
    pub tol: f64,
    pub relative_error: f64,
    pub iterations: usize,
    pub gap: f64,
    pub converged: bool,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub nodes: usize,
    pub edges: usize,
    pub boundary: usize,
    pub seed: u64,
    pub rows: Vec<BenchRow>,
}

fn settle(r: std::result::Result<InverseSolution<f64>, InverseError<f64>>) -> Result<InverseSolution<f64>> {
    match r {
        Ok(s) => Ok(s),
        Err(InverseError::NotConverged(s)) => Ok(*s),
        Err(InverseError::Core(e)) => Err(e),
    }
}

fn row(
    algorithm: &'static str,
    tol: f64,
    truth: &Current<f64>,
    timing: bool,
    run: impl FnOnce() -> std::result::Result<InverseSolution<f64>, InverseError<f64>>,
) -> Result<BenchRow> {
    let start = Instant::now();
    let sol = settle(run())?;
    let seconds = timing.then(|| start.elapsed().as_secs_f64());
    Ok(BenchRow {
        algorithm,
        tol,
        relative_error: sol.current.relative_error(truth),
        iterations: sol.report.iterations,
        gap: sol.report.gap,
        converged: sol.report.converged,
        seconds,
    })
}

/// Accuracy table: both algorithms on one instance at each configured tolerance.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let inst = generate_bench_instance(cfg)?;
    run_bench_on(cfg, &inst)
}

pub fn run_bench_on(cfg: &BenchConfig, inst: &BenchInstance) -> Result<BenchReport> {
    let jobs: Vec<(&'static str, f64)> = cfg
        .dirichlet_tols
        .iter()
        .map(|&t| ("dirichlet", t))
        .chain(cfg.neumann_tols.iter().map(|&t| ("neumann", t)))
        .collect();
    let run_one = |&(alg, tol): &(&'static str, f64)| {
        let admm = cfg.admm(tol);
        let g = &inst.graph;
        if alg == "dirichlet" {
            row(alg, tol, &inst.current, cfg.timing, || solve_inverse_dirichlet(g, &inst.f, &inst.a, &admm))
        } else {
            row(alg, tol, &inst.current, cfg.timing, || solve_inverse_neumann(g, &inst.neumann, &inst.a, &admm))
        }
    };
    // timings are only meaningful without contention
    let rows: Result<Vec<BenchRow>> = if cfg.timing {
        jobs.iter().map(run_one).collect()
    } else {
        jobs.par_iter().map(run_one).collect()
    };
    Ok(BenchReport {
        nodes: inst.graph.n(),
        edges: inst.graph.edge_count(),
        boundary: inst.graph.boundary().len(),
        seed: cfg.seed,
        rows: rows?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRow {
    pub tol: f64,
    pub dirichlet_mean: f64,
    pub neumann_mean: f64,
    /// Draws where the Neumann run needed no more iterations than the Dirichlet one.
    pub neumann_not_slower: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationReport {
    pub draws: usize,
    pub rows: Vec<IterationRow>,
}

/// Mean iteration counts of both algorithms over `draws` boundary voltage draws on a
/// fixed instance, at each tolerance in `tols`.
pub fn run_iteration_table(cfg: &BenchConfig, inst: &BenchInstance, draws: usize, tols: &[f64]) -> Result<IterationReport> {
    let per_draw: Result<Vec<Vec<(usize, usize)>>> = (0..draws as u64)
        .into_par_iter()
        .map(|k| {
            let d = redraw_voltages(inst, cfg.seed, k)?;
            tols.iter()
                .map(|&tol| {
                    let admm = cfg.admm(tol);
                    let s1 = settle(solve_inverse_dirichlet(&d.graph, &d.f, &d.a, &admm))?;
                    let s2 = settle(solve_inverse_neumann(&d.graph, &d.neumann, &d.a, &admm))?;
                    Ok((s1.report.iterations, s2.report.iterations))
                })
                .collect()
        })
        .collect();
    let per_draw = per_draw?;
    let rows = tols
        .iter()
        .enumerate()
        .map(|(t, &tol)| {
            let (mut s1, mut s2, mut ok) = (0usize, 0usize, 0usize);
            for d in &per_draw {
                s1 += d[t].0;
                s2 += d[t].1;
                ok += usize::from(d[t].1 <= d[t].0);
            }
            IterationRow {
                tol,
                dirichlet_mean: s1 as f64 / draws.max(1) as f64,
                neumann_mean: s2 as f64 / draws.max(1) as f64,
                neumann_not_slower: ok,
            }
        })
        .collect();
    Ok(IterationReport { draws, rows })
}

impl BenchReport {
    pub fn to_tsv(&self) -> String {
        let mut s = format!(
            "# nodes={} edges={} boundary={} seed={}\nalgorithm\ttol\trelative_error\titerations\tgap\tconverged",
            self.nodes, self.edges, self.boundary, self.seed
        );
        let timed = self.rows.iter().any(|r| r.seconds.is_some());
        if timed {
            s.push_str("\tseconds");
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{}\t{:e}\t{:e}\t{}\t{:e}\t{}",
                r.algorithm, r.tol, r.relative_error, r.iterations, r.gap, r.converged
            ));
            if let Some(t) = r.seconds {
                s.push_str(&format!("\t{t:e}"));
            }
            s.push('\n');
        }
        s
    }
}

impl IterationReport {
    pub fn to_tsv(&self) -> String {
        let mut s = format!("# draws={}\ntol\tdirichlet_mean\tneumann_mean\tneumann_not_slower\n", self.draws);
        for r in &self.rows {
            s.push_str(&format!(
                "{:e}\t{}\t{}\t{}\n",
                r.tol, r.dirichlet_mean, r.neumann_mean, r.neumann_not_slower
            ));
        }
        s
    }
}
