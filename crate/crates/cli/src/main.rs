use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use lgcurrent::codec::{self, CodecError};
use lgcurrent::inverse::rescale_to_unit_flux;
use lgcurrent::io::{network_from_json, parse_network, BoundaryMode, FormatError, NetworkFile, Weights};
use lgcurrent::multi::{BoundaryData, Dataset, MeasurementSet};
use lgcurrent::walk::{NetPassage, Terminals};
use lgcurrent::{
    bench, consistency_check, current_from_potential, design_transitions, simulate_net_passages,
    solve_dirichlet_forward, solve_inverse_dirichlet, solve_inverse_neumann, solve_neumann_forward,
    transitions_from_conductivity, AdmmConfig, Conductivity, DirichletData, Error, Graph,
    InverseError, InverseSolution, MeasurementMatrix, NeumannData,
};

#[derive(Parser)]
#[command(name = "lgcurrent", version, about = "Currents and conductivities on resistor networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
    /// ADMM penalty (default 1; 0.2 for bench)
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, global = true, default_value_t = 100_000)]
    max_iter: usize,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Input file; may be repeated for multi-check
    #[arg(long, global = true)]
    input: Vec<PathBuf>,
    /// Write the result here instead of standard output
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Potential and current for given conductivities and boundary data
    Forward,
    /// Current from magnitudes and boundary voltages
    InvertDirichlet,
    /// Current from magnitudes and injected boundary currents (up to scale)
    InvertNeumann,
    /// Whether several measurements on one graph share a conductivity
    MultiCheck,
    /// Transition matrix whose walk has given expected net passages
    DesignWalk {
        /// Data are a positive multiple of the net passages
        #[arg(long)]
        relative: bool,
    },
    /// Monte-Carlo estimate of net passages for a conductivity
    SimulateWalk {
        #[arg(long, default_value_t = 100_000)]
        walkers: u64,
    },
    /// Random admissible flow file
    SampleFlow {
        #[arg(long)]
        n: usize,
    },
    /// Ciphertext of a flow file
    Encode,
    /// Flow from a ciphertext and a key file
    Decode {
        #[arg(long)]
        key: PathBuf,
    },
    /// Accuracy table on a random network, or mean iteration counts with --draws
    Bench {
        #[arg(long, default_value_t = 100)]
        nodes: usize,
        #[arg(long, default_value_t = 0.125)]
        density: f64,
        /// Exact edge count instead of density sampling
        #[arg(long)]
        edges: Option<usize>,
        #[arg(long, default_value_t = 5)]
        boundary: usize,
        /// Average iteration counts over this many voltage draws
        #[arg(long)]
        draws: Option<usize>,
        /// Tolerances for both algorithms, overriding the default ladders
        #[arg(long, value_delimiter = ',')]
        tols: Option<Vec<f64>>,
        /// Report wall-clock time per row
        #[arg(long)]
        timing: bool,
    },
    /// Size of the key space for n key vertices
    Keyspace {
        #[arg(long)]
        n: usize,
    },
}

enum Failure {
    Data(String),
    /// Output was produced but some solve hit the iteration cap.
    NotConverged(Output),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<CodecError> for Failure {
    fn from(e: CodecError) -> Self {
        Failure::Data(e.to_string())
    }
}

/// Ordered result fields. Text prints one `key values...` line per scalar or table row;
/// JSON holds the same values, so both carry identical numbers.
#[derive(Default)]
struct Output {
    fields: Vec<(String, Field)>,
    /// Preformatted text that replaces the generic rendering.
    raw_text: Option<String>,
}

enum Field {
    Scalar(Value),
    Table(Vec<Vec<Value>>),
}

impl Output {
    fn scalar(&mut self, k: &str, v: impl Into<Value>) {
        self.fields.push((k.into(), Field::Scalar(v.into())));
    }

    fn table(&mut self, k: &str, rows: Vec<Vec<Value>>) {
        self.fields.push((k.into(), Field::Table(rows)));
    }

    fn render(&self, format: Format) -> String {
        match format {
            Format::Text => {
                if let Some(t) = &self.raw_text {
                    return t.clone();
                }
                let mut s = String::new();
                for (k, f) in &self.fields {
                    match f {
                        Field::Scalar(v) => s += &format!("{k} {}\n", plain(v)),
                        Field::Table(rows) => {
                            for r in rows {
                                let cells: Vec<String> = r.iter().map(plain).collect();
                                s += &format!("{k} {}\n", cells.join(" "));
                            }
                        }
                    }
                }
                s
            }
            Format::Json => {
                let mut s = String::from("{\n");
                for (n, (k, f)) in self.fields.iter().enumerate() {
                    let v = match f {
                        Field::Scalar(v) => v.clone(),
                        Field::Table(rows) => Value::Array(rows.iter().map(|r| Value::Array(r.clone())).collect()),
                    };
                    let sep = if n + 1 < self.fields.len() { "," } else { "" };
                    s += &format!("  {}: {}{sep}\n", Value::String(k.clone()), v);
                }
                s + "}\n"
            }
        }
    }
}

fn plain(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn read(path: &PathBuf) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn single_input(cli: &Cli) -> Result<&PathBuf, Failure> {
    match cli.input.as_slice() {
        [p] => Ok(p),
        [] => Err(Failure::Data("--input is required".into())),
        _ => Err(Failure::Data("this command takes one --input".into())),
    }
}

fn load_network(path: &PathBuf) -> Result<NetworkFile, Failure> {
    let text = read(path)?;
    let json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    Ok(if json { network_from_json(&text)? } else { parse_network(&text)? })
}

fn admm(cli: &Cli) -> AdmmConfig<f64> {
    AdmmConfig { alpha: cli.alpha.unwrap_or(1.0), tol: cli.tol, max_iter: cli.max_iter, ..AdmmConfig::default() }
}

fn label(v: usize) -> Value {
    json!(v + 1)
}

fn vertex_rows(u: &[f64]) -> Vec<Vec<Value>> {
    u.iter().enumerate().map(|(i, &x)| vec![label(i), json!(x)]).collect()
}

fn edge_rows(g: &Graph, vals: &[f64]) -> Vec<Vec<Value>> {
    g.edges().iter().zip(vals).map(|(&(i, j), &x)| vec![label(i), label(j), json!(x)]).collect()
}

fn sigma_fields(out: &mut Output, g: &Graph, sigma: &Conductivity<f64>) {
    let finite: Vec<Vec<Value>> = g
        .edges()
        .iter()
        .enumerate()
        .filter(|&(e, _)| !sigma.is_perfect(e))
        .map(|(e, &(i, j))| vec![label(i), label(j), json!(sigma.values()[e])])
        .collect();
    out.table("sigma", finite);
    let perfect = sigma.perfect_edges().iter().map(|&e| vec![label(g.edges()[e].0), label(g.edges()[e].1)]).collect();
    out.table("perfect", perfect);
}

fn forward(cli: &Cli) -> Result<Output, Failure> {
    let net = load_network(single_input(cli)?)?;
    let g = &net.graph;
    let sigma = Conductivity::finite(g, net.require_values(Weights::Sigma)?.to_vec())?;
    let v = match net.mode {
        Some(BoundaryMode::Dirichlet) => solve_dirichlet_forward(g, &sigma, &DirichletData(net.boundary_values.clone()))?,
        Some(BoundaryMode::Neumann) => solve_neumann_forward(g, &sigma, &NeumannData::new(net.boundary_values.clone())?)?,
        None => return Err(Failure::Data("missing `mode` line".into())),
    };
    let j = current_from_potential(g, &sigma, &v)?;
    let mut out = Output::default();
    out.table("potential", vertex_rows(&v));
    out.table("current", edge_rows(g, j.values()));
    Ok(out)
}

fn solution_output(g: &Graph, sol: &InverseSolution<f64>) -> Output {
    let r = &sol.report;
    let mut out = Output::default();
    out.scalar("converged", r.converged);
    out.scalar("iterations", r.iterations);
    out.scalar("primal", r.primal);
    out.scalar("dual", r.dual);
    out.scalar("gap", r.gap);
    if let Some(l) = r.lambda {
        out.scalar("lambda", l);
    }
    out.table("potential", vertex_rows(&sol.u));
    out.table("current", edge_rows(g, sol.current.values()));
    sigma_fields(&mut out, g, &sol.sigma);
    out
}

fn settle(
    g: &Graph,
    r: Result<InverseSolution<f64>, InverseError<f64>>,
    post: impl Fn(&InverseSolution<f64>) -> Result<InverseSolution<f64>, Error>,
) -> Result<Output, Failure> {
    match r {
        Ok(s) => Ok(solution_output(g, &post(&s)?)),
        Err(InverseError::NotConverged(s)) => Err(Failure::NotConverged(solution_output(g, &post(&s)?))),
        Err(InverseError::Core(e)) => Err(e.into()),
    }
}

fn magnitudes(net: &NetworkFile) -> Result<MeasurementMatrix<f64>, Failure> {
    Ok(MeasurementMatrix::new(&net.graph, net.require_values(Weights::Magnitude)?.to_vec())?)
}

fn invert_dirichlet(cli: &Cli) -> Result<Output, Failure> {
    let net = load_network(single_input(cli)?)?;
    net.require_mode(BoundaryMode::Dirichlet)?;
    let a = magnitudes(&net)?;
    let f = DirichletData(net.boundary_values.clone());
    settle(&net.graph, solve_inverse_dirichlet(&net.graph, &f, &a, &admm(cli)), |s| Ok(s.clone()))
}

fn invert_neumann(cli: &Cli) -> Result<Output, Failure> {
    let net = load_network(single_input(cli)?)?;
    net.require_mode(BoundaryMode::Neumann)?;
    let a = magnitudes(&net)?;
    let h = NeumannData::new(net.boundary_values.clone())?;
    // reported current and conductivity carry the injected current itself
    settle(&net.graph, solve_inverse_neumann(&net.graph, &h, &a, &admm(cli)), rescale_to_unit_flux)
}

fn multi_check(cli: &Cli) -> Result<Output, Failure> {
    if cli.input.len() < 2 {
        return Err(Failure::Data("multi-check needs at least two --input files".into()));
    }
    let nets = cli.input.iter().map(load_network).collect::<Result<Vec<_>, _>>()?;
    let g = nets[0].graph.clone();
    let mut datasets = Vec::new();
    for (k, net) in nets.iter().enumerate() {
        if net.graph.n() != g.n() || net.graph.edges() != g.edges() {
            return Err(Failure::Data(format!("input {} lists a different graph than the first", k + 1)));
        }
        let data = match net.mode {
            Some(BoundaryMode::Dirichlet) => BoundaryData::Dirichlet(DirichletData(net.boundary_values.clone())),
            Some(BoundaryMode::Neumann) => BoundaryData::Neumann(NeumannData::new(net.boundary_values.clone())?),
            None => return Err(Failure::Data(format!("input {} has no `mode` line", k + 1))),
        };
        datasets.push(Dataset { boundary: net.graph.boundary().to_vec(), data, a: magnitudes(net)? });
    }
    let set = MeasurementSet::new(&g, datasets)?;
    let report = match consistency_check(&g, &set, &admm(cli)) {
        Ok(r) => r,
        Err(InverseError::NotConverged(s)) => {
            let mut out = Output::default();
            out.scalar("converged", false);
            out.scalar("iterations", s.report.iterations);
            return Err(Failure::NotConverged(out));
        }
        Err(InverseError::Core(e)) => return Err(e.into()),
    };
    let mut out = Output::default();
    out.scalar("consistent", report.consistent);
    out.scalar("phi", report.phi);
    out.scalar("tol_phi", report.tol_phi);
    let edge_list = |es: &[usize]| es.iter().map(|&e| vec![label(g.edges()[e].0), label(g.edges()[e].1)]).collect();
    out.table("disagreement", edge_list(&report.disagreements));
    out.table("undetermined", edge_list(&report.undetermined));
    if let Some(s) = &report.sigma {
        sigma_fields(&mut out, &g, s);
    }
    Ok(out)
}

/// Entry vertices carry positive `g`, exit vertices negative; each side is normalized.
fn terminals(net: &NetworkFile) -> Result<Terminals<f64>, Failure> {
    let side = |sign: f64| -> Vec<(usize, f64)> {
        let picked: Vec<(usize, f64)> = net
            .graph
            .boundary()
            .iter()
            .zip(&net.boundary_values)
            .filter(|&(_, &x)| x * sign > 0.0)
            .map(|(&v, &x)| (v, x.abs()))
            .collect();
        let s: f64 = picked.iter().map(|p| p.1).sum();
        picked.into_iter().map(|(v, x)| (v, x / s)).collect()
    };
    let t = Terminals { entry: side(1.0), exit: side(-1.0) };
    t.check(&net.graph)?;
    Ok(t)
}

fn transition_rows(p: &lgcurrent::TransitionMatrix<f64>) -> Vec<Vec<Value>> {
    let mut rows = Vec::new();
    for i in 0..p.n() {
        for &(j, x) in p.row(i) {
            rows.push(vec![label(i), label(j), json!(x)]);
        }
    }
    rows
}

fn design_walk(cli: &Cli, relative: bool) -> Result<Output, Failure> {
    let net = load_network(single_input(cli)?)?;
    net.require_mode(BoundaryMode::Neumann)?;
    let w = NetPassage::new(&net.graph, net.require_values(Weights::Passage)?.to_vec())?;
    let t = terminals(&net)?;
    let d = match design_transitions(&net.graph, &w, &t, &admm(cli), relative) {
        Ok(d) => d,
        Err(InverseError::NotConverged(s)) => {
            let mut out = Output::default();
            out.scalar("converged", false);
            out.scalar("iterations", s.report.iterations);
            return Err(Failure::NotConverged(out));
        }
        Err(InverseError::Core(e)) => return Err(e.into()),
    };
    let mut out = Output::default();
    out.scalar("lambda", d.lambda);
    out.scalar("residual", d.residual);
    out.scalar("iterations", d.report.iterations);
    sigma_fields(&mut out, &net.graph, &d.sigma);
    out.table("transition", transition_rows(&d.p));
    out.table("absorbing", t.exit_vertices().iter().map(|&v| vec![label(v)]).collect());
    Ok(out)
}

fn simulate_walk(cli: &Cli, walkers: u64) -> Result<Output, Failure> {
    let net = load_network(single_input(cli)?)?;
    net.require_mode(BoundaryMode::Neumann)?;
    let g = &net.graph;
    let sigma = Conductivity::finite(g, net.require_values(Weights::Sigma)?.to_vec())?;
    let t = terminals(&net)?;
    let p = transitions_from_conductivity(g, &sigma)?.with_absorbing(&t.exit_vertices())?;
    let seed = cli.seed.unwrap_or(0);
    let est = simulate_net_passages(g, &p, &t.entry, walkers, seed)?;
    let mut out = Output::default();
    out.scalar("walkers", est.walkers);
    out.scalar("seed", est.seed);
    out.scalar("mean_steps", est.mean_steps);
    let rows = g
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| vec![label(i), label(j), json!(est.mean[e]), json!(est.std_error[e])])
        .collect();
    out.table("passage", rows);
    Ok(out)
}

fn flow_output(flow: &codec::AdmissibleFlow) -> Output {
    let mut out = Output::default();
    out.scalar("dim", flow.dim());
    out.table("key", vec![flow.key().iter().map(|&v| label(v)).collect()]);
    out.table("arc", flow.arcs().iter().map(|&(i, j)| vec![label(i), label(j)]).collect());
    out.raw_text = Some(codec::flow_to_text(flow));
    out
}

fn encode(cli: &Cli) -> Result<Output, Failure> {
    let flow = codec::parse_flow(&read(single_input(cli)?)?)?;
    let c = codec::encode(&flow)?;
    let mut out = Output::default();
    out.scalar("dim", c.dim);
    out.table("mag", c.mag.iter().map(|&(i, j)| vec![label(i), label(j)]).collect());
    out.table("flux", c.flux.iter().enumerate().map(|(k, &f)| vec![json!(k + 1), json!(f)]).collect());
    out.raw_text = Some(c.to_text());
    Ok(out)
}

fn decode(cli: &Cli, key: &PathBuf) -> Result<Output, Failure> {
    let c = codec::Ciphertext::parse(&read(single_input(cli)?)?)?;
    let key = codec::parse_key(&read(key)?, c.dim)?;
    let flow = match codec::decode(&c, &key, &admm(cli)) {
        Err(CodecError::Solver(InverseError::NotConverged(s))) => {
            let mut out = Output::default();
            out.scalar("converged", false);
            out.scalar("iterations", s.report.iterations);
            return Err(Failure::NotConverged(out));
        }
        r => r?,
    };
    Ok(flow_output(&flow))
}

#[allow(clippy::too_many_arguments)]
fn run_bench(
    cli: &Cli,
    nodes: usize,
    density: f64,
    edges: Option<usize>,
    boundary: usize,
    draws: Option<usize>,
    tols: &Option<Vec<f64>>,
    timing: bool,
) -> Result<Output, Failure> {
    let defaults = bench::BenchConfig::default();
    let mut cfg = bench::BenchConfig {
        nodes,
        density,
        edges,
        boundary,
        seed: cli.seed.unwrap_or(defaults.seed),
        alpha: cli.alpha.unwrap_or(defaults.alpha),
        max_iter: cli.max_iter,
        timing,
        ..defaults
    };
    if let Some(t) = tols {
        cfg.dirichlet_tols = t.clone();
        cfg.neumann_tols = t.clone();
    }
    let inst = bench::generate_bench_instance(&cfg)?;
    let mut out = Output::default();
    out.scalar("nodes", cfg.nodes);
    out.scalar("edges", inst.graph.edge_count());
    out.scalar("boundary", cfg.boundary);
    out.scalar("seed", cfg.seed);
    if let Some(draws) = draws {
        let t = tols.clone().unwrap_or_else(|| cfg.dirichlet_tols.clone());
        let r = bench::run_iteration_table(&cfg, &inst, draws, &t)?;
        out.scalar("draws", r.draws);
        let rows = r
            .rows
            .iter()
            .map(|x| vec![json!(x.tol), json!(x.dirichlet_mean), json!(x.neumann_mean), json!(x.neumann_not_slower)])
            .collect();
        out.table("iterations", rows);
        out.raw_text = Some(r.to_tsv());
        return Ok(out);
    }
    let r = bench::run_bench_on(&cfg, &inst)?;
    let rows = r
        .rows
        .iter()
        .map(|x| {
            vec![
                json!(x.algorithm),
                json!(x.tol),
                json!(x.relative_error),
                json!(x.iterations),
                json!(x.gap),
                json!(x.converged),
                x.seconds.map_or(Value::Null, |s| json!(s)),
            ]
        })
        .collect();
    out.table("row", rows);
    out.raw_text = Some(r.to_tsv());
    if r.rows.iter().any(|x| !x.converged) {
        return Err(Failure::NotConverged(out));
    }
    Ok(out)
}

fn keyspace(n: usize) -> Result<Output, Failure> {
    let k = codec::keyspace_size(n)?;
    let mut out = Output::default();
    out.scalar("n", n);
    // exact value as a decimal string; it overflows every JSON number type
    out.scalar("exact", k.exact.to_string());
    out.scalar("ln_estimate", k.ln_estimate);
    out.scalar("relative_deviation", k.relative_deviation);
    Ok(out)
}

fn run(cli: &Cli) -> Result<Output, Failure> {
    match &cli.cmd {
        Command::Forward => forward(cli),
        Command::InvertDirichlet => invert_dirichlet(cli),
        Command::InvertNeumann => invert_neumann(cli),
        Command::MultiCheck => multi_check(cli),
        Command::DesignWalk { relative } => design_walk(cli, *relative),
        Command::SimulateWalk { walkers } => simulate_walk(cli, *walkers),
        Command::SampleFlow { n } => Ok(flow_output(&codec::sample_admissible(*n, cli.seed.unwrap_or(0))?)),
        Command::Encode => encode(cli),
        Command::Decode { key } => decode(cli, key),
        Command::Bench { nodes, density, edges, boundary, draws, tols, timing } => {
            run_bench(cli, *nodes, *density, *edges, *boundary, *draws, tols, *timing)
        }
        Command::Keyspace { n } => keyspace(*n),
    }
}

fn emit(cli: &Cli, out: &Output) -> Result<(), String> {
    let text = out.render(cli.format);
    match &cli.output {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (out, code) = match run(&cli) {
        Ok(out) => (out, 0),
        Err(Failure::NotConverged(out)) => {
            eprintln!("lgcurrent: iteration cap reached before convergence");
            (out, 3)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("lgcurrent: {msg}");
            return ExitCode::from(2);
        }
    };
    if let Err(msg) = emit(&cli, &out) {
        eprintln!("lgcurrent: {msg}");
        return ExitCode::from(2);
    }
    ExitCode::from(code)
}
