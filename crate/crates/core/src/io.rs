//! Line-oriented and JSON network files.
//!
//! ```text
//! # 3-node path
//! nodes 3
//! mode dirichlet
//! edge 1 2 1.0
//! edge 2 3 1.0
//! boundary 1 1.0
//! boundary 3 0.0
//! ```
//!
//! Vertices are 1-based in files. Edge values are conductivities unless a
//! `weights magnitude` (current magnitudes `|J|`) or `weights passage` (signed net
//! passages `W_ij` for `i < j`) line says otherwise.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bench::BenchInstance;
use crate::error::Error;
use crate::graph::Graph;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: Error },
    #[error(transparent)]
    Network(#[from] Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type FormatResult<T> = std::result::Result<T, FormatError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weights {
    #[default]
    Sigma,
    Magnitude,
    Passage,
}

impl Weights {
    fn name(self) -> &'static str {
        match self {
            Weights::Sigma => "sigma",
            Weights::Magnitude => "magnitude",
            Weights::Passage => "passage",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkFile {
    pub graph: Graph,
    /// One value per edge in graph order, when the file gives them.
    pub values: Option<Vec<f64>>,
    pub weights: Weights,
    pub mode: Option<BoundaryMode>,
    /// One value per boundary vertex in graph boundary order.
    pub boundary_values: Vec<f64>,
}

impl NetworkFile {
    /// The bench network with its conductivities and Dirichlet voltages.
    pub fn from_bench(inst: &BenchInstance) -> Self {
        NetworkFile {
            graph: inst.graph.clone(),
            values: Some(inst.sigma.values().to_vec()),
            weights: Weights::Sigma,
            mode: Some(BoundaryMode::Dirichlet),
            boundary_values: inst.f.0.clone(),
        }
    }

    fn check_values(&self) -> Result<(), Error> {
        if let Some(vals) = &self.values {
            self.graph.check_edge_len(vals.len())?;
            for (&x, &(i, j)) in vals.iter().zip(self.graph.edges()) {
                if !x.is_finite() || (x < 0.0 && self.weights != Weights::Passage) {
                    return Err(Error::InvalidEdgeValue(i + 1, j + 1));
                }
            }
        }
        if self.boundary_values.len() != self.graph.boundary().len() {
            return Err(Error::DimensionMismatch { expected: self.graph.boundary().len(), got: self.boundary_values.len() });
        }
        if self.boundary_values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data("boundary value is not finite".into()));
        }
        Ok(())
    }

    /// Edge values, or an error naming what the command needed.
    pub fn require_values(&self, want: Weights) -> Result<&[f64], Error> {
        match &self.values {
            Some(v) if self.weights == want => Ok(v),
            Some(_) => Err(Error::Data(format!("edge values are {}, expected {}", self.weights.name(), want.name()))),
            None => Err(Error::Data(format!("edges carry no {} values", want.name()))),
        }
    }

    pub fn require_mode(&self, want: BoundaryMode) -> Result<(), Error> {
        match self.mode {
            Some(m) if m == want => Ok(()),
            Some(m) => Err(Error::Data(format!("boundary mode is {m:?}, expected {want:?}"))),
            None => Err(Error::Data(format!("missing `mode {}` line", mode_name(want)))),
        }
    }
}

fn mode_name(m: BoundaryMode) -> &'static str {
    match m {
        BoundaryMode::Dirichlet => "dirichlet",
        BoundaryMode::Neumann => "neumann",
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Syntax { line, msg: msg.into() }
}

fn vertex(tok: Option<&&str>, line: usize, n: usize) -> FormatResult<usize> {
    let tok = tok.ok_or_else(|| syntax(line, "missing vertex"))?;
    let v: usize = tok.parse().map_err(|_| syntax(line, format!("bad vertex `{tok}`")))?;
    if v == 0 || v > n {
        return Err(FormatError::Invalid { line, source: Error::VertexOutOfRange { vertex: v, n } });
    }
    Ok(v - 1)
}

fn number(tok: Option<&&str>, line: usize) -> FormatResult<f64> {
    let tok = tok.ok_or_else(|| syntax(line, "missing value"))?;
    tok.parse().map_err(|_| syntax(line, format!("bad number `{tok}`")))
}

pub fn parse_network(text: &str) -> FormatResult<NetworkFile> {
    let mut n = None;
    let mut mode = None;
    let mut weights = None;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut values: Vec<Option<f64>> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut boundary = Vec::new();
    let mut bvals = Vec::new();
    let mut bseen = std::collections::HashSet::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        let need_n = || n.ok_or_else(|| syntax(line, "`nodes` must come first"));
        match toks[0] {
            "nodes" => {
                if n.is_some() {
                    return Err(syntax(line, "`nodes` given twice"));
                }
                let v: usize = toks
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| syntax(line, "bad node count"))?;
                if v == 0 {
                    return Err(FormatError::Invalid { line, source: Error::EmptyGraph });
                }
                n = Some(v);
            }
            "mode" => {
                mode = Some(match toks.get(1) {
                    Some(&"dirichlet") => BoundaryMode::Dirichlet,
                    Some(&"neumann") => BoundaryMode::Neumann,
                    _ => return Err(syntax(line, "mode must be dirichlet or neumann")),
                });
            }
            "weights" => {
                weights = Some(match toks.get(1) {
                    Some(&"sigma") => Weights::Sigma,
                    Some(&"magnitude") => Weights::Magnitude,
                    Some(&"passage") => Weights::Passage,
                    _ => return Err(syntax(line, "weights must be sigma, magnitude or passage")),
                });
            }
            "edge" => {
                let nn = need_n()?;
                let i = vertex(toks.get(1), line, nn)?;
                let j = vertex(toks.get(2), line, nn)?;
                if i == j {
                    return Err(FormatError::Invalid { line, source: Error::SelfLoop(i + 1) });
                }
                if i > j {
                    return Err(syntax(line, "edges are written with i < j"));
                }
                if !seen.insert((i, j)) {
                    return Err(FormatError::Invalid { line, source: Error::DuplicateEdge(i + 1, j + 1) });
                }
                let v = toks.get(3).map(|_| number(toks.get(3), line)).transpose()?;
                if toks.len() > 4 {
                    return Err(syntax(line, "trailing tokens"));
                }
                if values.first().is_some_and(|f: &Option<f64>| f.is_some() != v.is_some()) {
                    return Err(syntax(line, "either every edge has a value or none does"));
                }
                edges.push((i, j));
                values.push(v);
            }
            "boundary" => {
                let nn = need_n()?;
                let i = vertex(toks.get(1), line, nn)?;
                if !bseen.insert(i) {
                    return Err(FormatError::Invalid { line, source: Error::DuplicateBoundary(i + 1) });
                }
                boundary.push(i);
                bvals.push(number(toks.get(2), line)?);
            }
            other => return Err(syntax(line, format!("unknown directive `{other}`"))),
        }
    }
    let n = n.ok_or_else(|| syntax(0, "missing `nodes` line"))?;
    let graph = Graph::new(n, edges, boundary)?;
    let values = if values.first().is_some_and(|v| v.is_some()) {
        Some(values.into_iter().map(|v| v.unwrap_or(0.0)).collect())
    } else {
        None
    };
    let file = NetworkFile { graph, values, weights: weights.unwrap_or_default(), mode, boundary_values: bvals };
    file.check_values()?;
    Ok(file)
}

/// Canonical text: `nodes`, `mode`, `weights`, edges in graph order, boundary in order.
/// Numbers use the shortest representation that parses back to the same `f64`.
pub fn write_network(file: &NetworkFile) -> String {
    let g = &file.graph;
    let mut s = format!("nodes {}\n", g.n());
    if let Some(m) = file.mode {
        let _ = writeln!(s, "mode {}", mode_name(m));
    }
    if file.values.is_some() {
        let _ = writeln!(s, "weights {}", file.weights.name());
    }
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        match &file.values {
            Some(v) => {
                let _ = writeln!(s, "edge {} {} {:?}", i + 1, j + 1, v[e]);
            }
            None => {
                let _ = writeln!(s, "edge {} {}", i + 1, j + 1);
            }
        }
    }
    for (&v, &x) in g.boundary().iter().zip(&file.boundary_values) {
        let _ = writeln!(s, "boundary {} {:?}", v + 1, x);
    }
    s
}

#[derive(Serialize, Deserialize)]
struct JsonNetwork {
    nodes: usize,
    edges: Vec<Vec<f64>>,
    boundary: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mode: Option<BoundaryMode>,
    #[serde(default, skip_serializing_if = "is_sigma")]
    weights: Weights,
}

fn is_sigma(w: &Weights) -> bool {
    *w == Weights::Sigma
}

fn json_vertex(x: f64, n: usize) -> Result<usize, Error> {
    if x.fract() != 0.0 || x < 1.0 || x > n as f64 {
        return Err(Error::Data(format!("vertex {x} is not an integer in 1..={n}")));
    }
    Ok(x as usize - 1)
}

/// `{nodes, edges: [[i, j, σ]], boundary: [[i, value]], mode}` with 1-based vertices.
pub fn network_to_json(file: &NetworkFile) -> String {
    let g = &file.graph;
    let edges = g
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| {
            let mut row = vec![(i + 1) as f64, (j + 1) as f64];
            if let Some(v) = &file.values {
                row.push(v[e]);
            }
            row
        })
        .collect();
    let boundary = g.boundary().iter().zip(&file.boundary_values).map(|(&v, &x)| (v + 1, x)).collect();
    let j = JsonNetwork { nodes: g.n(), edges, boundary, mode: file.mode, weights: file.weights };
    serde_json::to_string_pretty(&j).expect("network serializes")
}

pub fn network_from_json(text: &str) -> FormatResult<NetworkFile> {
    let j: JsonNetwork = serde_json::from_str(text)?;
    let n = j.nodes;
    let mut edges = Vec::new();
    let mut values = Vec::new();
    for row in &j.edges {
        if !(2..=3).contains(&row.len()) {
            return Err(Error::Data("edges are [i, j] or [i, j, value]".into()).into());
        }
        let (i, k) = (json_vertex(row[0], n)?, json_vertex(row[1], n)?);
        if i > k {
            return Err(Error::Data(format!("edge [{}, {}] must have i < j", i + 1, k + 1)).into());
        }
        edges.push((i, k));
        values.push(row.get(2).copied());
    }
    if values.iter().any(|v| v.is_some() != values[0].is_some()) {
        return Err(Error::Data("either every edge has a value or none does".into()).into());
    }
    let boundary = j.boundary.iter().map(|&(v, _)| v.checked_sub(1).unwrap_or(usize::MAX)).collect();
    let graph = Graph::new(n, edges, boundary)?;
    let values = values.first().copied().flatten().map(|_| values.iter().map(|v| v.unwrap_or(0.0)).collect());
    let file = NetworkFile {
        graph,
        values,
        weights: j.weights,
        mode: j.mode,
        boundary_values: j.boundary.iter().map(|&(_, x)| x).collect(),
    };
    file.check_values()?;
    Ok(file)
}
