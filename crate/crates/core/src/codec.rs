//! Encoding of antisymmetric `{−1, 0, +1}` flows by their magnitudes and key fluxes.
//!
//! A flow on `2n + 1` vertices with even-weight rows, zero row sums off the key set
//! `I_n` and no directed cycle is the current of some conductivity, so it is determined
//! by `(|A|, f, I_n)` and can be recovered with the Neumann solver. The ciphertext lists
//! fluxes by position in the key, so it does not reveal `I_n`.

use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::Error;
use crate::forward::NeumannData;
use crate::graph::{Graph, MeasurementMatrix};
use crate::inverse::{rescale_to_unit_flux, solve_inverse_neumann, AdmmConfig, InverseError};
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CodecError {
    #[error("matrix is not square")]
    NotSquare,
    #[error("dimension {0} is not of the form 2n + 1")]
    EvenDimension(usize),
    #[error("key has {got} vertices, expected {expected}")]
    KeySize { expected: usize, got: usize },
    #[error("key vertex {0} is out of range or repeated")]
    KeyVertex(usize),
    #[error("entry ({0}, {1}) = {2} is not in {{-1, 0, 1}}")]
    EntryOutOfRange(usize, usize, i64),
    #[error("entries ({0}, {1}) and ({1}, {0}) are not antisymmetric")]
    NotAntisymmetric(usize, usize),
    #[error("row {row} has {count} nonzero entries, an odd number")]
    OddRow { row: usize, count: usize },
    #[error("row {row} is not in the key but sums to {sum}")]
    InteriorImbalance { row: usize, sum: i64 },
    #[error("flow has a directed cycle through vertex {0} and cannot be recovered")]
    Cycle(usize),
    #[error("component containing vertex {0} carries no key flux")]
    Circulation(usize),
    #[error("ciphertext is malformed: {0}")]
    Malformed(String),
    #[error("recovered entry ({0}, {1}) is {2}, too far from an integer")]
    Rounding(usize, usize, f64),
    #[error("decoded flow does not re-encode to the ciphertext")]
    Mismatch,
    #[error("sampling budget exhausted")]
    Budget,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Solver(#[from] InverseError<f64>),
}

impl From<Error> for CodecError {
    fn from(e: Error) -> Self {
        CodecError::Solver(InverseError::Core(e))
    }
}

pub type CodecResult<T> = std::result::Result<T, CodecError>;

/// A validated flow. Vertices are 0-based; `key` is sorted and `f[k]` is the row sum of
/// `key[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissibleFlow {
    a: Vec<Vec<i8>>,
    key: Vec<usize>,
    f: Vec<i64>,
}

impl AdmissibleFlow {
    pub fn matrix(&self) -> &[Vec<i8>] {
        &self.a
    }

    pub fn key(&self) -> &[usize] {
        &self.key
    }

    pub fn flux(&self) -> &[i64] {
        &self.f
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// `A_ij = +1` pairs.
    pub fn arcs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, row) in self.a.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if x == 1 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Some vertex on a directed cycle of `A_ij = +1` arcs, if any.
    pub fn find_cycle(&self) -> Option<usize> {
        let n = self.dim();
        let mut indeg = vec![0usize; n];
        for &(_, j) in &self.arcs() {
            indeg[j] += 1;
        }
        let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut done = 0;
        while let Some(v) = stack.pop() {
            done += 1;
            for (j, &x) in self.a[v].iter().enumerate() {
                if x == 1 {
                    indeg[j] -= 1;
                    if indeg[j] == 0 {
                        stack.push(j);
                    }
                }
            }
        }
        (done < n).then(|| (0..n).find(|&v| indeg[v] > 0).unwrap_or(0))
    }
}

fn check_key(dim: usize, key: &[usize]) -> CodecResult<Vec<usize>> {
    if dim.is_multiple_of(2) {
        return Err(CodecError::EvenDimension(dim));
    }
    let n = (dim - 1) / 2;
    if key.len() != n {
        return Err(CodecError::KeySize { expected: n, got: key.len() });
    }
    let mut sorted = key.to_vec();
    sorted.sort_unstable();
    for (k, &v) in sorted.iter().enumerate() {
        if v >= dim || (k > 0 && sorted[k - 1] == v) {
            return Err(CodecError::KeyVertex(v + 1));
        }
    }
    Ok(sorted)
}

/// Checks entries in `{−1, 0, 1}` with zero diagonal and antisymmetry, even-weight rows,
/// and zero row sums outside the key, then extracts the key fluxes.
pub fn validate_admissible(a: &[Vec<i64>], key: &[usize]) -> CodecResult<AdmissibleFlow> {
    let dim = a.len();
    if a.iter().any(|r| r.len() != dim) {
        return Err(CodecError::NotSquare);
    }
    let key = check_key(dim, key)?;
    for i in 0..dim {
        for j in 0..dim {
            if !(-1..=1).contains(&a[i][j]) {
                return Err(CodecError::EntryOutOfRange(i + 1, j + 1, a[i][j]));
            }
            if a[i][j] != -a[j][i] {
                return Err(CodecError::NotAntisymmetric(i + 1, j + 1));
            }
        }
    }
    let mut in_key = vec![false; dim];
    for &v in &key {
        in_key[v] = true;
    }
    for (i, row) in a.iter().enumerate() {
        let count = row.iter().filter(|&&x| x != 0).count();
        if count % 2 == 1 {
            return Err(CodecError::OddRow { row: i + 1, count });
        }
        let sum: i64 = row.iter().sum();
        if !in_key[i] && sum != 0 {
            return Err(CodecError::InteriorImbalance { row: i + 1, sum });
        }
    }
    let f: Vec<i64> = key.iter().map(|&v| a[v].iter().sum()).collect();
    // even weight forces even fluxes
    debug_assert!(f.iter().all(|x| x % 2 == 0));
    let a = a.iter().map(|r| r.iter().map(|&x| x as i8).collect()).collect();
    Ok(AdmissibleFlow { a, key, f })
}

/// Random acyclic admissible flow on `2n + 1` vertices.
///
/// Vertices get a random rank; flows are pairs of edge-disjoint paths from one key
/// vertex down to a lower-ranked one, so every row keeps an even weight, non-key rows
/// balance, and the union stays acyclic. Pairs that would reuse an occupied entry are
/// rejected. With a single key vertex no nonzero flow exists and the zero flow is
/// returned.
pub fn sample_admissible(n: usize, seed: u64) -> CodecResult<AdmissibleFlow> {
    if n == 0 {
        return Err(CodecError::KeySize { expected: 1, got: 0 });
    }
    let dim = 2 * n + 1;
    let mut rng = substream(seed, "codec-sample");
    let mut key: Vec<usize> = (0..dim).collect();
    key.shuffle(&mut rng);
    key.truncate(n);
    key.sort_unstable();
    let mut a = vec![vec![0i64; dim]; dim];
    if n == 1 {
        return validate_admissible(&a, &key);
    }
    let target = rng.random_range(1..=2 * n);
    // a rank order with adjacent key vertices admits no pair of disjoint paths, so
    // orders that yield nothing are redrawn
    for _ in 0..100 {
        let mut order: Vec<usize> = (0..dim).collect();
        order.shuffle(&mut rng);
        let mut rank = vec![0usize; dim];
        for (r, &v) in order.iter().enumerate() {
            rank[v] = r;
        }
        let mut placed = 0;
        for _ in 0..200 * target {
            if placed == target {
                break;
            }
            let s = key[rng.random_range(0..n)];
            let t = key[rng.random_range(0..n)];
            if rank[s] <= rank[t] {
                continue;
            }
            let between = &order[rank[t] + 1..rank[s]];
            let mut arcs = Vec::new();
            for _ in 0..2 {
                let mut p = vec![s];
                p.extend(between.iter().rev().copied().filter(|_| rng.random_bool(0.5)));
                p.push(t);
                arcs.extend(p.windows(2).map(|w| (w[0], w[1])));
            }
            let mut seen = std::collections::HashSet::new();
            if arcs.iter().any(|&(i, j)| a[i][j] != 0 || !seen.insert((i, j))) {
                continue;
            }
            for (i, j) in arcs {
                a[i][j] = 1;
                a[j][i] = -1;
            }
            placed += 1;
        }
        if placed > 0 {
            return validate_admissible(&a, &key);
        }
    }
    Err(CodecError::Budget)
}

/// Magnitudes and key fluxes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub dim: usize,
    /// Support of `|A|` as pairs `i < j`, sorted.
    pub mag: Vec<(usize, usize)>,
    /// Row sums of the key vertices in increasing vertex order.
    pub flux: Vec<i64>,
}

/// `(|A|, f)`. Flows with a directed cycle, or with a component carrying no key flux,
/// are rejected because no decoder can tell them from their reversals.
pub fn encode(flow: &AdmissibleFlow) -> CodecResult<Ciphertext> {
    if let Some(v) = flow.find_cycle() {
        return Err(CodecError::Cycle(v + 1));
    }
    let c = encode_unchecked(flow);
    for comp in support_components(c.dim, &c.mag) {
        if !comp.iter().any(|v| flow.key.binary_search(v).is_ok_and(|k| flow.f[k] != 0)) {
            return Err(CodecError::Circulation(comp[0] + 1));
        }
    }
    Ok(c)
}

fn encode_unchecked(flow: &AdmissibleFlow) -> Ciphertext {
    let dim = flow.dim();
    let mut mag = Vec::new();
    for i in 0..dim {
        for j in i + 1..dim {
            if flow.a[i][j] != 0 {
                mag.push((i, j));
            }
        }
    }
    Ciphertext { dim, mag, flux: flow.f.clone() }
}

/// Connected components of the support with at least one edge.
fn support_components(dim: usize, mag: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); dim];
    for &(i, j) in mag {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; dim];
    let mut out = Vec::new();
    for s in 0..dim {
        if seen[s] || adj[s].is_empty() {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut k = 0;
        while k < comp.len() {
            let v = comp[k];
            k += 1;
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

fn check_ciphertext(c: &Ciphertext, key: &[usize]) -> CodecResult<Vec<usize>> {
    let key = check_key(c.dim, key)?;
    if c.flux.len() != key.len() {
        return Err(CodecError::Malformed(format!("{} fluxes for a key of {}", c.flux.len(), key.len())));
    }
    let mut weight = vec![0usize; c.dim];
    let mut seen = std::collections::HashSet::new();
    for &(i, j) in &c.mag {
        if i >= j || j >= c.dim || !seen.insert((i, j)) {
            return Err(CodecError::Malformed(format!("bad magnitude entry ({}, {})", i + 1, j + 1)));
        }
        weight[i] += 1;
        weight[j] += 1;
    }
    if let Some(v) = weight.iter().position(|w| w % 2 == 1) {
        return Err(CodecError::OddRow { row: v + 1, count: weight[v] });
    }
    Ok(key)
}

/// Recovers `A` from `(|A|, f, I_n)` by solving the Neumann problem on each component
/// of the support with unit magnitudes and injected current `f / Σ|f|`, rescaling to
/// flux `f` and rounding.
pub fn decode(c: &Ciphertext, key: &[usize], cfg: &AdmmConfig<f64>) -> CodecResult<AdmissibleFlow> {
    let key = check_ciphertext(c, key)?;
    let dim = c.dim;
    let mut a = vec![vec![0i64; dim]; dim];
    for comp in support_components(dim, &c.mag) {
        let mut local = vec![usize::MAX; dim];
        for (k, &v) in comp.iter().enumerate() {
            local[v] = k;
        }
        let edges: Vec<(usize, usize)> = c
            .mag
            .iter()
            .filter(|&&(i, _)| local[i] != usize::MAX)
            .map(|&(i, j)| (local[i], local[j]))
            .collect();
        let (boundary, fl): (Vec<usize>, Vec<f64>) = key
            .iter()
            .zip(&c.flux)
            .filter(|&(&v, _)| local[v] != usize::MAX)
            .map(|(&v, &x)| (local[v], x as f64))
            .unzip();
        let total: f64 = fl.iter().map(|x| x.abs()).sum();
        if total == 0.0 {
            return Err(CodecError::Circulation(comp[0] + 1));
        }
        let g = Graph::new(comp.len(), edges, boundary)?;
        let data = NeumannData::new(fl.iter().map(|x| x / total).collect())?;
        let ones = MeasurementMatrix::new(&g, vec![1.0; g.edge_count()])?;
        let sol = rescale_to_unit_flux(&solve_inverse_neumann(&g, &data, &ones, cfg)?)?;
        for (e, &(i, j)) in g.edges().iter().enumerate() {
            let x = sol.current.values()[e] * total;
            let r = x.round();
            if (x - r).abs() > 0.25 || r.abs() > 1.0 {
                return Err(CodecError::Rounding(comp[i] + 1, comp[j] + 1, x));
            }
            a[comp[i]][comp[j]] = r as i64;
            a[comp[j]][comp[i]] = -(r as i64);
        }
    }
    let flow = validate_admissible(&a, &key)?;
    if encode_unchecked(&flow) != *c {
        return Err(CodecError::Mismatch);
    }
    Ok(flow)
}

/// Decodes independent ciphertexts in parallel, keeping input order.
pub fn decode_batch(items: &[(Ciphertext, Vec<usize>)], cfg: &AdmmConfig<f64>) -> Vec<CodecResult<AdmissibleFlow>> {
    items.par_iter().map(|(c, k)| decode(c, k, cfg)).collect()
}

/// `n! · C(2n+1, n)` and the estimate `2^{2n+1} n! / √(πn)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Keyspace {
    pub n: usize,
    pub exact: BigUint,
    /// Natural logarithm of the estimate (finite for every `n ≥ 1`).
    pub ln_estimate: f64,
    /// `estimate / exact − 1`.
    pub relative_deviation: f64,
}

impl Keyspace {
    /// The estimate itself; infinite once it leaves the `f64` range.
    pub fn estimate(&self) -> f64 {
        self.ln_estimate.exp()
    }
}

fn ln_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits < 1000 {
        return x.to_f64().unwrap_or(f64::INFINITY).ln();
    }
    let shift = bits - 64;
    (x >> shift).to_f64().unwrap_or(f64::INFINITY).ln() + shift as f64 * std::f64::consts::LN_2
}

pub fn keyspace_size(n: usize) -> CodecResult<Keyspace> {
    if n == 0 {
        return Err(CodecError::KeySize { expected: 1, got: 0 });
    }
    let mut fact = BigUint::one();
    for k in 2..=n {
        fact *= k;
    }
    // C(2n+1, n) by the multiplicative formula, exact at every step
    let mut binom = BigUint::one();
    for k in 1..=n {
        binom = binom * (n + 1 + k) / k;
    }
    let exact = &fact * &binom;
    let ln_fact: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
    let ln_estimate = (2 * n + 1) as f64 * std::f64::consts::LN_2 + ln_fact - 0.5 * (std::f64::consts::PI * n as f64).ln();
    let relative_deviation = (ln_estimate - ln_big(&exact)).exp_m1();
    Ok(Keyspace { n, exact, ln_estimate, relative_deviation })
}

fn parse_usize(tok: Option<&str>, line: usize, what: &str) -> CodecResult<usize> {
    tok.ok_or_else(|| CodecError::Parse { line, msg: format!("missing {what}") })?
        .parse()
        .map_err(|_| CodecError::Parse { line, msg: format!("bad {what}") })
}

fn parse_label(tok: Option<&str>, line: usize, dim: usize) -> CodecResult<usize> {
    let v = parse_usize(tok, line, "vertex")?;
    if v == 0 || v > dim {
        return Err(CodecError::Parse { line, msg: format!("vertex {v} out of range 1..={dim}") });
    }
    Ok(v - 1)
}

fn lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(k, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then(|| (k + 1, l.split_whitespace().collect()))
    })
}

impl Ciphertext {
    /// `dim`, then one `mag i j` per unit entry and one `flux k f_k` per key position
    /// (1-based).
    pub fn to_text(&self) -> String {
        let mut s = format!("dim {}\n", self.dim);
        for &(i, j) in &self.mag {
            let _ = writeln!(s, "mag {} {}", i + 1, j + 1);
        }
        for (k, f) in self.flux.iter().enumerate() {
            let _ = writeln!(s, "flux {} {}", k + 1, f);
        }
        s
    }

    pub fn parse(text: &str) -> CodecResult<Self> {
        let mut dim = None;
        let mut mag = Vec::new();
        let mut flux: Vec<Option<i64>> = Vec::new();
        for (line, toks) in lines(text) {
            let need_dim = || dim.ok_or(CodecError::Parse { line, msg: "dim must come first".into() });
            match toks[0] {
                "dim" => {
                    let d = parse_usize(toks.get(1).copied(), line, "dimension")?;
                    if d % 2 == 0 {
                        return Err(CodecError::Parse { line, msg: format!("dimension {d} is even") });
                    }
                    dim = Some(d);
                    flux = vec![None; (d - 1) / 2];
                }
                "mag" => {
                    let d = need_dim()?;
                    let i = parse_label(toks.get(1).copied(), line, d)?;
                    let j = parse_label(toks.get(2).copied(), line, d)?;
                    if i >= j {
                        return Err(CodecError::Parse { line, msg: "mag entries need i < j".into() });
                    }
                    mag.push((i, j));
                }
                "flux" => {
                    let d = need_dim()?;
                    let k = parse_usize(toks.get(1).copied(), line, "key position")?;
                    if k == 0 || k > (d - 1) / 2 {
                        return Err(CodecError::Parse { line, msg: format!("key position {k} out of range") });
                    }
                    let f = toks
                        .get(2)
                        .and_then(|t| t.parse::<i64>().ok())
                        .ok_or(CodecError::Parse { line, msg: "bad flux value".into() })?;
                    if flux[k - 1].replace(f).is_some() {
                        return Err(CodecError::Parse { line, msg: format!("flux {k} given twice") });
                    }
                }
                other => return Err(CodecError::Parse { line, msg: format!("unknown directive `{other}`") }),
            }
        }
        let dim = dim.ok_or(CodecError::Parse { line: 0, msg: "missing dim".into() })?;
        mag.sort_unstable();
        let flux = flux.into_iter().map(|f| f.unwrap_or(0)).collect();
        Ok(Ciphertext { dim, mag, flux })
    }
}

/// `key i1 ... in`, 1-based.
pub fn key_to_text(key: &[usize]) -> String {
    let labels: Vec<String> = key.iter().map(|v| (v + 1).to_string()).collect();
    format!("key {}\n", labels.join(" "))
}

pub fn parse_key(text: &str, dim: usize) -> CodecResult<Vec<usize>> {
    let mut key = None;
    for (line, toks) in lines(text) {
        if toks[0] != "key" {
            continue;
        }
        let vs = toks[1..].iter().map(|t| parse_label(Some(t), line, dim)).collect::<CodecResult<Vec<_>>>()?;
        key = Some(vs);
    }
    key.ok_or(CodecError::Parse { line: 0, msg: "missing key line".into() })
}

/// Flow file: `dim N`, `key i1 ... in`, and one `arc i j` per entry `A_ij = +1`.
pub fn flow_to_text(flow: &AdmissibleFlow) -> String {
    let mut s = format!("dim {}\n{}", flow.dim(), key_to_text(&flow.key));
    for (i, j) in flow.arcs() {
        let _ = writeln!(s, "arc {} {}", i + 1, j + 1);
    }
    s
}

pub fn parse_flow(text: &str) -> CodecResult<AdmissibleFlow> {
    let mut dim = None;
    let mut key = None;
    let mut a: Vec<Vec<i64>> = Vec::new();
    for (line, toks) in lines(text) {
        match toks[0] {
            "dim" => {
                let d = parse_usize(toks.get(1).copied(), line, "dimension")?;
                dim = Some(d);
                a = vec![vec![0; d]; d];
            }
            "key" => {
                let d = dim.ok_or(CodecError::Parse { line, msg: "dim must come first".into() })?;
                key = Some(toks[1..].iter().map(|t| parse_label(Some(t), line, d)).collect::<CodecResult<Vec<_>>>()?);
            }
            "arc" => {
                let d = dim.ok_or(CodecError::Parse { line, msg: "dim must come first".into() })?;
                let i = parse_label(toks.get(1).copied(), line, d)?;
                let j = parse_label(toks.get(2).copied(), line, d)?;
                if i == j || a[i][j] != 0 {
                    return Err(CodecError::Parse { line, msg: format!("arc {} {} repeats an entry", i + 1, j + 1) });
                }
                a[i][j] = 1;
                a[j][i] = -1;
            }
            other => return Err(CodecError::Parse { line, msg: format!("unknown directive `{other}`") }),
        }
    }
    let key = key.ok_or(CodecError::Parse { line: 0, msg: "missing key line".into() })?;
    validate_admissible(&a, &key)
}
