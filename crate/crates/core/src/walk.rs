//! Random walks equivalent to resistor networks.
//!
//! A walker entering at `Γ_a` and stepping `i → j` with probability `σ_ij / σ_i` until it
//! is absorbed at `Γ_b` makes, on average, a net number of passes over each edge equal
//! to the current of the network under unit injected current. Designing `P` for a
//! prescribed net passage count `W` is therefore a Neumann inverse problem with
//! `a = |W|`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{Conductivity, NeumannData};
use crate::graph::{Current, EdgeFunction, EdgeKind, Graph, MeasurementMatrix};
use crate::inverse::{rescale_to_unit_flux, solve_inverse_neumann, AdmmConfig, InverseError, SolveReport};
use crate::rng::indexed;
use crate::scalar::Scalar;

/// Walks longer than this are treated as stuck.
pub const STEP_CAP: u64 = 10_000_000;

/// Row-stochastic transitions supported on the edges, with an absorbing set.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix<T> {
    /// `(j, P_ij)` per vertex `i`, in neighbor order.
    rows: Vec<Vec<(usize, T)>>,
    absorbing: Vec<bool>,
}

impl<T: Scalar> TransitionMatrix<T> {
    /// Checks `0 ≤ P_ij ≤ 1`, support on edges, and unit row sums (to `1e-12`) for every
    /// non-absorbing vertex.
    pub fn new(g: &Graph, rows: Vec<Vec<(usize, T)>>, absorbing: Vec<bool>) -> Result<Self> {
        g.check_len(rows.len())?;
        g.check_len(absorbing.len())?;
        for (i, row) in rows.iter().enumerate() {
            let mut sum = T::zero();
            for &(j, p) in row {
                if g.edge_index(i, j).is_none() {
                    return Err(Error::NotAnEdge(format!("{{{}, {}}}", i + 1, j + 1)));
                }
                if !(p >= T::zero() && p <= T::one()) {
                    return Err(Error::Data(format!("P[{}][{}] = {p} is not a probability", i + 1, j + 1)));
                }
                sum += p;
            }
            if !absorbing[i] && (sum - T::one()).abs() > T::rel_floor(1e-12) {
                return Err(Error::Data(format!("row {} sums to {sum}", i + 1)));
            }
        }
        Ok(TransitionMatrix { rows, absorbing })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.rows[i].iter().find(|&&(k, _)| k == j).map_or(T::zero(), |&(_, p)| p)
    }

    pub fn is_absorbing(&self, i: usize) -> bool {
        self.absorbing[i]
    }

    /// Same transitions with `exit` (0-based) absorbing instead.
    pub fn with_absorbing(mut self, exit: &[usize]) -> Result<Self> {
        let mut mask = vec![false; self.n()];
        for &v in exit {
            if v >= self.n() {
                return Err(Error::VertexOutOfRange { vertex: v + 1, n: self.n() });
            }
            mask[v] = true;
        }
        self.absorbing = mask;
        Ok(self)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.n();
        let mut m = vec![vec![T::zero(); n]; n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                m[i][j] = p;
            }
        }
        m
    }
}

/// `P_ij = σ_ij / σ_i` with `σ_i = Σ_j σ_ij`; nothing is absorbing yet.
pub fn transitions_from_conductivity<T: Scalar>(g: &Graph, sigma: &Conductivity<T>) -> Result<TransitionMatrix<T>> {
    let (rows, isolated) = transition_rows(g, sigma)?;
    if let Some(&i) = isolated.first() {
        return Err(Error::IsolatedVertex(i + 1));
    }
    Ok(TransitionMatrix { rows, absorbing: vec![false; g.n()] })
}

/// Rows of `P`, leaving vertices of zero total conductivity empty and listing them.
fn transition_rows<T: Scalar>(g: &Graph, sigma: &Conductivity<T>) -> Result<(Vec<Vec<(usize, T)>>, Vec<usize>)> {
    g.check_edge_len(sigma.values().len())?;
    if let Some(&e) = sigma.perfect_edges().first() {
        let (i, j) = g.edges()[e];
        return Err(Error::PerfectConductor(i + 1, j + 1));
    }
    let mut rows = Vec::with_capacity(g.n());
    let mut isolated = Vec::new();
    for i in 0..g.n() {
        let total: T = g.neighbors(i).iter().map(|&(_, e)| sigma.values()[e]).sum();
        if !(total > T::zero()) {
            isolated.push(i);
            rows.push(Vec::new());
            continue;
        }
        rows.push(g.neighbors(i).iter().map(|&(j, e)| (j, sigma.values()[e] / total)).collect());
    }
    Ok((rows, isolated))
}

/// Expected signed passes `i → j` per walker, antisymmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct NetPassage<T>(EdgeFunction<T>);

impl<T: Scalar> NetPassage<T> {
    /// From the per-edge value `W_ij`, `i < j`.
    pub fn new(g: &Graph, values: Vec<T>) -> Result<Self> {
        Ok(NetPassage(EdgeFunction::antisymmetric(g, values)?))
    }

    pub fn from_edge_function(f: EdgeFunction<T>) -> Result<Self> {
        if f.kind() != EdgeKind::Antisymmetric {
            return Err(Error::WrongKind("antisymmetric"));
        }
        Ok(NetPassage(f))
    }

    pub fn values(&self) -> &[T] {
        self.0.fwd()
    }

    pub fn as_edge_function(&self) -> &EdgeFunction<T> {
        &self.0
    }
}

/// Entry vertices with their probabilities and exit vertices with the fraction of
/// walkers leaving through each. Both lists sum to one and are disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Terminals<T> {
    pub entry: Vec<(usize, T)>,
    pub exit: Vec<(usize, T)>,
}

impl<T: Scalar> Terminals<T> {
    pub fn check(&self, g: &Graph) -> Result<()> {
        let tol = T::rel_floor(1e-12);
        for (name, side) in [("entry", &self.entry), ("exit", &self.exit)] {
            if side.is_empty() {
                return Err(Error::Config(format!("{name} set is empty")));
            }
            for &(v, p) in side {
                if v >= g.n() {
                    return Err(Error::VertexOutOfRange { vertex: v + 1, n: g.n() });
                }
                if !(p >= T::zero()) || !p.is_finite() {
                    return Err(Error::Config(format!("{name} weight {p} at vertex {} is invalid", v + 1)));
                }
            }
            let s: T = side.iter().map(|&(_, p)| p).sum();
            if (s - T::one()).abs() > tol {
                return Err(Error::Config(format!("{name} weights sum to {s}, not 1")));
            }
        }
        if self.entry.iter().any(|&(v, _)| self.exit.iter().any(|&(w, _)| w == v)) {
            return Err(Error::Config("entry and exit sets overlap".into()));
        }
        Ok(())
    }

    /// Graph boundary `Γ_a ∪ Γ_b` and the injected current `g` (entry positive, exit
    /// negative) in that order.
    pub fn neumann(&self, g: &Graph) -> Result<(Graph, NeumannData<T>)> {
        self.check(g)?;
        let boundary = self.entry.iter().chain(&self.exit).map(|&(v, _)| v).collect();
        let data = self.entry.iter().map(|&(_, p)| p).chain(self.exit.iter().map(|&(_, p)| -p)).collect();
        Ok((g.with_boundary(boundary)?, NeumannData::new(data)?))
    }

    pub fn exit_vertices(&self) -> Vec<usize> {
        self.exit.iter().map(|&(v, _)| v).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkDesign<T> {
    /// Transitions with the exit set absorbing.
    pub p: TransitionMatrix<T>,
    pub sigma: Conductivity<T>,
    /// Scale of the data relative to unit injected current (`1` for exact data).
    pub lambda: T,
    /// `‖W_P − W/λ‖ / ‖W/λ‖` for the exact expected net passages `W_P` of the walk.
    pub residual: T,
    pub report: SolveReport<T>,
}

/// Conductivity and transitions whose walk has expected net passages `W`.
///
/// In relative mode the data may be `cW` for an unknown `c > 0`; the recovered scale is
/// returned as `lambda` and the design targets `W / λ`. Without it `W` is taken as is and
/// the solution is rescaled to unit injected current.
pub fn design_transitions<T: Scalar>(
    g: &Graph,
    w: &NetPassage<T>,
    terminals: &Terminals<T>,
    cfg: &AdmmConfig<T>,
    relative: bool,
) -> Result<WalkDesign<T>, InverseError<T>> {
    g.check_edge_len(w.values().len())?;
    let (gb, data) = terminals.neumann(g)?;
    let a = MeasurementMatrix::new(&gb, w.values().iter().map(|x| x.abs()).collect())?;
    let cfg = AdmmConfig { relabel: true, ..cfg.clone() };
    let sol = solve_inverse_neumann(&gb, &data, &a, &cfg)?;
    let lambda = sol.report.lambda.unwrap_or(T::zero());
    if !(lambda > T::zero()) {
        return Err(Error::DegenerateScale(lambda.as_f64()).into());
    }
    let sol = rescale_to_unit_flux(&sol)?;
    if !sol.sigma.is_finite() {
        let (i, j) = g.edges()[sol.sigma.perfect_edges()[0]];
        return Err(Error::Infeasible(format!(
            "edge {{{}, {}}} needs a perfect conductor, so no transition matrix realizes W",
            i + 1,
            j + 1
        ))
        .into());
    }
    // A vertex whose edges all carry σ = 0 is never entered, so it may as well absorb.
    let (rows, isolated) = transition_rows(&gb, &sol.sigma)?;
    let mut absorbing = terminals.exit_vertices();
    absorbing.extend(isolated);
    let p = TransitionMatrix { rows, absorbing: Vec::new() }.with_absorbing(&absorbing)?;

    // The exact expected passages of the walk must match the target.
    let j = expected_net_passages(g, &p, &terminals.entry)?;
    let target: Vec<T> = w.values().iter().map(|&x| if relative { x / lambda } else { x }).collect();
    let residual = Current::new(g, target.clone())
        .and_then(|t| Ok(Current::new(g, j.values().to_vec())?.relative_error(&t)))
        .map_err(InverseError::Core)?;
    let bound = T::lit(1e-6).max(T::lit(100.0) * cfg.tol);
    if !(residual <= bound) {
        return Err(Error::Infeasible(format!(
            "designed walk misses W by relative residual {:e} (bound {:e})",
            residual.as_f64(),
            bound.as_f64()
        ))
        .into());
    }
    Ok(WalkDesign { p, sigma: sol.sigma, lambda, residual, report: sol.report })
}

/// Exact expected net passages of the absorbing walk, from the expected visit counts
/// `v = s + P_Tᵀ v` over transient vertices. Dense elimination; meant for checking.
pub fn expected_net_passages<T: Scalar>(g: &Graph, p: &TransitionMatrix<T>, entry: &[(usize, T)]) -> Result<NetPassage<T>> {
    g.check_len(p.n())?;
    let n = g.n();
    let transient: Vec<usize> = (0..n).filter(|&i| !p.is_absorbing(i)).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &v) in transient.iter().enumerate() {
        pos[v] = k;
    }
    let m = transient.len();
    // (I − P_Tᵀ) v = s
    let mut a = vec![T::zero(); m * (m + 1)];
    let w = m + 1;
    for (k, &i) in transient.iter().enumerate() {
        a[k * w + k] += T::one();
        for &(j, pij) in p.row(i) {
            if pos[j] != usize::MAX {
                a[pos[j] * w + k] -= pij;
            }
        }
    }
    for &(v, s) in entry {
        if v >= n {
            return Err(Error::VertexOutOfRange { vertex: v + 1, n });
        }
        if pos[v] != usize::MAX {
            a[pos[v] * w + m] += s;
        }
    }
    for c in 0..m {
        let piv = (c..m)
            .max_by(|&x, &y| a[x * w + c].abs().partial_cmp(&a[y * w + c].abs()).unwrap())
            .unwrap_or(c);
        if !(a[piv * w + c].abs() > T::epsilon()) {
            return Err(Error::Singular("absorption is not certain from every transient vertex".into()));
        }
        if piv != c {
            for k in 0..w {
                a.swap(c * w + k, piv * w + k);
            }
        }
        for r in 0..m {
            if r != c {
                let f = a[r * w + c] / a[c * w + c];
                if f != T::zero() {
                    for k in c..w {
                        let x = a[c * w + k];
                        a[r * w + k] -= f * x;
                    }
                }
            }
        }
    }
    let mut visits = vec![T::zero(); n];
    for (k, &i) in transient.iter().enumerate() {
        visits[i] = a[k * w + m] / a[k * w + k];
    }
    let vals = g.edges().iter().map(|&(i, j)| visits[i] * p.get(i, j) - visits[j] * p.get(j, i)).collect();
    NetPassage::new(g, vals)
}

/// Monte-Carlo estimate of net passages with per-edge standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct PassageEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub walkers: u64,
    pub seed: u64,
    /// Mean number of steps per walk.
    pub mean_steps: f64,
}

impl PassageEstimate {
    /// Fraction of edges whose estimate lies within `k` standard errors of `w`. An edge
    /// never crossed counts as agreeing only when `w` is (numerically) zero there.
    pub fn fraction_within<T: Scalar>(&self, w: &NetPassage<T>, k: f64) -> f64 {
        let vals = w.values();
        if vals.is_empty() {
            return 1.0;
        }
        let ok = self
            .mean
            .iter()
            .zip(&self.std_error)
            .zip(vals)
            .filter(|((&m, &s), &x)| {
                let d = (m - x.as_f64()).abs();
                if s > 0.0 {
                    d <= k * s
                } else {
                    d <= 1e-9
                }
            })
            .count();
        ok as f64 / vals.len() as f64
    }
}

/// Runs `walkers` independent walks, walker `k` drawing from its own stream of `seed`.
/// Only the absorbing set ends a walk; returning to an entry vertex does not.
pub fn simulate_net_passages<T: Scalar>(
    g: &Graph,
    p: &TransitionMatrix<T>,
    entry: &[(usize, T)],
    walkers: u64,
    seed: u64,
) -> Result<PassageEstimate> {
    g.check_len(p.n())?;
    if entry.is_empty() {
        return Err(Error::Config("entry set is empty".into()));
    }
    let n = g.n();
    let mut cum_entry = Vec::with_capacity(entry.len());
    let mut acc = 0.0;
    for &(v, q) in entry {
        if v >= n {
            return Err(Error::VertexOutOfRange { vertex: v + 1, n });
        }
        acc += q.as_f64();
        cum_entry.push((acc, v));
    }
    if !(acc > 0.0) {
        return Err(Error::Config("entry probabilities sum to zero".into()));
    }
    check_reachability(p, entry)?;
    // cumulative rows with edge indices and orientation
    let rows: Vec<Vec<(f64, usize, usize, bool)>> = (0..n)
        .map(|i| {
            let mut c = 0.0;
            p.row(i)
                .iter()
                .filter(|&&(_, q)| q > T::zero())
                .map(|&(j, q)| {
                    c += q.as_f64();
                    let e = g.edge_index(i, j).expect("transitions follow edges");
                    (c, j, e, i < j)
                })
                .collect()
        })
        .collect();

    let m = g.edge_count();
    struct Acc {
        sum: Vec<i64>,
        sq: Vec<i64>,
        steps: u64,
        local: Vec<i64>,
        touched: Vec<usize>,
    }
    let new_acc = || Acc { sum: vec![0; m], sq: vec![0; m], steps: 0, local: vec![0; m], touched: Vec::new() };
    let chunk = 1024u64;
    let chunks = walkers.div_ceil(chunk);
    let parts: Vec<Result<Acc>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut a = new_acc();
            for k in c * chunk..((c + 1) * chunk).min(walkers) {
                let mut rng = indexed(seed, k);
                let r: f64 = rng.random::<f64>() * acc;
                let mut at = cum_entry.iter().find(|&&(x, _)| r < x).unwrap_or(cum_entry.last().unwrap()).1;
                let mut steps = 0u64;
                while !p.is_absorbing(at) {
                    if steps == STEP_CAP {
                        return Err(Error::Infeasible(format!("walker {k} exceeded {STEP_CAP} steps")));
                    }
                    let row = &rows[at];
                    let total = row.last().map_or(0.0, |x| x.0);
                    let r = rng.random::<f64>() * total;
                    let &(_, next, e, forward) = row.iter().find(|x| r < x.0).unwrap_or(row.last().unwrap());
                    if a.local[e] == 0 {
                        a.touched.push(e);
                    }
                    a.local[e] += if forward { 1 } else { -1 };
                    at = next;
                    steps += 1;
                }
                a.steps += steps;
                for &e in &a.touched {
                    let x = a.local[e];
                    a.sum[e] += x;
                    a.sq[e] += x * x;
                    a.local[e] = 0;
                }
                a.touched.clear();
            }
            Ok(a)
        })
        .collect();
    let mut total = new_acc();
    for part in parts {
        let part = part?;
        for e in 0..m {
            total.sum[e] += part.sum[e];
            total.sq[e] += part.sq[e];
        }
        total.steps += part.steps;
    }
    let nw = walkers as f64;
    let mean: Vec<f64> = total.sum.iter().map(|&s| s as f64 / nw).collect();
    let std_error = total
        .sum
        .iter()
        .zip(&total.sq)
        .map(|(&s, &q)| {
            if walkers < 2 {
                return 0.0;
            }
            let mu = s as f64 / nw;
            let var = ((q as f64 - nw * mu * mu) / (nw - 1.0)).max(0.0);
            (var / nw).sqrt()
        })
        .collect();
    Ok(PassageEstimate { mean, std_error, walkers, seed, mean_steps: total.steps as f64 / nw.max(1.0) })
}

/// Every vertex a walker can reach from the entries must be able to reach an absorbing
/// vertex, otherwise some walks never end.
fn check_reachability<T: Scalar>(p: &TransitionMatrix<T>, entry: &[(usize, T)]) -> Result<()> {
    let n = p.n();
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, q) in p.row(i) {
            if q > T::zero() {
                reverse[j].push(i);
            }
        }
    }
    let mut exits = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&v| p.is_absorbing(v)).collect();
    for &v in &stack {
        exits[v] = true;
    }
    while let Some(v) = stack.pop() {
        for &u in &reverse[v] {
            if !exits[u] && !p.is_absorbing(u) {
                exits[u] = true;
                stack.push(u);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = entry.iter().filter(|&&(_, q)| q > T::zero()).map(|&(v, _)| v).collect();
    for &v in &stack {
        seen[v] = true;
    }
    while let Some(v) = stack.pop() {
        if !exits[v] {
            return Err(Error::Infeasible(format!("no exit is reachable from vertex {}", v + 1)));
        }
        if p.is_absorbing(v) {
            continue;
        }
        for &(j, q) in p.row(v) {
            if q > T::zero() && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        Graph::new(3, [(0, 1), (1, 2)], vec![0, 2]).unwrap()
    }

    fn triangle() -> Graph {
        Graph::new(3, [(0, 1), (1, 2), (0, 2)], vec![0, 2]).unwrap()
    }

    fn ends() -> Terminals<f64> {
        Terminals { entry: vec![(0, 1.0)], exit: vec![(2, 1.0)] }
    }

    #[test]
    fn transition_examples() {
        let g = path3();
        let p = transitions_from_conductivity(&g, &Conductivity::uniform(&g, 1.0)).unwrap();
        assert_eq!(p.get(1, 0), 0.5);
        assert_eq!(p.get(1, 2), 0.5);
        assert_eq!(p.get(0, 1), 1.0);
        let t = triangle();
        let p = transitions_from_conductivity(&t, &Conductivity::uniform(&t, 1.0)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(p.get(i, j), if i == j { 0.0 } else { 0.5 });
            }
        }
    }

    #[test]
    fn transitions_are_scale_invariant_exactly() {
        let t = triangle();
        let s = Conductivity::finite(&t, vec![0.3, 1.7, 0.9]).unwrap();
        // powers of two keep the quotients bit-identical
        for c in [0.25, 2.0, 1024.0] {
            assert_eq!(transitions_from_conductivity(&t, &s).unwrap(), transitions_from_conductivity(&t, &s.scaled(c)).unwrap());
        }
    }

    #[test]
    fn transition_errors() {
        let g = path3();
        let s = Conductivity::with_perfect(&g, vec![1.0, 1.0], vec![true, false]).unwrap();
        assert!(matches!(transitions_from_conductivity(&g, &s), Err(Error::PerfectConductor(1, 2))));
        let s = Conductivity::finite(&g, vec![1.0, 0.0]).unwrap();
        assert!(matches!(transitions_from_conductivity(&g, &s), Err(Error::IsolatedVertex(3))));
    }

    #[test]
    fn design_series_path() {
        let g = path3();
        let w = NetPassage::new(&g, vec![1.0, 1.0]).unwrap();
        let d = design_transitions(&g, &w, &ends(), &AdmmConfig::with_tol(1e-9), false).unwrap();
        assert!((d.sigma.get(0) / d.sigma.get(1) - 1.0).abs() < 1e-6);
        assert!((d.p.get(1, 0) - 0.5).abs() < 1e-6);
        assert!((d.p.get(1, 2) - 0.5).abs() < 1e-6);
        assert!(d.p.is_absorbing(2));
    }

    #[test]
    fn design_triangle_reproduces_w() {
        let g = triangle();
        let w = NetPassage::new(&g, vec![1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let d = design_transitions(&g, &w, &ends(), &AdmmConfig::with_tol(1e-9), false).unwrap();
        let exact = expected_net_passages(&g, &d.p, &[(0, 1.0)]).unwrap();
        for (x, y) in exact.values().iter().zip(w.values()) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn zero_w_is_degenerate() {
        let g = path3();
        let w = NetPassage::new(&g, vec![0.0, 0.0]).unwrap();
        let r = design_transitions(&g, &w, &ends(), &AdmmConfig::default(), false);
        assert!(matches!(r, Err(InverseError::Core(Error::DegenerateScale(_)))));
    }

    #[test]
    fn relative_mode_reports_scale() {
        let g = path3();
        let w = NetPassage::new(&g, vec![3.0, 3.0]).unwrap();
        let d = design_transitions(&g, &w, &ends(), &AdmmConfig::with_tol(1e-9), true).unwrap();
        assert!((d.lambda - 3.0).abs() < 1e-6);
        assert!(design_transitions(&g, &w, &ends(), &AdmmConfig::with_tol(1e-9), false).is_err());
    }

    #[test]
    fn monte_carlo_on_path() {
        let g = path3();
        let p = transitions_from_conductivity(&g, &Conductivity::uniform(&g, 1.0)).unwrap().with_absorbing(&[2]).unwrap();
        let est = simulate_net_passages(&g, &p, &[(0, 1.0)], 100_000, 7).unwrap();
        let w = NetPassage::new(&g, vec![1.0, 1.0]).unwrap();
        assert_eq!(est.fraction_within(&w, 3.0), 1.0);
        // the last edge is crossed forward exactly once by every walker
        assert_eq!(est.mean[1], 1.0);
        assert_eq!(est, simulate_net_passages(&g, &p, &[(0, 1.0)], 100_000, 7).unwrap());
    }

    #[test]
    fn deterministic_chain_is_exact_in_one_walk() {
        let g = path3();
        let rows = vec![vec![(1, 1.0)], vec![(2, 1.0)], vec![]];
        let p = TransitionMatrix::new(&g, rows, vec![false, false, true]).unwrap();
        let est = simulate_net_passages(&g, &p, &[(0, 1.0)], 1, 0).unwrap();
        assert_eq!(est.mean, vec![1.0, 1.0]);
        assert_eq!(est.mean_steps, 2.0);
    }

    #[test]
    fn adjacent_exit_absorbs_at_once() {
        let g = path3();
        let rows = vec![vec![(1, 1.0)], vec![(0, 0.0), (2, 1.0)], vec![(1, 1.0)]];
        let p = TransitionMatrix::new(&g, rows, vec![false, true, false]).unwrap();
        let est = simulate_net_passages(&g, &p, &[(0, 1.0)], 1000, 3).unwrap();
        assert_eq!(est.mean, vec![1.0, 0.0]);
    }

    #[test]
    fn unreachable_exit_is_rejected() {
        let g = path3();
        let rows = vec![vec![(1, 1.0)], vec![(0, 1.0), (2, 0.0)], vec![(1, 1.0)]];
        let p = TransitionMatrix::new(&g, rows, vec![false, false, true]).unwrap();
        assert!(matches!(simulate_net_passages(&g, &p, &[(0, 1.0)], 10, 0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn exact_passages_match_forward_current() {
        use crate::forward::{current_from_potential, solve_neumann_forward};
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3), (0, 3), (1, 3)], vec![0, 2]).unwrap();
        let s = Conductivity::finite(&g, vec![1.0, 2.0, 0.5, 1.5, 0.8]).unwrap();
        let data = NeumannData::new(vec![1.0_f64, -1.0]).unwrap();
        let v = solve_neumann_forward(&g, &s, &data).unwrap();
        let j = current_from_potential(&g, &s, &v).unwrap();
        let p = transitions_from_conductivity(&g, &s).unwrap().with_absorbing(&[2]).unwrap();
        let w = expected_net_passages(&g, &p, &[(0, 1.0)]).unwrap();
        for (x, y) in w.values().iter().zip(j.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
