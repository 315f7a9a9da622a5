//! Graphs with a designated boundary, vertex and edge function spaces, and the
//! unweighted gradient / divergence pair.
//!
//! Vertices are 0-based here; file formats and error messages use 1-based labels.
//! Edge functions are stored per undirected edge `{i, j}` (with `i < j`) as the pair
//! `(b_ij, b_ji)`, so entries off the edge set are structurally zero.

use std::collections::{HashMap, VecDeque};
use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Undirected simple connected graph with an ordered boundary vertex set.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<(usize, usize)>>,
    index: HashMap<(usize, usize), usize>,
    boundary: Vec<usize>,
    is_boundary: Vec<bool>,
}

impl Graph {
    /// Builds a graph from 0-based edge pairs. Pairs are normalized to `i < j`;
    /// self-loops, duplicates and disconnected graphs are rejected.
    pub fn new<I>(n: usize, edges: I, boundary: Vec<usize>) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut list = Vec::new();
        let mut index = HashMap::new();
        let mut adj = vec![Vec::new(); n];
        for (a, b) in edges {
            for v in [a, b] {
                if v >= n {
                    return Err(Error::VertexOutOfRange { vertex: v + 1, n });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a + 1));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            let e = list.len();
            if index.insert((i, j), e).is_some() {
                return Err(Error::DuplicateEdge(i + 1, j + 1));
            }
            list.push((i, j));
            adj[i].push((j, e));
            adj[j].push((i, e));
        }
        let mut g = Graph {
            n,
            edges: list,
            adj,
            index,
            boundary: Vec::new(),
            is_boundary: vec![false; n],
        };
        if !g.is_connected_by(|_| true) {
            return Err(Error::Disconnected);
        }
        g.set_boundary(boundary)?;
        Ok(g)
    }

    /// Same graph with a different boundary set.
    pub fn with_boundary(&self, boundary: Vec<usize>) -> Result<Self> {
        let mut g = self.clone();
        g.set_boundary(boundary)?;
        Ok(g)
    }

    fn set_boundary(&mut self, boundary: Vec<usize>) -> Result<()> {
        let mut mask = vec![false; self.n];
        for &v in &boundary {
            if v >= self.n {
                return Err(Error::VertexOutOfRange { vertex: v + 1, n: self.n });
            }
            if mask[v] {
                return Err(Error::DuplicateBoundary(v + 1));
            }
            mask[v] = true;
        }
        self.boundary = boundary;
        self.is_boundary = mask;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(i, j)` with `i < j`, in insertion order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `(neighbor, edge index)` pairs incident to `v`.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[v]
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.index.get(&key).copied()
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.is_boundary[v]
    }

    pub fn interior(&self) -> Vec<usize> {
        (0..self.n).filter(|&v| !self.is_boundary[v]).collect()
    }

    pub(crate) fn require_boundary(&self) -> Result<()> {
        if self.boundary.is_empty() {
            Err(Error::EmptyBoundary)
        } else {
            Ok(())
        }
    }

    /// Connected components of the subgraph that keeps only edges accepted by `keep`.
    pub fn components_by(&self, keep: impl Fn(usize) -> bool) -> Vec<Vec<usize>> {
        let mut label = vec![usize::MAX; self.n];
        let mut comps = Vec::new();
        for s in 0..self.n {
            if label[s] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut comp = vec![s];
            label[s] = id;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &(w, e) in &self.adj[v] {
                    if keep(e) && label[w] == usize::MAX {
                        label[w] = id;
                        comp.push(w);
                        queue.push_back(w);
                    }
                }
            }
            comps.push(comp);
        }
        comps
    }

    fn is_connected_by(&self, keep: impl Fn(usize) -> bool) -> bool {
        self.components_by(keep).len() == 1
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len == self.n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.n, got: len })
        }
    }

    pub(crate) fn check_edge_len(&self, len: usize) -> Result<()> {
        if len == self.edges.len() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.edges.len(), got: len })
        }
    }
}

/// Element of H(V): one real value per vertex.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VertexFunction<T>(Vec<T>);

impl<T: Scalar> VertexFunction<T> {
    pub fn zeros(n: usize) -> Self {
        VertexFunction(vec![T::zero(); n])
    }

    pub fn constant(n: usize, c: T) -> Self {
        VertexFunction(vec![c; n])
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> From<Vec<T>> for VertexFunction<T> {
    fn from(v: Vec<T>) -> Self {
        VertexFunction(v)
    }
}

impl<T> Deref for VertexFunction<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for VertexFunction<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    General,
    SymmetricNonnegative,
    Antisymmetric,
}

/// Element of H(E): an n×n matrix supported on the edge set.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFunction<T> {
    fwd: Vec<T>,
    bwd: Vec<T>,
    kind: EdgeKind,
}

impl<T: Scalar> EdgeFunction<T> {
    pub fn zeros(g: &Graph, kind: EdgeKind) -> Self {
        let m = g.edge_count();
        EdgeFunction { fwd: vec![T::zero(); m], bwd: vec![T::zero(); m], kind }
    }

    /// `b_ij = values[e]`, `b_ji = -values[e]` for each edge `e = (i, j)`, `i < j`.
    pub fn antisymmetric(g: &Graph, values: Vec<T>) -> Result<Self> {
        g.check_edge_len(values.len())?;
        let bwd = values.iter().map(|&x| -x).collect();
        Ok(EdgeFunction { fwd: values, bwd, kind: EdgeKind::Antisymmetric })
    }

    pub fn symmetric(g: &Graph, values: Vec<T>) -> Result<Self> {
        g.check_edge_len(values.len())?;
        for (e, &x) in values.iter().enumerate() {
            if !(x >= T::zero()) || !x.is_finite() {
                let (i, j) = g.edges()[e];
                return Err(Error::InvalidEdgeValue(i + 1, j + 1));
            }
        }
        Ok(EdgeFunction { bwd: values.clone(), fwd: values, kind: EdgeKind::SymmetricNonnegative })
    }

    /// Arbitrary values in both orientations; `kind` is checked against the data.
    pub fn from_parts(g: &Graph, fwd: Vec<T>, bwd: Vec<T>, kind: EdgeKind) -> Result<Self> {
        g.check_edge_len(fwd.len())?;
        g.check_edge_len(bwd.len())?;
        let f = EdgeFunction { fwd, bwd, kind };
        f.check_kind(g)?;
        Ok(f)
    }

    /// Reads a dense matrix, rejecting nonzero diagonal or off-edge entries.
    pub fn from_dense(g: &Graph, m: &[Vec<T>], kind: EdgeKind) -> Result<Self> {
        g.check_len(m.len())?;
        for (i, row) in m.iter().enumerate() {
            g.check_len(row.len())?;
            for (j, &x) in row.iter().enumerate() {
                if x != T::zero() && (i == j || g.edge_index(i, j).is_none()) {
                    return Err(Error::NotAnEdge(format!("({}, {})", i + 1, j + 1)));
                }
            }
        }
        let fwd = g.edges().iter().map(|&(i, j)| m[i][j]).collect();
        let bwd = g.edges().iter().map(|&(i, j)| m[j][i]).collect();
        Self::from_parts(g, fwd, bwd, kind)
    }

    fn check_kind(&self, g: &Graph) -> Result<()> {
        let tol = T::epsilon() * T::lit(4.0);
        for e in 0..self.fwd.len() {
            let (i, j) = g.edges()[e];
            let (x, y) = (self.fwd[e], self.bwd[e]);
            match self.kind {
                EdgeKind::General => {}
                EdgeKind::SymmetricNonnegative => {
                    if x != y {
                        return Err(Error::WrongKind("symmetric"));
                    }
                    if !(x >= T::zero()) || !x.is_finite() {
                        return Err(Error::InvalidEdgeValue(i + 1, j + 1));
                    }
                }
                EdgeKind::Antisymmetric => {
                    if (x + y).abs() > tol * x.abs().max(y.abs()) {
                        return Err(Error::WrongKind("antisymmetric"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> EdgeKind {
        self.kind
    }

    /// Values `b_ij` on edges `(i, j)` with `i < j`.
    pub fn fwd(&self) -> &[T] {
        &self.fwd
    }

    /// Values `b_ji` on edges `(i, j)` with `i < j`.
    pub fn bwd(&self) -> &[T] {
        &self.bwd
    }

    pub fn get(&self, g: &Graph, i: usize, j: usize) -> T {
        match g.edge_index(i, j) {
            Some(e) if i < j => self.fwd[e],
            Some(e) => self.bwd[e],
            None => T::zero(),
        }
    }

    pub fn to_dense(&self, g: &Graph) -> Vec<Vec<T>> {
        let mut m = vec![vec![T::zero(); g.n()]; g.n()];
        for (e, &(i, j)) in g.edges().iter().enumerate() {
            m[i][j] = self.fwd[e];
            m[j][i] = self.bwd[e];
        }
        m
    }

    /// Frobenius norm over the full n×n matrix.
    pub fn frobenius(&self) -> T {
        self.fwd.iter().chain(&self.bwd).map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.fwd.iter().chain(&self.bwd).fold(T::zero(), |m, &x| m.max(x.abs()))
    }
}

/// Symmetric nonnegative edge function `a = |J|`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix<T>(EdgeFunction<T>);

impl<T: Scalar> MeasurementMatrix<T> {
    pub fn new(g: &Graph, values: Vec<T>) -> Result<Self> {
        EdgeFunction::symmetric(g, values).map(MeasurementMatrix)
    }

    /// Non-symmetric input is rejected, never symmetrized.
    pub fn from_edge_function(g: &Graph, f: EdgeFunction<T>) -> Result<Self> {
        let f = EdgeFunction::from_parts(g, f.fwd, f.bwd, EdgeKind::SymmetricNonnegative)?;
        Ok(MeasurementMatrix(f))
    }

    pub fn zeros(g: &Graph) -> Self {
        MeasurementMatrix(EdgeFunction::zeros(g, EdgeKind::SymmetricNonnegative))
    }

    /// Per-edge magnitudes `a_ij` (`i < j`).
    pub fn values(&self) -> &[T] {
        &self.0.fwd
    }

    pub fn as_edge_function(&self) -> &EdgeFunction<T> {
        &self.0
    }
}

/// Antisymmetric edge function: `J_ij` is the current flowing from `i` to `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Current<T>(EdgeFunction<T>);

impl<T: Scalar> Current<T> {
    pub fn new(g: &Graph, values: Vec<T>) -> Result<Self> {
        EdgeFunction::antisymmetric(g, values).map(Current)
    }

    pub fn from_edge_function(g: &Graph, f: EdgeFunction<T>) -> Result<Self> {
        let f = EdgeFunction::from_parts(g, f.fwd, f.bwd, EdgeKind::Antisymmetric)?;
        Ok(Current(f))
    }

    pub fn zeros(g: &Graph) -> Self {
        Current(EdgeFunction::zeros(g, EdgeKind::Antisymmetric))
    }

    /// Per-edge values `J_ij` for edges `(i, j)` with `i < j`.
    pub fn values(&self) -> &[T] {
        &self.0.fwd
    }

    pub fn get(&self, g: &Graph, i: usize, j: usize) -> T {
        self.0.get(g, i, j)
    }

    pub fn magnitude(&self) -> MeasurementMatrix<T> {
        let v: Vec<T> = self.0.fwd.iter().map(|x| x.abs()).collect();
        MeasurementMatrix(EdgeFunction {
            bwd: v.clone(),
            fwd: v,
            kind: EdgeKind::SymmetricNonnegative,
        })
    }

    pub fn scaled(&self, c: T) -> Self {
        Current(EdgeFunction {
            fwd: self.0.fwd.iter().map(|&x| x * c).collect(),
            bwd: self.0.bwd.iter().map(|&x| x * c).collect(),
            kind: EdgeKind::Antisymmetric,
        })
    }

    pub fn as_edge_function(&self) -> &EdgeFunction<T> {
        &self.0
    }

    /// ‖self − other‖_F / ‖other‖_F over the full matrices.
    pub fn relative_error(&self, truth: &Current<T>) -> T {
        let num: T = self
            .values()
            .iter()
            .zip(truth.values())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
        let den: T = truth.values().iter().map(|&y| y * y).sum();
        if den == T::zero() {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

/// `(Du)_ij = u_i − u_j` on edges, zero elsewhere.
pub fn gradient<T: Scalar>(g: &Graph, u: &[T]) -> Result<EdgeFunction<T>> {
    g.check_len(u.len())?;
    let fwd = g.edges().iter().map(|&(i, j)| u[i] - u[j]).collect();
    EdgeFunction::antisymmetric(g, fwd)
}

/// `(div b)_i = Σ_j (b_ji − b_ij)`.
pub fn divergence<T: Scalar>(g: &Graph, b: &EdgeFunction<T>) -> Result<VertexFunction<T>> {
    g.check_edge_len(b.fwd.len())?;
    let mut out = vec![T::zero(); g.n()];
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        let (bij, bji) = (b.fwd[e], b.bwd[e]);
        out[i] += bji - bij;
        out[j] += bij - bji;
    }
    Ok(out.into())
}

pub fn inner_v<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    Ok(u.iter().zip(v).map(|(&x, &y)| x * y).sum())
}

pub fn inner_e<T: Scalar>(b: &EdgeFunction<T>, d: &EdgeFunction<T>) -> Result<T> {
    if b.fwd.len() != d.fwd.len() {
        return Err(Error::DimensionMismatch { expected: b.fwd.len(), got: d.fwd.len() });
    }
    let f: T = b.fwd.iter().zip(&d.fwd).map(|(&x, &y)| x * y).sum();
    let r: T = b.bwd.iter().zip(&d.bwd).map(|(&x, &y)| x * y).sum();
    Ok(f + r)
}

/// Weighted l¹ energy `I(u) = ½ Σ_{i,j} a_ij |u_i − u_j|`.
pub fn energy<T: Scalar>(g: &Graph, a: &MeasurementMatrix<T>, u: &[T]) -> Result<T> {
    g.check_len(u.len())?;
    g.check_edge_len(a.values().len())?;
    Ok(g
        .edges()
        .iter()
        .zip(a.values())
        .map(|(&(i, j), &w)| w * (u[i] - u[j]).abs())
        .sum())
}

/// `J_i = Σ_j J_ij`: net current leaving vertex `i` through its edges.
pub fn vertex_flux<T: Scalar>(g: &Graph, j: &Current<T>) -> VertexFunction<T> {
    let mut out = vec![T::zero(); g.n()];
    for (e, &(a, b)) in g.edges().iter().enumerate() {
        out[a] += j.0.fwd[e];
        out[b] += j.0.bwd[e];
    }
    out.into()
}

/// Splits vertices into (interior, boundary) by flux: interior when
/// `|J_i| ≤ 1e-9 · max(1, ‖J‖∞)`.
pub fn classify_vertices<T: Scalar>(g: &Graph, j: &Current<T>) -> (Vec<usize>, Vec<usize>) {
    let flux = vertex_flux(g, j);
    let thresh = T::rel_floor(1e-9) * T::one().max(j.0.max_abs());
    (0..g.n()).partition(|&v| flux[v].abs() <= thresh)
}
