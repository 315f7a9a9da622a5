//! Several measurements tested against a single conductivity.
//!
//! Each dataset fixes the current `J^l` uniquely, but its minimizer set is a whole
//! polytope of potentials, all aligned with `J^l`. The ratio `|u_i − u_j| / a_ij` of a
//! minimizer is the resistance `1/σ_ij` it implies, so a common conductivity exists
//! exactly when one minimizer per dataset can be chosen with matching ratios. The
//! check therefore minimizes the coupling term over the product of minimizer sets,
//! a convex quadratic program, instead of reading it off arbitrary solver outputs.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{Conductivity, DirichletData, NeumannData};
use crate::graph::{energy, Graph, MeasurementMatrix, VertexFunction};
use crate::inverse::{
    flat_tolerance, solve_inverse_dirichlet, solve_inverse_neumann, AdmmConfig, InverseError, InverseSolution,
};
use crate::linalg::{cholesky, cholesky_solve};
use crate::scalar::{norm2, norm_inf, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryData<T> {
    Dirichlet(DirichletData<T>),
    Neumann(NeumannData<T>),
}

/// One measurement: its boundary vertices (0-based), boundary data and magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub boundary: Vec<usize>,
    pub data: BoundaryData<T>,
    pub a: MeasurementMatrix<T>,
}

/// At least two datasets on one graph. The first is the reference the coupling term
/// compares against.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet<T> {
    datasets: Vec<Dataset<T>>,
}

impl<T: Scalar> MeasurementSet<T> {
    pub fn new(g: &Graph, datasets: Vec<Dataset<T>>) -> Result<Self> {
        if datasets.len() < 2 {
            return Err(Error::Config(format!("need at least two datasets, got {}", datasets.len())));
        }
        let set = MeasurementSet { datasets };
        for l in 0..set.len() {
            let gl = set.graph_for(g, l)?;
            let d = &set.datasets[l];
            gl.check_edge_len(d.a.values().len())?;
            match &d.data {
                BoundaryData::Dirichlet(f) => f.check(&gl)?,
                BoundaryData::Neumann(h) => h.check(&gl)?,
            }
        }
        Ok(set)
    }

    pub fn datasets(&self) -> &[Dataset<T>] {
        &self.datasets
    }

    pub fn len(&self) -> usize {
        self.datasets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }

    /// `g` with the boundary of dataset `l`.
    pub fn graph_for(&self, g: &Graph, l: usize) -> Result<Graph> {
        g.with_boundary(self.datasets[l].boundary.clone())
    }
}

/// `Φ = Σ_{l ≥ 2} Σ_{C^l} (|u¹_i − u¹_j| / a¹_ij − |u^l_i − u^l_j| / a^l_ij)²`, one term per
/// undirected edge, where `C^l` holds the edges with `a¹` and `a^l` both nonzero.
///
/// Absolute differences are used: `|u_i − u_j| / |J_ij|` is the resistance `1/σ_ij` for any
/// pair inducing `J`, while the signed ratio also carries the direction of `J^l` and
/// would not vanish for a common conductivity whose currents flow differently.
pub fn coupling_phi<T: Scalar>(g: &Graph, us: &[&[T]], a: &[&MeasurementMatrix<T>]) -> Result<T> {
    if us.len() != a.len() {
        return Err(Error::DimensionMismatch { expected: us.len(), got: a.len() });
    }
    for (u, al) in us.iter().zip(a) {
        g.check_len(u.len())?;
        g.check_edge_len(al.values().len())?;
    }
    let Some((u1, a1)) = us.first().zip(a.first()) else {
        return Ok(T::zero());
    };
    let mut phi = T::zero();
    for (ul, al) in us.iter().zip(a).skip(1) {
        for (e, &(i, j)) in g.edges().iter().enumerate() {
            let (x, y) = (a1.values()[e], al.values()[e]);
            if x != T::zero() && y != T::zero() {
                let d = (u1[i] - u1[j]).abs() / x - (ul[i] - ul[j]).abs() / y;
                phi += d * d;
            }
        }
    }
    Ok(phi)
}

/// `Σ_l I^l(u^l) + Φ` for admissible potentials (`u^l = f^l` on `∂V^l`, or
/// `Σ_{∂V^l} u^l_i g^l_i = 1`).
pub fn total_functional<T: Scalar>(g: &Graph, us: &[&[T]], set: &MeasurementSet<T>) -> Result<T> {
    if us.len() != set.len() {
        return Err(Error::DimensionMismatch { expected: set.len(), got: us.len() });
    }
    let mut total = T::zero();
    for (l, (u, d)) in us.iter().zip(set.datasets()).enumerate() {
        g.check_len(u.len())?;
        let feasible = match &d.data {
            BoundaryData::Dirichlet(f) => d
                .boundary
                .iter()
                .zip(&f.0)
                .all(|(&v, &x)| (u[v] - x).abs() <= T::rel_floor(1e-12) * x.abs().max(T::one())),
            BoundaryData::Neumann(h) => {
                let s: T = d.boundary.iter().zip(h.values()).map(|(&v, &x)| u[v] * x).sum();
                (s - T::one()).abs() <= T::rel_floor(1e-9)
            }
        };
        if !feasible {
            return Err(Error::Infeasible(format!("potential {} violates its boundary condition", l + 1)));
        }
        total += energy(g, &d.a, u)?;
    }
    let a: Vec<&MeasurementMatrix<T>> = set.datasets().iter().map(|d| &d.a).collect();
    Ok(total + coupling_phi(g, us, &a)?)
}

/// `max(1e-8, 100 tol²)`.
pub fn phi_tolerance<T: Scalar>(tol: T) -> T {
    T::rel_floor(1e-8).max(T::lit(100.0) * tol * tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport<T> {
    pub consistent: bool,
    /// Smallest coupling term found over the minimizer sets.
    pub phi: T,
    /// Coupling term at the potentials the single-measurement solver returned.
    pub phi_solver: T,
    pub tol_phi: T,
    /// Merged conductivity, present when consistent.
    pub sigma: Option<Conductivity<T>>,
    /// Potentials realizing `phi`. Neumann potentials other than the scale reference
    /// are rescaled to match it, so their normalization is the relative scale found.
    pub potentials: Vec<VertexFunction<T>>,
    pub solutions: Vec<InverseSolution<T>>,
    /// Edges on which two datasets imply different conductivities.
    pub disagreements: Vec<usize>,
    /// Edges no dataset says anything about (flat and without current everywhere);
    /// they get `σ = 0` in the merged conductivity.
    pub undetermined: Vec<usize>,
}

/// Solves every dataset on its own, then looks for one minimizer per dataset with a
/// common resistance on every shared edge. Consistent when the best coupling term is
/// at most [`phi_tolerance`] and no edge receives conflicting conductivities.
pub fn consistency_check<T: Scalar>(
    g: &Graph,
    set: &MeasurementSet<T>,
    cfg: &AdmmConfig<T>,
) -> Result<ConsistencyReport<T>, InverseError<T>> {
    cfg.validate()?;
    let cleaned = denoise(g, set)?;
    let set = &cleaned;
    let solutions: Vec<InverseSolution<T>> = (0..set.len())
        .into_par_iter()
        .map(|l| -> Result<InverseSolution<T>, InverseError<T>> {
            let gl = set.graph_for(g, l)?;
            let d = &set.datasets()[l];
            match &d.data {
                BoundaryData::Dirichlet(f) => solve_inverse_dirichlet(&gl, f, &d.a, cfg),
                BoundaryData::Neumann(h) => solve_inverse_neumann(&gl, h, &d.a, cfg),
            }
        })
        .collect::<Result<_, _>>()?;
    let a: Vec<&MeasurementMatrix<T>> = set.datasets().iter().map(|d| &d.a).collect();
    let raw: Vec<&[T]> = solutions.iter().map(|s| &s.u[..]).collect();
    let phi_solver = coupling_phi(g, &raw, &a)?;

    let qp = SelectionQp::build(g, set, &solutions)?;
    let selected = qp.solve(&solutions)?;
    let refs: Vec<&[T]> = selected.iter().map(|u| &u[..]).collect();
    let phi_selected = coupling_phi(g, &refs, &a)?;
    let tol_phi = phi_tolerance(cfg.tol);
    let (phi, potentials) = if phi_selected <= phi_solver.max(tol_phi) {
        (phi_selected, selected)
    } else {
        (phi_solver, raw.iter().map(|u| u.to_vec()).collect())
    };

    let (sigma, disagreements, undetermined) = merge_sigma(g, set, &potentials, cfg.tol, tol_phi)?;
    let consistent = phi <= tol_phi && disagreements.is_empty();
    Ok(ConsistencyReport {
        consistent,
        phi,
        phi_solver,
        tol_phi,
        sigma: consistent.then_some(sigma),
        potentials: potentials.into_iter().map(VertexFunction::from).collect(),
        solutions,
        disagreements,
        undetermined,
    })
}

/// Magnitudes at rounding level relative to the largest one in their dataset are set
/// to zero. They come from forward solves of edges without current, and dividing by them
/// would swamp the coupling term.
fn denoise<T: Scalar>(g: &Graph, set: &MeasurementSet<T>) -> Result<MeasurementSet<T>> {
    let datasets = set
        .datasets()
        .iter()
        .map(|d| {
            let floor = T::rel_floor(1e-12) * norm_inf(d.a.values());
            let vals = d.a.values().iter().map(|&x| if x <= floor { T::zero() } else { x }).collect();
            Ok(Dataset { a: MeasurementMatrix::new(g, vals)?, ..d.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementSet { datasets })
}

/// Per edge, the resistance `|Du^l| / a^l` implied by every dataset that constrains it
/// (`∞` for a voltage drop without current), compared pairwise.
fn merge_sigma<T: Scalar>(
    g: &Graph,
    set: &MeasurementSet<T>,
    us: &[Vec<T>],
    tol: T,
    tol_phi: T,
) -> Result<(Conductivity<T>, Vec<usize>, Vec<usize>)> {
    let flats: Vec<T> = us.iter().map(|u| flat_tolerance(u, tol)).collect();
    let agree = T::lit(2.0) * tol_phi.sqrt();
    let mut values = vec![T::zero(); g.edge_count()];
    let mut perfect = vec![false; g.edge_count()];
    let mut disagreements = Vec::new();
    let mut undetermined = Vec::new();
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        // (resistance, |Du|, a)
        let mut seen: Vec<(T, T, T)> = Vec::new();
        for (l, u) in us.iter().enumerate() {
            let du = (u[i] - u[j]).abs();
            let a = set.datasets()[l].a.values()[e];
            let flat = du <= flats[l];
            match (a > T::zero(), flat) {
                (true, true) => seen.push((T::zero(), du, a)),
                (true, false) => seen.push((du / a, du, a)),
                (false, false) => seen.push((T::infinity(), du, a)),
                (false, true) => {}
            }
        }
        let Some(best) = seen.iter().copied().max_by(|x, y| x.1.partial_cmp(&y.1).unwrap_or(std::cmp::Ordering::Equal))
        else {
            undetermined.push(e);
            continue;
        };
        let clash = seen.iter().any(|&(r, _, _)| {
            seen.iter().any(|&(s, _, _)| {
                if r.is_infinite() || s.is_infinite() {
                    r.is_infinite() != s.is_infinite()
                } else {
                    (r - s).abs() > agree * T::one().max(r).max(s)
                }
            })
        });
        if clash {
            disagreements.push(e);
        }
        let (r, du, a) = best;
        if r == T::zero() {
            perfect[e] = true;
        } else if r.is_finite() {
            values[e] = a / du;
        }
    }
    Ok((Conductivity::with_perfect(g, values, perfect)?, disagreements, undetermined))
}

/// Affine parametrization of one dataset's potential by free unknowns.
struct Param<T> {
    /// Offset of this dataset's unknowns in the stacked vector.
    offset: usize,
    /// Column of each vertex among the unknowns, if free.
    col: Vec<Option<usize>>,
    /// Constant part of the potential.
    base: Vec<T>,
    /// Vertex determined by the normalization `Σ u h = 1`, with its coefficients.
    solved: Option<(usize, Vec<(usize, T)>)>,
}

impl<T: Scalar> Param<T> {
    /// Coefficients of `u_v` over the stacked unknowns, plus its constant.
    fn vertex(&self, v: usize, out: &mut Vec<(usize, T)>) -> T {
        if let Some(c) = self.col[v] {
            out.push((self.offset + c, T::one()));
            return T::zero();
        }
        if let Some((p, coeffs)) = &self.solved {
            if *p == v {
                out.extend(coeffs.iter().map(|&(c, x)| (self.offset + c, x)));
            }
        }
        self.base[v]
    }

    fn potential(&self, x: &[T]) -> Vec<T> {
        let mut u = self.base.clone();
        for (v, c) in self.col.iter().enumerate() {
            if let Some(c) = c {
                u[v] = x[self.offset + c];
            }
        }
        if let Some((p, coeffs)) = &self.solved {
            u[*p] = self.base[*p] + coeffs.iter().map(|&(c, w)| w * x[self.offset + c]).sum::<T>();
        }
        u
    }
}

/// `min Φ(Bx + c)` subject to `Bx + c ≥ 0`, where the rows of `B x + c` are the signed
/// ratios `s_e (u_i − u_j) / a_e` of every dataset on its support and `s = sign J^l`.
/// Rows whose current is not saturated must be zero (the potential is flat there at
/// every minimizer). Drops on edges one dataset saw no current on, while another did,
/// are penalized as well. Solved by ADMM with a dense factorization of the normal matrix.
struct SelectionQp<T> {
    params: Vec<Param<T>>,
    cols: usize,
    /// Dense rows of `B` (row-major, `cols` wide) and `c`.
    b: Vec<T>,
    c: Vec<T>,
    kinds: Vec<RowKind>,
    /// Coupled row pairs `(reference row, other row)`.
    pairs: Vec<(usize, usize)>,
    /// Rows penalized on their own: drops on edges a dataset saw no current on while
    /// another one did. A conductance known to be positive forces them flat.
    solo: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKind {
    Sign,
    Zero,
    Free,
}

impl<T: Scalar> SelectionQp<T> {
    fn build(g: &Graph, set: &MeasurementSet<T>, sols: &[InverseSolution<T>]) -> Result<Self> {
        let n = g.n();
        // Scale reference: the first Dirichlet dataset, else the first one normalized.
        let reference = set
            .datasets()
            .iter()
            .position(|d| matches!(d.data, BoundaryData::Dirichlet(_)))
            .unwrap_or(0);
        let mut params = Vec::new();
        let mut cols = 0;
        for (l, d) in set.datasets().iter().enumerate() {
            let mut col = vec![None; n];
            let mut base = vec![T::zero(); n];
            let mut solved = None;
            let mut free = 0;
            match &d.data {
                BoundaryData::Dirichlet(f) => {
                    for (&v, &x) in d.boundary.iter().zip(&f.0) {
                        base[v] = x;
                    }
                    for (v, c) in col.iter_mut().enumerate() {
                        if !d.boundary.contains(&v) {
                            *c = Some(free);
                            free += 1;
                        }
                    }
                }
                BoundaryData::Neumann(h) => {
                    let hv = {
                        let mut hv = vec![T::zero(); n];
                        for (&v, &x) in d.boundary.iter().zip(h.values()) {
                            hv[v] = x;
                        }
                        hv
                    };
                    let p = if l == reference {
                        Some((0..n).max_by(|&x, &y| hv[x].abs().partial_cmp(&hv[y].abs()).unwrap()).unwrap_or(0))
                    } else {
                        None
                    };
                    let ground = (0..n).find(|&v| Some(v) != p).unwrap_or(0);
                    for (v, c) in col.iter_mut().enumerate() {
                        if v != ground && Some(v) != p {
                            *c = Some(free);
                            free += 1;
                        }
                    }
                    if let Some(p) = p {
                        base[p] = T::one() / hv[p];
                        let coeffs = (0..n).filter_map(|v| col[v].map(|c| (c, -hv[v] / hv[p]))).collect();
                        solved = Some((p, coeffs));
                    }
                }
            }
            params.push(Param { offset: cols, col, base, solved });
            cols += free;
        }

        let mut b = Vec::new();
        let mut c = Vec::new();
        let mut kinds = Vec::new();
        let mut solo = Vec::new();
        let mut row_of = vec![vec![None; g.edge_count()]; set.len()];
        let mut coeffs = Vec::new();
        for (l, d) in set.datasets().iter().enumerate() {
            let j = sols[l].current.values();
            for (e, &(p, q)) in g.edges().iter().enumerate() {
                let mut a = d.a.values()[e];
                let mut s = if j[e] < T::zero() { -T::one() } else { T::one() };
                let mut kind = if j[e].abs() < a / T::lit(2.0) { RowKind::Zero } else { RowKind::Sign };
                if a <= T::zero() {
                    // resistance units via the largest magnitude seen elsewhere
                    a = set.datasets().iter().map(|o| o.a.values()[e]).fold(T::zero(), T::max);
                    if a <= T::zero() {
                        continue;
                    }
                    s = T::one();
                    kind = RowKind::Free;
                    solo.push(c.len());
                } else {
                    row_of[l][e] = Some(c.len());
                }
                coeffs.clear();
                let cp = params[l].vertex(p, &mut coeffs);
                let split = coeffs.len();
                let cq = params[l].vertex(q, &mut coeffs);
                let mut row = vec![T::zero(); cols];
                for (k, &(col, x)) in coeffs.iter().enumerate() {
                    let sign = if k < split { T::one() } else { -T::one() };
                    row[col] += sign * x * s / a;
                }
                b.extend(row);
                c.push((cp - cq) * s / a);
                kinds.push(kind);
            }
        }
        let mut pairs = Vec::new();
        for l in 1..set.len() {
            for e in 0..g.edge_count() {
                if let (Some(r0), Some(rl)) = (row_of[0][e], row_of[l][e]) {
                    pairs.push((r0, rl));
                }
            }
        }
        Ok(SelectionQp { params, cols, b, c, kinds, pairs, solo })
    }

    fn rows(&self) -> usize {
        self.c.len()
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        (0..self.rows())
            .map(|r| {
                let row = &self.b[r * self.cols..(r + 1) * self.cols];
                self.c[r] + row.iter().zip(x).map(|(&p, &q)| p * q).sum::<T>()
            })
            .collect()
    }

    fn apply_t(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for (r, &w) in y.iter().enumerate() {
            if w == T::zero() {
                continue;
            }
            let row = &self.b[r * self.cols..(r + 1) * self.cols];
            for (o, &p) in out.iter_mut().zip(row) {
                *o += p * w;
            }
        }
        out
    }

    /// `Q y` for `Φ = yᵀ Q y`.
    fn apply_q(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); y.len()];
        for &(r0, rl) in &self.pairs {
            let d = y[r0] - y[rl];
            out[r0] += d;
            out[rl] -= d;
        }
        for &r in &self.solo {
            out[r] += y[r];
        }
        out
    }

    /// Factor of `2BᵀQB + ρBᵀB + δI` with `δ` relative to the largest diagonal entry,
    /// and that `δ`.
    fn factor(&self, rho: T, delta: T) -> Result<(Vec<T>, T)> {
        let m = self.cols;
        let mut k = vec![T::zero(); m * m];
        let mut add_outer = |row: &[T], w: T| {
            let nz: Vec<usize> = (0..m).filter(|&i| row[i] != T::zero()).collect();
            for &i in &nz {
                for &j in &nz {
                    k[i * m + j] += w * row[i] * row[j];
                }
            }
        };
        for r in 0..self.rows() {
            add_outer(&self.b[r * m..(r + 1) * m], rho);
        }
        let two = T::lit(2.0);
        for &(r0, rl) in &self.pairs {
            let diff: Vec<T> = (0..m).map(|i| self.b[r0 * m + i] - self.b[rl * m + i]).collect();
            add_outer(&diff, two);
        }
        for &r in &self.solo {
            add_outer(&self.b[r * m..(r + 1) * m], two);
        }
        let scale = (0..m).fold(T::one(), |s, i| s.max(k[i * m + i]));
        let delta = delta * scale;
        for i in 0..m {
            k[i * m + i] += delta;
        }
        cholesky(&mut k, m)?;
        Ok((k, delta))
    }

    fn project(&self, y: &mut [T]) {
        for (v, &k) in y.iter_mut().zip(&self.kinds) {
            match k {
                RowKind::Sign => *v = v.max(T::zero()),
                RowKind::Zero => *v = T::zero(),
                RowKind::Free => {}
            }
        }
    }

    fn solve(&self, sols: &[InverseSolution<T>]) -> Result<Vec<Vec<T>>> {
        let m = self.cols;
        let mut x = vec![T::zero(); m];
        for (p, s) in self.params.iter().zip(sols) {
            for (v, c) in p.col.iter().enumerate() {
                if let Some(c) = c {
                    x[p.offset + c] = s.u[v];
                }
            }
        }
        if m == 0 {
            return Ok(self.params.iter().map(|p| p.potential(&x)).collect());
        }
        let mut rho = T::one();
        let rel_delta = T::lit(1e-10);
        let (mut chol, mut delta) = self.factor(rho, rel_delta)?;
        let mut z = self.apply(&x);
        self.project(&mut z);
        let mut w = vec![T::zero(); self.rows()];
        let eps = T::rel_floor(1e-11);
        let two = T::lit(2.0);
        let qc = self.apply_q(&self.c);
        for it in 0..50_000 {
            // x-step
            let rhs_y: Vec<T> = (0..self.rows()).map(|r| rho * (z[r] - w[r] - self.c[r]) - two * qc[r]).collect();
            let mut rhs = self.apply_t(&rhs_y);
            for (r, &xi) in rhs.iter_mut().zip(&x) {
                *r += delta * xi;
            }
            x = cholesky_solve(&chol, m, &rhs);
            let bx = self.apply(&x);
            // z-step and dual update
            let z_old = z.clone();
            z = bx.iter().zip(&w).map(|(&p, &q)| p + q).collect();
            self.project(&mut z);
            let mut primal = Vec::with_capacity(z.len());
            for r in 0..z.len() {
                let res = bx[r] - z[r];
                w[r] += res;
                primal.push(res);
            }
            let dz: Vec<T> = z.iter().zip(&z_old).map(|(&p, &q)| rho * (p - q)).collect();
            let r_norm = norm2(&primal);
            let s_norm = norm2(&self.apply_t(&dz));
            let scale = norm2(&bx).max(norm2(&z)).max(T::one());
            let dual_scale = (rho * norm2(&self.apply_t(&w))).max(T::one());
            if r_norm <= eps * scale && s_norm <= eps * dual_scale {
                break;
            }
            // residual balancing, refactoring only occasionally
            if it % 50 == 49 {
                let ten = T::lit(10.0);
                let (r_rel, s_rel) = (r_norm / scale, s_norm / dual_scale);
                if r_rel > ten * s_rel || s_rel > ten * r_rel {
                    let f = if r_rel > s_rel { two } else { T::one() / two };
                    rho *= f;
                    for v in w.iter_mut() {
                        *v /= f;
                    }
                    (chol, delta) = self.factor(rho, rel_delta)?;
                }
            }
        }
        Ok(self.params.iter().map(|p| p.potential(&x)).collect())
    }
}
