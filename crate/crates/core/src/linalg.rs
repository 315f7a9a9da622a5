//! Weighted graph Laplacian systems with fixed (Dirichlet or grounded) vertices.
//!
//! Systems with up to [`DENSE_LIMIT`] unknowns are factored once with a dense
//! Cholesky decomposition; larger ones fall back to Jacobi-preconditioned CG.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::{norm2, Scalar};

pub const DENSE_LIMIT: usize = 2000;

/// Which vertices are held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemRole {
    /// Boundary vertices fixed, interior unknowns (`A_D v = b`).
    DirichletReduced,
    /// Full Laplacian with vertex 1 grounded (`A_N v = b`, `v_1` prescribed).
    Grounded,
}

/// One-shot description of a Laplacian solve.
#[derive(Debug, Clone)]
pub struct LinearSystemSpec<T> {
    pub role: SystemRole,
    /// Edge weights in graph edge order.
    pub weights: Vec<T>,
    /// Required `Σ_j w_ij (u_i − u_j)` per vertex; entries at fixed vertices are ignored
    /// except for the grounded compatibility check.
    pub rhs: Vec<T>,
    /// Values at fixed vertices: boundary order for `DirichletReduced`, `[u_1]` for `Grounded`.
    pub fixed_values: Vec<T>,
}

/// Solves a [`LinearSystemSpec`]. The grounded variant requires `Σ rhs = 0`.
pub fn solve_linear<T: Scalar>(g: &Graph, spec: &LinearSystemSpec<T>) -> Result<Vec<T>> {
    g.check_len(spec.rhs.len())?;
    if spec.role == SystemRole::Grounded {
        check_compatible(&spec.rhs)?;
    }
    let sys = LaplacianSystem::new(g, &spec.weights, spec.role)?;
    sys.solve(&spec.rhs, &spec.fixed_values)
}

/// `|Σ b| ≤ 1e-12 ‖b‖₁`, floored at a few ulps for single precision.
pub(crate) fn check_compatible<T: Scalar>(b: &[T]) -> Result<()> {
    let sum: T = b.iter().copied().sum();
    let l1: T = b.iter().map(|x| x.abs()).sum();
    if sum.abs() > T::rel_floor(1e-12) * l1 {
        return Err(Error::IncompatibleNeumann(sum.as_f64()));
    }
    Ok(())
}

/// In-place lower Cholesky factor of a dense symmetric `m × m` matrix (row-major);
/// the strict upper triangle is left untouched.
pub(crate) fn cholesky<T: Scalar>(a: &mut [T], m: usize) -> Result<()> {
    let scale = (0..m).fold(T::zero(), |s, k| s.max(a[k * m + k]));
    let floor = T::epsilon() * scale * T::lit(m.max(1) as f64);
    for k in 0..m {
        let mut piv = a[k * m + k];
        for p in 0..k {
            piv -= a[k * m + p] * a[k * m + p];
        }
        if !(piv > floor) {
            return Err(Error::Singular(format!("nonpositive pivot at unknown {}", k + 1)));
        }
        let piv = piv.sqrt();
        a[k * m + k] = piv;
        for i in (k + 1)..m {
            let mut s = a[i * m + k];
            for p in 0..k {
                s -= a[i * m + p] * a[k * m + p];
            }
            a[i * m + k] = s / piv;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` for a factor produced by [`cholesky`].
pub(crate) fn cholesky_solve<T: Scalar>(chol: &[T], m: usize, b: &[T]) -> Vec<T> {
    let mut y = b.to_vec();
    for i in 0..m {
        let row = &chol[i * m..i * m + i];
        let s: T = row.iter().zip(&y[..i]).map(|(&l, &x)| l * x).sum();
        y[i] = (y[i] - s) / chol[i * m + i];
    }
    for i in (0..m).rev() {
        let mut s = y[i];
        for k in (i + 1)..m {
            s -= chol[k * m + i] * y[k];
        }
        y[i] = s / chol[i * m + i];
    }
    y
}

enum Method<T> {
    Dense { chol: Vec<T> },
    Cg { diag: Vec<T> },
}

/// Factored reduced Laplacian, reusable across right-hand sides.
pub struct LaplacianSystem<T> {
    n: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<T>,
    fixed: Vec<usize>,
    /// Position of each vertex among the unknowns.
    pos: Vec<Option<usize>>,
    free: Vec<usize>,
    method: Method<T>,
}

impl<T: Scalar> LaplacianSystem<T> {
    pub fn new(g: &Graph, weights: &[T], role: SystemRole) -> Result<Self> {
        g.check_edge_len(weights.len())?;
        let fixed: Vec<usize> = match role {
            SystemRole::DirichletReduced => {
                g.require_boundary()?;
                g.boundary().to_vec()
            }
            SystemRole::Grounded => vec![0],
        };
        let mut is_fixed = vec![false; g.n()];
        for &v in &fixed {
            is_fixed[v] = true;
        }
        // Only positive weights conduct; every such component needs a fixed vertex.
        for comp in g.components_by(|e| weights[e] > T::zero()) {
            if !comp.iter().any(|&v| is_fixed[v]) {
                return Err(Error::Singular(format!(
                    "vertex {} is not connected to a fixed vertex through positive weights",
                    comp[0] + 1
                )));
            }
        }
        let mut pos = vec![None; g.n()];
        let mut free = Vec::new();
        for v in 0..g.n() {
            if !is_fixed[v] {
                pos[v] = Some(free.len());
                free.push(v);
            }
        }
        let mut sys = LaplacianSystem {
            n: g.n(),
            edges: g.edges().to_vec(),
            weights: weights.to_vec(),
            fixed,
            pos,
            free,
            method: Method::Cg { diag: Vec::new() },
        };
        sys.method = if sys.free.len() <= DENSE_LIMIT {
            Method::Dense { chol: sys.factor()? }
        } else {
            Method::Cg { diag: sys.diagonal() }
        };
        Ok(sys)
    }

    pub fn fixed(&self) -> &[usize] {
        &self.fixed
    }

    fn diagonal(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.free.len()];
        for (&(i, j), &w) in self.edges.iter().zip(&self.weights) {
            if let Some(p) = self.pos[i] {
                d[p] += w;
            }
            if let Some(q) = self.pos[j] {
                d[q] += w;
            }
        }
        d
    }

    fn factor(&self) -> Result<Vec<T>> {
        let m = self.free.len();
        let mut a = vec![T::zero(); m * m];
        for (&(i, j), &w) in self.edges.iter().zip(&self.weights) {
            match (self.pos[i], self.pos[j]) {
                (Some(p), Some(q)) => {
                    a[p * m + p] += w;
                    a[q * m + q] += w;
                    a[p * m + q] -= w;
                    a[q * m + p] -= w;
                }
                (Some(p), None) => a[p * m + p] += w,
                (None, Some(q)) => a[q * m + q] += w,
                (None, None) => {}
            }
        }
        cholesky(&mut a, m)?;
        Ok(a)
    }

    /// Reduced right-hand side: moves fixed-vertex contributions across.
    fn reduced_rhs(&self, rhs: &[T], fixed_values: &[T]) -> Vec<T> {
        let mut base = vec![T::zero(); self.n];
        for (&v, &x) in self.fixed.iter().zip(fixed_values) {
            base[v] = x;
        }
        let mut r: Vec<T> = self.free.iter().map(|&v| rhs[v]).collect();
        for (&(i, j), &w) in self.edges.iter().zip(&self.weights) {
            match (self.pos[i], self.pos[j]) {
                (Some(p), None) => r[p] += w * base[j],
                (None, Some(q)) => r[q] += w * base[i],
                _ => {}
            }
        }
        r
    }

    fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); x.len()];
        for (&(i, j), &w) in self.edges.iter().zip(&self.weights) {
            match (self.pos[i], self.pos[j]) {
                (Some(p), Some(q)) => {
                    let d = w * (x[p] - x[q]);
                    y[p] += d;
                    y[q] -= d;
                }
                (Some(p), None) => y[p] += w * x[p],
                (None, Some(q)) => y[q] += w * x[q],
                (None, None) => {}
            }
        }
        y
    }

    fn dense_solve(chol: &[T], m: usize, b: &[T]) -> Vec<T> {
        cholesky_solve(chol, m, b)
    }

    fn cg(&self, diag: &[T], b: &[T]) -> Vec<T> {
        let m = b.len();
        let mut x = vec![T::zero(); m];
        let mut r = b.to_vec();
        let mut z: Vec<T> = r.iter().zip(diag).map(|(&r, &d)| r / d).collect();
        let mut p = z.clone();
        let mut rz: T = r.iter().zip(&z).map(|(&a, &b)| a * b).sum();
        let target = T::rel_floor(1e-13) * norm2(b);
        for _ in 0..(10 * m).max(100) {
            if norm2(&r) <= target {
                break;
            }
            let ap = self.apply(&p);
            let pap: T = p.iter().zip(&ap).map(|(&a, &b)| a * b).sum();
            if pap <= T::zero() {
                break;
            }
            let step = rz / pap;
            for k in 0..m {
                x[k] += step * p[k];
                r[k] -= step * ap[k];
            }
            for k in 0..m {
                z[k] = r[k] / diag[k];
            }
            let rz_new: T = r.iter().zip(&z).map(|(&a, &b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..m {
                p[k] = z[k] + beta * p[k];
            }
        }
        x
    }

    fn solve_reduced(&self, b: &[T]) -> Vec<T> {
        match &self.method {
            Method::Dense { chol } => Self::dense_solve(chol, self.free.len(), b),
            Method::Cg { diag } => self.cg(diag, b),
        }
    }

    /// Solves `Σ_j w_ij (u_i − u_j) = rhs_i` at every free vertex with the fixed vertices
    /// set to `fixed_values` (aligned with [`Self::fixed`]). Equations at fixed vertices
    /// are not imposed. Returns the full vertex vector.
    pub fn solve(&self, rhs: &[T], fixed_values: &[T]) -> Result<Vec<T>> {
        if rhs.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: rhs.len() });
        }
        if fixed_values.len() != self.fixed.len() {
            return Err(Error::DimensionMismatch { expected: self.fixed.len(), got: fixed_values.len() });
        }
        let b = self.reduced_rhs(rhs, fixed_values);
        let mut x = self.solve_reduced(&b);
        let bound = T::rel_floor(1e-10) * norm2(&b);
        let mut res = self.residual(&x, &b);
        if norm2(&res) > bound {
            // one round of iterative refinement
            let dx = self.solve_reduced(&res);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
            res = self.residual(&x, &b);
            let rn = norm2(&res);
            if rn > bound {
                return Err(Error::Residual { residual: rn.as_f64(), bound: bound.as_f64() });
            }
        }
        let mut u = vec![T::zero(); self.n];
        for (&v, &x) in self.fixed.iter().zip(fixed_values) {
            u[v] = x;
        }
        for (k, &v) in self.free.iter().enumerate() {
            u[v] = x[k];
        }
        Ok(u)
    }

    fn residual(&self, x: &[T], b: &[T]) -> Vec<T> {
        let ax = self.apply(x);
        b.iter().zip(ax).map(|(&bi, axi)| bi - axi).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        Graph::new(3, [(0, 1), (1, 2)], vec![0, 2]).unwrap()
    }

    #[test]
    fn one_unknown_is_a_division() {
        let g = path3();
        let spec = LinearSystemSpec {
            role: SystemRole::DirichletReduced,
            weights: vec![1.0_f64, 2.0],
            rhs: vec![0.0; 3],
            fixed_values: vec![1.0, 0.0],
        };
        let u = solve_linear(&g, &spec).unwrap();
        assert!((u[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn grounded_path_matches_hand_elimination() {
        // unit weights, inject +1 at vertex 1 and -1 at vertex 3 → v = (0, -1, -2)
        let g = path3();
        let spec = LinearSystemSpec {
            role: SystemRole::Grounded,
            weights: vec![1.0_f64, 1.0],
            rhs: vec![1.0, 0.0, -1.0],
            fixed_values: vec![0.0],
        };
        let u = solve_linear(&g, &spec).unwrap();
        for (x, y) in u.iter().zip([0.0, -1.0, -2.0]) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn grounded_rejects_nonzero_total() {
        let g = path3();
        let spec = LinearSystemSpec {
            role: SystemRole::Grounded,
            weights: vec![1.0, 1.0],
            rhs: vec![1.0, 0.0, 0.0],
            fixed_values: vec![0.0],
        };
        assert!(matches!(solve_linear(&g, &spec), Err(Error::IncompatibleNeumann(_))));
    }

    #[test]
    fn detects_floating_component() {
        let g = Graph::new(3, [(0, 1), (1, 2)], vec![0]).unwrap();
        let r = LaplacianSystem::new(&g, &[1.0, 0.0], SystemRole::DirichletReduced);
        assert!(matches!(r, Err(Error::Singular(_))));
    }

    #[test]
    fn cg_agrees_with_cholesky() {
        // ring of 40 vertices with two boundary vertices; exercise both paths directly
        let n = 40;
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        let g = Graph::new(n, edges, vec![0, 20]).unwrap();
        let w: Vec<f64> = (0..n).map(|k| 0.5 + (k % 7) as f64 * 0.1).collect();
        let sys = LaplacianSystem::new(&g, &w, SystemRole::DirichletReduced).unwrap();
        let rhs: Vec<f64> = (0..n).map(|k| ((k * 37) % 11) as f64 * 0.01).collect();
        let b = sys.reduced_rhs(&rhs, &[1.0, -1.0]);
        let dense = sys.solve_reduced(&b);
        let cg = sys.cg(&sys.diagonal(), &b);
        for (x, y) in dense.iter().zip(&cg) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }
}
