//! Forward Dirichlet and Neumann voltage problems for a known conductivity.

use crate::error::{Error, Result};
use crate::graph::{Current, Graph, VertexFunction};
use crate::linalg::{check_compatible, LaplacianSystem, SystemRole};
use crate::scalar::Scalar;

/// Edge conductivities `σ_ij ≥ 0`, with optional perfect-conductor (`σ = ∞`) flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Conductivity<T> {
    values: Vec<T>,
    perfect: Vec<bool>,
}

impl<T: Scalar> Conductivity<T> {
    pub fn finite(g: &Graph, values: Vec<T>) -> Result<Self> {
        g.check_edge_len(values.len())?;
        for (e, &x) in values.iter().enumerate() {
            if !(x >= T::zero()) || !x.is_finite() {
                let (i, j) = g.edges()[e];
                return Err(Error::InvalidEdgeValue(i + 1, j + 1));
            }
        }
        let perfect = vec![false; values.len()];
        Ok(Conductivity { values, perfect })
    }

    /// `perfect[e]` marks `σ_e = ∞`; the finite value on those edges is ignored.
    pub fn with_perfect(g: &Graph, mut values: Vec<T>, perfect: Vec<bool>) -> Result<Self> {
        g.check_edge_len(perfect.len())?;
        for (x, &p) in values.iter_mut().zip(&perfect) {
            if p {
                *x = T::zero();
            }
        }
        let mut c = Self::finite(g, values)?;
        c.perfect = perfect;
        Ok(c)
    }

    pub fn uniform(g: &Graph, c: T) -> Self {
        Conductivity { values: vec![c; g.edge_count()], perfect: vec![false; g.edge_count()] }
    }

    /// Finite parts, in graph edge order.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn is_perfect(&self, e: usize) -> bool {
        self.perfect[e]
    }

    pub fn perfect_edges(&self) -> Vec<usize> {
        (0..self.perfect.len()).filter(|&e| self.perfect[e]).collect()
    }

    pub fn is_finite(&self) -> bool {
        !self.perfect.iter().any(|&p| p)
    }

    /// `σ_e` with `∞` for perfect conductors.
    pub fn get(&self, e: usize) -> T {
        if self.perfect[e] {
            T::infinity()
        } else {
            self.values[e]
        }
    }

    pub fn scaled(&self, c: T) -> Self {
        Conductivity {
            values: self.values.iter().map(|&x| x * c).collect(),
            perfect: self.perfect.clone(),
        }
    }

    fn require_finite(&self, g: &Graph) -> Result<()> {
        match self.perfect.iter().position(|&p| p) {
            Some(e) => {
                let (i, j) = g.edges()[e];
                Err(Error::PerfectConductor(i + 1, j + 1))
            }
            None => Ok(()),
        }
    }
}

/// Imposed voltages on the boundary, in boundary order.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletData<T>(pub Vec<T>);

impl<T: Scalar> DirichletData<T> {
    pub(crate) fn check(&self, g: &Graph) -> Result<()> {
        g.require_boundary()?;
        if self.0.len() != g.boundary().len() {
            return Err(Error::DimensionMismatch { expected: g.boundary().len(), got: self.0.len() });
        }
        Ok(())
    }
}

/// Injected currents on the boundary: nonzero and summing to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NeumannData<T>(Vec<T>);

impl<T: Scalar> NeumannData<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().all(|&x| x == T::zero()) {
            return Err(Error::ZeroNeumann);
        }
        check_compatible(&values)?;
        Ok(NeumannData(values))
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub(crate) fn check(&self, g: &Graph) -> Result<()> {
        g.require_boundary()?;
        if self.0.len() != g.boundary().len() {
            return Err(Error::DimensionMismatch { expected: g.boundary().len(), got: self.0.len() });
        }
        Ok(())
    }

    /// Full-length vertex vector with `g` on the boundary and zero inside.
    pub fn to_vertex(&self, g: &Graph) -> Vec<T> {
        let mut h = vec![T::zero(); g.n()];
        for (&v, &x) in g.boundary().iter().zip(&self.0) {
            h[v] = x;
        }
        h
    }
}

/// Kirchhoff + Ohm with prescribed boundary voltages; unique by the maximum principle.
pub fn solve_dirichlet_forward<T: Scalar>(
    g: &Graph,
    sigma: &Conductivity<T>,
    f: &DirichletData<T>,
) -> Result<VertexFunction<T>> {
    f.check(g)?;
    sigma.require_finite(g)?;
    let sys = LaplacianSystem::new(g, sigma.values(), SystemRole::DirichletReduced)?;
    Ok(sys.solve(&vec![T::zero(); g.n()], &f.0)?.into())
}

/// Kirchhoff + Ohm with injected boundary currents, grounded at `v_1 = 0`.
pub fn solve_neumann_forward<T: Scalar>(
    g: &Graph,
    sigma: &Conductivity<T>,
    data: &NeumannData<T>,
) -> Result<VertexFunction<T>> {
    data.check(g)?;
    sigma.require_finite(g)?;
    let sys = LaplacianSystem::new(g, sigma.values(), SystemRole::Grounded)?;
    Ok(sys.solve(&data.to_vertex(g), &[T::zero()])?.into())
}

/// Ohm's law `J_ij = σ_ij (v_i − v_j)`.
pub fn current_from_potential<T: Scalar>(
    g: &Graph,
    sigma: &Conductivity<T>,
    v: &[T],
) -> Result<Current<T>> {
    g.check_len(v.len())?;
    g.check_edge_len(sigma.values().len())?;
    sigma.require_finite(g)?;
    let vals = g
        .edges()
        .iter()
        .zip(sigma.values())
        .map(|(&(i, j), &s)| s * (v[i] - v[j]))
        .collect();
    Current::new(g, vals)
}

/// `σ_ij = J_ij / (v_i − v_j)`. Edges with `|v_i − v_j| ≤ tol` are flat: they become
/// perfect conductors when `|J_ij| > tol`, and nonconducting otherwise.
pub fn conductivity_from_pair<T: Scalar>(
    g: &Graph,
    v: &[T],
    current: &Current<T>,
    tol: T,
) -> Result<Conductivity<T>> {
    g.check_len(v.len())?;
    let m = g.edge_count();
    let mut values = vec![T::zero(); m];
    let mut perfect = vec![false; m];
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        let dv = v[i] - v[j];
        let jij = current.values()[e];
        if dv.abs() <= tol {
            perfect[e] = jij.abs() > tol;
            continue;
        }
        if jij * dv < T::zero() && jij.abs() > tol {
            return Err(Error::SignViolation(i + 1, j + 1));
        }
        values[e] = (jij / dv).max(T::zero());
    }
    Ok(Conductivity { values, perfect })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::vertex_flux;

    fn path3() -> Graph {
        Graph::new(3, [(0, 1), (1, 2)], vec![0, 2]).unwrap()
    }

    fn triangle() -> Graph {
        Graph::new(3, [(0, 1), (1, 2), (0, 2)], vec![0, 2]).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn series_resistors() {
        let g = path3();
        let s = Conductivity::uniform(&g, 1.0);
        let v = solve_dirichlet_forward(&g, &s, &DirichletData(vec![1.0, 0.0])).unwrap();
        assert!(close(&v, &[1.0, 0.5, 0.0], 1e-15));
        let j = current_from_potential(&g, &s, &v).unwrap();
        assert!(close(j.values(), &[0.5, 0.5], 1e-15));

        let s = Conductivity::finite(&g, vec![1.0, 2.0]).unwrap();
        let v = solve_dirichlet_forward(&g, &s, &DirichletData(vec![1.0, 0.0])).unwrap();
        assert!((v[1] - 1.0_f64 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_boundary_gives_constant_potential() {
        let g = triangle().with_boundary(vec![0]).unwrap();
        let s = Conductivity::finite(&g, vec![0.3, 0.9, 0.1]).unwrap();
        let v = solve_dirichlet_forward(&g, &s, &DirichletData(vec![2.5])).unwrap();
        assert!(close(&v, &[2.5; 3], 1e-14));
    }

    #[test]
    fn neumann_path_and_triangle() {
        let g = path3();
        let s = Conductivity::uniform(&g, 1.0);
        let data = NeumannData::new(vec![1.0, -1.0]).unwrap();
        let v = solve_neumann_forward(&g, &s, &data).unwrap();
        assert!(close(&v, &[0.0, -1.0, -2.0], 1e-14));
        let j = current_from_potential(&g, &s, &v).unwrap();
        assert!(close(j.values(), &[1.0, 1.0], 1e-14));

        let t = triangle();
        let s = Conductivity::uniform(&t, 1.0);
        let v = solve_neumann_forward(&t, &s, &data).unwrap();
        assert!(close(&v, &[0.0, -1.0 / 3.0, -2.0 / 3.0], 1e-14));
        // effective resistance between 1 and 3
        assert!(((v[0] - v[2]) - 2.0 / 3.0).abs() < 1e-14);
        let j = current_from_potential(&t, &s, &v).unwrap();
        assert!(close(j.values(), &[1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0], 1e-14));
        let flux = vertex_flux(&t, &j);
        assert!(close(&flux, &[1.0, 0.0, -1.0], 1e-14));
    }

    #[test]
    fn neumann_is_linear_in_data() {
        let g = triangle();
        let s = Conductivity::finite(&g, vec![0.2, 0.7, 1.3]).unwrap();
        let v1 = solve_neumann_forward(&g, &s, &NeumannData::new(vec![1.0, -1.0]).unwrap()).unwrap();
        let v3 = solve_neumann_forward(&g, &s, &NeumannData::new(vec![3.0, -3.0]).unwrap()).unwrap();
        let scaled: Vec<f64> = v1.iter().map(|x| 3.0 * x).collect();
        assert!(close(&v3, &scaled, 1e-13));
    }

    #[test]
    fn neumann_data_validation() {
        assert_eq!(NeumannData::<f64>::new(vec![0.0, 0.0]), Err(Error::ZeroNeumann));
        assert!(matches!(NeumannData::new(vec![1.0, -0.5]), Err(Error::IncompatibleNeumann(_))));
    }

    #[test]
    fn perfect_conductors_are_refused_by_forward_solves() {
        let g = path3();
        let s = Conductivity::with_perfect(&g, vec![1.0, 1.0], vec![true, false]).unwrap();
        assert_eq!(
            solve_dirichlet_forward(&g, &s, &DirichletData(vec![1.0, 0.0])),
            Err(Error::PerfectConductor(1, 2))
        );
        assert!(current_from_potential(&g, &s, &[1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn recovery_from_pairs() {
        let g = path3();
        let j = Current::new(&g, vec![0.5, 0.5]).unwrap();
        let s = conductivity_from_pair(&g, &[1.0, 0.5, 0.0], &j, 1e-12).unwrap();
        assert!(close(s.values(), &[1.0, 1.0], 1e-15));
        assert!(s.is_finite());

        let z = Current::zeros(&g);
        let s = conductivity_from_pair(&g, &[1.0, 0.5, 0.0], &z, 1e-12).unwrap();
        assert!(close(s.values(), &[0.0, 0.0], 0.0));

        let s = conductivity_from_pair(&g, &[1.0, 1.0, 0.0], &j, 1e-12).unwrap();
        assert!(s.is_perfect(0));
        assert_eq!(s.get(0), f64::INFINITY);
        assert!((s.get(1) - 0.5).abs() < 1e-15);

        let bad = Current::new(&g, vec![-0.5, 0.5]).unwrap();
        assert_eq!(
            conductivity_from_pair(&g, &[1.0, 0.5, 0.0], &bad, 1e-12),
            Err(Error::SignViolation(1, 2))
        );
    }
}
