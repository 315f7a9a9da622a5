//! Algorithm for prescribed boundary voltages.

use super::relabel::Pin;
use super::{
    current_flux, edge_gradient, extract_sigma, full_frobenius, half_div_difference, interior_imbalance2, run_admm,
    AdmmConfig, Certificate, InverseError, InverseSolution, SolveReport, StopRule,
};
use crate::error::{Error, Result};
use crate::forward::DirichletData;
use crate::graph::{energy, vertex_flux, Current, EdgeFunction, EdgeKind, Graph, MeasurementMatrix, VertexFunction};
use crate::linalg::{LaplacianSystem, SystemRole};
use crate::scalar::Scalar;

/// `u_f`: the data on the boundary, zero inside.
pub fn lift_dirichlet<T: Scalar>(g: &Graph, f: &DirichletData<T>) -> Result<VertexFunction<T>> {
    f.check(g)?;
    let mut u = vec![T::zero(); g.n()];
    for (&v, &x) in g.boundary().iter().zip(&f.0) {
        u[v] = x;
    }
    Ok(u.into())
}

/// One potential update: unit Laplacian with zero boundary values and right-hand side
/// `½(div b − div d)` on the interior.
pub fn step_u_dirichlet<T: Scalar>(g: &Graph, b: &EdgeFunction<T>, d: &EdgeFunction<T>) -> Result<VertexFunction<T>> {
    for x in [b, d] {
        g.check_edge_len(x.fwd().len())?;
        if x.kind() != EdgeKind::Antisymmetric {
            return Err(Error::WrongKind("antisymmetric"));
        }
    }
    g.require_boundary()?;
    let sys = LaplacianSystem::new(g, &vec![T::one(); g.edge_count()], SystemRole::DirichletReduced)?;
    let rhs = half_div_difference(g, b.fwd(), d.fwd());
    Ok(sys.solve(&rhs, &vec![T::zero(); g.boundary().len()])?.into())
}

/// `I(u + u_f)` against `Σ_{∂V} f_i J_i`, with the interior flux of `J` as imbalance.
fn certificate<T: Scalar>(
    g: &Graph,
    a: &[T],
    f: &DirichletData<T>,
    lift: &[T],
    u: &[T],
    b: &[T],
    two_alpha: T,
) -> Certificate<T> {
    let primal = g
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(i, j))| a[e] * (u[i] - u[j] + lift[e]).abs())
        .sum();
    let flux = current_flux(g, b, two_alpha);
    let dual = g.boundary().iter().zip(&f.0).map(|(&v, &x)| x * flux[v]).sum();
    Certificate { primal, dual, imbalance: interior_imbalance2(g, &flux).sqrt() }
}

/// Minimizes `I(u) = ½ Σ a_ij |u_i − u_j|` subject to `u = f` on the boundary and
/// returns the minimizer, the current `J = 2α b` and the induced conductivity.
pub fn solve_inverse_dirichlet<T: Scalar>(
    g: &Graph,
    f: &DirichletData<T>,
    a: &MeasurementMatrix<T>,
    cfg: &AdmmConfig<T>,
) -> Result<InverseSolution<T>, InverseError<T>> {
    cfg.validate()?;
    g.check_edge_len(a.values().len())?;
    let uf = lift_dirichlet(g, f)?;
    let lift = edge_gradient(g, &uf);
    let sys = LaplacianSystem::new(g, &vec![T::one(); g.edge_count()], SystemRole::DirichletReduced)?;
    let zeros = vec![T::zero(); g.boundary().len()];
    let two_alpha = cfg.alpha + cfg.alpha;
    let a_frobenius = full_frobenius(a.values());
    let out = run_admm(
        g,
        a.values(),
        &lift,
        cfg,
        |b, d| sys.solve(&half_div_difference(g, b, d), &zeros),
        |u, b| cfg.stop == StopRule::Change || certificate(g, a.values(), f, &lift, u, b, two_alpha).holds(cfg.tol, a_frobenius),
    )?;

    let mut u: Vec<T> = out.u.iter().zip(uf.iter()).map(|(&x, &y)| x + y).collect();
    let current = Current::new(g, out.b.iter().map(|&x| x * two_alpha).collect())?;
    let primal = energy(g, a, &u)?;
    let flux = vertex_flux(g, &current);
    let dual = g.boundary().iter().zip(&f.0).map(|(&v, &fv)| fv * flux[v]).sum::<T>();
    let pin = cfg.relabel.then_some(Pin::Dirichlet);
    let (sigma, relabeled) = extract_sigma(g, &mut u, &current, cfg.tol, pin)?;
    let primal = if relabeled { energy(g, a, &u)? } else { primal };
    let sol = InverseSolution {
        u: u.into(),
        current,
        report: SolveReport {
            iterations: out.iterations,
            history: out.history,
            primal,
            dual,
            gap: primal - dual,
            converged: out.converged,
            lambda: None,
            perfect_edges: sigma.perfect_edges(),
            relabeled,
        },
        sigma,
    };
    if sol.report.converged {
        Ok(sol)
    } else {
        Err(InverseError::NotConverged(Box::new(sol)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::gradient;

    fn path3() -> Graph {
        Graph::new(3, [(0, 1), (1, 2)], vec![0, 2]).unwrap()
    }

    #[test]
    fn lift_examples() {
        let g = path3();
        assert_eq!(&*lift_dirichlet(&g, &DirichletData(vec![1.0, 0.0])).unwrap(), &[1.0, 0.0, 0.0]);
        assert_eq!(&*lift_dirichlet(&g, &DirichletData(vec![0.0, 0.0])).unwrap(), &[0.0; 3]);
    }

    #[test]
    fn u_step_examples() {
        let g = path3();
        let zero = EdgeFunction::<f64>::zeros(&g, EdgeKind::Antisymmetric);
        let u = step_u_dirichlet(&g, &zero, &zero).unwrap();
        assert_eq!(&*u, &[0.0; 3]);
        let b = EdgeFunction::antisymmetric(&g, vec![0.7, -0.2]).unwrap();
        assert!(step_u_dirichlet(&g, &b, &b).unwrap().iter().all(|&x| x == 0.0));
        // b_12 = 1: (div b)_2 = (b_12 − b_21) + (b_32 − b_23) = 2, so 2u₂ = 1
        let b = EdgeFunction::antisymmetric(&g, vec![1.0, 0.0]).unwrap();
        let u = step_u_dirichlet(&g, &b, &zero).unwrap();
        assert!((u[1] - 0.5).abs() < 1e-15);
        // brute-force minimizer of Σ_ordered (b + Du − d)² over u₂
        let obj = |t: f64| 2.0 * (1.0 - t).powi(2) + 2.0 * t * t;
        assert!(obj(u[1]) <= obj(u[1] + 1e-4) && obj(u[1]) <= obj(u[1] - 1e-4));
    }

    #[test]
    fn path_example() {
        let g = path3();
        let a = MeasurementMatrix::new(&g, vec![0.5_f64, 0.5]).unwrap();
        let sol = solve_inverse_dirichlet(&g, &DirichletData(vec![1.0, 0.0]), &a, &AdmmConfig::with_tol(1e-10)).unwrap();
        assert!((sol.current.values()[0] - 0.5).abs() < 1e-8);
        assert!((sol.current.values()[1] - 0.5).abs() < 1e-8);
        assert!(sol.u[1] >= -1e-8 && sol.u[1] <= 1.0 + 1e-8);
        assert!((sol.report.primal - 0.5).abs() < 1e-8);
        assert!(sol.report.gap.abs() < 1e-8);
        assert_eq!(sol.u[0], 1.0);
        assert_eq!(sol.u[2], 0.0);
    }

    #[test]
    fn zero_measurement_stops_at_once() {
        let g = path3();
        let a = MeasurementMatrix::zeros(&g);
        let sol = solve_inverse_dirichlet(&g, &DirichletData(vec![1.0, 0.0]), &a, &AdmmConfig::default()).unwrap();
        assert_eq!(sol.report.iterations, 1);
        assert!(sol.current.values().iter().all(|&x| x == 0.0));
        assert_eq!(sol.report.primal, 0.0);
    }

    #[test]
    fn iteration_cap_returns_partial_state() {
        let g = path3();
        let a = MeasurementMatrix::new(&g, vec![0.5_f64, 0.5]).unwrap();
        let cfg = AdmmConfig { max_iter: 1, tol: 1e-14, ..AdmmConfig::default() };
        let err = solve_inverse_dirichlet(&g, &DirichletData(vec![1.0, 0.0]), &a, &cfg).unwrap_err();
        let partial = err.partial().unwrap();
        assert_eq!(partial.report.iterations, 1);
        assert!(!partial.report.converged);
    }

    #[test]
    fn recovers_conductivity_of_a_square_with_diagonal() {
        use crate::forward::{current_from_potential, solve_dirichlet_forward, Conductivity};
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3), (0, 3), (1, 3)], vec![0, 2]).unwrap();
        let s = Conductivity::finite(&g, vec![1.0_f64, 2.0, 0.5, 1.5, 0.8]).unwrap();
        let f = DirichletData(vec![1.0, 0.0]);
        let v = solve_dirichlet_forward(&g, &s, &f).unwrap();
        let j = current_from_potential(&g, &s, &v).unwrap();
        let sol = solve_inverse_dirichlet(&g, &f, &j.magnitude(), &AdmmConfig::with_tol(1e-10)).unwrap();
        assert!(sol.current.relative_error(&j) < 1e-7);
        let du = gradient(&g, &sol.u).unwrap();
        for (x, y) in du.fwd().iter().zip(sol.current.values()) {
            assert!(x * y >= -1e-9);
        }
    }
}
