//! Algorithm for prescribed boundary currents, recovering the data only up to scale.

use super::relabel::Pin;
use super::{
    current_flux, edge_gradient, extract_sigma, full_frobenius, half_div_difference, interior_imbalance2, run_admm,
    AdmmConfig, Certificate, InverseError, InverseSolution, SolveReport, StopRule,
};
use crate::error::{Error, Result};
use crate::forward::NeumannData;
use crate::graph::{energy, Current, EdgeFunction, EdgeKind, Graph, MeasurementMatrix, VertexFunction};
use crate::linalg::{LaplacianSystem, SystemRole};
use crate::scalar::Scalar;

/// Fixed vectors of the Neumann iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct NeumannLift<T> {
    /// `h / ‖g‖²` with `h = g` on the boundary, so `Σ_{∂V} (v_g)_i g_i = 1`.
    pub v_g: VertexFunction<T>,
    /// Unit-Laplacian potential with boundary flux `g`, grounded at vertex 1.
    pub z: VertexFunction<T>,
    /// `Σ_{∂V} z_i g_i`, positive.
    pub denom: T,
}

pub fn build_lift_neumann<T: Scalar>(g: &Graph, data: &NeumannData<T>) -> Result<NeumannLift<T>> {
    data.check(g)?;
    let sys = LaplacianSystem::new(g, &vec![T::one(); g.edge_count()], SystemRole::Grounded)?;
    lift_with(g, data, &sys)
}

fn lift_with<T: Scalar>(g: &Graph, data: &NeumannData<T>, sys: &LaplacianSystem<T>) -> Result<NeumannLift<T>> {
    let h = data.to_vertex(g);
    let norm2: T = data.values().iter().map(|&x| x * x).sum();
    let v_g: Vec<T> = h.iter().map(|&x| x / norm2).collect();
    let z = sys.solve(&h, &[T::zero()])?;
    let denom = boundary_pairing(g, &z, data);
    if !(denom > T::zero()) {
        return Err(Error::Singular(format!("nonpositive pairing {denom} of z with the data")));
    }
    Ok(NeumannLift { v_g: v_g.into(), z: z.into(), denom })
}

/// `Σ_{∂V} u_i g_i`.
fn boundary_pairing<T: Scalar>(g: &Graph, u: &[T], data: &NeumannData<T>) -> T {
    g.boundary().iter().zip(data.values()).map(|(&v, &x)| u[v] * x).sum()
}

fn step_with<T: Scalar>(
    g: &Graph,
    sys: &LaplacianSystem<T>,
    lift: &NeumannLift<T>,
    data: &NeumannData<T>,
    b: &[T],
    d: &[T],
) -> Result<Vec<T>> {
    let mut u = sys.solve(&half_div_difference(g, b, d), &[T::zero()])?;
    let beta = -boundary_pairing(g, &u, data) / lift.denom;
    for (x, &z) in u.iter_mut().zip(lift.z.iter()) {
        *x += beta * z;
    }
    Ok(u)
}

/// One potential update: grounded unit-Laplacian solve followed by the `β z`
/// correction that restores `Σ_{∂V} v_i g_i = 0`.
pub fn step_u_neumann<T: Scalar>(
    g: &Graph,
    b: &EdgeFunction<T>,
    d: &EdgeFunction<T>,
    lift: &NeumannLift<T>,
    data: &NeumannData<T>,
) -> Result<VertexFunction<T>> {
    for x in [b, d] {
        g.check_edge_len(x.fwd().len())?;
        if x.kind() != EdgeKind::Antisymmetric {
            return Err(Error::WrongKind("antisymmetric"));
        }
    }
    data.check(g)?;
    let sys = LaplacianSystem::new(g, &vec![T::one(); g.edge_count()], SystemRole::Grounded)?;
    Ok(step_with(g, &sys, lift, data, b.fwd(), d.fwd())?.into())
}

/// `λ = I(v + v_g)` against the least-squares fit `λ_fit` of the boundary flux of
/// `J = 2αb` to `g`; the imbalance covers interior flux and the boundary misfit to
/// `λ_fit g`.
fn certificate<T: Scalar>(
    g: &Graph,
    a: &[T],
    data: &NeumannData<T>,
    v_g: &[T],
    v: &[T],
    b: &[T],
    two_alpha: T,
) -> Certificate<T> {
    let mut primal = T::zero();
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        primal += a[e] * ((v[i] + v_g[i]) - (v[j] + v_g[j])).abs();
    }
    let flux = current_flux(g, b, two_alpha);
    let g2: T = data.values().iter().map(|&x| x * x).sum();
    let dual = boundary_pairing(g, &flux, data) / g2;
    let misfit2: T = g.boundary().iter().zip(data.values()).map(|(&k, &x)| (flux[k] - dual * x).powi(2)).sum();
    Certificate { primal, dual, imbalance: interior_imbalance2(g, &flux).sqrt() + misfit2.sqrt() }
}

/// Minimizes `I(u)` over `Σ_{∂V} u_i g_i = 1`. The minimum `λ` is the scale for which
/// `(λ g, a)` is consistent; the recovered current has boundary flux `λ g`.
pub fn solve_inverse_neumann<T: Scalar>(
    g: &Graph,
    data: &NeumannData<T>,
    a: &MeasurementMatrix<T>,
    cfg: &AdmmConfig<T>,
) -> Result<InverseSolution<T>, InverseError<T>> {
    cfg.validate()?;
    g.check_edge_len(a.values().len())?;
    data.check(g)?;
    let sys = LaplacianSystem::new(g, &vec![T::one(); g.edge_count()], SystemRole::Grounded)?;
    let lift = lift_with(g, data, &sys)?;
    let lift_e = edge_gradient(g, &lift.v_g);
    let ten_tol = T::lit(10.0) * cfg.tol;
    let two_alpha = cfg.alpha + cfg.alpha;
    let a_frobenius = full_frobenius(a.values());
    let out = run_admm(
        g,
        a.values(),
        &lift_e,
        cfg,
        |b, d| step_with(g, &sys, &lift, data, b, d),
        |v, b| {
            let c = certificate(g, a.values(), data, &lift.v_g, v, b, two_alpha);
            match cfg.stop {
                StopRule::Certificate => c.holds(cfg.tol, a_frobenius),
                StopRule::Change => (c.primal - c.dual).abs() <= ten_tol * c.primal.max(T::one()),
            }
        },
    )?;

    let Certificate { primal: lambda, dual: fit, .. } =
        certificate(g, a.values(), data, &lift.v_g, &out.u, &out.b, two_alpha);
    if !(lambda > T::zero()) {
        return Err(Error::DegenerateScale(lambda.as_f64()).into());
    }
    let mut u: Vec<T> = out.u.iter().zip(lift.v_g.iter()).map(|(&x, &y)| x + y).collect();
    let current = Current::new(g, out.b.iter().map(|&x| x * two_alpha).collect())?;
    let h = data.to_vertex(g);
    let pin = cfg.relabel.then_some(Pin::Neumann(&h));
    let (sigma, relabeled) = extract_sigma(g, &mut u, &current, cfg.tol, pin)?;
    let primal = if relabeled { energy(g, a, &u)? } else { lambda };
    let sol = InverseSolution {
        u: u.into(),
        current,
        report: SolveReport {
            iterations: out.iterations,
            history: out.history,
            primal,
            dual: fit,
            gap: primal - fit,
            converged: out.converged,
            lambda: Some(primal),
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

/// Divides current and conductivity by `λ` so the boundary flux is `g` itself.
pub fn rescale_to_unit_flux<T: Scalar>(sol: &InverseSolution<T>) -> Result<InverseSolution<T>> {
    let lambda = sol
        .report
        .lambda
        .ok_or_else(|| Error::Config("rescaling needs a Neumann solution".into()))?;
    if !(lambda > T::zero()) {
        return Err(Error::DegenerateScale(lambda.as_f64()));
    }
    let inv = T::one() / lambda;
    Ok(InverseSolution {
        u: sol.u.clone(),
        current: sol.current.scaled(inv),
        sigma: sol.sigma.scaled(inv),
        report: sol.report.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::vertex_flux;

    fn path3() -> Graph {
        Graph::new(3, [(0, 1), (1, 2)], vec![0, 2]).unwrap()
    }

    fn unit() -> NeumannData<f64> {
        NeumannData::new(vec![1.0, -1.0]).unwrap()
    }

    #[test]
    fn lift_on_path() {
        let g = path3();
        let l = build_lift_neumann(&g, &unit()).unwrap();
        assert_eq!(&*l.v_g, &[0.5, 0.0, -0.5]);
        for (x, y) in l.z.iter().zip([0.0, -1.0, -2.0]) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!((l.denom - 2.0).abs() < 1e-14);

        let l3 = build_lift_neumann(&g, &NeumannData::new(vec![3.0, -3.0]).unwrap()).unwrap();
        for k in 0..3 {
            assert!((l3.z[k] - 3.0 * l.z[k]).abs() < 1e-13);
            assert!((l3.v_g[k] - l.v_g[k] / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn u_step_lands_in_m0() {
        let g = path3();
        let data = unit();
        let l = build_lift_neumann(&g, &data).unwrap();
        let zero = EdgeFunction::<f64>::zeros(&g, EdgeKind::Antisymmetric);
        assert_eq!(&*step_u_neumann(&g, &zero, &zero, &l, &data).unwrap(), &[0.0; 3]);
        let b = EdgeFunction::antisymmetric(&g, vec![1.0, 0.0]).unwrap();
        let v = step_u_neumann(&g, &b, &zero, &l, &data).unwrap();
        assert!((v[0] - v[2]).abs() < 1e-12);
        // rhs = −Σ_j b_ij = (−1, 1, 0); grounded u = (0, 1, 1), β = 1/2, v = u + z/2
        for (x, y) in v.iter().zip([0.0, 0.5, 0.0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn path_scale_and_rescale() {
        let g = path3();
        let a = MeasurementMatrix::new(&g, vec![1.0, 1.0]).unwrap();
        let sol = solve_inverse_neumann(&g, &unit(), &a, &AdmmConfig::with_tol(1e-10)).unwrap();
        let lambda = sol.report.lambda.unwrap();
        // min |u₁ − u₂| + |u₂ − u₃| subject to u₁ − u₃ = 1 is 1 (any u₂ in between); the data
        // come from unit conductances with unit injected current, so the scale is 1
        assert!((lambda - 1.0).abs() < 1e-8, "{lambda}");
        let flux = vertex_flux(&g, &sol.current);
        assert!((flux[0] - lambda).abs() < 1e-8);
        let r = rescale_to_unit_flux(&sol).unwrap();
        let flux = vertex_flux(&g, &r.current);
        for (x, y) in flux.iter().zip([1.0, 0.0, -1.0]) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_measurement_is_degenerate() {
        let g = path3();
        let r = solve_inverse_neumann(&g, &unit(), &MeasurementMatrix::zeros(&g), &AdmmConfig::default());
        assert!(matches!(r, Err(InverseError::Core(Error::DegenerateScale(_)))));
    }
}
