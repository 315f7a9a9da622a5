//! Recovery of potentials, currents and conductivities from current magnitudes by
//! weighted l¹ least-gradient minimization, solved with alternating split Bregman.
//!
//! Edge functions are kept per undirected edge `e = (i, j)`, `i < j`, storing the
//! antisymmetric value `x_ij`. Every sum over ordered pairs is therefore twice the
//! per-edge sum, which is why the shrink threshold stays `a / (2α)`.

mod dirichlet;
mod neumann;
mod relabel;

pub use dirichlet::{lift_dirichlet, solve_inverse_dirichlet, step_u_dirichlet};
pub use neumann::{build_lift_neumann, rescale_to_unit_flux, solve_inverse_neumann, step_u_neumann, NeumannLift};

use crate::error::{Error, Result};
use crate::forward::{conductivity_from_pair, Conductivity};
use crate::graph::{Current, EdgeFunction, EdgeKind, Graph, MeasurementMatrix, VertexFunction};
use crate::scalar::{norm2, norm_inf, Scalar};

/// When the iteration counts as converged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StopRule {
    /// The current `J = 2αb` certifies optimality to relative accuracy `tol`: the
    /// duality gap is below `tol · I(u)` and the flux imbalance (interior vertices,
    /// plus the misfit to `λ g` in the Neumann case) is below `tol · ‖a‖_F`.
    #[default]
    Certificate,
    /// Relative successive change of `u` below `tol` and split residual
    /// `‖Du − d‖_F < tol · max(1, ‖a‖_F)`. In the Neumann case `λ` must also agree
    /// with the boundary-flux fit to within `10 tol`.
    Change,
}

/// Penalty, stopping tolerance, iteration cap and starting point.
#[derive(Debug, Clone)]
pub struct AdmmConfig<T> {
    pub alpha: T,
    pub tol: T,
    pub max_iter: usize,
    pub stop: StopRule,
    /// Initial Bregman variable (antisymmetric); zero when absent.
    pub b0: Option<EdgeFunction<T>>,
    /// Initial split variable (antisymmetric); zero when absent.
    pub d0: Option<EdgeFunction<T>>,
    /// Try to replace perfect conductors by finite ones via a monotone relabeling.
    pub relabel: bool,
}

impl<T: Scalar> Default for AdmmConfig<T> {
    fn default() -> Self {
        AdmmConfig { alpha: T::one(), tol: T::lit(1e-6), max_iter: 100_000, stop: StopRule::Certificate, b0: None, d0: None, relabel: false }
    }
}

impl<T: Scalar> AdmmConfig<T> {
    pub fn with_tol(tol: T) -> Self {
        AdmmConfig { tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero()) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.tol > T::zero()) || !self.tol.is_finite() {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    fn start(&self, g: &Graph) -> Result<(Vec<T>, Vec<T>)> {
        let pick = |x: &Option<EdgeFunction<T>>| -> Result<Vec<T>> {
            match x {
                None => Ok(vec![T::zero(); g.edge_count()]),
                Some(f) => {
                    g.check_edge_len(f.fwd().len())?;
                    if f.kind() != EdgeKind::Antisymmetric {
                        return Err(Error::WrongKind("antisymmetric"));
                    }
                    Ok(f.fwd().to_vec())
                }
            }
        };
        Ok((pick(&self.b0)?, pick(&self.d0)?))
    }
}

/// Iteration trace and optimality certificate of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    pub iterations: usize,
    /// Relative successive change of the potential, one entry per iteration.
    pub history: Vec<T>,
    /// Energy `I(u)` of the returned potential.
    pub primal: T,
    /// `Σ_{∂V} f_i J_i` (Dirichlet) or the boundary-flux fit of `λ` (Neumann).
    pub dual: T,
    pub gap: T,
    pub converged: bool,
    /// Scale of the recovered Neumann data; `None` for Dirichlet solves.
    pub lambda: Option<T>,
    /// Edges reported as perfect conductors in `sigma`.
    pub perfect_edges: Vec<usize>,
    /// Whether the monotone relabeling replaced the potential.
    pub relabeled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseSolution<T> {
    pub u: VertexFunction<T>,
    pub current: Current<T>,
    pub sigma: Conductivity<T>,
    pub report: SolveReport<T>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InverseError<T: Scalar> {
    /// Iteration cap reached; the partial solution is attached.
    #[error("no convergence after {} iterations", .0.report.iterations)]
    NotConverged(Box<InverseSolution<T>>),
    #[error(transparent)]
    Core(#[from] Error),
}

impl<T: Scalar> InverseError<T> {
    pub fn partial(&self) -> Option<&InverseSolution<T>> {
        match self {
            InverseError::NotConverged(s) => Some(s),
            InverseError::Core(_) => None,
        }
    }
}

/// `sign(w) · max(|w| − t, 0)`.
#[inline]
pub fn shrink_scalar<T: Scalar>(w: T, t: T) -> T {
    let m = w.abs() - t;
    if m > T::zero() {
        m.copysign(w)
    } else {
        T::zero()
    }
}

/// Split-variable update: `d = shrink(w, a/(2α)) − lift` edgewise.
pub fn shrink_d<T: Scalar>(
    g: &Graph,
    w: &EdgeFunction<T>,
    a: &MeasurementMatrix<T>,
    alpha: T,
    lift: &EdgeFunction<T>,
) -> Result<EdgeFunction<T>> {
    g.check_edge_len(w.fwd().len())?;
    g.check_edge_len(a.values().len())?;
    g.check_edge_len(lift.fwd().len())?;
    if w.kind() != EdgeKind::Antisymmetric || lift.kind() != EdgeKind::Antisymmetric {
        return Err(Error::WrongKind("antisymmetric"));
    }
    let two_alpha = alpha + alpha;
    let vals = w
        .fwd()
        .iter()
        .zip(a.values())
        .zip(lift.fwd())
        .map(|((&w, &a), &l)| shrink_scalar(w, a / two_alpha) - l)
        .collect();
    EdgeFunction::antisymmetric(g, vals)
}

/// `rhs_i = ½[(div b)_i − (div d)_i] = −Σ_j (b_ij − d_ij)`.
pub(crate) fn half_div_difference<T: Scalar>(g: &Graph, b: &[T], d: &[T]) -> Vec<T> {
    let mut rhs = vec![T::zero(); g.n()];
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        let x = b[e] - d[e];
        rhs[i] -= x;
        rhs[j] += x;
    }
    rhs
}

pub(crate) fn edge_gradient<T: Scalar>(g: &Graph, u: &[T]) -> Vec<T> {
    g.edges().iter().map(|&(i, j)| u[i] - u[j]).collect()
}

/// Frobenius norm of the full `n × n` antisymmetric or symmetric matrix.
pub(crate) fn full_frobenius<T: Scalar>(per_edge: &[T]) -> T {
    norm2(per_edge) * T::lit(std::f64::consts::SQRT_2)
}

pub(crate) struct Outcome<T> {
    pub u: Vec<T>,
    pub b: Vec<T>,
    pub iterations: usize,
    pub history: Vec<T>,
    pub converged: bool,
}

/// Pieces of the optimality certificate for the current iterate.
pub(crate) struct Certificate<T> {
    pub primal: T,
    pub dual: T,
    /// Norm of the flux imbalance of `J`.
    pub imbalance: T,
}

impl<T: Scalar> Certificate<T> {
    pub fn holds(&self, tol: T, a_frobenius: T) -> bool {
        (self.primal - self.dual).abs() <= tol * self.primal.abs() && self.imbalance <= tol * a_frobenius
    }
}

/// Net outflow `Σ_j J_ij` of `J = 2αb` at every vertex.
pub(crate) fn current_flux<T: Scalar>(g: &Graph, b: &[T], two_alpha: T) -> Vec<T> {
    let mut flux = vec![T::zero(); g.n()];
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        flux[i] += b[e] * two_alpha;
        flux[j] -= b[e] * two_alpha;
    }
    flux
}

pub(crate) fn interior_imbalance2<T: Scalar>(g: &Graph, flux: &[T]) -> T {
    g.interior().iter().map(|&v| flux[v] * flux[v]).sum()
}

/// The shared split Bregman loop. `ustep` maps `(b, d)` to the next potential in the
/// shifted space. Under [`StopRule::Certificate`] `check(u, b)` alone decides; under
/// [`StopRule::Change`] it may veto a stop that the change and residual tests allow.
pub(crate) fn run_admm<T: Scalar>(
    g: &Graph,
    a: &[T],
    lift: &[T],
    cfg: &AdmmConfig<T>,
    mut ustep: impl FnMut(&[T], &[T]) -> Result<Vec<T>>,
    mut check: impl FnMut(&[T], &[T]) -> bool,
) -> Result<Outcome<T>> {
    let (mut b, mut d) = cfg.start(g)?;
    let thresh: Vec<T> = a.iter().map(|&x| x / (cfg.alpha + cfg.alpha)).collect();
    let a_scale = full_frobenius(a).max(T::one());
    let mut u = vec![T::zero(); g.n()];
    let mut history = Vec::new();
    let mut converged = false;
    while history.len() < cfg.max_iter {
        let u_new = ustep(&b, &d)?;
        let mut res2 = T::zero();
        for (e, &(i, j)) in g.edges().iter().enumerate() {
            let du = u_new[i] - u_new[j];
            let w = du + lift[e] + b[e];
            let dn = shrink_scalar(w, thresh[e]) - lift[e];
            let r = du - dn;
            b[e] += r;
            d[e] = dn;
            res2 += r * r;
        }
        let mut diff2 = T::zero();
        for (x, y) in u_new.iter().zip(&u) {
            diff2 += (*x - *y) * (*x - *y);
        }
        let change = diff2.sqrt() / norm2(&u).max(T::one());
        history.push(change);
        u = u_new;
        let done = match cfg.stop {
            StopRule::Certificate => check(&u, &b),
            StopRule::Change => {
                let residual = (res2 + res2).sqrt();
                change < cfg.tol && residual < cfg.tol * a_scale && check(&u, &b)
            }
        };
        if done {
            converged = true;
            break;
        }
    }
    Ok(Outcome { u, b, iterations: history.len(), history, converged })
}

/// Threshold below which a potential difference counts as zero.
pub(crate) fn flat_tolerance<T: Scalar>(u: &[T], tol: T) -> T {
    tol * norm_inf(u).max(T::one())
}

/// Builds the conductivity for a finished solve, running the relabel pass if asked.
pub(crate) fn extract_sigma<T: Scalar>(
    g: &Graph,
    u: &mut Vec<T>,
    current: &Current<T>,
    tol: T,
    relabel_with: Option<relabel::Pin<'_, T>>,
) -> Result<(Conductivity<T>, bool)> {
    let flat = flat_tolerance(u, tol);
    let sigma = match conductivity_from_pair(g, u, current, flat) { Ok(s) => s, Err(_) => return Ok((Conductivity::uniform(g, T::zero()), false)) };
    if sigma.is_finite() {
        return Ok((sigma, false));
    }
    if let Some(pin) = relabel_with {
        if let Some(v) = relabel::relabel(g, u, current.values(), flat, pin) {
            let tiny = T::epsilon() * norm_inf(&v).max(T::one());
            if let Ok(s) = conductivity_from_pair(g, &v, current, tiny) {
                if s.is_finite() {
                    *u = v;
                    return Ok((s, true));
                }
            }
        }
    }
    Ok((sigma, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shrink_examples() {
        assert_eq!(shrink_scalar(1.0, 0.5), 0.5);
        assert_eq!(shrink_scalar(-1.0, 0.5), -0.5);
        assert_eq!(shrink_scalar(0.3, 0.5), 0.0);
        assert_eq!(shrink_scalar(0.0, 0.0), 0.0);
    }

    #[test]
    fn shrink_d_formula() {
        let g = Graph::new(2, [(0, 1)], vec![0, 1]).unwrap();
        let w = EdgeFunction::antisymmetric(&g, vec![1.0]).unwrap();
        let a = MeasurementMatrix::new(&g, vec![1.0]).unwrap();
        let zero = EdgeFunction::antisymmetric(&g, vec![0.0]).unwrap();
        let d = shrink_d(&g, &w, &a, 1.0, &zero).unwrap();
        assert_eq!(d.fwd(), &[0.5]);
        let small = EdgeFunction::antisymmetric(&g, vec![0.4]).unwrap();
        assert_eq!(shrink_d(&g, &small, &a, 1.0, &zero).unwrap().fwd(), &[0.0]);
    }

    #[test]
    fn shrink_is_the_scalar_prox() {
        // argmin_d a|d + l| + α(w − l − d)² by grid search, w already includes the lift
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let w: f64 = rng.random_range(-2.0..2.0);
            let a: f64 = rng.random_range(0.0..2.0);
            let alpha: f64 = rng.random_range(0.1..3.0);
            let l: f64 = rng.random_range(-1.0..1.0);
            let obj = |d: f64| a * (d + l).abs() + alpha * (w - l - d).powi(2);
            let mut best = (f64::INFINITY, 0.0);
            let (lo, hi) = (-5.0, 5.0);
            let mut step = 1e-3;
            let mut center = 0.0;
            let mut range = (lo, hi);
            for _ in 0..3 {
                let mut x = range.0;
                while x <= range.1 {
                    let v = obj(x);
                    if v < best.0 {
                        best = (v, x);
                    }
                    x += step;
                }
                center = best.1;
                range = (center - 10.0 * step, center + 10.0 * step);
                step /= 100.0;
            }
            let d = shrink_scalar(w, a / (2.0 * alpha)) - l;
            assert!((d - center).abs() < 1e-6, "w={w} a={a} alpha={alpha} l={l}: {d} vs {center}");
        }
    }

    #[test]
    fn config_validation() {
        let mut c = AdmmConfig::<f64>::default();
        assert!(c.validate().is_ok());
        c.alpha = 0.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = AdmmConfig::<f64> { max_iter: 0, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
