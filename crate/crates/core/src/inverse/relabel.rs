//! Monotone relabeling of a minimizer to remove perfect conductors.
//!
//! A current-carrying edge whose endpoints sit at the same level forces `σ = ∞`.
//! Any potential that keeps the sign of every current-carrying difference (and the
//! boundary data) is another minimizer, so flat clusters are snapped to one level and
//! then tilted along the direction of the current by a small multiple of a height
//! function solving `h_i ≥ h_j + 1` for every flat edge with current `i → j`.

use crate::scalar::Scalar;

pub(crate) enum Pin<'a, T> {
    /// Boundary values must not move.
    Dirichlet,
    /// Renormalize so that `Σ u_i h_i = 1` for the given vertex data `h`.
    Neumann(&'a [T]),
}

pub(crate) fn relabel<T: Scalar>(
    g: &crate::graph::Graph,
    u: &[T],
    j: &[T],
    flat: T,
    pin: Pin<'_, T>,
) -> Option<Vec<T>> {
    let n = g.n();
    let carrying = |e: usize| j[e].abs() > flat;
    let flat_edges: Vec<usize> = (0..g.edge_count())
        .filter(|&e| {
            let (p, q) = g.edges()[e];
            carrying(e) && (u[p] - u[q]).abs() <= flat
        })
        .collect();
    if flat_edges.is_empty() {
        return None;
    }
    let mut in_flat = vec![false; g.edge_count()];
    for &e in &flat_edges {
        in_flat[e] = true;
    }
    let pinned = |v: usize| matches!(pin, Pin::Dirichlet) && g.is_boundary(v);

    // Snap each flat cluster to a single level.
    let mut v = u.to_vec();
    let mut touched = vec![false; n];
    for comp in g.components_by(|e| in_flat[e]) {
        if comp.len() < 2 {
            continue;
        }
        let pins: Vec<usize> = comp.iter().copied().filter(|&x| pinned(x)).collect();
        let level = match pins.first() {
            Some(&p) => {
                if pins.iter().any(|&q| u[q] != u[p]) {
                    return None;
                }
                u[p]
            }
            None => comp.iter().map(|&x| u[x]).sum::<T>() / T::lit(comp.len() as f64),
        };
        for &x in &comp {
            v[x] = level;
            touched[x] = true;
        }
    }

    // Difference constraints h_dst − h_src ≤ w, solved by Bellman–Ford; node n is the
    // zero reference that pinned vertices are tied to.
    let mut cons: Vec<(usize, usize, i64)> = Vec::new();
    for &e in &flat_edges {
        let (p, q) = g.edges()[e];
        let (hi, lo) = if j[e] > T::zero() { (p, q) } else { (q, p) };
        cons.push((hi, lo, -1));
    }
    for x in 0..n {
        if touched[x] && pinned(x) {
            cons.push((n, x, 0));
            cons.push((x, n, 0));
        }
    }
    let mut dist = vec![0i64; n + 1];
    let mut settled = false;
    for _ in 0..=n + 1 {
        let mut changed = false;
        for &(src, dst, w) in &cons {
            if dist[src] + w < dist[dst] {
                dist[dst] = dist[src] + w;
                changed = true;
            }
        }
        if !changed {
            settled = true;
            break;
        }
    }
    if !settled {
        // a directed cycle of flat currents, or a flat path between pinned vertices
        return None;
    }
    let h: Vec<i64> = (0..n).map(|x| dist[x] - dist[n]).collect();
    let span = h.iter().zip(&touched).filter(|(_, &t)| t).map(|(x, _)| x.abs()).max().unwrap_or(0);
    let eps = flat / T::lit(2.0 * (span as f64 + 1.0));
    for x in 0..n {
        if touched[x] {
            v[x] += eps * T::lit(h[x] as f64);
        }
    }

    match pin {
        Pin::Dirichlet => {
            if g.boundary().iter().any(|&b| v[b] != u[b]) {
                return None;
            }
        }
        Pin::Neumann(data) => {
            let s: T = v.iter().zip(data).map(|(&x, &y)| x * y).sum();
            if !(s > T::zero()) {
                return None;
            }
            for x in v.iter_mut() {
                *x /= s;
            }
        }
    }
    for (e, &(p, q)) in g.edges().iter().enumerate() {
        if carrying(e) && !(j[e] * (v[p] - v[q]) > T::zero()) {
            return None;
        }
    }
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    #[test]
    fn splits_a_flat_chain_along_the_current() {
        // 1 → 2 → 3 → 4, boundary {1, 4}; vertices 2 and 3 coincide
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3)], vec![0, 3]).unwrap();
        let u = [1.0_f64, 0.5, 0.5, 0.0];
        let j = [1.0, 1.0, 1.0];
        let v = relabel(&g, &u, &j, 1e-9, Pin::Dirichlet).unwrap();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[3], 0.0);
        assert!(v[1] > v[2]);
    }

    #[test]
    fn refuses_flat_path_between_equal_boundary_values() {
        let g = Graph::new(3, [(0, 1), (1, 2)], vec![0, 2]).unwrap();
        let u = [0.0_f64; 3];
        let j = [1.0, 1.0];
        assert!(relabel(&g, &u, &j, 1e-9, Pin::Dirichlet).is_none());
    }

    #[test]
    fn neumann_renormalizes() {
        let g = Graph::new(3, [(0, 1), (1, 2)], vec![0, 2]).unwrap();
        let u = [0.5_f64, 0.5, -0.5];
        let j = [1.0, 1.0];
        let h = [1.0, 0.0, -1.0];
        let v = relabel(&g, &u, &j, 1e-6, Pin::Neumann(&h)).unwrap();
        assert!(v[0] > v[1] && v[1] > v[2]);
        assert!((v[0] - v[2] - 1.0).abs() < 1e-12);
    }
}
