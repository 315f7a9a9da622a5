#![allow(dead_code)]

use lgcurrent::rng::substream;
use lgcurrent::{Conductivity, Graph};
use rand::seq::SliceRandom;
use rand::Rng;

/// Connected graph: a random spanning tree plus each remaining pair with probability `p`.
pub fn random_graph(n: usize, p: f64, boundary: usize, seed: u64) -> Graph {
    let mut rng = substream(seed, "test-graph");
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut edges = std::collections::BTreeSet::new();
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        let (i, j) = (order[k].min(parent), order[k].max(parent));
        edges.insert((i, j));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.insert((i, j));
            }
        }
    }
    let mut b: Vec<usize> = (0..n).collect();
    b.shuffle(&mut rng);
    b.truncate(boundary);
    b.sort_unstable();
    Graph::new(n, edges, b).unwrap()
}

/// Conductivities uniform on `(lo, lo + 1)`.
pub fn random_sigma(g: &Graph, lo: f64, seed: u64) -> Conductivity<f64> {
    let mut rng = substream(seed, "test-sigma");
    Conductivity::finite(g, (0..g.edge_count()).map(|_| lo + rng.random::<f64>()).collect()).unwrap()
}

pub fn random_values(len: usize, seed: u64, name: &str) -> Vec<f64> {
    let mut rng = substream(seed, name);
    (0..len).map(|_| rng.random::<f64>()).collect()
}

/// Zero-sum, nonzero boundary currents.
pub fn random_injection(len: usize, seed: u64) -> Vec<f64> {
    let mut v = random_values(len, seed, "test-injection");
    let mean = v.iter().sum::<f64>() / len as f64;
    for x in &mut v {
        *x -= mean;
    }
    v
}
