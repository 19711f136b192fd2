//! Random networks and states shared by the integration tests.

#![allow(dead_code)]

use latentforce::graph::Action;
use latentforce::{CumulativeGraph, Family, Graph, LatentState, Network, WeightedGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i}")).collect()
}

/// What kind of random network to build.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkKind {
    pub family: Family,
    pub undirected: bool,
    pub levels: u32,
    pub bipartite: bool,
}

impl NetworkKind {
    pub fn unweighted() -> Self {
        Self { family: Family::Unweighted, undirected: false, levels: 2, bipartite: false }
    }

    pub fn cumulative() -> Self {
        Self { family: Family::Cumulative, ..Self::unweighted() }
    }

    pub fn weighted(levels: u32) -> Self {
        Self { family: Family::Weighted, levels, ..Self::unweighted() }
    }

    pub fn undirected(self) -> Self {
        Self { undirected: true, ..self }
    }

    pub fn bipartite(self) -> Self {
        Self { bipartite: true, ..self }
    }
}

/// Each possible tie is present with probability `density`; weighted ties
/// get a uniformly random non-zero level.
pub fn random_network(kind: NetworkKind, n: usize, density: f64, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind.family {
        Family::Cumulative => {
            let mut actions = Vec::new();
            for author in 0..n {
                for t in 0..rng.random_range(0..=3) {
                    let adopters = (0..n).filter(|&i| i != author && rng.random::<f64>() < density).collect();
                    actions.push(Action { author, id: format!("a{t}"), adopters });
                }
            }
            Network::Cumulative(CumulativeGraph::new(ids(n), actions).unwrap())
        }
        family => {
            let directed = !kind.undirected;
            let max_level = if family == Family::Weighted { kind.levels - 1 } else { 1 };
            let mut edges = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    let pair = if directed { i != j } else { i < j };
                    if pair && rng.random::<f64>() < density {
                        edges.push((i, j, rng.random_range(1..=max_level)));
                    }
                }
            }
            let graph = Graph::new(ids(n), edges, directed).unwrap();
            if family == Family::Unweighted {
                Network::Unweighted(graph)
            } else {
                let w = WeightedGraph::new(graph, kind.levels).unwrap();
                Network::Weighted(if kind.bipartite { w.with_bipartite_roles() } else { w })
            }
        }
    }
}

/// Normal positions (scaled by `spread`), uniform parameters in [-1.5, 1.5]
/// and strictly decreasing cut points at least 0.2 apart.
pub fn random_state(network: &Network, dim: usize, spread: f64, seed: u64) -> LatentState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut state = LatentState::for_network(network, dim);
    for x in &mut state.positions {
        *x = spread * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
    }
    for a in state.alpha.iter_mut().chain(state.beta.iter_mut()) {
        *a = rng.random_range(-1.5..1.5);
    }
    let mut c = rng.random_range(0.0..2.0);
    for cut in &mut state.cuts {
        *cut = c;
        c -= rng.random_range(0.2..1.5);
    }
    state
}

pub fn rel_close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= (rel * b.abs()).max(abs)
}
