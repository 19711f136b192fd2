//! Synthetic latent configurations and networks sampled from them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{Action, CumulativeGraph, Graph, WeightedGraph};
use crate::model::{check_cuts, cumulative_level_probability, loglik, sigmoid, LatentState, Network};

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Two-block stochastic block model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbmSpec {
    pub block_sizes: [usize; 2],
    pub p_in: f64,
    pub p_out: f64,
    pub seed: u64,
}

impl Default for SbmSpec {
    fn default() -> Self {
        Self { block_sizes: [100, 100], p_in: 0.5, p_out: 0.2, seed: 0 }
    }
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_out > 0.0 && self.p_out <= self.p_in && self.p_in < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < p_out <= p_in < 1, got p_in = {}, p_out = {}",
                self.p_in, self.p_out
            )));
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.block_sizes.iter().sum()
    }
}

/// Gaussian clusters with centres spaced `separation` apart along the first axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianClusterSpec {
    pub n_clusters: usize,
    pub sigma: f64,
    pub separation: f64,
    pub n_nodes: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for GaussianClusterSpec {
    fn default() -> Self {
        Self { n_clusters: 2, sigma: 1.0 / 12.0, separation: 5.0 / 6.0, n_nodes: 100, dim: 2, seed: 0 }
    }
}

impl GaussianClusterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !(self.separation >= 0.0) || self.n_clusters == 0 || self.dim == 0 {
            return Err(Error::Config("need sigma > 0, separation >= 0, at least one cluster and dimension".into()));
        }
        Ok(())
    }
}

/// Block distance at which two coincident blocks with zero parameters have
/// cross-block tie probability `p_out`: the solution of
/// `1 / (1 + exp(d^2)) = p_out`.
pub fn expected_sbm_distance(p_out: f64) -> Result<f64> {
    if !(p_out > 0.0 && p_out <= 0.5) {
        return Err(Error::Config(format!("p_out must lie in (0, 0.5] for zero-parameter blocks, got {p_out}")));
    }
    Ok(((1.0 - p_out) / p_out).ln().max(0.0).sqrt())
}

/// Block distance for general `p_in`, with `alpha = beta = logit(p_in) / 2`.
pub fn sbm_distance(p_in: f64, p_out: f64) -> Result<f64> {
    SbmSpec { p_in, p_out, ..Default::default() }.validate()?;
    Ok((logit(p_in) - logit(p_out)).max(0.0).sqrt())
}

/// Either kind of synthetic latent configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatentSpec {
    Sbm(SbmSpec),
    Gaussian(GaussianClusterSpec),
}

/// Places nodes for `spec`; returns a directed per-node state (no cuts) and
/// each node's block or cluster label.
pub fn sample_latent(spec: &LatentSpec, dim: usize) -> Result<(LatentState, Vec<usize>)> {
    match spec {
        LatentSpec::Sbm(sbm) => {
            sbm.validate()?;
            if dim == 0 {
                return Err(Error::Config("dimension must be at least 1".into()));
            }
            let n = sbm.n_nodes();
            let d = sbm_distance(sbm.p_in, sbm.p_out)?;
            let half = logit(sbm.p_in) / 2.0;
            let mut state = LatentState::zeros(n, dim, n, 0);
            state.alpha.fill(half);
            state.beta.fill(half);
            let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= sbm.block_sizes[0])).collect();
            for (i, &label) in labels.iter().enumerate() {
                state.position_mut(i)[0] = label as f64 * d;
            }
            Ok((state, labels))
        }
        LatentSpec::Gaussian(g) => {
            g.validate()?;
            let n = g.n_nodes;
            let mut state = LatentState::zeros(n, g.dim, n, 0);
            let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
            let noise = Normal::new(0.0, g.sigma).map_err(|e| Error::Config(e.to_string()))?;
            let offset = (g.n_clusters as f64 - 1.0) / 2.0;
            let labels: Vec<usize> = (0..n).map(|i| i * g.n_clusters / n.max(1)).collect();
            for (i, &label) in labels.iter().enumerate() {
                let p = state.position_mut(i);
                for x in p.iter_mut() {
                    *x = noise.sample(&mut rng);
                }
                p[0] += (label as f64 - offset) * g.separation;
            }
            Ok((state, labels))
        }
    }
}

/// Which family to sample and its family-specific ingredients.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilySpec {
    Unweighted,
    /// Every node authors `actions_per_author` actions, each with popularity `beta`.
    Cumulative {
        actions_per_author: usize,
        beta: f64,
    },
    /// Ordered logit with the given strictly decreasing cut points.
    Weighted {
        cuts: Vec<f64>,
    },
}

impl FamilySpec {
    pub fn cumulative_default() -> Self {
        FamilySpec::Cumulative { actions_per_author: 3, beta: 0.0 }
    }

    pub fn weighted_default() -> Self {
        FamilySpec::Weighted { cuts: vec![1.0, -1.0] }
    }
}

/// Node ids used for generated networks.
pub fn node_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("n{i}")).collect()
}

/// Samples every ordered pair (or action-adopter pair) independently.
///
/// `state` must be a directed per-node state such as [`sample_latent`]
/// produces. Returns the network and the generating state reshaped for its
/// family (per-action betas, cut points), against which the ground-truth
/// log-likelihood is evaluated.
pub fn sample_network(state: &LatentState, family: &FamilySpec, seed: u64) -> Result<(Network, LatentState)> {
    let n = state.n_nodes();
    if state.beta.len() != n {
        return Err(Error::Shape("sampling needs one beta per node".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Keep tie draws independent of the position draws made from the same seed.
    rng.set_stream(1);
    let ids = node_ids(n);
    match family {
        FamilySpec::Unweighted => {
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    let p = sigmoid(state.alpha[i] + state.beta[j] - state.sq_dist(i, j));
                    if rng.random::<f64>() < p {
                        edges.push((i, j, 1));
                    }
                }
            }
            let truth = LatentState { cuts: Vec::new(), ..state.clone() };
            Ok((Network::Unweighted(Graph::new(ids, edges, true)?), truth))
        }
        FamilySpec::Cumulative { actions_per_author, beta } => {
            let mut actions = Vec::new();
            for j in 0..n {
                for t in 0..*actions_per_author {
                    let adopters = (0..n)
                        .filter(|&i| i != j)
                        .filter(|&i| {
                            let p = sigmoid(state.alpha[i] + beta - state.sq_dist(i, j));
                            rng.random::<f64>() < p
                        })
                        .collect();
                    actions.push(Action { author: j, id: format!("t{t}"), adopters });
                }
            }
            let truth = LatentState { beta: vec![*beta; actions.len()], cuts: Vec::new(), ..state.clone() };
            Ok((Network::Cumulative(CumulativeGraph::new(ids, actions)?), truth))
        }
        FamilySpec::Weighted { cuts } => {
            check_cuts(cuts)?;
            if cuts.is_empty() {
                return Err(Error::Config("weighted sampling needs at least one cut point".into()));
            }
            let levels = cuts.len() as u32 + 1;
            let mut edges = Vec::new();
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    let s = state.alpha[i] + state.beta[j] - state.sq_dist(i, j);
                    let u: f64 = rng.random();
                    let level = (1..levels as usize)
                        .take_while(|&k| u < cumulative_level_probability(cuts, k, s))
                        .last()
                        .unwrap_or(0);
                    if level > 0 {
                        edges.push((i, j, level as u32));
                    }
                }
            }
            let truth = LatentState { cuts: cuts.clone(), ..state.clone() };
            let graph = Graph::new(ids, edges, true)?;
            Ok((Network::Weighted(WeightedGraph::new(graph, levels)?), truth))
        }
    }
}

/// Log-likelihood of a sampled network at its generating configuration.
pub fn ground_truth_loglik(network: &Network, truth: &LatentState) -> Result<f64> {
    loglik(network, truth)
}
