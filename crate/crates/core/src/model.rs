//! Latent space model: state container, tie probabilities and log-likelihoods
//! for the unweighted, cumulative and ordinal (ordered logit) families.
//!
//! A directed tie `i -> j` has linear predictor `s = alpha_i + beta_j - d_ij^2`
//! and probability `1 / (1 + exp(-s))`. Undirected graphs use a single
//! parameter per node: `s = alpha_i + alpha_j - d_ij^2`, one Bernoulli per
//! unordered pair. The cumulative family has one `beta` per action, the
//! ordinal family adds shared, strictly decreasing cut points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CumulativeGraph, Graph, WeightedGraph};

/// `1 / (1 + exp(-x))` without overflow for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(x))` without overflow for large `|x|`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(sigmoid(x))`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Unweighted,
    Cumulative,
    Weighted,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Unweighted => "unweighted",
            Family::Cumulative => "cumulative",
            Family::Weighted => "weighted",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unweighted" => Ok(Family::Unweighted),
            "cumulative" => Ok(Family::Cumulative),
            "weighted" => Ok(Family::Weighted),
            other => Err(Error::Config(format!("unknown model family {other:?}"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Gaussian priors centred at zero; turns maximum likelihood into MAP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig {
    pub enabled: bool,
    pub sigma_alpha: f64,
    pub sigma_beta: f64,
    pub sigma_pos: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { enabled: true, sigma_alpha: 10.0, sigma_beta: 10.0, sigma_pos: 10.0 }
    }
}

impl PriorConfig {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled && !(self.sigma_alpha > 0.0 && self.sigma_beta > 0.0 && self.sigma_pos > 0.0) {
            return Err(Error::Config("prior standard deviations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub family: Family,
    /// Number of ordinal levels; only meaningful for [`Family::Weighted`].
    pub levels: u32,
    pub undirected: bool,
    pub prior: PriorConfig,
}

impl ModelConfig {
    pub fn new(family: Family) -> Self {
        Self { family, levels: 2, undirected: false, prior: PriorConfig::default() }
    }

    pub fn weighted(levels: u32) -> Self {
        Self { levels, ..Self::new(Family::Weighted) }
    }

    pub fn with_prior(mut self, prior: PriorConfig) -> Self {
        self.prior = prior;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.family == Family::Weighted && self.levels < 2 {
            return Err(Error::Config(format!("weighted model needs at least 2 levels, got {}", self.levels)));
        }
        if self.family == Family::Cumulative && self.undirected {
            return Err(Error::Config("cumulative networks are always directed".into()));
        }
        self.prior.validate()
    }

    /// Checks that `network` is the kind of data this configuration describes.
    pub fn check_network(&self, network: &Network) -> Result<()> {
        self.validate()?;
        if network.family() != self.family {
            return Err(Error::Config(format!(
                "model family {} does not match {} network",
                self.family,
                network.family()
            )));
        }
        if network.is_undirected() != self.undirected {
            return Err(Error::Config("directedness of model and network differ".into()));
        }
        if let Network::Weighted(w) = network {
            if w.levels() != self.levels {
                return Err(Error::Config(format!("network has {} levels, model {}", w.levels(), self.levels)));
            }
        }
        Ok(())
    }
}

/// Observed data for any of the three model families.
#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Unweighted(Graph),
    Cumulative(CumulativeGraph),
    Weighted(WeightedGraph),
}

impl Network {
    pub fn family(&self) -> Family {
        match self {
            Network::Unweighted(_) => Family::Unweighted,
            Network::Cumulative(_) => Family::Cumulative,
            Network::Weighted(_) => Family::Weighted,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ids().len()
    }

    pub fn node_ids(&self) -> &[String] {
        match self {
            Network::Unweighted(g) => g.node_ids(),
            Network::Cumulative(c) => c.node_ids(),
            Network::Weighted(w) => w.graph().node_ids(),
        }
    }

    pub fn is_undirected(&self) -> bool {
        match self {
            Network::Unweighted(g) => !g.is_directed(),
            Network::Cumulative(_) => false,
            Network::Weighted(w) => !w.graph().is_directed(),
        }
    }

    pub(crate) fn state_shape(&self) -> StateShape {
        match self {
            Network::Unweighted(g) => StateShape::unweighted(g),
            Network::Cumulative(c) => StateShape::cumulative(c),
            Network::Weighted(w) => StateShape::weighted(w),
        }
    }

    /// Length of the `beta` vector a state for this network carries.
    pub fn beta_len(&self) -> usize {
        self.state_shape().beta_len
    }

    pub fn cuts_len(&self) -> usize {
        self.state_shape().cuts_len
    }

    pub fn model_config(&self, prior: PriorConfig) -> ModelConfig {
        let levels = match self {
            Network::Weighted(w) => w.levels(),
            _ => 2,
        };
        ModelConfig { family: self.family(), levels, undirected: self.is_undirected(), prior }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct StateShape {
    pub n_nodes: usize,
    pub beta_len: usize,
    pub cuts_len: usize,
}

impl StateShape {
    pub fn unweighted(g: &Graph) -> Self {
        let n = g.n_nodes();
        Self { n_nodes: n, beta_len: if g.is_directed() { n } else { 0 }, cuts_len: 0 }
    }

    pub fn cumulative(c: &CumulativeGraph) -> Self {
        Self { n_nodes: c.n_nodes(), beta_len: c.n_actions(), cuts_len: 0 }
    }

    pub fn weighted(w: &WeightedGraph) -> Self {
        Self { cuts_len: w.levels() as usize - 1, ..Self::unweighted(w.graph()) }
    }
}

/// Positions in R^dim plus activity/popularity parameters and cut points.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub dim: usize,
    /// Row-major `n_nodes x dim`.
    pub positions: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Per node (directed unweighted/weighted), per action (cumulative) or
    /// empty (undirected, where `alpha` plays both roles).
    pub beta: Vec<f64>,
    /// `c_1 > c_2 > ... > c_{K-1}` for the ordinal family, empty otherwise.
    pub cuts: Vec<f64>,
}

impl LatentState {
    pub fn zeros(n_nodes: usize, dim: usize, beta_len: usize, cuts_len: usize) -> Self {
        Self {
            dim,
            positions: vec![0.0; n_nodes * dim],
            alpha: vec![0.0; n_nodes],
            beta: vec![0.0; beta_len],
            cuts: vec![0.0; cuts_len],
        }
    }

    /// Zero state shaped for `network`, with cut points evenly spaced from
    /// +1 down to -1.
    pub fn for_network(network: &Network, dim: usize) -> Self {
        let mut s = Self::zeros(network.n_nodes(), dim, network.beta_len(), network.cuts_len());
        s.cuts = default_cuts(network.cuts_len());
        s
    }

    pub fn n_nodes(&self) -> usize {
        self.alpha.len()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        self.position(i).iter().zip(self.position(j)).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.sq_dist(i, j).sqrt()
    }

    /// Total number of scalar coordinates.
    pub fn n_coords(&self) -> usize {
        self.positions.len() + self.alpha.len() + self.beta.len() + self.cuts.len()
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().chain(&self.alpha).chain(&self.beta).chain(&self.cuts).all(|v| v.is_finite())
    }

    /// Verifies that the state can be evaluated against `network`.
    pub fn check_shape(&self, network: &Network) -> Result<()> {
        self.check(&network.state_shape())
    }

    pub(crate) fn check(&self, shape: &StateShape) -> Result<()> {
        let n = shape.n_nodes;
        if self.dim == 0 && n > 0 {
            return Err(Error::Shape("dimension must be at least 1".into()));
        }
        if self.alpha.len() != n || self.positions.len() != n * self.dim {
            return Err(Error::Shape(format!(
                "state has {} nodes in {} dims ({} coordinates), network has {n} nodes",
                self.alpha.len(),
                self.dim,
                self.positions.len()
            )));
        }
        if self.beta.len() != shape.beta_len {
            return Err(Error::Shape(format!(
                "state has {} beta entries, network needs {}",
                self.beta.len(),
                shape.beta_len
            )));
        }
        if self.cuts.len() != shape.cuts_len {
            return Err(Error::Shape(format!(
                "state has {} cut points, network needs {}",
                self.cuts.len(),
                shape.cuts_len
            )));
        }
        check_cuts(&self.cuts)
    }

    /// Translates all positions so their mean is the origin.
    pub fn center(&mut self) {
        let n = self.n_nodes();
        if n == 0 {
            return;
        }
        let dim = self.dim;
        let mut mean = vec![0.0; dim];
        for p in self.positions.chunks_exact(dim) {
            for (m, x) in mean.iter_mut().zip(p) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for p in self.positions.chunks_exact_mut(dim) {
            for (x, m) in p.iter_mut().zip(&mean) {
                *x -= m;
            }
        }
    }
}

/// Evenly spaced cut points from +1 to -1 (a single cut sits at 0).
pub fn default_cuts(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|k| 1.0 - 2.0 * k as f64 / (count - 1) as f64).collect(),
    }
}

pub fn check_cuts(cuts: &[f64]) -> Result<()> {
    if cuts.windows(2).all(|w| w[0] > w[1]) && cuts.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonMonotoneCuts(cuts.to_vec()))
    }
}

/// Probability of a tie given the two node parameters and squared distance.
#[inline]
pub fn tie_probability(alpha_i: f64, beta_j: f64, d2: f64) -> f64 {
    sigmoid(alpha_i + beta_j - d2)
}

/// `P(a >= level)` under the ordered logit; 1 for level 0, 0 for `level >= K`.
pub fn cumulative_level_probability(cuts: &[f64], level: usize, s: f64) -> f64 {
    if level == 0 {
        1.0
    } else if level > cuts.len() {
        0.0
    } else {
        sigmoid(cuts[level - 1] + s)
    }
}

/// Probability that the ordinal tie between `i` and `j` sits at `level`.
pub fn level_probability(levels: u32, cuts: &[f64], alpha_i: f64, beta_j: f64, d2: f64, level: u32) -> Result<f64> {
    if cuts.len() + 1 != levels as usize {
        return Err(Error::Shape(format!("{} cut points for {levels} levels", cuts.len())));
    }
    if level >= levels {
        return Err(Error::LevelOutOfRange { level, levels });
    }
    check_cuts(cuts)?;
    let s = alpha_i + beta_j - d2;
    let k = level as usize;
    Ok(cumulative_level_probability(cuts, k, s) - cumulative_level_probability(cuts, k + 1, s))
}

/// Log-probability of one ordinal observation and its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LevelTerm {
    pub logp: f64,
    /// d logp / d s, with s the linear predictor.
    pub d_s: f64,
    /// d logp / d c_level (the cut bounding the level from below), if any.
    pub d_lower_cut: f64,
    /// d logp / d c_{level+1} (the cut bounding the level from above), if any.
    pub d_upper_cut: f64,
}

/// Evaluates `log(sigmoid(c_k + s) - sigmoid(c_{k+1} + s))` in the factored form
/// `log sigmoid(a) + log sigmoid(-b) + log(1 - exp(b - a))`, which stays finite
/// for tail probabilities far below the f64 range of the plain difference.
/// Cuts must be strictly decreasing and `level < cuts.len() + 1`.
#[inline]
pub(crate) fn level_term(cuts: &[f64], level: usize, s: f64) -> LevelTerm {
    let top = cuts.len();
    let logp = if level == 0 {
        -softplus(cuts[0] + s)
    } else if level == top {
        log_sigmoid(cuts[level - 1] + s)
    } else {
        let gap = cuts[level - 1] - cuts[level];
        log_sigmoid(cuts[level - 1] + s) + log_sigmoid(-(cuts[level] + s)) + (-(-gap).exp_m1()).ln()
    };
    let (d_s, d_lower_cut, d_upper_cut) = level_gradient(cuts, level, s);
    LevelTerm { logp, d_s, d_lower_cut, d_upper_cut }
}

/// The derivatives of [`level_term`] without the log-probability, for the
/// force loop: `(d_s, d_lower_cut, d_upper_cut)`.
#[inline]
pub(crate) fn level_gradient(cuts: &[f64], level: usize, s: f64) -> (f64, f64, f64) {
    let top = cuts.len();
    if level == 0 {
        let sb = sigmoid(cuts[0] + s);
        (-sb, 0.0, -sb)
    } else if level == top {
        let sa = sigmoid(-(cuts[level - 1] + s));
        (sa, sa, 0.0)
    } else {
        let inv = 1.0 / (cuts[level - 1] - cuts[level]).exp_m1();
        let (sa, sb) = (sigmoid(-(cuts[level - 1] + s)), sigmoid(cuts[level] + s));
        (sa - sb, sa + inv, -sb - inv)
    }
}

/// Sums per-row values in index order so results do not depend on scheduling.
pub(crate) fn ordered_row_sum<F>(n: usize, row: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let rows: Vec<f64> = (0..n).into_par_iter().map(row).collect();
    rows.iter().sum()
}

/// Log-likelihood of an unweighted network.
pub fn loglik_unweighted(graph: &Graph, state: &LatentState) -> Result<f64> {
    state.check(&StateShape::unweighted(graph))?;
    let n = graph.n_nodes();
    let directed = graph.is_directed();
    Ok(ordered_row_sum(n, |i| {
        let mut neighbors = graph.out_neighbors(i).iter().peekable();
        let mut total = 0.0;
        let first = if directed { 0 } else { i + 1 };
        for j in first..n {
            while neighbors.next_if(|&&(k, _)| k < j).is_some() {}
            let tie = neighbors.next_if(|&&(k, _)| k == j).is_some();
            if j == i {
                continue;
            }
            let b = if directed { state.beta[j] } else { state.alpha[j] };
            let s = state.alpha[i] + b - state.sq_dist(i, j);
            total += if tie { s - softplus(s) } else { -softplus(s) };
        }
        total
    }))
}

/// Log-likelihood of a cumulative network: one Bernoulli per (action, non-author).
pub fn loglik_cumulative(cgraph: &CumulativeGraph, state: &LatentState) -> Result<f64> {
    state.check(&StateShape::cumulative(cgraph))?;
    let n = cgraph.n_nodes();
    Ok(ordered_row_sum(n, |j| {
        let mut total = 0.0;
        for &k in cgraph.actions_by(j) {
            let action = &cgraph.actions()[k];
            let mut adopters = action.adopters.iter().peekable();
            for i in 0..n {
                if i == j {
                    continue;
                }
                let s = state.alpha[i] + state.beta[k] - state.sq_dist(i, j);
                let tie = adopters.next_if_eq(&&i).is_some();
                total += if tie { s - softplus(s) } else { -softplus(s) };
            }
        }
        total
    }))
}

/// Log-likelihood of an ordinal network under the ordered logit.
pub fn loglik_weighted(wgraph: &WeightedGraph, state: &LatentState) -> Result<f64> {
    state.check(&StateShape::weighted(wgraph))?;
    let graph = wgraph.graph();
    let n = graph.n_nodes();
    let directed = graph.is_directed();
    Ok(ordered_row_sum(n, |i| {
        if !wgraph.role(i).rater {
            return 0.0;
        }
        let mut total = 0.0;
        let mut neighbors = graph.out_neighbors(i).iter().peekable();
        let first = if directed { 0 } else { i + 1 };
        for j in first..n {
            while neighbors.next_if(|&&(k, _)| k < j).is_some() {}
            let level = neighbors.next_if(|&&(k, _)| k == j).map_or(0, |&(_, w)| w);
            if !wgraph.pair_included(i, j) {
                continue;
            }
            let b = if directed { state.beta[j] } else { state.alpha[j] };
            let s = state.alpha[i] + b - state.sq_dist(i, j);
            total += level_term(&state.cuts, level as usize, s).logp;
        }
        total
    }))
}

/// Gaussian log-prior density up to additive constants (0 when disabled).
pub fn log_prior(state: &LatentState, prior: &PriorConfig) -> f64 {
    if !prior.enabled {
        return 0.0;
    }
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    -sq(&state.alpha) / (2.0 * prior.sigma_alpha.powi(2))
        - sq(&state.beta) / (2.0 * prior.sigma_beta.powi(2))
        - sq(&state.positions) / (2.0 * prior.sigma_pos.powi(2))
}

/// Log-likelihood of any network family.
pub fn loglik(network: &Network, state: &LatentState) -> Result<f64> {
    match network {
        Network::Unweighted(g) => loglik_unweighted(g, state),
        Network::Cumulative(c) => loglik_cumulative(c, state),
        Network::Weighted(w) => loglik_weighted(w, state),
    }
}

/// Log-likelihood plus log-prior: the objective the layout ascends.
pub fn log_posterior(network: &Network, state: &LatentState, prior: &PriorConfig) -> Result<f64> {
    Ok(loglik(network, state)? + log_prior(state, prior))
}
