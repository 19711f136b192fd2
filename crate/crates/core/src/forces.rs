//! Layout forces: exact gradients of log-likelihood plus log-prior.
//!
//! All pairs are visited (O(N^2) per evaluation, no tree or grid
//! approximation); each unordered pair is evaluated once and its terms are
//! added to both endpoints. Practical up to networks of roughly 10^4 ties.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{CumulativeGraph, Graph, WeightedGraph};
use crate::model::{level_gradient, sigmoid, LatentState, Network, PriorConfig, StateShape};

/// Gradient of the objective, laid out exactly like [`LatentState`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForceField {
    pub dim: usize,
    pub positions: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub cuts: Vec<f64>,
}

impl ForceField {
    pub fn zeros_like(state: &LatentState) -> Self {
        Self {
            dim: state.dim,
            positions: vec![0.0; state.positions.len()],
            alpha: vec![0.0; state.alpha.len()],
            beta: vec![0.0; state.beta.len()],
            cuts: vec![0.0; state.cuts.len()],
        }
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// All components in state order: positions, alpha, beta, cuts.
    pub fn components(&self) -> impl Iterator<Item = f64> + '_ {
        self.positions.iter().chain(&self.alpha).chain(&self.beta).chain(&self.cuts).copied()
    }

    pub fn is_finite(&self) -> bool {
        self.components().all(f64::is_finite)
    }

    /// Sum of all position forces.
    pub fn net_position_force(&self) -> Vec<f64> {
        let mut net = vec![0.0; self.dim];
        for f in self.positions.chunks_exact(self.dim.max(1)) {
            for (n, v) in net.iter_mut().zip(f) {
                *n += v;
            }
        }
        net
    }

    fn add_prior(&mut self, state: &LatentState, prior: &PriorConfig) {
        if !prior.enabled {
            return;
        }
        let pull = |f: &mut [f64], x: &[f64], sigma: f64| {
            let k = 1.0 / (sigma * sigma);
            f.iter_mut().zip(x).for_each(|(f, x)| *f -= k * x);
        };
        pull(&mut self.positions, &state.positions, prior.sigma_pos);
        pull(&mut self.alpha, &state.alpha, prior.sigma_alpha);
        pull(&mut self.beta, &state.beta, prior.sigma_beta);
    }

    fn add(&mut self, other: &ForceField) {
        let add = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(a, b)| *a += b);
        add(&mut self.positions, &other.positions);
        add(&mut self.alpha, &other.alpha);
        add(&mut self.beta, &other.beta);
        add(&mut self.cuts, &other.cuts);
    }

    /// Adds `g * d s / d x` for a pair term whose predictor contains
    /// `-|x_i - x_j|^2`: node `i` is pulled towards `j` for `g > 0`, and `j`
    /// receives the opposite force.
    #[inline]
    fn pull_pair(&mut self, i: usize, j: usize, xi: &[f64], xj: &[f64], g: f64) {
        let dim = self.dim;
        for (k, (a, b)) in xi.iter().zip(xj).enumerate() {
            let f = 2.0 * (a - b) * g;
            self.positions[i * dim + k] -= f;
            self.positions[j * dim + k] += f;
        }
    }
}

/// Rows per work unit of the pair sweep.
const BLOCK_ROWS: usize = 64;
/// Work units evaluated concurrently before their partial sums are merged.
const WAVE_BLOCKS: usize = 16;

/// Runs `row(i, scratch, acc)` for every node; each call must add the
/// contributions of all pairs `(i, j)` with `j > i` to `acc`. Rows are
/// grouped in fixed blocks whose partial sums are merged in block order, so
/// the result does not depend on the thread count.
fn pair_sweep<S, I, R>(state: &LatentState, init: I, row: R) -> ForceField
where
    I: Fn() -> S + Sync,
    R: Fn(usize, &mut S, &mut ForceField) + Sync,
{
    let n = state.n_nodes();
    let n_blocks = n.div_ceil(BLOCK_ROWS);
    let mut total = ForceField::zeros_like(state);
    for wave in (0..n_blocks).step_by(WAVE_BLOCKS) {
        let parts: Vec<ForceField> = (wave..n_blocks.min(wave + WAVE_BLOCKS))
            .into_par_iter()
            .map(|b| {
                let mut acc = ForceField::zeros_like(state);
                let mut scratch = init();
                for i in b * BLOCK_ROWS..n.min((b + 1) * BLOCK_ROWS) {
                    row(i, &mut scratch, &mut acc);
                }
                acc
            })
            .collect();
        for part in &parts {
            total.add(part);
        }
    }
    total
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Writes `value` at the indices of `entries` (j > after only) and returns
/// the written indices for clearing.
fn scatter(buf: &mut [u32], entries: &[(usize, u32)], after: usize, value: impl Fn(u32) -> u32) {
    for &(j, w) in entries.iter().filter(|e| e.0 > after) {
        buf[j] = value(w);
    }
}

fn clear(buf: &mut [u32], entries: &[(usize, u32)], after: usize) {
    for &(j, _) in entries.iter().filter(|e| e.0 > after) {
        buf[j] = 0;
    }
}

/// Forces for an unweighted (directed or undirected) network.
pub fn forces_unweighted(graph: &Graph, state: &LatentState, prior: &PriorConfig) -> Result<ForceField> {
    state.check(&StateShape::unweighted(graph))?;
    let n = graph.n_nodes();
    let directed = graph.is_directed();
    let mut field = pair_sweep(
        state,
        || vec![0u32; 2 * n],
        |i, buf, acc| {
            let (out_tie, in_tie) = buf.split_at_mut(n);
            scatter(out_tie, graph.out_neighbors(i), i, |_| 1);
            scatter(in_tie, graph.in_neighbors(i), i, |_| 1);
            let xi = state.position(i);
            for j in i + 1..n {
                let xj = state.position(j);
                let d2 = sq_dist(xi, xj);
                if directed {
                    let g_ij = out_tie[j] as f64 - sigmoid(state.alpha[i] + state.beta[j] - d2);
                    let g_ji = in_tie[j] as f64 - sigmoid(state.alpha[j] + state.beta[i] - d2);
                    acc.alpha[i] += g_ij;
                    acc.beta[j] += g_ij;
                    acc.alpha[j] += g_ji;
                    acc.beta[i] += g_ji;
                    acc.pull_pair(i, j, xi, xj, g_ij + g_ji);
                } else {
                    let g = out_tie[j] as f64 - sigmoid(state.alpha[i] + state.alpha[j] - d2);
                    acc.alpha[i] += g;
                    acc.alpha[j] += g;
                    acc.pull_pair(i, j, xi, xj, g);
                }
            }
            clear(out_tie, graph.out_neighbors(i), i);
            clear(in_tie, graph.in_neighbors(i), i);
        },
    );
    field.add_prior(state, prior);
    Ok(field)
}

/// Forces for a cumulative network with one `beta` per action.
pub fn forces_cumulative(cgraph: &CumulativeGraph, state: &LatentState, prior: &PriorConfig) -> Result<ForceField> {
    state.check(&StateShape::cumulative(cgraph))?;
    let n = cgraph.n_nodes();
    let actions = cgraph.actions();
    // Bit `s` of `own_adopted[j * words + s / 64]` records whether `j`
    // adopted the `s`-th action of the current row's node.
    let words = (0..n).map(|i| cgraph.action_count(i)).max().unwrap_or(0).div_ceil(64);
    let mut field = pair_sweep(
        state,
        || (vec![false; cgraph.n_actions()], vec![0u64; n * words]),
        |i, (adopted_by_i, own_adopted), acc| {
            let own = cgraph.actions_by(i);
            for &k in cgraph.adopted_by(i) {
                adopted_by_i[k] = true;
            }
            for (slot, &k) in own.iter().enumerate() {
                for &j in &actions[k].adopters {
                    own_adopted[j * words + slot / 64] |= 1 << (slot % 64);
                }
            }
            let xi = state.position(i);
            for j in i + 1..n {
                let theirs = cgraph.actions_by(j);
                if own.is_empty() && theirs.is_empty() {
                    continue;
                }
                let xj = state.position(j);
                let d2 = sq_dist(xi, xj);
                let mut g_pair = 0.0;
                // i responding to j's actions.
                for &k in theirs {
                    let g = adopted_by_i[k] as u8 as f64 - sigmoid(state.alpha[i] + state.beta[k] - d2);
                    acc.alpha[i] += g;
                    acc.beta[k] += g;
                    g_pair += g;
                }
                // j responding to i's actions.
                for (slot, &k) in own.iter().enumerate() {
                    let tie = (own_adopted[j * words + slot / 64] >> (slot % 64)) & 1;
                    let g = tie as f64 - sigmoid(state.alpha[j] + state.beta[k] - d2);
                    acc.alpha[j] += g;
                    acc.beta[k] += g;
                    g_pair += g;
                }
                acc.pull_pair(i, j, xi, xj, g_pair);
            }
            for &k in cgraph.adopted_by(i) {
                adopted_by_i[k] = false;
            }
            for &k in own {
                for &j in &actions[k].adopters {
                    own_adopted[j * words..(j + 1) * words].fill(0);
                }
            }
        },
    );
    field.add_prior(state, prior);
    Ok(field)
}

/// Adds the cut-point derivatives of one observation at `level`.
#[inline]
fn add_cut_grads(cuts: &mut [f64], level: usize, d_lower: f64, d_upper: f64) {
    if level >= 1 {
        cuts[level - 1] += d_lower;
    }
    if level < cuts.len() {
        cuts[level] += d_upper;
    }
}

/// Forces for an ordinal network under the ordered logit, any level count.
pub fn forces_weighted(wgraph: &WeightedGraph, state: &LatentState, prior: &PriorConfig) -> Result<ForceField> {
    state.check(&StateShape::weighted(wgraph))?;
    let graph = wgraph.graph();
    let n = graph.n_nodes();
    let directed = graph.is_directed();
    let cuts = &state.cuts;
    let mut field = pair_sweep(
        state,
        || vec![0u32; 2 * n],
        |i, buf, acc| {
            let (out_level, in_level) = buf.split_at_mut(n);
            scatter(out_level, graph.out_neighbors(i), i, |w| w);
            scatter(in_level, graph.in_neighbors(i), i, |w| w);
            let xi = state.position(i);
            for j in i + 1..n {
                let xj = state.position(j);
                let d2 = sq_dist(xi, xj);
                let mut g_pair = 0.0;
                if directed {
                    if wgraph.pair_included(i, j) {
                        let level = out_level[j] as usize;
                        let (d_s, d_lo, d_up) = level_gradient(cuts, level, state.alpha[i] + state.beta[j] - d2);
                        acc.alpha[i] += d_s;
                        acc.beta[j] += d_s;
                        g_pair += d_s;
                        add_cut_grads(&mut acc.cuts, level, d_lo, d_up);
                    }
                    if wgraph.pair_included(j, i) {
                        let level = in_level[j] as usize;
                        let (d_s, d_lo, d_up) = level_gradient(cuts, level, state.alpha[j] + state.beta[i] - d2);
                        acc.alpha[j] += d_s;
                        acc.beta[i] += d_s;
                        g_pair += d_s;
                        add_cut_grads(&mut acc.cuts, level, d_lo, d_up);
                    }
                } else if wgraph.pair_included(i, j) {
                    let level = out_level[j] as usize;
                    let (d_s, d_lo, d_up) = level_gradient(cuts, level, state.alpha[i] + state.alpha[j] - d2);
                    acc.alpha[i] += d_s;
                    acc.alpha[j] += d_s;
                    g_pair += d_s;
                    add_cut_grads(&mut acc.cuts, level, d_lo, d_up);
                }
                acc.pull_pair(i, j, xi, xj, g_pair);
            }
            clear(out_level, graph.out_neighbors(i), i);
            clear(in_level, graph.in_neighbors(i), i);
        },
    );
    field.add_prior(state, prior);
    Ok(field)
}

/// Forces of `log_posterior` for any family.
pub fn forces(network: &Network, state: &LatentState, prior: &PriorConfig) -> Result<ForceField> {
    match network {
        Network::Unweighted(g) => forces_unweighted(g, state, prior),
        Network::Cumulative(c) => forces_cumulative(c, state, prior),
        Network::Weighted(w) => forces_weighted(w, state, prior),
    }
}

/// Largest disagreement between two gradients, scaled so that values up to
/// 1 mean every component satisfies `|a - b| <= max(rel * |b|, abs)`.
pub fn gradient_error_ratio(analytic: &ForceField, numeric: &ForceField, rel: f64, abs: f64) -> f64 {
    analytic
        .components()
        .zip(numeric.components())
        .map(|(a, b)| (a - b).abs() / (rel * b.abs()).max(abs))
        .fold(0.0, f64::max)
}

/// Derivatives of `log p(level)` for the three-level ordinal model, written
/// with the abbreviations `C1 = -c1 - s` and `C2 = -c2 - s`.
///
/// Returns `(d/ds, d/dc1, d/dc2)`, where `d/ds` is also the force on the
/// sender's `alpha` and the receiver's `beta`; the force on the sender's
/// position is `-2 (x_i - x_j) d/ds`. Kept as a closed-form cross-check of
/// the general ordered-logit gradient.
pub fn three_level_pair_gradient(c1: f64, c2: f64, s: f64, level: u32) -> Result<(f64, f64, f64)> {
    let e1 = (-c1 - s).exp();
    let e2 = (-c2 - s).exp();
    let denom = 1.0 / (1.0 + e1) - 1.0 / (1.0 + e2);
    match level {
        0 => {
            let g = -1.0 / (1.0 + e1);
            Ok((g, g, 0.0))
        }
        1 => {
            let t1 = e1 / (1.0 + e1).powi(2);
            let t2 = e2 / (1.0 + e2).powi(2);
            Ok(((t1 - t2) / denom, t1 / denom, -t2 / denom))
        }
        2 => {
            let g = 1.0 / (1.0 + 1.0 / e2);
            Ok((g, 0.0, g))
        }
        _ => Err(Error::LevelOutOfRange { level, levels: 3 }),
    }
}

/// Observed minus expected out- and in-degree for every node.
pub fn degree_residuals(graph: &Graph, state: &LatentState) -> Result<(Vec<f64>, Vec<f64>)> {
    state.check(&StateShape::unweighted(graph))?;
    let n = graph.n_nodes();
    let directed = graph.is_directed();
    let beta = |j: usize| if directed { state.beta[j] } else { state.alpha[j] };
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut expected_out, mut expected_in) = (0.0, 0.0);
            for j in (0..n).filter(|&j| j != i) {
                let d2 = state.sq_dist(i, j);
                expected_out += sigmoid(state.alpha[i] + beta(j) - d2);
                expected_in += sigmoid(state.alpha[j] + beta(i) - d2);
            }
            let (d_out, d_in) = graph.degree(i);
            (d_out as f64 - expected_out, d_in as f64 - expected_in)
        })
        .collect();
    Ok(rows.into_iter().unzip())
}

/// Central finite-difference gradient of `objective` over every coordinate
/// of `state`.
pub fn finite_difference_gradient<F>(mut objective: F, state: &LatentState, step: f64) -> Result<ForceField>
where
    F: FnMut(&LatentState) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    let mut probe = state.clone();
    let mut field = ForceField::zeros_like(state);
    let mut coord = 0;
    macro_rules! sweep {
        ($part:ident) => {
            for idx in 0..state.$part.len() {
                let x0 = state.$part[idx];
                probe.$part[idx] = x0 + step;
                let up = objective(&probe)?;
                probe.$part[idx] = x0 - step;
                let down = objective(&probe)?;
                probe.$part[idx] = x0;
                if !(up.is_finite() && down.is_finite()) {
                    return Err(Error::NonFinite(coord));
                }
                field.$part[idx] = (up - down) / (2.0 * step);
                coord += 1;
            }
        };
    }
    sweep!(positions);
    sweep!(alpha);
    sweep!(beta);
    sweep!(cuts);
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_cumulative, parse_edge_list};
    use crate::model::{log_posterior, loglik_weighted};

    fn rel_close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
        (a - b).abs() <= abs.max(rel * a.abs().max(b.abs()))
    }

    #[test]
    fn single_edge_attraction_and_repulsion() {
        let g = parse_edge_list("a\tb\n", true).unwrap();
        let mut s = LatentState::zeros(2, 2, 2, 0);
        s.positions = vec![1.0, 0.0, 0.0, 0.0];
        let f = forces_unweighted(&g, &s, &PriorConfig::disabled()).unwrap();
        let p = 1.0 / (1.0 + std::f64::consts::E);
        // a->b: attraction -2 plus repulsion 2p; b->a (no tie): repulsion 2p.
        assert!((f.position(0)[0] - (-2.0 + 4.0 * p)).abs() < 1e-12);
        assert!((2.0 * p - 0.537882).abs() < 1e-6);
        assert_eq!(f.position(0)[1], 0.0);
        assert!((f.alpha[0] - (1.0 - p)).abs() < 1e-12);
        assert!((f.beta[1] - (1.0 - p)).abs() < 1e-12);
    }

    #[test]
    fn coincident_nodes_feel_no_position_force() {
        let g = parse_edge_list("a\nb\nc\n", true).unwrap();
        let s = LatentState::zeros(3, 2, 3, 0);
        let f = forces_unweighted(&g, &s, &PriorConfig::disabled()).unwrap();
        assert!(f.positions.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cumulative_alpha_force() {
        let c = parse_cumulative("j\tt1\ti\n").unwrap();
        let s = LatentState::zeros(2, 2, 1, 0);
        let f = forces_cumulative(&c, &s, &PriorConfig::disabled()).unwrap();
        assert_eq!(f.alpha, vec![0.0, 0.5]);
        assert_eq!(f.beta, vec![0.5]);
        assert!(f.positions.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weighted_top_level_alpha_force() {
        let g = parse_edge_list("a\tb\t2\n", true).unwrap();
        let w = WeightedGraph::new(g, 3).unwrap().with_roles(vec![
            crate::graph::NodeRole { rater: true, rated: false },
            crate::graph::NodeRole { rater: false, rated: true },
        ]);
        let w = w.unwrap();
        let mut s = LatentState::zeros(2, 2, 2, 2);
        s.cuts = vec![1.0, -1.0];
        let f = forces_weighted(&w, &s, &PriorConfig::disabled()).unwrap();
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((f.alpha[0] - expected).abs() < 1e-12);
        assert!((f.alpha[0] - 0.731059).abs() < 1e-6);
        assert!(f.positions.iter().all(|&v| v == 0.0));
        assert_eq!(f.alpha[1], 0.0);
        assert_eq!(f.beta[0], 0.0);
    }

    #[test]
    fn closed_form_three_levels_matches_general_gradient() {
        for &(c1, c2) in &[(1.0, -1.0), (0.3, -2.5), (2.0, 1.5)] {
            for s in [-3.0, -0.7, 0.0, 0.4, 2.2] {
                for level in 0..3u32 {
                    let (g, g1, g2) = three_level_pair_gradient(c1, c2, s, level).unwrap();
                    let (d_s, d_lo, d_up) = level_gradient(&[c1, c2], level as usize, s);
                    let mut cuts = [0.0; 2];
                    add_cut_grads(&mut cuts, level as usize, d_lo, d_up);
                    assert!(rel_close(g, d_s, 1e-10, 1e-13), "{c1} {c2} {s} {level}");
                    assert!(rel_close(g1, cuts[0], 1e-10, 1e-13));
                    assert!(rel_close(g2, cuts[1], 1e-10, 1e-13));
                }
            }
        }
        assert!(three_level_pair_gradient(1.0, -1.0, 0.0, 3).is_err());
    }

    #[test]
    fn quadratic_objective() {
        let mut s = LatentState::zeros(3, 2, 0, 0);
        s.positions = vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5];
        let fd =
            finite_difference_gradient(|st| Ok(-st.positions.iter().map(|x| x * x).sum::<f64>()), &s, 1e-5).unwrap();
        for (g, x) in fd.positions.iter().zip(&s.positions) {
            assert!((g + 2.0 * x).abs() < 1e-8);
        }
        assert!(finite_difference_gradient(|_| Ok(0.0), &s, 0.0).is_err());
        assert!(matches!(finite_difference_gradient(|_| Ok(f64::NAN), &s, 1e-3), Err(Error::NonFinite(0))));
    }

    fn check_against_fd(network: &Network, state: &LatentState, prior: &PriorConfig) {
        let analytic = forces(network, state, prior).unwrap();
        let fd = finite_difference_gradient(|s| log_posterior(network, s, prior), state, 1e-5).unwrap();
        for (k, (a, b)) in analytic.components().zip(fd.components()).enumerate() {
            assert!(rel_close(a, b, 1e-5, 1e-8), "component {k}: {a} vs {b}");
        }
    }

    #[test]
    fn four_node_unweighted_matches_fd() {
        let g = parse_edge_list("a\tb\nb\tc\nc\ta\nd\ta\n", true).unwrap();
        let mut s = LatentState::zeros(4, 2, 4, 0);
        s.positions = vec![0.1, 0.3, -0.4, 0.2, 0.7, -0.5, 0.0, 0.9];
        s.alpha = vec![0.2, -0.1, 0.4, 0.0];
        s.beta = vec![-0.3, 0.1, 0.0, 0.5];
        check_against_fd(&Network::Unweighted(g), &s, &PriorConfig::default());
    }

    #[test]
    fn three_node_weighted_matches_fd() {
        let g = parse_edge_list("a\tb\t2\nb\ta\t1\nc\ta\t2\n", true).unwrap();
        let w = WeightedGraph::new(g, 3).unwrap();
        let mut s = LatentState::zeros(3, 2, 3, 2);
        s.positions = vec![0.1, 0.3, -0.4, 0.2, 0.7, -0.5];
        s.alpha = vec![0.2, -0.1, 0.4];
        s.beta = vec![-0.3, 0.1, 0.0];
        s.cuts = vec![0.8, -0.6];
        assert!(loglik_weighted(&w, &s).is_ok());
        check_against_fd(&Network::Weighted(w), &s, &PriorConfig::disabled());
    }

    #[test]
    fn residuals_equal_alpha_forces() {
        let g = parse_edge_list("a\tb\nb\tc\nc\ta\na\tc\n", true).unwrap();
        let mut s = LatentState::zeros(3, 2, 3, 0);
        s.positions = vec![0.1, 0.3, -0.4, 0.2, 0.7, -0.5];
        s.alpha = vec![0.2, -0.1, 0.4];
        let f = forces_unweighted(&g, &s, &PriorConfig::disabled()).unwrap();
        let (out, inn) = degree_residuals(&g, &s).unwrap();
        for i in 0..3 {
            assert!((out[i] - f.alpha[i]).abs() < 1e-12);
            assert!((inn[i] - f.beta[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn residuals_vanish_for_distant_empty_graph() {
        let g = parse_edge_list("a\nb\nc\n", true).unwrap();
        let mut s = LatentState::zeros(3, 2, 3, 0);
        s.positions = vec![0.0, 0.0, 100.0, 0.0, 0.0, 100.0];
        let (out, inn) = degree_residuals(&g, &s).unwrap();
        assert!(out.iter().chain(&inn).all(|r| r.abs() < 1e-12));
    }
}
