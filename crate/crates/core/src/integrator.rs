//! Damped velocity Verlet simulation of the likelihood force field.
//!
//! `alpha`, `beta` and cut points are integrated as extra coordinates next to
//! the positions. Velocities are multiplied by `damping` after every step, so
//! the kinetic energy drains away and the state settles at a stationary point
//! of the objective.
//!
//! The stiffness of a coordinate grows with the number of observed ties that
//! pull on it, so a fixed step that is stable for sparse networks oscillates
//! and blows up on dense ones. Every coordinate therefore carries inertia
//! `base * (1 + inertia_per_tie * ties)`, where `base` is 1 for positions and
//! `param_mass` for parameters; `inertia_per_tie = 0` gives plain unit masses.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forces::{forces, ForceField};
use crate::graph::Graph;
use crate::model::{log_posterior, loglik, LatentState, ModelConfig, Network};

/// Smallest gap kept between consecutive cut points after a step.
pub const MIN_CUT_GAP: f64 = 1e-6;

/// Parameter magnitude beyond which an unregularized fit is reported as
/// diverging.
pub const DIVERGENCE_WARNING: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    /// Fraction of velocity retained per step, in (0, 1).
    pub damping: f64,
    pub max_iters: usize,
    /// Convergence threshold on the per-step coordinate speed `|dx| / dt`.
    pub tol: f64,
    pub param_mass: f64,
    /// Extra inertia per observed tie acting on a coordinate (see module docs).
    pub inertia_per_tie: f64,
    pub seed: u64,
    pub restarts: usize,
    pub dim: usize,
    /// Keep alpha, beta and cut points at their initial values.
    pub freeze_parameters: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            damping: 0.9,
            max_iters: 5000,
            tol: 1e-4,
            param_mass: 1.0,
            inertia_per_tie: 0.01,
            seed: 0,
            restarts: 5,
            dim: 2,
            freeze_parameters: false,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let problem = if !(self.dt > 0.0 && self.dt.is_finite()) {
            "dt must be positive"
        } else if !(self.damping > 0.0 && self.damping < 1.0) {
            "damping must lie in (0, 1)"
        } else if !(self.tol > 0.0) {
            "tol must be positive"
        } else if !(self.param_mass > 0.0 && self.param_mass.is_finite()) {
            "param_mass must be positive"
        } else if !(self.inertia_per_tie >= 0.0 && self.inertia_per_tie.is_finite()) {
            "inertia_per_tie must be non-negative"
        } else if self.restarts == 0 {
            "restarts must be at least 1"
        } else if self.dim == 0 {
            "dim must be at least 1"
        } else {
            return Ok(());
        };
        Err(Error::Config(problem.into()))
    }
}

/// Outcome of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutResult {
    pub state: LatentState,
    /// Plain log-likelihood.
    pub loglik: f64,
    /// Log-likelihood plus log-prior (equal to `loglik` with the prior off).
    pub log_posterior: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

/// Random starting state: standard normal positions, zero parameters and
/// evenly spaced cut points. Fully determined by `seed`.
pub fn init_state(network: &Network, dim: usize, seed: u64) -> LatentState {
    let mut state = LatentState::for_network(network, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for x in &mut state.positions {
        *x = StandardNormal.sample(&mut rng);
    }
    state
}

/// Inertia of every coordinate, laid out like [`LatentState`] but with one
/// mass per node for all of its position coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Masses {
    pub positions: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub cuts: f64,
}

impl Masses {
    /// Unit masses for positions and `param_mass` for parameters.
    pub fn uniform(state: &LatentState, param_mass: f64) -> Self {
        Self {
            positions: vec![1.0; state.n_nodes()],
            alpha: vec![param_mass; state.alpha.len()],
            beta: vec![param_mass; state.beta.len()],
            cuts: param_mass,
        }
    }

    /// Tie-scaled masses for `network` (see module docs).
    pub fn for_network(network: &Network, config: &IntegratorConfig) -> Self {
        let c = config.inertia_per_tie;
        let node = |ties: usize| 1.0 + c * ties as f64;
        let param = |ties: usize| config.param_mass * (1.0 + c * ties as f64);
        let graph_masses = |g: &Graph| {
            let n = g.n_nodes();
            let degrees: Vec<(usize, usize)> = (0..n).map(|i| g.degree(i)).collect();
            if g.is_directed() {
                Self {
                    positions: degrees.iter().map(|&(o, i)| node(o + i)).collect(),
                    alpha: degrees.iter().map(|&(o, _)| param(o)).collect(),
                    beta: degrees.iter().map(|&(_, i)| param(i)).collect(),
                    cuts: config.param_mass,
                }
            } else {
                Self {
                    positions: degrees.iter().map(|&(d, _)| node(d)).collect(),
                    alpha: degrees.iter().map(|&(d, _)| param(d)).collect(),
                    beta: Vec::new(),
                    cuts: config.param_mass,
                }
            }
        };
        match network {
            Network::Unweighted(g) => graph_masses(g),
            Network::Weighted(w) => {
                let n = w.graph().n_nodes();
                let pairs = (0..n)
                    .flat_map(|i| (0..n).map(move |j| (i, j)))
                    .filter(|&(i, j)| i != j && (w.graph().is_directed() || i < j) && w.pair_included(i, j))
                    .count();
                Self { cuts: param(pairs), ..graph_masses(w.graph()) }
            }
            Network::Cumulative(cg) => {
                let n = cg.n_nodes();
                let received: Vec<usize> =
                    (0..n).map(|i| cg.actions_by(i).iter().map(|&k| cg.actions()[k].adopters.len()).sum()).collect();
                Self {
                    positions: (0..n).map(|i| node(cg.adopted_by(i).len() + received[i])).collect(),
                    alpha: (0..n).map(|i| param(cg.adopted_by(i).len())).collect(),
                    beta: cg.actions().iter().map(|a| param(a.adopters.len())).collect(),
                    cuts: config.param_mass,
                }
            }
        }
    }
}

/// Enforces strictly decreasing cut points, stopping any cut that was moved.
fn project_cuts(cuts: &mut [f64], velocity: &mut [f64]) {
    for k in 1..cuts.len() {
        if cuts[k] > cuts[k - 1] - MIN_CUT_GAP {
            cuts[k] = cuts[k - 1] - MIN_CUT_GAP;
            velocity[k] = 0.0;
        }
    }
}

/// Advances one velocity Verlet step.
///
/// On entry `force` holds the force at `state`; on return it holds the force
/// at the new state, ready for the next step. Returns the largest absolute
/// coordinate displacement.
pub fn step<F>(
    state: &mut LatentState,
    velocity: &mut ForceField,
    force: &mut ForceField,
    masses: &Masses,
    config: &IntegratorConfig,
    mut force_at: F,
) -> Result<f64>
where
    F: FnMut(&LatentState) -> Result<ForceField>,
{
    let dt = config.dt;
    let mut max_shift = 0.0f64;
    let dim = state.dim;
    let mut drift = |x: &mut [f64], v: &[f64], f: &[f64], mass: &dyn Fn(usize) -> f64| {
        for (k, ((x, v), f)) in x.iter_mut().zip(v).zip(f).enumerate() {
            let dx = v * dt + 0.5 * f / mass(k) * dt * dt;
            *x += dx;
            max_shift = max_shift.max(dx.abs());
        }
    };
    let position_mass = |k: usize| masses.positions[k / dim];
    let alpha_mass = |k: usize| masses.alpha[k];
    let beta_mass = |k: usize| masses.beta[k];
    let cut_mass = |_: usize| masses.cuts;
    drift(&mut state.positions, &velocity.positions, &force.positions, &position_mass);
    if !config.freeze_parameters {
        drift(&mut state.alpha, &velocity.alpha, &force.alpha, &alpha_mass);
        drift(&mut state.beta, &velocity.beta, &force.beta, &beta_mass);
        drift(&mut state.cuts, &velocity.cuts, &force.cuts, &cut_mass);
        project_cuts(&mut state.cuts, &mut velocity.cuts);
    }
    if !state.is_finite() {
        return Err(Error::Divergence { iteration: 0, message: "state became non-finite".into() });
    }
    let next = force_at(state)?;
    if !next.is_finite() {
        return Err(Error::Divergence { iteration: 0, message: "force became non-finite".into() });
    }
    let kick = |v: &mut [f64], f0: &[f64], f1: &[f64], mass: &dyn Fn(usize) -> f64| {
        for (k, ((v, a), b)) in v.iter_mut().zip(f0).zip(f1).enumerate() {
            *v = config.damping * (*v + 0.5 * (a + b) / mass(k) * dt);
        }
    };
    kick(&mut velocity.positions, &force.positions, &next.positions, &position_mass);
    if !config.freeze_parameters {
        kick(&mut velocity.alpha, &force.alpha, &next.alpha, &alpha_mass);
        kick(&mut velocity.beta, &force.beta, &next.beta, &beta_mass);
        kick(&mut velocity.cuts, &force.cuts, &next.cuts, &cut_mass);
    }
    *force = next;
    Ok(max_shift)
}

fn max_active_force(force: &ForceField, freeze_parameters: bool) -> f64 {
    let positions = force.positions.iter();
    let max = |it: &mut dyn Iterator<Item = &f64>| it.fold(0.0f64, |m, v| m.max(v.abs()));
    if freeze_parameters {
        max(&mut positions.into_iter())
    } else {
        max(&mut positions.chain(&force.alpha).chain(&force.beta).chain(&force.cuts))
    }
}

/// Runs the simulation from `init` until it is stationary or `max_iters`
/// steps have been taken.
///
/// Converged means that both the coordinate speed `|dx| / dt` is below `tol`
/// and every active force component is below `10 * tol`.
pub fn simulate(
    network: &Network,
    model: &ModelConfig,
    config: &IntegratorConfig,
    init: LatentState,
) -> Result<LayoutResult> {
    config.validate()?;
    model.check_network(network)?;
    init.check_shape(network)?;
    let prior = model.prior;
    let mut state = init;
    let mut velocity = ForceField::zeros_like(&state);
    let masses = Masses::for_network(network, config);
    let mut force = forces(network, &state, &prior)?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        let shift = step(&mut state, &mut velocity, &mut force, &masses, config, |s| forces(network, s, &prior))
            .map_err(|e| match e {
                Error::Divergence { message, .. } => Error::Divergence { iteration: iterations + 1, message },
                other => other,
            })?;
        iterations += 1;
        if shift / config.dt < config.tol && max_active_force(&force, config.freeze_parameters) < 10.0 * config.tol {
            converged = true;
            break;
        }
    }
    if !prior.enabled {
        state.center();
        let extreme = state.alpha.iter().chain(&state.beta).any(|v| v.abs() > DIVERGENCE_WARNING);
        if extreme {
            log::warn!(
                "seed {}: |alpha| or |beta| exceeds {DIVERGENCE_WARNING}; the maximum likelihood \
                 estimate may not exist (e.g. a node tied to all others), enable the prior",
                config.seed
            );
        }
    }
    let ll = loglik(network, &state)?;
    let lp = log_posterior(network, &state, &prior)?;
    if !ll.is_finite() {
        return Err(Error::Divergence { iteration: iterations, message: "log-likelihood is not finite".into() });
    }
    Ok(LayoutResult { state, loglik: ll, log_posterior: lp, iterations, converged, seed: config.seed })
}

/// One layout from a random start determined by `config.seed`.
pub fn run_layout(network: &Network, model: &ModelConfig, config: &IntegratorConfig) -> Result<LayoutResult> {
    config.validate()?;
    let init = init_state(network, config.dim, config.seed);
    simulate(network, model, config, init)
}

/// Layouts for seeds `seed, seed + 1, ...`, with the most likely one singled out.
#[derive(Debug)]
pub struct Restarts {
    pub best: LayoutResult,
    /// Successful runs in seed order.
    pub runs: Vec<LayoutResult>,
    pub failures: Vec<(u64, Error)>,
}

/// Runs `config.restarts` independent layouts and picks the one with the
/// highest plain log-likelihood (ties go to the lower seed). Fails only if
/// every run fails.
pub fn run_restarts(network: &Network, model: &ModelConfig, config: &IntegratorConfig) -> Result<Restarts> {
    config.validate()?;
    let outcomes: Vec<(u64, Result<LayoutResult>)> = (0..config.restarts as u64)
        .into_par_iter()
        .map(|k| {
            let seed = config.seed.wrapping_add(k);
            (seed, run_layout(network, model, &IntegratorConfig { seed, ..*config }))
        })
        .collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(r) => runs.push(r),
            Err(e) => failures.push((seed, e)),
        }
    }
    let best = runs
        .iter()
        .enumerate()
        .fold(None::<usize>, |best, (k, r)| match best {
            Some(b) if runs[b].loglik >= r.loglik => Some(b),
            _ => Some(k),
        })
        .map(|k| runs[k].clone());
    match best {
        Some(best) => Ok(Restarts { best, runs, failures }),
        None => Err(failures.remove(0).1),
    }
}
