//! Behaviour of the simulation as a whole: optima, improvement, restarts and
//! reproducibility.

mod common;

use common::{random_network, NetworkKind};
use latentforce::forces::degree_residuals;
use latentforce::integrator::{init_state, simulate};
use latentforce::layout_file::LayoutFile;
use latentforce::model::{log_sigmoid, softplus};
use latentforce::svg::{network_edges, render_svg, SvgOptions};
use latentforce::synthgen::{sample_latent, sample_network, FamilySpec, LatentSpec, SbmSpec};
use latentforce::{
    log_posterior, loglik, parse_edge_list, run_layout, run_restarts, IntegratorConfig, Network, PriorConfig,
};

fn frozen() -> IntegratorConfig {
    IntegratorConfig { freeze_parameters: true, max_iters: 20_000, tol: 1e-7, restarts: 1, ..Default::default() }
}

fn dist(r: &latentforce::LayoutResult, i: usize, j: usize) -> f64 {
    r.state.dist(i, j)
}

/// Maximizes `f` on [lo, hi] by a fine grid followed by a finer local grid.
fn grid_argmax(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let best = |lo: f64, hi: f64, steps: usize| {
        (0..=steps).map(|k| lo + (hi - lo) * k as f64 / steps as f64).max_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap()
    };
    let coarse = best(lo, hi, 100_000);
    let h = (hi - lo) / 100_000.0;
    best((coarse - h).max(lo), coarse + h, 10_000)
}

#[test]
fn reciprocal_pair_collapses_to_a_point() {
    let network = Network::Unweighted(parse_edge_list("a\tb\nb\ta\n", true).unwrap());
    let model = network.model_config(PriorConfig::disabled());
    // LL(d) = 2 log sigmoid(-d^2) is largest at d = 0.
    let d_star = grid_argmax(|d| 2.0 * log_sigmoid(-d * d), 0.0, 3.0);
    assert!(d_star < 1e-6);
    let r = run_layout(&network, &model, &frozen()).unwrap();
    assert!(dist(&r, 0, 1) < 1e-2, "distance {}", dist(&r, 0, 1));
}

#[test]
fn reciprocal_path_matches_grid_search() {
    let network = Network::Unweighted(parse_edge_list("a\tb\nb\ta\nb\tc\nc\tb\n", true).unwrap());
    let model = network.model_config(PriorConfig::disabled());
    // With alpha = beta = 0 and the outer nodes on opposite sides of the
    // middle one at distance d: four ties at distance d, two non-ties at 2d.
    let ll = |d: f64| 4.0 * log_sigmoid(-d * d) - 2.0 * softplus(-4.0 * d * d);
    let d_star = grid_argmax(ll, 0.0, 3.0);
    for seed in 0..3 {
        let r = run_layout(&network, &model, &IntegratorConfig { seed, ..frozen() }).unwrap();
        assert!(r.converged, "seed {seed}");
        assert!((dist(&r, 0, 1) - d_star).abs() < 1e-4, "{} vs {d_star}", dist(&r, 0, 1));
        assert!((dist(&r, 1, 2) - d_star).abs() < 1e-4);
        assert!((dist(&r, 0, 2) - 2.0 * d_star).abs() < 1e-4);
        assert!((r.loglik - ll(d_star)).abs() < 1e-8);
    }
}

#[test]
fn simulation_improves_the_objective() {
    let kinds = [
        NetworkKind::unweighted(),
        NetworkKind::unweighted().undirected(),
        NetworkKind::cumulative(),
        NetworkKind::weighted(4),
        NetworkKind::weighted(3).bipartite(),
    ];
    for (k, kind) in kinds.into_iter().enumerate() {
        for seed in 0..4u64 {
            let network = random_network(kind, 25, 0.3, seed * 31 + k as u64);
            for prior in [PriorConfig::disabled(), PriorConfig::default()] {
                let model = network.model_config(prior);
                let config = IntegratorConfig { seed, max_iters: 1500, ..Default::default() };
                let init = init_state(&network, 2, seed);
                let before = (loglik(&network, &init).unwrap(), log_posterior(&network, &init, &prior).unwrap());
                let r = simulate(&network, &model, &config, init).unwrap();
                if prior.enabled {
                    assert!(r.log_posterior >= before.1, "{kind:?} seed {seed}");
                } else {
                    assert!(r.loglik >= before.0, "{kind:?} seed {seed}");
                }
            }
        }
    }
}

#[test]
fn converged_sbm_layout_matches_expected_degrees() {
    let spec = SbmSpec { block_sizes: [100, 100], p_in: 0.5, p_out: 0.3, seed: 4 };
    let (state, _) = sample_latent(&LatentSpec::Sbm(spec), 2).unwrap();
    let (network, _) = sample_network(&state, &FamilySpec::Unweighted, 4).unwrap();
    let model = network.model_config(PriorConfig::disabled());
    let config = IntegratorConfig { seed: 4, ..Default::default() };
    let r = run_layout(&network, &model, &config).unwrap();
    assert!(r.converged);
    let Network::Unweighted(graph) = &network else { unreachable!() };
    let (out, inn) = degree_residuals(graph, &r.state).unwrap();
    let worst = out.iter().chain(&inn).fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst < 10.0 * config.tol, "worst residual {worst}");
}

#[test]
fn best_restart_has_the_highest_loglik() {
    let network = random_network(NetworkKind::unweighted(), 30, 0.2, 9);
    let model = network.model_config(PriorConfig::default());
    let config = IntegratorConfig { restarts: 4, max_iters: 800, seed: 11, ..Default::default() };
    let restarts = run_restarts(&network, &model, &config).unwrap();
    assert_eq!(restarts.runs.len(), 4);
    assert!(restarts.failures.is_empty());
    let seeds: Vec<u64> = restarts.runs.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, vec![11, 12, 13, 14]);
    assert!(restarts.runs.iter().all(|r| restarts.best.loglik >= r.loglik));
}

fn layout_artifacts(network: &Network, threads: usize) -> (String, String) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let model = network.model_config(PriorConfig::default());
        let config = IntegratorConfig { restarts: 3, max_iters: 400, seed: 5, ..Default::default() };
        let best = run_restarts(network, &model, &config).unwrap().best;
        let file = LayoutFile::from_result(&best, network, &model).unwrap();
        let svg = render_svg(&file, &network_edges(network), None, &SvgOptions::default()).unwrap();
        (file.to_json().unwrap(), svg)
    })
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    // Enough nodes to span several force blocks.
    for kind in [NetworkKind::unweighted(), NetworkKind::cumulative(), NetworkKind::weighted(3)] {
        let network = random_network(kind, 150, 0.1, 2);
        let single = layout_artifacts(&network, 1);
        assert_eq!(single, layout_artifacts(&network, 1), "{kind:?}");
        assert_eq!(single, layout_artifacts(&network, 3), "{kind:?}");
    }
}
