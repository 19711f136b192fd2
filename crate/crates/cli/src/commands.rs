//! Subcommand implementations.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, ensure, Context, Result};
use serde::Serialize;

use latentforce::forces::{finite_difference_gradient, forces, gradient_error_ratio};
use latentforce::integrator::{init_state, Restarts};
use latentforce::layout_file::{write_atomic, LayoutFile};
use latentforce::svg::{network_edges, parse_metadata, render_svg, SvgOptions};
use latentforce::synthgen::{
    sample_latent, sample_network, sbm_distance, FamilySpec, GaussianClusterSpec, LatentSpec, SbmSpec,
};
use latentforce::validation::{mantel_test, recovery_report, DistanceMatrix, RecoveryReport, ReportOptions};
use latentforce::{
    log_posterior, loglik, parse_cumulative, parse_edge_list, run_restarts, Family, LatentState, LayoutResult, Network,
    PriorConfig, WeightedGraph,
};

use crate::{
    Cli, Command, GenerateCommand, LayoutArgs, LoglikArgs, NetworkArgs, RenderArgs, SampleArgs, SampleModel, Toggle,
    ValidateCommand,
};

/// Exit status for a failed command: 2 if the layout diverged, 1 otherwise.
pub fn exit_code(error: &anyhow::Error) -> u8 {
    let diverged = error
        .chain()
        .any(|e| matches!(e.downcast_ref::<latentforce::Error>(), Some(latentforce::Error::Divergence { .. })));
    if diverged {
        2
    } else {
        1
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let deterministic = matches!(&cli.command, Command::Layout(a) if a.simulation.deterministic)
        || matches!(&cli.command, Command::Validate(ValidateCommand::SbmSweep { simulation, .. }) if simulation.deterministic);
    let threads = if deterministic { Some(1) } else { cli.threads };
    if let Some(threads) = threads {
        ensure!(threads > 0, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Layout(args) => layout(&args),
        Command::Generate(cmd) => generate(&cmd),
        Command::Validate(cmd) => validate(&cmd),
        Command::Loglik(args) => loglik_command(&args),
        Command::Render(args) => render(&args),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_layout(path: &Path) -> Result<LayoutFile> {
    LayoutFile::read(path).with_context(|| format!("reading layout {}", path.display()))
}

fn load_network(args: &NetworkArgs) -> Result<Network> {
    let text = read_text(&args.input)?;
    let context = || format!("parsing {}", args.input.display());
    let network = match args.model {
        Family::Unweighted => {
            ensure!(args.levels.is_none(), "--levels only applies to the weighted model");
            ensure!(!args.bipartite, "--bipartite only applies to the weighted model");
            let graph = parse_edge_list(&text, !args.undirected).with_context(context)?;
            if graph.max_weight() > 1 {
                log::warn!("edge weights are ignored by the unweighted model");
            }
            Network::Unweighted(graph)
        }
        Family::Weighted => {
            let graph = parse_edge_list(&text, !args.undirected).with_context(context)?;
            let levels = args.levels.unwrap_or_else(|| (graph.max_weight() + 1).max(2));
            let weighted = WeightedGraph::new(graph, levels).with_context(context)?;
            if args.bipartite {
                ensure!(!args.undirected, "--bipartite needs directed rater -> item ties");
                Network::Weighted(weighted.with_bipartite_roles())
            } else {
                Network::Weighted(weighted)
            }
        }
        Family::Cumulative => {
            ensure!(!args.undirected, "the cumulative model is directed");
            ensure!(args.levels.is_none(), "--levels only applies to the weighted model");
            ensure!(!args.bipartite, "--bipartite only applies to the weighted model");
            Network::Cumulative(parse_cumulative(&text).with_context(context)?)
        }
    };
    Ok(network)
}

/// Reads the network a layout file was produced for, using the file's model.
fn load_network_for(layout: &LayoutFile, input: &Path) -> Result<Network> {
    load_network(&NetworkArgs {
        input: input.to_owned(),
        model: layout.model,
        undirected: layout.undirected,
        levels: layout.levels,
        bipartite: layout.bipartite,
    })
}

fn network_text(network: &Network) -> String {
    match network {
        Network::Unweighted(g) => g.to_edge_list(),
        Network::Weighted(w) => w.graph().to_edge_list(),
        Network::Cumulative(c) => c.to_tsv(),
    }
}

fn count_ties(network: &Network) -> usize {
    match network {
        Network::Unweighted(g) => g.n_edges(),
        Network::Weighted(w) => w.graph().n_edges(),
        Network::Cumulative(c) => c.actions().iter().map(|a| a.adopters.len()).sum(),
    }
}

fn write_svg(
    file: &LayoutFile,
    edges: &[(usize, usize, u32)],
    metadata: Option<&Path>,
    options: &SvgOptions,
    path: &Path,
) -> Result<()> {
    let metadata = metadata
        .map(|p| parse_metadata(&read_text(p)?).with_context(|| format!("parsing {}", p.display())))
        .transpose()?;
    let svg = render_svg(file, edges, metadata.as_deref(), options)?;
    write_atomic(path, svg.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn restart_table(restarts: &Restarts) -> String {
    let mut rows: Vec<(u64, String)> = restarts
        .runs
        .iter()
        .map(|r| {
            let mark = if r.seed == restarts.best.seed { "*" } else { " " };
            let line = format!(
                "{mark} {:>6} {:>18.6} {:>18.6} {:>10} {:>9}",
                r.seed, r.loglik, r.log_posterior, r.iterations, r.converged
            );
            (r.seed, line)
        })
        .collect();
    rows.extend(restarts.failures.iter().map(|(seed, e)| (*seed, format!("  {seed:>6} failed: {e}"))));
    rows.sort_by_key(|r| r.0);
    let mut out =
        format!("  {:>6} {:>18} {:>18} {:>10} {:>9}\n", "seed", "loglik", "log_posterior", "iterations", "converged");
    for (_, line) in rows {
        let _ = writeln!(out, "{line}");
    }
    out
}

fn layout(args: &LayoutArgs) -> Result<()> {
    let network = load_network(&args.network)?;
    let model = network.model_config(args.prior.config());
    model.validate()?;
    let config = args.simulation.config();
    config.validate()?;
    if args.svg.is_some() {
        ensure!(config.dim == 2, "--svg needs --dim 2 (got {})", config.dim);
    }

    if args.check_gradients {
        if network.n_nodes() > 200 {
            log::warn!("finite-difference gradient check on {} nodes will be slow", network.n_nodes());
        }
        let state = init_state(&network, config.dim, config.seed);
        let analytic = forces(&network, &state, &model.prior)?;
        let numeric = finite_difference_gradient(|s| log_posterior(&network, s, &model.prior), &state, 1e-5)?;
        let ratio = gradient_error_ratio(&analytic, &numeric, 1e-5, 1e-8);
        println!("gradient check: {} coordinates, worst error {ratio:.3} of tolerance", state.n_coords());
        ensure!(ratio <= 1.0, "analytic forces disagree with finite differences");
    }

    let restarts = run_restarts(&network, &model, &config)?;
    print!("{}", restart_table(&restarts));
    let best = &restarts.best;
    if !best.converged {
        log::warn!("best run (seed {}) stopped at --max-iters {} before converging", best.seed, config.max_iters);
    }
    let file = LayoutFile::from_result(best, &network, &model)?;
    file.write(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(svg) = &args.svg {
        write_svg(&file, &network_edges(&network), args.metadata.as_deref(), &SvgOptions::default(), svg)?;
    }
    Ok(())
}

fn family_spec(args: &SampleArgs) -> FamilySpec {
    match args.model {
        SampleModel::Unweighted => FamilySpec::Unweighted,
        SampleModel::Cumulative => {
            FamilySpec::Cumulative { actions_per_author: args.actions_per_author, beta: args.action_beta }
        }
        SampleModel::Weighted => FamilySpec::Weighted { cuts: args.cuts.clone() },
    }
}

/// The generating configuration as a layout file, labelled by block.
fn truth_file(network: &Network, truth: LatentState, labels: &[usize], seed: u64) -> Result<LayoutFile> {
    let ll = loglik(network, &truth)?;
    let result = LayoutResult { state: truth, loglik: ll, log_posterior: ll, iterations: 0, converged: true, seed };
    let model = network.model_config(PriorConfig::disabled());
    Ok(LayoutFile::from_result(&result, network, &model)?.with_labels(labels))
}

fn generate(cmd: &GenerateCommand) -> Result<()> {
    let (latent, seed, sample, dim) = match cmd {
        GenerateCommand::Sbm { n1, n2, pin, pout, seed, sample } => {
            let spec = SbmSpec { block_sizes: [*n1, *n2], p_in: *pin, p_out: *pout, seed: *seed };
            (LatentSpec::Sbm(spec), *seed, sample, 2)
        }
        GenerateCommand::Gaussian { n, clusters, sigma, sep, dim, seed, sample } => {
            let spec = GaussianClusterSpec {
                n_clusters: *clusters,
                sigma: *sigma,
                separation: *sep,
                n_nodes: *n,
                dim: *dim,
                seed: *seed,
            };
            (LatentSpec::Gaussian(spec), *seed, sample, *dim)
        }
    };
    let (state, labels) = sample_latent(&latent, dim)?;
    let (network, truth) = sample_network(&state, &family_spec(sample), seed)?;
    let file = truth_file(&network, truth, &labels, seed)?;
    write_atomic(&sample.out, network_text(&network).as_bytes())
        .with_context(|| format!("writing {}", sample.out.display()))?;
    file.write(&sample.truth).with_context(|| format!("writing {}", sample.truth.display()))?;
    println!("nodes={}", network.n_nodes());
    println!("ties={}", count_ties(&network));
    if let LatentSpec::Sbm(spec) = latent {
        println!("expected_distance={}", sbm_distance(spec.p_in, spec.p_out)?);
    }
    println!("truth_loglik={}", file.loglik);
    Ok(())
}

#[derive(Debug, Serialize)]
struct SweepRecord {
    p_out: f64,
    run: usize,
    seed: u64,
    iterations: usize,
    converged: bool,
    report: RecoveryReport,
}

fn validate(cmd: &ValidateCommand) -> Result<()> {
    match cmd {
        ValidateCommand::SbmSweep { pouts, runs, pin, n1, n2, permutations, simulation, prior, report } => {
            ensure!(*runs > 0, "--runs must be at least 1");
            let prior = if *prior == Toggle::On { PriorConfig::default() } else { PriorConfig::disabled() };
            let base = simulation.config();
            base.validate()?;
            println!(
                "{:>8} {:>4} {:>10} {:>10} {:>10} {:>12} {:>9}",
                "p_out", "run", "expected", "inferred", "rel_error", "loglik_gap", "converged"
            );
            let mut records = Vec::new();
            let mut summary = Vec::new();
            for &p_out in pouts {
                let expected = sbm_distance(*pin, p_out)?;
                let mut inferred = Vec::new();
                for run in 0..*runs {
                    let seed = base.seed.wrapping_add(run as u64);
                    let spec = SbmSpec { block_sizes: [*n1, *n2], p_in: *pin, p_out, seed };
                    let (state, labels) = sample_latent(&LatentSpec::Sbm(spec), base.dim)?;
                    let (network, truth) = sample_network(&state, &FamilySpec::Unweighted, seed)?;
                    let model = network.model_config(prior);
                    let config = latentforce::IntegratorConfig { seed, ..base };
                    let best = run_restarts(&network, &model, &config)?.best;
                    let options =
                        ReportOptions { permutations: *permutations, seed, expected_distance: Some(expected) };
                    let rep = recovery_report(&truth, &best.state, &network, &labels, &options)?;
                    println!(
                        "{p_out:>8} {run:>4} {expected:>10.4} {:>10.4} {:>10.4} {:>12.3} {:>9}",
                        rep.com_distance_inferred,
                        (rep.com_distance_inferred - expected).abs() / expected,
                        rep.loglik_gap,
                        best.converged
                    );
                    inferred.push(rep.com_distance_inferred);
                    records.push(SweepRecord {
                        p_out,
                        run,
                        seed,
                        iterations: best.iterations,
                        converged: best.converged,
                        report: rep,
                    });
                }
                let mean = inferred.iter().sum::<f64>() / inferred.len() as f64;
                summary.push((p_out, expected, mean));
            }
            println!();
            println!("{:>8} {:>10} {:>14} {:>10}", "p_out", "expected", "mean_inferred", "rel_error");
            for (p_out, expected, mean) in summary {
                println!("{p_out:>8} {expected:>10.4} {mean:>14.4} {:>10.4}", (mean - expected).abs() / expected);
            }
            let negative = records.iter().filter(|r| r.report.loglik_gap < 0.0).count();
            if negative > 0 {
                log::warn!("{negative} runs ended below the ground-truth log-likelihood");
            }
            if let Some(path) = report {
                let json = serde_json::to_string_pretty(&records)? + "\n";
                write_atomic(path, json.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(())
        }
        ValidateCommand::Mantel { truth, layout, permutations, seed } => {
            let truth = read_layout(truth)?;
            let layout = read_layout(layout)?;
            let aligned = align_positions(&truth, &layout)?;
            let result = mantel_test(
                &DistanceMatrix::from_state(&truth.positions()),
                &DistanceMatrix::from_state(&aligned),
                *permutations,
                *seed,
            )?;
            println!("r={}", result.r);
            println!("z={}", result.z);
            println!("permutations={}", result.permutations);
            println!("seed={}", result.seed);
            Ok(())
        }
    }
}

/// Positions of `layout` reordered to follow the node order of `truth`.
fn align_positions(truth: &LayoutFile, layout: &LayoutFile) -> Result<LatentState> {
    ensure!(
        truth.nodes.len() == layout.nodes.len(),
        "layouts have different node counts ({} and {})",
        truth.nodes.len(),
        layout.nodes.len()
    );
    let index: HashMap<&str, usize> = layout.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let positions = layout.positions();
    let mut aligned = LatentState::zeros(truth.nodes.len(), layout.dim, 0, 0);
    for (i, node) in truth.nodes.iter().enumerate() {
        let &j = index.get(node.id.as_str()).ok_or_else(|| anyhow!("node {:?} missing from layout", node.id))?;
        aligned.position_mut(i).copy_from_slice(positions.position(j));
    }
    Ok(aligned)
}

fn loglik_command(args: &LoglikArgs) -> Result<()> {
    let file = read_layout(&args.layout)?;
    let network = load_network_for(&file, &args.input)?;
    let state = file.to_state(&network)?;
    println!("loglik={}", loglik(&network, &state)?);
    println!("log_posterior={}", log_posterior(&network, &state, &file.prior_config())?);
    Ok(())
}

fn render(args: &RenderArgs) -> Result<()> {
    let file = read_layout(&args.layout)?;
    let edges = match &args.input {
        Some(input) => {
            let network = load_network_for(&file, input)?;
            let index: HashMap<&str, usize> = file.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
            let ids = network.node_ids();
            let position = |k: usize| {
                index.get(ids[k].as_str()).copied().ok_or_else(|| anyhow!("node {:?} missing from layout", ids[k]))
            };
            network_edges(&network)
                .into_iter()
                .map(|(a, b, w)| Ok((position(a)?, position(b)?, w)))
                .collect::<Result<Vec<_>>>()?
        }
        None => Vec::new(),
    };
    if args.width <= 0.0 || args.height <= 0.0 {
        bail!("--width and --height must be positive");
    }
    let options = SvgOptions { width: args.width, height: args.height, ..SvgOptions::default() };
    write_svg(&file, &edges, args.metadata.as_deref(), &options, &args.svg)
}
