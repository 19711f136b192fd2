//! Force-directed network layouts that are maximum-likelihood (or MAP)
//! estimates of a latent space model.
//!
//! Each node gets a position in R^dim, an activity parameter `alpha` and a
//! popularity parameter `beta`; the probability of a tie falls with the
//! squared distance between the endpoints. The layout forces are the exact
//! gradients of the log-likelihood, integrated with damped velocity Verlet.

// Configuration checks are written as `!(x > 0.0)` on purpose: NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod forces;
pub mod graph;
pub mod integrator;
pub mod layout_file;
pub mod model;
pub mod svg;
pub mod synthgen;
pub mod validation;

pub use error::{Error, Result};
pub use forces::{forces, ForceField};
pub use graph::{parse_cumulative, parse_edge_list, CumulativeGraph, Graph, WeightedGraph};
pub use integrator::{run_layout, run_restarts, IntegratorConfig, LayoutResult};
pub use model::{log_posterior, loglik, Family, LatentState, ModelConfig, Network, PriorConfig};
