//! JSON layout documents: the fitted (or generating) state together with the
//! node-id mapping and fit diagnostics.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::LayoutResult;
use crate::model::{Family, LatentState, ModelConfig, Network, PriorConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub x: Vec<f64>,
    pub alpha: f64,
    /// Absent for undirected and cumulative layouts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub author_id: String,
    pub action_id: String,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorRecord {
    pub enabled: bool,
    pub sigma_alpha: f64,
    pub sigma_beta: f64,
    pub sigma_pos: f64,
}

impl From<PriorConfig> for PriorRecord {
    fn from(p: PriorConfig) -> Self {
        Self { enabled: p.enabled, sigma_alpha: p.sigma_alpha, sigma_beta: p.sigma_beta, sigma_pos: p.sigma_pos }
    }
}

impl From<PriorRecord> for PriorConfig {
    fn from(p: PriorRecord) -> Self {
        Self { enabled: p.enabled, sigma_alpha: p.sigma_alpha, sigma_beta: p.sigma_beta, sigma_pos: p.sigma_pos }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutFile {
    pub model: Family,
    #[serde(default)]
    pub undirected: bool,
    /// Weighted layouts whose likelihood only covers rater-to-rated pairs.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub bipartite: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<u32>,
    pub dim: usize,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub loglik: f64,
    pub log_posterior: f64,
    pub prior: PriorRecord,
    #[serde(default)]
    pub cuts: Vec<f64>,
    pub nodes: Vec<NodeRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<ActionRecord>,
}

impl LayoutFile {
    pub fn from_result(result: &LayoutResult, network: &Network, model: &ModelConfig) -> Result<Self> {
        let state = &result.state;
        state.check_shape(network)?;
        let per_node_beta = !matches!(network, Network::Cumulative(_)) && !network.is_undirected();
        let nodes = network
            .node_ids()
            .iter()
            .enumerate()
            .map(|(i, id)| NodeRecord {
                id: id.clone(),
                x: state.position(i).to_vec(),
                alpha: state.alpha[i],
                beta: per_node_beta.then(|| state.beta[i]),
                label: None,
            })
            .collect();
        let actions = match network {
            Network::Cumulative(c) => c
                .actions()
                .iter()
                .zip(&state.beta)
                .map(|(a, &beta)| ActionRecord {
                    author_id: c.node_ids()[a.author].clone(),
                    action_id: a.id.clone(),
                    beta,
                })
                .collect(),
            _ => Vec::new(),
        };
        Ok(Self {
            model: network.family(),
            undirected: network.is_undirected(),
            bipartite: matches!(network, Network::Weighted(w) if w.roles().is_some()),
            levels: (network.family() == Family::Weighted).then_some(model.levels),
            dim: state.dim,
            seed: result.seed,
            iterations: result.iterations,
            converged: result.converged,
            loglik: result.loglik,
            log_posterior: result.log_posterior,
            prior: model.prior.into(),
            cuts: state.cuts.clone(),
            nodes,
            actions,
        })
    }

    /// Attaches a label to every node, in node-record order.
    pub fn with_labels(mut self, labels: &[usize]) -> Self {
        for (node, label) in self.nodes.iter_mut().zip(labels) {
            node.label = Some(label.to_string());
        }
        self
    }

    pub fn prior_config(&self) -> PriorConfig {
        self.prior.into()
    }

    /// Rebuilds the latent state in `network`'s node order. The node id set
    /// (and action set, for cumulative networks) must match exactly.
    pub fn to_state(&self, network: &Network) -> Result<LatentState> {
        if self.model != network.family() {
            return Err(Error::Validation(format!(
                "layout is for a {} model, network is {}",
                self.model,
                network.family()
            )));
        }
        let ids = network.node_ids();
        if ids.len() != self.nodes.len() {
            return Err(Error::Validation(format!("layout has {} nodes, network has {}", self.nodes.len(), ids.len())));
        }
        let by_id: HashMap<&str, &NodeRecord> = self.nodes.iter().map(|r| (r.id.as_str(), r)).collect();
        if by_id.len() != self.nodes.len() {
            return Err(Error::Validation("layout contains duplicate node ids".into()));
        }
        let mut state = LatentState::zeros(ids.len(), self.dim, network.beta_len(), network.cuts_len());
        let per_node_beta = state.beta.len() == ids.len() && !matches!(network, Network::Cumulative(_));
        for (i, id) in ids.iter().enumerate() {
            let rec =
                by_id.get(id.as_str()).ok_or_else(|| Error::Validation(format!("node {id:?} missing from layout")))?;
            if rec.x.len() != self.dim {
                return Err(Error::Validation(format!("node {id:?} has {} coordinates", rec.x.len())));
            }
            state.position_mut(i).copy_from_slice(&rec.x);
            state.alpha[i] = rec.alpha;
            if per_node_beta {
                state.beta[i] = rec.beta.ok_or_else(|| Error::Validation(format!("node {id:?} has no beta")))?;
            }
        }
        if let Network::Cumulative(c) = network {
            let by_action: HashMap<(&str, &str), f64> =
                self.actions.iter().map(|a| ((a.author_id.as_str(), a.action_id.as_str()), a.beta)).collect();
            if by_action.len() != c.n_actions() || self.actions.len() != c.n_actions() {
                return Err(Error::Validation(format!(
                    "layout has {} actions, network has {}",
                    self.actions.len(),
                    c.n_actions()
                )));
            }
            for (k, a) in c.actions().iter().enumerate() {
                let key = (c.node_ids()[a.author].as_str(), a.id.as_str());
                state.beta[k] = *by_action.get(&key).ok_or_else(|| {
                    Error::Validation(format!("action {:?} of {:?} missing from layout", key.1, key.0))
                })?;
            }
        }
        if self.cuts.len() != state.cuts.len() {
            return Err(Error::Validation(format!(
                "layout has {} cut points, network needs {}",
                self.cuts.len(),
                state.cuts.len()
            )));
        }
        state.cuts.copy_from_slice(&self.cuts);
        state.check_shape(network)?;
        Ok(state)
    }

    /// Node positions in file order, as a state with zero parameters.
    pub fn positions(&self) -> LatentState {
        let mut s = LatentState::zeros(self.nodes.len(), self.dim, 0, 0);
        for (i, rec) in self.nodes.iter().enumerate() {
            s.position_mut(i).copy_from_slice(&rec.x);
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_cumulative, parse_edge_list};
    use crate::integrator::{run_layout, IntegratorConfig};

    #[test]
    fn round_trip_keeps_every_number() {
        let net = Network::Unweighted(parse_edge_list("a\tb\nb\tc\nc\ta\n", true).unwrap());
        let model = net.model_config(PriorConfig::default());
        let config = IntegratorConfig { max_iters: 50, ..Default::default() };
        let result = run_layout(&net, &model, &config).unwrap();
        let file = LayoutFile::from_result(&result, &net, &model).unwrap();
        let back = LayoutFile::from_json(&file.to_json().unwrap()).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_state(&net).unwrap(), result.state);
    }

    #[test]
    fn cumulative_actions_are_recorded() {
        let net = Network::Cumulative(parse_cumulative("j\tt1\ti\nj\tt2\tk\ni\tt1\tj\n").unwrap());
        let model = net.model_config(PriorConfig::default());
        let mut state = LatentState::for_network(&net, 2);
        state.beta = vec![0.25, -0.5, 1.0];
        let result = LayoutResult { state, loglik: -1.0, log_posterior: -1.5, iterations: 0, converged: true, seed: 0 };
        let file = LayoutFile::from_result(&result, &net, &model).unwrap();
        assert_eq!(file.actions.len(), 3);
        assert!(file.nodes.iter().all(|n| n.beta.is_none()));
        assert_eq!(file.to_state(&net).unwrap().beta, vec![0.25, -0.5, 1.0]);
    }

    #[test]
    fn id_mismatch_is_rejected() {
        let net = Network::Unweighted(parse_edge_list("a\tb\n", true).unwrap());
        let other = Network::Unweighted(parse_edge_list("a\tc\n", true).unwrap());
        let model = net.model_config(PriorConfig::default());
        let result = LayoutResult {
            state: LatentState::for_network(&net, 2),
            loglik: 0.0,
            log_posterior: 0.0,
            iterations: 0,
            converged: true,
            seed: 0,
        };
        let file = LayoutFile::from_result(&result, &net, &model).unwrap();
        assert!(file.to_state(&other).is_err());
    }
}
