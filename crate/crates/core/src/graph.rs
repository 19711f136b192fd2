//! Network containers and the tab-separated input formats.
//!
//! Node identifiers are opaque strings interned to dense indices in order of
//! first appearance. Edge lists are `src \t dst [\t weight]` lines; a line with
//! a single field declares a node without edges so that isolated nodes survive
//! a write/read cycle. Cumulative files are `author \t action \t adopter` lines;
//! a line with an empty or missing adopter declares an action nobody adopted,
//! and a single field again declares a node.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Interns string ids to dense indices in first-appearance order.
#[derive(Debug, Default, Clone)]
pub struct NodeInterner {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl NodeInterner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn into_ids(self) -> Vec<String> {
        self.ids
    }
}

/// Integer-weighted network over dense node indices.
///
/// Directed graphs keep one record per ordered pair. Undirected graphs keep
/// one record per unordered pair (stored as `src < dst`) and expose it in
/// both directions through [`Graph::out_neighbors`] and [`Graph::weight`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    node_ids: Vec<String>,
    edges: Vec<(usize, usize, u32)>,
    directed: bool,
    out_adj: Vec<Vec<(usize, u32)>>,
    in_adj: Vec<Vec<(usize, u32)>>,
}

impl Graph {
    /// Builds a graph, validating indices, self-loops and duplicate records.
    /// Zero-weight records carry no tie and are dropped.
    pub fn new(
        node_ids: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize, u32)>,
        directed: bool,
    ) -> Result<Self> {
        let n = node_ids.len();
        {
            let mut seen = HashMap::with_capacity(n);
            for id in &node_ids {
                if seen.insert(id.as_str(), ()).is_some() {
                    return Err(Error::InvalidGraph(format!("duplicate node id {id:?}")));
                }
            }
        }
        let mut records: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for (src, dst, w) in edges {
            if src >= n || dst >= n {
                return Err(Error::InvalidGraph(format!("edge ({src}, {dst}) references a node outside 0..{n}")));
            }
            if src == dst {
                return Err(Error::InvalidGraph(format!("self-loop on node {src}")));
            }
            if w == 0 {
                continue;
            }
            let key = if directed { (src, dst) } else { (src.min(dst), src.max(dst)) };
            match records.insert(key, w) {
                Some(prev) if prev != w => {
                    return Err(Error::InvalidGraph(format!("conflicting weights {prev} and {w} for ({src}, {dst})")))
                }
                _ => {}
            }
        }
        let edges: Vec<_> = records.into_iter().map(|((s, d), w)| (s, d, w)).collect();
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for &(s, d, w) in &edges {
            out_adj[s].push((d, w));
            in_adj[d].push((s, w));
            if !directed {
                out_adj[d].push((s, w));
                in_adj[s].push((d, w));
            }
        }
        for list in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            list.sort_unstable();
        }
        Ok(Self { node_ids, edges, directed, out_adj, in_adj })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Stored edge records; undirected graphs list each pair once.
    pub fn edges(&self) -> &[(usize, usize, u32)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Targets of ties leaving `node`, sorted by index.
    pub fn out_neighbors(&self, node: usize) -> &[(usize, u32)] {
        &self.out_adj[node]
    }

    /// Sources of ties entering `node`, sorted by index.
    pub fn in_neighbors(&self, node: usize) -> &[(usize, u32)] {
        &self.in_adj[node]
    }

    /// Weight of the tie `src -> dst`, or 0 when absent.
    pub fn weight(&self, src: usize, dst: usize) -> u32 {
        let row = &self.out_adj[src];
        match row.binary_search_by_key(&dst, |&(j, _)| j) {
            Ok(pos) => row[pos].1,
            Err(_) => 0,
        }
    }

    pub fn max_weight(&self) -> u32 {
        self.edges.iter().map(|e| e.2).max().unwrap_or(0)
    }

    /// `(out_degree, in_degree)` as counts of edge records.
    pub fn degree(&self, node: usize) -> (usize, usize) {
        (self.out_adj[node].len(), self.in_adj[node].len())
    }

    /// Renders the graph as an edge list that [`parse_edge_list`] reads back
    /// to an identical graph. All nodes are declared first, in index order.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for id in &self.node_ids {
            let _ = writeln!(out, "{id}");
        }
        for &(s, d, w) in &self.edges {
            let (s, d) = (&self.node_ids[s], &self.node_ids[d]);
            if w == 1 {
                let _ = writeln!(out, "{s}\t{d}");
            } else {
                let _ = writeln!(out, "{s}\t{d}\t{w}");
            }
        }
        out
    }
}

/// Which side of a bipartite rating network a node sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRole {
    /// Node emits ratings and carries an activity parameter.
    pub rater: bool,
    /// Node receives ratings and carries a popularity parameter.
    pub rated: bool,
}

impl NodeRole {
    pub const BOTH: NodeRole = NodeRole { rater: true, rated: true };
}

/// Ordinal network with levels `0..levels`; unrecorded pairs sit at level 0.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    graph: Graph,
    levels: u32,
    roles: Option<Vec<NodeRole>>,
}

impl WeightedGraph {
    pub fn new(graph: Graph, levels: u32) -> Result<Self> {
        if levels < 2 {
            return Err(Error::Config(format!("level count must be at least 2, got {levels}")));
        }
        if let Some(&(_, _, w)) = graph.edges().iter().find(|e| e.2 > levels - 1) {
            return Err(Error::LevelOutOfRange { level: w, levels });
        }
        Ok(Self { graph, levels, roles: None })
    }

    /// Restricts the likelihood to rater -> rated pairs. Raters are nodes with
    /// outgoing records, rated nodes are those with incoming records.
    pub fn with_bipartite_roles(mut self) -> Self {
        let roles = (0..self.graph.n_nodes())
            .map(|i| {
                let (out, inn) = self.graph.degree(i);
                NodeRole { rater: out > 0, rated: inn > 0 }
            })
            .collect();
        self.roles = Some(roles);
        self
    }

    pub fn with_roles(mut self, roles: Vec<NodeRole>) -> Result<Self> {
        if roles.len() != self.graph.n_nodes() {
            return Err(Error::Shape(format!("{} roles for {} nodes", roles.len(), self.graph.n_nodes())));
        }
        self.roles = Some(roles);
        Ok(self)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn roles(&self) -> Option<&[NodeRole]> {
        self.roles.as_deref()
    }

    pub fn role(&self, node: usize) -> NodeRole {
        self.roles.as_ref().map_or(NodeRole::BOTH, |r| r[node])
    }

    /// Whether the ordered pair `(src, dst)` enters the likelihood.
    pub fn pair_included(&self, src: usize, dst: usize) -> bool {
        src != dst && self.role(src).rater && self.role(dst).rated
    }

    pub fn level(&self, src: usize, dst: usize) -> u32 {
        self.graph.weight(src, dst)
    }
}

/// One action (e.g. a post) and the nodes that adopted it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub author: usize,
    pub id: String,
    /// Sorted, duplicate-free adopter indices; never contains `author`.
    pub adopters: Vec<usize>,
}

/// Superposition of per-action star graphs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CumulativeGraph {
    node_ids: Vec<String>,
    actions: Vec<Action>,
    by_author: Vec<Vec<usize>>,
    adopted: Vec<Vec<usize>>,
}

impl CumulativeGraph {
    pub fn new(node_ids: Vec<String>, actions: Vec<Action>) -> Result<Self> {
        let n = node_ids.len();
        let mut by_author = vec![Vec::new(); n];
        let mut adopted = vec![Vec::new(); n];
        let mut keys = HashMap::new();
        for (k, action) in actions.iter().enumerate() {
            if action.author >= n {
                return Err(Error::InvalidGraph(format!("action {:?} has author outside 0..{n}", action.id)));
            }
            if keys.insert((action.author, action.id.as_str()), ()).is_some() {
                return Err(Error::InvalidGraph(format!(
                    "action {:?} listed twice for author {}",
                    action.id, action.author
                )));
            }
            if action.adopters.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidGraph(format!(
                    "adopters of action {:?} must be sorted and unique",
                    action.id
                )));
            }
            for &i in &action.adopters {
                if i >= n {
                    return Err(Error::InvalidGraph(format!("adopter {i} of action {:?} outside 0..{n}", action.id)));
                }
                if i == action.author {
                    return Err(Error::InvalidGraph(format!("author {i} adopts own action {:?}", action.id)));
                }
                adopted[i].push(k);
            }
            by_author[action.author].push(k);
        }
        Ok(Self { node_ids, actions, by_author, adopted })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    /// Indices of the actions authored by `node`.
    pub fn actions_by(&self, node: usize) -> &[usize] {
        &self.by_author[node]
    }

    /// Number of actions authored by `node` (m_j).
    pub fn action_count(&self, node: usize) -> usize {
        self.by_author[node].len()
    }

    /// Indices of actions adopted by `node`, ascending.
    pub fn adopted_by(&self, node: usize) -> &[usize] {
        &self.adopted[node]
    }

    /// Serializes with every node declared first (one id per line), so that
    /// parsing reproduces node order and isolated nodes.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for id in &self.node_ids {
            let _ = writeln!(out, "{id}");
        }
        for action in &self.actions {
            let author = &self.node_ids[action.author];
            if action.adopters.is_empty() {
                let _ = writeln!(out, "{author}\t{}", action.id);
            }
            for &i in &action.adopters {
                let _ = writeln!(out, "{author}\t{}\t{}", action.id, self.node_ids[i]);
            }
        }
        out
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(no, raw)| {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            return None;
        }
        Some((no + 1, line.split('\t').map(str::trim).collect()))
    })
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Parses `src \t dst [\t weight]` lines into a [`Graph`].
pub fn parse_edge_list(text: &str, directed: bool) -> Result<Graph> {
    let mut nodes = NodeInterner::new();
    let mut records: HashMap<(usize, usize), u32> = HashMap::new();
    let mut edges = Vec::new();
    for (line, fields) in data_lines(text) {
        match fields.as_slice() {
            [id] => {
                if id.is_empty() {
                    return Err(parse_err(line, "empty node id"));
                }
                nodes.intern(id);
            }
            [src, dst, rest @ ..] => {
                if src.is_empty() || dst.is_empty() {
                    return Err(parse_err(line, "empty node id"));
                }
                let weight = match rest {
                    [] => 1,
                    [w] => w
                        .parse::<u32>()
                        .map_err(|_| parse_err(line, format!("weight {w:?} is not a non-negative integer")))?,
                    _ => return Err(parse_err(line, "expected at most three fields")),
                };
                if src == dst {
                    return Err(parse_err(line, format!("self-loop on {src:?}")));
                }
                let (s, d) = (nodes.intern(src), nodes.intern(dst));
                let key = if directed { (s, d) } else { (s.min(d), s.max(d)) };
                match records.get(&key) {
                    Some(&prev) if prev != weight => {
                        return Err(parse_err(
                            line,
                            format!("conflicting weight {weight} for {src:?} -> {dst:?} (earlier {prev})"),
                        ))
                    }
                    Some(_) => {}
                    None => {
                        records.insert(key, weight);
                        edges.push((s, d, weight));
                    }
                }
            }
            [] => unreachable!("blank lines are filtered"),
        }
    }
    Graph::new(nodes.into_ids(), edges, directed)
}

/// Parses `author \t action \t adopter` lines into a [`CumulativeGraph`].
pub fn parse_cumulative(text: &str) -> Result<CumulativeGraph> {
    let mut nodes = NodeInterner::new();
    let mut index: HashMap<(usize, String), usize> = HashMap::new();
    let mut groups: Vec<(usize, String, Vec<usize>)> = Vec::new();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    for (line, fields) in data_lines(text) {
        let (author, action, adopter) = match fields.as_slice() {
            [node] if !node.is_empty() => {
                nodes.intern(node);
                continue;
            }
            [a, t] => (*a, *t, ""),
            [a, t, i] => (*a, *t, *i),
            _ => return Err(parse_err(line, "expected `author \\t action \\t adopter`")),
        };
        if author.is_empty() || action.is_empty() {
            return Err(parse_err(line, "empty author or action id"));
        }
        if author == adopter {
            return Err(parse_err(line, format!("{author:?} adopts own action {action:?}")));
        }
        let a = nodes.intern(author);
        let slot = *index.entry((a, action.to_owned())).or_insert_with(|| {
            groups.push((a, action.to_owned(), Vec::new()));
            groups.len() - 1
        });
        if !adopter.is_empty() {
            let i = nodes.intern(adopter);
            if !seen.insert((slot, i)) {
                return Err(parse_err(line, format!("{adopter:?} adopts action {action:?} of {author:?} twice")));
            }
            groups[slot].2.push(i);
        }
    }
    let actions = groups
        .into_iter()
        .map(|(author, id, mut adopters)| {
            adopters.sort_unstable();
            Action { author, id, adopters }
        })
        .collect();
    CumulativeGraph::new(nodes.into_ids(), actions)
}
