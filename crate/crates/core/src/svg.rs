//! Static SVG rendering of two-dimensional layouts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::layout_file::LayoutFile;
use crate::model::Network;

const PALETTE: [&str; 10] =
    ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"];
const UNLABELLED: &str = "#555555";

#[derive(Debug, Clone, PartialEq)]
pub struct SvgOptions {
    pub width: f64,
    pub height: f64,
    /// Margin as a fraction of the viewport size on each side.
    pub margin: f64,
    pub node_radius: f64,
    /// Opacity of the heaviest edge; lighter edges scale linearly.
    pub edge_opacity: f64,
    pub draw_edges: bool,
}

impl Default for SvgOptions {
    fn default() -> Self {
        Self { width: 1000.0, height: 1000.0, margin: 0.05, node_radius: 4.0, edge_opacity: 0.3, draw_edges: true }
    }
}

/// Parses `id,label` lines; a first line of exactly `id,label` is a header.
pub fn parse_metadata(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || (no == 0 && line.trim() == "id,label") {
            continue;
        }
        let (id, label) =
            line.split_once(',').ok_or_else(|| Error::Parse { line: no + 1, message: "expected `id,label`".into() })?;
        out.push((id.trim().to_owned(), label.trim().to_owned()));
    }
    Ok(out)
}

/// Maps layout positions into the viewport with one uniform scale factor so
/// that the wider extent exactly fills the space inside the margins.
fn fit(layout: &LayoutFile, options: &SvgOptions) -> Vec<(f64, f64)> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for n in &layout.nodes {
        for a in 0..2 {
            lo[a] = lo[a].min(n.x[a]);
            hi[a] = hi[a].max(n.x[a]);
        }
    }
    let inner = [options.width * (1.0 - 2.0 * options.margin), options.height * (1.0 - 2.0 * options.margin)];
    let scale = (0..2).filter(|&a| hi[a] > lo[a]).map(|a| inner[a] / (hi[a] - lo[a])).fold(f64::INFINITY, f64::min);
    let scale = if scale.is_finite() { scale } else { 0.0 };
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    layout
        .nodes
        .iter()
        .map(|n| {
            let x = options.width / 2.0 + (n.x[0] - mid[0]) * scale;
            let y = options.height / 2.0 - (n.x[1] - mid[1]) * scale;
            (x, y)
        })
        .collect()
}

/// Renders nodes as circles and, optionally, `edges` (indices into
/// `layout.nodes`, with weights) as lines. Labels from `metadata` override
/// labels stored in the layout; metadata ids not in the layout are skipped.
pub fn render_svg(
    layout: &LayoutFile,
    edges: &[(usize, usize, u32)],
    metadata: Option<&[(String, String)]>,
    options: &SvgOptions,
) -> Result<String> {
    if layout.dim != 2 {
        return Err(Error::Config(format!(
            "SVG export needs a 2-dimensional layout (got {}); project it to 2 dimensions first",
            layout.dim
        )));
    }
    let index: HashMap<&str, usize> = layout.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut labels: Vec<Option<String>> = layout.nodes.iter().map(|n| n.label.clone()).collect();
    if let Some(meta) = metadata {
        let mut unknown = 0usize;
        for (id, label) in meta {
            match index.get(id.as_str()) {
                Some(&i) => labels[i] = Some(label.clone()),
                None => unknown += 1,
            }
        }
        if unknown > 0 {
            log::warn!("ignoring {unknown} metadata rows with ids not present in the layout");
        }
    }
    let distinct: BTreeSet<&str> = labels.iter().flatten().map(String::as_str).collect();
    let colors: BTreeMap<&str, &str> =
        distinct.iter().enumerate().map(|(k, l)| (*l, PALETTE[k % PALETTE.len()])).collect();

    let points = fit(layout, options);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = options.width,
        h = options.height
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if options.draw_edges && !edges.is_empty() {
        let max_w = edges.iter().map(|e| e.2).max().unwrap_or(1).max(1) as f64;
        let _ = writeln!(svg, r##"<g stroke="#888888" stroke-width="0.5">"##);
        for &(s, d, w) in edges {
            let (a, b) = (points[s], points[d]);
            let _ = writeln!(
                svg,
                r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke-opacity="{:.3}"/>"#,
                a.0,
                a.1,
                b.0,
                b.1,
                options.edge_opacity * w as f64 / max_w
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    let _ = writeln!(svg, "<g>");
    for ((node, &(x, y)), label) in layout.nodes.iter().zip(&points).zip(&labels) {
        let fill = label.as_deref().and_then(|l| colors.get(l).copied()).unwrap_or(UNLABELLED);
        let _ = writeln!(
            svg,
            r#"<circle cx="{x:.3}" cy="{y:.3}" r="{r}" fill="{fill}"><title>{}</title></circle>"#,
            escape(&node.id),
            r = options.node_radius
        );
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}

/// Lines to draw for `network`, by node index: ties with their level for
/// edge lists, and adopter-to-author ties weighted by the number of adopted
/// actions for cumulative networks.
pub fn network_edges(network: &Network) -> Vec<(usize, usize, u32)> {
    match network {
        Network::Unweighted(g) => g.edges().to_vec(),
        Network::Weighted(w) => w.graph().edges().to_vec(),
        Network::Cumulative(c) => {
            let mut counts: BTreeMap<(usize, usize), u32> = BTreeMap::new();
            for action in c.actions() {
                for &adopter in &action.adopters {
                    *counts.entry((adopter, action.author)).or_default() += 1;
                }
            }
            counts.into_iter().map(|((a, b), w)| (a, b, w)).collect()
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
