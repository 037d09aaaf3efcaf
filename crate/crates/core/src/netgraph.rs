//! Directed net-pairwise spillover networks and their DOT, JSON and GraphML
//! exports.
//!
//! Edge weights are quantized to 1e-6 at construction, so the six-decimal
//! serialization is lossless and a JSON round trip is exact.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::connectedness::ConnectednessMeasures;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Transmitter,
    Receiver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub net_value: f64,
    pub role: Role,
    /// Sum of the weights of edges leaving this node.
    pub out_strength: f64,
    /// NET is exactly zero; the node is labeled a receiver.
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpilloverNetwork {
    pub scope: String,
    pub generated_from: Option<String>,
    pub threshold: f64,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
    Graphml,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(Self::Dot),
            "json" => Ok(Self::Json),
            "graphml" => Ok(Self::Graphml),
            other => Err(Error::Export(format!("unsupported format `{other}`"))),
        }
    }
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Dot => "dot",
            Self::Json => "json",
            Self::Graphml => "graphml",
        }
    }
}

fn quantize(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// One edge per pair with `|NPDC| > threshold`, pointing from the dominant
/// variable of the pair: `NPDC[(j, k)] > 0` gives `k -> j`.
pub fn build_network(m: &ConnectednessMeasures, names: &[String], threshold: f64, scope: &str) -> SpilloverNetwork {
    let n = names.len();
    let mut edges = Vec::new();
    for j in 0..n {
        for k in (j + 1)..n {
            let v = m.npdc[(j, k)];
            if v.abs() <= threshold {
                continue;
            }
            let (source, target) = if v > 0.0 { (k, j) } else { (j, k) };
            let weight = quantize(v.abs());
            if weight > 0.0 {
                edges.push(Edge {
                    source: names[source].clone(),
                    target: names[target].clone(),
                    weight,
                });
            }
        }
    }
    let nodes = names
        .iter()
        .zip(&m.net)
        .map(|(name, &net)| Node {
            name: name.clone(),
            net_value: net,
            role: if net > 0.0 { Role::Transmitter } else { Role::Receiver },
            out_strength: 0.0,
            tie: net == 0.0,
        })
        .collect();
    let mut net = SpilloverNetwork {
        scope: scope.to_string(),
        generated_from: None,
        threshold,
        nodes,
        edges,
    };
    net.canonicalize();
    net
}

impl SpilloverNetwork {
    // Sorted nodes and edges, out-strengths recomputed from the edges.
    fn canonicalize(&mut self) {
        self.nodes.sort_by(|a, b| a.name.cmp(&b.name));
        self.edges
            .sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
        for node in &mut self.nodes {
            node.out_strength = self
                .edges
                .iter()
                .filter(|e| e.source == node.name)
                .map(|e| e.weight)
                .fold(0.0, |a, b| a + b);
        }
    }

    /// Keeps the strongest `ceil(q * edges)` edges; ties in weight keep the
    /// lexicographically smaller (source, target).
    pub fn prune_top(&self, q: f64) -> Result<SpilloverNetwork> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::Export(format!("pruning fraction {q} outside (0, 1]")));
        }
        let keep = (q * self.edges.len() as f64).ceil() as usize;
        let mut edges = self.edges.clone();
        edges.sort_by(|a, b| {
            b.weight
                .total_cmp(&a.weight)
                .then_with(|| (&a.source, &a.target).cmp(&(&b.source, &b.target)))
        });
        edges.truncate(keep);
        let mut out = SpilloverNetwork { edges, ..self.clone() };
        out.canonicalize();
        Ok(out)
    }

    pub fn export(&self, format: ExportFormat) -> String {
        match format {
            ExportFormat::Dot => self.to_dot(),
            ExportFormat::Json => self.to_json(),
            ExportFormat::Graphml => self.to_graphml(),
        }
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph spillover {\n");
        let _ = writeln!(s, "  label=\"{}\";", escape_dot(&self.scope));
        for n in &self.nodes {
            let _ = writeln!(
                s,
                "  \"{}\" [role=\"{}\", net=\"{:.6}\", out_strength=\"{:.6}\"];",
                escape_dot(&n.name),
                role_str(n.role),
                n.net_value,
                n.out_strength
            );
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "  \"{}\" -> \"{}\" [weight=\"{:.6}\"];",
                escape_dot(&e.source),
                escape_dot(&e.target),
                e.weight
            );
        }
        s.push_str("}\n");
        s
    }

    /// `{scope, generated_from, threshold, nodes[], edges[]}`; node values
    /// use shortest round-trip floats, edge weights six decimals.
    pub fn to_json(&self) -> String {
        let js = |v: &str| serde_json::to_string(v).expect("string serializes");
        let num = |v: f64| serde_json::to_string(&v).expect("finite float serializes");
        let mut s = String::from("{\n");
        let _ = writeln!(s, "  \"scope\": {},", js(&self.scope));
        let gen = self.generated_from.as_deref().map_or("null".to_string(), js);
        let _ = writeln!(s, "  \"generated_from\": {gen},");
        let _ = writeln!(s, "  \"threshold\": {},", num(self.threshold));
        s.push_str("  \"nodes\": [");
        for (i, n) in self.nodes.iter().enumerate() {
            s.push_str(if i == 0 { "\n" } else { ",\n" });
            let _ = write!(
                s,
                "    {{\"name\": {}, \"net_value\": {}, \"role\": \"{}\", \"out_strength\": {}, \"tie\": {}}}",
                js(&n.name),
                num(n.net_value),
                role_str(n.role),
                num(n.out_strength),
                n.tie
            );
        }
        s.push_str("\n  ],\n  \"edges\": [");
        for (i, e) in self.edges.iter().enumerate() {
            s.push_str(if i == 0 { "\n" } else { ",\n" });
            let _ = write!(
                s,
                "    {{\"source\": {}, \"target\": {}, \"weight\": {:.6}}}",
                js(&e.source),
                js(&e.target),
                e.weight
            );
        }
        s.push_str("\n  ]\n}\n");
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn to_graphml(&self) -> String {
        let mut s = String::from(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
             <graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n\
             \x20 <key id=\"role\" for=\"node\" attr.name=\"role\" attr.type=\"string\"/>\n\
             \x20 <key id=\"net\" for=\"node\" attr.name=\"net_value\" attr.type=\"double\"/>\n\
             \x20 <key id=\"out\" for=\"node\" attr.name=\"out_strength\" attr.type=\"double\"/>\n\
             \x20 <key id=\"weight\" for=\"edge\" attr.name=\"weight\" attr.type=\"double\"/>\n",
        );
        let _ = writeln!(
            s,
            "  <graph id=\"{}\" edgedefault=\"directed\">",
            escape_xml(&self.scope)
        );
        for n in &self.nodes {
            let _ = writeln!(
                s,
                "    <node id=\"{}\"><data key=\"role\">{}</data><data key=\"net\">{:.6}</data><data key=\"out\">{:.6}</data></node>",
                escape_xml(&n.name),
                role_str(n.role),
                n.net_value,
                n.out_strength
            );
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "    <edge source=\"{}\" target=\"{}\"><data key=\"weight\">{:.6}</data></edge>",
                escape_xml(&e.source),
                escape_xml(&e.target),
                e.weight
            );
        }
        s.push_str("  </graph>\n</graphml>\n");
        s
    }
}

fn role_str(r: Role) -> &'static str {
    match r {
        Role::Transmitter => "transmitter",
        Role::Receiver => "receiver",
    }
}

fn escape_dot(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectedness::{dy_measures, GfevdMatrix, Scope};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    fn measures(theta: DMatrix<f64>) -> ConnectednessMeasures {
        dy_measures(&GfevdMatrix {
            theta,
            scope: Scope::Time { horizon: 100 },
        })
    }

    #[test]
    fn identity_gives_edgeless_receivers() {
        let net = build_network(&measures(DMatrix::identity(3, 3)), &names(3), 0.0, "time");
        assert!(net.edges.is_empty());
        assert!(net.nodes.iter().all(|n| n.role == Role::Receiver && n.tie));
        let dot = net.to_dot();
        assert_eq!(dot.matches(" [role=").count(), 3);
        assert!(!dot.contains("->"));
    }

    #[test]
    fn positive_npdc_points_from_k_to_j() {
        // theta_01 - theta_10 = 0.02 -> NPDC_01 = +2: m1 dominates m0
        let theta = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.08, 0.92]);
        let m = measures(theta);
        assert!((m.npdc[(0, 1)] - 2.0).abs() < 1e-12);
        let net = build_network(&m, &names(2), 0.0, "time");
        assert_eq!(net.edges.len(), 1);
        assert_eq!(
            (net.edges[0].source.as_str(), net.edges[0].target.as_str()),
            ("m1", "m0")
        );
        assert!((net.edges[0].weight - 2.0).abs() < 1e-6);
        assert_eq!(net.nodes[1].role, Role::Transmitter);
        assert!(build_network(&m, &names(2), 2.5, "time").edges.is_empty());
    }

    #[test]
    fn format_names_parse() {
        assert_eq!("GraphML".parse::<ExportFormat>().unwrap(), ExportFormat::Graphml);
        assert!(matches!("png".parse::<ExportFormat>(), Err(Error::Export(_))));
    }

    #[test]
    fn pruning_keeps_strongest() {
        let theta = DMatrix::from_row_slice(3, 3, &[0.7, 0.2, 0.1, 0.05, 0.9, 0.05, 0.3, 0.1, 0.6]);
        let net = build_network(&measures(theta), &names(3), 0.0, "time");
        assert_eq!(net.edges.len(), 3);
        let top = net.prune_top(0.34).unwrap();
        assert_eq!(top.edges.len(), 2);
        let min_kept = top.edges.iter().map(|e| e.weight).fold(f64::INFINITY, f64::min);
        assert!(net
            .edges
            .iter()
            .filter(|e| !top.edges.contains(e))
            .all(|e| e.weight <= min_kept));
        assert!(net.prune_top(0.0).is_err());
    }

    #[test]
    fn graphml_escapes_names() {
        let net = build_network(
            &measures(DMatrix::identity(2, 2)),
            &["a&b".into(), "<c>".into()],
            0.0,
            "t",
        );
        let g = net.to_graphml();
        assert!(g.contains("a&amp;b") && g.contains("&lt;c&gt;"));
    }

    fn theta_strategy() -> impl Strategy<Value = DMatrix<f64>> {
        (2usize..7).prop_flat_map(|n| {
            prop::collection::vec(0.001f64..1.0, n * n).prop_map(move |v| {
                let mut m = DMatrix::from_row_slice(n, n, &v);
                for mut row in m.row_iter_mut() {
                    let s = row.sum();
                    row /= s;
                }
                m
            })
        })
    }

    proptest! {
        #[test]
        fn network_invariants(theta in theta_strategy(), thr in 0.0f64..5.0) {
            let n = theta.nrows();
            let m = measures(theta);
            let nm = names(n);
            let mut net = build_network(&m, &nm, thr, "time");
            net.generated_from = Some("abc".into());
            let idx = |s: &str| nm.iter().position(|x| x == s).unwrap();
            for e in &net.edges {
                // j -> k requires NPDC_kj > threshold
                prop_assert!(m.npdc[(idx(&e.target), idx(&e.source))] > thr);
            }
            for node in &net.nodes {
                let s: f64 = net.edges.iter().filter(|e| e.source == node.name).map(|e| e.weight).fold(0.0, |a, b| a + b);
                prop_assert_eq!(node.out_strength, s);
                prop_assert_eq!(node.role == Role::Transmitter, node.net_value > 0.0);
            }
            let mut pairs: Vec<(String, String)> = net
                .edges
                .iter()
                .map(|e| if e.source < e.target { (e.source.clone(), e.target.clone()) } else { (e.target.clone(), e.source.clone()) })
                .collect();
            pairs.dedup();
            prop_assert_eq!(pairs.len(), net.edges.len());
            let text = net.to_json();
            prop_assert_eq!(&SpilloverNetwork::from_json(&text).unwrap(), &net);
            prop_assert_eq!(text, net.clone().to_json());
            prop_assert_eq!(net.to_dot(), net.clone().to_dot());
            prop_assert_eq!(net.to_graphml(), net.clone().to_graphml());
        }
    }
}
