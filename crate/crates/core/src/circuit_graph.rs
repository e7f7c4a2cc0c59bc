//! Undirected component/junction graph of a netlist.
//!
//! Every component becomes a graph node. A netlist node touched by more than
//! two terminals becomes a junction node joined to each attached component;
//! a netlist node touched by exactly two terminals joins its two components
//! directly. Duplicate edges are collapsed.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::netlist::{node_incidence, ComponentKind, Netlist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GraphNodeKind {
    Component(ComponentKind),
    Junction,
}

impl GraphNodeKind {
    /// Position of the hot entry in the type one-hot vector.
    pub fn one_hot_index(self) -> usize {
        match self {
            GraphNodeKind::Component(ComponentKind::Resistor) => 0,
            GraphNodeKind::Component(ComponentKind::VoltageSource) => 1,
            GraphNodeKind::Component(ComponentKind::CurrentSource) => 2,
            GraphNodeKind::Junction => 3,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            GraphNodeKind::Component(ComponentKind::Resistor) => "R",
            GraphNodeKind::Component(ComponentKind::VoltageSource) => "V",
            GraphNodeKind::Component(ComponentKind::CurrentSource) => "I",
            GraphNodeKind::Junction => "J",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub type_one_hot: [f64; 4],
    pub degree: usize,
    pub centrality: f64,
}

impl FeatureVector {
    fn for_kind(kind: GraphNodeKind) -> Self {
        let mut type_one_hot = [0.0; 4];
        type_one_hot[kind.one_hot_index()] = 1.0;
        FeatureVector {
            type_one_hot,
            degree: 0,
            centrality: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub kind: GraphNodeKind,
    pub label: String,
    pub features: FeatureVector,
}

/// Centrality measure stored in node features.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Centrality {
    /// `(r - 1) / Σ d(v, u)` over the `r` nodes reachable from `v`.
    #[default]
    Closeness,
    /// `deg(v) / (n - 1)`.
    Degree,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphWarning {
    DisconnectedCircuit { components: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitGraph {
    pub nodes: Vec<GraphNode>,
    /// Unordered pairs stored as `(min, max)`, sorted.
    pub edges: Vec<(usize, usize)>,
    pub source_netlist_title: Option<String>,
    pub warnings: Vec<GraphWarning>,
}

impl CircuitGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn junction_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.kind == GraphNodeKind::Junction)
            .count()
    }

    pub fn find(&self, label: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.label == label)
    }

    /// Number of connected components (0 for an empty graph).
    pub fn connected_components(&self) -> usize {
        let adj = self.adjacency();
        let mut seen = vec![false; self.nodes.len()];
        let mut count = 0;
        for start in 0..self.nodes.len() {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &u in &adj[v] {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
        count
    }

    /// Copy with nodes reordered so that new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> CircuitGraph {
        assert_eq!(perm.len(), self.nodes.len());
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (inverse[a], inverse[b]);
                (x.min(y), x.max(y))
            })
            .collect();
        edges.sort_unstable();
        CircuitGraph {
            nodes: perm.iter().map(|&i| self.nodes[i].clone()).collect(),
            edges,
            source_netlist_title: self.source_netlist_title.clone(),
            warnings: self.warnings.clone(),
        }
    }

    /// Deterministic text table: nodes with features, then edges.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# nodes: {}  edges: {}", self.nodes.len(), self.edges.len());
        let _ = writeln!(out, "idx\tlabel\ttype\tdegree\tcentrality");
        for (i, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.6}",
                i,
                n.label,
                n.kind.tag(),
                n.features.degree,
                n.features.centrality
            );
        }
        let _ = writeln!(out, "# edges");
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "{}\t{}", self.nodes[a].label, self.nodes[b].label);
        }
        for w in &self.warnings {
            let GraphWarning::DisconnectedCircuit { components } = w;
            let _ = writeln!(out, "# warning: circuit splits into {components} disconnected parts");
        }
        out
    }

    /// Graphviz rendering for documentation figures.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph circuit {\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let shape = if n.kind == GraphNodeKind::Junction {
                "point"
            } else {
                "circle"
            };
            let _ = writeln!(out, "  n{} [label=\"{}\", shape={}];", i, n.label, shape);
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "  n{a} -- n{b};");
        }
        out.push_str("}\n");
        out
    }
}

/// Builds the graph and fills features with closeness centrality.
pub fn build_graph(netlist: &Netlist) -> CircuitGraph {
    build_graph_with(netlist, Centrality::Closeness)
}

pub fn build_graph_with(netlist: &Netlist, centrality: Centrality) -> CircuitGraph {
    let mut nodes: Vec<GraphNode> = netlist
        .components
        .iter()
        .map(|c| {
            let kind = GraphNodeKind::Component(c.kind);
            GraphNode {
                kind,
                label: c.name.clone(),
                features: FeatureVector::for_kind(kind),
            }
        })
        .collect();
    let index_of = |name: &str| {
        netlist
            .components
            .iter()
            .position(|c| c.name == name)
            .expect("incidence names come from the netlist")
    };

    let mut edges = BTreeSet::new();
    for (label, terms) in node_incidence(netlist) {
        let members: Vec<usize> = terms.iter().map(|(name, _)| index_of(name)).collect();
        match members.len() {
            0 | 1 => {}
            2 => {
                let (a, b) = (members[0], members[1]);
                if a != b {
                    edges.insert((a.min(b), a.max(b)));
                }
            }
            _ => {
                let junction = nodes.len();
                nodes.push(GraphNode {
                    kind: GraphNodeKind::Junction,
                    label: label.short(),
                    features: FeatureVector::for_kind(GraphNodeKind::Junction),
                });
                for m in members {
                    edges.insert((m, junction));
                }
            }
        }
    }

    let mut graph = CircuitGraph {
        nodes,
        edges: edges.into_iter().collect(),
        source_netlist_title: netlist.title.clone(),
        warnings: Vec::new(),
    };
    let parts = graph.connected_components();
    if parts > 1 {
        graph.warnings.push(GraphWarning::DisconnectedCircuit { components: parts });
    }
    compute_features(&mut graph, centrality);
    graph
}

/// Fills degree, centrality and one-hot type for every node.
pub fn compute_features(graph: &mut CircuitGraph, centrality: Centrality) {
    let adj = graph.adjacency();
    let n = graph.nodes.len();
    for v in 0..n {
        let degree = adj[v].len();
        let c = match centrality {
            Centrality::Closeness => closeness(&adj, v),
            Centrality::Degree => {
                if n > 1 {
                    degree as f64 / (n - 1) as f64
                } else {
                    0.0
                }
            }
        };
        let node = &mut graph.nodes[v];
        node.features = FeatureVector::for_kind(node.kind);
        node.features.degree = degree;
        node.features.centrality = c;
    }
}

fn closeness(adj: &[Vec<usize>], source: usize) -> f64 {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    let mut total = 0usize;
    let mut reached = 0usize;
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                total += dist[u];
                reached += 1;
                queue.push_back(u);
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        reached as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{parse_netlist, SERIES_EXAMPLE_NETLIST, SEVEN_COMPONENT_NETLIST};

    fn edge_labels(g: &CircuitGraph) -> BTreeSet<(String, String)> {
        g.edges
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (g.nodes[a].label.clone(), g.nodes[b].label.clone());
                if x < y {
                    (x, y)
                } else {
                    (y, x)
                }
            })
            .collect()
    }

    #[test]
    fn seven_component_graph_matches_figure() {
        let g = build_graph(&parse_netlist(SEVEN_COMPONENT_NETLIST).unwrap());
        assert_eq!(g.node_count(), 9);
        assert_eq!(g.edge_count(), 10);
        let expected: BTreeSet<(String, String)> = [
            ("R2", "U1"),
            ("N2", "R2"),
            ("N2", "R5"),
            ("R5", "R6"),
            ("N6", "R6"),
            ("N6", "R1"),
            ("R1", "U1"),
            ("N2", "R3"),
            ("R3", "R4"),
            ("N6", "R4"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        assert_eq!(edge_labels(&g), expected);
        for j in ["N2", "N6"] {
            let i = g.find(j).unwrap();
            assert_eq!(g.nodes[i].kind, GraphNodeKind::Junction);
            assert_eq!(g.nodes[i].features.degree, 3);
        }
        assert!(g.warnings.is_empty());
    }

    #[test]
    fn parallel_pair_collapses_to_one_edge() {
        let g = build_graph(&parse_netlist("R1 A B\nU1 A B").unwrap());
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edges, vec![(0, 1)]);
        for n in &g.nodes {
            assert_eq!(n.features.degree, 1);
            assert_eq!(n.features.centrality, 1.0);
        }
    }

    #[test]
    fn series_loop_is_a_cycle() {
        let g = build_graph(&parse_netlist(SERIES_EXAMPLE_NETLIST).unwrap());
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.edge_count(), 5);
        assert_eq!(g.junction_count(), 0);
        for n in &g.nodes {
            assert_eq!(n.features.degree, 2);
            // BFS by hand on a 5-cycle: distances 1, 1, 2, 2
            assert!((n.features.centrality - 4.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_hot_matches_kind() {
        let g = build_graph(&parse_netlist(SEVEN_COMPONENT_NETLIST).unwrap());
        for n in &g.nodes {
            let hot: f64 = n.features.type_one_hot.iter().sum();
            assert_eq!(hot, 1.0);
            assert_eq!(n.features.type_one_hot[n.kind.one_hot_index()], 1.0);
        }
    }

    #[test]
    fn degree_centrality_alternative() {
        let g = build_graph_with(&parse_netlist(SEVEN_COMPONENT_NETLIST).unwrap(), Centrality::Degree);
        let n2 = g.find("N2").unwrap();
        assert!((g.nodes[n2].features.centrality - 3.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn disconnected_circuit_warns() {
        let g = build_graph(&parse_netlist("R1 A B\nV1 A B 5\nR2 C D\nV2 C D 5").unwrap());
        assert_eq!(
            g.warnings,
            vec![GraphWarning::DisconnectedCircuit { components: 2 }]
        );
        assert_eq!(g.node_count(), 4);
    }

    #[test]
    fn table_and_dot_are_deterministic() {
        let n = parse_netlist(SEVEN_COMPONENT_NETLIST).unwrap();
        assert_eq!(build_graph(&n).to_table(), build_graph(&n).to_table());
        assert!(build_graph(&n).to_dot().contains("n7 [label=\"N2\", shape=point]"));
    }
}
