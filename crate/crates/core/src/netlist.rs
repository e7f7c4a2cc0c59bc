//! Line-oriented netlists of two-terminal components.
//!
//! ```text
//! # comment
//! NAME NODE_A NODE_B [VALUE[UNIT]]
//! ```
//!
//! The leading letter of `NAME` selects the kind: `R` resistor, `U`/`V`
//! voltage source, `I` current source. Values take an optional SI prefix
//! (`m`, `k`, `M`) and an optional unit (`Ω`/`ohm`, `V`, `A`). A comment of
//! the form `# title: ...` sets the netlist title.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Device family of a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ComponentKind {
    Resistor,
    VoltageSource,
    CurrentSource,
}

impl ComponentKind {
    pub fn is_source(self) -> bool {
        !matches!(self, ComponentKind::Resistor)
    }

    /// Unit symbol used when rendering values.
    pub fn unit(self) -> &'static str {
        match self {
            ComponentKind::Resistor => "Ω",
            ComponentKind::VoltageSource => "V",
            ComponentKind::CurrentSource => "A",
        }
    }

    /// Name prefix used for auto-generated component names.
    pub fn prefix(self) -> &'static str {
        match self {
            ComponentKind::Resistor => "R",
            ComponentKind::VoltageSource => "V",
            ComponentKind::CurrentSource => "I",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.chars().next()?.to_ascii_uppercase() {
            'R' => Some(ComponentKind::Resistor),
            'U' | 'V' => Some(ComponentKind::VoltageSource),
            'I' => Some(ComponentKind::CurrentSource),
            _ => None,
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComponentKind::Resistor => "resistor",
            ComponentKind::VoltageSource => "voltage source",
            ComponentKind::CurrentSource => "current source",
        })
    }
}

/// Electrical node label, canonicalized to uppercase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeLabel(String);

impl NodeLabel {
    pub fn new(text: &str) -> Self {
        NodeLabel(text.to_uppercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Compact form used in graph figures: `N002` becomes `N2`.
    pub fn short(&self) -> String {
        match self.0.strip_prefix('N') {
            Some(digits) if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) => {
                let trimmed = digits.trim_start_matches('0');
                format!("N{}", if trimmed.is_empty() { "0" } else { trimmed })
            }
            _ => self.0.clone(),
        }
    }
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeLabel {
    fn from(s: &str) -> Self {
        NodeLabel::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub kind: ComponentKind,
    pub node_a: NodeLabel,
    pub node_b: NodeLabel,
    /// Ohms, volts or amperes depending on `kind`.
    pub value: Option<f64>,
}

impl Component {
    /// Builds a component, inferring the kind from the name.
    pub fn new(
        name: &str,
        node_a: &str,
        node_b: &str,
        value: Option<f64>,
    ) -> Result<Self, NetlistError> {
        let kind = ComponentKind::from_name(name).ok_or_else(|| NetlistError::UnknownComponentKind {
            line: 0,
            name: name.to_string(),
        })?;
        Ok(Component {
            name: name.to_string(),
            kind,
            node_a: NodeLabel::new(node_a),
            node_b: NodeLabel::new(node_b),
            value,
        })
    }

    pub fn terminals(&self) -> [&NodeLabel; 2] {
        [&self.node_a, &self.node_b]
    }
}

/// Which end of a two-terminal component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Terminal {
    A,
    B,
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Terminal::A => "a",
            Terminal::B => "b",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetlistError {
    #[error("line {line}: unknown component kind for `{name}`")]
    UnknownComponentKind { line: usize, name: String },
    #[error("line {line}: malformed line, expected `NAME NODE_A NODE_B [VALUE]`, got {tokens} tokens")]
    MalformedLine { line: usize, tokens: usize },
    #[error("netlist contains no components")]
    EmptyNetlist,
    #[error("line {line}: duplicate component name `{name}`")]
    DuplicateName { line: usize, name: String },
    #[error("line {line}: component `{name}` connects node {node} to itself")]
    SelfLoop {
        line: usize,
        name: String,
        node: String,
    },
    #[error("line {line}: bad value `{text}`")]
    BadValue { line: usize, text: String },
}

impl NetlistError {
    /// 1-based source line, 0 when the error is not tied to a line.
    pub fn line(&self) -> usize {
        match self {
            NetlistError::UnknownComponentKind { line, .. }
            | NetlistError::MalformedLine { line, .. }
            | NetlistError::DuplicateName { line, .. }
            | NetlistError::SelfLoop { line, .. }
            | NetlistError::BadValue { line, .. } => *line,
            NetlistError::EmptyNetlist => 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Netlist {
    pub title: Option<String>,
    pub components: Vec<Component>,
}

impl Netlist {
    /// Validates and wraps a component list.
    pub fn from_components(components: Vec<Component>) -> Result<Self, NetlistError> {
        let netlist = Netlist {
            title: None,
            components,
        };
        netlist.validate()?;
        Ok(netlist)
    }

    /// Checks the structural invariants: non-empty, unique names, no
    /// self-loops, positive values. Line numbers in errors are component
    /// positions (1-based).
    pub fn validate(&self) -> Result<(), NetlistError> {
        if self.components.is_empty() {
            return Err(NetlistError::EmptyNetlist);
        }
        let mut names = HashSet::new();
        for (i, c) in self.components.iter().enumerate() {
            check_component(c, i + 1, &mut names)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component(&self, name: &str) -> Option<&Component> {
        self.components
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case(name))
    }

    /// Distinct node labels in ascending order.
    pub fn nodes(&self) -> Vec<NodeLabel> {
        self.incidence().into_keys().collect()
    }

    pub fn source_count(&self) -> usize {
        self.components.iter().filter(|c| c.kind.is_source()).count()
    }

    pub fn count_kind(&self, kind: ComponentKind) -> usize {
        self.components.iter().filter(|c| c.kind == kind).count()
    }

    pub fn has_values(&self) -> bool {
        self.components.iter().all(|c| c.value.is_some())
    }

    /// Every terminal of every component, grouped by node.
    pub fn incidence(&self) -> BTreeMap<NodeLabel, Vec<(String, Terminal)>> {
        node_incidence(self)
    }

    /// Electrical-validity warnings (nodes touched by a single terminal).
    pub fn warnings(&self) -> Vec<String> {
        self.incidence()
            .into_iter()
            .filter(|(_, terms)| terms.len() < 2)
            .map(|(node, terms)| {
                format!(
                    "node {} is connected to a single terminal ({}.{})",
                    node, terms[0].0, terms[0].1
                )
            })
            .collect()
    }

    /// Copy with node labels rewritten through `map`; unmapped labels are kept.
    pub fn relabel(&self, map: &BTreeMap<NodeLabel, NodeLabel>) -> Netlist {
        let tr = |n: &NodeLabel| map.get(n).cloned().unwrap_or_else(|| n.clone());
        Netlist {
            title: self.title.clone(),
            components: self
                .components
                .iter()
                .map(|c| Component {
                    node_a: tr(&c.node_a),
                    node_b: tr(&c.node_b),
                    ..c.clone()
                })
                .collect(),
        }
    }
}

impl fmt::Display for Netlist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_netlist(self))
    }
}

impl std::str::FromStr for Netlist {
    type Err = NetlistError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_netlist(s)
    }
}

fn check_component(
    c: &Component,
    line: usize,
    names: &mut HashSet<String>,
) -> Result<(), NetlistError> {
    if !names.insert(c.name.to_uppercase()) {
        return Err(NetlistError::DuplicateName {
            line,
            name: c.name.clone(),
        });
    }
    if c.node_a == c.node_b {
        return Err(NetlistError::SelfLoop {
            line,
            name: c.name.clone(),
            node: c.node_a.to_string(),
        });
    }
    if let Some(v) = c.value {
        if !(v.is_finite() && v > 0.0) {
            return Err(NetlistError::BadValue {
                line,
                text: v.to_string(),
            });
        }
    }
    Ok(())
}

/// Parses netlist text. Blank lines and `#` comments are skipped.
pub fn parse_netlist(text: &str) -> Result<Netlist, NetlistError> {
    let mut netlist = Netlist::default();
    let mut names = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(title) = comment.trim().strip_prefix("title:") {
                netlist.title = Some(title.trim().to_string());
            }
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if !(3..=4).contains(&tokens.len()) {
            return Err(NetlistError::MalformedLine {
                line: line_no,
                tokens: tokens.len(),
            });
        }
        let name = tokens[0];
        let kind =
            ComponentKind::from_name(name).ok_or_else(|| NetlistError::UnknownComponentKind {
                line: line_no,
                name: name.to_string(),
            })?;
        let value = match tokens.get(3) {
            Some(t) => Some(parse_value(t, kind).ok_or_else(|| NetlistError::BadValue {
                line: line_no,
                text: t.to_string(),
            })?),
            None => None,
        };
        let component = Component {
            name: name.to_string(),
            kind,
            node_a: NodeLabel::new(tokens[1]),
            node_b: NodeLabel::new(tokens[2]),
            value,
        };
        check_component(&component, line_no, &mut names)?;
        netlist.components.push(component);
    }
    if netlist.components.is_empty() {
        return Err(NetlistError::EmptyNetlist);
    }
    Ok(netlist)
}

/// Parses `18V`, `4.7k`, `450Ω`, `10mA`, `2.2Mohm` or a bare number.
/// The unit, when present, must match the component kind.
pub fn parse_value(token: &str, kind: ComponentKind) -> Option<f64> {
    let units: &[&str] = match kind {
        ComponentKind::Resistor => &["Ω", "ohm", "Ohm", "OHM", "R"],
        ComponentKind::VoltageSource => &["V", "v"],
        ComponentKind::CurrentSource => &["A", "a"],
    };
    let mut body = token;
    for u in units {
        if let Some(stripped) = token.strip_suffix(u) {
            body = stripped;
            break;
        }
    }
    let (number, scale) = match body.chars().last()? {
        'k' | 'K' => (&body[..body.len() - 1], 1e3),
        'M' => (&body[..body.len() - 1], 1e6),
        'm' => (&body[..body.len() - 1], 1e-3),
        _ => (body, 1.0),
    };
    let v: f64 = number.parse().ok()?;
    let v = v * scale;
    (v.is_finite() && v > 0.0).then_some(v)
}

/// Canonical text: one component per line, single spaces, base-unit values
/// in shortest round-trip form.
pub fn serialize_netlist(netlist: &Netlist) -> String {
    let mut out = String::new();
    if let Some(title) = &netlist.title {
        out.push_str("# title: ");
        out.push_str(title);
        out.push('\n');
    }
    for c in &netlist.components {
        out.push_str(&format!("{} {} {}", c.name, c.node_a, c.node_b));
        if let Some(v) = c.value {
            out.push_str(&format!(" {}{}", v, c.kind.unit()));
        }
        out.push('\n');
    }
    out
}

/// Map from node to every `(component, terminal)` touching it, in netlist order.
pub fn node_incidence(netlist: &Netlist) -> BTreeMap<NodeLabel, Vec<(String, Terminal)>> {
    let mut map: BTreeMap<NodeLabel, Vec<(String, Terminal)>> = BTreeMap::new();
    for c in &netlist.components {
        map.entry(c.node_a.clone())
            .or_default()
            .push((c.name.clone(), Terminal::A));
        map.entry(c.node_b.clone())
            .or_default()
            .push((c.name.clone(), Terminal::B));
    }
    map
}

/// Deterministic per-node description used for prompt contextualization.
pub fn derive_node_context(netlist: &Netlist) -> String {
    let mut out = String::new();
    for (node, terms) in node_incidence(netlist) {
        let names: Vec<&str> = terms.iter().map(|(n, _)| n.as_str()).collect();
        let note = match terms.len() {
            1 => "(dangling, 1 connection)".to_string(),
            2 => "(2-terminal connection)".to_string(),
            k => format!("(junction, {k} connections)"),
        };
        out.push_str(&format!("{}: {} {}\n", node, names.join(", "), note));
    }
    out
}

/// True when the two netlists have the same components up to node
/// relabeling, component naming and terminal orientation.
pub fn structurally_equal(a: &Netlist, b: &Netlist) -> bool {
    let na = a.nodes();
    let nb = b.nodes();
    if a.len() != b.len() || na.len() != nb.len() {
        return false;
    }
    let adjacency = |net: &Netlist, nodes: &[NodeLabel]| {
        let n = nodes.len();
        // adj[x][y] = sorted kinds of components joining x and y
        let mut adj = vec![vec![Vec::new(); n]; n];
        for c in &net.components {
            let x = nodes.binary_search(&c.node_a).unwrap();
            let y = nodes.binary_search(&c.node_b).unwrap();
            adj[x][y].push(c.kind);
            adj[y][x].push(c.kind);
        }
        for row in &mut adj {
            for cell in row.iter_mut() {
                cell.sort();
            }
        }
        adj
    };
    let adj_a = adjacency(a, &na);
    let adj_b = adjacency(b, &nb);
    let signature = |adj: &Vec<Vec<Vec<ComponentKind>>>| -> Vec<Vec<ComponentKind>> {
        adj.iter()
            .map(|row| {
                let mut s: Vec<ComponentKind> = row.iter().flatten().copied().collect();
                s.sort();
                s
            })
            .collect()
    };
    let sig_a = signature(&adj_a);
    let sig_b = signature(&adj_b);
    let mut sorted_a = sig_a.clone();
    let mut sorted_b = sig_b.clone();
    sorted_a.sort();
    sorted_b.sort();
    if sorted_a != sorted_b {
        return false;
    }

    // visit nodes of `a` in BFS order so each new node is constrained by
    // already-mapped neighbours
    let n = na.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(x) = queue.pop_front() {
            order.push(x);
            for y in 0..n {
                if !seen[y] && !adj_a[x][y].is_empty() {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
    }

    struct Search<'s> {
        order: Vec<usize>,
        adj_a: &'s [Vec<Vec<ComponentKind>>],
        adj_b: &'s [Vec<Vec<ComponentKind>>],
        sig_a: &'s [Vec<ComponentKind>],
        sig_b: &'s [Vec<ComponentKind>],
        mapping: Vec<usize>,
        used: Vec<bool>,
    }
    impl Search<'_> {
        fn run(&mut self, depth: usize) -> bool {
            if depth == self.order.len() {
                return true;
            }
            let x = self.order[depth];
            for y in 0..self.used.len() {
                if self.used[y] || self.sig_a[x] != self.sig_b[y] {
                    continue;
                }
                let consistent = self.order[..depth].iter().all(|&px| {
                    self.adj_a[x][px] == self.adj_b[y][self.mapping[px]]
                });
                if !consistent {
                    continue;
                }
                self.mapping[x] = y;
                self.used[y] = true;
                if self.run(depth + 1) {
                    return true;
                }
                self.used[y] = false;
            }
            false
        }
    }
    Search {
        order,
        adj_a: &adj_a,
        adj_b: &adj_b,
        sig_a: &sig_a,
        sig_b: &sig_b,
        mapping: vec![usize::MAX; n],
        used: vec![false; n],
    }
    .run(0)
}

/// Seven-component reference circuit with two junctions.
pub const SEVEN_COMPONENT_NETLIST: &str = "\
R1 N003 N006
R2 N002 N001
R3 N004 N002
R4 N006 N004
R5 N005 N002
R6 N005 N006
U1 N001 N003
";

/// Series loop of four resistors and an 18 V source.
pub const SERIES_EXAMPLE_NETLIST: &str = "\
R_D N004 N005 450Ω
R_B N002 N003 270Ω
R_C N003 N004 360Ω
V7 N001 N005 18V
R_A N001 N002 180Ω
";
