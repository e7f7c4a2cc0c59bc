//! Synthetic labeled netlists for the eight circuit classes.
//!
//! | topology | single source | multiple sources |
//! |----------|---------------|------------------|
//! | parallel | 1             | 2                |
//! | series   | 3             | 4                |
//! | mixed    | 5             | 6                |
//! | bridge   | 7             | 8                |
//!
//! Every generated circuit carries values so it can also be simulated. The
//! rule oracle in [`rules`] classifies a netlist from its topology alone and
//! is used to check the generators.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{parse_netlist, Component, ComponentKind, NetlistError, Netlist, NodeLabel};

pub const MAX_COMPONENTS: usize = 14;
pub const CLASS_COUNT: usize = 8;

pub const RESISTOR_VALUES: [f64; 9] = [100.0, 180.0, 220.0, 270.0, 330.0, 360.0, 450.0, 470.0, 1000.0];
pub const VOLTAGE_VALUES: [f64; 5] = [5.0, 10.0, 12.0, 18.0, 24.0];
pub const CURRENT_VALUES: [f64; 3] = [0.01, 0.1, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Topology {
    Parallel,
    Series,
    Mixed,
    Bridge,
}

impl Topology {
    pub const ALL: [Topology; 4] = [
        Topology::Parallel,
        Topology::Series,
        Topology::Mixed,
        Topology::Bridge,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CircuitClass {
    pub topology: Topology,
    pub multi_source: bool,
}

impl CircuitClass {
    pub fn new(topology: Topology, multi_source: bool) -> Self {
        CircuitClass {
            topology,
            multi_source,
        }
    }

    /// 1-based class id: `2 * topology + multi + 1`.
    pub fn id(self) -> usize {
        2 * self.topology.index() + usize::from(self.multi_source) + 1
    }

    pub fn from_id(id: usize) -> Option<Self> {
        if !(1..=CLASS_COUNT).contains(&id) {
            return None;
        }
        let k = id - 1;
        Some(CircuitClass::new(Topology::ALL[k / 2], k % 2 == 1))
    }

    /// Zero-based index for classifier outputs.
    pub fn index(self) -> usize {
        self.id() - 1
    }

    pub fn all() -> impl Iterator<Item = CircuitClass> {
        (1..=CLASS_COUNT).map(|id| CircuitClass::from_id(id).unwrap())
    }

    /// Smallest component count (sources included) for this class.
    pub fn min_size(self) -> usize {
        match (self.topology, self.multi_source) {
            (Topology::Parallel, false) | (Topology::Series, false) => 3,
            (Topology::Parallel, true) | (Topology::Series, true) | (Topology::Mixed, false) => 4,
            (Topology::Mixed, true) => 5,
            (Topology::Bridge, false) => 6,
            (Topology::Bridge, true) => 7,
        }
    }

    pub fn name(self) -> String {
        let topo = match self.topology {
            Topology::Parallel => "parallel",
            Topology::Series => "series",
            Topology::Mixed => "mixed",
            Topology::Bridge => "bridge",
        };
        let src = if self.multi_source { "multi" } else { "single" };
        format!("{topo}-{src}")
    }
}

impl fmt::Display for CircuitClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "class {} ({})", self.id(), self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledNetlist {
    pub netlist: Netlist,
    pub class: CircuitClass,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{class} needs at least {min} components, got {size}")]
    SizeTooSmallForClass {
        class: CircuitClass,
        size: usize,
        min: usize,
    },
    #[error("size {0} outside 1..={MAX_COMPONENTS}")]
    SizeOutOfRange(usize),
    #[error("manifest line {line}: {reason}")]
    BadManifest { line: usize, reason: String },
    #[error("{file}: {source}")]
    Netlist { file: String, source: NetlistError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Topology oracles that look only at node connectivity.
pub mod rules {
    use super::*;

    fn connected(net: &Netlist) -> bool {
        let nodes = net.nodes();
        if nodes.is_empty() {
            return false;
        }
        let idx = |l: &NodeLabel| nodes.binary_search(l).unwrap();
        let mut parent: Vec<usize> = (0..nodes.len()).collect();
        fn root(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for c in &net.components {
            let (a, b) = (root(&mut parent, idx(&c.node_a)), root(&mut parent, idx(&c.node_b)));
            parent[a] = b;
        }
        let r0 = root(&mut parent, 0);
        (0..nodes.len()).all(|i| root(&mut parent, i) == r0)
    }

    /// One closed loop: connected, every node touched exactly twice.
    pub fn is_series(net: &Netlist) -> bool {
        net.len() >= 3 && connected(net) && net.incidence().values().all(|t| t.len() == 2)
    }

    /// Every component spans the same pair of nodes, with at least two resistors.
    pub fn is_parallel(net: &Netlist) -> bool {
        net.nodes().len() == 2 && net.count_kind(ComponentKind::Resistor) >= 2
    }

    /// Contains a K4 minor, i.e. is not reducible as a series-parallel
    /// network (the Wheatstone bridge is the smallest such circuit).
    pub fn is_bridge(net: &Netlist) -> bool {
        let nodes = net.nodes();
        let n = nodes.len();
        let idx = |l: &NodeLabel| nodes.binary_search(l).unwrap();
        let mut adj = vec![std::collections::BTreeSet::new(); n];
        for c in &net.components {
            let (a, b) = (idx(&c.node_a), idx(&c.node_b));
            if a != b {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        let mut alive = vec![true; n];
        loop {
            let mut changed = false;
            for v in 0..n {
                if !alive[v] {
                    continue;
                }
                match adj[v].len() {
                    0 | 1 => {
                        for u in std::mem::take(&mut adj[v]) {
                            adj[u].remove(&v);
                        }
                        alive[v] = false;
                        changed = true;
                    }
                    2 => {
                        let ends: Vec<usize> = std::mem::take(&mut adj[v]).into_iter().collect();
                        let (u, w) = (ends[0], ends[1]);
                        adj[u].remove(&v);
                        adj[w].remove(&v);
                        adj[u].insert(w);
                        adj[w].insert(u);
                        alive[v] = false;
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                break;
            }
        }
        alive.iter().any(|&a| a)
    }

    pub fn is_mixed(net: &Netlist) -> bool {
        connected(net) && !is_series(net) && !is_parallel(net) && !is_bridge(net)
    }

    pub fn topology(net: &Netlist) -> Option<Topology> {
        if !connected(net) {
            None
        } else if is_series(net) {
            Some(Topology::Series)
        } else if is_parallel(net) {
            Some(Topology::Parallel)
        } else if is_bridge(net) {
            Some(Topology::Bridge)
        } else {
            Some(Topology::Mixed)
        }
    }

    pub fn classify(net: &Netlist) -> Option<CircuitClass> {
        let sources = net.source_count();
        if sources == 0 {
            return None;
        }
        topology(net).map(|t| CircuitClass::new(t, sources > 1))
    }

    /// The item satisfies its own topology oracle and none of the others.
    pub fn check(item: &LabeledNetlist) -> bool {
        let net = &item.netlist;
        let hits = [
            (Topology::Parallel, is_parallel(net)),
            (Topology::Series, is_series(net)),
            (Topology::Mixed, is_mixed(net)),
            (Topology::Bridge, is_bridge(net)),
        ];
        let ok_topology = hits
            .iter()
            .all(|&(t, hit)| hit == (t == item.class.topology));
        let sources = net.source_count();
        ok_topology && sources >= 1 && (sources > 1) == item.class.multi_source
    }
}

/// Incrementally assembled circuit with integer node ids.
struct Builder {
    parts: Vec<(ComponentKind, usize, usize)>,
    next_node: usize,
}

impl Builder {
    fn new() -> Self {
        Builder {
            parts: Vec::new(),
            next_node: 0,
        }
    }

    fn node(&mut self) -> usize {
        self.next_node += 1;
        self.next_node - 1
    }

    fn add(&mut self, kind: ComponentKind, a: usize, b: usize) {
        self.parts.push((kind, a, b));
    }

    /// Replaces part `i` (between x and y) by part `i` (x to m) followed by
    /// `kind` (m to y).
    fn subdivide(&mut self, i: usize, kind: ComponentKind) {
        let m = self.node();
        let (k, x, y) = self.parts[i];
        self.parts[i] = (k, x, m);
        self.parts.push((kind, m, y));
    }

    fn parallel_to(&mut self, i: usize, kind: ComponentKind) {
        let (_, x, y) = self.parts[i];
        self.parts.push((kind, x, y));
    }

    fn resistor_indices(&self) -> Vec<usize> {
        (0..self.parts.len())
            .filter(|&i| self.parts[i].0 == ComponentKind::Resistor)
            .collect()
    }

    /// Shuffles component order and polarity, then names components and
    /// labels nodes `N001..` by first appearance.
    fn finish(mut self, rng: &mut ChaCha8Rng) -> Netlist {
        self.parts.shuffle(rng);
        let mut labels: BTreeMap<usize, NodeLabel> = BTreeMap::new();
        let mut counters: BTreeMap<ComponentKind, usize> = BTreeMap::new();
        let mut components = Vec::with_capacity(self.parts.len());
        for (kind, mut a, mut b) in self.parts {
            if rng.gen_bool(0.5) {
                std::mem::swap(&mut a, &mut b);
            }
            for node in [a, b] {
                let next = labels.len() + 1;
                labels
                    .entry(node)
                    .or_insert_with(|| NodeLabel::new(&format!("N{next:03}")));
            }
            let count = counters.entry(kind).or_default();
            *count += 1;
            let value = match kind {
                ComponentKind::Resistor => *RESISTOR_VALUES.choose(rng).unwrap(),
                ComponentKind::VoltageSource => *VOLTAGE_VALUES.choose(rng).unwrap(),
                ComponentKind::CurrentSource => *CURRENT_VALUES.choose(rng).unwrap(),
            };
            components.push(Component {
                name: format!("{}{}", kind.prefix(), count),
                kind,
                node_a: labels[&a].clone(),
                node_b: labels[&b].clone(),
                value: Some(value),
            });
        }
        Netlist {
            title: None,
            components,
        }
    }
}

/// Two-terminal series-parallel network description.
enum SpNet {
    Leaf(ComponentKind),
    Series(Box<SpNet>, Box<SpNet>),
    Parallel(Box<SpNet>, Box<SpNet>),
}

impl SpNet {
    fn random(mut leaves: Vec<SpNet>, rng: &mut ChaCha8Rng) -> SpNet {
        if leaves.len() == 1 {
            return leaves.pop().unwrap();
        }
        let split = rng.gen_range(1..leaves.len());
        let right = leaves.split_off(split);
        let l = Box::new(SpNet::random(leaves, rng));
        let r = Box::new(SpNet::random(right, rng));
        if rng.gen_bool(0.5) {
            SpNet::Series(l, r)
        } else {
            SpNet::Parallel(l, r)
        }
    }

    fn realize(&self, b: &mut Builder, x: usize, y: usize) {
        match self {
            SpNet::Leaf(kind) => b.add(*kind, x, y),
            SpNet::Series(l, r) => {
                let m = b.node();
                l.realize(b, x, m);
                r.realize(b, m, y);
            }
            SpNet::Parallel(l, r) => {
                l.realize(b, x, y);
                r.realize(b, x, y);
            }
        }
    }
}

fn item_rng(class: CircuitClass, size: usize, seed: u64) -> ChaCha8Rng {
    let mix = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((class.id() as u64) << 8 | size as u64);
    ChaCha8Rng::seed_from_u64(mix)
}

fn random_source(rng: &mut ChaCha8Rng) -> ComponentKind {
    if rng.gen_bool(0.5) {
        ComponentKind::VoltageSource
    } else {
        ComponentKind::CurrentSource
    }
}

/// Generates one circuit of `class` with `size` components (sources included).
/// Deterministic for fixed arguments.
pub fn generate_circuit(
    class: CircuitClass,
    size: usize,
    seed: u64,
) -> Result<LabeledNetlist, DatasetError> {
    if !(1..=MAX_COMPONENTS).contains(&size) {
        return Err(DatasetError::SizeOutOfRange(size));
    }
    if size < class.min_size() {
        return Err(DatasetError::SizeTooSmallForClass {
            class,
            size,
            min: class.min_size(),
        });
    }
    let mut rng = item_rng(class, size, seed);
    loop {
        let netlist = match class.topology {
            Topology::Series => series(class.multi_source, size, &mut rng),
            Topology::Parallel => parallel(class.multi_source, size, &mut rng),
            Topology::Mixed => mixed(class.multi_source, size, &mut rng),
            Topology::Bridge => bridge(class.multi_source, size, &mut rng),
        };
        let item = LabeledNetlist { netlist, class };
        // mixed draws can collapse to pure series/parallel; redraw
        if rules::check(&item) {
            return Ok(item);
        }
    }
}

fn source_count(multi: bool, max: usize, rng: &mut ChaCha8Rng) -> usize {
    if multi {
        rng.gen_range(2..=max.clamp(2, 3))
    } else {
        1
    }
}

fn series(multi: bool, size: usize, rng: &mut ChaCha8Rng) -> Netlist {
    let s = source_count(multi, size - 2, rng);
    let mut kinds = vec![ComponentKind::VoltageSource; s];
    // at most one current source in a loop
    if multi && rng.gen_bool(0.5) {
        kinds[0] = ComponentKind::CurrentSource;
    }
    kinds.extend(std::iter::repeat_n(ComponentKind::Resistor, size - s));
    kinds.shuffle(rng);
    let mut b = Builder::new();
    let nodes: Vec<usize> = (0..size).map(|_| b.node()).collect();
    for (i, kind) in kinds.into_iter().enumerate() {
        b.add(kind, nodes[i], nodes[(i + 1) % size]);
    }
    b.finish(rng)
}

fn parallel(multi: bool, size: usize, rng: &mut ChaCha8Rng) -> Netlist {
    let s = source_count(multi, size - 2, rng);
    let mut b = Builder::new();
    let (x, y) = (b.node(), b.node());
    // at most one voltage source across a node pair
    let with_voltage = !multi || rng.gen_bool(0.5);
    for i in 0..s {
        let kind = if i == 0 && with_voltage {
            ComponentKind::VoltageSource
        } else {
            ComponentKind::CurrentSource
        };
        b.add(kind, x, y);
    }
    for _ in s..size {
        b.add(ComponentKind::Resistor, x, y);
    }
    b.finish(rng)
}

fn mixed(multi: bool, size: usize, rng: &mut ChaCha8Rng) -> Netlist {
    let main = if multi {
        random_source(rng)
    } else {
        ComponentKind::VoltageSource
    };
    let extras = if multi {
        source_count(true, size - 3, rng) - 1
    } else {
        0
    };
    let resistors = size - 1 - extras;
    let mut leaves: Vec<SpNet> = Vec::new();
    for i in 0..resistors {
        if i < extras {
            // a voltage source always in series with a resistor, a current
            // source always bridged by one, so the circuit stays solvable
            let src = Box::new(SpNet::Leaf(random_source(rng)));
            let r = Box::new(SpNet::Leaf(ComponentKind::Resistor));
            leaves.push(match src.as_ref() {
                SpNet::Leaf(ComponentKind::VoltageSource) => SpNet::Series(src, r),
                _ => SpNet::Parallel(src, r),
            });
        } else {
            leaves.push(SpNet::Leaf(ComponentKind::Resistor));
        }
    }
    leaves.shuffle(rng);
    let net = SpNet::random(leaves, rng);
    let mut b = Builder::new();
    let (x, y) = (b.node(), b.node());
    b.add(main, x, y);
    net.realize(&mut b, x, y);
    b.finish(rng)
}

fn bridge(multi: bool, size: usize, rng: &mut ChaCha8Rng) -> Netlist {
    use ComponentKind::*;
    let mut b = Builder::new();
    let (top, bottom, left, right) = (b.node(), b.node(), b.node(), b.node());
    let main = if multi { random_source(rng) } else { VoltageSource };
    b.add(main, top, bottom);
    b.add(Resistor, top, left);
    b.add(Resistor, left, bottom);
    b.add(Resistor, top, right);
    b.add(Resistor, right, bottom);
    b.add(Resistor, left, right);
    let extras = if multi {
        source_count(true, size - 5, rng) - 1
    } else {
        0
    };
    for _ in 0..extras {
        let rs = b.resistor_indices();
        let target = *rs.choose(rng).unwrap();
        match random_source(rng) {
            VoltageSource => b.subdivide(target, VoltageSource),
            _ => b.parallel_to(target, CurrentSource),
        }
    }
    while b.parts.len() < size {
        let rs = b.resistor_indices();
        let target = *rs.choose(rng).unwrap();
        if rng.gen_bool(0.5) {
            b.subdivide(target, Resistor);
        } else {
            b.parallel_to(target, Resistor);
        }
    }
    b.finish(rng)
}

fn derive_seed(seed: u64, split: u64, index: u64) -> u64 {
    // splitmix64 over a combined key
    let mut z = seed
        .wrapping_add(split.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn generate_split(count: usize, seed: u64, split: u64) -> Vec<LabeledNetlist> {
    (0..count)
        .map(|i| {
            let class = CircuitClass::from_id(i % CLASS_COUNT + 1).unwrap();
            let item_seed = derive_seed(seed, split, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(item_seed);
            let size = rng.gen_range(class.min_size()..=MAX_COMPONENTS);
            generate_circuit(class, size, item_seed).expect("size drawn from legal range")
        })
        .collect()
}

/// Class-balanced train and validation corpora; the two splits draw from
/// distinct seed streams.
pub fn generate_corpus(
    train: usize,
    val: usize,
    seed: u64,
) -> (Vec<LabeledNetlist>, Vec<LabeledNetlist>) {
    (generate_split(train, seed, 1), generate_split(val, seed, 2))
}

/// Writes `NNNN.net` files plus `manifest.tsv` (`filename<TAB>class-id`).
pub fn write_corpus(dir: &Path, items: &[LabeledNetlist]) -> Result<(), DatasetError> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    for (i, item) in items.iter().enumerate() {
        let file = format!("{:04}.net", i + 1);
        fs::write(dir.join(&file), item.netlist.to_string())?;
        manifest.push_str(&format!("{}\t{}\n", file, item.class.id()));
    }
    fs::write(dir.join("manifest.tsv"), manifest)?;
    Ok(())
}

pub fn read_corpus(dir: &Path) -> Result<Vec<LabeledNetlist>, DatasetError> {
    let manifest = fs::read_to_string(dir.join("manifest.tsv"))?;
    let mut items = Vec::new();
    for (i, line) in manifest.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| DatasetError::BadManifest {
            line: i + 1,
            reason: reason.to_string(),
        };
        let (file, id) = line.split_once('\t').ok_or_else(|| bad("expected two columns"))?;
        let class = id
            .trim()
            .parse()
            .ok()
            .and_then(CircuitClass::from_id)
            .ok_or_else(|| bad("class id must be 1..8"))?;
        let text = fs::read_to_string(dir.join(file))?;
        let netlist = parse_netlist(&text).map_err(|source| DatasetError::Netlist {
            file: file.to_string(),
            source,
        })?;
        items.push(LabeledNetlist { netlist, class });
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::SEVEN_COMPONENT_NETLIST;

    fn class(id: usize) -> CircuitClass {
        CircuitClass::from_id(id).unwrap()
    }

    #[test]
    fn class_ids_follow_table_layout() {
        assert_eq!(CircuitClass::new(Topology::Parallel, false).id(), 1);
        assert_eq!(CircuitClass::new(Topology::Series, true).id(), 4);
        assert_eq!(CircuitClass::new(Topology::Bridge, true).id(), 8);
        for id in 1..=8 {
            assert_eq!(class(id).id(), id);
        }
        assert!(CircuitClass::from_id(0).is_none());
        assert!(CircuitClass::from_id(9).is_none());
    }

    #[test]
    fn series_example() {
        let item = generate_circuit(class(3), 5, 0).unwrap();
        let n = &item.netlist;
        assert_eq!(n.count_kind(ComponentKind::VoltageSource), 1);
        assert_eq!(n.count_kind(ComponentKind::Resistor), 4);
        assert!(n.incidence().values().all(|t| t.len() == 2));
        assert!(rules::is_series(n));
    }

    #[test]
    fn bridge_example() {
        let item = generate_circuit(class(7), 6, 1).unwrap();
        let n = &item.netlist;
        assert_eq!(n.count_kind(ComponentKind::Resistor), 5);
        assert_eq!(n.source_count(), 1);
        let junctions = n.incidence().values().filter(|t| t.len() > 2).count();
        assert_eq!(junctions, 4);
        assert!(rules::is_bridge(n));
    }

    #[test]
    fn minimal_parallel() {
        let item = generate_circuit(class(1), 3, 0).unwrap();
        let n = &item.netlist;
        assert_eq!(n.count_kind(ComponentKind::Resistor), 2);
        assert_eq!(n.nodes().len(), 2);
        let src = n.components.iter().find(|c| c.kind.is_source()).unwrap();
        let mut pair = [src.node_a.clone(), src.node_b.clone()];
        pair.sort();
        for r in n.components.iter().filter(|c| !c.kind.is_source()) {
            let mut rp = [r.node_a.clone(), r.node_b.clone()];
            rp.sort();
            assert_eq!(rp, pair);
        }
    }

    #[test]
    fn size_checks() {
        assert!(matches!(
            generate_circuit(class(7), 5, 0),
            Err(DatasetError::SizeTooSmallForClass { min: 6, .. })
        ));
        assert!(matches!(
            generate_circuit(class(1), 15, 0),
            Err(DatasetError::SizeOutOfRange(15))
        ));
        assert!(matches!(
            generate_circuit(class(1), 0, 0),
            Err(DatasetError::SizeOutOfRange(0))
        ));
    }

    #[test]
    fn every_class_and_size_passes_oracle() {
        for c in CircuitClass::all() {
            for size in c.min_size()..=MAX_COMPONENTS {
                for seed in 0..4 {
                    let item = generate_circuit(c, size, seed).unwrap();
                    assert_eq!(item.netlist.len(), size);
                    assert!(rules::check(&item), "{c} size {size} seed {seed}");
                    assert_eq!(rules::classify(&item.netlist), Some(c));
                    item.netlist.validate().unwrap();
                    assert!(item.netlist.has_values());
                }
            }
        }
    }

    #[test]
    fn multi_source_classes_mix_kinds_across_seeds() {
        for topo in Topology::ALL {
            let c = CircuitClass::new(topo, true);
            let mut saw_current = false;
            let mut saw_voltage = false;
            for seed in 0..20 {
                let n = generate_circuit(c, 9, seed).unwrap().netlist;
                saw_current |= n.count_kind(ComponentKind::CurrentSource) > 0;
                saw_voltage |= n.count_kind(ComponentKind::VoltageSource) > 0;
            }
            assert!(saw_current && saw_voltage, "{c}");
        }
    }

    #[test]
    fn deterministic() {
        for c in CircuitClass::all() {
            assert_eq!(
                generate_circuit(c, 10, 77).unwrap(),
                generate_circuit(c, 10, 77).unwrap()
            );
        }
    }

    #[test]
    fn corpus_balance() {
        let (train, val) = generate_corpus(8, 8, 0);
        for split in [&train, &val] {
            let mut ids: Vec<usize> = split.iter().map(|i| i.class.id()).collect();
            ids.sort();
            assert_eq!(ids, (1..=8).collect::<Vec<_>>());
        }
        let (train, val) = generate_corpus(150, 30, 42);
        assert_eq!((train.len(), val.len()), (150, 30));
        for c in CircuitClass::all() {
            let n = train.iter().filter(|i| i.class == c).count();
            assert!((18..=19).contains(&n));
        }
        assert!(train.iter().chain(&val).all(rules::check));
        for v in &val {
            assert!(train.iter().all(|t| t.netlist != v.netlist));
        }
    }

    #[test]
    fn seven_component_is_mixed_single() {
        let n = parse_netlist(SEVEN_COMPONENT_NETLIST).unwrap();
        assert_eq!(rules::classify(&n), Some(class(5)));
    }

    #[test]
    fn corpus_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (train, _) = generate_corpus(16, 0, 3);
        write_corpus(dir.path(), &train).unwrap();
        let back = read_corpus(dir.path()).unwrap();
        assert_eq!(back, train);
    }
}
