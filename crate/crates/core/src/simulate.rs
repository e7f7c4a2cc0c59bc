//! DC operating point by modified nodal analysis.
//!
//! Conventions follow SPICE: a voltage source `V a b v` holds
//! `V(a) − V(b) = v`; a current source `I a b i` drives `i` through itself
//! from `a` to `b`. Every reported branch current is positive when it flows
//! through the component from its first node to its second, and every
//! branch voltage is `V(a) − V(b)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{ComponentKind, Netlist, NodeLabel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("components without values: {}", .0.join(", "))]
    MissingValues(Vec<String>),
    #[error("circuit has no source")]
    NoSource,
    #[error("resistor {0} has zero resistance")]
    ZeroResistance(String),
    #[error("singular system: the circuit has a floating part, a loop of voltage sources or a cut set of current sources")]
    SingularSystem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchResult {
    pub name: String,
    pub kind: ComponentKind,
    pub node_a: NodeLabel,
    pub node_b: NodeLabel,
    pub voltage: f64,
    pub current: f64,
}

impl BranchResult {
    /// Power absorbed by the component (negative for a delivering source).
    pub fn power(&self) -> f64 {
        self.voltage * self.current
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub ground: NodeLabel,
    pub node_voltages: BTreeMap<NodeLabel, f64>,
    /// In netlist order.
    pub branches: Vec<BranchResult>,
    /// Current delivered by the only source.
    pub total_current: Option<f64>,
    /// Voltage across the only source, rising from its `−` side.
    pub total_voltage: Option<f64>,
    /// Only for a single voltage source.
    pub total_resistance: Option<f64>,
}

/// The assembled `A x = z` system.
#[derive(Debug, Clone, PartialEq)]
pub struct MnaSystem {
    pub node_index: BTreeMap<NodeLabel, usize>,
    pub source_index: Vec<usize>,
    pub matrix: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

impl MnaSystem {
    pub fn build(netlist: &Netlist) -> Result<(MnaSystem, NodeLabel), SimulationError> {
        let missing: Vec<String> = netlist
            .components
            .iter()
            .filter(|c| c.value.is_none())
            .map(|c| c.name.clone())
            .collect();
        if !missing.is_empty() {
            return Err(SimulationError::MissingValues(missing));
        }
        if netlist.source_count() == 0 {
            return Err(SimulationError::NoSource);
        }
        if let Some(c) = netlist
            .components
            .iter()
            .find(|c| c.kind == ComponentKind::Resistor && c.value == Some(0.0))
        {
            return Err(SimulationError::ZeroResistance(c.name.clone()));
        }
        let nodes = netlist.nodes();
        let ground = nodes[0].clone();
        let node_index: BTreeMap<NodeLabel, usize> = nodes[1..]
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, l)| (l, i))
            .collect();
        let n = node_index.len();
        let source_index: Vec<usize> = netlist
            .components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ComponentKind::VoltageSource)
            .map(|(i, _)| i)
            .collect();
        let size = n + source_index.len();
        let mut a = vec![vec![0.0; size]; size];
        let mut z = vec![0.0; size];
        let row = |l: &NodeLabel| node_index.get(l).copied();
        let mut aux = n;
        for c in &netlist.components {
            let value = c.value.unwrap();
            let (ra, rb) = (row(&c.node_a), row(&c.node_b));
            match c.kind {
                ComponentKind::Resistor => {
                    let g = 1.0 / value;
                    if let Some(i) = ra {
                        a[i][i] += g;
                    }
                    if let Some(j) = rb {
                        a[j][j] += g;
                    }
                    if let (Some(i), Some(j)) = (ra, rb) {
                        a[i][j] -= g;
                        a[j][i] -= g;
                    }
                }
                ComponentKind::CurrentSource => {
                    if let Some(i) = ra {
                        z[i] -= value;
                    }
                    if let Some(j) = rb {
                        z[j] += value;
                    }
                }
                ComponentKind::VoltageSource => {
                    if let Some(i) = ra {
                        a[i][aux] += 1.0;
                        a[aux][i] += 1.0;
                    }
                    if let Some(j) = rb {
                        a[j][aux] -= 1.0;
                        a[aux][j] -= 1.0;
                    }
                    z[aux] = value;
                    aux += 1;
                }
            }
        }
        Ok((
            MnaSystem {
                node_index,
                source_index,
                matrix: a,
                rhs: z,
            },
            ground,
        ))
    }
}

/// Gaussian elimination with partial pivoting.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, SimulationError> {
    let n = b.len();
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() <= 1e-12 * scale {
            return Err(SimulationError::SingularSystem);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                let (top, bottom) = a.split_at_mut(r);
                for (x, p) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                    *x -= f * p;
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

pub fn solve_dc(netlist: &Netlist) -> Result<SimulationResult, SimulationError> {
    let (sys, ground) = MnaSystem::build(netlist)?;
    let n = sys.node_index.len();
    let x = solve_linear(sys.matrix.clone(), sys.rhs.clone())?;
    let mut node_voltages = BTreeMap::new();
    node_voltages.insert(ground.clone(), 0.0);
    for (label, &i) in &sys.node_index {
        node_voltages.insert(label.clone(), x[i]);
    }
    let mut aux = n;
    let branches: Vec<BranchResult> = netlist
        .components
        .iter()
        .map(|c| {
            let value = c.value.unwrap();
            let voltage = node_voltages[&c.node_a] - node_voltages[&c.node_b];
            let current = match c.kind {
                ComponentKind::Resistor => voltage / value,
                ComponentKind::CurrentSource => value,
                ComponentKind::VoltageSource => {
                    aux += 1;
                    x[aux - 1]
                }
            };
            BranchResult {
                name: c.name.clone(),
                kind: c.kind,
                node_a: c.node_a.clone(),
                node_b: c.node_b.clone(),
                voltage,
                current,
            }
        })
        .collect();
    let sources: Vec<&BranchResult> = branches.iter().filter(|b| b.kind.is_source()).collect();
    let (mut total_current, mut total_voltage, mut total_resistance) = (None, None, None);
    if let [only] = sources.as_slice() {
        match only.kind {
            ComponentKind::VoltageSource => {
                total_voltage = Some(only.voltage);
                total_current = Some(-only.current);
                if only.current != 0.0 {
                    total_resistance = Some((only.voltage / only.current).abs());
                }
            }
            _ => {
                total_voltage = Some(-only.voltage);
                total_current = Some(only.current);
            }
        }
    }
    Ok(SimulationResult {
        ground,
        node_voltages,
        branches,
        total_current,
        total_voltage,
        total_resistance,
    })
}

/// Copy of `netlist` with every source except `keep` set to zero: a
/// zero-volt voltage source is a short and a zero-amp current source is
/// an open circuit.
pub fn deactivate_sources(netlist: &Netlist, keep: Option<&str>) -> Netlist {
    let mut out = netlist.clone();
    for c in &mut out.components {
        if c.kind.is_source() && Some(c.name.as_str()) != keep {
            c.value = Some(0.0);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionReport {
    /// One entry per source, in netlist order.
    pub per_source: Vec<(String, SimulationResult)>,
    /// Sum of the per-source node voltages and branch quantities.
    pub combined: SimulationResult,
    pub direct: SimulationResult,
    /// Largest absolute difference between `combined` and `direct`.
    pub max_deviation: f64,
}

pub fn superposition_report(netlist: &Netlist) -> Result<SuperpositionReport, SimulationError> {
    let direct = solve_dc(netlist)?;
    let mut per_source = Vec::new();
    for c in netlist.components.iter().filter(|c| c.kind.is_source()) {
        let res = solve_dc(&deactivate_sources(netlist, Some(&c.name)))?;
        per_source.push((c.name.clone(), res));
    }
    let mut combined = direct.clone();
    combined.total_current = None;
    combined.total_voltage = None;
    combined.total_resistance = None;
    combined.node_voltages.values_mut().for_each(|v| *v = 0.0);
    for b in &mut combined.branches {
        b.voltage = 0.0;
        b.current = 0.0;
    }
    for (_, r) in &per_source {
        for (label, v) in &r.node_voltages {
            *combined.node_voltages.get_mut(label).unwrap() += v;
        }
        for (acc, b) in combined.branches.iter_mut().zip(&r.branches) {
            acc.voltage += b.voltage;
            acc.current += b.current;
        }
    }
    let mut max_deviation: f64 = 0.0;
    for (label, v) in &combined.node_voltages {
        max_deviation = max_deviation.max((v - direct.node_voltages[label]).abs());
    }
    for (a, b) in combined.branches.iter().zip(&direct.branches) {
        max_deviation = max_deviation
            .max((a.voltage - b.voltage).abs())
            .max((a.current - b.current).abs());
    }
    Ok(SuperpositionReport {
        per_source,
        combined,
        direct,
        max_deviation,
    })
}

/// Formats `value` with an SI prefix and four decimals, e.g. `14.2857 mA`.
pub fn format_si(value: f64, unit: &str) -> String {
    let a = value.abs();
    let (scale, prefix) = if a == 0.0 || (1.0..1e3).contains(&a) {
        (1.0, "")
    } else if a >= 1e6 {
        (1e-6, "M")
    } else if a >= 1e3 {
        (1e-3, "k")
    } else if a >= 1e-3 {
        (1e3, "m")
    } else if a >= 1e-6 {
        (1e6, "µ")
    } else {
        (1e9, "n")
    };
    let scaled = value * scale;
    let scaled = if scaled == 0.0 { 0.0 } else { scaled };
    format!("{scaled:.4} {prefix}{unit}")
}

impl SimulationResult {
    pub fn branch(&self, name: &str) -> Option<&BranchResult> {
        self.branches.iter().find(|b| b.name.eq_ignore_ascii_case(name))
    }

    /// Net current leaving each node through its branches.
    pub fn kcl_residuals(&self) -> BTreeMap<NodeLabel, f64> {
        let mut out: BTreeMap<NodeLabel, f64> =
            self.node_voltages.keys().map(|k| (k.clone(), 0.0)).collect();
        for b in &self.branches {
            *out.get_mut(&b.node_a).unwrap() += b.current;
            *out.get_mut(&b.node_b).unwrap() -= b.current;
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ground\t{}", self.ground);
        for (label, v) in &self.node_voltages {
            let _ = writeln!(out, "V({label})\t{}", format_si(*v, "V"));
        }
        let _ = writeln!(out, "component\tnodes\tvoltage\tcurrent");
        for b in &self.branches {
            let _ = writeln!(
                out,
                "{}\t{}->{}\t{}\t{}",
                b.name,
                b.node_a,
                b.node_b,
                format_si(b.voltage, "V"),
                format_si(b.current, "A")
            );
        }
        if let Some(v) = self.total_voltage {
            let _ = writeln!(out, "total voltage\t{}", format_si(v, "V"));
        }
        if let Some(i) = self.total_current {
            let _ = writeln!(out, "total current\t{}", format_si(i, "A"));
        }
        if let Some(r) = self.total_resistance {
            let _ = writeln!(out, "total resistance\t{}", format_si(r, "Ω"));
        }
        out
    }

    /// Labelled block for prompts.
    pub fn to_prompt_block(&self) -> String {
        let mut out = String::from("Simulation results (DC, current positive from first to second node):\n");
        for b in &self.branches {
            let _ = writeln!(
                out,
                "- {} ({} to {}): voltage {}, current {}",
                b.name,
                b.node_a,
                b.node_b,
                format_si(b.voltage, "V"),
                format_si(b.current, "A")
            );
        }
        if let Some(v) = self.total_voltage {
            let _ = writeln!(out, "- total voltage: {}", format_si(v, "V"));
        }
        if let Some(i) = self.total_current {
            let _ = writeln!(out, "- total current: {}", format_si(i, "A"));
        }
        if let Some(r) = self.total_resistance {
            let _ = writeln!(out, "- total resistance: {}", format_si(r, "Ω"));
        }
        out
    }
}

impl SuperpositionReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (name, r) in &self.per_source {
            let _ = writeln!(out, "## only {name} active");
            out.push_str(&r.to_table());
        }
        let _ = writeln!(out, "## combined");
        out.push_str(&self.combined.to_table());
        let _ = writeln!(out, "max deviation from direct solve\t{:.3e}", self.max_deviation);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_circuit, CircuitClass};
    use crate::netlist::{parse_netlist, SERIES_EXAMPLE_NETLIST};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn series_example() {
        let r = solve_dc(&parse_netlist(SERIES_EXAMPLE_NETLIST).unwrap()).unwrap();
        let i = 18.0 / (180.0 + 270.0 + 360.0 + 450.0);
        assert!(close(r.total_current.unwrap(), i, 1e-12));
        assert!(close(r.total_current.unwrap(), 0.0142857, 1e-7));
        assert!(close(r.total_resistance.unwrap(), 1260.0, 1e-9));
        assert!(close(r.total_voltage.unwrap(), 18.0, 1e-12));
        let ra = r.branch("R_A").unwrap();
        assert!(close(ra.voltage, 180.0 * i, 1e-12));
        assert!(close(ra.voltage, 2.5714, 1e-4));
        assert_eq!(r.ground.as_str(), "N001");
        assert_eq!(format_si(r.total_current.unwrap(), "A"), "14.2857 mA");
    }

    #[test]
    fn one_volt_one_ohm() {
        let r = solve_dc(&parse_netlist("V1 A B 1V\nR1 A B 1").unwrap()).unwrap();
        assert!(close(r.branch("R1").unwrap().current, 1.0, 1e-15));
        assert!(close(r.branch("V1").unwrap().current, -1.0, 1e-15));
        assert!(close(r.total_current.unwrap(), 1.0, 1e-15));
    }

    #[test]
    fn parallel_pair() {
        let r = solve_dc(&parse_netlist("V1 A B 10V\nR1 A B 100\nR2 A B 100").unwrap()).unwrap();
        assert!(close(r.branch("R1").unwrap().current, 0.1, 1e-15));
        assert!(close(r.branch("R2").unwrap().current, 0.1, 1e-15));
        assert!(close(r.total_current.unwrap(), 0.2, 1e-15));
        assert!(close(r.total_resistance.unwrap(), 50.0, 1e-12));
    }

    #[test]
    fn current_source_drives_its_value() {
        let r = solve_dc(&parse_netlist("I1 A B 2mA\nR1 B A 1k").unwrap()).unwrap();
        let r1 = r.branch("R1").unwrap();
        assert!(close(r1.current, 0.002, 1e-15));
        assert!(close(r1.voltage, 2.0, 1e-12));
        assert!(close(r.total_current.unwrap(), 0.002, 1e-15));
        assert!(close(r.total_voltage.unwrap(), 2.0, 1e-12));
        assert_eq!(r.total_resistance, None);
    }

    #[test]
    fn errors() {
        assert_eq!(
            solve_dc(&parse_netlist("V1 A B 1\nR1 A B").unwrap()),
            Err(SimulationError::MissingValues(vec!["R1".into()]))
        );
        let mut shorted = parse_netlist("V1 A B 1\nR1 A B 1").unwrap();
        shorted.components[1].value = Some(0.0);
        assert_eq!(
            solve_dc(&shorted),
            Err(SimulationError::ZeroResistance("R1".into()))
        );
        assert_eq!(
            solve_dc(&parse_netlist("R2 A B 1\nR1 A B 1").unwrap()),
            Err(SimulationError::NoSource)
        );
        // floating part
        assert_eq!(
            solve_dc(&parse_netlist("V1 A B 1\nR1 A B 1\nR2 C D 1").unwrap()),
            Err(SimulationError::SingularSystem)
        );
        // loop of voltage sources
        assert_eq!(
            solve_dc(&parse_netlist("V1 A B 1\nV2 A B 2\nR1 A B 1").unwrap()),
            Err(SimulationError::SingularSystem)
        );
        // current source in series with nothing that can carry its current
        assert_eq!(
            solve_dc(&parse_netlist("I1 A B 1\nI2 A B 2\nR1 B C 1\nV1 C A 1").unwrap())
                .map(|_| ()),
            Ok(())
        );
        assert_eq!(
            solve_dc(&parse_netlist("I1 A B 1\nR1 B C 1").unwrap()),
            Err(SimulationError::SingularSystem)
        );
    }

    #[test]
    fn aiding_sources_superpose() {
        let net = parse_netlist("V1 N1 N0 10V\nV2 N2 N1 10V\nR1 N2 N0 10").unwrap();
        let rep = superposition_report(&net).unwrap();
        assert_eq!(rep.per_source.len(), 2);
        for (_, r) in &rep.per_source {
            assert!(close(r.branch("R1").unwrap().current, 1.0, 1e-12));
        }
        assert!(close(rep.combined.branch("R1").unwrap().current, 2.0, 1e-12));
        assert!(close(rep.direct.branch("R1").unwrap().current, 2.0, 1e-12));
        assert!(rep.max_deviation < 1e-9);
        assert!(rep.to_table().contains("## only V2 active"));
    }

    #[test]
    fn everything_off_is_zero() {
        let net = parse_netlist(SERIES_EXAMPLE_NETLIST).unwrap();
        let r = solve_dc(&deactivate_sources(&net, None)).unwrap();
        assert!(r.node_voltages.values().all(|&v| v == 0.0));
        assert!(r.branches.iter().all(|b| b.current == 0.0 && b.voltage == 0.0));
    }

    #[test]
    fn class_six_superposition() {
        let item = generate_circuit(CircuitClass::from_id(6).unwrap(), 8, 11).unwrap();
        let rep = superposition_report(&item.netlist).unwrap();
        let scale = rep
            .direct
            .branches
            .iter()
            .fold(1e-12f64, |m, b| m.max(b.current.abs()).max(b.voltage.abs()));
        assert!(rep.max_deviation / scale < 1e-9);
    }

    #[test]
    fn format_si_ranges() {
        assert_eq!(format_si(0.0, "A"), "0.0000 A");
        assert_eq!(format_si(1260.0, "Ω"), "1.2600 kΩ");
        assert_eq!(format_si(-0.5, "V"), "-500.0000 mV");
        assert_eq!(format_si(2.2e-6, "A"), "2.2000 µA");
    }

    fn tree_cycles(result: &SimulationResult) -> Vec<Vec<(usize, f64)>> {
        // spanning tree over nodes; every non-tree branch closes one cycle
        let labels: Vec<&NodeLabel> = result.node_voltages.keys().collect();
        let idx = |l: &NodeLabel| labels.iter().position(|x| *x == l).unwrap();
        let n = labels.len();
        let mut parent: Vec<Option<(usize, usize, f64)>> = vec![None; n];
        let mut seen = vec![false; n];
        let mut tree = vec![false; result.branches.len()];
        seen[0] = true;
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(v) = queue.pop_front() {
            for (k, b) in result.branches.iter().enumerate() {
                let (a, c) = (idx(&b.node_a), idx(&b.node_b));
                let (other, sign) = if a == v { (c, 1.0) } else if c == v { (a, -1.0) } else { continue };
                if !seen[other] {
                    seen[other] = true;
                    tree[k] = true;
                    parent[other] = Some((v, k, sign));
                    queue.push_back(other);
                }
            }
        }
        let path_to_root = |mut v: usize| {
            let mut out = Vec::new();
            while let Some((p, k, sign)) = parent[v] {
                // traversing from v up to p crosses branch k against `sign`
                out.push((k, -sign));
                v = p;
            }
            out
        };
        let mut cycles = Vec::new();
        for (k, b) in result.branches.iter().enumerate() {
            if tree[k] {
                continue;
            }
            let mut cycle = vec![(k, 1.0)];
            // from node_b back to node_a: b → root → a
            cycle.extend(path_to_root(idx(&b.node_b)));
            cycle.extend(path_to_root(idx(&b.node_a)).into_iter().map(|(k, s)| (k, -s)));
            cycles.push(cycle);
        }
        cycles
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn circuit_laws(class_id in 1usize..=8, extra in 0usize..6, seed in 0u64..10_000) {
            let class = CircuitClass::from_id(class_id).unwrap();
            let size = (class.min_size() + extra).min(14);
            let net = generate_circuit(class, size, seed).unwrap().netlist;
            let r = solve_dc(&net).unwrap();
            let scale = r.branches.iter().fold(1.0f64, |m, b| m.max(b.current.abs()));
            for res in r.kcl_residuals().values() {
                prop_assert!(res.abs() < 1e-9 * scale);
            }
            let vscale = r.branches.iter().fold(1.0f64, |m, b| m.max(b.voltage.abs()));
            for cycle in tree_cycles(&r) {
                let sum: f64 = cycle.iter().map(|&(k, s)| s * r.branches[k].voltage).sum();
                prop_assert!(sum.abs() < 1e-9 * vscale);
            }
            let delivered: f64 = r.branches.iter().filter(|b| b.kind.is_source()).map(|b| -b.power()).sum();
            let dissipated: f64 = r.branches.iter().filter(|b| !b.kind.is_source()).map(|b| b.power()).sum();
            prop_assert!((delivered - dissipated).abs() <= 1e-9 * dissipated.abs().max(1e-12));
            for alpha in [2.0, 0.5, -1.0] {
                let mut scaled = net.clone();
                for c in scaled.components.iter_mut().filter(|c| c.kind.is_source()) {
                    c.value = c.value.map(|v| v * alpha);
                }
                let s = solve_dc(&scaled).unwrap();
                for (a, b) in r.branches.iter().zip(&s.branches) {
                    prop_assert!((b.current - alpha * a.current).abs() < 1e-9 * scale);
                    prop_assert!((b.voltage - alpha * a.voltage).abs() < 1e-9 * vscale);
                }
            }
            if net.source_count() >= 2 {
                let rep = superposition_report(&net).unwrap();
                prop_assert!(rep.max_deviation < 1e-9 * scale.max(vscale));
            }
        }
    }
}
