//! Heuristic metadata features: component-count sigmoid, source-type
//! combination and multi-source flag, normalized to sum to one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{ComponentKind, Netlist};

/// Sigmoid slope.
pub const SIGMOID_SLOPE: f64 = 1.0;
/// Sigmoid midpoint (component count mapped to 0.5).
pub const SIGMOID_MIDPOINT: f64 = 7.5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetadataError {
    #[error("netlist contains no voltage or current source")]
    NoSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetadataVector {
    pub f_c: f64,
    pub f_s: f64,
    pub f_b: f64,
    pub normalized: [f64; 3],
}

impl MetadataVector {
    pub fn raw(&self) -> [f64; 3] {
        [self.f_c, self.f_s, self.f_b]
    }
}

/// `1 / (1 + exp(-slope (x - midpoint)))`.
pub fn component_sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-SIGMOID_SLOPE * (x - SIGMOID_MIDPOINT)).exp())
}

/// `0.33 V + 0.66 C + 0.01 V C` for presence indicators `V`, `C`.
///
/// Evaluated in hundredths so that `(1, 1)` is exactly `1.0`.
pub fn source_combination(voltage: bool, current: bool) -> f64 {
    let (v, c) = (u32::from(voltage), u32::from(current));
    f64::from(33 * v + 66 * c + v * c) / 100.0
}

pub fn multi_source_flag(source_count: usize) -> Result<f64, MetadataError> {
    match source_count {
        0 => Err(MetadataError::NoSource),
        1 => Ok(0.0),
        _ => Ok(1.0),
    }
}

/// Metadata features of a netlist. The component count includes sources;
/// component values are never read.
pub fn metadata_vector(netlist: &Netlist) -> Result<MetadataVector, MetadataError> {
    let f_b = multi_source_flag(netlist.source_count())?;
    let f_c = component_sigmoid(netlist.len() as f64);
    let f_s = source_combination(
        netlist.count_kind(ComponentKind::VoltageSource) > 0,
        netlist.count_kind(ComponentKind::CurrentSource) > 0,
    );
    let sum = f_c + f_s + f_b;
    Ok(MetadataVector {
        f_c,
        f_s,
        f_b,
        normalized: [f_c / sum, f_s / sum, f_b / sum],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{parse_netlist, SERIES_EXAMPLE_NETLIST};

    #[test]
    fn sigmoid_values() {
        assert!((component_sigmoid(7.5) - 0.5).abs() < 1e-12);
        // 1 / (1 + e^6.5) and 1 / (1 + e^-6.5)
        assert!((component_sigmoid(1.0) - 0.001_501_182_256_737).abs() < 1e-12);
        assert!((component_sigmoid(14.0) - 0.998_498_817_743_263).abs() < 1e-12);
        for x in 1..14 {
            assert!(component_sigmoid(x as f64 + 1.0) > component_sigmoid(x as f64));
        }
    }

    #[test]
    fn source_combination_table() {
        assert_eq!(source_combination(true, false), 0.33);
        assert_eq!(source_combination(false, true), 0.66);
        assert_eq!(source_combination(true, true), 1.0);
        assert_eq!(source_combination(false, false), 0.0);
    }

    #[test]
    fn multi_source_flag_cases() {
        assert_eq!(multi_source_flag(1), Ok(0.0));
        assert_eq!(multi_source_flag(2), Ok(1.0));
        assert_eq!(multi_source_flag(5), Ok(1.0));
        assert_eq!(multi_source_flag(0), Err(MetadataError::NoSource));
    }

    #[test]
    fn series_example_vector() {
        let m = metadata_vector(&parse_netlist(SERIES_EXAMPLE_NETLIST).unwrap()).unwrap();
        let f_c = 1.0 / (1.0 + 2.5f64.exp());
        assert!((m.f_c - f_c).abs() < 1e-15);
        assert!((m.f_c - 0.075_858).abs() < 1e-6);
        assert_eq!(m.f_s, 0.33);
        assert_eq!(m.f_b, 0.0);
        assert!((m.normalized[0] - 0.186_908).abs() < 1e-6);
        assert!((m.normalized[1] - 0.813_092).abs() < 1e-6);
        assert_eq!(m.normalized[2], 0.0);
    }

    #[test]
    fn mixed_sources_fourteen_components() {
        let mut text = String::from("V1 A B 5\nI1 A B 1\n");
        for i in 0..12 {
            text.push_str(&format!("R{} A B 100\n", i + 1));
        }
        let m = metadata_vector(&parse_netlist(&text).unwrap()).unwrap();
        assert!((m.f_c - 0.998_498_817_743_263).abs() < 1e-12);
        assert_eq!(m.f_s, 1.0);
        assert_eq!(m.f_b, 1.0);
        assert!((m.normalized.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_source_rejected() {
        let n = parse_netlist("R1 A B\nR2 A B").unwrap();
        assert_eq!(metadata_vector(&n), Err(MetadataError::NoSource));
    }

    #[test]
    fn presence_not_count() {
        let n = parse_netlist("V1 A B 1\nV2 B C 1\nV3 C A 1\nR1 A C 1").unwrap();
        assert_eq!(metadata_vector(&n).unwrap().f_s, 0.33);
    }
}
