//! Circuit embeddings: GNN class probabilities fused with normalized
//! metadata, compared by cosine similarity.

use std::fmt::Write as _;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit_graph::build_graph;
use crate::dataset::{CircuitClass, CLASS_COUNT};
use crate::features_meta::{metadata_vector, MetadataError};
use crate::gnn::{GnnError, GnnModel};
use crate::netlist::Netlist;

pub const EMBEDDING_DIM: usize = CLASS_COUNT + 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error(transparent)]
    Metadata(#[from] MetadataError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error("cannot compare a zero-norm vector")]
    ZeroNorm,
    #[error("vectors have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("fusion weight must lie in [0, 1], got {0}")]
    BadWeight(f64),
    #[error("similarity map needs at least two circuits")]
    TooFewCircuits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source: String,
}

impl EmbeddingVector {
    pub fn graph_part(&self) -> &[f64] {
        &self.values[..CLASS_COUNT]
    }

    pub fn meta_part(&self) -> &[f64] {
        &self.values[CLASS_COUNT..]
    }

    /// Human-readable breakdown of both halves.
    pub fn explain(&self) -> String {
        let mut out = format!("embedding of {}\n", self.source);
        for (i, p) in self.graph_part().iter().enumerate() {
            let class = CircuitClass::from_id(i + 1).unwrap();
            let _ = writeln!(out, "  class {} {:<28} {p:.6}", class.id(), class.name());
        }
        let names = ["component count", "source types", "multiple sources"];
        for (name, v) in names.iter().zip(self.meta_part()) {
            let _ = writeln!(out, "  meta  {name:<30} {v:.6}");
        }
        out
    }
}

/// Weight `w` of the graph half; the metadata half gets `1 − w`. Both
/// halves are scaled by 2 so the default `w = 0.5` is plain concatenation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fusion {
    pub graph_weight: f64,
}

impl Default for Fusion {
    fn default() -> Self {
        Fusion { graph_weight: 0.5 }
    }
}

pub fn embed_circuit(
    netlist: &Netlist,
    model: &GnnModel,
    source: &str,
) -> Result<EmbeddingVector, EmbeddingError> {
    embed_circuit_with(netlist, model, source, Fusion::default())
}

pub fn embed_circuit_with(
    netlist: &Netlist,
    model: &GnnModel,
    source: &str,
    fusion: Fusion,
) -> Result<EmbeddingVector, EmbeddingError> {
    let w = fusion.graph_weight;
    if !(0.0..=1.0).contains(&w) {
        return Err(EmbeddingError::BadWeight(w));
    }
    let meta = metadata_vector(netlist)?;
    let probs = model.forward(&build_graph(netlist))?.class_probs;
    let mut values: Vec<f64> = probs.iter().map(|p| 2.0 * w * p).collect();
    values.extend(meta.normalized.iter().map(|m| 2.0 * (1.0 - w) * m));
    Ok(EmbeddingVector {
        values,
        source: source.to_string(),
    })
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::LengthMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroNorm);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    cosine(&a.values, &b.values)
}

/// Symmetric all-pairs similarity matrix with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

pub fn similarity_map(
    circuits: &[(String, Netlist)],
    model: &GnnModel,
) -> Result<SimilarityMap, EmbeddingError> {
    if circuits.len() < 2 {
        return Err(EmbeddingError::TooFewCircuits);
    }
    let embeddings: Vec<EmbeddingVector> = circuits
        .iter()
        .map(|(name, net)| embed_circuit(net, model, name))
        .collect::<Result<_, _>>()?;
    similarity_map_of(&embeddings)
}

pub fn similarity_map_of(embeddings: &[EmbeddingVector]) -> Result<SimilarityMap, EmbeddingError> {
    let n = embeddings.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        values[i][i] = 1.0;
        for j in i + 1..n {
            let s = cosine_similarity(&embeddings[i], &embeddings[j])?;
            values[i][j] = s;
            values[j][i] = s;
        }
    }
    Ok(SimilarityMap {
        labels: embeddings.iter().map(|e| e.source.clone()).collect(),
        values,
    })
}

impl SimilarityMap {
    /// Mean similarity over off-diagonal pairs with equal group, then over
    /// pairs with different group. `groups[i]` labels row `i`.
    pub fn intra_inter(&self, groups: &[usize]) -> (f64, f64) {
        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0usize, 0.0, 0usize);
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i == j {
                    continue;
                }
                if groups[i] == groups[j] {
                    intra += v;
                    ni += 1;
                } else {
                    inter += v;
                    nx += 1;
                }
            }
        }
        (intra / ni.max(1) as f64, inter / nx.max(1) as f64)
    }

    /// Header row of labels, then one row per circuit.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("circuit");
        for l in &self.labels {
            out.push('\t');
            out.push_str(l);
        }
        out.push('\n');
        for (label, row) in self.labels.iter().zip(&self.values) {
            out.push_str(label);
            for v in row {
                let _ = write!(out, "\t{v:.6}");
            }
            out.push('\n');
        }
        out
    }

    /// Heat image: one `cell`×`cell` square per entry, dark blue at 0,
    /// yellow at 1.
    pub fn to_ppm(&self, cell: u32) -> Vec<u8> {
        let n = self.labels.len() as u32;
        let cell = cell.max(1);
        let img = RgbImage::from_fn(n * cell, n * cell, |x, y| {
            heat_color(self.values[(y / cell) as usize][(x / cell) as usize])
        });
        let mut bytes = Vec::new();
        PnmEncoder::new(&mut bytes)
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::Rgb8)
            .expect("encoding into memory cannot fail");
        bytes
    }
}

fn heat_color(v: f64) -> Rgb<u8> {
    const STOPS: [(f64, [f64; 3]); 4] = [
        (0.0, [68.0, 1.0, 84.0]),
        (0.35, [49.0, 104.0, 142.0]),
        (0.7, [53.0, 183.0, 121.0]),
        (1.0, [253.0, 231.0, 37.0]),
    ];
    let v = v.clamp(0.0, 1.0);
    let k = STOPS.windows(2).position(|w| v <= w[1].0).unwrap_or(2);
    let (t0, c0) = STOPS[k];
    let (t1, c1) = STOPS[k + 1];
    let t = (v - t0) / (t1 - t0);
    let mix = |i: usize| (c0[i] + t * (c1[i] - c0[i])).round() as u8;
    Rgb([mix(0), mix(1), mix(2)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::GnnConfig;
    use crate::netlist::{parse_netlist, SEVEN_COMPONENT_NETLIST};
    use proptest::prelude::*;

    fn model() -> GnnModel {
        GnnModel::new(GnnConfig::default(), 0)
    }

    fn emb(values: Vec<f64>) -> EmbeddingVector {
        EmbeddingVector {
            values,
            source: String::new(),
        }
    }

    #[test]
    fn halves_are_simplex_vectors() {
        let net = parse_netlist(SEVEN_COMPONENT_NETLIST).unwrap();
        let e = embed_circuit(&net, &model(), "sample_graph").unwrap();
        assert_eq!(e.values.len(), EMBEDDING_DIM);
        assert!((e.graph_part().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((e.meta_part().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn renaming_and_values_do_not_matter() {
        let a = parse_netlist("V1 N001 N000 10V\nR1 N001 N002 100\nR2 N002 N000 220\nR3 N002 N000 470").unwrap();
        let b = parse_netlist("V1 X A 5V\nR1 X Q 1k\nR2 Q A 1k\nR3 Q A 330").unwrap();
        let m = model();
        let ea = embed_circuit(&a, &m, "a").unwrap();
        let eb = embed_circuit(&b, &m, "b").unwrap();
        assert_eq!(ea.values, eb.values);
    }

    #[test]
    fn cosine_examples() {
        let mut a = vec![0.0; 11];
        a[0] = 1.0;
        assert_eq!(cosine(&a, &a).unwrap(), 1.0);
        let mut b = vec![0.0; 11];
        b[1] = 1.0;
        assert_eq!(cosine(&a, &b).unwrap(), 0.0);
        let mut c = vec![0.0; 11];
        c[0] = 1.0;
        c[1] = 1.0;
        assert!((cosine(&c, &a).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((cosine(&c, &a).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(cosine(&[0.0; 3], &[1.0; 3]), Err(EmbeddingError::ZeroNorm));
        assert_eq!(cosine(&[1.0; 3], &[1.0; 2]), Err(EmbeddingError::LengthMismatch(3, 2)));
    }

    #[test]
    fn duplicate_pair_map() {
        let net = parse_netlist(SEVEN_COMPONENT_NETLIST).unwrap();
        let circuits = vec![("a".to_string(), net.clone()), ("b".to_string(), net)];
        let map = similarity_map(&circuits, &model()).unwrap();
        for row in &map.values {
            for v in row {
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(
            similarity_map(&circuits[..1], &model()),
            Err(EmbeddingError::TooFewCircuits)
        );
    }

    #[test]
    fn map_symmetric_and_order_independent() {
        let (items, _) = crate::dataset::generate_corpus(16, 0, 3);
        let circuits: Vec<(String, Netlist)> = items
            .iter()
            .enumerate()
            .map(|(i, it)| (format!("c{i}"), it.netlist.clone()))
            .collect();
        let m = model();
        let map = similarity_map(&circuits, &m).unwrap();
        for i in 0..16 {
            assert_eq!(map.values[i][i], 1.0);
            for j in 0..16 {
                assert!((map.values[i][j] - map.values[j][i]).abs() < 1e-12);
            }
        }
        let mut shuffled = circuits.clone();
        shuffled.reverse();
        let rev = similarity_map(&shuffled, &m).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(map.values[i][j], rev.values[15 - i][15 - j]);
            }
        }
        let tsv = map.to_tsv();
        assert_eq!(tsv.lines().count(), 17);
        let ppm = map.to_ppm(4);
        assert!(ppm.starts_with(b"P6"));
    }

    #[test]
    fn weighted_fusion() {
        let net = parse_netlist(SEVEN_COMPONENT_NETLIST).unwrap();
        let m = model();
        let plain = embed_circuit(&net, &m, "x").unwrap();
        let graph_only = embed_circuit_with(&net, &m, "x", Fusion { graph_weight: 1.0 }).unwrap();
        assert!(graph_only.meta_part().iter().all(|&v| v == 0.0));
        for (a, b) in graph_only.graph_part().iter().zip(plain.graph_part()) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }
        assert_eq!(
            embed_circuit_with(&net, &m, "x", Fusion { graph_weight: 1.5 }),
            Err(EmbeddingError::BadWeight(1.5))
        );
    }

    #[test]
    fn explain_lists_all_entries() {
        let net = parse_netlist(SEVEN_COMPONENT_NETLIST).unwrap();
        let text = embed_circuit(&net, &model(), "sample_graph").unwrap().explain();
        assert_eq!(text.lines().count(), 12);
    }

    proptest! {
        #[test]
        fn cosine_scale_invariant_and_symmetric(
            a in prop::collection::vec(0.01f64..1.0, 11),
            b in prop::collection::vec(0.01f64..1.0, 11),
            alpha in 0.001f64..1000.0,
        ) {
            let scaled: Vec<f64> = a.iter().map(|x| x * alpha).collect();
            let s = cosine(&a, &b).unwrap();
            prop_assert!((cosine(&scaled, &b).unwrap() - s).abs() < 1e-12);
            prop_assert!((cosine(&b, &a).unwrap() - s).abs() < 1e-15);
            prop_assert!((cosine_similarity(&emb(a.clone()), &emb(a)).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn intra_inter_means() {
        let map = SimilarityMap {
            labels: vec!["a".into(), "b".into(), "c".into()],
            values: vec![vec![1.0, 0.8, 0.1], vec![0.8, 1.0, 0.3], vec![0.1, 0.3, 1.0]],
        };
        let (intra, inter) = map.intra_inter(&[1, 1, 2]);
        assert!((intra - 0.8).abs() < 1e-15);
        assert!((inter - 0.2).abs() < 1e-15);
    }
}
