use std::path::{Path, PathBuf};

use aitee_core::dataset::{generate_circuit, rules, CircuitClass};
use aitee_core::parse_netlist;
use aitee_core::embedding::{cosine, embed_circuit};
use aitee_core::gnn::{load_model, GnnModel};
use aitee_core::knowledge_base::*;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn reference() -> GnnModel {
    load_model(&std::fs::read(repo().join("models/reference.gnn")).unwrap()).unwrap()
}

#[test]
fn shipped_kb_has_one_unit_per_class() {
    let kb = load_kb(&repo().join("kb")).unwrap();
    assert_eq!(kb.units.len(), 8);
    for c in CircuitClass::all() {
        let unit = kb.unit(&c.name()).unwrap();
        assert!(!unit.title.is_empty());
        assert!(!unit.index_netlists.is_empty());
    }
    let entries: usize = kb.units.iter().map(|u| u.index_netlists.len()).sum();
    assert!(entries >= 8);
}

#[test]
fn shipped_index_is_current() {
    let dir = repo().join("kb");
    let model = reference();
    let kb = load_kb(&dir).unwrap();
    let rebuilt = index_to_tsv(&build_index(&kb, &model).unwrap()).unwrap();
    assert_eq!(std::fs::read_to_string(dir.join(INDEX_FILE)).unwrap(), rebuilt);
    assert!(load_or_build_index(&dir, &kb, &model).is_ok());
}

#[test]
fn class_exemplars_retrieve_their_unit() {
    let dir = repo().join("kb");
    let model = reference();
    let kb = load_or_build_index(&dir, &load_kb(&dir).unwrap(), &model).unwrap();
    for c in CircuitClass::all() {
        let path = repo().join(format!("crates/core/tests/fixtures/exemplars/class-{}.net", c.id()));
        let q = parse_netlist(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(rules::classify(&q), Some(c));
        let got = retrieve_units(&kb, &q, &model, 8).unwrap();
        assert_eq!(got[0].unit_id, c.name(), "{c}");

        let qe = embed_circuit(&q, &model, "q").unwrap();
        let mut oracle: Vec<(String, f64)> = kb
            .units
            .iter()
            .map(|u| {
                let best = kb
                    .index
                    .iter()
                    .filter(|e| e.unit_id == u.id)
                    .map(|e| cosine(&qe.values, &e.embedding.values).unwrap())
                    .fold(f64::NEG_INFINITY, f64::max);
                (u.id.clone(), best)
            })
            .collect();
        oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let ranked: Vec<(String, f64)> = got.iter().map(|r| (r.unit_id.clone(), r.score)).collect();
        assert_eq!(ranked, oracle);
    }
}

#[test]
fn fresh_parallel_query_finds_parallel_unit() {
    let dir = repo().join("kb");
    let model = reference();
    let kb = load_or_build_index(&dir, &load_kb(&dir).unwrap(), &model).unwrap();
    let c = CircuitClass::from_id(1).unwrap();
    let q = generate_circuit(c, 5, 31337).unwrap().netlist;
    assert_eq!(retrieve_units(&kb, &q, &model, 1).unwrap()[0].unit_id, "parallel-single");
}
