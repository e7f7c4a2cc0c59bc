//! Engine errors and their API codes.

use aitee_core::embedding::EmbeddingError;
use aitee_core::features_meta::MetadataError;
use aitee_core::gnn::GnnError;
use aitee_core::knowledge_base::KbError;
use aitee_core::netlist::NetlistError;
use aitee_core::reconstruct::ReconstructError;
use aitee_core::simulate::SimulationError;
use aitee_core::tutor::{BackendError, TutorError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Tutor(#[from] TutorError),
    #[error("unknown circuit `{0}`")]
    UnknownCircuit(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session `{0}` is already waiting for a reply")]
    Busy(String),
    #[error("{0}")]
    Validation(String),
    #[error("storage: {0}")]
    Storage(String),
    #[error("startup: {0}")]
    Startup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Validation,
    NotFound,
    Conflict,
    Backend,
    Internal,
}

impl Class {
    pub fn status(self) -> u16 {
        match self {
            Class::Validation => 400,
            Class::NotFound => 404,
            Class::Conflict => 409,
            Class::Backend => 502,
            Class::Internal => 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(code: &str, message: String, detail: Option<Value>) -> Self {
        ApiError {
            code: code.to_string(),
            message,
            detail,
        }
    }
}

fn netlist_code(e: &NetlistError) -> (&'static str, Option<Value>) {
    match e {
        NetlistError::UnknownComponentKind { line, .. } => ("netlist.unknown_component_kind", Some(json!({"line": line}))),
        NetlistError::MalformedLine { line, .. } => ("netlist.malformed_line", Some(json!({"line": line}))),
        NetlistError::EmptyNetlist => ("netlist.empty", None),
        NetlistError::DuplicateName { line, .. } => ("netlist.duplicate_name", Some(json!({"line": line}))),
        NetlistError::SelfLoop { line, .. } => ("netlist.self_loop", Some(json!({"line": line}))),
        NetlistError::BadValue { line, .. } => ("netlist.bad_value", Some(json!({"line": line}))),
    }
}

fn gnn_code(e: &GnnError) -> &'static str {
    match e {
        GnnError::ShapeMismatch(_) => "gnn.shape_mismatch",
        GnnError::EmptyGraph => "gnn.empty_graph",
        GnnError::NonFiniteLoss { .. } => "gnn.non_finite_loss",
        GnnError::EmptyCorpus => "gnn.empty_corpus",
        GnnError::MissingClasses(_) => "gnn.missing_classes",
        GnnError::BadMagic => "gnn.bad_magic",
        GnnError::DimMismatch(_) => "gnn.dim_mismatch",
    }
}

/// Code, class and structured detail for an engine error. Every variant of
/// every wrapped module error has its own code.
pub fn classify(e: &EngineError) -> (String, Class, Option<Value>) {
    use Class::*;
    let (code, class, detail): (String, Class, Option<Value>) = match e {
        EngineError::Netlist(n) => {
            let (c, d) = netlist_code(n);
            (c.into(), Validation, d)
        }
        EngineError::Reconstruct(r) => match r {
            ReconstructError::BadFormat { line, .. } => ("reconstruct.bad_format".into(), Validation, Some(json!({"line": line}))),
            ReconstructError::BboxOutOfBounds { line, .. } => {
                ("reconstruct.bbox_out_of_bounds".into(), Validation, Some(json!({"line": line})))
            }
            ReconstructError::Image(_) => ("reconstruct.image".into(), Validation, None),
            ReconstructError::DegenerateConnection => ("reconstruct.degenerate_connection".into(), Validation, None),
            ReconstructError::ComponentUnattached { x, y, .. } => {
                ("reconstruct.component_unattached".into(), Validation, Some(json!({"x": x, "y": y})))
            }
            ReconstructError::Netlist(n) => {
                let (c, d) = netlist_code(n);
                (format!("reconstruct.{c}"), Validation, d)
            }
        },
        EngineError::Simulation(s) => match s {
            SimulationError::MissingValues(names) => ("simulate.missing_values".into(), Validation, Some(json!({"components": names}))),
            SimulationError::NoSource => ("simulate.no_source".into(), Validation, None),
            SimulationError::ZeroResistance(name) => ("simulate.zero_resistance".into(), Validation, Some(json!({"component": name}))),
            SimulationError::SingularSystem => ("simulate.singular_system".into(), Validation, None),
        },
        EngineError::Embedding(m) => match m {
            EmbeddingError::Metadata(MetadataError::NoSource) => ("embedding.no_source".into(), Validation, None),
            EmbeddingError::Gnn(g) => (format!("embedding.{}", gnn_code(g)), Internal, None),
            EmbeddingError::ZeroNorm => ("embedding.zero_norm".into(), Internal, None),
            EmbeddingError::LengthMismatch(..) => ("embedding.length_mismatch".into(), Internal, None),
            EmbeddingError::BadWeight(_) => ("embedding.bad_weight".into(), Internal, None),
            EmbeddingError::TooFewCircuits => ("embedding.too_few_circuits".into(), Validation, None),
        },
        EngineError::Kb(k) => match k {
            KbError::Io { .. } => ("kb.io".into(), Internal, None),
            KbError::DuplicateId(_) => ("kb.duplicate_id".into(), Internal, None),
            KbError::BadId(_) => ("kb.bad_id".into(), Internal, None),
            KbError::MissingIndexNetlist(_) => ("kb.missing_index_netlist".into(), Internal, None),
            KbError::MissingBody(_) => ("kb.missing_body".into(), Internal, None),
            KbError::Netlist { .. } => ("kb.netlist".into(), Internal, None),
            KbError::IndexWithoutSource { .. } => ("kb.index_without_source".into(), Internal, None),
            KbError::EmptyKb => ("kb.empty".into(), Internal, None),
            KbError::StaleIndex { .. } => ("kb.stale_index".into(), Internal, None),
            KbError::BadIndex { .. } => ("kb.bad_index".into(), Internal, None),
            KbError::NotIndexed => ("kb.not_indexed".into(), Internal, None),
            KbError::Embedding(_) => ("kb.embedding".into(), Validation, None),
        },
        EngineError::Tutor(t) => match t {
            TutorError::BadShotCount(n) => ("tutor.bad_shot_count".into(), Validation, Some(json!({"shots": n}))),
            TutorError::BadMode(_) => ("tutor.bad_mode".into(), Validation, None),
            TutorError::EmptyMessage => ("tutor.empty_message".into(), Validation, None),
            TutorError::TurnOrder => ("tutor.turn_order".into(), Conflict, None),
            TutorError::ContextOverflow { needed, limit } => {
                ("tutor.context_overflow".into(), Validation, Some(json!({"needed": needed, "limit": limit})))
            }
            TutorError::Backend(b) => match b {
                BackendError::Unavailable(_) => ("backend.unavailable".into(), Backend, None),
                BackendError::Timeout(d) => ("backend.timeout".into(), Backend, Some(json!({"seconds": d.as_secs_f64()}))),
                BackendError::BadResponse(_) => ("backend.bad_response".into(), Backend, None),
            },
            TutorError::CorruptLog(_) => ("tutor.corrupt_log".into(), Internal, None),
            TutorError::BadScript { line, .. } => ("tutor.bad_script".into(), Validation, Some(json!({"line": line}))),
        },
        EngineError::UnknownCircuit(id) => ("unknown_circuit".into(), NotFound, Some(json!({"id": id}))),
        EngineError::UnknownSession(id) => ("unknown_session".into(), NotFound, Some(json!({"id": id}))),
        EngineError::Busy(id) => ("session_busy".into(), Conflict, Some(json!({"id": id}))),
        EngineError::Validation(_) => ("bad_request".into(), Validation, None),
        EngineError::Storage(_) => ("storage".into(), Internal, None),
        EngineError::Startup(_) => ("startup".into(), Internal, None),
    };
    (code, class, detail)
}

pub fn to_api(e: &EngineError) -> (u16, ApiError) {
    let (code, class, detail) = classify(e);
    (class.status(), ApiError::new(&code, e.to_string(), detail))
}
