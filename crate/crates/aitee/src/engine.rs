//! Shared state behind the HTTP API and the terminal chat: the loaded model
//! and knowledge base, registered circuits and live sessions.

use std::collections::{BTreeMap, HashSet};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use aitee_core::circuit_graph::build_graph;
use aitee_core::embedding::embed_circuit;
use aitee_core::gnn::{load_model, model_hash, GnnModel};
use aitee_core::knowledge_base::{index_to_tsv, load_kb, load_or_build_index, retrieve_units, KnowledgeBase, RetrievedUnit};
use aitee_core::netlist::{derive_node_context, parse_netlist, serialize_netlist, Netlist};
use aitee_core::reconstruct::{load_scene, reconstruct};
use aitee_core::simulate::{solve_dc, superposition_report, SimulationResult, SuperpositionReport};
use aitee_core::tutor::backend::{EchoHashBackend, ScriptedBackend};
use aitee_core::tutor::session::describe_circuit;
use aitee_core::tutor::{respond, DialogueSession, LlmBackend, SessionContext, Turn};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{BackendKind, Config};
use crate::error::EngineError;
use crate::http_backend::HttpChatBackend;
use crate::store::SessionStore;

#[derive(Debug, Clone, Serialize)]
pub struct PredictedClass {
    pub id: usize,
    pub name: String,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CircuitInfo {
    pub circuit_id: String,
    pub netlist: String,
    pub node_context: String,
    pub warnings: Vec<String>,
    pub predicted_class: Option<PredictedClass>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingInfo {
    pub circuit_id: String,
    pub values: Vec<f64>,
    pub graph_part: Vec<f64>,
    pub meta_part: Vec<f64>,
    pub explanation: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimilarInfo {
    pub circuit_id: String,
    pub k: usize,
    pub units: Vec<RetrievedUnit>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationInfo {
    pub circuit_id: String,
    pub result: SimulationResult,
    pub table: String,
    pub superposition: Option<SuperpositionReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub circuit_id: String,
    pub description: String,
    pub retrieved: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MessageReply {
    pub session_id: String,
    pub reply: String,
    pub turn_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub circuit_id: String,
    pub created_at: u64,
    pub context: SessionContext,
    pub turns: Vec<Turn>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub model_hash: String,
    pub kb_hash: String,
    pub backend: String,
    pub units: usize,
    pub sessions: usize,
}

/// Stable id of a circuit: prefix of the hash of its canonical text.
pub fn circuit_id(netlist: &Netlist) -> String {
    hex::encode(Sha256::digest(serialize_netlist(netlist).as_bytes()))[..16].to_string()
}

pub fn make_backend(cfg: &Config) -> Result<Arc<dyn LlmBackend>, EngineError> {
    let b = &cfg.backend;
    Ok(match b.kind {
        BackendKind::Mock => Arc::new(EchoHashBackend {
            max_context_tokens: b.max_context_tokens,
        }),
        BackendKind::Scripted => {
            let path = b
                .script
                .as_ref()
                .ok_or_else(|| EngineError::Startup("scripted backend needs backend.script".into()))?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| EngineError::Startup(format!("{}: {e}", path.display())))?;
            let mut s = ScriptedBackend::from_script(&text);
            s.max_context_tokens = b.max_context_tokens;
            Arc::new(s)
        }
        BackendKind::Http => Arc::new(HttpChatBackend::new(b)),
    })
}

pub struct Engine {
    pub config: Config,
    model: GnnModel,
    model_hash: String,
    kb: KnowledgeBase,
    kb_hash: String,
    backend: Arc<dyn LlmBackend>,
    store: SessionStore,
    circuits: RwLock<BTreeMap<String, Netlist>>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<DialogueSession>>>>,
    in_flight: Mutex<HashSet<String>>,
}

/// Clears the in-flight mark for a session when dropped.
struct InFlight<'a> {
    set: &'a Mutex<HashSet<String>>,
    id: String,
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.set.lock().unwrap_or_else(|e| e.into_inner()).remove(&self.id);
    }
}

impl Engine {
    /// Loads model, knowledge base, backend and stored sessions per `config`.
    pub fn from_config(config: Config) -> Result<Self, EngineError> {
        let bytes = std::fs::read(&config.model)
            .map_err(|e| EngineError::Startup(format!("{}: {e}", config.model.display())))?;
        let model = load_model(&bytes).map_err(|e| EngineError::Startup(format!("{}: {e}", config.model.display())))?;
        let kb = load_kb(&config.kb_dir)?;
        let kb = load_or_build_index(&config.kb_dir, &kb, &model)?;
        let backend = make_backend(&config)?;
        Self::new(config, model, kb, backend)
    }

    pub fn new(
        config: Config,
        model: GnnModel,
        kb: KnowledgeBase,
        backend: Arc<dyn LlmBackend>,
    ) -> Result<Self, EngineError> {
        let store = SessionStore::open(&config.data_dir)?;
        let mut circuits = BTreeMap::new();
        let mut sessions = BTreeMap::new();
        for s in store.load_all()? {
            circuits.insert(circuit_id(s.circuit()), s.circuit().clone());
            sessions.insert(s.id.clone(), Arc::new(Mutex::new(s)));
        }
        let kb_hash = match index_to_tsv(&kb) {
            Ok(tsv) => hex::encode(Sha256::digest(tsv.as_bytes())),
            Err(_) => String::new(),
        };
        Ok(Engine {
            config,
            model_hash: model_hash(&model),
            model,
            kb,
            kb_hash,
            backend,
            store,
            circuits: RwLock::new(circuits),
            sessions: RwLock::new(sessions),
            in_flight: Mutex::new(HashSet::new()),
        })
    }

    pub fn model(&self) -> &GnnModel {
        &self.model
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok",
            model_hash: self.model_hash.clone(),
            kb_hash: self.kb_hash.clone(),
            backend: self.backend.descriptor().name,
            units: self.kb.units.len(),
            sessions: self.sessions.read().unwrap_or_else(|e| e.into_inner()).len(),
        }
    }

    fn register(&self, netlist: Netlist) -> CircuitInfo {
        let id = circuit_id(&netlist);
        let predicted_class = self.model.predict(&build_graph(&netlist)).ok().map(|(c, p)| PredictedClass {
            id: c.id(),
            name: c.name(),
            probability: p[c.index()],
        });
        let info = CircuitInfo {
            circuit_id: id.clone(),
            netlist: serialize_netlist(&netlist),
            node_context: derive_node_context(&netlist),
            warnings: netlist.warnings(),
            predicted_class,
        };
        self.circuits
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, netlist);
        info
    }

    pub fn add_netlist(&self, text: &str) -> Result<CircuitInfo, EngineError> {
        Ok(self.register(parse_netlist(text)?))
    }

    /// Reconstructs a circuit from detections (JSON lines) and a PGM sketch.
    pub fn add_scene(&self, detections: &str, pgm: &[u8]) -> Result<CircuitInfo, EngineError> {
        let scene = load_scene(detections, pgm)?;
        let result = reconstruct(&scene, &self.config.reconstruct)?;
        let mut info = self.register(result.netlist);
        info.warnings.extend(result.diagnostics);
        Ok(info)
    }

    pub fn circuit(&self, id: &str) -> Result<Netlist, EngineError> {
        self.circuits
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| EngineError::UnknownCircuit(id.to_string()))
    }

    pub fn embedding(&self, id: &str) -> Result<EmbeddingInfo, EngineError> {
        let net = self.circuit(id)?;
        let e = embed_circuit(&net, &self.model, id)?;
        Ok(EmbeddingInfo {
            circuit_id: id.to_string(),
            graph_part: e.graph_part().to_vec(),
            meta_part: e.meta_part().to_vec(),
            explanation: e.explain(),
            values: e.values,
        })
    }

    pub fn similar(&self, id: &str, k: Option<usize>) -> Result<SimilarInfo, EngineError> {
        let net = self.circuit(id)?;
        let k = k.unwrap_or(self.config.retrieval_k);
        if k == 0 {
            return Err(EngineError::Validation("k must be at least 1".into()));
        }
        Ok(SimilarInfo {
            circuit_id: id.to_string(),
            k,
            units: retrieve_units(&self.kb, &net, &self.model, k)?,
        })
    }

    pub fn simulate(&self, id: &str, superposition: bool) -> Result<SimulationInfo, EngineError> {
        let net = self.circuit(id)?;
        let result = solve_dc(&net)?;
        let superposition = if superposition { Some(superposition_report(&net)?) } else { None };
        Ok(SimulationInfo {
            circuit_id: id.to_string(),
            table: result.to_table(),
            result,
            superposition,
        })
    }

    /// Starts a session: description from the backend, retrieved units and,
    /// when every component has a value, the DC solution.
    pub fn create_session(&self, circuit_id: &str) -> Result<SessionCreated, EngineError> {
        let net = self.circuit(circuit_id)?;
        let tutor = self.config.tutor();
        let description = describe_circuit(&net, tutor.description_mode, self.backend.as_ref())?;
        let retrieved = if self.kb.is_empty() {
            Vec::new()
        } else {
            match retrieve_units(&self.kb, &net, &self.model, self.config.retrieval_k) {
                Ok(r) => r
                    .iter()
                    .filter_map(|u| self.kb.unit(&u.unit_id).cloned())
                    .collect(),
                // circuits without a source cannot be embedded
                Err(aitee_core::knowledge_base::KbError::Embedding(_)) => Vec::new(),
                Err(e) => return Err(e.into()),
            }
        };
        let simulation = if net.has_values() { solve_dc(&net).ok() } else { None };
        let id = uuid::Uuid::new_v4().simple().to_string();
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let session = DialogueSession::new(
            &id,
            created_at,
            SessionContext {
                circuit: net,
                description: description.clone(),
                retrieved,
                simulation,
            },
        );
        self.store.append(&id, &[session.created_event()])?;
        let out = SessionCreated {
            session_id: id.clone(),
            circuit_id: circuit_id.to_string(),
            description,
            retrieved: session.context().retrieved.iter().map(|u| u.id.clone()).collect(),
        };
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(out)
    }

    fn session_handle(&self, id: &str) -> Result<Arc<Mutex<DialogueSession>>, EngineError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| EngineError::UnknownSession(id.to_string()))
    }

    /// One student message. A second message to the same session while the
    /// first is still waiting on the backend fails with `Busy`.
    pub fn send_message(&self, session_id: &str, text: &str) -> Result<MessageReply, EngineError> {
        let handle = self.session_handle(session_id)?;
        let _guard = {
            let mut set = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
            if !set.insert(session_id.to_string()) {
                return Err(EngineError::Busy(session_id.to_string()));
            }
            InFlight {
                set: &self.in_flight,
                id: session_id.to_string(),
            }
        };
        let mut working = handle.lock().unwrap_or_else(|e| e.into_inner()).clone();
        let before = working.turns().len();
        let reply = respond(&mut working, text, self.backend.as_ref(), &self.config.tutor())?;
        self.store.append(session_id, &working.events()[1 + before..])?;
        let turn_count = working.turns().len();
        *handle.lock().unwrap_or_else(|e| e.into_inner()) = working;
        Ok(MessageReply {
            session_id: session_id.to_string(),
            reply,
            turn_count,
        })
    }

    pub fn session(&self, id: &str) -> Result<SessionView, EngineError> {
        let handle = self.session_handle(id)?;
        let s = handle.lock().unwrap_or_else(|e| e.into_inner());
        Ok(SessionView {
            session_id: s.id.clone(),
            circuit_id: circuit_id(s.circuit()),
            created_at: s.created_at,
            context: s.context().clone(),
            turns: s.turns().to_vec(),
        })
    }
}
