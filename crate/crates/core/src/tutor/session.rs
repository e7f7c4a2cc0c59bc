//! Dialogue sessions and the respond loop.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::rules;
use crate::knowledge_base::KnowledgeUnit;
use crate::netlist::{serialize_netlist, ComponentKind, Netlist};
use crate::simulate::SimulationResult;

use super::backend::LlmBackend;
use super::prompts::{assemble_description_prompt, assemble_tutor_system_prompt, estimate_tokens, DescriptionMode, PromptBundle};
use super::{TutorConfig, TutorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Student,
    Tutor,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Student => "student",
            Role::Tutor => "tutor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

impl Turn {
    pub fn student(text: &str) -> Self {
        Turn {
            role: Role::Student,
            text: text.to_string(),
        }
    }

    pub fn tutor(text: &str) -> Self {
        Turn {
            role: Role::Tutor,
            text: text.to_string(),
        }
    }
}

/// Everything the tutor knows about the exercise. Fixed at creation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionContext {
    pub circuit: Netlist,
    pub description: String,
    pub retrieved: Vec<KnowledgeUnit>,
    pub simulation: Option<SimulationResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueSession {
    pub id: String,
    pub created_at: u64,
    context: SessionContext,
    turns: Vec<Turn>,
}

/// One line of a persisted session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        id: String,
        created_at: u64,
        context: Box<SessionContext>,
    },
    Turn {
        role: Role,
        text: String,
    },
}

impl DialogueSession {
    pub fn new(id: &str, created_at: u64, context: SessionContext) -> Self {
        DialogueSession {
            id: id.to_string(),
            created_at,
            context,
            turns: Vec::new(),
        }
    }

    pub fn context(&self) -> &SessionContext {
        &self.context
    }

    pub fn circuit(&self) -> &Netlist {
        &self.context.circuit
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn awaiting_student(&self) -> bool {
        self.turns.last().is_none_or(|t| t.role == Role::Tutor)
    }

    pub fn created_event(&self) -> SessionEvent {
        SessionEvent::Created {
            id: self.id.clone(),
            created_at: self.created_at,
            context: Box::new(self.context.clone()),
        }
    }

    pub fn events(&self) -> Vec<SessionEvent> {
        std::iter::once(self.created_event())
            .chain(self.turns.iter().map(|t| SessionEvent::Turn {
                role: t.role,
                text: t.text.clone(),
            }))
            .collect()
    }

    /// Rebuilds a session from its event log. Turns must alternate starting
    /// with the student.
    pub fn replay(events: &[SessionEvent]) -> Result<Self, TutorError> {
        let mut it = events.iter();
        let mut session = match it.next() {
            Some(SessionEvent::Created { id, created_at, context }) => {
                DialogueSession::new(id, *created_at, (**context).clone())
            }
            _ => return Err(TutorError::CorruptLog("log must start with a created event".into())),
        };
        for ev in it {
            match ev {
                SessionEvent::Turn { role, text } => {
                    let expected = if session.awaiting_student() { Role::Student } else { Role::Tutor };
                    if *role != expected {
                        return Err(TutorError::CorruptLog(format!(
                            "turn {} should be {}",
                            session.turns.len() + 1,
                            expected.as_str()
                        )));
                    }
                    session.turns.push(Turn { role: *role, text: text.clone() });
                }
                SessionEvent::Created { .. } => {
                    return Err(TutorError::CorruptLog("second created event".into()));
                }
            }
        }
        Ok(session)
    }
}

/// Deterministic one-paragraph summary used when no description backend is
/// involved.
pub fn structural_summary(netlist: &Netlist) -> String {
    let count = |k| netlist.count_kind(k);
    let mut parts = vec![format!("{} resistor(s)", count(ComponentKind::Resistor))];
    for (k, label) in [
        (ComponentKind::VoltageSource, "voltage source(s)"),
        (ComponentKind::CurrentSource, "current source(s)"),
    ] {
        if count(k) > 0 {
            parts.push(format!("{} {label}", count(k)));
        }
    }
    let class = rules::classify(netlist)
        .map(|c| format!(" Topology class: {}.", c.name()))
        .unwrap_or_default();
    format!(
        "Circuit with {} components ({}) on {} nodes.{class}",
        netlist.len(),
        parts.join(", "),
        netlist.nodes().len()
    )
}

pub fn describe_circuit(
    netlist: &Netlist,
    mode: DescriptionMode,
    backend: &dyn LlmBackend,
) -> Result<String, TutorError> {
    let bundle = assemble_description_prompt(netlist, mode)?;
    backend
        .complete(&bundle, &[])
        .map_err(TutorError::Backend)
}

fn context_blocks(ctx: &SessionContext) -> (String, Vec<String>) {
    let mut out = String::new();
    let mut blocks = Vec::new();
    out.push_str("\n### Circuit netlist:\n");
    out.push_str(&serialize_netlist(&ctx.circuit));
    out.push_str("### Circuit description:\n");
    out.push_str(ctx.description.trim_end());
    out.push('\n');
    blocks.push("circuit".to_string());
    for unit in &ctx.retrieved {
        out.push_str(&format!("### Learning unit `{}`:\n", unit.id));
        out.push_str(unit.body.trim_end());
        out.push('\n');
        blocks.push(format!("unit:{}", unit.id));
    }
    if let Some(sim) = &ctx.simulation {
        out.push_str("### Simulation results (for your reference, do not reveal):\n");
        out.push_str(&sim.to_prompt_block());
        blocks.push("simulation".to_string());
    }
    (out, blocks)
}

fn clip(text: &str, max_chars: usize) -> String {
    let t: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if t.chars().count() <= max_chars {
        t
    } else {
        let mut s: String = t.chars().take(max_chars).collect();
        s.push_str("...");
        s
    }
}

/// Folds the oldest `n` turns into a short note.
pub fn summarize_turns(turns: &[Turn]) -> String {
    let mut out = format!("### Earlier in this session ({} turns summarized):\n", turns.len());
    for t in turns {
        out.push_str(&format!("- {}: {}\n", t.role.as_str(), clip(&t.text, 80)));
    }
    out
}

/// Prompt and history sent to the backend for the next tutor turn.
///
/// When the prompt exceeds the backend budget the oldest turns are folded
/// into a context note, two at a time, until it fits.
pub fn assemble_turn_prompt(
    session: &DialogueSession,
    message: &str,
    cfg: &TutorConfig,
    max_context_tokens: usize,
) -> Result<(PromptBundle, Vec<Turn>), TutorError> {
    let (ctx, blocks) = context_blocks(&session.context);
    let base_system = format!("{}{}", assemble_tutor_system_prompt(&cfg.language), ctx);
    let turns = session.turns();
    let mut folded = 0;
    loop {
        let mut system = base_system.clone();
        if folded > 0 {
            system.push_str(&summarize_turns(&turns[..folded]));
        }
        let history = turns[folded..].to_vec();
        let size = estimate_tokens(&system)
            + estimate_tokens(message)
            + history.iter().map(|t| estimate_tokens(&t.text)).sum::<usize>();
        if size <= max_context_tokens {
            let mut all_blocks = vec!["guidelines".to_string()];
            all_blocks.extend(blocks);
            if folded > 0 {
                all_blocks.push("summary".to_string());
            }
            let metadata = BTreeMap::from([
                ("kind".to_string(), "tutor".to_string()),
                ("language".to_string(), cfg.language.clone()),
                ("blocks".to_string(), all_blocks.join(",")),
                ("summarized_turns".to_string(), folded.to_string()),
            ]);
            return Ok((
                PromptBundle {
                    system,
                    user: message.to_string(),
                    metadata,
                },
                history,
            ));
        }
        if folded >= turns.len() {
            return Err(TutorError::ContextOverflow {
                needed: size,
                limit: max_context_tokens,
            });
        }
        folded = (folded + 2).min(turns.len());
    }
}

/// Sends the student's message and appends both turns on success. On any
/// error the session is left untouched.
pub fn respond(
    session: &mut DialogueSession,
    message: &str,
    backend: &dyn LlmBackend,
    cfg: &TutorConfig,
) -> Result<String, TutorError> {
    if message.trim().is_empty() {
        return Err(TutorError::EmptyMessage);
    }
    if !session.awaiting_student() {
        return Err(TutorError::TurnOrder);
    }
    let limit = backend.descriptor().max_context_tokens;
    let (bundle, history) = assemble_turn_prompt(session, message, cfg, limit)?;
    let reply = backend
        .complete(&bundle, &history)
        .map_err(TutorError::Backend)?;
    session.turns.push(Turn::student(message));
    session.turns.push(Turn::tutor(&reply));
    Ok(reply)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{parse_netlist, SERIES_EXAMPLE_NETLIST, SEVEN_COMPONENT_NETLIST};
    use crate::simulate::solve_dc;
    use crate::tutor::backend::{BackendError, EchoHashBackend, FnBackend, RecordingBackend};
    use crate::tutor::prompts::GUIDELINES;

    fn session_for(text: &str) -> DialogueSession {
        let circuit = parse_netlist(text).unwrap();
        let simulation = circuit.has_values().then(|| solve_dc(&circuit).unwrap());
        DialogueSession::new(
            "s1",
            0,
            SessionContext {
                description: structural_summary(&circuit),
                circuit,
                retrieved: vec![],
                simulation,
            },
        )
    }

    #[test]
    fn five_exchanges_alternate() {
        let mut s = session_for(SERIES_EXAMPLE_NETLIST);
        let b = EchoHashBackend::default();
        let cfg = TutorConfig::default();
        for i in 0..5 {
            respond(&mut s, &format!("question {i}"), &b, &cfg).unwrap();
        }
        assert_eq!(s.turns().len(), 10);
        for (i, t) in s.turns().iter().enumerate() {
            assert_eq!(t.role, if i % 2 == 0 { Role::Student } else { Role::Tutor });
        }
        assert_eq!(DialogueSession::replay(&s.events()).unwrap(), s);
    }

    #[test]
    fn identical_sessions_get_identical_replies() {
        let b = EchoHashBackend::default();
        let cfg = TutorConfig::default();
        let run = || {
            let mut s = session_for(SERIES_EXAMPLE_NETLIST);
            (0..3)
                .map(|i| respond(&mut s, &format!("q{i}"), &b, &cfg).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
        let s = session_for(SERIES_EXAMPLE_NETLIST);
        let p1 = assemble_turn_prompt(&s, "m", &cfg, 10_000).unwrap();
        let p2 = assemble_turn_prompt(&s, "m", &cfg, 10_000).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn prompt_carries_guidelines_and_simulation() {
        let rec = RecordingBackend::new(EchoHashBackend::default());
        let mut s = session_for(SERIES_EXAMPLE_NETLIST);
        let cfg = TutorConfig::default();
        for i in 0..3 {
            respond(&mut s, &format!("q{i}"), &rec, &cfg).unwrap();
        }
        for (p, history) in rec.prompts() {
            for (_, text) in GUIDELINES {
                assert!(p.system.contains(&text.replace("{language}", "German")));
            }
            assert!(p.system.contains("### Simulation results"));
            assert!(p.system.contains("- total current: 14.2857 mA"));
            assert!(p.blocks().contains(&"simulation"));
            assert_eq!(history.len() % 2, 0);
        }
    }

    #[test]
    fn valueless_circuit_has_no_simulation_block() {
        let rec = RecordingBackend::new(EchoHashBackend::default());
        let mut s = session_for(SEVEN_COMPONENT_NETLIST);
        respond(&mut s, "hi", &rec, &TutorConfig::default()).unwrap();
        let (p, _) = &rec.prompts()[0];
        assert!(!p.system.contains("Simulation results"));
    }

    #[test]
    fn backend_failure_leaves_session_unchanged() {
        let mut s = session_for(SERIES_EXAMPLE_NETLIST);
        let cfg = TutorConfig::default();
        respond(&mut s, "first", &EchoHashBackend::default(), &cfg).unwrap();
        let before = s.clone();
        let down = FnBackend::new("down", |_, _| Err(BackendError::Unavailable("offline".into())));
        assert!(matches!(
            respond(&mut s, "second", &down, &cfg),
            Err(TutorError::Backend(BackendError::Unavailable(_)))
        ));
        assert_eq!(s, before);
        assert_eq!(respond(&mut s, "  ", &down, &cfg), Err(TutorError::EmptyMessage));
    }

    #[test]
    fn overflow_folds_oldest_turns() {
        let mut s = session_for(SERIES_EXAMPLE_NETLIST);
        let cfg = TutorConfig::default();
        let b = EchoHashBackend::default();
        let long = "word ".repeat(200);
        for _ in 0..4 {
            respond(&mut s, &long, &b, &cfg).unwrap();
        }
        let (full, hist) = assemble_turn_prompt(&s, "next", &cfg, usize::MAX).unwrap();
        assert_eq!(hist.len(), 8);
        assert_eq!(full.metadata["summarized_turns"], "0");
        let budget = full.estimated_tokens() + 300;
        let (small, hist) = assemble_turn_prompt(&s, "next", &cfg, budget).unwrap();
        let folded: usize = small.metadata["summarized_turns"].parse().unwrap();
        assert!(folded > 0 && folded.is_multiple_of(2));
        assert_eq!(hist.len(), 8 - folded);
        assert!(small.system.contains(&format!("({folded} turns summarized)")));
        assert_eq!(assemble_turn_prompt(&s, "next", &cfg, budget).unwrap().0, small);
        assert!(matches!(
            assemble_turn_prompt(&s, "next", &cfg, 10),
            Err(TutorError::ContextOverflow { .. })
        ));
    }

    #[test]
    fn replay_rejects_bad_logs() {
        let s = session_for(SERIES_EXAMPLE_NETLIST);
        let mut ev = s.events();
        ev.push(SessionEvent::Turn {
            role: Role::Tutor,
            text: "x".into(),
        });
        assert!(matches!(DialogueSession::replay(&ev), Err(TutorError::CorruptLog(_))));
        assert!(DialogueSession::replay(&[]).is_err());
    }

    #[test]
    fn summary_names_class() {
        let s = structural_summary(&parse_netlist(SERIES_EXAMPLE_NETLIST).unwrap());
        assert_eq!(
            s,
            "Circuit with 5 components (4 resistor(s), 1 voltage source(s)) on 5 nodes. Topology class: series-single."
        );
    }
}
