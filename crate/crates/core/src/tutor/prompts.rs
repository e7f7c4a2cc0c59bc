//! Prompt texts for circuit descriptions and the tutoring system prompt.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::netlist::{derive_node_context, serialize_netlist, Netlist};

use super::TutorError;

pub const NETLIST_HEADER: &str = "### Here is the netlist to be described. Netlist:";

pub const BASELINE_INSTRUCTION: &str = "Your task is to analyze a netlist and briefly and concisely describe the circuit. Describe the circuit represented by the netlist, not the netlist itself.";

pub const COT_INSTRUCTION: &str = "Your task is to analyze a netlist and briefly and concisely describe the circuit it represents. Follow these steps in order:";

pub const COT_STEPS: [&str; 4] = [
    "1. Create a description explaining how the components of the circuit are connected.",
    "2. Create a description of how the electric current flows through the circuit from the first pole of the source to the second.\n(This point can be ignored for circuits with multiple sources)",
    "3. Create a list of sub-circuits, such as series circuits, parallel circuits, or delta/star connections.",
    "4. Create a description of the overall circuit. (Describe the circuit represented by the netlist, not the netlist itself.)",
];

const NETLIST_GUIDE: &str = "Each netlist line names a component, its first node, its second node and optionally its value. \
Components that list the same node label are electrically connected at that node. \
The node list below is derived from the netlist and is exact.";

/// `(title, text)` of the nine tutoring guidelines. `{language}` is replaced
/// by the configured answer language.
pub const GUIDELINES: [(&str, &str); 9] = [
    ("Socratic Questioning", "Ask a specific question that stimulates the students' critical thinking and lead them step by step to the solution."),
    ("No direct solutions", "Never provide complete or partial solutions. Your role is to enable students to solve problems independently."),
    ("Promote self-efficacy", "Encourage students to think for themselves and apply their knowledge. Don't show the students how to do it, but encourage them to find the solution themselves."),
    ("Error correction", "If students give incorrect answers, gently guide them in the right direction without giving away the correct answer."),
    ("Technical terms", "Use and explain relevant electrical engineering terms to deepen understanding."),
    ("Language", "Answer in {language} only."),
    ("Adaptability", "Adapt your explanations and questions to the student's level of understanding."),
    ("Positive reinforcement", "Reward correct answers and progress to increase motivation."),
    ("Short and specific answers", "Always answer the student's specific question to enable step-by-step problem solving."),
];

pub const DEFAULT_LANGUAGE: &str = "German";

const TUTOR_ROLE: &str = "You are a tutor for introductory electrical engineering. \
Students work on DC circuit exercises and ask you for help. \
Guide them with the following guidelines:";

const EXEMPLAR_DIALOGUES: &str = include_str!("../../data/dialogues.md");

/// Worked `(netlist, description)` pairs for few-shot prompts.
pub const FEW_SHOT_LIBRARY: [&str; 4] = [
    include_str!("../../data/fewshot/1-series.txt"),
    include_str!("../../data/fewshot/2-parallel.txt"),
    include_str!("../../data/fewshot/3-mixed.txt"),
    include_str!("../../data/fewshot/4-bridge.txt"),
];

pub const MAX_SHOTS: usize = FEW_SHOT_LIBRARY.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptionMode {
    Baseline,
    Cot,
    CotFewShot(usize),
    CotFewShotCtx(usize),
}

impl DescriptionMode {
    pub fn shots(self) -> usize {
        match self {
            DescriptionMode::CotFewShot(n) | DescriptionMode::CotFewShotCtx(n) => n,
            _ => 0,
        }
    }
}

impl Default for DescriptionMode {
    fn default() -> Self {
        DescriptionMode::CotFewShotCtx(MAX_SHOTS)
    }
}

impl fmt::Display for DescriptionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DescriptionMode::Baseline => write!(f, "baseline"),
            DescriptionMode::Cot => write!(f, "cot"),
            DescriptionMode::CotFewShot(n) => write!(f, "cot-fewshot-{n}"),
            DescriptionMode::CotFewShotCtx(n) => write!(f, "cot-fewshot-ctx-{n}"),
        }
    }
}

impl FromStr for DescriptionMode {
    type Err = TutorError;

    /// Accepts `baseline`, `cot`, `cot-fewshot-N` and `cot-fewshot-ctx-N`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let shots = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| TutorError::BadMode(s.to_string()))
        };
        match s {
            "baseline" => Ok(DescriptionMode::Baseline),
            "cot" => Ok(DescriptionMode::Cot),
            _ => {
                if let Some(n) = s.strip_prefix("cot-fewshot-ctx-") {
                    Ok(DescriptionMode::CotFewShotCtx(shots(n)?))
                } else if let Some(n) = s.strip_prefix("cot-fewshot-") {
                    Ok(DescriptionMode::CotFewShot(shots(n)?))
                } else {
                    Err(TutorError::BadMode(s.to_string()))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    /// Prompt kind, mode, shot count and the ordered list of included blocks.
    pub metadata: BTreeMap<String, String>,
}

impl PromptBundle {
    pub fn blocks(&self) -> Vec<&str> {
        self.metadata
            .get("blocks")
            .map(|b| b.split(',').filter(|s| !s.is_empty()).collect())
            .unwrap_or_default()
    }

    /// Rough size in tokens, four characters per token.
    pub fn estimated_tokens(&self) -> usize {
        estimate_tokens(&self.system) + estimate_tokens(&self.user)
    }
}

pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

fn few_shot_block(n: usize) -> String {
    let mut out = String::new();
    for (i, ex) in FEW_SHOT_LIBRARY.iter().take(n).enumerate() {
        let (net, desc) = ex.split_once("---\n").unwrap_or((ex, ""));
        out.push_str(&format!(
            "### Example {}. Netlist:\n{}### Description:\n{}\n",
            i + 1,
            net,
            desc.trim_end()
        ));
    }
    out
}

pub fn assemble_description_prompt(netlist: &Netlist, mode: DescriptionMode) -> Result<PromptBundle, TutorError> {
    let shots = mode.shots();
    if matches!(mode, DescriptionMode::CotFewShot(_) | DescriptionMode::CotFewShotCtx(_))
        && !(1..=MAX_SHOTS).contains(&shots)
    {
        return Err(TutorError::BadShotCount(shots));
    }
    let mut blocks = Vec::new();
    let mut user = String::new();
    if shots > 0 {
        user.push_str(&few_shot_block(shots));
        blocks.push(format!("fewshot-{shots}"));
    }
    user.push_str(NETLIST_HEADER);
    user.push('\n');
    user.push_str(&serialize_netlist(netlist));
    blocks.push("netlist".to_string());
    if matches!(mode, DescriptionMode::CotFewShotCtx(_)) {
        user.push_str("### Node context:\n");
        user.push_str(NETLIST_GUIDE);
        user.push('\n');
        user.push_str(&derive_node_context(netlist));
        blocks.push("node-context".to_string());
    }
    let system = if mode == DescriptionMode::Baseline {
        blocks.insert(0, "baseline".to_string());
        BASELINE_INSTRUCTION.to_string()
    } else {
        blocks.insert(0, "cot".to_string());
        format!("{COT_INSTRUCTION}\n{}", COT_STEPS.join("\n"))
    };
    let metadata = BTreeMap::from([
        ("kind".to_string(), "description".to_string()),
        ("mode".to_string(), mode.to_string()),
        ("shots".to_string(), shots.to_string()),
        ("blocks".to_string(), blocks.join(",")),
    ]);
    Ok(PromptBundle { system, user, metadata })
}

pub fn language_directive(language: &str) -> String {
    GUIDELINES[5].1.replace("{language}", language)
}

/// System prompt for the tutoring dialogue: role, nine numbered guidelines
/// and the exemplar dialogues.
pub fn assemble_tutor_system_prompt(language: &str) -> String {
    let mut out = String::from(TUTOR_ROLE);
    out.push('\n');
    for (i, (title, text)) in GUIDELINES.iter().enumerate() {
        out.push_str(&format!("{}. {}: {}\n", i + 1, title, text.replace("{language}", language)));
    }
    out.push_str("\nExamples of desired dialogues:\n\n");
    out.push_str(EXEMPLAR_DIALOGUES);
    out
}
