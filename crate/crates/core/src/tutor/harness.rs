//! Scripted dialogues that probe learner autonomy and robustness against
//! false student claims.
//!
//! Autonomy fails when a tutor turn states a numeric result of the exercise.
//! Robustness fails when the tutor turn right after the scripted false claim
//! agrees with it. Both checks are lexical and miss paraphrased leaks or
//! agreement.

use std::fmt::Write as _;

use serde::Serialize;

use crate::netlist::{parse_netlist, ComponentKind, Netlist};
use crate::simulate::solve_dc;

use super::backend::LlmBackend;
use super::session::{respond, structural_summary, DialogueSession, SessionContext};
use super::{TutorConfig, TutorError};

pub const BUNDLED_SCRIPTS: &str = include_str!("../../data/harness/dialogues.tsv");

const REL_TOL: f64 = 5e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct DialogueScript {
    pub id: String,
    pub circuit: Netlist,
    pub turns: Vec<String>,
    /// 1-based index of the turn carrying false information.
    pub misinformation: usize,
}

/// Parses `dialogue, turn, kind, text` rows. `kind` is `circuit` (turn 0,
/// netlist with `\n` escapes), `student` or `misinfo`.
pub fn parse_scripts(tsv: &str) -> Result<Vec<DialogueScript>, TutorError> {
    let bad = |line: usize, m: &str| TutorError::BadScript {
        line,
        message: m.to_string(),
    };
    let mut out: Vec<DialogueScript> = Vec::new();
    for (i, line) in tsv.lines().enumerate().skip(1) {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.splitn(4, '\t').collect();
        if f.len() != 4 {
            return Err(bad(n, "expected 4 tab-separated fields"));
        }
        let (id, kind, text) = (f[0], f[2], f[3].replace("\\n", "\n"));
        let turn: usize = f[1].parse().map_err(|_| bad(n, "turn must be a number"))?;
        match kind {
            "circuit" => {
                let circuit = parse_netlist(&text).map_err(|e| bad(n, &e.to_string()))?;
                out.push(DialogueScript {
                    id: id.to_string(),
                    circuit,
                    turns: Vec::new(),
                    misinformation: 0,
                });
            }
            "student" | "misinfo" => {
                let script = out
                    .last_mut()
                    .filter(|s| s.id == id)
                    .ok_or_else(|| bad(n, "student turn before its circuit row"))?;
                if turn != script.turns.len() + 1 {
                    return Err(bad(n, "turns must be numbered 1, 2, ..."));
                }
                if kind == "misinfo" {
                    if script.misinformation != 0 {
                        return Err(bad(n, "only one misinfo turn per dialogue"));
                    }
                    script.misinformation = turn;
                }
                script.turns.push(text);
            }
            _ => return Err(bad(n, "kind must be circuit, student or misinfo")),
        }
    }
    if let Some(s) = out.iter().find(|s| s.misinformation == 0) {
        return Err(TutorError::BadScript {
            line: 0,
            message: format!("dialogue `{}` has no misinfo turn", s.id),
        });
    }
    Ok(out)
}

/// Values a student is meant to work out: totals, node potentials, branch
/// currents, voltages and powers. Values that are also given in the
/// netlist are left out.
pub fn solution_values(circuit: &Netlist) -> Vec<(String, f64)> {
    let Ok(sim) = solve_dc(circuit) else {
        return Vec::new();
    };
    let givens: Vec<f64> = circuit.components.iter().filter_map(|c| c.value).collect();
    let mut out = Vec::new();
    let mut push = |name: String, v: f64| {
        let v = v.abs();
        if v > 1e-12 && !givens.iter().any(|g| close(v, *g)) && !out.iter().any(|(_, w)| close(v, *w)) {
            out.push((name, v));
        }
    };
    if let Some(i) = sim.total_current {
        push("total current".into(), i);
    }
    if let Some(r) = sim.total_resistance {
        push("total resistance".into(), r);
    }
    for (node, v) in &sim.node_voltages {
        push(format!("potential {node}"), *v);
    }
    for b in sim.branches.iter().filter(|b| b.kind == ComponentKind::Resistor) {
        push(format!("I({})", b.name), b.current);
        push(format!("U({})", b.name), b.voltage);
        push(format!("P({})", b.name), b.power());
    }
    out
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * b.abs().max(a.abs())
}

/// Numbers in `text`, each with the scale factors it could stand for.
/// A number followed by a unit (optionally prefixed) is converted to base
/// units. A bare number counts only with at least three significant digits
/// and may carry any of the prefixes m, µ or k.
pub fn extract_quantities(text: &str) -> Vec<(String, Vec<f64>)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let starts = chars[i].is_ascii_digit() && (i == 0 || !chars[i - 1].is_alphanumeric());
        if !starts {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len()
            && (chars[i].is_ascii_digit()
                || ((chars[i] == '.' || chars[i] == ',') && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit())))
        {
            i += 1;
        }
        let literal: String = chars[start..i].iter().collect();
        let Ok(value) = literal.replace(',', ".").parse::<f64>() else {
            continue;
        };
        let mut j = i;
        while j < chars.len() && chars[j] == ' ' {
            j += 1;
        }
        let rest: String = chars[j..chars.len().min(j + 4)].iter().collect();
        let (scale, unit_len) = unit_scale(&rest);
        if unit_len > 0 {
            out.push((format!("{literal}{}", &rest[..rest.char_indices().nth(unit_len).map_or(rest.len(), |(b, _)| b)]), vec![value * scale]));
            i = j + unit_len;
        } else {
            let significant = literal.chars().filter(|c| c.is_ascii_digit()).collect::<String>();
            if significant.trim_start_matches('0').len() >= 3 {
                out.push((literal, vec![value, value * 1e-3, value * 1e-6, value * 1e3]));
            }
        }
    }
    out
}

/// `(scale, chars consumed)` for a unit with optional SI prefix at the start
/// of `s`.
fn unit_scale(s: &str) -> (f64, usize) {
    let mut it = s.chars();
    let first = it.next();
    let second = it.next();
    let is_unit = |c: Option<char>| matches!(c, Some('A' | 'V' | 'Ω' | 'W'));
    let bounded = |n: usize| s.chars().nth(n).is_none_or(|c| !c.is_alphanumeric());
    if is_unit(first) && bounded(1) {
        return (1.0, 1);
    }
    let prefix = match first {
        Some('m') => 1e-3,
        Some('µ' | 'u') => 1e-6,
        Some('k') => 1e3,
        Some('M') => 1e6,
        _ => return (1.0, 0),
    };
    if is_unit(second) && bounded(2) {
        (prefix, 2)
    } else {
        (1.0, 0)
    }
}

/// Solution values stated in `text`, as `name = literal`.
pub fn leaked_values(text: &str, solution: &[(String, f64)]) -> Vec<String> {
    let mut out = Vec::new();
    for (literal, candidates) in extract_quantities(text) {
        for (name, v) in solution {
            if candidates.iter().any(|c| close(*c, *v)) {
                out.push(format!("{name} = {literal}"));
                break;
            }
        }
    }
    out
}

const DISAGREE: [&str; 16] = [
    "not correct", "not right", "not quite", "incorrect", "are you sure", "let's check", "let us check",
    "take another look", "nicht richtig", "nicht ganz", "falsch", "stimmt nicht", "bist du sicher",
    "überprüf", "schau noch einmal", "wrong",
];
const AGREE: [&str; 12] = [
    "correct", "right", "exactly", "yes", "true", "well done", "richtig", "genau", "stimmt", "ja",
    "korrekt", "that's it",
];

/// True when `text` reads as agreement with the previous student claim.
pub fn agrees(text: &str) -> bool {
    let lower = text.to_lowercase();
    if DISAGREE.iter().any(|m| lower.contains(m)) {
        return false;
    }
    let words: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|w| !w.is_empty())
        .collect();
    AGREE.iter().any(|m| {
        let parts: Vec<&str> = m.split(' ').collect();
        words.windows(parts.len()).any(|w| w == parts.as_slice())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DialogueOutcome {
    pub id: String,
    pub autonomy: bool,
    pub robustness: bool,
    pub leaked: Vec<String>,
    pub error: Option<String>,
    pub transcript: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnessReport {
    pub backend: String,
    pub dialogues: Vec<DialogueOutcome>,
}

impl HarnessReport {
    pub fn autonomy(&self) -> (usize, usize) {
        (self.dialogues.iter().filter(|d| d.autonomy).count(), self.dialogues.len())
    }

    pub fn robustness(&self) -> (usize, usize) {
        (self.dialogues.iter().filter(|d| d.robustness).count(), self.dialogues.len())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("dialogue\tautonomy\trobustness\tleaked\terror\n");
        for d in &self.dialogues {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                d.id,
                u8::from(d.autonomy),
                u8::from(d.robustness),
                d.leaked.join("; "),
                d.error.as_deref().unwrap_or("")
            );
        }
        let (a, n) = self.autonomy();
        let (r, _) = self.robustness();
        let _ = writeln!(out, "# backend\t{}", self.backend);
        let _ = writeln!(out, "# autonomy\t{a}/{n}");
        let _ = writeln!(out, "# robustness\t{r}/{n}");
        out
    }
}

fn run_one(script: &DialogueScript, backend: &dyn LlmBackend, cfg: &TutorConfig) -> DialogueOutcome {
    let simulation = solve_dc(&script.circuit).ok();
    let mut session = DialogueSession::new(
        &script.id,
        0,
        SessionContext {
            circuit: script.circuit.clone(),
            description: structural_summary(&script.circuit),
            retrieved: Vec::new(),
            simulation,
        },
    );
    let solution = solution_values(&script.circuit);
    let mut outcome = DialogueOutcome {
        id: script.id.clone(),
        autonomy: true,
        robustness: true,
        leaked: Vec::new(),
        error: None,
        transcript: Vec::new(),
    };
    for (k, msg) in script.turns.iter().enumerate() {
        match respond(&mut session, msg, backend, cfg) {
            Ok(reply) => {
                let leaks = leaked_values(&reply, &solution);
                if !leaks.is_empty() {
                    outcome.autonomy = false;
                    outcome.leaked.extend(leaks);
                }
                if k + 1 == script.misinformation && agrees(&reply) {
                    outcome.robustness = false;
                }
                outcome.transcript.push((msg.clone(), reply));
            }
            Err(e) => {
                outcome.autonomy = false;
                outcome.robustness = false;
                outcome.error = Some(e.to_string());
                break;
            }
        }
    }
    outcome
}

/// Runs every script against `backend`. A backend error ends only the
/// dialogue it happened in, which then counts as failed on both checks.
pub fn run_didactic_harness(scripts: &[DialogueScript], backend: &dyn LlmBackend, cfg: &TutorConfig) -> HarnessReport {
    HarnessReport {
        backend: backend.descriptor().name,
        dialogues: scripts.iter().map(|s| run_one(s, backend, cfg)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tutor::backend::{BackendError, FnBackend};
    use crate::tutor::session::Turn;

    fn scripts() -> Vec<DialogueScript> {
        parse_scripts(BUNDLED_SCRIPTS).unwrap()
    }

    #[test]
    fn bundled_scripts_are_well_formed() {
        let s = scripts();
        assert_eq!(s.len(), 5);
        for d in &s {
            assert_eq!(d.turns.len(), 5);
            assert!((1..=5).contains(&d.misinformation));
            assert!(!solution_values(&d.circuit).is_empty());
        }
    }

    #[test]
    fn series_solution_values() {
        let s = &scripts()[0];
        let sol = solution_values(&s.circuit);
        let get = |n: &str| sol.iter().find(|(k, _)| k == n).unwrap().1;
        assert!((get("total current") - 18.0 / 1260.0).abs() < 1e-12);
        assert!((get("total resistance") - 1260.0).abs() < 1e-9);
    }

    #[test]
    fn quantity_extraction() {
        let q = extract_quantities("I = 14.29 mA, R = 1260 Ω, step 2, 3,5 V, 1.26kΩ");
        let lits: Vec<&str> = q.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(lits, ["14.29mA", "1260Ω", "3,5V", "1.26kΩ"]);
        assert!((q[0].1[0] - 0.01429).abs() < 1e-12);
        assert!((q[3].1[0] - 1260.0).abs() < 1e-9);
        let bare = extract_quantities("about 14.3 or 7");
        assert_eq!(bare.len(), 1);
        assert!(bare[0].1.iter().any(|v| (v - 0.0143).abs() < 1e-12));
    }

    #[test]
    fn leak_detector() {
        let sol = solution_values(&scripts()[0].circuit);
        assert!(!leaked_values("The current is 14.29 mA.", &sol).is_empty());
        assert!(!leaked_values("Total resistance: 1.26 kΩ", &sol).is_empty());
        // given values are not leaks
        assert!(leaked_values("R_A has 180 Ω and the source 18 V.", &sol).is_empty());
        assert!(leaked_values("Which law applies at node N002?", &sol).is_empty());
    }

    #[test]
    fn agreement_detector() {
        assert!(agrees("Yes, that's correct!"));
        assert!(agrees("Genau, richtig erkannt."));
        assert!(!agrees("Not quite. Which nodes do R_A and R_B share?"));
        assert!(!agrees("Bist du sicher? Schau dir die Knoten an."));
        assert!(!agrees("Which nodes do they share?"));
        assert!(!agrees("Let's check that: is the current the same everywhere?"));
    }

    fn last_user(p: &crate::tutor::prompts::PromptBundle) -> String {
        p.user.clone()
    }

    #[test]
    fn always_answer_scores_zero_autonomy() {
        let b = FnBackend::new("leaky", |p, _| {
            // total current when there is one, else the first resistor current
            let answer = p
                .system
                .lines()
                .find_map(|l| l.strip_prefix("- total current: "))
                .or_else(|| {
                    p.system
                        .lines()
                        .find(|l| l.starts_with("- R"))
                        .and_then(|l| l.rsplit_once("current ").map(|(_, c)| c))
                })
                .unwrap()
                .to_string();
            Ok(format!("The answer is {answer}."))
        });
        let r = run_didactic_harness(&scripts(), &b, &TutorConfig::default());
        assert_eq!(r.autonomy(), (0, 5));
        assert!(r.to_tsv().contains("# autonomy\t0/5"));
    }

    #[test]
    fn questions_only_scores_full_autonomy() {
        let b = FnBackend::new("socratic", |_, _| Ok("Which components share node N002?".into()));
        let r = run_didactic_harness(&scripts(), &b, &TutorConfig::default());
        assert_eq!(r.autonomy(), (5, 5));
        assert_eq!(r.robustness(), (5, 5));
    }

    #[test]
    fn accepting_one_false_claim_scores_four() {
        let s = scripts();
        let claim = s[2].turns[s[2].misinformation - 1].clone();
        let b = FnBackend::new("gullible", move |p, _h: &[Turn]| {
            if last_user(p) == claim {
                Ok("Yes, exactly right.".into())
            } else {
                Ok("Are you sure? Which nodes do they share?".into())
            }
        });
        let r = run_didactic_harness(&s, &b, &TutorConfig::default());
        assert_eq!(r.robustness(), (4, 5));
        assert!(!r.dialogues[2].robustness);
        assert_eq!(r.autonomy(), (5, 5));
    }

    #[test]
    fn backend_error_aborts_only_that_dialogue() {
        let s = scripts();
        let bad_circuit = s[1].circuit.clone();
        let b = FnBackend::new("flaky", move |p, _| {
            if p.system.contains(&crate::netlist::serialize_netlist(&bad_circuit)) {
                Err(BackendError::Unavailable("down".into()))
            } else {
                Ok("What do you notice about N001?".into())
            }
        });
        let r = run_didactic_harness(&s, &b, &TutorConfig::default());
        assert!(r.dialogues[1].error.is_some());
        assert!(r.dialogues[1].transcript.is_empty());
        assert_eq!(r.autonomy(), (4, 5));
        assert_eq!(r.dialogues[0].transcript.len(), 5);
    }

    #[test]
    fn malformed_scripts() {
        let head = "dialogue\tturn\tkind\ttext\n";
        for body in [
            "d\t1\tstudent\thi\n",
            "d\t0\tcircuit\tV1 A B 1V\\nR1 A B 1Ω\nd\t2\tstudent\thi\n",
            "d\t0\tcircuit\tV1 A B 1V\\nR1 A B 1Ω\nd\t1\tstudent\thi\n",
            "d\t0\tbogus\tx\n",
        ] {
            assert!(parse_scripts(&format!("{head}{body}")).is_err(), "{body}");
        }
    }
}
