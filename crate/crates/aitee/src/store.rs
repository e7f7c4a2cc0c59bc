//! Append-only JSON-lines session files, one per session.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use aitee_core::tutor::{DialogueSession, SessionEvent};

use crate::error::EngineError;

#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

fn storage(path: &Path, e: impl std::fmt::Display) -> EngineError {
    EngineError::Storage(format!("{}: {e}", path.display()))
}

impl SessionStore {
    pub fn open(dir: &Path) -> Result<Self, EngineError> {
        fs::create_dir_all(dir).map_err(|e| storage(dir, e))?;
        Ok(SessionStore { dir: dir.to_path_buf() })
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    pub fn append(&self, id: &str, events: &[SessionEvent]) -> Result<(), EngineError> {
        let path = self.path(id);
        let mut text = String::new();
        for ev in events {
            text.push_str(&serde_json::to_string(ev).map_err(|e| storage(&path, e))?);
            text.push('\n');
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| storage(&path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| storage(&path, e))?;
        f.sync_data().map_err(|e| storage(&path, e))
    }

    pub fn load(&self, id: &str) -> Result<DialogueSession, EngineError> {
        let path = self.path(id);
        let text = fs::read_to_string(&path).map_err(|e| storage(&path, e))?;
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str::<SessionEvent>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| storage(&path, e))?;
        Ok(DialogueSession::replay(&events)?)
    }

    /// Every stored session, sorted by id.
    pub fn load_all(&self) -> Result<Vec<DialogueSession>, EngineError> {
        let mut ids: Vec<String> = fs::read_dir(&self.dir)
            .map_err(|e| storage(&self.dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_suffix(".jsonl").map(str::to_string)
            })
            .collect();
        ids.sort();
        ids.iter().map(|id| self.load(id)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use aitee_core::parse_netlist;
    use aitee_core::tutor::{respond, SessionContext, TutorConfig};
    use aitee_core::tutor::backend::EchoHashBackend;

    #[test]
    fn append_and_replay() {
        let tmp = tempfile::tempdir().unwrap();
        let store = SessionStore::open(&tmp.path().join("s")).unwrap();
        let mut s = DialogueSession::new(
            "abc",
            7,
            SessionContext {
                circuit: parse_netlist("V1 A B 1V\nR1 A B 1Ω").unwrap(),
                description: "d".into(),
                retrieved: vec![],
                simulation: None,
            },
        );
        store.append("abc", &[s.created_event()]).unwrap();
        let b = EchoHashBackend::default();
        respond(&mut s, "hello", &b, &TutorConfig::default()).unwrap();
        store.append("abc", &s.events()[1..]).unwrap();
        assert_eq!(store.load("abc").unwrap(), s);
        assert_eq!(store.load_all().unwrap(), vec![s]);
        fs::write(tmp.path().join("s/abc.jsonl"), "{not json}\n").unwrap();
        assert!(store.load("abc").is_err());
    }
}
