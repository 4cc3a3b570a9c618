use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use touchstone_core::pipeline::RunRecord;
use touchstone_core::vision::DetectorKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    SceneChanged,
    RunStarted,
    StageStarted,
    StageFinished,
    StageFailed,
    ObjectResult,
    Explanation,
    RunFinished,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::SceneChanged => "scene-changed",
            EventKind::RunStarted => "run-started",
            EventKind::StageStarted => "stage-started",
            EventKind::StageFinished => "stage-finished",
            EventKind::StageFailed => "stage-failed",
            EventKind::ObjectResult => "object-result",
            EventKind::Explanation => "explanation",
            EventKind::RunFinished => "run-finished",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventEnvelope {
    pub session: String,
    pub seq: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub payload: serde_json::Value,
}

/// Everything about a session that survives a restart. Rebuilt by folding
/// the session's event log through [`SessionState::apply`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session: String,
    pub scene_seed: u64,
    /// `None` means the object count was drawn from the seed.
    pub scene_objects: Option<usize>,
    pub checkpoint: String,
    pub detector: DetectorKind,
    pub runs: Vec<String>,
    /// Idempotency key to the resource it created.
    pub keys: BTreeMap<String, String>,
    pub last_seq: u64,
}

impl SessionState {
    pub fn new(session: &str, checkpoint: &str, detector: DetectorKind) -> Self {
        SessionState {
            session: session.to_string(),
            scene_seed: 0,
            scene_objects: None,
            checkpoint: checkpoint.to_string(),
            detector,
            runs: Vec::new(),
            keys: BTreeMap::new(),
            last_seq: 0,
        }
    }

    pub fn apply(&mut self, ev: &EventEnvelope) {
        self.last_seq = ev.seq;
        let key = ev.payload.get("idempotency_key").and_then(|k| k.as_str());
        match ev.kind {
            EventKind::SceneChanged => {
                if let Some(seed) = ev.payload["seed"].as_u64() {
                    self.scene_seed = seed;
                }
                self.scene_objects = ev.payload["n"].as_u64().map(|n| n as usize);
                if let Some(k) = key {
                    self.keys.insert(k.to_string(), format!("scene:{}", self.last_seq));
                }
            }
            EventKind::RunStarted => {
                if let Some(id) = &ev.run_id {
                    self.runs.push(id.clone());
                    if let Some(k) = key {
                        self.keys.insert(k.to_string(), id.clone());
                    }
                }
            }
            _ => {}
        }
    }

    pub fn replay<'a>(mut self, events: impl IntoIterator<Item = &'a EventEnvelope>) -> Self {
        for ev in events {
            self.apply(ev);
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRun {
    pub run_id: String,
    pub session: String,
    pub record: RunRecord,
}

/// Plain-directory persistence: one append-only JSON-lines event log per
/// session and one JSON file per finished run.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn safe_name(s: &str) -> bool {
    !s.is_empty() && s.len() <= 64 && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Store {
    pub fn open(root: &Path) -> Result<Store> {
        fs::create_dir_all(root.join("sessions"))?;
        fs::create_dir_all(root.join("runs"))?;
        Ok(Store { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn valid_id(id: &str) -> bool {
        safe_name(id)
    }

    fn events_path(&self, session: &str) -> PathBuf {
        self.root.join("sessions").join(session).join("events.jsonl")
    }

    pub fn append_event(&self, ev: &EventEnvelope) -> Result<()> {
        let path = self.events_path(&ev.session);
        fs::create_dir_all(path.parent().expect("events file has a parent"))?;
        let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
        writeln!(f, "{}", serde_json::to_string(ev)?)?;
        f.flush()?;
        Ok(())
    }

    pub fn read_events(&self, session: &str) -> Result<Vec<EventEnvelope>> {
        let path = self.events_path(session);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
        }
        Ok(out)
    }

    pub fn has_session(&self, session: &str) -> bool {
        self.events_path(session).exists()
    }

    pub fn save_run(&self, run: &StoredRun) -> Result<()> {
        let path = self.root.join("runs").join(format!("{}.json", run.run_id));
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(run)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load_run(&self, run_id: &str) -> Result<Option<StoredRun>> {
        if !safe_name(run_id) {
            return Ok(None);
        }
        let path = self.root.join("runs").join(format!("{run_id}.json"));
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_slice(&fs::read(path)?)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(seq: u64, kind: EventKind, run_id: Option<&str>, payload: serde_json::Value) -> EventEnvelope {
        EventEnvelope { session: "s".into(), seq, kind, run_id: run_id.map(String::from), payload }
    }

    #[test]
    fn log_round_trip_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let evs = vec![
            ev(1, EventKind::SceneChanged, None, serde_json::json!({"seed": 9, "n": 4})),
            ev(2, EventKind::RunStarted, Some("s-1"), serde_json::json!({"text": "q", "idempotency_key": "k1"})),
            ev(3, EventKind::RunFinished, Some("s-1"), serde_json::json!({"success": true})),
        ];
        let mut live = SessionState::new("s", "ck", DetectorKind::GsamLike);
        for e in &evs {
            store.append_event(e).unwrap();
            live.apply(e);
        }
        let back = store.read_events("s").unwrap();
        assert_eq!(back, evs);
        let replayed = SessionState::new("s", "ck", DetectorKind::GsamLike).replay(&back);
        assert_eq!(replayed, live);
        assert_eq!((replayed.scene_seed, replayed.scene_objects, replayed.last_seq), (9, Some(4), 3));
        assert_eq!(replayed.runs, vec!["s-1".to_string()]);
        assert_eq!(replayed.keys.get("k1").map(String::as_str), Some("s-1"));
    }

    #[test]
    fn ids_are_restricted() {
        assert!(Store::valid_id("default"));
        assert!(!Store::valid_id("../etc"));
        assert!(!Store::valid_id(""));
    }
}
