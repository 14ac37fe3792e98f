//! Interactive LMC sessions behind the workbench service.
//!
//! Every command on a session runs under that session's lock, and every
//! push message is handed to the sink while the lock is held, so each
//! session's stream is ordered. Long runs take the lock once per
//! instruction; between instructions the session reports `running`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asm::{assemble_text, ObjectImage, MAX_CELL};
use crate::events::EventOccurrence;
use crate::exec::ActionRecord;
use crate::lmc::{InputMode, LmcState, LmcTm, RunOutcome, TICKS_PER_INSTRUCTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    Idle,
    Running,
    AwaitingInput,
    Halted,
    Faulted,
}

impl fmt::Display for SessionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionMode::Idle => "idle",
            SessionMode::Running => "running",
            SessionMode::AwaitingInput => "awaiting input",
            SessionMode::Halted => "halted",
            SessionMode::Faulted => "faulted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("unknown session")]
    UnknownSession,
    #[error("session cap of {cap} reached; retry in {retry_after_secs}s")]
    CapReached { cap: usize, retry_after_secs: u64 },
    #[error("session {0}")]
    BadMode(SessionMode),
    #[error("input value {0} out of range 0..=999")]
    InputOutOfRange(i64),
    #[error("assembly failed: {}", .0.first().map_or("", |d| d.message.as_str()))]
    Assembly(Vec<Diagnostic>),
    #[error("bad image: {0}")]
    Image(String),
    #[error("load needs exactly one of `source` and `image`")]
    BadLoadRequest,
}

/// Snapshot fields that changed, plus the trace records behind the change.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDelta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pc: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halted: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub awaiting_input: Option<bool>,
    /// Changed mailboxes by address.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub mailboxes: BTreeMap<u8, u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<Vec<u16>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<Vec<u16>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<ActionRecord>,
}

impl StateDelta {
    pub fn between(old: &LmcState, new: &LmcState) -> Self {
        fn diff<T: PartialEq + Clone>(a: &T, b: &T) -> Option<T> {
            (a != b).then(|| b.clone())
        }
        let mailboxes = (0..100u8)
            .filter(|&a| old.mailboxes.get(a) != new.mailboxes.get(a))
            .map(|a| (a, new.mailboxes.get(a)))
            .collect();
        let old_in: Vec<u16> = old.input.iter().copied().collect();
        let new_in: Vec<u16> = new.input.iter().copied().collect();
        StateDelta {
            pc: diff(&old.pc, &new.pc),
            value: diff(&old.value, &new.value),
            flag: diff(&old.flag, &new.flag),
            halted: diff(&old.halted, &new.halted),
            awaiting_input: diff(&old.awaiting_input, &new.awaiting_input),
            mailboxes,
            input: diff(&old_in, &new_in),
            output: diff(&old.output, &new.output),
            records: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        *self == StateDelta::default()
    }

    pub fn apply(&self, s: &mut LmcState) {
        if let Some(v) = self.pc {
            s.pc = v;
        }
        if let Some(v) = self.value {
            s.value = v;
        }
        if let Some(v) = self.flag {
            s.flag = v;
        }
        if let Some(v) = self.halted {
            s.halted = v;
        }
        if let Some(v) = self.awaiting_input {
            s.awaiting_input = v;
        }
        for (&a, &v) in &self.mailboxes {
            s.mailboxes.set(a, v);
        }
        if let Some(v) = &self.input {
            s.input = v.iter().copied().collect();
        }
        if let Some(v) = &self.output {
            s.output = v.clone();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModeChange {
    pub mode: SessionMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// One message on a session's push channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum PushMessage {
    Delta(StateDelta),
    Occurrence(EventOccurrence),
    Mode(ModeChange),
}

/// Receives `(session id, message)` in per-session order.
pub type PushSink = Arc<dyn Fn(&str, &PushMessage) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionConfig {
    pub cap: usize,
    pub idle_timeout: Duration,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig { cap: 64, idle_timeout: Duration::from_secs(30 * 60) }
    }
}

/// Body of a load command: assembly text or a ready image.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct LoadRequest {
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub image: Option<Vec<u16>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadSummary {
    pub cells: usize,
    pub symbols: BTreeMap<String, u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub mode: SessionMode,
    pub delta: StateDelta,
    pub occurrences: Vec<EventOccurrence>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub mode: SessionMode,
    pub steps: u64,
    pub steps_exhausted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionView {
    pub id: String,
    pub mode: SessionMode,
    pub state: LmcState,
    pub occurrences: Vec<EventOccurrence>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

struct Session {
    tm: LmcTm,
    mode: SessionMode,
    /// The snapshot subscribers have been told about.
    published: LmcState,
    fault: Option<String>,
    touched: Instant,
    /// Occurrences before this index belong to finished instructions.
    boundary_occ: usize,
}

impl Session {
    fn fresh(state: LmcState) -> Self {
        Session {
            tm: LmcTm::new(state.clone(), InputMode::Interactive),
            mode: SessionMode::Idle,
            published: state,
            fault: None,
            touched: Instant::now(),
            boundary_occ: 0,
        }
    }

    fn publish(&mut self, id: &str, sink: &PushSink, records: Vec<ActionRecord>) -> StateDelta {
        let now = self.tm.state();
        let mut delta = StateDelta::between(&self.published, &now);
        delta.records = records;
        self.published = now;
        if !delta.is_empty() {
            sink(id, &PushMessage::Delta(delta.clone()));
        }
        delta
    }

    fn set_mode(&mut self, id: &str, sink: &PushSink, mode: SessionMode, reason: Option<String>) {
        if mode != self.mode {
            self.mode = mode;
            sink(id, &PushMessage::Mode(ModeChange { mode, reason }));
        }
    }

    fn check_steppable(&self) -> Result<(), SessionError> {
        match self.mode {
            SessionMode::Idle => Ok(()),
            SessionMode::AwaitingInput if !self.tm.state().input.is_empty() => Ok(()),
            m => Err(SessionError::BadMode(m)),
        }
    }

    /// Executes one instruction; `in_run` keeps the mode at `running`
    /// while the program can go on.
    fn step_one(&mut self, id: &str, sink: &PushSink, in_run: bool) -> StepReport {
        let progress = self.tm.run(1, TICKS_PER_INSTRUCTION * 4);
        let delta = self.publish(id, sink, progress.records);
        for o in &progress.occurrences {
            sink(id, &PushMessage::Occurrence(o.clone()));
        }
        let (mode, reason) = match &progress.outcome {
            RunOutcome::Halted => (SessionMode::Halted, None),
            RunOutcome::AwaitingInput => (SessionMode::AwaitingInput, None),
            RunOutcome::StepLimit if in_run => (SessionMode::Running, None),
            RunOutcome::StepLimit => (SessionMode::Idle, None),
            RunOutcome::TickLimit => (SessionMode::Faulted, Some("instruction did not complete".to_string())),
            RunOutcome::Faulted { error } => (SessionMode::Faulted, Some(error.to_string())),
        };
        if mode == SessionMode::Faulted {
            self.fault = reason.clone();
        }
        self.set_mode(id, sink, mode, reason);
        // a resumed INP reports the whole instruction, not just its tail
        let occurrences = self.tm.occurrences()[self.boundary_occ..].to_vec();
        if mode != SessionMode::AwaitingInput {
            self.boundary_occ = self.tm.occurrences().len();
        }
        StepReport { mode, delta, occurrences, fault: self.fault.clone() }
    }
}

/// All live sessions.
pub struct SessionManager {
    config: SessionConfig,
    sink: PushSink,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl SessionManager {
    pub fn new(config: SessionConfig, sink: PushSink) -> Self {
        SessionManager { config, sink, sessions: Mutex::new(HashMap::new()) }
    }

    /// A manager whose push messages go nowhere.
    pub fn silent(config: SessionConfig) -> Self {
        Self::new(config, Arc::new(|_, _| {}))
    }

    pub fn config(&self) -> SessionConfig {
        self.config
    }

    fn purge(&self, map: &mut HashMap<String, Arc<Mutex<Session>>>) {
        let timeout = self.config.idle_timeout;
        map.retain(|_, s| match s.try_lock() {
            Ok(s) => s.touched.elapsed() <= timeout,
            Err(_) => true,
        });
    }

    pub fn len(&self) -> usize {
        let mut map = lock(&self.sessions);
        self.purge(&mut map);
        map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn create(&self) -> Result<String, SessionError> {
        let mut map = lock(&self.sessions);
        self.purge(&mut map);
        if map.len() >= self.config.cap {
            let oldest = map.values().filter_map(|s| s.try_lock().ok().map(|s| s.touched)).min();
            let left =
                oldest.map_or(self.config.idle_timeout, |t| self.config.idle_timeout.saturating_sub(t.elapsed()));
            return Err(SessionError::CapReached { cap: self.config.cap, retry_after_secs: left.as_secs().max(1) });
        }
        let id = loop {
            let id = format!("{:032x}", rand::random::<u128>());
            if !map.contains_key(&id) {
                break id;
            }
        };
        map.insert(id.clone(), Arc::new(Mutex::new(Session::fresh(LmcState::default()))));
        Ok(id)
    }

    fn with<R>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<R, SessionError>) -> Result<R, SessionError> {
        let handle = {
            let mut map = lock(&self.sessions);
            let s = map.get(id).cloned().ok_or(SessionError::UnknownSession)?;
            let timeout = self.config.idle_timeout;
            let expired = s.try_lock().map(|g| g.touched.elapsed() > timeout).unwrap_or(false);
            if expired {
                map.remove(id);
                return Err(SessionError::UnknownSession);
            }
            s
        };
        let mut s = lock(&handle);
        s.touched = Instant::now();
        f(&mut s)
    }

    pub fn load(&self, id: &str, req: &LoadRequest) -> Result<LoadSummary, SessionError> {
        let image = match (&req.source, &req.image) {
            (Some(src), None) => assemble_text(src)
                .map_err(|e| SessionError::Assembly(vec![Diagnostic { line: e.line(), message: e.to_string() }]))?,
            (None, Some(cells)) => {
                ObjectImage::from_cells(cells.clone()).map_err(|e| SessionError::Image(e.to_string()))?
            }
            _ => return Err(SessionError::BadLoadRequest),
        };
        let sink = self.sink.clone();
        self.with(id, |s| {
            if s.mode == SessionMode::Running {
                return Err(SessionError::BadMode(SessionMode::Running));
            }
            let fresh = Session::fresh(LmcState::load(&image));
            s.tm = fresh.tm;
            s.fault = None;
            s.boundary_occ = 0;
            s.publish(id, &sink, Vec::new());
            s.set_mode(id, &sink, SessionMode::Idle, Some("program loaded".into()));
            Ok(LoadSummary { cells: image.len(), symbols: image.symbols.clone() })
        })
    }

    pub fn step(&self, id: &str) -> Result<StepReport, SessionError> {
        let sink = self.sink.clone();
        self.with(id, |s| {
            s.check_steppable()?;
            Ok(s.step_one(id, &sink, false))
        })
    }

    /// Steps until the program halts, faults, waits for input, or
    /// `max_steps` instructions have run.
    pub fn run(&self, id: &str, max_steps: u64) -> Result<RunReport, SessionError> {
        let sink = self.sink.clone();
        self.with(id, |s| {
            s.check_steppable()?;
            s.set_mode(id, &sink, SessionMode::Running, None);
            Ok(())
        })?;
        let mut steps = 0;
        loop {
            let done = self.with(id, |s| {
                if steps == max_steps {
                    s.set_mode(id, &sink, SessionMode::Idle, Some("steps exhausted".into()));
                    return Ok(Some(RunReport { mode: s.mode, steps, steps_exhausted: true, fault: None }));
                }
                let r = s.step_one(id, &sink, true);
                steps += 1;
                Ok((r.mode != SessionMode::Running).then_some(RunReport {
                    mode: r.mode,
                    steps,
                    steps_exhausted: false,
                    fault: r.fault,
                }))
            })?;
            if let Some(r) = done {
                return Ok(r);
            }
        }
    }

    pub fn provide_input(&self, id: &str, value: i64) -> Result<(), SessionError> {
        if !(0..=MAX_CELL as i64).contains(&value) {
            return Err(SessionError::InputOutOfRange(value));
        }
        let sink = self.sink.clone();
        self.with(id, |s| {
            s.tm.provide_input(value as u16);
            s.publish(id, &sink, Vec::new());
            Ok(())
        })
    }

    pub fn state(&self, id: &str) -> Result<SessionView, SessionError> {
        self.with(id, |s| {
            Ok(SessionView {
                id: id.to_string(),
                mode: s.mode,
                state: s.tm.state(),
                occurrences: s.tm.occurrences().to_vec(),
                fault: s.fault.clone(),
            })
        })
    }
}
