//! The Thinging Machine metamodel: machines nest, own stages and storages,
//! and stages are connected by flow arcs (things move) and trigger arcs
//! (activity starts elsewhere).

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

mod export;
mod simplify;
mod validate;

pub use export::{export, import, ExportFormat, ImportError};
pub use simplify::simplify;
pub use validate::{validate, InvalidModel, Violation};

pub type StageId = String;
pub type MachineId = String;
pub type StorageId = String;

/// The five actions. Nothing else is representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Create,
    Process,
    Release,
    Transfer,
    Receive,
}

impl StageKind {
    pub const ALL: [StageKind; 5] =
        [StageKind::Create, StageKind::Process, StageKind::Release, StageKind::Transfer, StageKind::Receive];

    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::Create => "create",
            StageKind::Process => "process",
            StageKind::Release => "release",
            StageKind::Transfer => "transfer",
            StageKind::Receive => "receive",
        }
    }

    /// Create and Process survive simplification; the other three only move things.
    pub fn is_active(self) -> bool {
        matches!(self, StageKind::Create | StageKind::Process)
    }

    /// Flow legality inside one machine (`same_machine`) or across machines.
    pub fn may_flow_to(self, to: StageKind, same_machine: bool) -> bool {
        use StageKind::*;
        if !same_machine {
            return matches!((self, to), (Transfer, Transfer));
        }
        matches!(
            (self, to),
            (Transfer, Receive)
                | (Receive, Process)
                | (Receive, Release)
                | (Create, Process)
                | (Create, Release)
                | (Process, Release)
                | (Process, Process)
                | (Release, Transfer)
        )
    }

    pub fn may_be_triggered(self) -> bool {
        matches!(self, StageKind::Create | StageKind::Process | StageKind::Release)
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Int(i64),
    Text(String),
}

impl Payload {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Payload::Int(v) => Some(*v),
            Payload::Text(_) => None,
        }
    }
}

impl From<i64> for Payload {
    fn from(v: i64) -> Self {
        Payload::Int(v)
    }
}

impl From<&str> for Payload {
    fn from(v: &str) -> Self {
        Payload::Text(v.to_string())
    }
}

/// Whatever is created, processed, released, transferred or received.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thing {
    pub id: u64,
    pub kind: String,
    pub payload: Payload,
}

impl Thing {
    pub fn new(id: u64, kind: impl Into<String>, payload: impl Into<Payload>) -> Self {
        Thing { id, kind: kind.into(), payload: payload.into() }
    }

    pub fn int(&self) -> Option<i64> {
        self.payload.as_int()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub id: StageId,
    pub kind: StageKind,
    pub owner: MachineId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage: Option<StorageId>,
    #[serde(default, rename = "paper_anchor", skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Machine {
    pub id: MachineId,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<MachineId>,
    #[serde(default)]
    pub stages: Vec<StageId>,
    #[serde(default)]
    pub storages: Vec<StorageId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Storage {
    pub id: StorageId,
    pub owner: MachineId,
    #[serde(default)]
    pub content: Vec<Thing>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowArc {
    pub id: String,
    pub from: StageId,
    pub to: StageId,
    #[serde(default, rename = "paper_anchor", skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerArc {
    pub id: String,
    pub from: StageId,
    pub to: StageId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
    #[serde(default, rename = "paper_anchor", skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
}

/// A complete TM diagram. Collections keep declaration order, which the
/// executor relies on for deterministic trigger ordering.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StaticModel {
    pub name: String,
    #[serde(default)]
    pub machines: Vec<Machine>,
    #[serde(default)]
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub storages: Vec<Storage>,
    #[serde(default)]
    pub flows: Vec<FlowArc>,
    #[serde(default)]
    pub triggers: Vec<TriggerArc>,
    /// Set on models produced by [`simplify`]; relaxes the transition table.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub simplified: bool,
}

impl StaticModel {
    pub fn new(name: impl Into<String>) -> Self {
        StaticModel { name: name.into(), ..Default::default() }
    }

    pub fn stage(&self, id: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.id == id)
    }

    pub fn machine(&self, id: &str) -> Option<&Machine> {
        self.machines.iter().find(|m| m.id == id)
    }

    pub fn flow(&self, id: &str) -> Option<&FlowArc> {
        self.flows.iter().find(|f| f.id == id)
    }

    pub fn stage_index(&self) -> HashMap<&str, &Stage> {
        self.stages.iter().map(|s| (s.id.as_str(), s)).collect()
    }

    pub fn has_stage_or_flow(&self, id: &str) -> bool {
        self.stage(id).is_some() || self.flow(id).is_some()
    }

    pub fn count_kind(&self, kind: StageKind) -> usize {
        self.stages.iter().filter(|s| s.kind == kind).count()
    }
}

/// Incremental construction helper used by the built-in fixtures.
#[derive(Debug, Default)]
pub struct ModelBuilder {
    model: StaticModel,
}

impl ModelBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        ModelBuilder { model: StaticModel::new(name) }
    }

    pub fn machine(&mut self, id: &str, name: &str, parent: Option<&str>) -> &mut Self {
        self.model.machines.push(Machine {
            id: id.into(),
            name: name.into(),
            parent: parent.map(Into::into),
            stages: Vec::new(),
            storages: Vec::new(),
        });
        self
    }

    pub fn storage(&mut self, id: &str, owner: &str) -> &mut Self {
        self.model.storages.push(Storage { id: id.into(), owner: owner.into(), content: Vec::new() });
        if let Some(m) = self.model.machines.iter_mut().find(|m| m.id == owner) {
            m.storages.push(id.into());
        }
        self
    }

    pub fn stage(
        &mut self,
        id: &str,
        kind: StageKind,
        owner: &str,
        storage: Option<&str>,
        anchor: Option<&str>,
    ) -> &mut Self {
        self.model.stages.push(Stage {
            id: id.into(),
            kind,
            owner: owner.into(),
            storage: storage.map(Into::into),
            anchor: anchor.map(Into::into),
        });
        if let Some(m) = self.model.machines.iter_mut().find(|m| m.id == owner) {
            m.stages.push(id.into());
        }
        self
    }

    pub fn flow(&mut self, from: &str, to: &str, anchor: Option<&str>) -> &mut Self {
        self.model.flows.push(FlowArc {
            id: format!("{from}->{to}"),
            from: from.into(),
            to: to.into(),
            anchor: anchor.map(Into::into),
        });
        self
    }

    /// Chains consecutive flow arcs through `path`.
    pub fn chain(&mut self, path: &[&str]) -> &mut Self {
        for w in path.windows(2) {
            self.flow(w[0], w[1], None);
        }
        self
    }

    pub fn trigger(&mut self, from: &str, to: &str, guard: Option<&str>, anchor: Option<&str>) -> &mut Self {
        let id = match guard {
            Some(g) => format!("{from}=>{to}[{g}]"),
            None => format!("{from}=>{to}"),
        };
        self.model.triggers.push(TriggerArc {
            id,
            from: from.into(),
            to: to.into(),
            guard: guard.map(Into::into),
            anchor: anchor.map(Into::into),
        });
        self
    }

    pub fn build(&mut self) -> StaticModel {
        std::mem::take(&mut self.model)
    }
}
