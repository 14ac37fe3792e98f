use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use super::{StageKind, StaticModel};

/// One well-formedness problem. A model is valid iff `validate` returns none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    DuplicateId { what: &'static str, id: String },
    UnknownMachine { referrer: String, machine: String },
    UnknownStage { arc: String, stage: String },
    UnknownStorage { stage: String, storage: String },
    ForeignStorage { stage: String, storage: String },
    OwnershipMismatch { machine: String, item: String },
    NestingCycle { machine: String },
    SelfLoop { arc: String },
    IllegalTransition { arc: String, from: StageKind, to: StageKind, cross_machine: bool },
    TriggerTarget { arc: String, kind: StageKind },
    AmbiguousFanOut { stage: String, kind: StageKind, arcs: usize },
    EmptyThingKind { storage: String },
    NotSimplified { stage: String, kind: StageKind },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateId { what, id } => write!(f, "duplicate {what} id `{id}`"),
            UnknownMachine { referrer, machine } => {
                write!(f, "`{referrer}` references unknown machine `{machine}`")
            }
            UnknownStage { arc, stage } => write!(f, "arc `{arc}` references unknown stage `{stage}`"),
            UnknownStorage { stage, storage } => {
                write!(f, "stage `{stage}` references unknown storage `{storage}`")
            }
            ForeignStorage { stage, storage } => {
                write!(f, "stage `{stage}` uses storage `{storage}` of another machine")
            }
            OwnershipMismatch { machine, item } => {
                write!(f, "machine `{machine}` and `{item}` disagree about ownership")
            }
            NestingCycle { machine } => write!(f, "machine `{machine}` is part of a nesting cycle"),
            SelfLoop { arc } => write!(f, "arc `{arc}` starts and ends at the same stage"),
            IllegalTransition { arc, from, to, cross_machine } => write!(
                f,
                "arc `{arc}`: {from} -> {to} is not in the legal-transition table ({})",
                if *cross_machine { "across machines" } else { "within a machine" }
            ),
            TriggerTarget { arc, kind } => {
                write!(f, "trigger `{arc}` targets a {kind} stage; only create/process/release may be triggered")
            }
            AmbiguousFanOut { stage, kind, arcs } => {
                write!(f, "{kind} stage `{stage}` has {arcs} outgoing flows")
            }
            EmptyThingKind { storage } => write!(f, "storage `{storage}` holds a thing with an empty kind"),
            NotSimplified { stage, kind } => {
                write!(f, "simplified model still contains {kind} stage `{stage}`")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid model: {}", summarize(.0))]
pub struct InvalidModel(pub Vec<Violation>);

fn summarize(v: &[Violation]) -> String {
    match v.first() {
        Some(first) if v.len() > 1 => format!("{first} (and {} more)", v.len() - 1),
        Some(first) => first.to_string(),
        None => "no violations".into(),
    }
}

/// Checks every structural rule and returns all violations found.
pub fn validate(model: &StaticModel) -> Vec<Violation> {
    let mut out = Vec::new();

    fn dups<'a>(what: &'static str, ids: impl Iterator<Item = &'a String>, out: &mut Vec<Violation>) {
        let mut seen = HashSet::new();
        for id in ids {
            if !seen.insert(id) {
                out.push(Violation::DuplicateId { what, id: id.clone() });
            }
        }
    }
    dups("machine", model.machines.iter().map(|m| &m.id), &mut out);
    dups("stage", model.stages.iter().map(|s| &s.id), &mut out);
    dups("storage", model.storages.iter().map(|s| &s.id), &mut out);
    dups("flow", model.flows.iter().map(|a| &a.id), &mut out);
    dups("trigger", model.triggers.iter().map(|a| &a.id), &mut out);

    let machines: HashMap<&str, _> = model.machines.iter().map(|m| (m.id.as_str(), m)).collect();
    let stages = model.stage_index();
    let storages: HashMap<&str, _> = model.storages.iter().map(|s| (s.id.as_str(), s)).collect();

    for m in &model.machines {
        if let Some(p) = &m.parent {
            if !machines.contains_key(p.as_str()) {
                out.push(Violation::UnknownMachine { referrer: m.id.clone(), machine: p.clone() });
            }
        }
        for s in &m.stages {
            if stages.get(s.as_str()).is_none_or(|st| st.owner != m.id) {
                out.push(Violation::OwnershipMismatch { machine: m.id.clone(), item: s.clone() });
            }
        }
        for s in &m.storages {
            if storages.get(s.as_str()).is_none_or(|st| st.owner != m.id) {
                out.push(Violation::OwnershipMismatch { machine: m.id.clone(), item: s.clone() });
            }
        }
    }

    // nesting must be a forest
    for m in &model.machines {
        let mut seen = HashSet::new();
        let mut cur = Some(m);
        while let Some(c) = cur {
            if !seen.insert(c.id.as_str()) {
                out.push(Violation::NestingCycle { machine: m.id.clone() });
                break;
            }
            cur = c.parent.as_deref().and_then(|p| machines.get(p).copied());
        }
    }

    for s in &model.stages {
        match machines.get(s.owner.as_str()) {
            None => out.push(Violation::UnknownMachine { referrer: s.id.clone(), machine: s.owner.clone() }),
            Some(m) => {
                if !m.stages.contains(&s.id) {
                    out.push(Violation::OwnershipMismatch { machine: m.id.clone(), item: s.id.clone() });
                }
            }
        }
        if let Some(st) = &s.storage {
            match storages.get(st.as_str()) {
                None => out.push(Violation::UnknownStorage { stage: s.id.clone(), storage: st.clone() }),
                Some(store) if store.owner != s.owner => {
                    out.push(Violation::ForeignStorage { stage: s.id.clone(), storage: st.clone() })
                }
                _ => {}
            }
        }
        if model.simplified && !s.kind.is_active() {
            out.push(Violation::NotSimplified { stage: s.id.clone(), kind: s.kind });
        }
    }

    for st in &model.storages {
        if !machines.contains_key(st.owner.as_str()) {
            out.push(Violation::UnknownMachine { referrer: st.id.clone(), machine: st.owner.clone() });
        } else if !machines[st.owner.as_str()].storages.contains(&st.id) {
            out.push(Violation::OwnershipMismatch { machine: st.owner.clone(), item: st.id.clone() });
        }
        if st.content.iter().any(|t| t.kind.is_empty()) {
            out.push(Violation::EmptyThingKind { storage: st.id.clone() });
        }
    }

    let mut fan_out: HashMap<&str, usize> = HashMap::new();
    for a in &model.flows {
        let (from, to) = match (stages.get(a.from.as_str()), stages.get(a.to.as_str())) {
            (Some(f), Some(t)) => (f, t),
            (f, t) => {
                for (st, id) in [(f, &a.from), (t, &a.to)] {
                    if st.is_none() {
                        out.push(Violation::UnknownStage { arc: a.id.clone(), stage: id.clone() });
                    }
                }
                continue;
            }
        };
        if a.from == a.to {
            out.push(Violation::SelfLoop { arc: a.id.clone() });
            continue;
        }
        *fan_out.entry(from.id.as_str()).or_default() += 1;
        let same = from.owner == to.owner;
        let legal = if model.simplified {
            from.kind.is_active() && to.kind.is_active()
        } else {
            from.kind.may_flow_to(to.kind, same)
        };
        if !legal {
            out.push(Violation::IllegalTransition {
                arc: a.id.clone(),
                from: from.kind,
                to: to.kind,
                cross_machine: !same,
            });
        }
    }

    for s in &model.stages {
        if matches!(s.kind, StageKind::Release | StageKind::Transfer) {
            let n = fan_out.get(s.id.as_str()).copied().unwrap_or(0);
            if n > 1 {
                out.push(Violation::AmbiguousFanOut { stage: s.id.clone(), kind: s.kind, arcs: n });
            }
        }
    }

    for a in &model.triggers {
        let mut ok = true;
        for id in [&a.from, &a.to] {
            if !stages.contains_key(id.as_str()) {
                out.push(Violation::UnknownStage { arc: a.id.clone(), stage: id.clone() });
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        let kind = stages[a.to.as_str()].kind;
        if !kind.may_be_triggered() {
            out.push(Violation::TriggerTarget { arc: a.id.clone(), kind });
        }
    }

    out
}
