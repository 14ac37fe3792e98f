//! Events are regions of a static model. An event occurs once every member of
//! its region has acted since the event's previous occurrence; the order of
//! occurrences is then checked against a behavioral graph.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::ActionRecord;
use crate::model::StaticModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventDef {
    pub id: String,
    pub name: String,
    /// Stage ids and/or flow-arc ids.
    pub region: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
    pub doc: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventOccurrence {
    pub event: String,
    pub start: u64,
    pub end: u64,
}

/// Allowed successions between events.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BehavioralModel {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub start: Vec<String>,
}

impl BehavioralModel {
    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges.iter().any(|(a, b)| a == from && b == to)
    }

    pub fn successors<'a>(&'a self, from: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges.iter().filter(move |(a, _)| a == from).map(|(_, b)| b.as_str())
    }

    /// Edge endpoints and start nodes that are not declared nodes.
    pub fn undeclared(&self) -> Vec<String> {
        let nodes: HashSet<&str> = self.nodes.iter().map(String::as_str).collect();
        let mut out = Vec::new();
        for id in self.edges.iter().flat_map(|(a, b)| [a, b]).chain(&self.start) {
            if !nodes.contains(id.as_str()) && !out.contains(id) {
                out.push(id.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventError {
    #[error("event `{event}` has an empty region")]
    EmptyRegion { event: String },
    #[error("event `{event}` refers to `{id}`, which is neither a stage nor a flow of the model")]
    UnknownRegionMember { event: String, id: String },
    #[error("duplicate event id `{0}`")]
    DuplicateEvent(String),
    #[error("event `{0}` is not a node of the behavioral model")]
    UnknownEvent(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Conformant,
    /// `index` is the first offending occurrence; `from` is its predecessor
    /// (absent when the sequence does not begin at a start node).
    Violation {
        index: usize,
        from: Option<String>,
        to: String,
    },
}

impl Verdict {
    pub fn is_conformant(&self) -> bool {
        matches!(self, Verdict::Conformant)
    }
}

/// Orders ids like `E2` before `E10`.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    fn split(s: &str) -> (&str, Option<u64>) {
        let at = s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        (&s[..at], s[at..].parse().ok())
    }
    split(a).cmp(&split(b)).then_with(|| a.cmp(b))
}

/// Checks that every region member resolves in `model`.
pub fn check_defs(model: &StaticModel, defs: &[EventDef]) -> Result<(), EventError> {
    let mut ids = HashSet::new();
    for d in defs {
        if !ids.insert(d.id.as_str()) {
            return Err(EventError::DuplicateEvent(d.id.clone()));
        }
        if d.region.is_empty() {
            return Err(EventError::EmptyRegion { event: d.id.clone() });
        }
        if let Some(id) = d.region.iter().find(|id| !model.has_stage_or_flow(id)) {
            return Err(EventError::UnknownRegionMember { event: d.id.clone(), id: id.clone() });
        }
    }
    Ok(())
}

/// Incremental occurrence detection; feeding a trace in pieces yields the
/// same occurrences as [`detect_events`] on the whole trace, provided no
/// two pieces share a tick.
#[derive(Debug, Clone)]
pub struct EventDetector {
    ids: Vec<String>,
    members: HashMap<String, Vec<(usize, usize)>>,
    seen: Vec<Vec<Option<u64>>>,
}

impl EventDetector {
    pub fn new(model: &StaticModel, defs: &[EventDef]) -> Result<Self, EventError> {
        check_defs(model, defs)?;
        let mut members: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
        let mut seen = Vec::with_capacity(defs.len());
        for (d, def) in defs.iter().enumerate() {
            let mut region: Vec<&String> = Vec::new();
            for id in &def.region {
                if !region.contains(&id) {
                    region.push(id);
                }
            }
            for (m, id) in region.iter().enumerate() {
                members.entry((*id).clone()).or_default().push((d, m));
            }
            seen.push(vec![None; region.len()]);
        }
        Ok(EventDetector { ids: defs.iter().map(|d| d.id.clone()).collect(), members, seen })
    }

    pub fn feed(&mut self, records: &[ActionRecord]) -> Vec<EventOccurrence> {
        let mut out = Vec::new();
        for rec in records {
            let mut touched: Vec<usize> = Vec::new();
            let keys = std::iter::once(&rec.stage).chain(rec.via.as_ref());
            for key in keys {
                for &(d, m) in self.members.get(key).into_iter().flatten() {
                    self.seen[d][m] = Some(rec.tick);
                    if !touched.contains(&d) {
                        touched.push(d);
                    }
                }
            }
            for d in touched {
                if self.seen[d].iter().all(Option::is_some) {
                    let ticks = self.seen[d].iter().flatten();
                    let start = *ticks.clone().min().expect("non-empty region");
                    let end = *ticks.max().expect("non-empty region");
                    out.push(EventOccurrence { event: self.ids[d].clone(), start, end });
                    self.seen[d].iter_mut().for_each(|s| *s = None);
                }
            }
        }
        sort_occurrences(&mut out);
        out
    }
}

fn sort_occurrences(occ: &mut [EventOccurrence]) {
    occ.sort_by(|a, b| a.end.cmp(&b.end).then_with(|| compare_ids(&a.event, &b.event)));
}

/// Detects every occurrence of `defs` in `trace`, ordered by end tick and
/// then by event id.
pub fn detect_events(
    model: &StaticModel,
    trace: &[ActionRecord],
    defs: &[EventDef],
) -> Result<Vec<EventOccurrence>, EventError> {
    let mut det = EventDetector::new(model, defs)?;
    Ok(det.feed(trace))
}

/// The first occurrence must be a start node and each adjacent pair an edge.
pub fn conforms(occurrences: &[EventOccurrence], behavior: &BehavioralModel) -> Result<Verdict, EventError> {
    let nodes: HashSet<&str> = behavior.nodes.iter().map(String::as_str).collect();
    if let Some(o) = occurrences.iter().find(|o| !nodes.contains(o.event.as_str())) {
        return Err(EventError::UnknownEvent(o.event.clone()));
    }
    let edges: HashSet<(&str, &str)> = behavior.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let Some(first) = occurrences.first() else {
        return Ok(Verdict::Conformant);
    };
    if !behavior.start.contains(&first.event) {
        return Ok(Verdict::Violation { index: 0, from: None, to: first.event.clone() });
    }
    for (i, w) in occurrences.windows(2).enumerate() {
        if !edges.contains(&(w[0].event.as_str(), w[1].event.as_str())) {
            return Ok(Verdict::Violation { index: i + 1, from: Some(w[0].event.clone()), to: w[1].event.clone() });
        }
    }
    Ok(Verdict::Conformant)
}

/// Ids of `defs` (in declaration order) that never occur in `occurrences`.
pub fn coverage(occurrences: &[EventOccurrence], defs: &[EventDef]) -> Vec<String> {
    let seen: HashSet<&str> = occurrences.iter().map(|o| o.event.as_str()).collect();
    defs.iter().filter(|d| !seen.contains(d.id.as_str())).map(|d| d.id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelBuilder, StageKind, StageKind::*, Thing};

    fn model() -> StaticModel {
        ModelBuilder::new("m")
            .machine("a", "A", None)
            .stage("c", Create, "a", None, None)
            .stage("p", Process, "a", None, None)
            .stage("q", Process, "a", None, None)
            .chain(&["c", "p", "q"])
            .build()
    }

    fn rec(tick: u64, stage: &str, kind: StageKind) -> ActionRecord {
        ActionRecord { tick, stage: stage.into(), kind, thing: Thing::new(1, "x", 0), via: None, anchor: None }
    }

    fn def(id: &str, region: &[&str]) -> EventDef {
        EventDef {
            id: id.into(),
            name: id.into(),
            region: region.iter().map(|s| s.to_string()).collect(),
            guard: None,
            doc: String::new(),
        }
    }

    #[test]
    fn natural_id_order() {
        assert_eq!(compare_ids("E2", "E10"), Ordering::Less);
        assert_eq!(compare_ids("E10", "E10"), Ordering::Equal);
        assert_eq!(compare_ids("A9", "E1"), Ordering::Less);
    }

    #[test]
    fn resettable_conjunction() {
        let defs = [def("E1", &["c", "p"]), def("E2", &["q"])];
        let trace = [
            rec(0, "c", Create),
            rec(1, "p", Process),
            rec(2, "q", Process),
            rec(3, "p", Process),
            rec(4, "c", Create),
            rec(5, "q", Process),
        ];
        let occ = detect_events(&model(), &trace, &defs).unwrap();
        let got: Vec<_> = occ.iter().map(|o| (o.event.as_str(), o.start, o.end)).collect();
        assert_eq!(got, [("E1", 0, 1), ("E2", 2, 2), ("E1", 3, 4), ("E2", 5, 5)]);
    }

    #[test]
    fn ties_break_by_natural_id_and_flows_match() {
        let mut m = model();
        m.flows[0].id = "c-p".into();
        let defs = [def("E10", &["p"]), def("E9", &["c-p"])];
        let mut r = rec(1, "p", Process);
        r.via = Some("c-p".into());
        let occ = detect_events(&m, &[r], &defs).unwrap();
        let ids: Vec<_> = occ.iter().map(|o| o.event.as_str()).collect();
        assert_eq!(ids, ["E9", "E10"]);
    }

    #[test]
    fn empty_trace_and_bad_defs() {
        assert!(detect_events(&model(), &[], &[def("E1", &["c"])]).unwrap().is_empty());
        assert_eq!(
            detect_events(&model(), &[], &[def("E1", &["nowhere"])]),
            Err(EventError::UnknownRegionMember { event: "E1".into(), id: "nowhere".into() })
        );
        assert!(matches!(detect_events(&model(), &[], &[def("E1", &[])]), Err(EventError::EmptyRegion { .. })));
    }

    fn occ(ids: &[&str]) -> Vec<EventOccurrence> {
        ids.iter()
            .enumerate()
            .map(|(i, e)| EventOccurrence { event: e.to_string(), start: i as u64, end: i as u64 })
            .collect()
    }

    fn chain() -> BehavioralModel {
        BehavioralModel {
            nodes: vec!["E1".into(), "E2".into(), "E3".into()],
            edges: vec![("E1".into(), "E2".into()), ("E2".into(), "E3".into())],
            start: vec!["E1".into()],
        }
    }

    #[test]
    fn conformance_verdicts() {
        let b = chain();
        assert!(b.undeclared().is_empty());
        assert_eq!(conforms(&occ(&["E1", "E2", "E3"]), &b).unwrap(), Verdict::Conformant);
        assert_eq!(conforms(&occ(&["E1"]), &b).unwrap(), Verdict::Conformant);
        assert_eq!(conforms(&[], &b).unwrap(), Verdict::Conformant);
        assert_eq!(
            conforms(&occ(&["E1", "E3"]), &b).unwrap(),
            Verdict::Violation { index: 1, from: Some("E1".into()), to: "E3".into() }
        );
        assert_eq!(conforms(&occ(&["E2"]), &b).unwrap(), Verdict::Violation { index: 0, from: None, to: "E2".into() });
        assert_eq!(conforms(&occ(&["E7"]), &b), Err(EventError::UnknownEvent("E7".into())));
    }

    #[test]
    fn coverage_lists_missing_in_order() {
        let defs = [def("E1", &["c"]), def("E2", &["p"]), def("E3", &["q"])];
        assert_eq!(coverage(&[], &defs), ["E1", "E2", "E3"]);
        assert_eq!(coverage(&occ(&["E2"]), &defs), ["E1", "E3"]);
    }

    #[test]
    fn json_shapes() {
        let b = chain();
        let v: serde_json::Value = serde_json::to_value(&b).unwrap();
        assert_eq!(v["edges"][0], serde_json::json!(["E1", "E2"]));
        let d = def("E1", &["c"]);
        let v = serde_json::to_value(&d).unwrap();
        assert!(v.get("guard").is_none());
        assert_eq!(v["region"], serde_json::json!(["c"]));
    }
}
