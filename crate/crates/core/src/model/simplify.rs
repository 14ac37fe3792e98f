use std::collections::{HashMap, HashSet};

use super::{validate, FlowArc, InvalidModel, StageKind, StaticModel, TriggerArc};

/// Erases Release/Transfer/Receive stages, replacing every chain
/// `s -> (release|transfer|receive)* -> t` between create/process stages by a
/// direct arc `s -> t`. Triggers that touched an erased stage are re-anchored
/// on the nearest create/process stage along the flow.
pub fn simplify(model: &StaticModel) -> Result<StaticModel, InvalidModel> {
    let report = validate(model);
    if !report.is_empty() {
        return Err(InvalidModel(report));
    }

    let kinds: HashMap<&str, StageKind> = model.stages.iter().map(|s| (s.id.as_str(), s.kind)).collect();
    let active = |id: &str| kinds.get(id).is_some_and(|k| k.is_active());

    let mut succ: HashMap<&str, Vec<&FlowArc>> = HashMap::new();
    let mut pred: HashMap<&str, Vec<&FlowArc>> = HashMap::new();
    for a in &model.flows {
        succ.entry(a.from.as_str()).or_default().push(a);
        pred.entry(a.to.as_str()).or_default().push(a);
    }

    // First active stages reached from `start` through passive stages only.
    let reach = |start: &str, forward: bool| -> Vec<String> {
        let mut found = Vec::new();
        let mut seen = HashSet::new();
        let mut stack = vec![start.to_string()];
        while let Some(cur) = stack.pop() {
            if !seen.insert(cur.clone()) {
                continue;
            }
            let next = if forward { succ.get(cur.as_str()) } else { pred.get(cur.as_str()) };
            // reversed so that declaration order is explored first
            for a in next.into_iter().flatten().rev() {
                let n = if forward { &a.to } else { &a.from };
                if active(n) {
                    if !found.contains(n) {
                        found.push(n.clone());
                    }
                } else {
                    stack.push(n.clone());
                }
            }
        }
        found
    };

    let mut flows: Vec<FlowArc> = Vec::new();
    let mut pairs: HashSet<(String, String)> = HashSet::new();
    for s in model.stages.iter().filter(|s| s.kind.is_active()) {
        for a in succ.get(s.id.as_str()).into_iter().flatten() {
            let targets = if active(&a.to) { vec![a.to.clone()] } else { reach(&a.to, true) };
            for t in targets {
                if t == s.id || !pairs.insert((s.id.clone(), t.clone())) {
                    continue;
                }
                if t == a.to {
                    flows.push((*a).clone());
                } else {
                    flows.push(FlowArc { id: format!("{}->{}", s.id, t), from: s.id.clone(), to: t, anchor: None });
                }
            }
        }
    }

    let mut triggers = Vec::new();
    for trig in &model.triggers {
        let froms = if active(&trig.from) { vec![trig.from.clone()] } else { reach(&trig.from, false) };
        let tos = if active(&trig.to) { vec![trig.to.clone()] } else { reach(&trig.to, true) };
        for f in &froms {
            for t in &tos {
                let id = if *f == trig.from && *t == trig.to {
                    trig.id.clone()
                } else {
                    format!("{}@{}=>{}", trig.id, f, t)
                };
                triggers.push(TriggerArc {
                    id,
                    from: f.clone(),
                    to: t.clone(),
                    guard: trig.guard.clone(),
                    anchor: trig.anchor.clone(),
                });
            }
        }
    }

    let mut out = model.clone();
    out.stages.retain(|s| s.kind.is_active());
    for m in &mut out.machines {
        m.stages.retain(|id| active(id));
    }
    out.flows = flows;
    out.triggers = triggers;
    out.simplified = true;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelBuilder, StageKind::*};

    #[test]
    fn two_machine_chain_collapses() {
        let m = ModelBuilder::new("chain")
            .machine("a", "A", None)
            .machine("b", "B", None)
            .stage("a.create", Create, "a", None, None)
            .stage("a.release", Release, "a", None, None)
            .stage("a.transfer", Transfer, "a", None, None)
            .stage("b.transfer", Transfer, "b", None, None)
            .stage("b.receive", Receive, "b", None, None)
            .stage("b.process", Process, "b", None, None)
            .chain(&["a.create", "a.release", "a.transfer", "b.transfer", "b.receive", "b.process"])
            .build();
        assert!(validate(&m).is_empty());
        let s = simplify(&m).unwrap();
        assert_eq!(s.stages.len(), 2);
        assert_eq!(s.flows.len(), 1);
        assert_eq!((s.flows[0].from.as_str(), s.flows[0].to.as_str()), ("a.create", "b.process"));
        assert!(validate(&s).is_empty());
        assert_eq!(simplify(&s).unwrap(), s);
    }

    #[test]
    fn active_only_model_is_unchanged_apart_from_mode() {
        let m = ModelBuilder::new("cp")
            .machine("a", "A", None)
            .stage("c", Create, "a", None, None)
            .stage("p", Process, "a", None, None)
            .flow("c", "p", None)
            .trigger("p", "c", None, None)
            .build();
        let s = simplify(&m).unwrap();
        assert!(s.simplified);
        let mut back = s.clone();
        back.simplified = false;
        assert_eq!(back, m);
    }

    #[test]
    fn triggers_on_release_move_downstream() {
        let m = ModelBuilder::new("t")
            .machine("a", "A", None)
            .stage("p", Process, "a", None, None)
            .stage("r", Release, "a", None, None)
            .stage("t", Transfer, "a", None, None)
            .machine("b", "B", None)
            .stage("bt", Transfer, "b", None, None)
            .stage("br", Receive, "b", None, None)
            .stage("bp", Process, "b", None, None)
            .chain(&["r", "t", "bt", "br", "bp"])
            .trigger("p", "r", None, None)
            .build();
        let s = simplify(&m).unwrap();
        assert_eq!(s.triggers.len(), 1);
        assert_eq!(s.triggers[0].to, "bp");
        assert!(validate(&s).is_empty());
    }

    #[test]
    fn invalid_input_rejected() {
        let m = ModelBuilder::new("bad")
            .machine("a", "A", None)
            .stage("c1", Create, "a", None, None)
            .stage("c2", Create, "a", None, None)
            .flow("c1", "c2", None)
            .build();
        let err = simplify(&m).unwrap_err();
        assert_eq!(err.0.len(), 1);
    }
}
