//! Deterministic token-flow execution of a [`StaticModel`].
//!
//! Every call to [`ExecState::step`] that has work advances the clock by one
//! tick. Within a tick, ready tokens move one flow arc each in ascending
//! `(arrived_tick, stage id, thing id)` order, the destination stage acts
//! (an [`ActionRecord`] is appended and its host effect runs), and then the
//! triggers of every stage that acted are evaluated in declaration order.
//! Fired triggers make their target act in the same tick, which may cascade.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate, InvalidModel, Payload, Stage, StageId, StageKind, StaticModel, Thing};

/// Upper bound on trigger firings within a single tick.
const MAX_FIRINGS_PER_TICK: usize = 100_000;

/// One action occurrence: `stage` performed its action on `thing` at `tick`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub tick: u64,
    pub stage: StageId,
    pub kind: StageKind,
    pub thing: Thing,
    /// Flow arc the thing arrived along, if it moved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub via: Option<String>,
    #[serde(default, rename = "paper_anchor", skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
}

pub type ActionTrace = Vec<ActionRecord>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenState {
    Ready,
    /// Held by its stage's effect until [`ExecState::wake`] is called.
    Parked,
    /// Will re-enter its stage at the next step.
    Woken,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub thing: Thing,
    pub at: StageId,
    pub arrived_tick: u64,
    /// Destination chosen by the host, if any.
    pub route: Option<StageId>,
    pub state: TokenState,
}

/// What an effect did with the thing it was handed.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Outcome {
    emits: Vec<(Thing, Option<StageId>)>,
    parked: Option<Thing>,
    halt: bool,
}

impl Outcome {
    /// The thing is destroyed; nothing leaves the stage.
    pub fn consume() -> Self {
        Outcome::default()
    }

    /// The thing stays a token and follows the stage's only outgoing arc.
    pub fn pass(thing: Thing) -> Self {
        Outcome::default().emit(thing)
    }

    pub fn emit(mut self, thing: Thing) -> Self {
        self.emits.push((thing, None));
        self
    }

    pub fn emit_to(mut self, thing: Thing, stage: impl Into<StageId>) -> Self {
        self.emits.push((thing, Some(stage.into())));
        self
    }

    /// Hold the thing at the stage; the stage acts on it again after a wake.
    pub fn park(thing: Thing) -> Self {
        Outcome { parked: Some(thing), ..Default::default() }
    }

    pub fn halt(mut self) -> Self {
        self.halt = true;
        self
    }
}

/// Failure reported by a host effect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HostFault(pub String);

impl<T: fmt::Display> From<T> for HostFault {
    fn from(v: T) -> Self {
        HostFault(v.to_string())
    }
}

/// Everything an effect may touch besides the host's own domain state.
pub struct EffectCtx<'a> {
    pub tick: u64,
    pub stage: &'a Stage,
    /// The thing the stage is acting on.
    pub thing: Thing,
    /// Contents of the stage's attached storage, if it has one.
    pub storage: Option<&'a mut Vec<Thing>>,
    next_id: &'a mut u64,
}

impl EffectCtx<'_> {
    pub fn new_thing(&mut self, kind: &str, payload: impl Into<Payload>) -> Thing {
        let id = *self.next_id;
        *self.next_id += 1;
        Thing::new(id, kind, payload)
    }
}

pub type GuardFn<D> = Arc<dyn Fn(&D, &Thing) -> bool + Send + Sync>;
pub type EffectFn<D> = Arc<dyn Fn(&mut D, &mut EffectCtx<'_>) -> Result<Outcome, HostFault> + Send + Sync>;

/// Resolves guard names and supplies per-stage effects over a domain `D`.
pub struct HostBinding<D> {
    guards: HashMap<String, GuardFn<D>>,
    effects: HashMap<StageId, EffectFn<D>>,
}

impl<D> Default for HostBinding<D> {
    fn default() -> Self {
        HostBinding { guards: HashMap::new(), effects: HashMap::new() }
    }
}

impl<D> HostBinding<D> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn guard(mut self, name: &str, f: impl Fn(&D, &Thing) -> bool + Send + Sync + 'static) -> Self {
        self.guards.insert(name.to_string(), Arc::new(f));
        self
    }

    pub fn effect(
        mut self,
        stage: &str,
        f: impl Fn(&mut D, &mut EffectCtx<'_>) -> Result<Outcome, HostFault> + Send + Sync + 'static,
    ) -> Self {
        self.effects.insert(stage.to_string(), Arc::new(f));
        self
    }

    /// Guard names used by `model` that this binding cannot resolve.
    pub fn unbound_guards(&self, model: &StaticModel) -> Vec<String> {
        let mut out: Vec<String> =
            model.triggers.iter().filter_map(|t| t.guard.clone()).filter(|g| !self.guards.contains_key(g)).collect();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error(transparent)]
    InvalidModel(#[from] InvalidModel),
    #[error("unknown stage `{0}`")]
    UnknownStage(String),
    #[error("stage `{stage}` ({kind}) is not an entry point")]
    NotEntryPoint { stage: String, kind: StageKind },
    #[error("execution has halted")]
    Halted,
    #[error("execution is faulted")]
    Faulted,
    #[error("guard `{guard}` on trigger `{trigger}` is not bound")]
    UnboundGuard { guard: String, trigger: String },
    #[error("fault at stage `{stage}`: {message}")]
    Host { stage: String, message: String },
    #[error("stage `{stage}` routed a thing to `{to}`, which it has no flow to")]
    BadRoute { stage: String, to: String },
    #[error("stage `{stage}` has {arcs} outgoing flows and the host chose none")]
    AmbiguousRoute { stage: String, arcs: usize },
    #[error("more than {MAX_FIRINGS_PER_TICK} trigger firings in tick {tick}")]
    TriggerStorm { tick: u64 },
}

struct Index {
    pos: HashMap<StageId, usize>,
    out: Vec<Vec<usize>>,
    triggers: Vec<Vec<usize>>,
}

impl Index {
    fn new(model: &StaticModel) -> Self {
        let pos: HashMap<StageId, usize> = model.stages.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        let mut out = vec![Vec::new(); model.stages.len()];
        for (i, a) in model.flows.iter().enumerate() {
            out[pos[&a.from]].push(i);
        }
        let mut triggers = vec![Vec::new(); model.stages.len()];
        for (i, t) in model.triggers.iter().enumerate() {
            triggers[pos[&t.from]].push(i);
        }
        Index { pos, out, triggers }
    }
}

/// A running execution. Cloning forks it (the model and host are shared).
pub struct ExecState<D> {
    model: Arc<StaticModel>,
    host: Arc<HostBinding<D>>,
    index: Arc<Index>,
    pub domain: D,
    tokens: Vec<Token>,
    storages: BTreeMap<String, Vec<Thing>>,
    tick: u64,
    halted: bool,
    faulted: bool,
    trace: ActionTrace,
    /// Records whose triggers have not been evaluated yet.
    pending: VecDeque<usize>,
    next_thing_id: u64,
}

impl<D: Clone> Clone for ExecState<D> {
    fn clone(&self) -> Self {
        ExecState {
            model: self.model.clone(),
            host: self.host.clone(),
            index: self.index.clone(),
            domain: self.domain.clone(),
            tokens: self.tokens.clone(),
            storages: self.storages.clone(),
            tick: self.tick,
            halted: self.halted,
            faulted: self.faulted,
            trace: self.trace.clone(),
            pending: self.pending.clone(),
            next_thing_id: self.next_thing_id,
        }
    }
}

impl<D> ExecState<D> {
    pub fn new(model: Arc<StaticModel>, host: Arc<HostBinding<D>>, domain: D) -> Result<Self, ExecError> {
        let report = validate(&model);
        if !report.is_empty() {
            return Err(InvalidModel(report).into());
        }
        let storages = model.storages.iter().map(|s| (s.id.clone(), s.content.clone())).collect();
        let next_thing_id = model.storages.iter().flat_map(|s| s.content.iter().map(|t| t.id + 1)).max().unwrap_or(1);
        Ok(ExecState {
            index: Arc::new(Index::new(&model)),
            model,
            host,
            domain,
            tokens: Vec::new(),
            storages,
            tick: 0,
            halted: false,
            faulted: false,
            trace: Vec::new(),
            pending: VecDeque::new(),
            next_thing_id,
        })
    }

    pub fn model(&self) -> &StaticModel {
        &self.model
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn faulted(&self) -> bool {
        self.faulted
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn trace(&self) -> &[ActionRecord] {
        &self.trace
    }

    pub fn storage(&self, id: &str) -> Option<&[Thing]> {
        self.storages.get(id).map(Vec::as_slice)
    }

    /// Allocates a thing id that no existing thing uses.
    pub fn fresh_thing(&mut self, kind: &str, payload: impl Into<Payload>) -> Thing {
        let id = self.next_thing_id;
        self.next_thing_id += 1;
        Thing::new(id, kind, payload)
    }

    /// True when a step would do something.
    pub fn has_work(&self) -> bool {
        !self.halted
            && !self.faulted
            && (!self.pending.is_empty() || self.tokens.iter().any(|t| t.state != TokenState::Parked))
    }

    /// Releases every parked token; each re-enters its stage on the next step.
    pub fn wake(&mut self) {
        for t in &mut self.tokens {
            if t.state == TokenState::Parked {
                t.state = TokenState::Woken;
            }
        }
    }

    pub fn parked(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| t.state == TokenState::Parked)
    }

    /// Places an external thing at an entry stage (create or transfer).
    pub fn inject(&mut self, stage: &str, thing: Thing) -> Result<ActionRecord, ExecError> {
        if self.halted {
            return Err(ExecError::Halted);
        }
        let idx = *self.index.pos.get(stage).ok_or_else(|| ExecError::UnknownStage(stage.into()))?;
        let st = &self.model.stages[idx];
        if !matches!(st.kind, StageKind::Create | StageKind::Transfer) {
            return Err(ExecError::NotEntryPoint { stage: stage.into(), kind: st.kind });
        }
        self.next_thing_id = self.next_thing_id.max(thing.id + 1);
        let rec = ActionRecord {
            tick: self.tick,
            stage: st.id.clone(),
            kind: st.kind,
            thing: thing.clone(),
            via: None,
            anchor: st.anchor.clone(),
        };
        self.trace.push(rec.clone());
        self.pending.push_back(self.trace.len() - 1);
        if !self.index.out[idx].is_empty() {
            self.tokens.push(Token {
                thing,
                at: st.id.clone(),
                arrived_tick: self.tick,
                route: None,
                state: TokenState::Ready,
            });
        }
        Ok(rec)
    }

    /// Advances one tick. Returns the records produced; an empty result means
    /// there was nothing to do and the state is unchanged.
    pub fn step(&mut self) -> Result<Vec<ActionRecord>, ExecError> {
        if self.faulted {
            return Err(ExecError::Faulted);
        }
        if self.halted {
            return Err(ExecError::Halted);
        }
        if !self.has_work() {
            return Ok(Vec::new());
        }
        self.tick += 1;
        let start = self.trace.len();
        let res = self.advance();
        if res.is_err() {
            self.faulted = true;
        }
        res.map(|()| self.trace[start..].to_vec())
    }

    /// Steps until quiescent, halted, or `max_ticks` ticks have elapsed.
    pub fn run(&mut self, max_ticks: u64) -> Result<ActionTrace, ExecError> {
        let start = self.trace.len();
        let mut ticks = 0;
        while ticks < max_ticks && self.has_work() {
            self.step()?;
            ticks += 1;
        }
        Ok(self.trace[start..].to_vec())
    }

    fn advance(&mut self) -> Result<(), ExecError> {
        let tick = self.tick;
        let model = self.model.clone();
        let index = self.index.clone();
        let all = std::mem::take(&mut self.tokens);
        let (mut movers, rest): (Vec<Token>, Vec<Token>) = all.into_iter().partition(|t| t.state != TokenState::Parked);
        self.tokens = rest;
        movers.sort_by(|a, b| (a.arrived_tick, &a.at, a.thing.id).cmp(&(b.arrived_tick, &b.at, b.thing.id)));

        for tok in movers {
            let from = index.pos[&tok.at];
            if tok.state == TokenState::Woken {
                self.act(from, tok.thing, None)?;
                continue;
            }
            let arcs = &index.out[from];
            let arc = match &tok.route {
                Some(to) => *arcs
                    .iter()
                    .find(|&&a| model.flows[a].to == *to)
                    .ok_or_else(|| ExecError::BadRoute { stage: tok.at.clone(), to: to.clone() })?,
                None if arcs.len() == 1 => arcs[0],
                None if arcs.is_empty() => continue,
                None => return Err(ExecError::AmbiguousRoute { stage: tok.at.clone(), arcs: arcs.len() }),
            };
            let flow = &model.flows[arc];
            let (dest, via) = (index.pos[&flow.to], flow.id.clone());
            self.act(dest, tok.thing, Some(via))?;
        }

        let mut firings = 0usize;
        while let Some(r) = self.pending.pop_front() {
            let src = index.pos[&self.trace[r].stage];
            for &ti in &index.triggers[src] {
                let trig = &model.triggers[ti];
                let holds = match &trig.guard {
                    None => true,
                    Some(g) => {
                        let f = self
                            .host
                            .guards
                            .get(g)
                            .ok_or_else(|| ExecError::UnboundGuard { guard: g.clone(), trigger: trig.id.clone() })?;
                        f(&self.domain, &self.trace[r].thing)
                    }
                };
                if !holds {
                    continue;
                }
                firings += 1;
                if firings > MAX_FIRINGS_PER_TICK {
                    return Err(ExecError::TriggerStorm { tick });
                }
                let target = index.pos[&trig.to];
                let payload = self.trace[r].thing.payload.clone();
                let signal = self.fresh_thing("signal", payload);
                self.act(target, signal, None)?;
            }
        }
        Ok(())
    }

    /// The stage at `idx` performs its action on `thing`.
    fn act(&mut self, idx: usize, thing: Thing, via: Option<String>) -> Result<(), ExecError> {
        let model = self.model.clone();
        let stage = &model.stages[idx];
        self.trace.push(ActionRecord {
            tick: self.tick,
            stage: stage.id.clone(),
            kind: stage.kind,
            thing: thing.clone(),
            via,
            anchor: stage.anchor.clone(),
        });
        self.pending.push_back(self.trace.len() - 1);

        let outcome = match self.host.effects.get(&stage.id).cloned() {
            None => Outcome::pass(thing),
            Some(effect) => {
                let storage = stage.storage.as_ref().and_then(|s| self.storages.get_mut(s));
                let mut ctx = EffectCtx { tick: self.tick, stage, thing, storage, next_id: &mut self.next_thing_id };
                effect(&mut self.domain, &mut ctx)
                    .map_err(|HostFault(message)| ExecError::Host { stage: stage.id.clone(), message })?
            }
        };

        let has_out = !self.index.out[idx].is_empty();
        for (thing, route) in outcome.emits {
            if route.is_none() && !has_out {
                continue;
            }
            self.tokens.push(Token {
                thing,
                at: stage.id.clone(),
                arrived_tick: self.tick,
                route,
                state: TokenState::Ready,
            });
        }
        if let Some(thing) = outcome.parked {
            self.tokens.push(Token {
                thing,
                at: stage.id.clone(),
                arrived_tick: self.tick,
                route: None,
                state: TokenState::Parked,
            });
        }
        if outcome.halt {
            self.halted = true;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelBuilder, StageKind::*};

    fn model_rt() -> Arc<StaticModel> {
        Arc::new(
            ModelBuilder::new("rt")
                .machine("a", "A", None)
                .machine("b", "B", None)
                .stage("c", Create, "a", None, None)
                .stage("r", Release, "a", None, None)
                .stage("t", Transfer, "a", None, None)
                .stage("bt", Transfer, "b", None, None)
                .stage("br", Receive, "b", None, None)
                .stage("bp", Process, "b", None, None)
                .chain(&["c", "r", "t", "bt", "br", "bp"])
                .build(),
        )
    }

    #[test]
    fn release_moves_to_transfer() {
        let mut s = ExecState::new(model_rt(), Arc::new(HostBinding::<()>::new()), ()).unwrap();
        s.tokens.push(Token {
            thing: Thing::new(1, "data", 7),
            at: "r".into(),
            arrived_tick: 0,
            route: None,
            state: TokenState::Ready,
        });
        let recs = s.step().unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!((recs[0].stage.as_str(), recs[0].kind, recs[0].tick), ("t", Transfer, 1));
        assert_eq!(recs[0].via.as_deref(), Some("r->t"));
        assert_eq!(s.tokens()[0].at, "t");
    }

    #[test]
    fn idle_state_is_a_fixpoint() {
        let mut s = ExecState::new(model_rt(), Arc::new(HostBinding::<()>::new()), ()).unwrap();
        assert!(s.step().unwrap().is_empty());
        assert_eq!(s.tick(), 0);
        assert!(!s.halted());
    }

    #[test]
    fn trigger_fires_in_same_tick() {
        let m = Arc::new(
            ModelBuilder::new("micro")
                .machine("a", "A", None)
                .stage("c", Create, "a", None, None)
                .stage("p", Process, "a", None, None)
                .flow("c", "p", None)
                .trigger("p", "c", Some("always"), None)
                .build(),
        );
        let host = HostBinding::<()>::new().guard("always", |_, _| true);
        let mut s = ExecState::new(m, Arc::new(host), ()).unwrap();
        s.inject("c", Thing::new(1, "signal", 0)).unwrap();
        let recs = s.step().unwrap();
        let got: Vec<_> = recs.iter().map(|r| (r.stage.as_str(), r.kind, r.tick)).collect();
        assert_eq!(got, vec![("p", Process, 1), ("c", Create, 1)]);
    }

    #[test]
    fn unbound_guard_is_a_fault() {
        let m = Arc::new(
            ModelBuilder::new("micro")
                .machine("a", "A", None)
                .stage("c", Create, "a", None, None)
                .stage("p", Process, "a", None, None)
                .flow("c", "p", None)
                .trigger("p", "c", Some("mystery"), None)
                .build(),
        );
        let host = HostBinding::<()>::new();
        assert_eq!(host.unbound_guards(&m), vec!["mystery".to_string()]);
        let mut s = ExecState::new(m, Arc::new(host), ()).unwrap();
        s.inject("c", Thing::new(1, "x", 0)).unwrap();
        match s.step() {
            Err(ExecError::UnboundGuard { guard, .. }) => assert_eq!(guard, "mystery"),
            other => panic!("{other:?}"),
        }
        assert_eq!(s.step(), Err(ExecError::Faulted));
    }

    #[test]
    fn inject_entry_points() {
        let mut s = ExecState::new(model_rt(), Arc::new(HostBinding::<()>::new()), ()).unwrap();
        let r = s.inject("c", Thing::new(1, "card", "c1")).unwrap();
        assert_eq!(r.kind, Create);
        assert_eq!(s.tokens().len(), 1);
        let r = s.inject("bt", Thing::new(2, "card", "c2")).unwrap();
        assert_eq!(r.kind, Transfer);
        assert!(matches!(s.inject("bp", Thing::new(3, "x", 0)), Err(ExecError::NotEntryPoint { .. })));
    }

    #[test]
    fn run_to_quiescence_and_zero_ticks() {
        let mut s = ExecState::new(model_rt(), Arc::new(HostBinding::<()>::new()), ()).unwrap();
        s.inject("c", Thing::new(1, "x", 0)).unwrap();
        assert!(s.run(0).unwrap().is_empty());
        let trace = s.run(100).unwrap();
        let stages: Vec<_> = trace.iter().map(|r| r.stage.as_str()).collect();
        assert_eq!(stages, ["r", "t", "bt", "br", "bp"]);
        assert!(!s.has_work());
    }

    #[test]
    fn effects_route_park_and_halt() {
        let m = Arc::new(
            ModelBuilder::new("fan")
                .machine("a", "A", None)
                .stage("c", Create, "a", None, None)
                .stage("p", Process, "a", None, None)
                .stage("left", Process, "a", None, None)
                .stage("right", Process, "a", None, None)
                .flow("c", "p", None)
                .flow("p", "left", None)
                .flow("p", "right", None)
                .build(),
        );
        let host = HostBinding::<u32>::new()
            .effect("p", |_, ctx| {
                let t = ctx.thing.clone();
                Ok(if t.int() == Some(0) { Outcome::consume().emit_to(t, "right") } else { Outcome::pass(t) })
            })
            .effect("right", |n, ctx| {
                *n += 1;
                Ok(if *n == 1 { Outcome::park(ctx.thing.clone()) } else { Outcome::consume().halt() })
            });
        let mut s = ExecState::new(m.clone(), Arc::new(host), 0).unwrap();
        s.inject("c", Thing::new(1, "x", 0)).unwrap();
        s.run(10).unwrap();
        assert_eq!(s.parked().count(), 1);
        assert!(!s.has_work());
        s.wake();
        s.run(10).unwrap();
        assert!(s.halted());
        let right: Vec<_> = s.trace().iter().filter(|r| r.stage == "right").collect();
        assert_eq!(right.len(), 2);

        // unrouted fan-out faults
        let host = HostBinding::<u32>::new();
        let mut s = ExecState::new(m, Arc::new(host), 0).unwrap();
        s.inject("c", Thing::new(1, "x", 1)).unwrap();
        assert!(matches!(s.run(10), Err(ExecError::AmbiguousRoute { .. })));
    }
}
