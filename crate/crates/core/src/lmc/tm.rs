//! Runs LMC programs by executing the static model with host effects.
//!
//! The host keeps the machine state; the model decides the order in which
//! stages act. `pc.read` is the instruction boundary: it snapshots the state
//! the first time it is reached and then spends one unit of the instruction
//! budget, or parks until more budget is granted.

use std::sync::{Arc, OnceLock};

use crate::events::{EventDef, EventDetector, EventOccurrence};
use crate::exec::{ActionRecord, ActionTrace, EffectCtx, ExecState, HostBinding, HostFault, Outcome};
use crate::model::{StaticModel, Thing};

use super::catalog::lmc_event_defs;
use super::model::{lmc_static_model, OPCODE_GUARDS};
use super::state::{decode, InputMode, Instruction, LmcError, LmcState, RunOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Fetch,
    Execute(u8),
}

/// Domain state behind the LMC host binding.
#[derive(Debug, Clone)]
pub struct LmcHost {
    pub lmc: LmcState,
    pub mode: InputMode,
    budget: u64,
    at_boundary: bool,
    boundaries: Vec<LmcState>,
    phase: Phase,
    instr_pc: u8,
    instr_cell: u16,
    store_addr: Option<u8>,
    store_value: Option<u16>,
    fault: Option<LmcError>,
    waiting: bool,
}

impl LmcHost {
    fn new(lmc: LmcState, mode: InputMode) -> Self {
        LmcHost {
            lmc,
            mode,
            budget: 0,
            at_boundary: false,
            boundaries: Vec::new(),
            phase: Phase::Idle,
            instr_pc: 0,
            instr_cell: 0,
            store_addr: None,
            store_value: None,
            fault: None,
            waiting: false,
        }
    }

    fn instr(&self) -> Instruction {
        decode(self.instr_cell)
    }

    fn fail(&mut self, e: LmcError) -> HostFault {
        let f = HostFault(e.to_string());
        self.fault = Some(e);
        f
    }

    fn invalid(&mut self) -> HostFault {
        let e = LmcError::InvalidInstruction { pc: self.instr_pc, cell: self.instr_cell };
        self.fail(e)
    }
}

fn val(ctx: &EffectCtx<'_>) -> i64 {
    ctx.thing.int().unwrap_or(0)
}

fn cell(ctx: &EffectCtx<'_>) -> u16 {
    val(ctx).clamp(0, 999) as u16
}

type Effect = fn(&mut LmcHost, &mut EffectCtx<'_>) -> Result<Outcome, HostFault>;

const EFFECTS: &[(&str, Effect)] = &[
    ("pc.init", |d, ctx| {
        d.lmc.pc = (val(ctx) % 100) as u8;
        Ok(Outcome::consume())
    }),
    ("pc.read", |d, ctx| {
        if !d.at_boundary {
            d.boundaries.push(d.lmc.clone());
            d.at_boundary = true;
        }
        if d.budget == 0 {
            d.phase = Phase::Idle;
            return Ok(Outcome::park(ctx.thing.clone()));
        }
        d.budget -= 1;
        d.at_boundary = false;
        d.phase = Phase::Fetch;
        d.instr_pc = d.lmc.pc;
        let a = ctx.new_thing("address", d.lmc.pc as i64);
        Ok(Outcome::consume().emit(a))
    }),
    ("pc.increment", |d, _| {
        d.lmc.pc = (d.lmc.pc + 1) % 100;
        Ok(Outcome::consume())
    }),
    ("pc.route", |d, ctx| {
        let to = if d.instr().opcode == 5 { "pc.route_release" } else { "pc.set" };
        Ok(Outcome::consume().emit_to(ctx.thing.clone(), to))
    }),
    ("pc.set", |d, ctx| {
        d.lmc.pc = cell(ctx) as u8 % 100;
        Ok(Outcome::consume())
    }),
    ("memory.process", |d, ctx| {
        let content = d.lmc.mailboxes.get(cell(ctx) as u8 % 100);
        let (kind, to) = match d.phase {
            Phase::Fetch => ("instruction", "memory.instr_release"),
            Phase::Execute(1 | 2) => ("data", "memory.data_release"),
            Phase::Execute(5) => ("data", "memory.load_release"),
            p => return Err(HostFault(format!("memory request in phase {p:?}"))),
        };
        let t = ctx.new_thing(kind, content as i64);
        Ok(Outcome::consume().emit_to(t, to))
    }),
    ("memory.store_process", |d, ctx| {
        match ctx.thing.kind.as_str() {
            "address" => d.store_addr = Some(cell(ctx) as u8 % 100),
            _ => d.store_value = Some(cell(ctx)),
        }
        Ok(Outcome::consume())
    }),
    ("memory.write", |d, _| {
        if let (Some(a), Some(v)) = (d.store_addr.take(), d.store_value.take()) {
            d.lmc.mailboxes.set(a, v);
        }
        Ok(Outcome::consume())
    }),
    ("control.decode", |d, ctx| {
        d.instr_cell = cell(ctx);
        let ins = d.instr();
        d.phase = Phase::Execute(ins.opcode);
        let op = ctx.new_thing("opcode", ins.opcode as i64);
        let addr = ctx.new_thing("address", ins.address as i64);
        Ok(Outcome::consume().emit_to(op, "control.opcode").emit_to(addr, "control.address"))
    }),
    ("control.opcode", |_, _| Ok(Outcome::consume())),
    ("control.address", |d, ctx| {
        let t = ctx.thing.clone();
        let to = match d.instr().opcode {
            1 | 2 => "control.addr_mem_release",
            3 => "control.addr_store_release",
            5 | 6 => "control.addr_pc_release",
            7 if d.lmc.value == 0 => "control.addr_pc_release",
            8 if !d.lmc.flag => "control.addr_pc_release",
            9 => "control.io_select",
            _ => return Ok(Outcome::consume()),
        };
        Ok(Outcome::consume().emit_to(t, to))
    }),
    ("control.io_select", |d, ctx| match val(ctx) {
        1 | 2 => Ok(Outcome::consume()),
        _ => Err(d.invalid()),
    }),
    ("dispatch.halt", |d, _| {
        d.lmc.halted = true;
        d.phase = Phase::Idle;
        Ok(Outcome::consume().halt())
    }),
    ("dispatch.invalid", |d, _| Err(d.invalid())),
    ("input.take", |d, ctx| match d.lmc.input.pop_front() {
        Some(v) => {
            d.waiting = false;
            let t = ctx.new_thing("data", v as i64);
            Ok(Outcome::consume().emit(t))
        }
        None => match d.mode {
            InputMode::Batch => Err(d.fail(LmcError::InputExhausted { pc: d.instr_pc })),
            InputMode::Interactive => {
                d.waiting = true;
                Ok(Outcome::park(ctx.thing.clone()))
            }
        },
    }),
    ("calculator.alu", |d, ctx| {
        let to = if d.instr().opcode == 1 { "calculator.add" } else { "calculator.sub" };
        Ok(Outcome::consume().emit_to(ctx.thing.clone(), to))
    }),
    ("calculator.add", |d, ctx| {
        d.lmc.value = (d.lmc.value + cell(ctx)) % 1000;
        Ok(Outcome::consume())
    }),
    ("calculator.sub", |d, ctx| {
        let diff = d.lmc.value as i64 - val(ctx);
        let t = ctx.new_thing("difference", diff);
        Ok(Outcome::consume().emit(t))
    }),
    ("calculator.examine", |_, _| Ok(Outcome::consume())),
    ("calculator.store_result", |d, ctx| {
        d.lmc.value = cell(ctx);
        d.lmc.flag = false;
        Ok(Outcome::consume())
    }),
    ("calculator.set_negative", |d, ctx| {
        d.lmc.value = (val(ctx) + 1000) as u16;
        d.lmc.flag = true;
        Ok(Outcome::consume())
    }),
    ("calculator.load", |d, ctx| {
        d.lmc.value = cell(ctx);
        d.lmc.flag = false;
        Ok(Outcome::consume())
    }),
    ("calculator.input", |d, ctx| {
        d.lmc.value = cell(ctx);
        d.lmc.flag = false;
        Ok(Outcome::consume())
    }),
    ("calculator.store_release", |d, ctx| {
        let t = ctx.new_thing("data", d.lmc.value as i64);
        Ok(Outcome::consume().emit(t))
    }),
    ("calculator.output_release", |d, ctx| {
        let t = ctx.new_thing("data", d.lmc.value as i64);
        Ok(Outcome::consume().emit(t))
    }),
    ("output.store", |d, ctx| {
        d.lmc.output.push(cell(ctx));
        Ok(Outcome::consume())
    }),
];

/// Guards and effects binding the LMC model to [`LmcHost`].
pub fn lmc_host_binding() -> HostBinding<LmcHost> {
    let mut h = HostBinding::new()
        .guard("fetching", |d: &LmcHost, _| d.phase == Phase::Fetch)
        .guard("addr=01", |_, t| t.int() == Some(1))
        .guard("addr=02", |_, t| t.int() == Some(2))
        .guard("d≥0", |_, t| t.int().is_some_and(|d| d >= 0))
        .guard("d<0", |_, t| t.int().is_some_and(|d| d < 0))
        .guard("value=0", |d, _| d.lmc.value == 0)
        .guard("value≠0", |d, _| d.lmc.value != 0)
        .guard("flag clear", |d, _| !d.lmc.flag)
        .guard("flag set", |d, _| d.lmc.flag)
        .guard("store ready", |d, _| d.store_addr.is_some() && d.store_value.is_some());
    for (op, g) in OPCODE_GUARDS.iter().enumerate() {
        h = h.guard(g, move |_, t: &Thing| t.int() == Some(op as i64));
    }
    for &(stage, f) in EFFECTS {
        h = h.effect(stage, f);
    }
    h
}

struct Shared {
    model: Arc<StaticModel>,
    host: Arc<HostBinding<LmcHost>>,
    defs: Vec<EventDef>,
    detector: EventDetector,
}

fn shared() -> &'static Shared {
    static SHARED: OnceLock<Shared> = OnceLock::new();
    SHARED.get_or_init(|| {
        let model = lmc_static_model();
        let defs = lmc_event_defs();
        let detector = EventDetector::new(&model, &defs).expect("catalog matches model");
        Shared { model: Arc::new(model), host: Arc::new(lmc_host_binding()), defs, detector }
    })
}

/// What one call to [`LmcTm::run`] produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TmProgress {
    pub outcome: RunOutcome,
    pub records: Vec<ActionRecord>,
    pub occurrences: Vec<EventOccurrence>,
}

/// An LMC program executing on the TM engine.
#[derive(Clone)]
pub struct LmcTm {
    exec: ExecState<LmcHost>,
    detector: EventDetector,
    occurrences: Vec<EventOccurrence>,
    fed: usize,
    started: bool,
    terminal: Option<RunOutcome>,
}

impl LmcTm {
    pub fn new(initial: LmcState, mode: InputMode) -> Self {
        let s = shared();
        let exec =
            ExecState::new(s.model.clone(), s.host.clone(), LmcHost::new(initial, mode)).expect("LMC model is valid");
        LmcTm { exec, detector: s.detector.clone(), occurrences: Vec::new(), fed: 0, started: false, terminal: None }
    }

    pub fn event_defs() -> &'static [EventDef] {
        &shared().defs
    }

    pub fn model() -> &'static StaticModel {
        &shared().model
    }

    pub fn mode(&self) -> InputMode {
        self.exec.domain.mode
    }

    pub fn set_mode(&mut self, mode: InputMode) {
        self.exec.domain.mode = mode;
    }

    /// The state as of the last instruction boundary, or the final state
    /// once halted. While an INP waits, `awaiting_input` is set.
    pub fn state(&self) -> LmcState {
        let d = &self.exec.domain;
        if d.lmc.halted {
            return d.lmc.clone();
        }
        let Some(last) = d.boundaries.last() else {
            return d.lmc.clone();
        };
        let mut s = last.clone();
        if d.waiting || d.at_boundary {
            s.input = d.lmc.input.clone();
        }
        s.awaiting_input = d.waiting;
        s
    }

    /// The state at every instruction boundary, plus the final state if
    /// the machine halted.
    pub fn snapshots(&self) -> Vec<LmcState> {
        let d = &self.exec.domain;
        let mut v = d.boundaries.clone();
        if d.lmc.halted {
            v.push(d.lmc.clone());
        }
        v
    }

    pub fn trace(&self) -> &[ActionRecord] {
        self.exec.trace()
    }

    pub fn occurrences(&self) -> &[EventOccurrence] {
        &self.occurrences
    }

    pub fn tick(&self) -> u64 {
        self.exec.tick()
    }

    pub fn awaiting_input(&self) -> bool {
        self.exec.domain.waiting
    }

    pub fn terminal(&self) -> Option<&RunOutcome> {
        self.terminal.as_ref()
    }

    pub fn provide_input(&mut self, value: u16) {
        self.exec.domain.lmc.input.push_back(value.min(999));
    }

    /// Executes up to `max_instructions` further instructions, spending at
    /// most `max_ticks` engine ticks. A pending INP that is resumed counts
    /// as the first of them.
    pub fn run(&mut self, max_instructions: u64, max_ticks: u64) -> TmProgress {
        let start = self.exec.trace().len();
        let occ_start = self.occurrences.len();
        let outcome = self.advance(max_instructions, max_ticks);
        if matches!(outcome, RunOutcome::Halted | RunOutcome::Faulted { .. }) {
            self.terminal = Some(outcome.clone());
        }
        TmProgress {
            outcome,
            records: self.exec.trace()[start..].to_vec(),
            occurrences: self.occurrences[occ_start..].to_vec(),
        }
    }

    fn advance(&mut self, max_instructions: u64, max_ticks: u64) -> RunOutcome {
        if let Some(t) = &self.terminal {
            return t.clone();
        }
        let d = &mut self.exec.domain;
        let resuming = d.waiting;
        let grant = if resuming { max_instructions.saturating_sub(1) } else { max_instructions };
        d.budget = d.budget.saturating_add(grant);
        if resuming && d.lmc.input.is_empty() {
            if d.mode == InputMode::Batch {
                let pc = d.instr_pc;
                return self.fault_now(LmcError::InputExhausted { pc });
            }
            return RunOutcome::AwaitingInput;
        }
        if !self.started {
            self.started = true;
            let zero = self.exec.fresh_thing("value", 0);
            self.exec.inject("pc.init_transfer", zero).expect("entry stage exists");
        } else if max_instructions > 0 {
            self.exec.wake();
        }
        let mut ticks = 0;
        while self.exec.has_work() {
            if ticks == max_ticks {
                self.feed();
                return RunOutcome::TickLimit;
            }
            let res = self.exec.step();
            ticks += 1;
            self.feed();
            if let Err(e) = res {
                let error = self.exec.domain.fault.clone().unwrap_or(LmcError::Engine { message: e.to_string() });
                return RunOutcome::Faulted { error };
            }
        }
        let d = &self.exec.domain;
        if d.lmc.halted {
            RunOutcome::Halted
        } else if d.waiting {
            RunOutcome::AwaitingInput
        } else {
            RunOutcome::StepLimit
        }
    }

    fn fault_now(&mut self, error: LmcError) -> RunOutcome {
        self.exec.domain.fault = Some(error.clone());
        self.exec.domain.waiting = false;
        RunOutcome::Faulted { error }
    }

    fn feed(&mut self) {
        let trace = self.exec.trace();
        let new = self.detector.feed(&trace[self.fed..]);
        self.fed = trace.len();
        self.occurrences.extend(new);
    }
}

/// Result of a complete TM-driven run.
#[derive(Debug, Clone, PartialEq)]
pub struct TmRun {
    pub final_state: LmcState,
    /// Same layout as the reference run: the initial state, then the state
    /// after every completed instruction.
    pub snapshots: Vec<LmcState>,
    pub trace: ActionTrace,
    pub occurrences: Vec<EventOccurrence>,
    pub outcome: RunOutcome,
}

/// Ticks allowed per instruction before a run is declared stuck.
pub const TICKS_PER_INSTRUCTION: u64 = 64;

/// Runs `initial` on the TM engine for at most `max_steps` instructions.
pub fn tm_run(initial: LmcState, max_steps: u64, mode: InputMode) -> TmRun {
    let mut tm = LmcTm::new(initial, mode);
    let max_ticks = max_steps.saturating_add(1).saturating_mul(TICKS_PER_INSTRUCTION);
    let outcome = tm.run(max_steps, max_ticks).outcome;
    TmRun {
        final_state: tm.state(),
        snapshots: tm.snapshots(),
        trace: tm.trace().to_vec(),
        occurrences: tm.occurrences,
        outcome,
    }
}
