//! Direct interpreter, used as the ground truth for the TM-driven engine.

use super::state::{decode, InputMode, LmcError, LmcState, RunOutcome};

/// Executes one instruction.
///
/// An INP that finds the tray empty returns the unchanged state with
/// `awaiting_input` set; stepping that state again before input arrives
/// is an error, as is stepping a halted machine.
pub fn reference_step(state: &LmcState) -> Result<LmcState, LmcError> {
    if state.halted {
        return Err(LmcError::Halted);
    }
    if state.awaiting_input && state.input.is_empty() {
        return Err(LmcError::AwaitingInput);
    }
    let mut s = state.clone();
    s.awaiting_input = false;
    let pc = s.pc;
    let cell = s.mailboxes.get(pc);
    let ins = decode(cell);
    let addr = ins.address;
    s.pc = (pc + 1) % 100;
    match ins.opcode {
        0 => s.halted = true,
        1 => s.value = (s.value + s.mailboxes.get(addr)) % 1000,
        2 => {
            let d = s.value as i32 - s.mailboxes.get(addr) as i32;
            if d < 0 {
                s.value = (d + 1000) as u16;
                s.flag = true;
            } else {
                s.value = d as u16;
                s.flag = false;
            }
        }
        3 => s.mailboxes.set(addr, s.value),
        5 => {
            s.value = s.mailboxes.get(addr);
            s.flag = false;
        }
        6 => s.pc = addr,
        7 => {
            if s.value == 0 {
                s.pc = addr
            }
        }
        8 => {
            if !s.flag {
                s.pc = addr
            }
        }
        9 if addr == 1 => match s.input.pop_front() {
            Some(v) => {
                s.value = v;
                s.flag = false;
            }
            None => {
                let mut waiting = state.clone();
                waiting.awaiting_input = true;
                return Ok(waiting);
            }
        },
        9 if addr == 2 => s.output.push(s.value),
        _ => return Err(LmcError::InvalidInstruction { pc, cell }),
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceRun {
    pub final_state: LmcState,
    /// The initial state followed by the state after every completed
    /// instruction.
    pub snapshots: Vec<LmcState>,
    pub outcome: RunOutcome,
}

impl ReferenceRun {
    pub fn steps(&self) -> usize {
        self.snapshots.len() - 1
    }
}

/// Runs until halt, fault, input starvation or `max_steps` instructions.
///
/// In batch mode starvation is reported as `InputExhausted`; a fault
/// leaves `final_state` at the last completed instruction.
pub fn run_reference(initial: LmcState, max_steps: u64, mode: InputMode) -> ReferenceRun {
    let mut snapshots = vec![initial.clone()];
    let mut cur = initial;
    let mut outcome = RunOutcome::StepLimit;
    for _ in 0..max_steps {
        if cur.halted {
            outcome = RunOutcome::Halted;
            break;
        }
        match reference_step(&cur) {
            Ok(next) if next.awaiting_input => {
                outcome = match mode {
                    InputMode::Interactive => {
                        cur = next;
                        RunOutcome::AwaitingInput
                    }
                    InputMode::Batch => RunOutcome::Faulted { error: LmcError::InputExhausted { pc: cur.pc } },
                };
                break;
            }
            Ok(next) => {
                snapshots.push(next.clone());
                cur = next;
            }
            Err(error) => {
                outcome = RunOutcome::Faulted { error };
                break;
            }
        }
    }
    if cur.halted {
        outcome = RunOutcome::Halted;
    }
    ReferenceRun { final_state: cur, snapshots, outcome }
}
