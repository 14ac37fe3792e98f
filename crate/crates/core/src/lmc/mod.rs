//! The Little Man Computer: a direct interpreter and a TM-driven engine
//! that must agree with it at every instruction boundary.

mod artifact;
mod catalog;
mod model;
mod reference;
mod state;
mod tm;

pub use artifact::{export_artifact, Artifact};
pub use catalog::{lmc_behavioral_model, lmc_event_defs};
pub use model::{lmc_static_model, DISPATCH_STAGES, NEXT_FETCH, OPCODE_GUARDS};
pub use reference::{reference_step, run_reference, ReferenceRun};
pub use state::{decode, InputMode, Instruction, LmcError, LmcState, Mailboxes, RunOutcome};
pub use tm::{lmc_host_binding, tm_run, LmcHost, LmcTm, TmProgress, TmRun, TICKS_PER_INSTRUCTION};
