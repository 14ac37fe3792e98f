//! Executable Thinging Machine models and a Little Man Computer workbench.
//!
//! - [`model`]: the TM metamodel, validation, simplification and export.
//! - [`exec`]: deterministic token-flow execution of a model.
//! - [`events`]: event regions, occurrence detection and behavioral conformance.
//! - [`asm`]: the LMC assembler and disassembler.
//! - [`lmc`]: LMC machine state, reference interpreter, TM model and TM-driven runs.
//! - [`atm`]: the bank-withdrawal model used as a second engine fixture.
//! - [`session`]: interactive execution sessions.

pub mod asm;
pub mod atm;
pub mod events;
pub mod exec;
pub mod lmc;
pub mod model;
pub mod session;

pub use exec::{ActionRecord, ActionTrace, ExecError, ExecState, HostBinding, Outcome};
pub use model::{StageKind, StaticModel, Thing};
