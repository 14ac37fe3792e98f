use std::collections::VecDeque;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::asm::{ObjectImage, MAX_CELL, MEMORY_SIZE};

/// The 100 mailboxes; every cell holds 0..=999.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Mailboxes([u16; MEMORY_SIZE]);

impl Mailboxes {
    pub fn new(cells: [u16; MEMORY_SIZE]) -> Self {
        assert!(cells.iter().all(|&c| c <= MAX_CELL), "mailbox value out of range");
        Mailboxes(cells)
    }

    pub fn get(&self, addr: u8) -> u16 {
        self.0[addr as usize]
    }

    pub fn set(&mut self, addr: u8, value: u16) {
        debug_assert!(value <= MAX_CELL);
        self.0[addr as usize] = value;
    }

    pub fn cells(&self) -> &[u16; MEMORY_SIZE] {
        &self.0
    }
}

impl Default for Mailboxes {
    fn default() -> Self {
        Mailboxes([0; MEMORY_SIZE])
    }
}

impl fmt::Debug for Mailboxes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let used = self.0.iter().rposition(|&c| c != 0).map_or(0, |i| i + 1);
        write!(f, "Mailboxes({:?}", &self.0[..used])?;
        if used < MEMORY_SIZE {
            write!(f, " + {} zeros", MEMORY_SIZE - used)?;
        }
        f.write_str(")")
    }
}

impl Serialize for Mailboxes {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mailboxes {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<u16>::deserialize(d)?;
        let cells: [u16; MEMORY_SIZE] =
            v.try_into().map_err(|v: Vec<u16>| D::Error::custom(format!("expected 100 mailboxes, got {}", v.len())))?;
        if let Some(c) = cells.iter().find(|&&c| c > MAX_CELL) {
            return Err(D::Error::custom(format!("mailbox value {c} out of range")));
        }
        Ok(Mailboxes(cells))
    }
}

/// Complete machine state; serializes to the state-snapshot JSON.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LmcState {
    pub pc: u8,
    pub value: u16,
    /// The calculator's negative flag.
    pub flag: bool,
    pub halted: bool,
    pub awaiting_input: bool,
    pub mailboxes: Mailboxes,
    pub input: VecDeque<u16>,
    pub output: Vec<u16>,
}

impl LmcState {
    /// Zeroed machine with `image` loaded at mailbox 0.
    pub fn load(image: &ObjectImage) -> Self {
        LmcState { mailboxes: Mailboxes(image.mailboxes()), ..Default::default() }
    }

    pub fn with_input(mut self, input: impl IntoIterator<Item = u16>) -> Self {
        self.input.extend(input);
        self
    }

    /// Checks the range invariants of every field.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.pc as usize >= MEMORY_SIZE {
            return Err(format!("pc {} out of range", self.pc));
        }
        if self.value > MAX_CELL {
            return Err(format!("calculator value {} out of range", self.value));
        }
        if self.mailboxes.0.iter().any(|&c| c > MAX_CELL) {
            return Err("mailbox out of range".into());
        }
        if self.input.iter().chain(&self.output).any(|&v| v > MAX_CELL) {
            return Err("tray value out of range".into());
        }
        if self.halted && self.awaiting_input {
            return Err("halted and awaiting input at once".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub opcode: u8,
    pub address: u8,
}

/// Splits a cell into its hundreds digit and low two digits.
pub fn decode(cell: u16) -> Instruction {
    debug_assert!(cell <= MAX_CELL);
    Instruction { opcode: (cell / 100) as u8, address: (cell % 100) as u8 }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum LmcError {
    #[error("invalid instruction {cell:03} at pc={pc}")]
    InvalidInstruction { pc: u8, cell: u16 },
    #[error("input exhausted at pc={pc}")]
    InputExhausted { pc: u8 },
    #[error("machine is halted")]
    Halted,
    #[error("machine is waiting for input")]
    AwaitingInput,
    #[error("engine fault: {message}")]
    Engine { message: String },
}

/// What happens when INP finds the input tray empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputMode {
    /// Starvation is an error.
    #[default]
    Batch,
    /// Starvation pauses the machine until input arrives.
    Interactive,
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RunOutcome {
    Halted,
    AwaitingInput,
    /// The instruction budget ran out.
    StepLimit,
    /// The tick budget ran out mid-instruction (TM engine only).
    TickLimit,
    Faulted {
        error: LmcError,
    },
}
