//! Two-pass assembler and disassembler for Little Man Computer assembly.
//!
//! Grammar, one statement per line:
//!
//! ```text
//! line := [label] mnemonic [operand] [comment]
//! comment := ";" text | "//" text
//! ```
//!
//! Mnemonics are case-insensitive and accept the aliases `IN`, `STO` and
//! `HALT`. Labels are case-sensitive and must share their line with a
//! mnemonic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MEMORY_SIZE: usize = 100;
pub const MAX_CELL: u16 = 999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mnemonic {
    Hlt,
    Add,
    Sub,
    Sta,
    Lda,
    Bra,
    Brz,
    Brp,
    Inp,
    Out,
    Dat,
}

impl Mnemonic {
    pub fn as_str(self) -> &'static str {
        match self {
            Mnemonic::Hlt => "HLT",
            Mnemonic::Add => "ADD",
            Mnemonic::Sub => "SUB",
            Mnemonic::Sta => "STA",
            Mnemonic::Lda => "LDA",
            Mnemonic::Bra => "BRA",
            Mnemonic::Brz => "BRZ",
            Mnemonic::Brp => "BRP",
            Mnemonic::Inp => "INP",
            Mnemonic::Out => "OUT",
            Mnemonic::Dat => "DAT",
        }
    }

    /// Opcode digit for address-taking instructions.
    pub fn opcode(self) -> Option<u16> {
        match self {
            Mnemonic::Add => Some(1),
            Mnemonic::Sub => Some(2),
            Mnemonic::Sta => Some(3),
            Mnemonic::Lda => Some(5),
            Mnemonic::Bra => Some(6),
            Mnemonic::Brz => Some(7),
            Mnemonic::Brp => Some(8),
            _ => None,
        }
    }

    fn arity(self) -> Arity {
        match self {
            Mnemonic::Hlt | Mnemonic::Inp | Mnemonic::Out => Arity::None,
            Mnemonic::Dat => Arity::Optional,
            _ => Arity::Required,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Arity {
    None,
    Optional,
    Required,
}

impl FromStr for Mnemonic {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "HLT" | "HALT" => Mnemonic::Hlt,
            "ADD" => Mnemonic::Add,
            "SUB" => Mnemonic::Sub,
            "STA" | "STO" => Mnemonic::Sta,
            "LDA" => Mnemonic::Lda,
            "BRA" => Mnemonic::Bra,
            "BRZ" => Mnemonic::Brz,
            "BRP" => Mnemonic::Brp,
            "INP" | "IN" => Mnemonic::Inp,
            "OUT" => Mnemonic::Out,
            "DAT" => Mnemonic::Dat,
            _ => return Err(()),
        })
    }
}

impl fmt::Display for Mnemonic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operand {
    Number(u16),
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceLine {
    pub label: Option<String>,
    pub mnemonic: Mnemonic,
    pub operand: Option<Operand>,
    pub comment: Option<String>,
    /// 1-based line number in the source text.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic `{text}`")]
    UnknownMnemonic { line: usize, text: String },
    #[error("line {line}: {mnemonic} requires an operand")]
    MissingOperand { line: usize, mnemonic: Mnemonic },
    #[error("line {line}: {mnemonic} takes no operand")]
    UnexpectedOperand { line: usize, mnemonic: Mnemonic },
    #[error("line {line}: malformed label `{label}`")]
    MalformedLabel { line: usize, label: String },
    #[error("line {line}: label `{label}` must be followed by an instruction on the same line")]
    LabelWithoutInstruction { line: usize, label: String },
    #[error("line {line}: too many fields")]
    TooManyFields { line: usize },
    #[error("line {line}: label `{label}` already defined on line {first}")]
    DuplicateLabel { line: usize, label: String, first: usize },
    #[error("line {line}: undefined label `{label}`")]
    UndefinedLabel { line: usize, label: String },
    #[error("line {line}: operand {value} out of range 0..={max}")]
    OperandOutOfRange { line: usize, value: u64, max: u16 },
    #[error("program needs {cells} mailboxes; only 100 exist")]
    ProgramTooLarge { cells: usize },
}

impl AsmError {
    pub fn line(&self) -> Option<usize> {
        match self {
            AsmError::UnknownMnemonic { line, .. }
            | AsmError::MissingOperand { line, .. }
            | AsmError::UnexpectedOperand { line, .. }
            | AsmError::MalformedLabel { line, .. }
            | AsmError::LabelWithoutInstruction { line, .. }
            | AsmError::TooManyFields { line }
            | AsmError::DuplicateLabel { line, .. }
            | AsmError::UndefinedLabel { line, .. }
            | AsmError::OperandOutOfRange { line, .. } => Some(*line),
            AsmError::ProgramTooLarge { .. } => None,
        }
    }
}

fn is_label(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && s.parse::<Mnemonic>().is_err()
}

fn parse_operand(text: &str, line: usize) -> Result<Operand, AsmError> {
    if text.chars().all(|c| c.is_ascii_digit()) {
        let value: u64 =
            text.parse().map_err(|_| AsmError::OperandOutOfRange { line, value: u64::MAX, max: MAX_CELL })?;
        if value > MAX_CELL as u64 {
            return Err(AsmError::OperandOutOfRange { line, value, max: MAX_CELL });
        }
        Ok(Operand::Number(value as u16))
    } else if is_label(text) {
        Ok(Operand::Label(text.to_string()))
    } else {
        Err(AsmError::MalformedLabel { line, label: text.to_string() })
    }
}

fn parse_line(raw: &str, line: usize) -> Result<Option<SourceLine>, AsmError> {
    let cut = [raw.find(';'), raw.find("//")].into_iter().flatten().min();
    let (code, comment) = match cut {
        Some(i) => {
            let c = raw[i..].trim_start_matches(';').trim_start_matches("//").trim();
            (&raw[..i], Some(c.to_string()))
        }
        None => (raw, None),
    };
    let fields: Vec<&str> = code.split_whitespace().collect();
    if fields.is_empty() {
        return Ok(None);
    }
    if fields.len() > 3 {
        return Err(AsmError::TooManyFields { line });
    }

    let (label, rest) = match fields[0].parse::<Mnemonic>() {
        Ok(_) => (None, &fields[..]),
        Err(()) => {
            let l = fields[0];
            if fields.len() == 1 {
                return Err(if is_label(l) {
                    AsmError::LabelWithoutInstruction { line, label: l.into() }
                } else {
                    AsmError::UnknownMnemonic { line, text: l.into() }
                });
            }
            if fields[1].parse::<Mnemonic>().is_err() {
                let text = if fields.len() == 3 && is_label(l) { fields[1] } else { l };
                return Err(AsmError::UnknownMnemonic { line, text: text.into() });
            }
            if !is_label(l) {
                return Err(AsmError::MalformedLabel { line, label: l.into() });
            }
            (Some(l.to_string()), &fields[1..])
        }
    };
    let mnemonic: Mnemonic = rest[0].parse().expect("checked above");
    if rest.len() > 2 {
        return Err(AsmError::TooManyFields { line });
    }
    let operand = rest.get(1).map(|t| parse_operand(t, line)).transpose()?;
    match (mnemonic.arity(), &operand) {
        (Arity::Required, None) => return Err(AsmError::MissingOperand { line, mnemonic }),
        (Arity::None, Some(_)) => return Err(AsmError::UnexpectedOperand { line, mnemonic }),
        _ => {}
    }
    Ok(Some(SourceLine { label, mnemonic, operand, comment, line }))
}

/// Parses source text into statements, skipping blank and comment-only lines.
pub fn parse(text: &str) -> Result<Vec<SourceLine>, AsmError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if let Some(l) = parse_line(raw, i + 1)? {
            out.push(l);
        }
    }
    Ok(out)
}

/// An assembled memory image starting at mailbox 0.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ObjectImage {
    pub cells: Vec<u16>,
    pub symbols: BTreeMap<String, u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImageError {
    #[error("image has {0} cells; at most 100 fit")]
    TooLarge(usize),
    #[error("cell {index} holds {value}; cells must be 0..=999")]
    CellOutOfRange { index: usize, value: i64 },
    #[error("line {line}: `{text}` is not a cell value")]
    BadLine { line: usize, text: String },
    #[error("image JSON: {0}")]
    Json(String),
}

impl ObjectImage {
    pub fn from_cells(cells: Vec<u16>) -> Result<Self, ImageError> {
        if cells.len() > MEMORY_SIZE {
            return Err(ImageError::TooLarge(cells.len()));
        }
        if let Some((index, &v)) = cells.iter().enumerate().find(|(_, &v)| v > MAX_CELL) {
            return Err(ImageError::CellOutOfRange { index, value: v as i64 });
        }
        Ok(ObjectImage { cells, symbols: BTreeMap::new() })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// The full 100-mailbox memory, zero-filled past the image.
    pub fn mailboxes(&self) -> [u16; MEMORY_SIZE] {
        let mut m = [0; MEMORY_SIZE];
        m[..self.cells.len()].copy_from_slice(&self.cells);
        m
    }

    /// One zero-padded cell per line, always 100 lines.
    pub fn to_text(&self) -> String {
        self.mailboxes().iter().map(|c| format!("{c:03}\n")).collect()
    }

    /// Reads the one-cell-per-line text format (blank lines ignored).
    pub fn from_text(text: &str) -> Result<Self, ImageError> {
        let mut cells = Vec::new();
        for (i, l) in text.lines().enumerate() {
            let t = l.trim();
            if t.is_empty() {
                continue;
            }
            let v: i64 = t.parse().map_err(|_| ImageError::BadLine { line: i + 1, text: t.into() })?;
            if !(0..=MAX_CELL as i64).contains(&v) {
                return Err(ImageError::CellOutOfRange { index: cells.len(), value: v });
            }
            cells.push(v as u16);
        }
        Self::from_cells(cells)
    }

    /// Reads a bare JSON array of cells or a state snapshot's `mailboxes`.
    pub fn from_json(text: &str) -> Result<Self, ImageError> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| ImageError::Json(e.to_string()))?;
        let arr = match &v {
            serde_json::Value::Array(a) => a,
            serde_json::Value::Object(o) => o
                .get("mailboxes")
                .and_then(|m| m.as_array())
                .ok_or_else(|| ImageError::Json("expected a `mailboxes` array".into()))?,
            _ => return Err(ImageError::Json("expected an array or an object".into())),
        };
        let mut cells = Vec::with_capacity(arr.len());
        for (index, c) in arr.iter().enumerate() {
            let value = c.as_i64().ok_or_else(|| ImageError::Json(format!("cell {index} is not an integer")))?;
            if !(0..=MAX_CELL as i64).contains(&value) {
                return Err(ImageError::CellOutOfRange { index, value });
            }
            cells.push(value as u16);
        }
        Self::from_cells(cells)
    }
}

/// Pass one assigns addresses and collects labels; pass two encodes.
pub fn assemble(lines: &[SourceLine]) -> Result<ObjectImage, AsmError> {
    if lines.len() > MEMORY_SIZE {
        return Err(AsmError::ProgramTooLarge { cells: lines.len() });
    }
    let mut symbols: BTreeMap<String, u8> = BTreeMap::new();
    let mut defined_at: BTreeMap<&str, usize> = BTreeMap::new();
    for (addr, l) in lines.iter().enumerate() {
        if let Some(label) = &l.label {
            if let Some(&first) = defined_at.get(label.as_str()) {
                return Err(AsmError::DuplicateLabel { line: l.line, label: label.clone(), first });
            }
            defined_at.insert(label, l.line);
            symbols.insert(label.clone(), addr as u8);
        }
    }

    let mut cells = Vec::with_capacity(lines.len());
    for l in lines {
        let value = match &l.operand {
            None => 0,
            Some(Operand::Number(n)) => *n,
            Some(Operand::Label(name)) => {
                *symbols.get(name).ok_or_else(|| AsmError::UndefinedLabel { line: l.line, label: name.clone() })? as u16
            }
        };
        let cell = match l.mnemonic {
            Mnemonic::Hlt => 0,
            Mnemonic::Inp => 901,
            Mnemonic::Out => 902,
            Mnemonic::Dat => value,
            m => {
                if value > 99 {
                    return Err(AsmError::OperandOutOfRange { line: l.line, value: value as u64, max: 99 });
                }
                m.opcode().expect("address instruction") * 100 + value
            }
        };
        cells.push(cell);
    }
    Ok(ObjectImage { cells, symbols })
}

/// Parses and assembles in one go.
pub fn assemble_text(text: &str) -> Result<ObjectImage, AsmError> {
    assemble(&parse(text)?)
}

fn canonical(cell: u16) -> Option<(Mnemonic, Option<u8>)> {
    let (op, addr) = (cell / 100, (cell % 100) as u8);
    Some(match op {
        0 if addr == 0 => (Mnemonic::Hlt, None),
        1 => (Mnemonic::Add, Some(addr)),
        2 => (Mnemonic::Sub, Some(addr)),
        3 => (Mnemonic::Sta, Some(addr)),
        5 => (Mnemonic::Lda, Some(addr)),
        6 => (Mnemonic::Bra, Some(addr)),
        7 => (Mnemonic::Brz, Some(addr)),
        8 => (Mnemonic::Brp, Some(addr)),
        9 if addr == 1 => (Mnemonic::Inp, None),
        9 if addr == 2 => (Mnemonic::Out, None),
        _ => return None,
    })
}

/// Renders an image as assembly. Cells reachable by control flow from
/// mailbox 0 that hold a valid instruction are rendered as instructions;
/// all others become `DAT`. Addresses referenced inside the image get
/// labels `L<addr>`.
pub fn disassemble(image: &ObjectImage) -> String {
    let cells = &image.cells;
    let n = cells.len();
    let mut code = vec![false; n];
    let mut visited = vec![false; n];
    let mut stack = if n > 0 { vec![0usize] } else { vec![] };
    while let Some(pc) = stack.pop() {
        if pc >= n || visited[pc] {
            continue;
        }
        visited[pc] = true;
        let Some((m, addr)) = canonical(cells[pc]) else { continue };
        code[pc] = true;
        let next = (pc + 1) % MEMORY_SIZE;
        match m {
            Mnemonic::Hlt => {}
            Mnemonic::Bra => stack.push(addr.unwrap() as usize),
            Mnemonic::Brz | Mnemonic::Brp => {
                stack.push(addr.unwrap() as usize);
                stack.push(next);
            }
            _ => stack.push(next),
        }
    }

    let referenced: BTreeSet<usize> = (0..n)
        .filter(|&i| code[i])
        .filter_map(|i| canonical(cells[i]).and_then(|(_, a)| a))
        .map(usize::from)
        .filter(|&a| a < n)
        .collect();

    let mut lines = Vec::with_capacity(n);
    for (i, &cell) in cells.iter().enumerate() {
        let mut line = String::new();
        if referenced.contains(&i) {
            line.push_str(&format!("L{i} "));
        }
        match canonical(cell).filter(|_| code[i]) {
            Some((m, None)) => line.push_str(m.as_str()),
            Some((m, Some(a))) if (a as usize) < n => line.push_str(&format!("{m} L{a}")),
            Some((m, Some(a))) => line.push_str(&format!("{m} {a}")),
            None => line.push_str(&format!("DAT {cell}")),
        }
        lines.push(line);
    }
    lines.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = "IN\nSTO A\nIN\nADD A\nOUT\nHLT\nA DAT\n";

    #[test]
    fn sample_program_assembles() {
        let img = assemble_text(SAMPLE).unwrap();
        assert_eq!(img.cells, [901, 306, 901, 106, 902, 0, 0]);
        assert_eq!(img.symbols.get("A"), Some(&6));
        assert_eq!(img.len(), 7);
    }

    #[test]
    fn label_dat_defaults_to_zero() {
        let lines = parse("A DAT").unwrap();
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].label.as_deref(), Some("A"));
        assert_eq!(lines[0].mnemonic, Mnemonic::Dat);
        assert_eq!(lines[0].operand, None);
        assert_eq!(assemble(&lines).unwrap().cells, [0]);
    }

    #[test]
    fn empty_and_comments() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("   \n; hello\n// world\r\n").unwrap().is_empty());
        let l = parse("loop lda x // fetch\r\nx dat 5 ; five").unwrap();
        assert_eq!(l[0].comment.as_deref(), Some("fetch"));
        assert_eq!(l[0].mnemonic, Mnemonic::Lda);
        assert_eq!(assemble(&l).unwrap().cells, [501, 5]);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(parse("JMP 5"), Err(AsmError::UnknownMnemonic { line: 1, text: "JMP".into() }));
        assert_eq!(parse("HLT\nADD"), Err(AsmError::MissingOperand { line: 2, mnemonic: Mnemonic::Add }));
        assert_eq!(parse("OUT 3"), Err(AsmError::UnexpectedOperand { line: 1, mnemonic: Mnemonic::Out }));
        assert_eq!(parse("start"), Err(AsmError::LabelWithoutInstruction { line: 1, label: "start".into() }));
        assert_eq!(parse("9x ADD 1"), Err(AsmError::MalformedLabel { line: 1, label: "9x".into() }));
        assert_eq!(parse("ADD 1 2 3"), Err(AsmError::TooManyFields { line: 1 }));
        assert_eq!(parse("ADD 1 2"), Err(AsmError::TooManyFields { line: 1 }));
        assert!(matches!(parse("DAT 1000"), Err(AsmError::OperandOutOfRange { .. })));
    }

    #[test]
    fn assemble_errors() {
        assert_eq!(assemble_text("HLT").unwrap().cells, [0]);
        assert_eq!(assemble_text("ADD X"), Err(AsmError::UndefinedLabel { line: 1, label: "X".into() }));
        assert_eq!(
            assemble_text("A HLT\nA DAT"),
            Err(AsmError::DuplicateLabel { line: 2, label: "A".into(), first: 1 })
        );
        assert!(matches!(assemble_text("ADD 100"), Err(AsmError::OperandOutOfRange { max: 99, .. })));
        let big = "DAT\n".repeat(101);
        assert_eq!(assemble_text(&big), Err(AsmError::ProgramTooLarge { cells: 101 }));
        assert!(assemble_text(&"DAT\n".repeat(100)).is_ok());
    }

    #[test]
    fn aliases_match_canonical() {
        assert_eq!(assemble_text("IN\nSTO 5\nHALT").unwrap(), assemble_text("INP\nSTA 5\nHLT").unwrap());
        assert_eq!(assemble_text("in\nsto 5").unwrap().cells, [901, 305]);
    }

    #[test]
    fn disassembly_examples() {
        assert_eq!(disassemble(&ObjectImage::from_cells(vec![0]).unwrap()), "HLT");
        assert_eq!(disassemble(&ObjectImage::from_cells(vec![423]).unwrap()), "DAT 423");
        let img = ObjectImage::from_cells(vec![901, 306, 901, 106, 902, 0, 0]).unwrap();
        let text = disassemble(&img);
        assert_eq!(text, "INP\nSTA L6\nINP\nADD L6\nOUT\nHLT\nL6 DAT 0");
        assert_eq!(assemble_text(&text).unwrap().cells, img.cells);
    }

    #[test]
    fn image_text_and_json() {
        let img = assemble_text(SAMPLE).unwrap();
        let text = img.to_text();
        assert_eq!(text.lines().count(), 100);
        assert!(text.starts_with("901\n306\n"));
        let back = ObjectImage::from_text(&text).unwrap();
        assert_eq!(back.mailboxes(), img.mailboxes());
        let j = ObjectImage::from_json("{\"mailboxes\": [901, 902]}").unwrap();
        assert_eq!(j.cells, [901, 902]);
        assert!(ObjectImage::from_json("[1000]").is_err());
        assert!(ObjectImage::from_text("12\nabc").is_err());
    }
}
