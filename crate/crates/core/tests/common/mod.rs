#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use tm_lmc::asm::{assemble_text, ObjectImage};
use tm_lmc::model::{ModelBuilder, StageKind, StaticModel};

/// A program from the shipped suite with its declared input and result.
pub struct SuiteProgram {
    pub name: String,
    pub source: String,
    pub input: Vec<u16>,
    pub output: Option<Vec<u16>>,
    pub fault: Option<String>,
}

impl SuiteProgram {
    pub fn image(&self) -> ObjectImage {
        assemble_text(&self.source).unwrap_or_else(|e| panic!("{}: {e}", self.name))
    }
}

fn numbers(s: &str) -> Vec<u16> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(|t| t.parse().unwrap()).collect()
}

pub fn programs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("programs")
}

pub fn suite() -> Vec<SuiteProgram> {
    let mut paths: Vec<_> = std::fs::read_dir(programs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "asm"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let source = std::fs::read_to_string(&p).unwrap();
            let mut prog = SuiteProgram {
                name: p.file_stem().unwrap().to_string_lossy().into_owned(),
                input: Vec::new(),
                output: None,
                fault: None,
                source: source.clone(),
            };
            for line in source.lines() {
                let Some(h) = line.strip_prefix(';') else { continue };
                let h = h.trim();
                if let Some(v) = h.strip_prefix("input:") {
                    prog.input = numbers(v);
                } else if let Some(v) = h.strip_prefix("output:") {
                    prog.output = Some(numbers(v));
                } else if let Some(v) = h.strip_prefix("fault:") {
                    prog.fault = Some(v.trim().to_string());
                }
            }
            prog
        })
        .collect()
}

/// Up to 20 instructions drawn from the valid opcodes, followed by a few
/// data cells; addresses stay inside the program so loops and stores hit
/// real code and data.
pub fn random_program(rng: &mut impl Rng) -> Vec<u16> {
    let n = rng.gen_range(1..=20);
    let data = rng.gen_range(0..=4);
    let len = n + data;
    let mut cells = Vec::with_capacity(len);
    for _ in 0..n {
        let addr = rng.gen_range(0..len) as u16;
        let cell = match rng.gen_range(0..10) {
            0 => 0,
            1 => 100 + addr,
            2 => 200 + addr,
            3 => 300 + addr,
            4 => 500 + addr,
            5 => 600 + addr,
            6 => 700 + addr,
            7 => 800 + addr,
            8 => 901,
            _ => 902,
        };
        cells.push(cell);
    }
    for _ in 0..data {
        cells.push(rng.gen_range(0..=999));
    }
    cells
}

pub fn random_input(rng: &mut impl Rng) -> Vec<u16> {
    let n = rng.gen_range(0..=6);
    (0..n).map(|_| rng.gen_range(0..=999)).collect()
}

/// Any cell values at all; the disassembler must cope with data too.
pub fn random_image(rng: &mut impl Rng) -> Vec<u16> {
    let n = rng.gen_range(1..=100);
    (0..n).map(|_| rng.gen_range(0..=999)).collect()
}

/// A random model that passes validation: legal flows only, at most one
/// outgoing flow from release and transfer stages, triggers into
/// create/process/release stages.
pub fn random_model(rng: &mut impl Rng) -> StaticModel {
    let mut b = ModelBuilder::new("random");
    let machines = rng.gen_range(1..=3);
    let mut stages: Vec<(String, StageKind, usize)> = Vec::new();
    for m in 0..machines {
        let parent = if m > 0 && rng.gen_bool(0.5) { Some("m0") } else { None };
        b.machine(&format!("m{m}"), &format!("Machine {m}"), parent);
        if rng.gen_bool(0.5) {
            b.storage(&format!("m{m}.db"), &format!("m{m}"));
        }
        for i in 0..rng.gen_range(1..=6) {
            let kind = *StageKind::ALL.choose(rng).unwrap();
            stages.push((format!("m{m}.s{i}"), kind, m));
        }
    }
    for (id, kind, m) in &stages {
        b.stage(id, *kind, &format!("m{m}"), None, None);
    }
    let mut out_count = vec![0usize; stages.len()];
    let mut seen = std::collections::HashSet::new();
    for _ in 0..stages.len() * 2 {
        let a = rng.gen_range(0..stages.len());
        let z = rng.gen_range(0..stages.len());
        let (from, to) = (&stages[a], &stages[z]);
        let limited = matches!(from.1, StageKind::Release | StageKind::Transfer);
        if a == z || (limited && out_count[a] > 0) || !seen.insert((a, z)) {
            continue;
        }
        if from.1.may_flow_to(to.1, from.2 == to.2) {
            b.flow(&from.0, &to.0, None);
            out_count[a] += 1;
        }
    }
    let mut triggers = std::collections::HashSet::new();
    for _ in 0..rng.gen_range(0..=3) {
        let a = &stages[rng.gen_range(0..stages.len())];
        let z = &stages[rng.gen_range(0..stages.len())];
        if a.0 != z.0 && z.1.may_be_triggered() && triggers.insert((&a.0, &z.0)) {
            b.trigger(&a.0, &z.0, None, None);
        }
    }
    b.build()
}
