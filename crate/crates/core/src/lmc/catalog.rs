//! Event catalog and behavioral graph of the LMC model.
//!
//! The graph ships as `data/lmc_behavior.json`. It was rebuilt from the
//! event sentences and the fetch/execute control flow:
//!
//! | from | to | why |
//! |------|----|-----|
//! | E1 | E2 | zero input initializes the counter |
//! | E2, E3, E4, E5 | E3..E6 | fetch: increment, address to memory, instruction out, decode |
//! | E6 | E7..E16 | one dispatch per opcode |
//! | E8, E9 | E17 | ADD/SUB send the address to memory |
//! | E17 | E18, E19 | operand reaches the calculator |
//! | E19 | E20, E21 | subtraction result is examined |
//! | E10 | E22 | STA sends the calculator value... |
//! | E22 | E23 | ...then the address... |
//! | E23 | E24 | ...and memory stores it |
//! | E12, E13 | E26 | LDA/BRA send the address to the counter |
//! | E26 | E25 | LDA continues to memory and the calculator |
//! | E14 | E27 | BRZ with a zero value |
//! | E15 | E28 | BRP with the flag clear |
//! | E27, E28 | E26 | taken branch |
//! | E16 | E29, E30 | input or output |
//! | E29 | E31 | input reaches the calculator |
//! | E30 | E32 | calculator value reaches the output tray |
//! | E11, E14, E15, E18, E20, E21, E24, E25, E26, E31, E32 | E3 | next fetch |
//!
//! E7 (halt) has no successor. E11 never completes in practice because
//! opcode 4 faults, but it keeps an edge back to the fetch.

use crate::events::{BehavioralModel, EventDef};

use super::model::{DISPATCH_STAGES, OPCODE_GUARDS};

const BEHAVIOR_JSON: &str = include_str!("../../data/lmc_behavior.json");

const OPCODE_EVENTS: [(&str, &str); 10] = [
    ("halt", "The opcode is processed and found to be 0."),
    ("add", "The opcode is processed and found to be 1 (add)."),
    ("subtract", "The opcode is processed and found to be 2 (subtract)."),
    ("store", "The opcode is processed and found to be 3 (store)."),
    ("opcode 4", "The opcode is processed and found to be 4."),
    ("load", "The opcode is processed and found to be 5 (load)."),
    ("branch", "The opcode is processed and found to be 6 (branch)."),
    ("branch on zero", "The opcode is processed and found to be 7 (branch on 0)."),
    ("branch on positive", "The opcode is processed and found to be 8 (branch on positive)."),
    ("input/output", "The opcode is processed and found to be 9 (input/output)."),
];

fn def(id: &str, name: &str, region: &[&str], guard: Option<&str>, doc: &str) -> EventDef {
    EventDef {
        id: id.into(),
        name: name.into(),
        region: region.iter().map(|s| s.to_string()).collect(),
        guard: guard.map(Into::into),
        doc: doc.into(),
    }
}

/// The 32 LMC events, E1 through E32.
pub fn lmc_event_defs() -> Vec<EventDef> {
    let mut v = vec![
        def(
            "E1",
            "zero input",
            &["pc.init_transfer", "pc.init_receive"],
            None,
            "The value zero is input from the outside.",
        ),
        def("E2", "counter initialized", &["pc.init"], None, "The program counter is initialized to a new value."),
        def(
            "E3",
            "counter incremented",
            &["pc.increment", "pc.addr_release"],
            None,
            "The program counter is incremented.",
        ),
        def(
            "E4",
            "address to memory",
            &["pc.addr_transfer", "pc.addr_transfer->memory.transfer"],
            None,
            "The program counter value flows to the memory system.",
        ),
        def(
            "E5",
            "instruction retrieved",
            &["memory.process->memory.instr_release", "memory.instr_transfer"],
            None,
            "The content of memory location (instruction) that correspond to the program counter is retrieved and sent to be processed.",
        ),
        def(
            "E6",
            "instruction decoded",
            &["control.decode"],
            None,
            "The instruction processing produces the opcode and the address.",
        ),
    ];
    for (op, ((name, doc), stage)) in OPCODE_EVENTS.iter().zip(DISPATCH_STAGES).enumerate() {
        let id = format!("E{}", op + 7);
        v.push(def(&id, name, &["control.opcode", stage], Some(OPCODE_GUARDS[op]), doc));
    }
    v.extend([
        def(
            "E17",
            "operand address to memory",
            &["control.addr_mem_release", "control.addr_mem_transfer"],
            None,
            "The address is sent to the mail system.",
        ),
        def(
            "E18",
            "operand added",
            &["memory.data_release", "calculator.add"],
            None,
            "The value of the mailbox location is retrieved and sent to the calculator where it is added to the calculator value.",
        ),
        def(
            "E19",
            "operand subtracted",
            &["memory.data_release", "calculator.sub"],
            None,
            "The value of the mailbox location is retrieved and sent to the calculator where it is subtracted from the calculator value.",
        ),
        def(
            "E20",
            "difference stored",
            &["calculator.examine", "calculator.store_result"],
            Some("d≥0"),
            "The result of subtraction is positive; hence, the value is stored in the calculator.",
        ),
        def(
            "E21",
            "negative flag set",
            &["calculator.examine", "calculator.set_negative"],
            Some("d<0"),
            "The result of subtraction is negative; hence, the negative flag is set ON and the value is stored in the calculator.",
        ),
        def(
            "E22",
            "value to memory",
            &["calculator.store_release", "calculator.store_transfer"],
            None,
            "The value of the calculator is sent to the mailbox system.",
        ),
        def(
            "E23",
            "store address to memory",
            &["control.addr_store_release", "control.addr_store_transfer"],
            None,
            "The address is sent to the mail system.",
        ),
        def(
            "E24",
            "value stored",
            &["memory.store_process", "memory.write"],
            Some("store ready"),
            "The data incoming to the mailbox system (E22) are stored in the memory according to the given address (E23).",
        ),
        def(
            "E25",
            "value loaded",
            &["pc.route_release", "memory.load_release", "calculator.load"],
            None,
            "The address is sent to the memory system and the value of the location is loaded in the calculator.",
        ),
        def(
            "E26",
            "address to counter",
            &["control.addr_pc_transfer", "pc.branch_receive"],
            None,
            "The address is sent to the program counter.",
        ),
        def(
            "E27",
            "value is zero",
            &["calculator.check_zero", "calculator.zero"],
            Some("value=0"),
            "The calculator value is processed and found to be 0.",
        ),
        def(
            "E28",
            "value is positive",
            &["calculator.check_positive", "calculator.positive"],
            Some("flag clear"),
            "The calculator value is processed and found to be positive.",
        ),
        def("E29", "input selected", &["control.io_select", "dispatch.input"], Some("addr=01"), "The address is 01 (input)."),
        def("E30", "output selected", &["control.io_select", "dispatch.output"], Some("addr=02"), "The address is 02 (output)."),
        def(
            "E31",
            "input moved",
            &["input.take", "calculator.input"],
            None,
            "Move the top of the input tray to the calculator.",
        ),
        def(
            "E32",
            "output moved",
            &["calculator.output_release", "output.store"],
            None,
            "Move the value of the calculator to the output tray.",
        ),
    ]);
    v
}

/// The allowed event successions, loaded from the shipped data file.
pub fn lmc_behavioral_model() -> BehavioralModel {
    serde_json::from_str(BEHAVIOR_JSON).expect("shipped behavioral model is valid JSON")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::check_defs;
    use crate::lmc::lmc_static_model;

    #[test]
    fn catalog_shape() {
        let defs = lmc_event_defs();
        assert_eq!(defs.len(), 32);
        for (i, d) in defs.iter().enumerate() {
            assert_eq!(d.id, format!("E{}", i + 1));
        }
        assert!(defs[20].doc.contains("negative flag is set ON"));
        check_defs(&lmc_static_model(), &defs).unwrap();
    }

    #[test]
    fn behavior_shape() {
        let b = lmc_behavioral_model();
        assert_eq!(b.nodes.len(), 32);
        assert!(b.undeclared().is_empty());
        assert_eq!(b.start, vec!["E1"]);
        assert!(b.has_edge("E1", "E2"));
        assert!(!b.has_edge("E1", "E3"));
        assert_eq!(b.successors("E7").count(), 0);
        for n in &b.nodes {
            assert!(n == "E1" || b.edges.iter().any(|(_, t)| t == n), "{n} unreachable");
        }
    }
}
