use crate::model::{ModelBuilder, StageKind::*, StaticModel};

/// Guards on the dispatch triggers, indexed by opcode.
pub const OPCODE_GUARDS: [&str; 10] = [
    "opcode=0", "opcode=1", "opcode=2", "opcode=3", "opcode=4", "opcode=5", "opcode=6", "opcode=7", "opcode=8",
    "opcode=9",
];

/// Dispatch stages, indexed by opcode.
pub const DISPATCH_STAGES: [&str; 10] = [
    "dispatch.halt",
    "dispatch.add",
    "dispatch.sub",
    "dispatch.store",
    "dispatch.invalid",
    "dispatch.load",
    "dispatch.branch",
    "dispatch.branch_zero",
    "dispatch.branch_positive",
    "dispatch.io",
];

/// Stages that finish an instruction and hand control back to the fetch.
pub const NEXT_FETCH: [&str; 8] = [
    "calculator.add",
    "calculator.store_result",
    "calculator.set_negative",
    "calculator.load",
    "calculator.input",
    "output.store",
    "memory.write",
    "pc.set",
];

/// The complete static model of the machine.
///
/// Stage ids are `<machine>.<name>`. The fetch loop starts when a zero
/// enters `pc.init_transfer` and runs around `pc.read` until `dispatch.halt`.
pub fn lmc_static_model() -> StaticModel {
    let mut b = ModelBuilder::new("little-man-computer");
    b.machine("lmc", "Little Man Computer", None)
        .machine("pc", "Program counter", Some("lmc"))
        .machine("memory", "Mail system", Some("lmc"))
        .machine("control", "Instruction decoder", Some("lmc"))
        .machine("dispatch", "Opcode dispatch", Some("control"))
        .machine("calculator", "Calculator", Some("lmc"))
        .machine("input", "Input tray", Some("lmc"))
        .machine("output", "Output tray", Some("lmc"))
        .storage("pc.counter", "pc")
        .storage("memory.mailboxes", "memory")
        .storage("calculator.register", "calculator")
        .storage("input.tray", "input")
        .storage("output.tray", "output");

    // program counter
    b.stage("pc.init_transfer", Transfer, "pc", None, None)
        .stage("pc.init_receive", Receive, "pc", None, None)
        .stage("pc.init", Process, "pc", Some("pc.counter"), None)
        .stage("pc.read", Process, "pc", Some("pc.counter"), Some("circle 1"))
        .stage("pc.increment", Process, "pc", Some("pc.counter"), Some("circle 2"))
        .stage("pc.addr_release", Release, "pc", None, None)
        .stage("pc.addr_transfer", Transfer, "pc", None, Some("circle 3"))
        .stage("pc.branch_transfer", Transfer, "pc", None, Some("circle 23"))
        .stage("pc.branch_receive", Receive, "pc", None, None)
        .stage("pc.route", Process, "pc", None, None)
        .stage("pc.set", Process, "pc", Some("pc.counter"), Some("circle 1"))
        .stage("pc.route_release", Release, "pc", None, Some("circle 24"))
        .stage("pc.route_transfer", Transfer, "pc", None, None);

    // memory
    b.stage("memory.transfer", Transfer, "memory", None, Some("circle 3"))
        .stage("memory.receive", Receive, "memory", None, None)
        .stage("memory.process", Process, "memory", Some("memory.mailboxes"), Some("circle 4"))
        .stage("memory.instr_release", Release, "memory", None, Some("circle 5"))
        .stage("memory.instr_transfer", Transfer, "memory", None, None)
        .stage("memory.data_release", Release, "memory", None, Some("circle 11"))
        .stage("memory.data_transfer", Transfer, "memory", None, None)
        .stage("memory.load_release", Release, "memory", None, Some("circle 25"))
        .stage("memory.load_transfer", Transfer, "memory", None, None)
        .stage("memory.store_transfer", Transfer, "memory", None, Some("circle 44"))
        .stage("memory.store_receive", Receive, "memory", None, None)
        .stage("memory.store_process", Process, "memory", None, Some("circle 46"))
        .stage("memory.write", Process, "memory", Some("memory.mailboxes"), Some("circle 47"));

    // instruction decoding
    b.stage("control.transfer", Transfer, "control", None, None)
        .stage("control.receive", Receive, "control", None, None)
        .stage("control.decode", Process, "control", None, Some("circle 6"))
        .stage("control.opcode", Process, "control", None, Some("circle 7"))
        .stage("control.address", Process, "control", None, Some("circle 8"))
        .stage("control.addr_mem_release", Release, "control", None, Some("circle 10"))
        .stage("control.addr_mem_transfer", Transfer, "control", None, None)
        .stage("control.addr_pc_release", Release, "control", None, Some("circle 22"))
        .stage("control.addr_pc_transfer", Transfer, "control", None, Some("circle 23"))
        .stage("control.addr_store_release", Release, "control", None, Some("circle 43"))
        .stage("control.addr_store_transfer", Transfer, "control", None, None)
        .stage("control.io_select", Process, "control", None, Some("circle 34"));
    for (op, s) in DISPATCH_STAGES.iter().enumerate() {
        b.stage(s, Process, "dispatch", None, Some(&format!("circle 9 (opcode {op})")));
    }
    b.stage("dispatch.input", Process, "dispatch", None, Some("circle 35")).stage(
        "dispatch.output",
        Process,
        "dispatch",
        None,
        Some("circle 39"),
    );

    // calculator
    let reg = Some("calculator.register");
    b.stage("calculator.in_transfer", Transfer, "calculator", None, Some("circle 12"))
        .stage("calculator.in_receive", Receive, "calculator", None, None)
        .stage("calculator.alu", Process, "calculator", reg, None)
        .stage("calculator.add", Process, "calculator", reg, Some("circle 13"))
        .stage("calculator.sub", Process, "calculator", reg, Some("circle 17"))
        .stage("calculator.examine", Process, "calculator", None, Some("circle 18"))
        .stage("calculator.store_result", Process, "calculator", reg, Some("circle 19"))
        .stage("calculator.set_negative", Process, "calculator", reg, Some("circle 20"))
        .stage("calculator.load_transfer", Transfer, "calculator", None, Some("circle 25"))
        .stage("calculator.load_receive", Receive, "calculator", None, None)
        .stage("calculator.load", Process, "calculator", reg, Some("circle 26"))
        .stage("calculator.store_release", Release, "calculator", reg, Some("circle 45"))
        .stage("calculator.store_transfer", Transfer, "calculator", None, None)
        .stage("calculator.check_zero", Process, "calculator", reg, Some("circle 28"))
        .stage("calculator.zero", Process, "calculator", None, Some("circle 29"))
        .stage("calculator.check_positive", Process, "calculator", reg, Some("circle 31"))
        .stage("calculator.positive", Process, "calculator", None, Some("circle 32"))
        .stage("calculator.input_transfer", Transfer, "calculator", None, Some("circle 38"))
        .stage("calculator.input_receive", Receive, "calculator", None, None)
        .stage("calculator.input", Process, "calculator", reg, Some("circle 38"))
        .stage("calculator.output_release", Release, "calculator", reg, Some("circle 40"))
        .stage("calculator.output_transfer", Transfer, "calculator", None, Some("circle 41"));

    // trays
    b.stage("input.take", Process, "input", Some("input.tray"), Some("circle 36"))
        .stage("input.release", Release, "input", None, Some("circle 37"))
        .stage("input.transfer", Transfer, "input", None, Some("circle 37"))
        .stage("output.transfer", Transfer, "output", None, Some("circle 42"))
        .stage("output.receive", Receive, "output", None, None)
        .stage("output.store", Process, "output", Some("output.tray"), Some("circle 42"));

    b.chain(&["pc.init_transfer", "pc.init_receive", "pc.init"])
        .chain(&["pc.read", "pc.addr_release", "pc.addr_transfer"])
        .flow("pc.addr_transfer", "memory.transfer", Some("circle 3"))
        .chain(&["pc.branch_transfer", "pc.branch_receive", "pc.route", "pc.set"])
        .chain(&["pc.route", "pc.route_release", "pc.route_transfer", "memory.transfer"])
        .chain(&["memory.transfer", "memory.receive", "memory.process"])
        .chain(&["memory.process", "memory.instr_release", "memory.instr_transfer"])
        .flow("memory.instr_transfer", "control.transfer", Some("circle 5"))
        .chain(&["memory.process", "memory.data_release", "memory.data_transfer"])
        .flow("memory.data_transfer", "calculator.in_transfer", Some("circle 12"))
        .chain(&["memory.process", "memory.load_release", "memory.load_transfer"])
        .flow("memory.load_transfer", "calculator.load_transfer", Some("circle 25"))
        .chain(&["memory.store_transfer", "memory.store_receive", "memory.store_process"])
        .chain(&["control.transfer", "control.receive", "control.decode", "control.opcode"])
        .chain(&["control.decode", "control.address", "control.io_select"])
        .chain(&["control.address", "control.addr_mem_release", "control.addr_mem_transfer"])
        .flow("control.addr_mem_transfer", "memory.transfer", Some("circle 10"))
        .chain(&["control.address", "control.addr_pc_release", "control.addr_pc_transfer"])
        .flow("control.addr_pc_transfer", "pc.branch_transfer", Some("circle 23"))
        .chain(&["control.address", "control.addr_store_release", "control.addr_store_transfer"])
        .flow("control.addr_store_transfer", "memory.store_transfer", Some("circle 44"))
        .chain(&["calculator.in_transfer", "calculator.in_receive", "calculator.alu", "calculator.add"])
        .chain(&["calculator.alu", "calculator.sub", "calculator.examine"])
        .chain(&["calculator.load_transfer", "calculator.load_receive", "calculator.load"])
        .chain(&["calculator.store_release", "calculator.store_transfer"])
        .flow("calculator.store_transfer", "memory.store_transfer", Some("circle 44"))
        .chain(&["calculator.input_transfer", "calculator.input_receive", "calculator.input"])
        .chain(&["calculator.output_release", "calculator.output_transfer"])
        .flow("calculator.output_transfer", "output.transfer", Some("circle 42"))
        .chain(&["output.transfer", "output.receive", "output.store"])
        .chain(&["input.take", "input.release", "input.transfer"])
        .flow("input.transfer", "calculator.input_transfer", Some("circle 38"));

    b.trigger("pc.init", "pc.read", None, None).trigger("pc.read", "pc.increment", Some("fetching"), Some("circle 2"));
    for (g, s) in OPCODE_GUARDS.iter().zip(DISPATCH_STAGES) {
        b.trigger("control.opcode", s, Some(g), Some("circle 9"));
    }
    b.trigger("dispatch.store", "calculator.store_release", None, Some("circle 45"))
        .trigger("dispatch.branch_zero", "calculator.check_zero", None, Some("circle 28"))
        .trigger("dispatch.branch_positive", "calculator.check_positive", None, Some("circle 31"))
        .trigger("control.io_select", "dispatch.input", Some("addr=01"), Some("circle 35"))
        .trigger("control.io_select", "dispatch.output", Some("addr=02"), Some("circle 39"))
        .trigger("dispatch.input", "input.take", None, Some("circle 36"))
        .trigger("dispatch.output", "calculator.output_release", None, Some("circle 40"))
        .trigger("calculator.examine", "calculator.store_result", Some("d≥0"), Some("circle 19"))
        .trigger("calculator.examine", "calculator.set_negative", Some("d<0"), Some("circle 20"))
        .trigger("calculator.check_zero", "calculator.zero", Some("value=0"), Some("circle 29"))
        .trigger("calculator.check_zero", "pc.read", Some("value≠0"), None)
        .trigger("calculator.check_positive", "calculator.positive", Some("flag clear"), Some("circle 32"))
        .trigger("calculator.check_positive", "pc.read", Some("flag set"), None)
        .trigger("memory.store_process", "memory.write", Some("store ready"), Some("circle 46"));
    for s in NEXT_FETCH {
        b.trigger(s, "pc.read", None, None);
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simplify, validate};

    #[test]
    fn model_is_valid() {
        let m = lmc_static_model();
        assert_eq!(validate(&m), vec![]);
        assert!(m.machines.iter().any(|x| x.parent.as_deref() == Some("control")));
        let s = simplify(&m).unwrap();
        assert!(s.stages.iter().all(|st| st.kind.is_active()));
    }
}
