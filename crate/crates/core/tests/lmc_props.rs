mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tm_lmc::asm::ObjectImage;
use tm_lmc::lmc::{decode, reference_step, run_reference, tm_run, InputMode, LmcError, LmcState, RunOutcome};

fn state(cells: Vec<u16>, pc: u8, value: u16, flag: bool) -> LmcState {
    let mut s = LmcState::load(&ObjectImage::from_cells(cells).unwrap());
    s.pc = pc;
    s.value = value;
    s.flag = flag;
    s
}

fn in_range(s: &LmcState) -> bool {
    s.pc < 100 && s.value <= 999 && s.mailboxes.cells().iter().all(|&c| c <= 999)
}

proptest! {
    #[test]
    fn decode_splits_digits(cell in 0u16..=999) {
        let i = decode(cell);
        prop_assert_eq!(i.opcode as u16 * 100 + i.address as u16, cell);
        prop_assert!(i.opcode <= 9 && i.address <= 99);
    }

    #[test]
    fn steps_stay_in_range(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = ObjectImage::from_cells(common::random_image(&mut rng)).unwrap();
        let init = LmcState::load(&img).with_input(common::random_input(&mut rng));
        let run = run_reference(init, 300, InputMode::Interactive);
        for s in run.snapshots.iter().chain([&run.final_state]) {
            prop_assert!(in_range(s));
            prop_assert!(!(s.halted && s.awaiting_input));
            prop_assert_eq!(s.check_invariants(), Ok(()));
        }
    }

    #[test]
    fn sub_then_add_restores(value in 0u16..=999, operand in 0u16..=999) {
        prop_assume!(value >= operand);
        let s = state(vec![210, 110, 0, 0, 0, 0, 0, 0, 0, 0, operand], 0, value, false);
        let after = reference_step(&reference_step(&s).unwrap()).unwrap();
        prop_assert_eq!(after.value, value);
        prop_assert!(!after.flag);
    }

    #[test]
    fn negative_sub_sets_flag(value in 0u16..=999, operand in 0u16..=999) {
        let s = state(vec![201, operand], 0, value, false);
        let after = reference_step(&s).unwrap();
        prop_assert_eq!(after.flag, value < operand);
        prop_assert_eq!(after.value, (value + 1000 - operand) % 1000);
    }

    #[test]
    fn taken_branches_respect_their_condition(
        op in prop_oneof![Just(7u16), Just(8u16)],
        target in 2u8..100,
        value in prop_oneof![Just(0u16), 1u16..=999],
        flag in any::<bool>(),
    ) {
        let s = state(vec![op * 100 + target as u16], 0, value, flag);
        let after = reference_step(&s).unwrap();
        let taken = after.pc == target;
        prop_assert!(taken || after.pc == 1);
        if op == 7 {
            prop_assert_eq!(taken, value == 0);
        } else {
            prop_assert_eq!(taken, !flag);
        }
    }

    #[test]
    fn input_starvation_is_reported_once(mode_interactive in any::<bool>()) {
        let s = state(vec![901], 0, 0, false);
        let mode = if mode_interactive { InputMode::Interactive } else { InputMode::Batch };
        let run = run_reference(s, 10, mode);
        if mode_interactive {
            prop_assert_eq!(run.outcome, RunOutcome::AwaitingInput);
            prop_assert!(run.final_state.awaiting_input);
        } else {
            prop_assert_eq!(run.outcome, RunOutcome::Faulted { error: LmcError::InputExhausted { pc: 0 } });
            prop_assert!(!run.final_state.awaiting_input);
        }
    }
}

#[test]
fn engines_agree_on_the_suite_in_both_modes() {
    for prog in common::suite() {
        for mode in [InputMode::Batch, InputMode::Interactive] {
            let init = LmcState::load(&prog.image()).with_input(prog.input.clone());
            let r = run_reference(init.clone(), 10_000, mode);
            let t = tm_run(init, 10_000, mode);
            assert_eq!(t.snapshots, r.snapshots, "{} {mode:?}", prog.name);
            assert_eq!(t.final_state, r.final_state, "{} {mode:?}", prog.name);
            assert_eq!(t.outcome, r.outcome, "{} {mode:?}", prog.name);
            match (&prog.output, &prog.fault) {
                (Some(out), _) => assert_eq!(&r.final_state.output, out, "{}", prog.name),
                (None, Some(f)) => match &r.outcome {
                    RunOutcome::Faulted { error } => assert!(error.to_string().contains(f.as_str()), "{}", prog.name),
                    other => panic!("{}: expected fault, got {other:?}", prog.name),
                },
                (None, None) => panic!("{} declares neither output nor fault", prog.name),
            }
        }
    }
}

#[test]
fn snapshot_json_shape() {
    let s = state(vec![901, 0], 0, 5, false).with_input([3]);
    let v = serde_json::to_value(&s).unwrap();
    for key in ["pc", "value", "flag", "halted", "awaiting_input", "mailboxes", "input", "output"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["mailboxes"].as_array().unwrap().len(), 100);
    let back: LmcState = serde_json::from_value(v).unwrap();
    assert_eq!(back, s);
}
