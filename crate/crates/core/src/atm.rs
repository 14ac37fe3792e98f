//! A bank withdrawal: user, ATM and bank exchanging a card, a PIN, an
//! amount and the bank's answer. Small enough to trace by hand, so it is
//! the engine's second fixture next to the LMC.

use std::sync::Arc;

use crate::events::{detect_events, BehavioralModel, EventDef, EventOccurrence};
use crate::exec::{ActionTrace, ExecError, ExecState, HostBinding, HostFault, Outcome};
use crate::model::{ModelBuilder, StageKind::*, StaticModel, Thing};

/// Static model of the withdrawal. Stage ids are `<machine>.<name>`.
pub fn atm_static_model() -> StaticModel {
    let mut b = ModelBuilder::new("atm-withdrawal");
    b.machine("user", "User", None)
        .machine("atm", "ATM", None)
        .machine("bank", "Bank", None)
        .storage("atm.card_slot", "atm")
        .storage("bank.accounts", "bank");

    let stages = [
        ("user.card_create", Create, "user", None, Some("circle 1")),
        ("user.card_release", Release, "user", None, None),
        ("user.card_transfer", Transfer, "user", None, None),
        ("atm.card_transfer", Transfer, "atm", None, Some("circle 2")),
        ("atm.card_receive", Receive, "atm", None, Some("circle 3")),
        ("atm.card_process", Process, "atm", Some("atm.card_slot"), Some("circle 4")),
        ("atm.pin_request_create", Create, "atm", None, Some("circle 6")),
        ("atm.pin_request_release", Release, "atm", None, None),
        ("atm.pin_request_transfer", Transfer, "atm", None, Some("circle 7")),
        ("user.request_transfer", Transfer, "user", None, None),
        ("user.request_receive", Receive, "user", None, None),
        ("user.request_process", Process, "user", None, None),
        ("user.pin_create", Create, "user", None, Some("circle 8")),
        ("user.pin_release", Release, "user", None, None),
        ("user.pin_transfer", Transfer, "user", None, None),
        ("atm.pin_in", Transfer, "atm", None, Some("circle 9")),
        ("atm.pin_receive", Receive, "atm", None, None),
        ("atm.pin_process", Process, "atm", None, Some("circle 10")),
        ("atm.pin_release", Release, "atm", None, None),
        ("atm.pin_out", Transfer, "atm", None, Some("circle 11")),
        ("bank.pin_transfer", Transfer, "bank", None, None),
        ("bank.pin_receive", Receive, "bank", None, None),
        ("bank.pin_process", Process, "bank", Some("bank.accounts"), Some("circle 12")),
        ("bank.ok_create", Create, "bank", None, Some("circle 13")),
        ("bank.ok_release", Release, "bank", None, None),
        ("bank.ok_transfer", Transfer, "bank", None, None),
        ("atm.ok_transfer", Transfer, "atm", None, Some("circle 14")),
        ("atm.ok_receive", Receive, "atm", None, None),
        ("atm.ok_process", Process, "atm", None, Some("circle 15")),
        ("atm.amount_request_create", Create, "atm", None, Some("circle 16")),
        ("atm.amount_request_release", Release, "atm", None, None),
        ("atm.amount_request_transfer", Transfer, "atm", None, Some("circle 17")),
        ("user.amount_create", Create, "user", None, Some("circle 18")),
        ("user.amount_release", Release, "user", None, None),
        ("user.amount_transfer", Transfer, "user", None, None),
        ("atm.amount_in", Transfer, "atm", None, Some("circle 19")),
        ("atm.amount_receive", Receive, "atm", None, None),
        ("atm.amount_process", Process, "atm", None, None),
        ("atm.amount_release", Release, "atm", None, None),
        ("atm.amount_out", Transfer, "atm", None, Some("circle 20")),
        ("bank.amount_transfer", Transfer, "bank", None, None),
        ("bank.amount_receive", Receive, "bank", None, Some("circle 21")),
        ("bank.compare", Process, "bank", Some("bank.accounts"), Some("circle 22")),
        ("bank.response_create", Create, "bank", None, Some("circle 24")),
        ("bank.response_release", Release, "bank", None, None),
        ("bank.response_transfer", Transfer, "bank", None, None),
        ("atm.response_transfer", Transfer, "atm", None, Some("circle 25")),
        ("atm.response_receive", Receive, "atm", None, None),
        ("atm.response_process", Process, "atm", None, None),
        ("atm.reject", Process, "atm", None, Some("circle 26")),
        ("atm.card_return", Release, "atm", Some("atm.card_slot"), Some("circle 27")),
        ("atm.card_out", Transfer, "atm", None, None),
        ("user.card_in", Transfer, "user", None, None),
        ("user.card_receive", Receive, "user", None, None),
        ("atm.cash_create", Create, "atm", None, Some("circle 29")),
        ("atm.cash_release", Release, "atm", None, None),
        ("atm.cash_transfer", Transfer, "atm", None, Some("circle 30")),
        ("user.cash_transfer", Transfer, "user", None, None),
        ("user.cash_receive", Receive, "user", None, None),
    ];
    for (id, kind, owner, storage, anchor) in stages {
        b.stage(id, kind, owner, storage, anchor);
    }

    b.chain(&["user.card_create", "user.card_release", "user.card_transfer", "atm.card_transfer"])
        .chain(&["atm.card_transfer", "atm.card_receive", "atm.card_process"])
        .chain(&["atm.pin_request_create", "atm.pin_request_release", "atm.pin_request_transfer"])
        .chain(&["atm.pin_request_transfer", "user.request_transfer"])
        .chain(&["user.request_transfer", "user.request_receive", "user.request_process"])
        .chain(&["user.pin_create", "user.pin_release", "user.pin_transfer", "atm.pin_in"])
        .chain(&["atm.pin_in", "atm.pin_receive", "atm.pin_process", "atm.pin_release", "atm.pin_out"])
        .chain(&["atm.pin_out", "bank.pin_transfer", "bank.pin_receive", "bank.pin_process"])
        .chain(&["bank.ok_create", "bank.ok_release", "bank.ok_transfer", "atm.ok_transfer"])
        .chain(&["atm.ok_transfer", "atm.ok_receive", "atm.ok_process"])
        .chain(&["atm.amount_request_create", "atm.amount_request_release", "atm.amount_request_transfer"])
        .chain(&["atm.amount_request_transfer", "user.request_transfer"])
        .chain(&["user.amount_create", "user.amount_release", "user.amount_transfer", "atm.amount_in"])
        .chain(&["atm.amount_in", "atm.amount_receive", "atm.amount_process", "atm.amount_release"])
        .chain(&["atm.amount_release", "atm.amount_out", "bank.amount_transfer"])
        .chain(&["bank.amount_transfer", "bank.amount_receive", "bank.compare"])
        .chain(&["bank.response_create", "bank.response_release", "bank.response_transfer"])
        .chain(&["bank.response_transfer", "atm.response_transfer", "atm.response_receive"])
        .chain(&["atm.response_receive", "atm.response_process"])
        .chain(&["atm.card_return", "atm.card_out", "user.card_in", "user.card_receive"])
        .chain(&["atm.cash_create", "atm.cash_release", "atm.cash_transfer", "user.cash_transfer"])
        .chain(&["user.cash_transfer", "user.cash_receive"]);

    b.trigger("atm.card_process", "atm.pin_request_create", None, Some("circle 5"))
        .trigger("user.request_process", "user.pin_create", Some("asks for PIN"), None)
        .trigger("bank.pin_process", "bank.ok_create", None, Some("circle 13"))
        .trigger("atm.ok_process", "atm.amount_request_create", None, Some("circle 16"))
        .trigger("user.request_process", "user.amount_create", Some("asks for amount"), None)
        .trigger("bank.compare", "bank.response_create", None, Some("circle 24"))
        .trigger("atm.response_process", "atm.reject", Some("insufficient"), Some("circle 26"))
        .trigger("atm.reject", "atm.card_return", None, Some("circle 27"))
        .trigger("atm.response_process", "atm.cash_create", Some("sufficient"), Some("circle 28"))
        .trigger("atm.cash_create", "atm.card_return", None, Some("circle 31"));
    b.build()
}

/// The user's side of the conversation and the account it draws on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtmScript {
    pub card: i64,
    pub pin: i64,
    pub amount: i64,
    pub balance: i64,
}

/// Observable results of a withdrawal.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AtmDomain {
    pub script: Option<AtmScript>,
    pub cash_dispensed: Option<i64>,
    pub card_returned: bool,
    /// The bank's answer, kept between comparing and responding.
    pub funds_sufficient: Option<bool>,
}

impl AtmDomain {
    fn script(&self) -> Result<&AtmScript, HostFault> {
        self.script.as_ref().ok_or_else(|| HostFault("no user script".into()))
    }
}

fn is_text(t: &Thing, s: &str) -> bool {
    matches!(&t.payload, crate::model::Payload::Text(x) if x == s)
}

pub fn atm_host_binding() -> HostBinding<AtmDomain> {
    HostBinding::new()
        .guard("asks for PIN", |_: &AtmDomain, t| is_text(t, "PIN?"))
        .guard("asks for amount", |_, t| is_text(t, "amount?"))
        .guard("sufficient", |_, t| is_text(t, "sufficient"))
        .guard("insufficient", |_, t| is_text(t, "insufficient"))
        .effect("atm.card_process", |_, ctx| {
            if let Some(slot) = ctx.storage.as_deref_mut() {
                slot.push(ctx.thing.clone());
            }
            Ok(Outcome::consume())
        })
        .effect("atm.pin_request_create", |_, ctx| Ok(Outcome::consume().emit(ctx.new_thing("request", "PIN?"))))
        .effect("atm.amount_request_create", |_, ctx| Ok(Outcome::consume().emit(ctx.new_thing("request", "amount?"))))
        .effect("user.pin_create", |d, ctx| {
            let pin = d.script()?.pin;
            Ok(Outcome::consume().emit(ctx.new_thing("pin", pin)))
        })
        .effect("user.amount_create", |d, ctx| {
            let amount = d.script()?.amount;
            Ok(Outcome::consume().emit(ctx.new_thing("amount", amount)))
        })
        .effect("user.request_process", |_, _| Ok(Outcome::consume()))
        .effect("bank.pin_process", |_, _| Ok(Outcome::consume()))
        .effect("bank.ok_create", |_, ctx| Ok(Outcome::consume().emit(ctx.new_thing("message", "OK"))))
        .effect("atm.ok_process", |_, _| Ok(Outcome::consume()))
        .effect("bank.compare", |d, ctx| {
            let s = d.script()?;
            d.funds_sufficient = Some(ctx.thing.int().unwrap_or(0) <= s.balance);
            Ok(Outcome::consume())
        })
        .effect("bank.response_create", |d, ctx| {
            let verdict = if d.funds_sufficient == Some(true) { "sufficient" } else { "insufficient" };
            Ok(Outcome::consume().emit(ctx.new_thing("response", verdict)))
        })
        .effect("atm.response_process", |_, _| Ok(Outcome::consume()))
        .effect("atm.reject", |_, _| Ok(Outcome::consume()))
        .effect("atm.cash_create", |d, ctx| {
            let amount = d.script()?.amount;
            Ok(Outcome::consume().emit(ctx.new_thing("cash", amount)))
        })
        .effect("atm.card_return", |_, ctx| {
            let card = ctx.storage.as_deref_mut().and_then(Vec::pop);
            Ok(card.map_or_else(Outcome::consume, Outcome::pass))
        })
        .effect("user.card_receive", |d, _| {
            d.card_returned = true;
            Ok(Outcome::consume())
        })
        .effect("user.cash_receive", |d, ctx| {
            d.cash_dispensed = ctx.thing.int();
            Ok(Outcome::consume())
        })
}

fn def(id: &str, name: &str, region: &[&str], guard: Option<&str>, doc: &str) -> EventDef {
    EventDef {
        id: id.into(),
        name: name.into(),
        region: region.iter().map(|s| s.to_string()).collect(),
        guard: guard.map(Into::into),
        doc: doc.into(),
    }
}

/// The twelve withdrawal events.
pub fn atm_event_defs() -> Vec<EventDef> {
    vec![
        def(
            "E1",
            "card inserted",
            &["atm.card_transfer", "atm.card_receive"],
            None,
            "The user inserts his or her card that is received by the ATM.",
        ),
        def(
            "E2",
            "PIN requested",
            &["atm.card_process", "atm.pin_request_create"],
            None,
            "The ATM processes the card and generates a request for the PIN.",
        ),
        def(
            "E3",
            "PIN entered",
            &["user.pin_create", "user.pin_transfer", "atm.pin_in", "atm.pin_process"],
            Some("asks for PIN"),
            "The user inputs the PIN that is received and processed by the ATM.",
        ),
        def(
            "E4",
            "PIN to bank",
            &["atm.pin_release", "atm.pin_out", "bank.pin_transfer", "bank.pin_process"],
            None,
            "The ATM sends the PIN to the bank to be processed.",
        ),
        def(
            "E5",
            "bank OK",
            &["bank.ok_create", "bank.ok_transfer", "atm.ok_transfer"],
            None,
            "The bank sends OK message to the ATM.",
        ),
        def(
            "E6",
            "amount requested",
            &["atm.ok_process", "atm.amount_request_create", "atm.amount_request_transfer"],
            None,
            "The ATM requests the amount from the user.",
        ),
        def(
            "E7",
            "amount entered",
            &["user.amount_create", "user.amount_transfer", "atm.amount_in", "atm.amount_receive"],
            Some("asks for amount"),
            "The user inputs the amount that is received by the ATM.",
        ),
        def(
            "E8",
            "amount to bank",
            &["atm.amount_process", "atm.amount_out", "bank.amount_transfer"],
            None,
            "The ATM sends the amount to the bank.",
        ),
        def(
            "E9",
            "balance compared",
            &["bank.amount_receive", "bank.compare"],
            None,
            "The bank compares the requested amount with the relevant account.",
        ),
        def(
            "E10",
            "response sent",
            &["bank.response_create", "bank.response_transfer", "atm.response_transfer"],
            None,
            "A bank response is created and sent to the ATM.",
        ),
        def(
            "E11",
            "card returned",
            &["atm.reject", "atm.card_return", "atm.card_out"],
            Some("insufficient"),
            "The ATM processes the response that reports the funds are insufficient, thus the card is returned to the user.",
        ),
        def(
            "E12",
            "cash released",
            &["atm.cash_create", "atm.cash_transfer", "user.cash_receive"],
            Some("sufficient"),
            "The ATM processes the response that reports funds are sufficient, thus cash is released to the user.",
        ),
    ]
}

/// E1 through E10 in order, then either outcome.
pub fn atm_behavioral_model() -> BehavioralModel {
    let nodes: Vec<String> = (1..=12).map(|i| format!("E{i}")).collect();
    let mut edges: Vec<(String, String)> = (1..10).map(|i| (format!("E{i}"), format!("E{}", i + 1))).collect();
    edges.push(("E10".into(), "E11".into()));
    edges.push(("E10".into(), "E12".into()));
    BehavioralModel { nodes, edges, start: vec!["E1".into()] }
}

/// A finished withdrawal.
#[derive(Debug, Clone)]
pub struct AtmRun {
    pub domain: AtmDomain,
    pub trace: ActionTrace,
    pub occurrences: Vec<EventOccurrence>,
}

/// Inserts the card at `user.card_create` and runs to quiescence.
pub fn atm_run(script: AtmScript, max_ticks: u64) -> Result<AtmRun, ExecError> {
    let model = Arc::new(atm_static_model());
    let domain = AtmDomain { script: Some(script.clone()), ..Default::default() };
    let mut s = ExecState::new(model.clone(), Arc::new(atm_host_binding()), domain)?;
    let card = s.fresh_thing("card", script.card);
    s.inject("user.card_create", card)?;
    s.run(max_ticks)?;
    let occurrences = detect_events(&model, s.trace(), &atm_event_defs()).expect("ATM catalog matches its model");
    Ok(AtmRun { domain: s.domain.clone(), trace: s.trace().to_vec(), occurrences })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{conforms, coverage};
    use crate::model::validate;

    fn script(balance: i64) -> AtmScript {
        AtmScript { card: 4242, pin: 1234, amount: 100, balance }
    }

    fn ids(occ: &[EventOccurrence]) -> Vec<String> {
        occ.iter().map(|o| o.event.clone()).collect()
    }

    #[test]
    fn model_is_valid() {
        assert_eq!(validate(&atm_static_model()), vec![]);
        assert!(atm_host_binding().unbound_guards(&atm_static_model()).is_empty());
    }

    #[test]
    fn sufficient_funds_release_cash() {
        let run = atm_run(script(500), 1000).unwrap();
        assert_eq!(run.domain.cash_dispensed, Some(100));
        assert!(run.domain.card_returned);
        let want: Vec<String> = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12].iter().map(|i| format!("E{i}")).collect();
        assert_eq!(ids(&run.occurrences), want);
        assert!(conforms(&run.occurrences, &atm_behavioral_model()).unwrap().is_conformant());
    }

    #[test]
    fn insufficient_funds_return_card() {
        let run = atm_run(script(50), 1000).unwrap();
        assert_eq!(run.domain.cash_dispensed, None);
        assert!(run.domain.card_returned);
        assert_eq!(run.trace.last().unwrap().stage, "user.card_receive");
        let got = ids(&run.occurrences);
        assert_eq!(got.last().map(String::as_str), Some("E11"));
        assert_eq!(got.len(), 11);
        assert!(conforms(&run.occurrences, &atm_behavioral_model()).unwrap().is_conformant());

        let mut both = run.occurrences.clone();
        both.extend(atm_run(script(500), 1000).unwrap().occurrences);
        assert!(coverage(&both, &atm_event_defs()).is_empty());
    }

    #[test]
    fn card_enters_at_the_atm() {
        let mut s =
            ExecState::new(Arc::new(atm_static_model()), Arc::new(atm_host_binding()), AtmDomain::default()).unwrap();
        let card = s.fresh_thing("card", 1);
        let rec = s.inject("atm.card_transfer", card).unwrap();
        assert_eq!(rec.kind, Transfer);
        assert!(s.inject("atm.card_process", Thing::new(9, "card", 1)).is_err());
    }
}
