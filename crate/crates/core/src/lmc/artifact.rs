use std::fmt::Write as _;
use std::str::FromStr;

use crate::model::{export, simplify, ExportFormat};

use super::catalog::{lmc_behavioral_model, lmc_event_defs};
use super::model::lmc_static_model;

/// The built-in LMC artifacts that can be exported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Artifact {
    Static,
    StaticSimplified,
    Events,
    Behavior,
}

impl FromStr for Artifact {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(Artifact::Static),
            "static-simplified" => Ok(Artifact::StaticSimplified),
            "events" => Ok(Artifact::Events),
            "behavior" => Ok(Artifact::Behavior),
            other => {
                Err(format!("unknown artifact `{other}` (expected static, static-simplified, events or behavior)"))
            }
        }
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Renders `what` in `format`. Event definitions in DOT link each event
/// to the members of its region.
pub fn export_artifact(what: Artifact, format: ExportFormat) -> String {
    match (what, format) {
        (Artifact::Static, f) => export(&lmc_static_model(), f).expect("LMC model is valid"),
        (Artifact::StaticSimplified, f) => {
            let s = simplify(&lmc_static_model()).expect("LMC model is valid");
            export(&s, f).expect("simplified model is valid")
        }
        (Artifact::Events, ExportFormat::Json) => {
            serde_json::to_string_pretty(&lmc_event_defs()).expect("defs serialize")
        }
        (Artifact::Behavior, ExportFormat::Json) => {
            serde_json::to_string_pretty(&lmc_behavioral_model()).expect("graph serializes")
        }
        (Artifact::Events, ExportFormat::Dot) => {
            let mut out = String::from("digraph events {\n  rankdir=LR;\n");
            for d in lmc_event_defs() {
                let label = format!("{}\n{}", d.id, d.name);
                let _ = writeln!(out, "  {} [shape=box, label={}];", quote(&d.id), quote(&label));
                for m in &d.region {
                    let _ = writeln!(out, "  {} -> {} [style=dotted];", quote(&d.id), quote(m));
                }
            }
            out.push_str("}\n");
            out
        }
        (Artifact::Behavior, ExportFormat::Dot) => {
            let b = lmc_behavioral_model();
            let mut out = String::from("digraph behavior {\n");
            for n in &b.nodes {
                let shape = if b.start.contains(n) { "doublecircle" } else { "circle" };
                let _ = writeln!(out, "  {} [shape={shape}];", quote(n));
            }
            for (a, z) in &b.edges {
                let _ = writeln!(out, "  {} -> {};", quote(a), quote(z));
            }
            out.push_str("}\n");
            out
        }
    }
}
