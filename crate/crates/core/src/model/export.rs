use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use super::{validate, InvalidModel, StaticModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(ExportFormat::Dot),
            "json" => Ok(ExportFormat::Json),
            other => Err(format!("unknown format `{other}` (expected dot or json)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema { line: usize, column: usize, message: String },
}

/// Renders a valid model as Graphviz DOT or as the JSON interchange document.
pub fn export(model: &StaticModel, format: ExportFormat) -> Result<String, InvalidModel> {
    let report = validate(model);
    if !report.is_empty() {
        return Err(InvalidModel(report));
    }
    Ok(match format {
        ExportFormat::Json => serde_json::to_string_pretty(model).expect("model serializes"),
        ExportFormat::Dot => to_dot(model),
    })
}

/// Parses the JSON interchange document. The result is not validated.
pub fn import(text: &str) -> Result<StaticModel, ImportError> {
    serde_json::from_str(text).map_err(|e| {
        let (line, column, message) = (e.line(), e.column(), e.to_string());
        match e.classify() {
            serde_json::error::Category::Data => ImportError::Schema { line, column, message },
            _ => ImportError::Parse { line, column, message },
        }
    })
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn to_dot(model: &StaticModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", quote(&model.name));
    out.push_str("  compound=true;\n  node [shape=box, style=rounded];\n");

    fn cluster(model: &StaticModel, machine: &str, depth: usize, out: &mut String) {
        let m = model.machine(machine).expect("validated");
        let pad = "  ".repeat(depth);
        let _ = writeln!(out, "{pad}subgraph {} {{", quote(&format!("cluster_{}", m.id)));
        let _ = writeln!(out, "{pad}  label={};", quote(&m.name));
        for sid in &m.stages {
            let s = model.stage(sid).expect("validated");
            let mut label = format!("{}\\n{}", s.id, s.kind);
            if let Some(a) = &s.anchor {
                let _ = write!(label, "\\n({a})");
            }
            let shape = if s.storage.is_some() { ", shape=cylinder" } else { "" };
            let _ = writeln!(out, "{pad}  {} [label=\"{}\"{shape}];", quote(&s.id), label.replace('"', "\\\""));
        }
        for child in model.machines.iter().filter(|c| c.parent.as_deref() == Some(machine)) {
            cluster(model, &child.id, depth + 1, out);
        }
        let _ = writeln!(out, "{pad}}}");
    }
    for root in model.machines.iter().filter(|m| m.parent.is_none()) {
        cluster(model, &root.id, 1, &mut out);
    }

    for a in &model.flows {
        let label = a.anchor.as_deref().map(|l| format!(" [label={}]", quote(l))).unwrap_or_default();
        let _ = writeln!(out, "  {} -> {}{label};", quote(&a.from), quote(&a.to));
    }
    for t in &model.triggers {
        let mut attrs = vec!["style=dashed".to_string()];
        let label = match (&t.guard, &t.anchor) {
            (Some(g), Some(a)) => Some(format!("{g} ({a})")),
            (Some(g), None) => Some(g.clone()),
            (None, Some(a)) => Some(a.clone()),
            (None, None) => None,
        };
        if let Some(l) = label {
            attrs.push(format!("label={}", quote(&l)));
        }
        let _ = writeln!(out, "  {} -> {} [{}];", quote(&t.from), quote(&t.to), attrs.join(", "));
    }
    out.push_str("}\n");
    out
}
