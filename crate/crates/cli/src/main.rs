use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tm_lmc::asm::{assemble_text, AsmError, ObjectImage};
use tm_lmc::lmc::{export_artifact, run_reference, tm_run, Artifact, InputMode, LmcState, RunOutcome};
use tm_lmc::model::ExportFormat;
use tm_lmc::session::SessionConfig;

#[derive(Parser)]
#[command(name = "tm-lmc", version, about = "Thinging-machine workbench for the Little Man Computer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a source file into a 100-line image and print its symbols.
    Asm {
        src: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run a source or image file in batch mode, printing the output tray.
    Run(RunArgs),
    /// Write one of the built-in LMC artifacts.
    Export {
        /// static, static-simplified, events or behavior
        what: Artifact,
        #[arg(long, default_value = "dot")]
        format: ExportFormat,
        /// Destination file; standard output if absent.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Start the session service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Engine {
    Reference,
    Tm,
    Both,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Assembly source, 100-line image or JSON image.
    program: PathBuf,
    /// Input values, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u16).range(0..=999))]
    input: Vec<u16>,
    /// File of further input values, separated by commas or whitespace.
    #[arg(long)]
    input_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tm")]
    engine: Engine,
    #[arg(long, default_value_t = 10_000)]
    max_steps: u64,
    /// Write the action trace as JSON.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the detected event occurrences as JSON.
    #[arg(long)]
    events: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long, env = "TM_LMC_HOST", default_value = "127.0.0.1")]
    host: String,
    #[arg(long, env = "TM_LMC_PORT", default_value_t = 8080)]
    port: u16,
    /// Maximum number of live sessions.
    #[arg(long, env = "TM_LMC_SESSION_CAP", default_value_t = 64)]
    cap: usize,
    /// Seconds a session may stay unused before it expires.
    #[arg(long, env = "TM_LMC_IDLE_TIMEOUT", default_value_t = 1800)]
    idle_timeout: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Asm { src, out } => cmd_asm(&src, &out),
        Command::Run(args) => cmd_run(&args),
        Command::Export { what, format, out } => cmd_export(what, format, out.as_deref()),
        Command::Serve(args) => cmd_serve(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// `file:line: message`, dropping the assembler's own line prefix.
fn asm_diagnostic(path: &Path, e: &AsmError) -> anyhow::Error {
    let msg = e.to_string();
    match e.line() {
        Some(line) => {
            let bare = msg.strip_prefix(&format!("line {line}: ")).unwrap_or(&msg);
            anyhow!("{}:{line}: {bare}", path.display())
        }
        None => anyhow!("{}: {msg}", path.display()),
    }
}

fn looks_like_image(text: &str) -> bool {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty()).peekable();
    lines.peek().is_some() && lines.all(|l| l.bytes().all(|b| b.is_ascii_digit() || b == b'-'))
}

fn load_program(path: &Path) -> Result<ObjectImage> {
    let text = read(path)?;
    let t = text.trim_start();
    if t.starts_with('[') || t.starts_with('{') {
        return ObjectImage::from_json(&text).map_err(|e| anyhow!("{}: {e}", path.display()));
    }
    if looks_like_image(&text) {
        return ObjectImage::from_text(&text).map_err(|e| anyhow!("{}: {e}", path.display()));
    }
    assemble_text(&text).map_err(|e| asm_diagnostic(path, &e))
}

fn cmd_asm(src: &Path, out: &Path) -> Result<()> {
    let text = read(src)?;
    let img = assemble_text(&text).map_err(|e| asm_diagnostic(src, &e))?;
    write(out, &img.to_text())?;
    let mut stdout = io::stdout().lock();
    for (label, addr) in &img.symbols {
        writeln!(stdout, "{label}\t{addr:02}")?;
    }
    Ok(())
}

fn read_inputs(path: &Path) -> Result<Vec<u16>> {
    read(path)?
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| match t.parse::<u16>() {
            Ok(v) if v <= 999 => Ok(v),
            _ => Err(anyhow!("{}: input value `{t}` is not in 0..=999", path.display())),
        })
        .collect()
}

/// Names the first snapshot field on which the two engines disagree.
fn divergence(reference: &[LmcState], tm: &[LmcState]) -> Option<String> {
    for (i, (r, t)) in reference.iter().zip(tm).enumerate() {
        if r == t {
            continue;
        }
        let (rv, tv) = (serde_json::to_value(r).ok()?, serde_json::to_value(t).ok()?);
        let obj = rv.as_object()?;
        let field = obj.keys().find(|k| rv[*k] != tv[*k]).map_or("?", String::as_str);
        return Some(format!(
            "engines diverge after {i} instructions: {field} is {} under reference, {} under tm",
            rv[field], tv[field]
        ));
    }
    (reference.len() != tm.len())
        .then(|| format!("engines diverge: reference recorded {} snapshots, tm {}", reference.len(), tm.len()))
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    if args.engine == Engine::Reference && (args.trace.is_some() || args.events.is_some()) {
        bail!("--trace and --events need --engine tm or both");
    }
    let mut input = args.input.clone();
    if let Some(f) = &args.input_file {
        input.extend(read_inputs(f)?);
    }
    let img = load_program(&args.program)?;
    let init = LmcState::load(&img).with_input(input);

    let reference = (args.engine != Engine::Tm).then(|| run_reference(init.clone(), args.max_steps, InputMode::Batch));
    let tm = (args.engine != Engine::Reference).then(|| tm_run(init, args.max_steps, InputMode::Batch));
    if let Some(t) = &tm {
        if let Some(p) = &args.trace {
            write(p, &serde_json::to_string_pretty(&t.trace)?)?;
        }
        if let Some(p) = &args.events {
            write(p, &serde_json::to_string_pretty(&t.occurrences)?)?;
        }
    }
    if let (Some(r), Some(t)) = (&reference, &tm) {
        if let Some(msg) = divergence(&r.snapshots, &t.snapshots) {
            bail!(msg);
        }
        if r.outcome != t.outcome {
            bail!("engines disagree on the outcome: reference {:?}, tm {:?}", r.outcome, t.outcome);
        }
    }
    let (state, outcome) = match (tm, reference) {
        (Some(t), _) => (t.final_state, t.outcome),
        (None, Some(r)) => (r.final_state, r.outcome),
        (None, None) => unreachable!("at least one engine runs"),
    };

    let mut stdout = io::stdout().lock();
    for v in &state.output {
        writeln!(stdout, "{v}")?;
    }
    stdout.flush()?;
    match outcome {
        RunOutcome::Halted => Ok(()),
        RunOutcome::Faulted { error } => bail!(error),
        RunOutcome::StepLimit => bail!("step limit of {} reached at pc={}", args.max_steps, state.pc),
        RunOutcome::TickLimit => bail!("tick limit reached at pc={}", state.pc),
        RunOutcome::AwaitingInput => bail!("input exhausted at pc={}", state.pc),
    }
}

fn cmd_export(what: Artifact, format: ExportFormat, out: Option<&Path>) -> Result<()> {
    let text = export_artifact(what, format);
    match out {
        Some(p) => write(p, &text),
        None => Ok(io::stdout().lock().write_all(text.as_bytes())?),
    }
}

fn cmd_serve(args: &ServeArgs) -> Result<()> {
    let addr = (args.host.as_str(), args.port);
    let config = SessionConfig { cap: args.cap, idle_timeout: Duration::from_secs(args.idle_timeout) };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot bind {}:{}", args.host, args.port))?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        tm_lmc_cli::serve(listener, config).await?;
        Ok(())
    })
}
