//! The `xformplay` command line. Kept in the library so tests can drive it
//! with in-memory streams.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::io::{self, IoError, PuzzleFile, Recorder};
use crate::puzzle::{generate_puzzle, Actor, GameError, Level, MoveAction, ParamField, Status};
use crate::scene::BrickModel;
use crate::service;
use crate::xform::TransformStep;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "xformplay", version, about = "Transformation-matrix puzzles, headless")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a puzzle file.
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        level: Level,
        #[arg(long)]
        difficulty: u8,
        /// Output path; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Solve a puzzle by following hints, printing each step.
    Solve {
        puzzle: PathBuf,
        /// Record the session as an event log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Replay an event log against its puzzle.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        puzzle: PathBuf,
        /// Fail unless the replayed statuses match the recorded ones.
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        snapshot_out: Option<PathBuf>,
    },
    /// Interactive line-oriented session on stdin/stdout.
    Play {
        #[arg(long)]
        puzzle: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Write the final scene snapshot here on exit.
        #[arg(long)]
        snapshot_out: Option<PathBuf>,
    },
    /// Run the session service.
    Serve {
        #[arg(long, default_value_t = service::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long, default_value = ".")]
        puzzle_dir: PathBuf,
    },
}

/// A typed failure that maps to exit code 1.
#[derive(Debug)]
struct DomainError {
    code: &'static str,
    message: String,
}

impl From<IoError> for DomainError {
    fn from(e: IoError) -> Self {
        let code = match &e {
            IoError::Io { .. } => "E_IO",
            IoError::VersionMismatch { .. } => "E_VERSION",
            IoError::Malformed(_) => "E_MALFORMED",
            IoError::InvariantViolation(_) => "E_INVARIANT",
            IoError::CorruptLog { .. } => "E_CORRUPT_LOG",
            IoError::EngineMismatch { .. } => "E_ENGINE_VERSION",
            IoError::PuzzleMismatch { .. } => "E_PUZZLE_MISMATCH",
            IoError::Game(g) => g.code(),
        };
        DomainError { code, message: e.to_string() }
    }
}

impl From<GameError> for DomainError {
    fn from(e: GameError) -> Self {
        DomainError { code: e.code(), message: e.to_string() }
    }
}

impl From<std::io::Error> for DomainError {
    fn from(e: std::io::Error) -> Self {
        DomainError { code: "E_IO", message: e.to_string() }
    }
}

fn fail(code: &'static str, message: impl Into<String>) -> DomainError {
    DomainError { code, message: message.into() }
}

type CmdResult = Result<(), DomainError>;

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Gen { seed, level, difficulty, output } => gen(seed, level, difficulty, output.as_deref(), out),
        Command::Solve { puzzle, log } => solve(&puzzle, log.as_deref(), out),
        Command::Replay { log, puzzle, verify, snapshot_out } => {
            replay(&log, &puzzle, verify, snapshot_out.as_deref(), out)
        }
        Command::Play { puzzle, log, snapshot_out } => {
            play(&puzzle, log.as_deref(), snapshot_out.as_deref(), stdin, out)
        }
        Command::Serve { port, bind, puzzle_dir } => serve(&bind, port, puzzle_dir, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error[{}]: {}", e.code, e.message);
            EXIT_DOMAIN
        }
    }
}

fn gen(seed: u64, level: Level, difficulty: u8, output: Option<&Path>, out: &mut dyn Write) -> CmdResult {
    let file = PuzzleFile::new(generate_puzzle(seed, level, difficulty)?, BrickModel::demo());
    match output {
        Some(path) => io::save_puzzle(path, &file)?,
        None => out.write_all(file.to_json().as_bytes())?,
    }
    Ok(())
}

/// Upper bound on hint-following iterations; the planner needs at most 3.
const SOLVE_MAX_STEPS: usize = 8;

fn solve(path: &Path, log: Option<&Path>, out: &mut dyn Write) -> CmdResult {
    let file = io::load_puzzle(path)?;
    let spec = &file.spec;
    if !spec.level.allows_virtual() {
        return Err(fail("E_ILLEGAL_MOVE", format!("level {} has no virtual model to solve with", spec.level)));
    }
    writeln!(out, "puzzle {} ({}, {} target steps)", spec.id, spec.level, spec.target_steps.len())?;
    let mut rec = Recorder::new(spec.clone(), log)?;
    rec.apply_physical_target()?;
    let mut steps = Vec::new();
    while rec.state().status() == Status::Playing && steps.len() < SOLVE_MAX_STEPS {
        let hint = rec.state().hint()?;
        writeln!(out, "hint {}: {} (residual {:.6})", steps.len() + 1, hint.suggested_step, hint.residual_after)?;
        rec.apply(Actor::Virtual, MoveAction::ApplyStep { step: hint.suggested_step })?;
        steps.push(hint.suggested_step);
    }
    if rec.state().status() != Status::Solved {
        return Err(fail("E_NO_HINT", format!("not solved after {} steps", steps.len())));
    }
    let list: Vec<String> = steps.iter().map(ToString::to_string).collect();
    writeln!(out, "solution: {}", list.join("; "))?;
    writeln!(out, "solved in {} virtual steps", steps.len())?;
    Ok(())
}

fn replay(
    log_path: &Path,
    puzzle_path: &Path,
    verify: bool,
    snapshot_out: Option<&Path>,
    out: &mut dyn Write,
) -> CmdResult {
    let puzzle = io::load_puzzle(puzzle_path)?;
    let log = io::read_log(log_path)?;
    if log.truncated_tail {
        writeln!(out, "warning: partial last line dropped")?;
    }
    let outcome = io::replay_log(&puzzle, &log)?;
    writeln!(
        out,
        "replayed {} events: status {} (recorded {})",
        log.records.len(),
        outcome.state.status(),
        log.terminal_status()
    )?;
    if let Some(p) = snapshot_out {
        io::save_snapshot(p, &io::snapshot(&outcome.state, &puzzle.model, None))?;
    }
    if verify && !outcome.verified(&log) {
        let at = outcome.status_mismatch.map_or_else(|| "terminal status".to_string(), |s| format!("event {s}"));
        return Err(fail("E_VERIFY", format!("replay diverges from log at {at}")));
    }
    Ok(())
}

const PLAY_HELP: &str = "commands: phys <step> | virt <step> | edit <field> <value> | hint | undo | reset | \
panel | status | target | snapshot | help | quit
steps: translate x y z | rx|ry|rz deg | scale k";

fn play(
    puzzle_path: &Path,
    log: Option<&Path>,
    snapshot_out: Option<&Path>,
    stdin: &mut dyn BufRead,
    out: &mut dyn Write,
) -> CmdResult {
    let file = io::load_puzzle(puzzle_path)?;
    let mut rec = Recorder::new(file.spec.clone(), log)?;
    writeln!(out, "puzzle {} ({}); type `help` for commands", file.spec.id, file.spec.level)?;
    let mut line = String::new();
    loop {
        line.clear();
        if stdin.read_line(&mut line)? == 0 {
            break;
        }
        let cmd = line.trim();
        if cmd.is_empty() || cmd.starts_with('#') {
            continue;
        }
        if cmd == "quit" || cmd == "exit" {
            break;
        }
        if let Err(e) = play_command(cmd, &mut rec, &file, out) {
            writeln!(out, "error[{}]: {}", e.code, e.message)?;
        }
    }
    if let Some(p) = snapshot_out {
        io::save_snapshot(p, &io::snapshot(rec.state(), &file.model, None))?;
    }
    Ok(())
}

fn play_command(cmd: &str, rec: &mut Recorder, file: &PuzzleFile, out: &mut dyn Write) -> CmdResult {
    let (word, rest) = cmd.split_once(char::is_whitespace).unwrap_or((cmd, ""));
    let rest = rest.trim();
    let step = || rest.parse::<TransformStep>().map_err(|e| DomainError::from(GameError::from(e)));
    match word {
        "phys" => rec.apply(Actor::Physical, MoveAction::ApplyStep { step: step()? })?,
        "virt" => rec.apply(Actor::Virtual, MoveAction::ApplyStep { step: step()? })?,
        "edit" => {
            let mut it = rest.split_whitespace();
            let (Some(f), Some(v), None) = (it.next(), it.next(), it.next()) else {
                return Err(fail("E_USAGE", "edit <field> <value>"));
            };
            let field: ParamField = f.parse().map_err(|m: String| fail("E_USAGE", m))?;
            let value: f64 = v.parse().map_err(|_| fail("E_USAGE", format!("not a number: {v}")))?;
            rec.apply(Actor::Virtual, MoveAction::EditLastStepParam { field, value })?;
        }
        "undo" => rec.apply(Actor::Virtual, MoveAction::Undo)?,
        "reset" => rec.apply(Actor::Virtual, MoveAction::Reset)?,
        "target" => rec.apply_physical_target()?,
        "hint" => {
            let h = rec.state().hint()?;
            writeln!(out, "hint: {} (residual {:.6})", h.suggested_step, h.residual_after)?;
            return Ok(());
        }
        "panel" => {
            let s = rec.state();
            writeln!(out, "physical:\n{}\nvirtual:\n{}", s.physical_matrix(), s.virtual_matrix())?;
            return Ok(());
        }
        "snapshot" => {
            out.write_all(io::snapshot(rec.state(), &file.model, None).to_json().as_bytes())?;
            return Ok(());
        }
        "status" => {}
        "help" => {
            writeln!(out, "{PLAY_HELP}")?;
            return Ok(());
        }
        other => return Err(fail("E_USAGE", format!("unknown command `{other}`"))),
    }
    let s = rec.state();
    let e = s.pose_error()?;
    writeln!(
        out,
        "#{} {} moves={} error={:.6} (t={:.4} r={:.4} s={:.4})",
        s.event_log().len(),
        s.status(),
        s.move_count(),
        e.total,
        e.translation_error,
        e.rotation_error,
        e.scale_error
    )?;
    Ok(())
}

fn serve(bind: &str, port: u16, puzzle_dir: PathBuf, out: &mut dyn Write) -> CmdResult {
    let dir = std::env::var_os(service::PUZZLE_DIR_ENV).map(PathBuf::from).unwrap_or(puzzle_dir);
    let listener = TcpListener::bind((bind, port))?;
    writeln!(out, "listening on {} (puzzles from {})", listener.local_addr()?, dir.display())?;
    out.flush()?;
    service::serve(listener, dir)?;
    Ok(())
}
