//! File formats: puzzle documents (`.xpz.json`), append-only event logs
//! (`.xlog.jsonl`) and scene snapshots (`.snap.json`).

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{self, PoseError};
use crate::puzzle::{Actor, Control, GameError, GameState, Level, MoveAction, MoveEvent, PuzzleSpec, Status};
use crate::scene::{
    build_annotations, mapped_points, matrix_panel, wireframe_edges, Annotation, BrickModel, FrameTriad,
    MappedPoints, MatrixPanel, Segment, DEFAULT_MAPPED_POINTS,
};
use crate::xform::{Mat4, TransformStep};

pub const FORMAT_VERSION: u32 = 1;
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const PUZZLE_EXT: &str = "xpz.json";
pub const LOG_EXT: &str = "xlog.jsonl";
pub const SNAPSHOT_EXT: &str = "snap.json";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("unsupported format version {found} (this build reads version {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("corrupt log at record {record} (line {line}): {reason}")]
    CorruptLog { record: usize, line: usize, reason: String },
    #[error("log written by engine {found}, this is engine {expected}")]
    EngineMismatch { found: String, expected: String },
    #[error("log belongs to puzzle `{log}`, not `{puzzle}`")]
    PuzzleMismatch { log: String, puzzle: String },
    #[error(transparent)]
    Game(#[from] GameError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

/// Writes `contents` next to `path` and renames it into place.
fn write_atomic(path: &Path, contents: &str) -> Result<(), IoError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PuzzleFile {
    pub format_version: u32,
    pub spec: PuzzleSpec,
    pub model: BrickModel,
}

impl PuzzleFile {
    pub fn new(spec: PuzzleSpec, model: BrickModel) -> Self {
        PuzzleFile { format_version: FORMAT_VERSION, spec, model }
    }

    pub fn validate(&self) -> Result<(), IoError> {
        self.spec.validate().map_err(|e| IoError::InvariantViolation(e.to_string()))?;
        self.model.validate().map_err(IoError::InvariantViolation)?;
        if self.spec.model_ref != self.model.id {
            return Err(IoError::InvariantViolation(format!(
                "spec references model `{}` but the file carries `{}`",
                self.spec.model_ref, self.model.id
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("puzzle serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<PuzzleFile, IoError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| IoError::Malformed(e.to_string()))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| IoError::Malformed("missing or non-integer `format_version`".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(IoError::VersionMismatch { found: version, expected: FORMAT_VERSION });
        }
        let file: PuzzleFile = serde_json::from_value(value)
            .map_err(|e| IoError::Malformed(format!("format version {FORMAT_VERSION}: {e}")))?;
        file.validate()?;
        Ok(file)
    }
}

pub fn save_puzzle(path: &Path, file: &PuzzleFile) -> Result<(), IoError> {
    write_atomic(path, &file.to_json())
}

pub fn load_puzzle(path: &Path) -> Result<PuzzleFile, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    PuzzleFile::from_json(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogHeader {
    pub puzzle_id: String,
    pub seed: u64,
    pub engine_version: String,
}

impl LogHeader {
    pub fn for_spec(spec: &PuzzleSpec) -> Self {
        LogHeader { puzzle_id: spec.id.clone(), seed: spec.seed, engine_version: ENGINE_VERSION.to_string() }
    }
}

/// One log line: the event plus the session status right after it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    #[serde(flatten)]
    pub event: MoveEvent,
    pub status_after: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLogFile {
    pub header: LogHeader,
    pub records: Vec<LogRecord>,
    /// A trailing line without newline was dropped.
    pub truncated_tail: bool,
}

impl EventLogFile {
    pub fn events(&self) -> Vec<MoveEvent> {
        self.records.iter().map(|r| r.event).collect()
    }

    pub fn terminal_status(&self) -> Status {
        self.records.last().map_or(Status::Playing, |r| r.status_after)
    }
}

/// Append-only writer. Each record goes out as one `write` of a complete
/// line, so an interrupted process leaves at most a partial last line.
pub struct EventLogWriter {
    path: PathBuf,
    file: File,
}

impl EventLogWriter {
    pub fn create(path: &Path, header: &LogHeader) -> Result<Self, IoError> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = EventLogWriter { path: path.to_path_buf(), file };
        w.write_line(&serde_json::to_string(header).expect("header serializes"))?;
        Ok(w)
    }

    pub fn open_append(path: &Path) -> Result<Self, IoError> {
        let file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
        Ok(EventLogWriter { path: path.to_path_buf(), file })
    }

    pub fn append(&mut self, record: &LogRecord) -> Result<(), IoError> {
        self.write_line(&serde_json::to_string(record).expect("record serializes"))
    }

    fn write_line(&mut self, line: &str) -> Result<(), IoError> {
        let mut buf = String::with_capacity(line.len() + 1);
        buf.push_str(line);
        buf.push('\n');
        self.file.write_all(buf.as_bytes()).map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))
    }
}

pub fn append_event(log: &mut EventLogWriter, record: &LogRecord) -> Result<(), IoError> {
    log.append(record)
}

pub fn parse_log(text: &str) -> Result<EventLogFile, IoError> {
    let mut lines: Vec<&str> = text.split_inclusive('\n').collect();
    let mut truncated_tail = false;
    if lines.last().is_some_and(|l| !l.ends_with('\n')) {
        let partial = lines.pop().unwrap_or_default();
        log::warn!("dropping partial trailing log line ({} bytes)", partial.len());
        truncated_tail = true;
    }
    let mut lines = lines.into_iter().map(|l| l.trim_end_matches(['\n', '\r']));
    let header_line = lines.next().ok_or_else(|| IoError::Malformed("event log has no header".into()))?;
    let header: LogHeader =
        serde_json::from_str(header_line).map_err(|e| IoError::Malformed(format!("line 1: bad header: {e}")))?;
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let record_no = i + 1;
        let line_no = i + 2;
        if line.trim().is_empty() {
            return Err(IoError::Malformed(format!("line {line_no}: empty line")));
        }
        let record: LogRecord =
            serde_json::from_str(line).map_err(|e| IoError::Malformed(format!("line {line_no}: {e}")))?;
        if record.event.sequence_no != record_no as u64 {
            return Err(IoError::CorruptLog {
                record: record_no,
                line: line_no,
                reason: format!("expected sequence number {record_no}, found {}", record.event.sequence_no),
            });
        }
        records.push(record);
    }
    Ok(EventLogFile { header, records, truncated_tail })
}

pub fn read_log(path: &Path) -> Result<EventLogFile, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_log(&text)
}

pub fn write_log(path: &Path, log: &EventLogFile) -> Result<(), IoError> {
    let mut w = EventLogWriter::create(path, &log.header)?;
    log.records.iter().try_for_each(|r| w.append(r))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub state: GameState,
    /// First event whose replayed status differs from the recorded one.
    pub status_mismatch: Option<u64>,
}

impl ReplayOutcome {
    pub fn verified(&self, log: &EventLogFile) -> bool {
        self.status_mismatch.is_none() && self.state.status() == log.terminal_status()
    }
}

/// Replays a log against its puzzle, refusing logs from another engine
/// version or another puzzle.
pub fn replay_log(puzzle: &PuzzleFile, log: &EventLogFile) -> Result<ReplayOutcome, IoError> {
    if log.header.engine_version != ENGINE_VERSION {
        return Err(IoError::EngineMismatch {
            found: log.header.engine_version.clone(),
            expected: ENGINE_VERSION.to_string(),
        });
    }
    if log.header.puzzle_id != puzzle.spec.id {
        return Err(IoError::PuzzleMismatch { log: log.header.puzzle_id.clone(), puzzle: puzzle.spec.id.clone() });
    }
    let state = crate::puzzle::replay(&puzzle.spec, &log.events())?;
    // Statuses along the way come from a second, incremental pass.
    let mut probe = GameState::new_session(puzzle.spec.clone())?;
    let mut status_mismatch = None;
    for r in &log.records {
        probe.apply(r.event.actor, r.event.action, r.event.timestamp_ms)?;
        if status_mismatch.is_none() && probe.status() != r.status_after {
            status_mismatch = Some(r.event.sequence_no);
        }
    }
    Ok(ReplayOutcome { state, status_mismatch })
}

/// A live session that mirrors every successful action into an optional
/// event log.
pub struct Recorder {
    state: GameState,
    writer: Option<EventLogWriter>,
    started: std::time::Instant,
}

impl Recorder {
    pub fn new(spec: PuzzleSpec, log_path: Option<&Path>) -> Result<Self, IoError> {
        let writer = log_path.map(|p| EventLogWriter::create(p, &LogHeader::for_spec(&spec))).transpose()?;
        Ok(Recorder { state: GameState::new_session(spec)?, writer, started: std::time::Instant::now() })
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn apply(&mut self, actor: Actor, action: MoveAction) -> Result<(), IoError> {
        let now = self.started.elapsed().as_millis() as u64;
        self.state.apply(actor, action, now)?;
        if let Some(w) = self.writer.as_mut() {
            let event = *self.state.event_log().last().expect("just applied");
            w.append(&LogRecord { event, status_after: self.state.status() })?;
        }
        Ok(())
    }

    pub fn apply_physical_target(&mut self) -> Result<(), IoError> {
        for step in self.state.spec().target_steps.clone() {
            self.apply(Actor::Physical, MoveAction::ApplyStep { step })?;
        }
        Ok(())
    }
}

/// Everything a renderer needs for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub engine_version: String,
    pub puzzle_id: String,
    pub level: Level,
    pub status: Status,
    pub move_count: u64,
    pub last_sequence_no: u64,
    pub model_id: String,
    pub frames: Vec<FrameTriad>,
    pub wireframe_edges: Vec<Segment>,
    /// Pose of the solid ("physical") model.
    pub solid_pose: Mat4,
    pub virtual_pose: Mat4,
    pub virtual_steps: Vec<TransformStep>,
    pub active_control: Option<Control>,
    pub annotations: Vec<Annotation>,
    pub mapped_points: Option<MappedPoints>,
    pub panel: Option<MatrixPanel>,
    pub error: PoseError,
}

impl SceneSnapshot {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("snapshot serializes");
        s.push('\n');
        s
    }
}

/// Render-ready view of `state`; what is included depends on the level.
pub fn snapshot(state: &GameState, model: &BrickModel, active: Option<Control>) -> SceneSnapshot {
    let level = state.spec().level;
    let scene = build_annotations(state, model, active);
    let annotations = if level.shows_annotations() { scene.annotations } else { Vec::new() };
    let mapped = level
        .shows_annotations()
        .then(|| mapped_points(model, state.physical_matrix(), DEFAULT_MAPPED_POINTS).ok())
        .flatten();
    SceneSnapshot {
        engine_version: ENGINE_VERSION.to_string(),
        puzzle_id: state.spec().id.clone(),
        level,
        status: state.status(),
        move_count: state.move_count(),
        last_sequence_no: state.event_log().len() as u64,
        model_id: model.id.clone(),
        frames: scene.frames,
        wireframe_edges: wireframe_edges(model),
        solid_pose: *state.physical_matrix(),
        virtual_pose: *state.virtual_matrix(),
        virtual_steps: state.virtual_steps().to_vec(),
        active_control: active,
        annotations,
        mapped_points: mapped,
        panel: level.shows_matrix_panel().then(|| matrix_panel(state)),
        error: pose::pose_error(state.virtual_matrix(), state.physical_matrix(), &state.spec().weights)
            .unwrap_or_default(),
    }
}

pub fn save_snapshot(path: &Path, snap: &SceneSnapshot) -> Result<(), IoError> {
    write_atomic(path, &snap.to_json())
}
