//! Session service: one game session per connection, newline-delimited JSON
//! frames over WebSocket or plain TCP.
//!
//! A connection whose first byte is `G` (an HTTP `GET`) is upgraded to a
//! WebSocket; anything else is treated as raw NDJSON.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tungstenite::Message;

use crate::io::{self, IoError, SceneSnapshot};
use crate::puzzle::{Actor, Control, GameState, MoveAction, ParamField};
use crate::scene::BrickModel;
use crate::xform::TransformStep;

pub const DEFAULT_PORT: u16 = 8737;
pub const PUZZLE_DIR_ENV: &str = "XFORMPLAY_PUZZLE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    NewSession {
        puzzle: String,
        /// Start with the physical model already at the target pose.
        #[serde(default)]
        apply_target: bool,
    },
    PhysicalStep { step: TransformStep },
    VirtualStep { step: TransformStep },
    EditParam { field: ParamField, value: f64 },
    // empty braces so unknown fields are rejected like everywhere else
    Undo {},
    Reset {},
    HintRequest {},
    /// Changes which control is highlighted; answered with a snapshot.
    SetActiveControl { control: Option<Control> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reply {
    Snapshot { snapshot: Box<SceneSnapshot> },
    Hint { step: TransformStep, residual_after: f64 },
    Error { code: String, message: String, sequence_no: Option<u64> },
}

impl Reply {
    fn error(code: &str, message: impl Into<String>, sequence_no: Option<u64>) -> Reply {
        Reply::Error { code: code.to_string(), message: message.into(), sequence_no }
    }
}

struct Live {
    state: GameState,
    model: BrickModel,
    active: Option<Control>,
    started: Instant,
}

/// Protocol state for a single connection, independent of transport.
pub struct Session {
    puzzle_dir: PathBuf,
    live: Option<Live>,
}

fn valid_puzzle_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl Session {
    pub fn new(puzzle_dir: impl Into<PathBuf>) -> Self {
        Session { puzzle_dir: puzzle_dir.into(), live: None }
    }

    pub fn state(&self) -> Option<&GameState> {
        self.live.as_ref().map(|l| &l.state)
    }

    /// Handles one frame; never fails, errors become error replies.
    pub fn handle_frame(&mut self, frame: &str) -> Reply {
        match serde_json::from_str::<Request>(frame.trim()) {
            Ok(req) => self.handle(req),
            Err(e) => Reply::error("E_PARSE", e.to_string(), None),
        }
    }

    pub fn handle(&mut self, req: Request) -> Reply {
        if let Request::NewSession { puzzle, apply_target } = req {
            return self.open(&puzzle, apply_target);
        }
        let Some(live) = self.live.as_mut() else {
            return Reply::error("E_NO_SESSION", "send new_session first", None);
        };
        let action = match req {
            Request::NewSession { .. } => unreachable!(),
            Request::HintRequest {} => {
                return match live.state.hint() {
                    Ok(h) => Reply::Hint { step: h.suggested_step, residual_after: h.residual_after },
                    Err(e) => Reply::error(e.code(), e.to_string(), None),
                };
            }
            Request::SetActiveControl { control } => {
                live.active = control;
                return live.snapshot();
            }
            Request::PhysicalStep { step } => (Actor::Physical, MoveAction::ApplyStep { step }),
            Request::VirtualStep { step } => (Actor::Virtual, MoveAction::ApplyStep { step }),
            Request::EditParam { field, value } => (Actor::Virtual, MoveAction::EditLastStepParam { field, value }),
            Request::Undo {} => (Actor::Virtual, MoveAction::Undo),
            Request::Reset {} => (Actor::Virtual, MoveAction::Reset),
        };
        let seq = live.state.next_sequence_no();
        let now = live.started.elapsed().as_millis() as u64;
        match live.state.apply(action.0, action.1, now) {
            Ok(()) => live.snapshot(),
            Err(e) => Reply::error(e.code(), e.to_string(), Some(seq)),
        }
    }

    fn open(&mut self, name: &str, apply_target: bool) -> Reply {
        if !valid_puzzle_name(name) {
            return Reply::error("E_PUZZLE_NOT_FOUND", format!("invalid puzzle name `{name}`"), None);
        }
        let file_name =
            if name.ends_with(io::PUZZLE_EXT) { name.to_string() } else { format!("{name}.{}", io::PUZZLE_EXT) };
        let path = self.puzzle_dir.join(file_name);
        let file = match io::load_puzzle(&path) {
            Ok(f) => f,
            Err(IoError::Io { .. }) => {
                return Reply::error("E_PUZZLE_NOT_FOUND", format!("no puzzle `{name}`"), None);
            }
            Err(e) => return Reply::error("E_BAD_PUZZLE", e.to_string(), None),
        };
        let mut state = match GameState::new_session(file.spec) {
            Ok(s) => s,
            Err(e) => return Reply::error(e.code(), e.to_string(), None),
        };
        if apply_target {
            if let Err(e) = state.apply_physical_target() {
                return Reply::error(e.code(), e.to_string(), None);
            }
        }
        log::info!("session opened on puzzle {name}");
        let live = self.live.insert(Live { state, model: file.model, active: None, started: Instant::now() });
        live.snapshot()
    }
}

impl Live {
    fn snapshot(&self) -> Reply {
        Reply::Snapshot { snapshot: Box::new(io::snapshot(&self.state, &self.model, self.active)) }
    }
}

fn reply_json(reply: &Reply) -> String {
    serde_json::to_string(reply).expect("reply serializes")
}

fn serve_ndjson(stream: TcpStream, session: &mut Session) -> std::io::Result<()> {
    let mut writer = stream.try_clone()?;
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut out = reply_json(&session.handle_frame(&line));
        out.push('\n');
        writer.write_all(out.as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}

fn serve_websocket(stream: TcpStream, session: &mut Session) -> Result<(), tungstenite::Error> {
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    loop {
        let text = match ws.read() {
            Ok(Message::Text(t)) => t.to_string(),
            Ok(Message::Binary(b)) => String::from_utf8_lossy(&b).into_owned(),
            Ok(Message::Close(_)) | Err(tungstenite::Error::ConnectionClosed) => return Ok(()),
            Ok(_) => continue,
            Err(e) => return Err(e),
        };
        // A frame may carry several newline-separated messages.
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            ws.send(Message::text(reply_json(&session.handle_frame(line))))?;
        }
    }
}

/// Serves one accepted connection until the peer hangs up.
pub fn handle_connection(stream: TcpStream, puzzle_dir: &Path) {
    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
    let mut session = Session::new(puzzle_dir);
    let mut first = [0u8; 1];
    let result = match stream.peek(&mut first) {
        Ok(0) => return,
        Ok(_) if first[0] == b'G' => serve_websocket(stream, &mut session).map_err(|e| e.to_string()),
        Ok(_) => serve_ndjson(stream, &mut session).map_err(|e| e.to_string()),
        Err(e) => Err(e.to_string()),
    };
    match result {
        Ok(()) => log::debug!("{peer} disconnected"),
        Err(e) => log::warn!("{peer}: {e}"),
    }
}

/// Accept loop; each connection gets its own thread and session.
pub fn serve(listener: TcpListener, puzzle_dir: PathBuf) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let dir = puzzle_dir.clone();
        std::thread::spawn(move || handle_connection(stream, &dir));
    }
    Ok(())
}
