//! The puzzle: a hand-moved "physical" model and a parameter-driven virtual
//! wireframe that the player has to bring back into alignment with it.
//!
//! A [`GameState`] is an event-sourced value. Every successful operation
//! appends one [`MoveEvent`]; [`replay`] folds a log back into an identical
//! state. Failed operations leave the state untouched.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{self, PoseDecomposition, PoseError, PoseSolveError, PoseTolerance, Weights};
use crate::xform::{compose, Angle, Mat4, RotationAxis, TransformStep, Vec3, XformError};

/// Id of the model used by generated puzzles.
pub const DEFAULT_MODEL_ID: &str = "brick-house";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("invalid puzzle spec: {0}")]
    InvalidSpec(String),
    #[error("illegal move: {0}")]
    IllegalMove(String),
    #[error("session already solved")]
    SessionFinished,
    #[error("no active virtual step to edit")]
    NoActiveStep,
    #[error("field `{field}` does not belong to step `{step}`")]
    InvalidField { field: ParamField, step: String },
    #[error("nothing to undo")]
    NothingToUndo,
    #[error(transparent)]
    Xform(#[from] XformError),
    #[error(transparent)]
    Pose(#[from] PoseSolveError),
    #[error("corrupt log: {0}")]
    CorruptLog(String),
    #[error("replay halted at event {sequence_no}: {source}")]
    ReplayHalted { sequence_no: u64, source: Box<GameError> },
}

impl GameError {
    /// Stable machine-readable code, used by the service protocol.
    pub fn code(&self) -> &'static str {
        match self {
            GameError::InvalidSpec(_) => "E_INVALID_SPEC",
            GameError::IllegalMove(_) => "E_ILLEGAL_MOVE",
            GameError::SessionFinished => "E_SESSION_FINISHED",
            GameError::NoActiveStep => "E_NO_ACTIVE_STEP",
            GameError::InvalidField { .. } => "E_INVALID_FIELD",
            GameError::NothingToUndo => "E_NOTHING_TO_UNDO",
            GameError::Xform(_) => "E_INVALID_PARAM",
            GameError::Pose(PoseSolveError::NoHintNeeded) => "E_NO_HINT_NEEDED",
            GameError::Pose(PoseSolveError::NoImprovingStep) => "E_NO_HINT",
            GameError::Pose(_) => "E_POSE",
            GameError::CorruptLog(_) => "E_CORRUPT_LOG",
            GameError::ReplayHalted { source, .. } => source.code(),
        }
    }
}

/// Learning level; each one unlocks more of the interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    /// Free physical moves only.
    Motion,
    /// Adds virtual moves, mapped points and annotations.
    Mapping,
    /// Adds matrix panels, parameter editing and scale.
    Function,
}

impl Level {
    pub fn allows_virtual(self) -> bool {
        self != Level::Motion
    }

    pub fn shows_annotations(self) -> bool {
        self >= Level::Mapping
    }

    pub fn shows_matrix_panel(self) -> bool {
        self == Level::Function
    }

    /// Controls this level can expose. Scale has no hand gesture and only
    /// exists on the matrix panel.
    pub fn permits(self, control: Control) -> bool {
        match self {
            Level::Motion => false,
            Level::Mapping => control != Control::Scale,
            Level::Function => true,
        }
    }

    /// Whether the simulated hand may scale the physical model.
    pub fn allows_physical_scale(self) -> bool {
        self == Level::Function
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Motion => "motion",
            Level::Mapping => "mapping",
            Level::Function => "function",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "motion" => Ok(Level::Motion),
            "mapping" => Ok(Level::Mapping),
            "function" => Ok(Level::Function),
            other => Err(format!("unknown level `{other}` (expected motion, mapping or function)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    TranslateX,
    TranslateY,
    TranslateZ,
    RotateX,
    RotateY,
    RotateZ,
    Scale,
}

impl Control {
    pub const ALL: [Control; 7] = [
        Control::TranslateX,
        Control::TranslateY,
        Control::TranslateZ,
        Control::RotateX,
        Control::RotateY,
        Control::RotateZ,
        Control::Scale,
    ];

    pub fn translate(axis: RotationAxis) -> Control {
        match axis {
            RotationAxis::X => Control::TranslateX,
            RotationAxis::Y => Control::TranslateY,
            RotationAxis::Z => Control::TranslateZ,
        }
    }

    pub fn rotate(axis: RotationAxis) -> Control {
        match axis {
            RotationAxis::X => Control::RotateX,
            RotationAxis::Y => Control::RotateY,
            RotationAxis::Z => Control::RotateZ,
        }
    }

    pub fn rotation_axis(self) -> Option<RotationAxis> {
        match self {
            Control::RotateX => Some(RotationAxis::X),
            Control::RotateY => Some(RotationAxis::Y),
            Control::RotateZ => Some(RotationAxis::Z),
            _ => None,
        }
    }
}

impl FromStr for Control {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown control `{s}`"))
    }
}

/// Controls a virtual step needs. A zero translation needs any one
/// translate control, reported as an empty list.
pub fn step_controls(step: &TransformStep) -> Vec<Control> {
    match step {
        TransformStep::Translate { v } => RotationAxis::ALL
            .into_iter()
            .filter(|a| v.component(*a) != 0.0)
            .map(Control::translate)
            .collect(),
        TransformStep::Rotate { axis, .. } => vec![Control::rotate(*axis)],
        TransformStep::Scale { .. } => vec![Control::Scale],
    }
}

/// A puzzle definition: which physical motion to reproduce and with which
/// controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PuzzleSpec {
    pub id: String,
    pub level: Level,
    /// The physical motion the player has to match.
    pub target_steps: Vec<TransformStep>,
    pub allowed_controls: BTreeSet<Control>,
    pub tolerance: PoseTolerance,
    pub weights: Weights,
    pub seed: u64,
    pub model_ref: String,
}

const FACTOR_EPS: f64 = 1e-9;

impl PuzzleSpec {
    pub fn target_matrix(&self) -> Result<Mat4, GameError> {
        Ok(compose(&self.target_steps)?)
    }

    /// Controls needed to reproduce the target from identity with
    /// single-factor steps.
    pub fn required_controls(&self) -> Result<Vec<BTreeSet<Control>>, GameError> {
        let d = pose::decompose_trs(&self.target_matrix()?)?;
        Ok(required_controls(&d))
    }

    pub fn allows_step(&self, step: &TransformStep) -> bool {
        let needed = step_controls(step);
        let permitted = |c: &Control| self.level.permits(*c) && self.allowed_controls.contains(c);
        if needed.is_empty() {
            // zero translation
            return RotationAxis::ALL.into_iter().map(Control::translate).any(|c| permitted(&c));
        }
        needed.iter().all(permitted)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        let invalid = |msg: String| Err(GameError::InvalidSpec(msg));
        if self.id.trim().is_empty() {
            return invalid("empty puzzle id".into());
        }
        if self.model_ref.trim().is_empty() {
            return invalid("empty model reference".into());
        }
        self.weights.validate().or_else(|e| invalid(e.to_string()))?;
        self.tolerance.validate().or_else(|e| invalid(e.to_string()))?;
        for step in &self.target_steps {
            if let Err(e) = step.validate() {
                return invalid(format!("target step `{step}`: {e}"));
            }
            if matches!(step, TransformStep::Scale { .. }) && !self.level.allows_physical_scale() {
                return invalid(format!("{} level cannot scale the physical model", self.level));
            }
        }
        if let Some(c) = self.allowed_controls.iter().find(|c| !self.level.permits(**c)) {
            return invalid(format!("control {c:?} is not available at {} level", self.level));
        }
        let target = match self.target_matrix().and_then(|m| Ok(pose::decompose_trs(&m)?)) {
            Ok(d) => d,
            Err(e) => return invalid(format!("target is not a pure TRS pose: {e}")),
        };
        if !self.level.allows_virtual() {
            return Ok(());
        }
        for group in required_controls(&target) {
            if group.is_disjoint(&self.allowed_controls) {
                return invalid(format!("allowed controls cannot reach the target (need one of {group:?})"));
            }
        }
        Ok(())
    }
}

/// Each returned set must intersect the allowed controls.
fn required_controls(d: &PoseDecomposition) -> Vec<BTreeSet<Control>> {
    let mut out = Vec::new();
    for axis in RotationAxis::ALL {
        if d.translation.component(axis).abs() > FACTOR_EPS {
            out.push(BTreeSet::from([Control::translate(axis)]));
        }
    }
    let aa = d.axis_angle;
    if aa.angle.deg().abs() > FACTOR_EPS {
        match RotationAxis::ALL.into_iter().find(|a| aa.axis.component(*a).abs() > 1.0 - 1e-12) {
            Some(axis) => out.push(BTreeSet::from([Control::rotate(axis)])),
            None => {
                // A general rotation needs turns about at least two axes:
                // any two of the three rotate controls will do.
                for skip in RotationAxis::ALL {
                    out.push(
                        RotationAxis::ALL.into_iter().filter(|a| *a != skip).map(Control::rotate).collect(),
                    );
                }
            }
        }
    }
    if d.scale.ln().abs() > 1e-12 {
        out.push(BTreeSet::from([Control::Scale]));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actor {
    Physical,
    Virtual,
}

/// Parameter of the active virtual step addressed by a slider.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamField {
    X,
    Y,
    Z,
    Angle,
    Factor,
}

impl fmt::Display for ParamField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamField::X => "x",
            ParamField::Y => "y",
            ParamField::Z => "z",
            ParamField::Angle => "angle",
            ParamField::Factor => "factor",
        })
    }
}

impl FromStr for ParamField {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(ParamField::X),
            "y" => Ok(ParamField::Y),
            "z" => Ok(ParamField::Z),
            "angle" => Ok(ParamField::Angle),
            "factor" | "scale" => Ok(ParamField::Factor),
            other => Err(format!("unknown field `{other}`")),
        }
    }
}

/// `step` with `field` replaced by `value`.
pub fn edit_step(step: &TransformStep, field: ParamField, value: f64) -> Result<TransformStep, GameError> {
    let edited = match (*step, field) {
        (TransformStep::Translate { mut v }, ParamField::X | ParamField::Y | ParamField::Z) => {
            match field {
                ParamField::X => v.x = value,
                ParamField::Y => v.y = value,
                _ => v.z = value,
            }
            TransformStep::Translate { v }
        }
        (TransformStep::Rotate { axis, .. }, ParamField::Angle) => {
            TransformStep::Rotate { axis, angle: Angle::degrees(value) }
        }
        (TransformStep::Scale { .. }, ParamField::Factor) => TransformStep::Scale { factor: value },
        _ => return Err(GameError::InvalidField { field, step: step.to_string() }),
    };
    edited.validate()?;
    Ok(edited)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MoveAction {
    ApplyStep { step: TransformStep },
    EditLastStepParam { field: ParamField, value: f64 },
    Undo,
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveEvent {
    pub sequence_no: u64,
    pub actor: Actor,
    pub action: MoveAction,
    /// Milliseconds since session start.
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Playing,
    Solved,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Playing => "playing",
            Status::Solved => "solved",
        })
    }
}

/// The two factors of the most recent matrix product, `left · right`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LastComposition {
    pub actor: Actor,
    pub left: Mat4,
    pub right: Mat4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    spec: PuzzleSpec,
    physical_matrix: Mat4,
    virtual_steps: Vec<TransformStep>,
    virtual_matrix: Mat4,
    status: Status,
    move_count: u64,
    /// Physical moves since the last reset; a win needs at least one.
    physical_moves: u64,
    last_composition: Option<LastComposition>,
    event_log: Vec<MoveEvent>,
}

impl GameState {
    pub fn new_session(spec: PuzzleSpec) -> Result<GameState, GameError> {
        spec.validate()?;
        Ok(GameState {
            spec,
            physical_matrix: Mat4::IDENTITY,
            virtual_steps: Vec::new(),
            virtual_matrix: Mat4::IDENTITY,
            status: Status::Playing,
            move_count: 0,
            physical_moves: 0,
            last_composition: None,
            event_log: Vec::new(),
        })
    }

    pub fn spec(&self) -> &PuzzleSpec {
        &self.spec
    }

    pub fn physical_matrix(&self) -> &Mat4 {
        &self.physical_matrix
    }

    pub fn virtual_matrix(&self) -> &Mat4 {
        &self.virtual_matrix
    }

    pub fn virtual_steps(&self) -> &[TransformStep] {
        &self.virtual_steps
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn move_count(&self) -> u64 {
        self.move_count
    }

    pub fn physical_moves(&self) -> u64 {
        self.physical_moves
    }

    pub fn event_log(&self) -> &[MoveEvent] {
        &self.event_log
    }

    pub fn last_composition(&self) -> Option<&LastComposition> {
        self.last_composition.as_ref()
    }

    pub fn next_sequence_no(&self) -> u64 {
        self.event_log.len() as u64 + 1
    }

    fn last_timestamp(&self) -> u64 {
        self.event_log.last().map_or(0, |e| e.timestamp_ms)
    }

    pub fn pose_error(&self) -> Result<PoseError, GameError> {
        Ok(pose::pose_error(&self.virtual_matrix, &self.physical_matrix, &self.spec.weights)?)
    }

    /// Next step suggested by the pose solver, limited to the puzzle's
    /// allowed controls.
    pub fn hint(&self) -> Result<pose::Hint, GameError> {
        if !self.spec.level.allows_virtual() {
            return Err(GameError::IllegalMove(format!("no virtual moves at {} level", self.spec.level)));
        }
        let allowed = |s: &TransformStep| self.spec.allows_step(s);
        Ok(pose::suggest_hint_filtered(
            &self.virtual_matrix,
            &self.physical_matrix,
            &self.spec.weights,
            &self.spec.tolerance,
            &allowed,
        )?)
    }

    pub fn apply_physical(&mut self, step: TransformStep) -> Result<(), GameError> {
        self.apply(Actor::Physical, MoveAction::ApplyStep { step }, self.last_timestamp())
    }

    /// Moves the physical model through the puzzle's target motion.
    pub fn apply_physical_target(&mut self) -> Result<(), GameError> {
        let mut next = self.clone();
        for step in self.spec.target_steps.clone() {
            next.apply_physical(step)?;
        }
        *self = next;
        Ok(())
    }

    pub fn apply_virtual(&mut self, step: TransformStep) -> Result<(), GameError> {
        self.apply(Actor::Virtual, MoveAction::ApplyStep { step }, self.last_timestamp())
    }

    pub fn edit_virtual_param(&mut self, field: ParamField, value: f64) -> Result<(), GameError> {
        self.apply(Actor::Virtual, MoveAction::EditLastStepParam { field, value }, self.last_timestamp())
    }

    pub fn undo(&mut self) -> Result<(), GameError> {
        self.apply(Actor::Virtual, MoveAction::Undo, self.last_timestamp())
    }

    pub fn reset(&mut self) -> Result<(), GameError> {
        self.apply(Actor::Virtual, MoveAction::Reset, self.last_timestamp())
    }

    /// Validates and applies one action, logging it as the next event.
    /// On error the state is unchanged.
    pub fn apply(&mut self, actor: Actor, action: MoveAction, timestamp_ms: u64) -> Result<(), GameError> {
        let level = self.spec.level;
        let finished = self.status != Status::Playing;
        let playing = || if finished { Err(GameError::SessionFinished) } else { Ok(()) };
        match (actor, action) {
            (_, MoveAction::Reset) => {
                self.physical_matrix = Mat4::IDENTITY;
                self.virtual_steps.clear();
                self.physical_moves = 0;
                self.last_composition = None;
            }
            (Actor::Physical, MoveAction::ApplyStep { step }) => {
                playing()?;
                let m = step.matrix()?;
                if matches!(step, TransformStep::Scale { .. }) && !level.allows_physical_scale() {
                    return Err(GameError::IllegalMove(format!("a hand-held model cannot scale at {level} level")));
                }
                let before = self.physical_matrix;
                self.physical_matrix = m * before;
                self.physical_moves += 1;
                self.last_composition = Some(LastComposition { actor, left: m, right: before });
            }
            (Actor::Physical, other) => {
                return Err(GameError::IllegalMove(format!("{other:?} is not a physical action")));
            }
            (Actor::Virtual, action) => {
                playing()?;
                if !level.allows_virtual() {
                    return Err(GameError::IllegalMove(format!("no virtual moves at {level} level")));
                }
                match action {
                    MoveAction::ApplyStep { step } => {
                        let m = step.matrix()?;
                        self.check_allowed(&step)?;
                        self.last_composition =
                            Some(LastComposition { actor, left: m, right: self.virtual_matrix });
                        self.virtual_steps.push(step);
                        self.move_count += 1;
                    }
                    MoveAction::EditLastStepParam { field, value } => {
                        let last = self.virtual_steps.last().ok_or(GameError::NoActiveStep)?;
                        let edited = edit_step(last, field, value)?;
                        self.check_allowed(&edited)?;
                        let n = self.virtual_steps.len();
                        let prefix = compose(&self.virtual_steps[..n - 1])?;
                        self.virtual_steps[n - 1] = edited;
                        self.last_composition =
                            Some(LastComposition { actor, left: edited.matrix()?, right: prefix });
                    }
                    MoveAction::Undo => {
                        self.virtual_steps.pop().ok_or(GameError::NothingToUndo)?;
                        self.last_composition = None;
                    }
                    MoveAction::Reset => unreachable!("handled above"),
                }
            }
        }
        self.virtual_matrix = compose(&self.virtual_steps)?;
        self.status = self.evaluate_status()?;
        self.event_log.push(MoveEvent { sequence_no: self.next_sequence_no(), actor, action, timestamp_ms });
        Ok(())
    }

    fn check_allowed(&self, step: &TransformStep) -> Result<(), GameError> {
        if self.spec.allows_step(step) {
            Ok(())
        } else {
            Err(GameError::IllegalMove(format!("`{step}` uses a control this puzzle does not allow")))
        }
    }

    fn evaluate_status(&self) -> Result<Status, GameError> {
        if self.physical_moves == 0 {
            return Ok(Status::Playing);
        }
        let aligned = pose::is_aligned(&self.virtual_matrix, &self.physical_matrix, &self.spec.tolerance)?;
        Ok(if aligned { Status::Solved } else { Status::Playing })
    }

    /// Checks the cached fields against a recomputation from scratch.
    pub fn check_invariants(&self) -> Result<(), String> {
        let composed = compose(&self.virtual_steps).map_err(|e| e.to_string())?;
        if composed != self.virtual_matrix {
            return Err("virtual matrix drifted from its steps".into());
        }
        let expected = self.evaluate_status().map_err(|e| e.to_string())?;
        if expected != self.status {
            return Err(format!("status {} but alignment says {}", self.status, expected));
        }
        for (i, e) in self.event_log.iter().enumerate() {
            if e.sequence_no != i as u64 + 1 {
                return Err(format!("event {} has sequence number {}", i + 1, e.sequence_no));
            }
        }
        Ok(())
    }
}

/// Rebuilds a session from its event log.
pub fn replay(spec: &PuzzleSpec, events: &[MoveEvent]) -> Result<GameState, GameError> {
    for (i, e) in events.iter().enumerate() {
        let expected = i as u64 + 1;
        if e.sequence_no != expected {
            return Err(GameError::CorruptLog(format!(
                "expected sequence number {expected}, found {}",
                e.sequence_no
            )));
        }
    }
    let mut state = GameState::new_session(spec.clone())?;
    for e in events {
        state
            .apply(e.actor, e.action, e.timestamp_ms)
            .map_err(|source| GameError::ReplayHalted { sequence_no: e.sequence_no, source: Box::new(source) })?;
    }
    Ok(state)
}

/// Difficulty range accepted by [`generate_puzzle`].
pub const DIFFICULTY_RANGE: std::ops::RangeInclusive<u8> = 1..=5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Factor {
    Translate,
    Rotate,
    Scale,
}

fn draw_half_stud<R: Rng>(rng: &mut R, allow_zero: bool) -> f64 {
    loop {
        let k: i32 = rng.random_range(-16..=16);
        if allow_zero || k != 0 {
            return k as f64 / 2.0;
        }
    }
}

fn draw_translation<R: Rng>(rng: &mut R, min_nonzero: usize, single_axis: bool) -> Vec3 {
    if single_axis {
        let axis = *RotationAxis::ALL.choose(rng).expect("non-empty");
        let v = draw_half_stud(rng, false);
        return axis.unit().scale(v);
    }
    loop {
        let v = Vec3::new(draw_half_stud(rng, true), draw_half_stud(rng, true), draw_half_stud(rng, true));
        if v.to_array().iter().filter(|c| **c != 0.0).count() >= min_nonzero.max(1) {
            return v;
        }
    }
}

/// Deterministic puzzle for `(seed, level, difficulty)`.
///
/// Difficulty 1 and 2 use a single factor (2 may also scale), 3 two
/// distinct factors, 4 every factor the level offers, and 5 the same with a
/// translation off the coordinate axes. Angles are multiples of 15°,
/// translations sit on the half-stud grid within ±8 and scale factors are
/// 0.5 or 2. Scale only appears at the function level.
pub fn generate_puzzle(seed: u64, level: Level, difficulty: u8) -> Result<PuzzleSpec, GameError> {
    if !DIFFICULTY_RANGE.contains(&difficulty) {
        return Err(GameError::InvalidSpec(format!("difficulty {difficulty} outside 1..=5")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale_ok = level.allows_physical_scale();
    let mut kinds = vec![Factor::Translate, Factor::Rotate];
    if scale_ok {
        kinds.push(Factor::Scale);
    }
    let chosen: Vec<Factor> = match difficulty {
        1 => vec![*[Factor::Translate, Factor::Rotate].choose(&mut rng).expect("non-empty")],
        2 => vec![*kinds.choose(&mut rng).expect("non-empty")],
        3 => {
            let mut k = kinds.clone();
            let drop = rng.random_range(0..k.len());
            if k.len() == 3 {
                k.remove(drop);
            }
            k
        }
        _ => kinds.clone(),
    };
    // Canonical order: scale, rotate, translate, so the target is T·R·S.
    let mut steps = Vec::new();
    if chosen.contains(&Factor::Scale) {
        let factor = *[0.5, 2.0].choose(&mut rng).expect("non-empty");
        steps.push(TransformStep::Scale { factor });
    }
    if chosen.contains(&Factor::Rotate) {
        let axis = *RotationAxis::ALL.choose(&mut rng).expect("non-empty");
        let k = loop {
            let k: i32 = rng.random_range(-12..=12);
            if k != 0 {
                break k;
            }
        };
        steps.push(TransformStep::Rotate { axis, angle: Angle::degrees(15.0 * k as f64) });
    }
    if chosen.contains(&Factor::Translate) {
        let v = match difficulty {
            1 | 2 => draw_translation(&mut rng, 1, true),
            3 | 4 => draw_translation(&mut rng, 1, false),
            _ => draw_translation(&mut rng, 2, false),
        };
        steps.push(TransformStep::Translate { v });
    }
    let allowed_controls = Control::ALL.into_iter().filter(|c| level.permits(*c)).collect();
    let spec = PuzzleSpec {
        id: format!("gen-{level}-d{difficulty}-{seed}"),
        level,
        target_steps: steps,
        allowed_controls,
        tolerance: PoseTolerance::default(),
        weights: Weights::default(),
        seed,
        model_ref: DEFAULT_MODEL_ID.to_string(),
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xform::{rotation_matrix, translation_matrix};

    fn spec(level: Level, target: Vec<TransformStep>) -> PuzzleSpec {
        PuzzleSpec {
            id: "t".into(),
            level,
            target_steps: target,
            allowed_controls: Control::ALL.into_iter().filter(|c| level.permits(*c)).collect(),
            tolerance: PoseTolerance::default(),
            weights: Weights::default(),
            seed: 0,
            model_ref: DEFAULT_MODEL_ID.into(),
        }
    }

    fn rz(deg: f64) -> TransformStep {
        TransformStep::rotate(RotationAxis::Z, deg)
    }

    #[test]
    fn new_session_starts_at_identity() {
        let s = GameState::new_session(spec(Level::Function, vec![TransformStep::translate(2.0, 0.0, 0.0)])).unwrap();
        assert_eq!(*s.physical_matrix(), Mat4::IDENTITY);
        assert_eq!(*s.virtual_matrix(), Mat4::IDENTITY);
        assert_eq!(s.status(), Status::Playing);
        assert!(s.event_log().is_empty());
        // identity vs identity is aligned, but no physical move yet
        assert!(pose::is_aligned(s.virtual_matrix(), s.physical_matrix(), &s.spec().tolerance).unwrap());
    }

    #[test]
    fn new_session_rejects_insufficient_controls() {
        let mut sp = spec(Level::Function, vec![rz(90.0)]);
        sp.allowed_controls.retain(|c| c.rotation_axis().is_none());
        assert!(matches!(GameState::new_session(sp), Err(GameError::InvalidSpec(_))));
    }

    #[test]
    fn physical_moves_left_multiply() {
        let mut s = GameState::new_session(spec(Level::Function, vec![])).unwrap();
        s.apply_physical(TransformStep::translate(3.0, 0.0, 0.0)).unwrap();
        assert_eq!(*s.physical_matrix(), translation_matrix(Vec3::new(3.0, 0.0, 0.0)).unwrap());
        assert_eq!(*s.virtual_matrix(), Mat4::IDENTITY);

        let mut s = GameState::new_session(spec(Level::Function, vec![])).unwrap();
        s.apply_physical(rz(90.0)).unwrap();
        s.apply_physical(TransformStep::translate(1.0, 0.0, 0.0)).unwrap();
        let expected = translation_matrix(Vec3::X).unwrap()
            * rotation_matrix(RotationAxis::Z, Angle::degrees(90.0)).unwrap();
        assert_eq!(*s.physical_matrix(), expected);
    }

    #[test]
    fn physical_scale_gated_by_level() {
        let mut s = GameState::new_session(spec(Level::Mapping, vec![])).unwrap();
        assert!(matches!(s.apply_physical(TransformStep::scale(2.0)), Err(GameError::IllegalMove(_))));
        let mut s = GameState::new_session(spec(Level::Function, vec![])).unwrap();
        s.apply_physical(TransformStep::scale(2.0)).unwrap();
    }

    #[test]
    fn virtual_translation_solves() {
        let mut s = GameState::new_session(spec(Level::Function, vec![TransformStep::translate(2.0, 0.0, 0.0)])).unwrap();
        s.apply_physical_target().unwrap();
        s.apply_virtual(TransformStep::translate(2.0, 0.0, 0.0)).unwrap();
        assert_eq!(s.status(), Status::Solved);
        assert_eq!(s.move_count(), 1);
        assert_eq!(
            s.apply_virtual(TransformStep::translate(1.0, 0.0, 0.0)),
            Err(GameError::SessionFinished)
        );
    }

    #[test]
    fn rotation_within_tolerance_solves() {
        let mut s = GameState::new_session(spec(Level::Function, vec![rz(90.0)])).unwrap();
        s.apply_physical_target().unwrap();
        s.apply_virtual(rz(89.0)).unwrap();
        assert_eq!(s.status(), Status::Solved);
    }

    #[test]
    fn scale_and_rotation_solve_in_either_order() {
        let target = vec![TransformStep::scale(2.0), rz(90.0)];
        let mut s = GameState::new_session(spec(Level::Function, target)).unwrap();
        s.apply_physical_target().unwrap();
        s.apply_virtual(rz(90.0)).unwrap();
        assert_eq!(s.status(), Status::Playing);
        s.apply_virtual(TransformStep::scale(2.0)).unwrap();
        assert_eq!(s.status(), Status::Solved);
        assert!(s.pose_error().unwrap().total < 1e-9);
    }

    #[test]
    fn disallowed_virtual_control() {
        let mut sp = spec(Level::Function, vec![TransformStep::translate(2.0, 0.0, 0.0)]);
        sp.allowed_controls = BTreeSet::from([Control::TranslateX]);
        let mut s = GameState::new_session(sp).unwrap();
        assert!(matches!(s.apply_virtual(rz(10.0)), Err(GameError::IllegalMove(_))));
        assert!(matches!(
            s.apply_virtual(TransformStep::translate(0.0, 1.0, 0.0)),
            Err(GameError::IllegalMove(_))
        ));
        assert!(s.event_log().is_empty());
    }

    #[test]
    fn motion_level_rejects_virtual_events() {
        let mut s = GameState::new_session(spec(Level::Motion, vec![rz(30.0)])).unwrap();
        s.apply_physical(rz(30.0)).unwrap();
        assert!(matches!(s.apply_virtual(rz(30.0)), Err(GameError::IllegalMove(_))));
        assert!(matches!(s.edit_virtual_param(ParamField::Angle, 1.0), Err(GameError::IllegalMove(_))));
    }

    #[test]
    fn mapping_level_rejects_scale_edits() {
        let mut s = GameState::new_session(spec(Level::Mapping, vec![rz(30.0)])).unwrap();
        assert!(matches!(s.apply_virtual(TransformStep::scale(2.0)), Err(GameError::IllegalMove(_))));
        s.apply_virtual(TransformStep::translate(1.0, 0.0, 0.0)).unwrap();
        s.edit_virtual_param(ParamField::X, 2.0).unwrap();
        // Editing to a value needing another axis control is still fine here.
        s.edit_virtual_param(ParamField::Y, 1.0).unwrap();
    }

    #[test]
    fn edit_examples() {
        let mut s = GameState::new_session(spec(Level::Function, vec![rz(90.0)])).unwrap();
        s.apply_virtual(TransformStep::translate(1.0, 0.0, 0.0)).unwrap();
        s.edit_virtual_param(ParamField::X, 2.0).unwrap();
        assert_eq!(s.virtual_matrix().translation(), Vec3::new(2.0, 0.0, 0.0));

        s.apply_virtual(rz(30.0)).unwrap();
        s.edit_virtual_param(ParamField::Angle, 90.0).unwrap();
        assert_eq!(*s.virtual_matrix(), compose(&[TransformStep::translate(2.0, 0.0, 0.0), rz(90.0)]).unwrap());

        let before = s.virtual_steps().len();
        for a in [10.0, 20.0, 45.0] {
            s.edit_virtual_param(ParamField::Angle, a).unwrap();
        }
        assert_eq!(s.virtual_steps().len(), before);
        assert_eq!(s.virtual_steps().last(), Some(&rz(45.0)));
        let edits = s
            .event_log()
            .iter()
            .filter(|e| matches!(e.action, MoveAction::EditLastStepParam { .. }))
            .count();
        assert_eq!(edits, 5);
    }

    #[test]
    fn edit_errors() {
        let mut s = GameState::new_session(spec(Level::Function, vec![rz(90.0)])).unwrap();
        assert_eq!(s.edit_virtual_param(ParamField::X, 1.0), Err(GameError::NoActiveStep));
        s.apply_virtual(TransformStep::scale(2.0)).unwrap();
        assert!(matches!(s.edit_virtual_param(ParamField::Angle, 1.0), Err(GameError::InvalidField { .. })));
        assert!(matches!(s.edit_virtual_param(ParamField::Factor, 0.0), Err(GameError::Xform(_))));
    }

    #[test]
    fn undo_and_reset() {
        let mut s = GameState::new_session(spec(Level::Function, vec![rz(90.0)])).unwrap();
        s.apply_virtual(rz(45.0)).unwrap();
        s.undo().unwrap();
        assert_eq!(*s.virtual_matrix(), Mat4::IDENTITY);
        assert_eq!(s.undo(), Err(GameError::NothingToUndo));

        s.apply_physical(rz(90.0)).unwrap();
        s.apply_virtual(TransformStep::translate(1.0, 1.0, 0.0)).unwrap();
        let logged = s.event_log().len();
        s.reset().unwrap();
        assert_eq!(*s.physical_matrix(), Mat4::IDENTITY);
        assert_eq!(*s.virtual_matrix(), Mat4::IDENTITY);
        assert_eq!(s.event_log().len(), logged + 1);
        assert_eq!(s.status(), Status::Playing);
    }

    #[test]
    fn undo_then_reapply_is_bit_identical() {
        let mut s = GameState::new_session(spec(Level::Function, vec![rz(90.0)])).unwrap();
        s.apply_virtual(rz(37.0)).unwrap();
        s.apply_virtual(TransformStep::translate(0.5, -1.5, 2.0)).unwrap();
        let before = *s.virtual_matrix();
        s.undo().unwrap();
        s.apply_virtual(TransformStep::translate(0.5, -1.5, 2.0)).unwrap();
        assert_eq!(s.virtual_matrix().cells().map(f64::to_bits), before.cells().map(f64::to_bits));
    }

    #[test]
    fn reset_is_allowed_after_solving() {
        let mut s = GameState::new_session(spec(Level::Function, vec![rz(90.0)])).unwrap();
        s.apply_physical_target().unwrap();
        s.apply_virtual(rz(90.0)).unwrap();
        assert_eq!(s.status(), Status::Solved);
        s.reset().unwrap();
        assert_eq!(s.status(), Status::Playing);
    }

    #[test]
    fn replay_examples() {
        let sp = spec(Level::Function, vec![rz(90.0), TransformStep::translate(1.0, 0.0, 0.0)]);
        assert_eq!(replay(&sp, &[]).unwrap(), GameState::new_session(sp.clone()).unwrap());

        let mut live = GameState::new_session(sp.clone()).unwrap();
        live.apply_physical_target().unwrap();
        live.apply_virtual(rz(90.0)).unwrap();
        live.apply_virtual(TransformStep::translate(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(live.status(), Status::Solved);
        let replayed = replay(&sp, live.event_log()).unwrap();
        assert_eq!(replayed, live);
        assert_eq!(replayed.move_count(), 2);

        let mut gap = live.event_log().to_vec();
        gap.remove(1);
        assert!(matches!(replay(&sp, &gap), Err(GameError::CorruptLog(_))));
    }

    #[test]
    fn replay_reports_failing_event() {
        let sp = spec(Level::Mapping, vec![rz(90.0)]);
        let events = vec![MoveEvent {
            sequence_no: 1,
            actor: Actor::Physical,
            action: MoveAction::ApplyStep { step: TransformStep::scale(2.0) },
            timestamp_ms: 5,
        }];
        match replay(&sp, &events) {
            Err(GameError::ReplayHalted { sequence_no: 1, source }) => {
                assert!(matches!(*source, GameError::IllegalMove(_)))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn generator_is_deterministic() {
        for d in DIFFICULTY_RANGE {
            let a = generate_puzzle(7, Level::Function, d).unwrap();
            let b = generate_puzzle(7, Level::Function, d).unwrap();
            assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        }
        assert!(generate_puzzle(7, Level::Function, 0).is_err());
        assert!(generate_puzzle(7, Level::Function, 6).is_err());
    }

    #[test]
    fn generator_never_scales_below_function_level() {
        for seed in 0..200 {
            for level in [Level::Motion, Level::Mapping] {
                let s = generate_puzzle(seed, level, 5).unwrap();
                assert!(s.target_steps.iter().all(|t| !matches!(t, TransformStep::Scale { .. })));
            }
        }
    }
}
