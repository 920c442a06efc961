//! Render-ready geometry derived from a game state: the brick model and its
//! wireframe, coordinate frames, mapped points, dimension lines, rotation
//! arcs, axis highlights and the two-row matrix panel.

use serde::{Deserialize, Serialize};

use crate::pose::{self, euler_xyz_world};
use crate::puzzle::{Actor, Control, GameState, DEFAULT_MODEL_ID};
use crate::xform::{multiply_expansion, Angle, Mat4, MulExpansion, RotationAxis, Vec3, XformError};

/// Arc and dimension annotations below this size are not emitted.
const MIN_ANNOTATION: f64 = 1e-9;
/// Default number of representative points.
pub const DEFAULT_MAPPED_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Brick {
    /// Stud units.
    pub min_corner: Vec3,
    /// Positive extent along each axis, stud units.
    pub size: Vec3,
    pub color: Rgb,
}

impl Brick {
    /// Corner `i`, where bit 0/1/2 of `i` selects the max side in x/y/z.
    pub fn corner(&self, i: usize) -> Vec3 {
        let pick = |bit: usize, lo: f64, len: f64| if i & bit != 0 { lo + len } else { lo };
        Vec3::new(
            pick(1, self.min_corner.x, self.size.x),
            pick(2, self.min_corner.y, self.size.y),
            pick(4, self.min_corner.z, self.size.z),
        )
    }

    pub fn corners(&self) -> [Vec3; 8] {
        std::array::from_fn(|i| self.corner(i))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrickModel {
    pub id: String,
    pub bricks: Vec<Brick>,
}

impl BrickModel {
    /// A small three-brick house used by generated puzzles.
    pub fn demo() -> BrickModel {
        BrickModel {
            id: DEFAULT_MODEL_ID.to_string(),
            bricks: vec![
                Brick { min_corner: Vec3::new(-2.0, -1.0, 0.0), size: Vec3::new(4.0, 2.0, 1.0), color: Rgb(200, 30, 30) },
                Brick { min_corner: Vec3::new(-1.0, -1.0, 1.0), size: Vec3::new(2.0, 2.0, 1.0), color: Rgb(30, 80, 200) },
                Brick { min_corner: Vec3::new(-2.0, 0.0, 2.0), size: Vec3::new(4.0, 1.0, 1.0), color: Rgb(240, 200, 20) },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("model id is empty".into());
        }
        if self.bricks.is_empty() {
            return Err(format!("model `{}` has no bricks", self.id));
        }
        for (i, b) in self.bricks.iter().enumerate() {
            let s = b.size;
            if !b.min_corner.is_finite() || !s.is_finite() || s.x <= 0.0 || s.y <= 0.0 || s.z <= 0.0 {
                return Err(format!("brick {i} of `{}` has a non-positive or non-finite size", self.id));
            }
        }
        Ok(())
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for c in self.bricks.iter().flat_map(Brick::corners) {
            lo = Vec3::new(lo.x.min(c.x), lo.y.min(c.y), lo.z.min(c.z));
            hi = Vec3::new(hi.x.max(c.x), hi.y.max(c.y), hi.z.max(c.z));
        }
        (lo, hi)
    }

    /// Radius of the sphere around the bounding box.
    pub fn bounding_radius(&self) -> f64 {
        let (lo, hi) = self.bounds();
        0.5 * lo.distance(hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub from: Vec3,
    pub to: Vec3,
}

impl Segment {
    pub fn length(&self) -> f64 {
        self.from.distance(self.to)
    }
}

/// Corner index pairs of the 12 box edges: x-parallel, then y, then z.
const BOX_EDGES: [(usize, usize); 12] = [
    (0, 1), (2, 3), (4, 5), (6, 7),
    (0, 2), (1, 3), (4, 6), (5, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
];

/// 12 edges per brick in brick order.
pub fn wireframe_edges(model: &BrickModel) -> Vec<Segment> {
    model
        .bricks
        .iter()
        .flat_map(|b| BOX_EDGES.iter().map(move |&(i, j)| Segment { from: b.corner(i), to: b.corner(j) }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappedPointPair {
    pub pre: Vec3,
    pub img: Vec3,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedPoints {
    pub pairs: Vec<MappedPointPair>,
    /// Set when fewer points than requested were available.
    pub clamped_from: Option<usize>,
}

/// Distinct brick corners, farthest from the bounding-box center first,
/// ties broken by coordinates.
pub fn representative_points(model: &BrickModel) -> Vec<Vec3> {
    let (lo, hi) = model.bounds();
    let center = (lo + hi).scale(0.5);
    let mut pts: Vec<Vec3> = Vec::new();
    for c in model.bricks.iter().flat_map(Brick::corners) {
        if !pts.contains(&c) {
            pts.push(c);
        }
    }
    pts.sort_by(|a, b| {
        center
            .distance(*b)
            .total_cmp(&center.distance(*a))
            .then(a.x.total_cmp(&b.x))
            .then(a.y.total_cmp(&b.y))
            .then(a.z.total_cmp(&b.z))
    });
    pts
}

pub fn mapped_points(model: &BrickModel, m: &Mat4, n: usize) -> Result<MappedPoints, XformError> {
    if n == 0 {
        return Err(XformError::InvalidParameter("number of mapped points must be at least 1".into()));
    }
    let pts = representative_points(model);
    let clamped_from = (n > pts.len()).then(|| {
        log::warn!("requested {n} mapped points, model `{}` has {}", model.id, pts.len());
        n
    });
    let pairs = pts
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(index, pre)| Ok(MappedPointPair { pre, img: m.apply_point(pre)?, index }))
        .collect::<Result<_, XformError>>()?;
    Ok(MappedPoints { pairs, clamped_from })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameRole {
    World,
    PreImage,
    Image,
    Virtual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTriad {
    pub role: FrameRole,
    pub origin: Vec3,
    /// Rotation and translation only.
    pub basis: Mat4,
}

impl FrameTriad {
    fn new(role: FrameRole, basis: Mat4) -> Self {
        FrameTriad { role, origin: basis.translation(), basis }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Annotation {
    DimensionLine {
        from: Vec3,
        to: Vec3,
        label: f64,
    },
    /// `sweep > 0` is counterclockwise looking down the positive axis.
    RotationArc {
        center: Vec3,
        axis: RotationAxis,
        radius: f64,
        start_angle: Angle,
        sweep: Angle,
        label: Angle,
    },
    AxisHighlight {
        axis: RotationAxis,
        plane_normal: RotationAxis,
    },
    MappedPointPair(MappedPointPair),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneAnnotations {
    pub annotations: Vec<Annotation>,
    pub frames: Vec<FrameTriad>,
}

/// Signed per-axis turns that make up a rotation block: a single arc for a
/// rotation about a coordinate axis, otherwise the world x-y-z sequence.
pub fn rotation_arcs(linear: &[[f64; 3]; 3]) -> Vec<(RotationAxis, Angle)> {
    let aa = pose::axis_angle(linear);
    if aa.angle.deg().abs() <= MIN_ANNOTATION {
        return Vec::new();
    }
    if let Some(axis) = RotationAxis::ALL.into_iter().find(|a| aa.axis.component(*a).abs() >= 1.0 - 1e-12) {
        let sweep = if aa.axis.component(axis) < 0.0 { -aa.angle } else { aa.angle };
        return vec![(axis, sweep)];
    }
    RotationAxis::ALL
        .into_iter()
        .zip(euler_xyz_world(linear))
        .filter(|(_, a)| a.deg().abs() > MIN_ANNOTATION)
        .collect()
}

fn rigid_or_identity(m: &Mat4) -> Mat4 {
    pose::decompose_trs(m).map(|d| d.rigid()).unwrap_or(Mat4::IDENTITY)
}

/// Tracking graphics for the physical model relative to the pre-image,
/// plus the four coordinate frames.
pub fn build_annotations(state: &GameState, model: &BrickModel, active: Option<Control>) -> SceneAnnotations {
    let mut annotations = Vec::new();
    let physical = state.physical_matrix();
    if let Ok(d) = pose::decompose_trs(physical) {
        let label = Vec3::ZERO.distance(d.translation);
        if label > 0.0 {
            annotations.push(Annotation::DimensionLine { from: Vec3::ZERO, to: d.translation, label });
        }
        let radius = 0.5 * model.bounding_radius();
        for (axis, sweep) in rotation_arcs(&d.rotation.linear()) {
            annotations.push(Annotation::RotationArc {
                center: Vec3::ZERO,
                axis,
                radius,
                start_angle: Angle::ZERO,
                sweep,
                label: sweep,
            });
        }
    }
    if let Some(axis) = active.and_then(Control::rotation_axis) {
        annotations.push(Annotation::AxisHighlight { axis, plane_normal: axis });
    }
    let frames = vec![
        FrameTriad::new(FrameRole::World, Mat4::IDENTITY),
        FrameTriad::new(FrameRole::PreImage, Mat4::IDENTITY),
        FrameTriad::new(FrameRole::Image, rigid_or_identity(physical)),
        FrameTriad::new(FrameRole::Virtual, rigid_or_identity(state.virtual_matrix())),
    ];
    SceneAnnotations { annotations, frames }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellRegion {
    RotationScaleRegion,
    TranslationRegion,
    BottomRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorTheme {
    Physical,
    VirtualGreen,
}

/// Region of a cell in the 4×4 layout (zero-based indices).
pub fn cell_region(row: usize, col: usize) -> CellRegion {
    match (row, col) {
        (3, _) => CellRegion::BottomRow,
        (_, 3) => CellRegion::TranslationRegion,
        _ => CellRegion::RotationScaleRegion,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    /// Row-major entries.
    pub cells: [f64; 16],
    pub highlight: [CellRegion; 16],
    pub color_theme: ColorTheme,
}

impl PanelRow {
    fn new(m: &Mat4, color_theme: ColorTheme) -> Self {
        PanelRow {
            cells: m.cells(),
            highlight: std::array::from_fn(|k| cell_region(k / 4, k % 4)),
            color_theme,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelExpansion {
    /// Which panel row the product belongs to.
    pub row: Actor,
    pub expansion: MulExpansion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixPanel {
    /// Physical row first, virtual row second.
    pub rows: [PanelRow; 2],
    pub expansion: Option<PanelExpansion>,
}

pub fn matrix_panel(state: &GameState) -> MatrixPanel {
    MatrixPanel {
        rows: [
            PanelRow::new(state.physical_matrix(), ColorTheme::Physical),
            PanelRow::new(state.virtual_matrix(), ColorTheme::VirtualGreen),
        ],
        expansion: state
            .last_composition()
            .map(|c| PanelExpansion { row: c.actor, expansion: multiply_expansion(&c.left, &c.right) }),
    }
}
