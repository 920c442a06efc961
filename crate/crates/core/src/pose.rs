//! Inverse problems on poses: TRS factoring, alignment error, point-set
//! registration and step hints.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::xform::{det3, Angle, Mat4, RotationAxis, TransformStep, Vec3, XformError};

/// Largest `‖RᵀR − I‖∞` accepted for the normalized linear block.
pub const SHEAR_TOLERANCE: f64 = 1e-6;
/// Largest `‖RᵀR − I‖∞` accepted for an input claimed to be a rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-6;
/// Absolute allowance when comparing an error component to its tolerance,
/// so that a boundary value which is not exactly representable still counts
/// as inside.
pub const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoseSolveError {
    #[error(transparent)]
    Xform(#[from] XformError),
    #[error("linear block is a reflection or singular (det = {det:e})")]
    ReflectionOrSingular { det: f64 },
    #[error("linear block has shear or non-uniform scale (deviation {deviation:e})")]
    ShearOrNonuniformScale { deviation: f64 },
    #[error("not a rotation (orthonormality deviation {deviation:e})")]
    InvalidRotation { deviation: f64 },
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("poses already aligned, no hint needed")]
    NoHintNeeded,
    #[error("no single step reduces the alignment error")]
    NoImprovingStep,
    #[error("invalid weights or tolerance: {0}")]
    InvalidWeights(String),
}

/// Weights turning the three error components into one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    /// Per scene unit.
    pub translation: f64,
    /// Per degree.
    pub rotation: f64,
    /// Per unit of |ln scale ratio|.
    pub scale: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights { translation: 1.0, rotation: 0.1, scale: 10.0 }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<(), PoseSolveError> {
        let ok = |w: f64| w.is_finite() && w > 0.0;
        if ok(self.translation) && ok(self.rotation) && ok(self.scale) {
            Ok(())
        } else {
            Err(PoseSolveError::InvalidWeights(format!("weights must be positive, got {self:?}")))
        }
    }
}

/// Per-component bound used by [`is_aligned`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseTolerance {
    pub translation: f64,
    pub rotation_deg: f64,
    pub scale_log: f64,
}

impl Default for PoseTolerance {
    fn default() -> Self {
        PoseTolerance { translation: 0.25, rotation_deg: 2.0, scale_log: 0.02 }
    }
}

impl PoseTolerance {
    pub fn uniform(v: f64) -> Self {
        PoseTolerance { translation: v, rotation_deg: v, scale_log: v }
    }

    pub fn validate(&self) -> Result<(), PoseSolveError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if ok(self.translation) && ok(self.rotation_deg) && ok(self.scale_log) {
            Ok(())
        } else {
            Err(PoseSolveError::InvalidWeights(format!("tolerance must be non-negative, got {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisAngle {
    pub axis: Vec3,
    pub angle: Angle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseDecomposition {
    pub translation: Vec3,
    /// Pure rotation, zero translation column.
    pub rotation: Mat4,
    pub axis_angle: AxisAngle,
    pub scale: f64,
}

impl PoseDecomposition {
    /// `T · R · S`.
    pub fn recompose(&self) -> Mat4 {
        let mut linear = self.rotation.linear();
        for row in linear.iter_mut() {
            for v in row.iter_mut() {
                *v *= self.scale;
            }
        }
        Mat4::from_linear_translation(linear, self.translation)
    }

    /// The rigid part `T · R` (scale dropped).
    pub fn rigid(&self) -> Mat4 {
        Mat4::from_linear_translation(self.rotation.linear(), self.translation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseError {
    pub translation_error: f64,
    pub rotation_error: f64,
    pub scale_error: f64,
    pub total: f64,
}

impl PoseError {
    pub fn within(&self, tol: &PoseTolerance) -> bool {
        self.translation_error <= tol.translation + BOUNDARY_EPS
            && self.rotation_error <= tol.rotation_deg + BOUNDARY_EPS
            && self.scale_error <= tol.scale_log + BOUNDARY_EPS
    }
}

fn orthonormality_deviation(r: &[[f64; 3]; 3]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let dot = r[0][i] * r[0][j] + r[1][i] * r[1][j] + r[2][i] * r[2][j];
            let expected = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - expected).abs());
        }
    }
    worst
}

/// Twice the axial vector of the antisymmetric part: `2 sin θ · axis`.
fn skew_vector(r: &[[f64; 3]; 3]) -> Vec3 {
    Vec3::new(r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1])
}

fn canonical_sign(axis: Vec3) -> Vec3 {
    for c in axis.to_array() {
        if c.abs() > 1e-12 {
            return if c < 0.0 { -axis } else { axis };
        }
    }
    axis
}

/// Axis-angle of a rotation block, angle in [0°, 180°].
///
/// The angle comes from `atan2(|skew|, trace − 1)`, which equals the
/// arccos-of-trace formula for rotations but keeps full precision near 0°
/// and 180°. At 0° the axis is +z; at exactly 180° the axis is oriented so
/// its first nonzero component is positive.
pub fn axis_angle(r: &[[f64; 3]; 3]) -> AxisAngle {
    let skew = skew_vector(r);
    let sin2 = skew.norm();
    let cos2 = r[0][0] + r[1][1] + r[2][2] - 1.0;
    let theta = sin2.atan2(cos2);
    if sin2 == 0.0 && cos2 > 0.0 {
        return AxisAngle { axis: Vec3::Z, angle: Angle::ZERO };
    }
    if cos2 >= 0.0 {
        return AxisAngle { axis: skew.scale(1.0 / sin2), angle: Angle::from_radians(theta) };
    }
    // Obtuse: recover the axis from the symmetric part, (R + Rᵀ)/2 − cI = (1 − c)·aaᵀ.
    let c = theta.cos();
    let b = |i: usize, j: usize| 0.5 * (r[i][j] + r[j][i]) - if i == j { c } else { 0.0 };
    let k = (0..3).max_by(|&i, &j| b(i, i).total_cmp(&b(j, j))).unwrap_or(0);
    let col = Vec3::new(b(0, k), b(1, k), b(2, k));
    let mut axis = col.scale(1.0 / col.norm());
    let d = axis.dot(skew);
    if d.abs() <= 1e-12 {
        axis = canonical_sign(axis);
    } else if d < 0.0 {
        axis = -axis;
    }
    AxisAngle { axis, angle: Angle::from_radians(theta) }
}

/// Angles `[α, β, γ]` such that `R = R_z(γ) · R_y(β) · R_x(α)`, i.e. the
/// rotation is reached by turning about world x, then y, then z.
pub fn euler_xyz_world(r: &[[f64; 3]; 3]) -> [Angle; 3] {
    let cb = (r[0][0] * r[0][0] + r[1][0] * r[1][0]).sqrt();
    let beta = (-r[2][0]).atan2(cb);
    if cb > 1e-9 {
        let alpha = r[2][1].atan2(r[2][2]);
        let gamma = r[1][0].atan2(r[0][0]);
        [alpha, beta, gamma].map(Angle::from_radians)
    } else {
        let gamma = (-r[0][1]).atan2(r[1][1]);
        [0.0, beta, gamma].map(Angle::from_radians)
    }
}

pub fn decompose_trs(m: &Mat4) -> Result<PoseDecomposition, PoseSolveError> {
    if !m.is_finite() {
        return Err(XformError::InvalidParameter("matrix entries must be finite".into()).into());
    }
    if !m.is_affine() {
        return Err(XformError::UnsupportedMatrix.into());
    }
    let linear = m.linear();
    let det = det3(&linear);
    if !(det > 0.0) {
        return Err(PoseSolveError::ReflectionOrSingular { det });
    }
    let scale = det.cbrt();
    let rot = linear.map(|row| row.map(|v| v / scale));
    let deviation = orthonormality_deviation(&rot);
    if deviation > SHEAR_TOLERANCE {
        return Err(PoseSolveError::ShearOrNonuniformScale { deviation });
    }
    Ok(PoseDecomposition {
        translation: m.translation(),
        rotation: Mat4::from_linear_translation(rot, Vec3::ZERO),
        axis_angle: axis_angle(&rot),
        scale,
    })
}

fn checked_rotation(m: &Mat4) -> Result<[[f64; 3]; 3], PoseSolveError> {
    let r = m.linear();
    let deviation = orthonormality_deviation(&r);
    if !deviation.is_finite() || deviation > ROTATION_TOLERANCE || det3(&r) <= 0.0 {
        return Err(PoseSolveError::InvalidRotation { deviation });
    }
    Ok(r)
}

/// Geodesic angle between two rotations, in [0°, 180°].
pub fn rotation_angle_between(r1: &Mat4, r2: &Mat4) -> Result<Angle, PoseSolveError> {
    let a = checked_rotation(r1)?;
    let b = checked_rotation(r2)?;
    Ok(geodesic(&a, &b))
}

fn geodesic(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> Angle {
    // rel = aᵀ·b; swapping the arguments transposes rel exactly.
    let rel: [[f64; 3]; 3] =
        std::array::from_fn(|i| std::array::from_fn(|j| a[0][i] * b[0][j] + a[1][i] * b[1][j] + a[2][i] * b[2][j]));
    let sin2 = skew_vector(&rel).norm();
    let cos2 = rel[0][0] + rel[1][1] + rel[2][2] - 1.0;
    Angle::from_radians(sin2.atan2(cos2))
}

fn error_between(a: &PoseDecomposition, b: &PoseDecomposition, w: &Weights) -> PoseError {
    let translation_error = a.translation.distance(b.translation);
    let rotation_error = geodesic(&a.rotation.linear(), &b.rotation.linear()).deg();
    let scale_error = (a.scale.ln() - b.scale.ln()).abs();
    PoseError {
        translation_error,
        rotation_error,
        scale_error,
        total: w.translation * translation_error + w.rotation * rotation_error + w.scale * scale_error,
    }
}

pub fn pose_error(virtual_pose: &Mat4, physical: &Mat4, weights: &Weights) -> Result<PoseError, PoseSolveError> {
    weights.validate()?;
    let a = decompose_trs(virtual_pose)?;
    let b = decompose_trs(physical)?;
    Ok(error_between(&a, &b, weights))
}

/// The world-frame step `D` with `D · virtual = physical`.
pub fn alignment_delta(virtual_pose: &Mat4, physical: &Mat4) -> Result<Mat4, PoseSolveError> {
    Ok(physical * &virtual_pose.invert()?)
}

pub fn is_aligned(virtual_pose: &Mat4, physical: &Mat4, tol: &PoseTolerance) -> Result<bool, PoseSolveError> {
    let e = pose_error(virtual_pose, physical, &Weights::default())?;
    Ok(e.within(tol))
}

/// Ordered `(pre-image, image)` point pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCorrespondences {
    pairs: Vec<(Vec3, Vec3)>,
}

impl PointCorrespondences {
    pub fn new(pairs: Vec<(Vec3, Vec3)>) -> Result<Self, PoseSolveError> {
        if pairs.len() < 3 {
            return Err(PoseSolveError::DegenerateConfiguration(format!(
                "need at least 3 correspondences, got {}",
                pairs.len()
            )));
        }
        if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(PoseSolveError::DegenerateConfiguration("non-finite point".into()));
        }
        let corr = PointCorrespondences { pairs };
        corr.check_spread()?;
        Ok(corr)
    }

    pub fn pairs(&self) -> &[(Vec3, Vec3)] {
        &self.pairs
    }

    fn centroids(&self) -> (Vector3<f64>, Vector3<f64>) {
        let n = self.pairs.len() as f64;
        let (sp, sq) = self.pairs.iter().fold((Vector3::zeros(), Vector3::zeros()), |(sp, sq), (p, q)| {
            (sp + to_na(*p), sq + to_na(*q))
        });
        (sp / n, sq / n)
    }

    fn check_spread(&self) -> Result<(), PoseSolveError> {
        let (cp, _) = self.centroids();
        let cov = self.pairs.iter().fold(Matrix3::zeros(), |acc, (p, _)| {
            let d = to_na(*p) - cp;
            acc + d * d.transpose()
        });
        let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        if ev[0] <= 0.0 || ev[1] <= ev[0] * 1e-12 {
            return Err(PoseSolveError::DegenerateConfiguration("pre-image points are collinear".into()));
        }
        Ok(())
    }
}

fn to_na(v: Vec3) -> Vector3<f64> {
    Vector3::new(v.x, v.y, v.z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidFit {
    pub rotation: Mat4,
    pub translation: Vec3,
    /// Root-mean-square distance between mapped pre-image points and images.
    pub rms: f64,
}

impl RigidFit {
    pub fn matrix(&self) -> Mat4 {
        Mat4::from_linear_translation(self.rotation.linear(), self.translation)
    }
}

/// Least-squares rigid motion mapping pre-image points onto image points
/// (SVD of the cross-covariance, determinant forced to +1).
pub fn kabsch_align(corr: &PointCorrespondences) -> Result<RigidFit, PoseSolveError> {
    corr.check_spread()?;
    let (cp, cq) = corr.centroids();
    let h = corr.pairs.iter().fold(Matrix3::zeros(), |acc, (p, q)| {
        acc + (to_na(*p) - cp) * (to_na(*q) - cq).transpose()
    });
    let svd = h.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(PoseSolveError::DegenerateConfiguration("SVD did not converge".into())),
    };
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let t = cq - r * cp;
    let linear: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)]));
    let translation = Vec3::new(t[0], t[1], t[2]);
    let fit = RigidFit { rotation: Mat4::from_linear_translation(linear, Vec3::ZERO), translation, rms: 0.0 };
    let m = fit.matrix();
    let sq: f64 = corr
        .pairs
        .iter()
        .map(|(p, q)| {
            let mapped = m.apply_point(*p).expect("affine by construction");
            let d = mapped.distance(*q);
            d * d
        })
        .sum();
    Ok(RigidFit { rms: (sq / corr.pairs.len() as f64).sqrt(), ..fit })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hint {
    pub suggested_step: TransformStep,
    /// Total pose error after applying the step.
    pub residual_after: f64,
    /// Length of the shortest hint plan this step starts, when one exists
    /// within [`HINT_SEARCH_DEPTH`] steps.
    pub plan_len: Option<usize>,
}

/// Longest step sequence the hint planner looks ahead.
pub const HINT_SEARCH_DEPTH: usize = 3;

const PARAM_EPS: f64 = 1e-12;
const ANGLE_EPS: f64 = 1e-9;

fn snap(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if (x - r).abs() < 1e-9 {
        r
    } else {
        x
    }
}

/// Single-factor steps that each remove one kind of residual: the exact
/// translation gap, the best rotation about each world axis, and the exact
/// scale ratio. Order: translate, rotate x/y/z, scale.
fn candidate_steps(v: &PoseDecomposition, p: &PoseDecomposition) -> Vec<TransformStep> {
    let mut out = Vec::with_capacity(5);
    let dt = p.translation - v.translation;
    if dt.norm() > PARAM_EPS {
        out.push(TransformStep::Translate { v: Vec3::new(snap(dt.x), snap(dt.y), snap(dt.z)) });
    }
    let rv = v.rotation.linear();
    let rp = p.rotation.linear();
    // q = Rv · Rpᵀ; R_k(φ)·Rv is closest to Rp where trace(R_k(φ)·q) peaks.
    let q: [[f64; 3]; 3] =
        std::array::from_fn(|i| std::array::from_fn(|j| rv[i][0] * rp[j][0] + rv[i][1] * rp[j][1] + rv[i][2] * rp[j][2]));
    for axis in RotationAxis::ALL {
        let i = (axis.index() + 1) % 3;
        let j = (axis.index() + 2) % 3;
        let phi = (q[i][j] - q[j][i]).atan2(q[i][i] + q[j][j]).to_degrees();
        if phi.abs() > ANGLE_EPS {
            out.push(TransformStep::Rotate { axis, angle: Angle::degrees(snap(phi)) });
        }
    }
    let dl = p.scale.ln() - v.scale.ln();
    if dl.abs() > PARAM_EPS {
        out.push(TransformStep::Scale { factor: snap(p.scale / v.scale) });
    }
    out
}

struct HintSearch<'a> {
    target: PoseDecomposition,
    weights: &'a Weights,
    tol: &'a PoseTolerance,
    allowed: &'a dyn Fn(&TransformStep) -> bool,
}

impl HintSearch<'_> {
    fn evaluate(&self, v: &Mat4) -> Result<(PoseDecomposition, PoseError), PoseSolveError> {
        let d = decompose_trs(v)?;
        let e = error_between(&d, &self.target, self.weights);
        Ok((d, e))
    }

    /// Successors whose total error is strictly lower than `current`.
    fn improving(
        &self,
        v: &Mat4,
        dv: &PoseDecomposition,
        current: f64,
    ) -> Vec<(TransformStep, Mat4, PoseDecomposition, PoseError)> {
        candidate_steps(dv, &self.target)
            .into_iter()
            .filter(|s| (self.allowed)(s))
            .filter_map(|s| {
                let next = &s.matrix().ok()? * v;
                let (d, e) = self.evaluate(&next).ok()?;
                (e.total < current).then_some((s, next, d, e))
            })
            .collect()
    }

    fn solvable_within(&self, v: &Mat4, dv: &PoseDecomposition, e: &PoseError, remaining: usize) -> bool {
        if e.within(self.tol) {
            return true;
        }
        if remaining == 0 {
            return false;
        }
        self.improving(v, dv, e.total)
            .iter()
            .any(|(_, next, d, ne)| self.solvable_within(next, d, ne, remaining - 1))
    }
}

fn pick_best(options: impl Iterator<Item = (TransformStep, f64)>) -> Option<(TransformStep, f64)> {
    // Candidates arrive in translate > rotate > scale order, so keeping the
    // first of equal totals implements the tie-break.
    options.fold(None, |best, (s, total)| match best {
        Some((_, b)) if total >= b - 1e-12 => best,
        _ => Some((s, total)),
    })
}

/// Next step towards alignment.
///
/// Picks, among the candidate single-factor steps that start the shortest
/// strictly-decreasing step sequence reaching alignment (up to
/// [`HINT_SEARCH_DEPTH`] steps), the one with the largest error reduction.
/// If no such sequence exists it falls back to the plain greedy choice.
pub fn suggest_hint(
    virtual_pose: &Mat4,
    physical: &Mat4,
    weights: &Weights,
    tol: &PoseTolerance,
) -> Result<Hint, PoseSolveError> {
    suggest_hint_filtered(virtual_pose, physical, weights, tol, &|_| true)
}

/// [`suggest_hint`] restricted to steps accepted by `allowed`.
pub fn suggest_hint_filtered(
    virtual_pose: &Mat4,
    physical: &Mat4,
    weights: &Weights,
    tol: &PoseTolerance,
    allowed: &dyn Fn(&TransformStep) -> bool,
) -> Result<Hint, PoseSolveError> {
    weights.validate()?;
    tol.validate()?;
    let search = HintSearch { target: decompose_trs(physical)?, weights, tol, allowed };
    let (dv, e) = search.evaluate(virtual_pose)?;
    if e.within(tol) {
        return Err(PoseSolveError::NoHintNeeded);
    }
    let first = search.improving(virtual_pose, &dv, e.total);
    for len in 1..=HINT_SEARCH_DEPTH {
        let viable = first
            .iter()
            .filter(|(_, next, d, ne)| search.solvable_within(next, d, ne, len - 1))
            .map(|(s, _, _, ne)| (*s, ne.total));
        if let Some((step, total)) = pick_best(viable) {
            return Ok(Hint { suggested_step: step, residual_after: total, plan_len: Some(len) });
        }
    }
    pick_best(first.iter().map(|(s, _, _, ne)| (*s, ne.total)))
        .map(|(step, total)| Hint { suggested_step: step, residual_after: total, plan_len: None })
        .ok_or(PoseSolveError::NoImprovingStep)
}
