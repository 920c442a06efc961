//! Homogeneous 4×4 transformation algebra.
//!
//! Conventions used throughout the crate:
//!
//! * column vectors, `p' = M · p`, so translation lives in column 4 (index 3);
//! * right-handed axes, positive angles counterclockwise when looking down
//!   the positive axis towards the origin;
//! * angles are carried in degrees and only converted to radians for trig;
//! * a step appended to a sequence is applied in the world frame, i.e. it
//!   left-multiplies the accumulated matrix.
//!
//! Matrix indices in this API are zero-based: `m.at(0, 3)` is the entry in
//! row 1, column 4 (the x component of the translation).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest |det| accepted by [`Mat4::invert`].
pub const SINGULAR_DET: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum XformError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported matrix: bottom row is not (0, 0, 0, 1)")]
    UnsupportedMatrix,
    #[error("singular matrix (det = {det:e})")]
    SingularMatrix { det: f64 },
}

/// A point or displacement in scene units (one unit is one stud pitch).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    /// Euclidean length. Computed as `sqrt(x² + y² + z²)` so that scaling a
    /// vector by a power of two scales the length by exactly the same factor.
    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: Vec3) -> f64 {
        (other - *self).norm()
    }

    pub fn scale(&self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn component(&self, axis: RotationAxis) -> f64 {
        match axis {
            RotationAxis::X => self.x,
            RotationAxis::Y => self.y,
            RotationAxis::Z => self.z,
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// An angle in degrees.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    pub const fn degrees(deg: f64) -> Self {
        Angle(deg)
    }

    pub fn from_radians(rad: f64) -> Self {
        Angle(rad.to_degrees())
    }

    pub fn deg(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// Equivalent angle in (-180, 180].
    pub fn normalized(self) -> Angle {
        let mut d = self.0.rem_euclid(360.0);
        if d > 180.0 {
            d -= 360.0;
        }
        Angle(d)
    }

    /// `(sin, cos)` of the angle. Multiples of 90° yield exact 0 and ±1, and
    /// the result is odd in the angle: `sin_cos(-a) == (-s, c)` bit for bit.
    pub fn sin_cos(self) -> (f64, f64) {
        let d = self.0;
        if d % 90.0 == 0.0 {
            let (s, c) = match (d.abs() / 90.0).rem_euclid(4.0) as u8 {
                0 => (0.0, 1.0),
                1 => (1.0, 0.0),
                2 => (0.0, -1.0),
                _ => (-1.0, 0.0),
            };
            return (if d < 0.0 { -s } else { s }, c);
        }
        let (s, c) = d.abs().to_radians().sin_cos();
        (if d < 0.0 { -s } else { s }, c)
    }
}

impl Neg for Angle {
    type Output = Angle;
    fn neg(self) -> Angle {
        Angle(-self.0)
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}°", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationAxis {
    X,
    Y,
    Z,
}

impl RotationAxis {
    pub const ALL: [RotationAxis; 3] = [RotationAxis::X, RotationAxis::Y, RotationAxis::Z];

    pub fn index(self) -> usize {
        match self {
            RotationAxis::X => 0,
            RotationAxis::Y => 1,
            RotationAxis::Z => 2,
        }
    }

    pub fn unit(self) -> Vec3 {
        match self {
            RotationAxis::X => Vec3::X,
            RotationAxis::Y => Vec3::Y,
            RotationAxis::Z => Vec3::Z,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RotationAxis::X => "x",
            RotationAxis::Y => "y",
            RotationAxis::Z => "z",
        }
    }
}

impl fmt::Display for RotationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One user action on a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformStep {
    Translate { v: Vec3 },
    Rotate { axis: RotationAxis, angle: Angle },
    Scale { factor: f64 },
}

impl TransformStep {
    pub fn translate(x: f64, y: f64, z: f64) -> Self {
        TransformStep::Translate { v: Vec3::new(x, y, z) }
    }

    pub fn rotate(axis: RotationAxis, degrees: f64) -> Self {
        TransformStep::Rotate { axis, angle: Angle::degrees(degrees) }
    }

    pub fn scale(factor: f64) -> Self {
        TransformStep::Scale { factor }
    }

    pub fn matrix(&self) -> Result<Mat4, XformError> {
        match *self {
            TransformStep::Translate { v } => translation_matrix(v),
            TransformStep::Rotate { axis, angle } => rotation_matrix(axis, angle),
            TransformStep::Scale { factor } => scale_matrix(factor),
        }
    }

    pub fn validate(&self) -> Result<(), XformError> {
        self.matrix().map(|_| ())
    }
}

impl fmt::Display for TransformStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformStep::Translate { v } => write!(f, "translate {} {} {}", v.x, v.y, v.z),
            TransformStep::Rotate { axis, angle } => write!(f, "r{} {}", axis, angle.deg()),
            TransformStep::Scale { factor } => write!(f, "scale {}", factor),
        }
    }
}

/// Parses the `Display` form; `t`, `s` and `rotate <axis> <deg>` are
/// accepted as shorthands.
impl std::str::FromStr for TransformStep {
    type Err = XformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || XformError::InvalidParameter(format!("cannot parse step `{s}`"));
        let words: Vec<&str> = s.split_whitespace().collect();
        let num = |w: &str| w.parse::<f64>().map_err(|_| bad());
        let axis = |w: &str| match w {
            "x" => Ok(RotationAxis::X),
            "y" => Ok(RotationAxis::Y),
            "z" => Ok(RotationAxis::Z),
            _ => Err(bad()),
        };
        let step = match words.as_slice() {
            [kw, x, y, z] if matches!(*kw, "translate" | "t") => TransformStep::translate(num(x)?, num(y)?, num(z)?),
            [kw, a, deg] if matches!(*kw, "rotate" | "r") => TransformStep::rotate(axis(a)?, num(deg)?),
            [kw, deg] if kw.len() == 2 && kw.starts_with('r') => TransformStep::rotate(axis(&kw[1..])?, num(deg)?),
            [kw, k] if matches!(*kw, "scale" | "s") => TransformStep::scale(num(k)?),
            _ => return Err(bad()),
        };
        step.validate()?;
        Ok(step)
    }
}

/// Row-major 4×4 matrix acting on column vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mat4 {
    rows: [[f64; 4]; 4],
}

impl Default for Mat4 {
    fn default() -> Self {
        Mat4::IDENTITY
    }
}

/// Sum of four products in a fixed left-to-right order. Both the matrix
/// product and the educational expansion go through this so they agree bit
/// for bit.
#[inline]
pub(crate) fn sum_terms(terms: [f64; 4]) -> f64 {
    ((terms[0] + terms[1]) + terms[2]) + terms[3]
}

impl Mat4 {
    pub const IDENTITY: Mat4 = Mat4 {
        rows: [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
    };

    pub const fn from_rows(rows: [[f64; 4]; 4]) -> Self {
        Mat4 { rows }
    }

    /// Affine matrix from a 3×3 linear block and a translation column.
    pub fn from_linear_translation(linear: [[f64; 3]; 3], t: Vec3) -> Self {
        let l = linear;
        Mat4::from_rows([
            [l[0][0], l[0][1], l[0][2], t.x],
            [l[1][0], l[1][1], l[1][2], t.y],
            [l[2][0], l[2][1], l[2][2], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ])
    }

    pub fn rows(&self) -> &[[f64; 4]; 4] {
        &self.rows
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.rows[row][col]
    }

    /// The 16 entries in row-major order.
    pub fn cells(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for (i, row) in self.rows.iter().enumerate() {
            out[i * 4..i * 4 + 4].copy_from_slice(row);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
    }

    pub fn is_affine(&self) -> bool {
        self.rows[3] == [0.0, 0.0, 0.0, 1.0]
    }

    pub fn transpose(&self) -> Mat4 {
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.rows[j][i];
            }
        }
        Mat4::from_rows(out)
    }

    pub fn linear(&self) -> [[f64; 3]; 3] {
        let r = &self.rows;
        [
            [r[0][0], r[0][1], r[0][2]],
            [r[1][0], r[1][1], r[1][2]],
            [r[2][0], r[2][1], r[2][2]],
        ]
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.rows[0][3], self.rows[1][3], self.rows[2][3])
    }

    /// Determinant of the upper-left 3×3 block.
    pub fn linear_det(&self) -> f64 {
        det3(&self.linear())
    }

    pub fn max_abs_diff(&self, other: &Mat4) -> f64 {
        self.rows
            .iter()
            .flatten()
            .zip(other.rows.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &Mat4, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    pub fn apply_point(&self, p: Vec3) -> Result<Vec3, XformError> {
        if !self.is_affine() {
            return Err(XformError::UnsupportedMatrix);
        }
        let r = &self.rows;
        let row = |i: usize| sum_terms([r[i][0] * p.x, r[i][1] * p.y, r[i][2] * p.z, r[i][3]]);
        Ok(Vec3::new(row(0), row(1), row(2)))
    }

    /// Applies only the linear block (directions, not points).
    pub fn apply_vector(&self, v: Vec3) -> Vec3 {
        let r = &self.rows;
        let row = |i: usize| r[i][0] * v.x + r[i][1] * v.y + r[i][2] * v.z;
        Vec3::new(row(0), row(1), row(2))
    }

    pub fn det(&self) -> f64 {
        let m = &self.rows;
        let mut det = 0.0;
        for c in 0..4 {
            let mut minor = [[0.0; 3]; 3];
            for (i, row) in minor.iter_mut().enumerate() {
                let mut k = 0;
                for j in 0..4 {
                    if j != c {
                        row[k] = m[i + 1][j];
                        k += 1;
                    }
                }
            }
            let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
            det += sign * m[0][c] * det3(&minor);
        }
        det
    }

    /// Gauss-Jordan inverse with partial pivoting.
    pub fn invert(&self) -> Result<Mat4, XformError> {
        let det = self.det();
        if !det.is_finite() || det.abs() < SINGULAR_DET {
            return Err(XformError::SingularMatrix { det });
        }
        let mut a = self.rows;
        let mut inv = Mat4::IDENTITY.rows;
        for col in 0..4 {
            let pivot = (col..4)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap_or(col);
            if a[pivot][col] == 0.0 {
                return Err(XformError::SingularMatrix { det });
            }
            a.swap(col, pivot);
            inv.swap(col, pivot);
            let p = a[col][col];
            for j in 0..4 {
                a[col][j] /= p;
                inv[col][j] /= p;
            }
            for i in 0..4 {
                if i == col {
                    continue;
                }
                let f = a[i][col];
                if f == 0.0 {
                    continue;
                }
                for j in 0..4 {
                    a[i][j] -= f * a[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
            }
        }
        // Pivoting noise must not leak into the affine row.
        if self.is_affine() {
            inv[3] = [0.0, 0.0, 0.0, 1.0];
        }
        Ok(Mat4::from_rows(inv))
    }
}

impl Mul for Mat4 {
    type Output = Mat4;
    fn mul(self, rhs: Mat4) -> Mat4 {
        &self * &rhs
    }
}

impl Mul for &Mat4 {
    type Output = Mat4;
    fn mul(self, rhs: &Mat4) -> Mat4 {
        let a = &self.rows;
        let b = &rhs.rows;
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = sum_terms([
                    a[i][0] * b[0][j],
                    a[i][1] * b[1][j],
                    a[i][2] * b[2][j],
                    a[i][3] * b[3][j],
                ]);
            }
        }
        Mat4::from_rows(out)
    }
}

impl fmt::Display for Mat4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, row) in self.rows.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "[{:>9.4} {:>9.4} {:>9.4} {:>9.4}]", row[0], row[1], row[2], row[3])?;
        }
        Ok(())
    }
}

pub(crate) fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn param_error(what: &str, value: impl fmt::Display) -> XformError {
    XformError::InvalidParameter(format!("{what} must be finite, got {value}"))
}

pub fn rotation_matrix(axis: RotationAxis, angle: Angle) -> Result<Mat4, XformError> {
    if !angle.is_finite() {
        return Err(param_error("rotation angle", angle.deg()));
    }
    let (s, c) = angle.sin_cos();
    let linear = match axis {
        RotationAxis::X => [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        RotationAxis::Y => [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        RotationAxis::Z => [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
    };
    Ok(Mat4::from_linear_translation(linear, Vec3::ZERO))
}

pub fn translation_matrix(v: Vec3) -> Result<Mat4, XformError> {
    if !v.is_finite() {
        return Err(param_error("translation", v));
    }
    let mut rows = Mat4::IDENTITY.rows;
    rows[0][3] = v.x;
    rows[1][3] = v.y;
    rows[2][3] = v.z;
    Ok(Mat4::from_rows(rows))
}

pub fn scale_matrix(factor: f64) -> Result<Mat4, XformError> {
    if !factor.is_finite() || factor <= 0.0 {
        return Err(XformError::InvalidParameter(format!(
            "scale factor must be finite and > 0, got {factor}"
        )));
    }
    let mut rows = Mat4::IDENTITY.rows;
    for (i, row) in rows.iter_mut().take(3).enumerate() {
        row[i] = factor;
    }
    Ok(Mat4::from_rows(rows))
}

/// Composes steps in order; each step left-multiplies the running product,
/// so the result is `M_n · … · M_1`.
pub fn compose(steps: &[TransformStep]) -> Result<Mat4, XformError> {
    steps
        .iter()
        .try_fold(Mat4::IDENTITY, |acc, step| Ok(step.matrix()? * acc))
}

pub fn apply_point(m: &Mat4, p: Vec3) -> Result<Vec3, XformError> {
    m.apply_point(p)
}

pub fn invert(m: &Mat4) -> Result<Mat4, XformError> {
    m.invert()
}

/// The four products and their sum behind one cell of a matrix product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellExpansion {
    pub row: usize,
    pub col: usize,
    /// `(a[row][k], b[k][col])` for k = 0..4.
    pub factors: [(f64, f64); 4],
    pub products: [f64; 4],
    pub sum: f64,
}

/// Cell-by-cell expansion of `a · b`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulExpansion {
    pub cells: Vec<CellExpansion>,
}

impl MulExpansion {
    pub fn cell(&self, row: usize, col: usize) -> &CellExpansion {
        &self.cells[row * 4 + col]
    }

    pub fn to_matrix(&self) -> Mat4 {
        let mut rows = [[0.0; 4]; 4];
        for c in &self.cells {
            rows[c.row][c.col] = c.sum;
        }
        Mat4::from_rows(rows)
    }
}

pub fn multiply_expansion(a: &Mat4, b: &Mat4) -> MulExpansion {
    let mut cells = Vec::with_capacity(16);
    for row in 0..4 {
        for col in 0..4 {
            let factors: [(f64, f64); 4] = std::array::from_fn(|k| (a.at(row, k), b.at(k, col)));
            let products = factors.map(|(x, y)| x * y);
            cells.push(CellExpansion { row, col, factors, products, sum: sum_terms(products) });
        }
    }
    MulExpansion { cells }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rz(deg: f64) -> Mat4 {
        rotation_matrix(RotationAxis::Z, Angle::degrees(deg)).unwrap()
    }

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        a.distance(b) <= tol
    }

    #[test]
    fn zero_rotation_is_identity() {
        for axis in RotationAxis::ALL {
            assert_eq!(rotation_matrix(axis, Angle::ZERO).unwrap(), Mat4::IDENTITY);
        }
    }

    #[test]
    fn quarter_turn_about_z() {
        let p = rz(90.0).apply_point(Vec3::X).unwrap();
        assert_eq!(p, Vec3::Y);
    }

    #[test]
    fn rotation_x_30_entries() {
        let m = rotation_matrix(RotationAxis::X, Angle::degrees(30.0)).unwrap();
        // row 2 / col 2 and row 3 / col 2, one-based
        assert!((m.at(1, 1) - 0.8660254).abs() < 1e-7);
        assert!((m.at(2, 1) - 0.5).abs() < 1e-7);
        assert!((m.at(1, 2) + 0.5).abs() < 1e-7);
    }

    #[test]
    fn non_finite_parameters_rejected() {
        assert!(matches!(
            rotation_matrix(RotationAxis::Y, Angle::degrees(f64::NAN)),
            Err(XformError::InvalidParameter(_))
        ));
        assert!(translation_matrix(Vec3::new(f64::INFINITY, 0.0, 0.0)).is_err());
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(scale_matrix(bad).is_err(), "factor {bad}");
        }
    }

    #[test]
    fn translation_examples() {
        assert_eq!(translation_matrix(Vec3::ZERO).unwrap(), Mat4::IDENTITY);
        let t = translation_matrix(Vec3::new(3.0, 0.0, 0.0)).unwrap();
        assert_eq!(t.apply_point(Vec3::ZERO).unwrap(), Vec3::new(3.0, 0.0, 0.0));
        let twice = compose(&[TransformStep::translate(1.0, 2.0, 3.0); 2]).unwrap();
        assert_eq!(twice.translation(), Vec3::new(2.0, 4.0, 6.0));
    }

    #[test]
    fn scale_examples() {
        assert_eq!(scale_matrix(1.0).unwrap(), Mat4::IDENTITY);
        let s = scale_matrix(2.0).unwrap();
        assert_eq!(s.apply_point(Vec3::new(1.0, 2.0, 3.0)).unwrap(), Vec3::new(2.0, 4.0, 6.0));
        let back = compose(&[TransformStep::scale(2.0), TransformStep::scale(0.5)]).unwrap();
        assert_eq!(back, Mat4::IDENTITY);
    }

    #[test]
    fn compose_order_is_world_frame() {
        assert_eq!(compose(&[]).unwrap(), Mat4::IDENTITY);
        let a = compose(&[TransformStep::translate(1.0, 0.0, 0.0), TransformStep::rotate(RotationAxis::Z, 90.0)])
            .unwrap();
        assert!(close(a.apply_point(Vec3::ZERO).unwrap(), Vec3::Y, 1e-15));
        let b = compose(&[TransformStep::rotate(RotationAxis::Z, 90.0), TransformStep::translate(1.0, 0.0, 0.0)])
            .unwrap();
        assert!(close(b.apply_point(Vec3::ZERO).unwrap(), Vec3::X, 1e-15));
    }

    #[test]
    fn compose_propagates_errors() {
        let err = compose(&[TransformStep::translate(1.0, 0.0, 0.0), TransformStep::scale(0.0)]).unwrap_err();
        assert!(matches!(err, XformError::InvalidParameter(_)));
    }

    #[test]
    fn apply_point_examples() {
        let p = Vec3::new(5.0, -2.0, 7.0);
        assert_eq!(Mat4::IDENTITY.apply_point(p).unwrap(), p);
        let s = scale_matrix(2.0).unwrap();
        assert_eq!(s.apply_point(Vec3::new(1.0, 1.0, 1.0)).unwrap(), Vec3::new(2.0, 2.0, 2.0));
        let r = rz(30.0).apply_point(Vec3::X).unwrap();
        assert!(close(r, Vec3::new(0.8660254, 0.5, 0.0), 1e-7));
    }

    #[test]
    fn apply_point_rejects_projective_rows() {
        let mut rows = *Mat4::IDENTITY.rows();
        rows[3][0] = 0.5;
        let m = Mat4::from_rows(rows);
        assert_eq!(m.apply_point(Vec3::X), Err(XformError::UnsupportedMatrix));
    }

    #[test]
    fn invert_examples() {
        assert_eq!(Mat4::IDENTITY.invert().unwrap(), Mat4::IDENTITY);
        let t = translation_matrix(Vec3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(t.invert().unwrap(), translation_matrix(Vec3::new(-1.0, -2.0, -3.0)).unwrap());

        let m = compose(&[TransformStep::rotate(RotationAxis::Z, 90.0), TransformStep::scale(2.0)]).unwrap();
        let expected = compose(&[TransformStep::scale(0.5), TransformStep::rotate(RotationAxis::Z, -90.0)]).unwrap();
        let inv = m.invert().unwrap();
        assert!(inv.approx_eq(&expected, 1e-12));
        assert!((m * inv).approx_eq(&Mat4::IDENTITY, 1e-12));
    }

    #[test]
    fn invert_singular() {
        let mut rows = *Mat4::IDENTITY.rows();
        rows[2][2] = 0.0;
        assert!(matches!(Mat4::from_rows(rows).invert(), Err(XformError::SingularMatrix { .. })));
    }

    #[test]
    fn expansion_examples() {
        let m = compose(&[TransformStep::rotate(RotationAxis::Y, 33.0), TransformStep::translate(1.0, -2.0, 4.0)])
            .unwrap();
        let e = multiply_expansion(&Mat4::IDENTITY, &m);
        assert_eq!(e.to_matrix(), m);

        let a = translation_matrix(Vec3::X).unwrap();
        let b = translation_matrix(Vec3::new(2.0, 0.0, 0.0)).unwrap();
        let e = multiply_expansion(&a, &b);
        assert_eq!(e.cell(0, 3).sum, 3.0);
        assert_eq!(e.cell(0, 3).products, [2.0, 0.0, 0.0, 1.0]);

        let e = multiply_expansion(&rz(90.0), &rz(90.0));
        assert!(e.to_matrix().approx_eq(&rz(180.0), 1e-15));
    }

    #[test]
    fn normalized_angle_range() {
        assert_eq!(Angle::degrees(180.0).normalized().deg(), 180.0);
        assert_eq!(Angle::degrees(-180.0).normalized().deg(), 180.0);
        assert_eq!(Angle::degrees(270.0).normalized().deg(), -90.0);
        assert_eq!(Angle::degrees(-725.0).normalized().deg(), -5.0);
    }

    #[test]
    fn sin_cos_is_odd() {
        for d in [0.5, 15.0, 90.0, 135.0, 180.0, 270.0, 359.0, 1e3] {
            let (s, c) = Angle::degrees(d).sin_cos();
            let (sn, cn) = Angle::degrees(-d).sin_cos();
            assert_eq!((s, c), (-sn, cn));
        }
        assert_eq!(Angle::degrees(-90.0).sin_cos(), (-1.0, 0.0));
        assert_eq!(Angle::degrees(450.0).sin_cos(), (1.0, 0.0));
    }
}
