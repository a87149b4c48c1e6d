//! Camera pose from the four display corners, and rectification of captures
//! back onto the panel grid.
//!
//! World frame: origin at the panel center, X to the right, Y down the
//! panel, Z pointing into the panel. The viewer side is `Z < 0`, so a camera
//! at distance `d` in front of the panel sits at `(u, v, -d)`. Camera frame:
//! x right, y down, z along the optical axis. Pixel `(i, j)` has its center
//! at image coordinates `(i, j)`.

use nalgebra::{Matrix3, SMatrix, Unit, UnitQuaternion, Vector3};
use ndarray::{Array2, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};
use crate::sim::CapturedImage;

/// Pinhole intrinsics plus the sensor size. Lens distortion is not modeled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(CalibError::InvalidParameter("focal lengths must be positive".into()));
        }
        if width == 0 || height == 0 {
            return Err(CalibError::InvalidParameter("sensor size must be positive".into()));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Square pixels, principal point at the sensor center.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

/// Camera rotation (world to camera) and position relative to the panel
/// center. `position = (u, v, d)` with `d > 0` the distance in front of the
/// panel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
    pub intrinsics: Intrinsics,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, position: Vector3<f64>, intrinsics: Intrinsics) -> Result<Self> {
        let orth = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if orth > 1e-9 || rotation.determinant() < 0.0 {
            return Err(CalibError::InvalidParameter("rotation is not a proper rotation".into()));
        }
        if !(position.z > 0.0) {
            return Err(CalibError::InvalidGeometry("camera must be in front of the panel".into()));
        }
        Ok(Self {
            rotation,
            position,
            intrinsics,
        })
    }

    /// Camera at `(u, v, d)` aimed at the panel center with image rows
    /// parallel to the panel rows when viewed head-on.
    pub fn look_at_center(u: f64, v: f64, d: f64, intrinsics: Intrinsics) -> Result<Self> {
        if !(d > 0.0) {
            return Err(CalibError::InvalidGeometry("camera must be in front of the panel".into()));
        }
        let z = Vector3::new(-u, -v, d).normalize();
        let x = Vector3::y().cross(&z).normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Self::new(rotation, Vector3::new(u, v, d), intrinsics)
    }

    /// Frontal camera: optical axis along +Z, no roll.
    pub fn frontal(u: f64, v: f64, d: f64, intrinsics: Intrinsics) -> Result<Self> {
        Self::new(Matrix3::identity(), Vector3::new(u, v, d), intrinsics)
    }

    /// Additional rotation by `angle` radians about `axis`, expressed in the
    /// camera frame.
    pub fn rotated(self, axis: Vector3<f64>, angle: f64) -> Result<Self> {
        let q = UnitQuaternion::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self::new(q.to_rotation_matrix().into_inner() * self.rotation, self.position, self.intrinsics)
    }

    pub fn u(&self) -> f64 {
        self.position.x
    }

    pub fn v(&self) -> f64 {
        self.position.y
    }

    pub fn d(&self) -> f64 {
        self.position.z
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(self.position.x, self.position.y, -self.position.z)
    }

    /// Translation of the world-to-camera transform.
    pub fn translation(&self) -> Vector3<f64> {
        -(self.rotation * self.center())
    }

    /// Homography from panel-plane millimeters to image pixels.
    pub fn homography(&self) -> Homography {
        let t = self.translation();
        let r = self.rotation;
        let m = Matrix3::from_columns(&[r.column(0).into_owned(), r.column(1).into_owned(), t]);
        Homography::new(self.intrinsics.matrix() * m)
    }

    /// Project a panel-plane point (mm) to image pixels.
    pub fn project(&self, x: f64, y: f64) -> (f64, f64) {
        self.homography().apply(x, y)
    }
}

/// Plane-to-plane projective map, normalized so `h33 = 1` when nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    pub matrix: Matrix3<f64>,
}

impl Homography {
    pub fn new(matrix: Matrix3<f64>) -> Self {
        let h33 = matrix[(2, 2)];
        let matrix = if h33.abs() > 1e-300 { matrix / h33 } else { matrix };
        Self { matrix }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.matrix;
        let w = m[(2, 0)] * x + m[(2, 1)] * y + m[(2, 2)];
        (
            (m[(0, 0)] * x + m[(0, 1)] * y + m[(0, 2)]) / w,
            (m[(1, 0)] * x + m[(1, 1)] * y + m[(1, 2)]) / w,
        )
    }

    pub fn inverse(&self) -> Result<Self> {
        self.matrix
            .try_inverse()
            .map(Self::new)
            .ok_or_else(|| CalibError::SingularSystem("homography is not invertible".into()))
    }

    /// Local area magnification `|det J|` at `(x, y)`.
    pub fn jacobian_det(&self, x: f64, y: f64) -> f64 {
        let m = &self.matrix;
        let w = m[(2, 0)] * x + m[(2, 1)] * y + m[(2, 2)];
        (m.determinant() / (w * w * w)).abs()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            matrix: self.matrix * factor,
        }
    }
}

fn check_no_three_collinear(points: &[(f64, f64); 4], what: &str) -> Result<()> {
    let scale = points
        .iter()
        .flat_map(|&(x, y)| [x.abs(), y.abs()])
        .fold(0.0f64, f64::max)
        .max(1e-300);
    for skip in 0..4 {
        let tri: Vec<_> = (0..4).filter(|&i| i != skip).map(|i| points[i]).collect();
        let (a, b, c) = (tri[0], tri[1], tri[2]);
        let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
        if cross.abs() <= 1e-12 * scale * scale {
            return Err(CalibError::SingularSystem(format!("three {what} points are collinear")));
        }
    }
    Ok(())
}

/// Similarity transform moving the centroid to the origin and the mean
/// distance to sqrt(2).
fn normalizer(points: &[(f64, f64); 4]) -> Matrix3<f64> {
    let (mx, my) = points.iter().fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x / 4.0, sy + y / 4.0));
    let mean_dist = points.iter().map(|&(x, y)| ((x - mx).powi(2) + (y - my).powi(2)).sqrt()).sum::<f64>() / 4.0;
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

/// Direct linear transform from four correspondences, `world -> image`.
pub fn homography_from_corners(world: &[(f64, f64); 4], image: &[(f64, f64); 4]) -> Result<Homography> {
    check_no_three_collinear(world, "world")?;
    check_no_three_collinear(image, "image")?;
    let tw = normalizer(world);
    let ti = normalizer(image);
    let apply = |t: &Matrix3<f64>, (x, y): (f64, f64)| (t[(0, 0)] * x + t[(0, 2)], t[(1, 1)] * y + t[(1, 2)]);

    // Rows of the DLT system, padded with a zero row so the SVD returns the
    // full right singular basis.
    let mut a = SMatrix::<f64, 9, 9>::zeros();
    for k in 0..4 {
        let (x, y) = apply(&tw, world[k]);
        let (u, v) = apply(&ti, image[k]);
        let r = 2 * k;
        a.row_mut(r).copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| CalibError::SingularSystem("SVD failed".into()))?;
    let (min_idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nine singular values");
    let h = v_t.row(min_idx);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let ti_inv = ti
        .try_inverse()
        .ok_or_else(|| CalibError::SingularSystem("degenerate image points".into()))?;
    let full = ti_inv * hn * tw;
    if full.determinant().abs() < 1e-300 {
        return Err(CalibError::SingularSystem("rank-deficient homography".into()));
    }
    Ok(Homography::new(full))
}

/// Recover the camera pose from a panel-to-image homography and known
/// intrinsics. Of the two sign solutions the one with the panel in front of
/// the camera is kept.
pub fn decompose(h: &Homography, k: &Intrinsics) -> Result<CameraPose> {
    let k_inv = k
        .matrix()
        .try_inverse()
        .ok_or_else(|| CalibError::SingularSystem("intrinsics are singular".into()))?;
    let m = k_inv * h.matrix;
    let c1 = m.column(0).into_owned();
    let c2 = m.column(1).into_owned();
    let n1 = c1.norm();
    let n2 = c2.norm();
    if !(n1 > 1e-300 && n2 > 1e-300) || !(0.5..2.0).contains(&(n1 / n2)) {
        return Err(CalibError::IllConditioned(format!(
            "rotation columns have norms {n1:.3e} and {n2:.3e}"
        )));
    }
    let mut lambda = 1.0 / n1;
    if m[(2, 2)] * lambda < 0.0 {
        lambda = -lambda;
    }
    let r1 = c1 * lambda;
    let r2 = c2 * lambda;
    let t = m.column(2).into_owned() * lambda;
    let r3 = r1.cross(&r2);
    let approx = Matrix3::from_columns(&[r1, r2, r3]);
    let svd = approx.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut rotation = u * v_t;
    if rotation.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        rotation = u * v_t;
    }
    let center = -(rotation.transpose() * t);
    let d = -center.z;
    if !(d > 0.0) {
        return Err(CalibError::IllConditioned("camera is behind the panel".into()));
    }
    CameraPose::new(rotation, Vector3::new(center.x, center.y, d), *k)
}

/// Rotation angle of `a^T b`, degrees.
pub fn rotation_difference_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let r = a.transpose() * b;
    let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    // acos loses precision near zero; use the skew part there.
    let s = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm() / 2.0;
    s.atan2(c).to_degrees()
}

/// Bilinear interpolation with zero outside `[-0.5, size - 0.5]` and edge
/// clamping inside it.
struct Bilinear<'a> {
    data: std::borrow::Cow<'a, [f64]>,
}

impl<'a> Bilinear<'a> {
    fn new(img: &'a Array2<f64>) -> Self {
        let data = match img.as_slice() {
            Some(s) => std::borrow::Cow::Borrowed(s),
            None => std::borrow::Cow::Owned(img.iter().copied().collect()),
        };
        Self { data }
    }

    #[inline]
    fn apply(&self, t: &Tap) -> f64 {
        let d = &self.data;
        let top = d[t.i00] + (d[t.i00 + t.dx] - d[t.i00]) * t.fx;
        let bottom = d[t.i00 + t.dy] + (d[t.i00 + t.dy + t.dx] - d[t.i00 + t.dy]) * t.fx;
        top + (bottom - top) * t.fy
    }
}

/// Bilinear footprint in a row-major `w x h` image.
struct Tap {
    i00: usize,
    dx: usize,
    dy: usize,
    fx: f64,
    fy: f64,
}

#[inline]
fn tap(w: usize, h: usize, x: f64, y: f64) -> Option<Tap> {
    if !(x >= -0.5 && y >= -0.5 && x <= w as f64 - 0.5 && y <= h as f64 - 0.5) {
        return None;
    }
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = (x as usize).min(w.saturating_sub(2));
    let y0 = (y as usize).min(h.saturating_sub(2));
    Some(Tap {
        i00: y0 * w + x0,
        dx: usize::from(w > 1),
        dy: if h > 1 { w } else { 0 },
        fx: x - x0 as f64,
        fy: y - y0 as f64,
    })
}

/// Homography from rectified pixel coordinates to capture pixel coordinates.
pub fn rectifying_homography(
    image_corners: &[(f64, f64); 4],
    panel_w: usize,
    panel_h: usize,
) -> Result<Homography> {
    let w = panel_w as f64 - 0.5;
    let h = panel_h as f64 - 0.5;
    let target = [(-0.5, -0.5), (w, -0.5), (w, h), (-0.5, h)];
    homography_from_corners(&target, image_corners)
}

fn check_corners_in_frame(corners: &[(f64, f64); 4], width: usize, height: usize) -> Result<()> {
    for &(x, y) in corners {
        let inside = x >= -0.5 && y >= -0.5 && x <= width as f64 - 0.5 && y <= height as f64 - 0.5;
        if !inside || !x.is_finite() || !y.is_finite() {
            return Err(CalibError::OutOfFrame(format!(
                "corner ({x:.2}, {y:.2}) lies outside the {width}x{height} capture"
            )));
        }
    }
    Ok(())
}

/// Warp selected channels of a capture onto a `panel_w x panel_h` grid whose
/// corners land on `image_corners` (TL, TR, BR, BL). With `flip`, the output
/// is mirrored horizontally, for captures taken through a mirror.
pub fn rectify_channels(
    capture: &CapturedImage,
    image_corners: &[(f64, f64); 4],
    panel_w: usize,
    panel_h: usize,
    flip: bool,
    channels: &[usize],
) -> Result<Vec<Array2<f64>>> {
    rectify_channels_with_step(capture, image_corners, panel_w, panel_h, 1, flip, channels)
}

/// Like [`rectify_channels`], sampling only every `step`-th panel column.
/// The `panel_w / step` output columns are centered on the panel, so output
/// column `i` sits at centered subpixel `(i - (panel_w / step - 1) / 2) * step`.
pub fn rectify_channels_with_step(
    capture: &CapturedImage,
    image_corners: &[(f64, f64); 4],
    panel_w: usize,
    panel_h: usize,
    step: usize,
    flip: bool,
    channels: &[usize],
) -> Result<Vec<Array2<f64>>> {
    rectify_weighted(capture, image_corners, panel_w, panel_h, step, flip, channels, None)
}

/// Output grid of a rectification and its mapping into the capture.
struct Warp {
    m: Matrix3<f64>,
    first: f64,
    step: usize,
    out_w: usize,
    flip: bool,
    width: usize,
    height: usize,
}

impl Warp {
    #[allow(clippy::too_many_arguments)]
    fn new(
        capture: &CapturedImage,
        image_corners: &[(f64, f64); 4],
        panel_w: usize,
        panel_h: usize,
        step: usize,
        flip: bool,
        weights: Option<(&[f64], &[f64])>,
    ) -> Result<Self> {
        if step == 0 || step > panel_w {
            return Err(CalibError::InvalidParameter(format!("column step {step} for a {panel_w}-column panel")));
        }
        check_corners_in_frame(image_corners, capture.width, capture.height)?;
        let out_w = panel_w / step;
        if let Some((wx, wy)) = weights {
            if wx.len() != out_w || wy.len() != panel_h {
                return Err(CalibError::DimensionMismatch {
                    expected: format!("{out_w} x {panel_h} weights"),
                    actual: format!("{} x {}", wx.len(), wy.len()),
                });
            }
        }
        let m = rectifying_homography(image_corners, panel_w, panel_h)?.matrix;
        Ok(Self {
            m,
            first: (panel_w as f64 - 1.0) / 2.0 - step as f64 * (out_w as f64 - 1.0) / 2.0,
            step,
            out_w,
            flip,
            width: capture.width,
            height: capture.height,
        })
    }

    /// Calls `f(i, tap)` for each output column of row `j` that lands
    /// inside the capture.
    #[inline]
    fn row(&self, j: usize, mut f: impl FnMut(usize, &Tap)) {
        let (m, y) = (&self.m, j as f64);
        // Affine-in-x numerators and denominator along one row.
        let (ax, bx) = (m[(0, 0)], m[(0, 1)] * y + m[(0, 2)]);
        let (ay, by) = (m[(1, 0)], m[(1, 1)] * y + m[(1, 2)]);
        let (aw, bw) = (m[(2, 0)], m[(2, 1)] * y + m[(2, 2)]);
        for i in 0..self.out_w {
            let k = if self.flip { self.out_w - 1 - i } else { i };
            let xi = self.first + (k * self.step) as f64;
            let inv = 1.0 / (aw * xi + bw);
            if let Some(t) = tap(self.width, self.height, (ax * xi + bx) * inv, (ay * xi + by) * inv) {
                f(i, &t);
            }
        }
    }
}

fn channel_sources<'a>(capture: &'a CapturedImage, channels: &[usize]) -> Result<Vec<Bilinear<'a>>> {
    channels
        .iter()
        .map(|&c| {
            capture
                .planes
                .get(c)
                .map(Bilinear::new)
                .ok_or_else(|| CalibError::InvalidParameter(format!("channel {c} out of range")))
        })
        .collect()
}

/// Rectification fused with a separable weight `wx[i] * wy[j]` on the
/// output grid. All channels share one pass over the coordinates.
#[allow(clippy::too_many_arguments)]
pub fn rectify_weighted(
    capture: &CapturedImage,
    image_corners: &[(f64, f64); 4],
    panel_w: usize,
    panel_h: usize,
    step: usize,
    flip: bool,
    channels: &[usize],
    weights: Option<(&[f64], &[f64])>,
) -> Result<Vec<Array2<f64>>> {
    let warp = Warp::new(capture, image_corners, panel_w, panel_h, step, flip, weights)?;
    let sources = channel_sources(capture, channels)?;
    let out_w = warp.out_w;
    let mut outputs: Vec<Array2<f64>> = sources.iter().map(|_| Array2::zeros((panel_h, out_w))).collect();
    let mut row_sets: Vec<Vec<&mut [f64]>> = (0..panel_h).map(|_| Vec::with_capacity(sources.len())).collect();
    for out in outputs.iter_mut() {
        let rows = out.as_slice_mut().expect("standard layout").chunks_mut(out_w);
        for (set, row) in row_sets.iter_mut().zip(rows) {
            set.push(row);
        }
    }
    row_sets.into_par_iter().enumerate().for_each(|(j, mut rows)| {
        warp.row(j, |i, t| {
            let wgt = weights.map_or(1.0, |(wx, wy)| wx[i] * wy[j]);
            for (row, src) in rows.iter_mut().zip(&sources) {
                row[i] = src.apply(t) * wgt;
            }
        });
    });
    Ok(outputs)
}

/// Two channels rectified into the real and imaginary parts of one
/// complex grid, ready for a shared transform.
#[allow(clippy::too_many_arguments)]
pub fn rectify_packed(
    capture: &CapturedImage,
    image_corners: &[(f64, f64); 4],
    panel_w: usize,
    panel_h: usize,
    step: usize,
    flip: bool,
    channels: [usize; 2],
    weights: Option<(&[f64], &[f64])>,
) -> Result<Array2<Complex64>> {
    let warp = Warp::new(capture, image_corners, panel_w, panel_h, step, flip, weights)?;
    let sources = channel_sources(capture, &channels)?;
    let (re, im) = (&sources[0], &sources[1]);
    let mut out = Array2::<Complex64>::zeros((panel_h, warp.out_w));
    out.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(j, mut row)| {
        let row = row.as_slice_mut().expect("standard layout");
        warp.row(j, |i, t| {
            let wgt = weights.map_or(1.0, |(wx, wy)| wx[i] * wy[j]);
            row[i] = Complex64::new(re.apply(t) * wgt, im.apply(t) * wgt);
        });
    });
    Ok(out)
}

/// Rectify all three channels.
pub fn rectify(
    capture: &CapturedImage,
    image_corners: &[(f64, f64); 4],
    panel_w: usize,
    panel_h: usize,
    flip: bool,
) -> Result<Vec<Array2<f64>>> {
    rectify_channels(capture, image_corners, panel_w, panel_h, flip, &[0, 1, 2])
}

/// Image positions of the panel corners (TL, TR, BR, BL) under `pose`.
pub fn project_panel_corners(pose: &CameraPose, corners_mm: &[(f64, f64); 4]) -> [(f64, f64); 4] {
    let h = pose.homography();
    corners_mm.map(|(x, y)| h.apply(x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cam() -> Intrinsics {
        Intrinsics::centered(1200.0, 1920, 1080).unwrap()
    }

    const SQUARE: [(f64, f64); 4] = [(-300.0, -200.0), (300.0, -200.0), (300.0, 200.0), (-300.0, 200.0)];

    #[test]
    fn frontal_homography_reprojects_exactly() {
        let pose = CameraPose::frontal(0.0, 0.0, 700.0, cam()).unwrap();
        let image = project_panel_corners(&pose, &SQUARE);
        let h = homography_from_corners(&SQUARE, &image).unwrap();
        for (w, i) in SQUARE.iter().zip(&image) {
            let (x, y) = h.apply(w.0, w.1);
            assert!((x - i.0).abs() < 1e-6 && (y - i.1).abs() < 1e-6);
        }
        // K [r1 r2 t] with R = I, t = (0, 0, 700), normalized by h33.
        let expected = Matrix3::new(1200.0, 0.0, 959.5 * 700.0, 0.0, 1200.0, 539.5 * 700.0, 0.0, 0.0, 700.0) / 700.0;
        assert!((h.matrix - expected).abs().max() < 1e-9);
    }

    #[test]
    fn in_plane_rotation_composes() {
        let base = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let rotated = base.map(|(x, y)| (-y, x));
        let h = homography_from_corners(&base, &rotated).unwrap();
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((h.matrix - expected).abs().max() < 1e-12);
    }

    #[test]
    fn collinear_points_are_rejected() {
        let bad = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (0.0, 1.0)];
        assert!(matches!(homography_from_corners(&bad, &SQUARE), Err(CalibError::SingularSystem(_))));
        assert!(matches!(homography_from_corners(&SQUARE, &bad), Err(CalibError::SingularSystem(_))));
    }

    #[test]
    fn frontal_pose_decomposes() {
        let pose = CameraPose::frontal(0.0, 0.0, 700.0, cam()).unwrap();
        let h = homography_from_corners(&SQUARE, &project_panel_corners(&pose, &SQUARE)).unwrap();
        let got = decompose(&h, &cam()).unwrap();
        assert!((got.position - Vector3::new(0.0, 0.0, 700.0)).norm() < 1e-6);
        assert!(rotation_difference_deg(&got.rotation, &Matrix3::identity()) < 1e-6);
    }

    #[test]
    fn small_rotation_about_y_is_recovered() {
        let pose = CameraPose::frontal(20.0, -10.0, 800.0, cam())
            .unwrap()
            .rotated(Vector3::y(), 1f64.to_radians())
            .unwrap();
        let h = homography_from_corners(&SQUARE, &project_panel_corners(&pose, &SQUARE)).unwrap();
        let got = decompose(&h, &cam()).unwrap();
        let angle = rotation_difference_deg(&Matrix3::identity(), &got.rotation);
        assert_relative_eq!(angle, 1.0, epsilon = 1e-6);
        assert!((got.position - pose.position).norm() < 1e-6);
    }

    #[test]
    fn decomposition_is_scale_invariant() {
        let pose = CameraPose::look_at_center(30.0, 25.0, 650.0, cam()).unwrap();
        let h = homography_from_corners(&SQUARE, &project_panel_corners(&pose, &SQUARE)).unwrap();
        let a = decompose(&h, &cam()).unwrap();
        let b = decompose(&h.scaled(5.0), &cam()).unwrap();
        let c = decompose(&h.scaled(-3.0), &cam()).unwrap();
        assert!((a.position - b.position).norm() < 1e-9);
        assert!((a.position - c.position).norm() < 1e-9);
        assert!((a.rotation - b.rotation).abs().max() < 1e-12);
    }

    #[test]
    fn random_jittered_pose_reprojects_interior_points() {
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..20 {
            let pose = CameraPose::look_at_center(50.0 * next(), 50.0 * next(), 700.0 + 50.0 * next(), cam())
                .unwrap()
                .rotated(Vector3::new(next(), next(), next()), next().to_radians())
                .unwrap();
            let h = homography_from_corners(&SQUARE, &project_panel_corners(&pose, &SQUARE)).unwrap();
            for _ in 0..100 {
                let (x, y) = (300.0 * next(), 200.0 * next());
                let (a, b) = h.apply(x, y);
                let (ea, eb) = pose.project(x, y);
                assert!((a - ea).abs() < 1e-6 && (b - eb).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn noisy_corners_give_small_pose_errors() {
        use rand::{Rng, SeedableRng};
        // FHD55B framed at 85% of a 1920x1080 sensor from both design
        // distances; corners jittered uniformly by +-0.1 px.
        let panel = crate::geometry::DisplayPreset::Fhd55b.params().panel;
        let world = panel.corners_mm();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for (u, v, d) in [(20.0, -15.0, 700.0), (-35.0, 10.0, 1000.0)] {
            let f = 0.85 * (1920.0 / panel.width_mm()).min(1080.0 / panel.height_mm()) * d;
            let k = Intrinsics::centered(f, 1920, 1080).unwrap();
            let pose = CameraPose::look_at_center(u, v, d, k).unwrap();
            let image = project_panel_corners(&pose, &world);
            let (mut t2, mut r2) = (0.0, 0.0);
            let n = 2000;
            for _ in 0..n {
                let noisy = image.map(|(x, y)| (x + rng.random_range(-0.1..0.1), y + rng.random_range(-0.1..0.1)));
                let got = decompose(&homography_from_corners(&world, &noisy).unwrap(), &k).unwrap();
                t2 += (got.translation() - pose.translation()).norm_squared();
                r2 += rotation_difference_deg(&got.rotation, &pose.rotation).powi(2);
            }
            let (t_rms, r_rms) = ((t2 / n as f64).sqrt(), (r2 / n as f64).sqrt());
            assert!(t_rms < 0.1, "translation rms {t_rms} mm at d = {d}");
            assert!(r_rms < 0.01, "rotation rms {r_rms} deg at d = {d}");
        }
    }

    #[test]
    fn look_at_points_the_axis_at_the_center() {
        let pose = CameraPose::look_at_center(40.0, -30.0, 900.0, cam()).unwrap();
        let (x, y) = pose.project(0.0, 0.0);
        assert_relative_eq!(x, 959.5, epsilon = 1e-9);
        assert_relative_eq!(y, 539.5, epsilon = 1e-9);
        assert!(pose.rotation.determinant() > 0.0);
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let pose = CameraPose::look_at_center(40.0, -30.0, 700.0, cam()).unwrap();
        let h = pose.homography();
        let (x, y, e) = (120.0, -45.0, 1e-4);
        let (ax, ay) = h.apply(x + e, y);
        let (bx, by) = h.apply(x - e, y);
        let (cx, cy) = h.apply(x, y + e);
        let (dx, dy) = h.apply(x, y - e);
        let fd = ((ax - bx) * (cy - dy) - (ay - by) * (cx - dx)) / (4.0 * e * e);
        assert_relative_eq!(h.jacobian_det(x, y), fd.abs(), max_relative = 1e-6);
    }

    fn smooth_capture(w: usize, h: usize) -> CapturedImage {
        let mut img = CapturedImage::black(w, h);
        for c in 0..3 {
            for ((j, i), v) in img.planes[c].indexed_iter_mut() {
                *v = 0.5 + 0.3 * ((i as f64) * 0.05 + c as f64).sin() * ((j as f64) * 0.07).cos();
            }
        }
        img
    }

    #[test]
    fn identity_corners_reproduce_input() {
        let img = smooth_capture(64, 48);
        let corners = [(-0.5, -0.5), (63.5, -0.5), (63.5, 47.5), (-0.5, 47.5)];
        let out = rectify(&img, &corners, 64, 48, false).unwrap();
        for c in 0..3 {
            let diff = (&out[c] - &img.planes[c]).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
            assert!(diff < 1.0 / 255.0, "max diff {diff}");
        }
    }

    #[test]
    fn out_of_frame_corners_are_rejected() {
        let img = smooth_capture(64, 48);
        let corners = [(-5.0, -0.5), (63.5, -0.5), (63.5, 47.5), (-0.5, 47.5)];
        assert!(matches!(rectify(&img, &corners, 10, 10, false), Err(CalibError::OutOfFrame(_))));
    }

    #[test]
    fn flip_mirrors_columns() {
        let img = smooth_capture(64, 48);
        let corners = [(-0.5, -0.5), (63.5, -0.5), (63.5, 47.5), (-0.5, 47.5)];
        let a = rectify(&img, &corners, 64, 48, false).unwrap();
        let b = rectify(&img, &corners, 64, 48, true).unwrap();
        for j in 0..48 {
            for i in 0..64 {
                assert_relative_eq!(a[0][[j, i]], b[0][[j, 63 - i]], epsilon = 1e-12);
            }
        }
    }
}
