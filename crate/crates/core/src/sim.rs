//! Forward model of a camera photographing the panel through the slit
//! barrier.
//!
//! Two renderers share the same optics. `Splat` clips every lit subpixel
//! cell against the visible slit strips, moment-matches each fragment to a
//! Gaussian in image space and integrates it over the pixel footprints.
//! `Raster` traces `supersample^2` rays per pixel and blurs the result.
//! Intensities are coverage fractions times emitted level, so a fully lit
//! and fully visible region reads 1.0.

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{CalibError, Result};
use crate::geometry::{wrap_centered, DisplayParams};
use crate::pattern::PanelImage;
use crate::pose::{CameraPose, Homography};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RenderMode {
    #[default]
    Splat,
    Raster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aperture {
    /// Full transmission within half a slit width of the slit line.
    #[default]
    Box,
    /// `0.5 (1 + cos(pi r / w))` for perpendicular distance `r < w`; same
    /// integrated transmission as the box.
    RaisedCosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    /// Slit aperture in mm; `None` means one eighth of the pitch.
    pub slit_width: Option<f64>,
    /// Gaussian blur, captured pixels.
    pub psf_sigma: f64,
    /// Rays per pixel along each axis (raster mode only).
    pub supersample: usize,
    /// Photons at full intensity; `None` disables shot noise.
    pub noise_scale: Option<f64>,
    /// Image through the camera model; otherwise the capture is sampled on
    /// the panel grid itself.
    pub apply_perspective: bool,
    pub mode: RenderMode,
    pub aperture: Aperture,
    pub seed: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            slit_width: None,
            psf_sigma: 0.8,
            supersample: 4,
            noise_scale: None,
            apply_perspective: true,
            mode: RenderMode::Splat,
            aperture: Aperture::Box,
            seed: 0,
        }
    }
}

impl SimOptions {
    pub fn slit_width_for(&self, params: &DisplayParams) -> f64 {
        self.slit_width.unwrap_or(params.p / 8.0)
    }

    pub fn validate(&self, params: &DisplayParams) -> Result<()> {
        let w = self.slit_width_for(params);
        if !(w > 0.0 && w < params.p) {
            return Err(CalibError::InvalidParameter(format!(
                "slit width {w} mm must lie in (0, {})",
                params.p
            )));
        }
        if !(self.psf_sigma >= 0.0 && self.psf_sigma.is_finite()) {
            return Err(CalibError::InvalidParameter("psf sigma must be non-negative".into()));
        }
        if self.supersample == 0 {
            return Err(CalibError::InvalidParameter("supersample must be at least 1".into()));
        }
        if let Some(s) = self.noise_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(CalibError::InvalidParameter("noise scale must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Three-channel floating point capture.
#[derive(Debug, Clone, PartialEq)]
pub struct CapturedImage {
    pub width: usize,
    pub height: usize,
    /// R, G, B planes, `height x width`.
    pub planes: Vec<Array2<f64>>,
    /// Image positions of the panel corners, TL TR BR BL.
    pub corners: [(f64, f64); 4],
    /// Pose the capture was taken from, when known.
    pub pose: Option<CameraPose>,
    /// False when the capture is sampled directly on the panel grid.
    pub perspective: bool,
}

impl CapturedImage {
    pub fn black(width: usize, height: usize) -> Self {
        let w = width as f64 - 0.5;
        let h = height as f64 - 0.5;
        Self {
            width,
            height,
            planes: (0..3).map(|_| Array2::zeros((height, width))).collect(),
            corners: [(-0.5, -0.5), (w, -0.5), (w, h), (-0.5, h)],
            pose: None,
            perspective: true,
        }
    }

    pub fn from_planes(planes: Vec<Array2<f64>>, corners: [(f64, f64); 4]) -> Result<Self> {
        if planes.len() != 3 {
            return Err(CalibError::DimensionMismatch {
                expected: "3 planes".into(),
                actual: format!("{} planes", planes.len()),
            });
        }
        let (height, width) = planes[0].dim();
        if planes.iter().any(|p| p.dim() != (height, width)) {
            return Err(CalibError::DimensionMismatch {
                expected: format!("{width}x{height}"),
                actual: "planes of differing size".into(),
            });
        }
        Ok(Self {
            width,
            height,
            planes,
            corners,
            pose: None,
            perspective: true,
        })
    }

    pub fn check_same_size(&self, other: &CapturedImage) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(CalibError::DimensionMismatch {
                expected: format!("{}x{}", self.width, self.height),
                actual: format!("{}x{}", other.width, other.height),
            });
        }
        Ok(())
    }

    pub fn max_value(&self) -> f64 {
        self.planes.iter().flat_map(|p| p.iter()).fold(0.0, |a, &b| a.max(b))
    }

    /// Sum of the three channels.
    pub fn luminance(&self) -> Array2<f64> {
        &self.planes[0] + &self.planes[1] + &self.planes[2]
    }

    /// The image as seen in a mirror. Corners keep their panel labels.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for p in &mut out.planes {
            p.invert_axis(Axis(1));
            *p = p.as_standard_layout().into_owned();
        }
        let w = self.width as f64 - 1.0;
        out.corners = self.corners.map(|(x, y)| (w - x, y));
        out
    }
}

impl std::ops::Add for &CapturedImage {
    type Output = CapturedImage;

    fn add(self, rhs: &CapturedImage) -> CapturedImage {
        let mut out = self.clone();
        for (a, b) in out.planes.iter_mut().zip(&rhs.planes) {
            *a += b;
        }
        out
    }
}

/// Slit transmission for the ray from panel point `(x, y)` (centered
/// subpixels and rows) to the camera center.
pub fn visibility(
    x: f64,
    y: f64,
    pose: &CameraPose,
    params: &DisplayParams,
    slit_width: f64,
    aperture: Aperture,
) -> Result<f64> {
    let optics = SlitOptics::new(params, pose, slit_width, aperture)?;
    Ok(optics.transmission(x * params.panel.q, y * params.panel.row_pitch))
}

/// Visible strips projected onto the panel plane. With `z = X - Y tan(alpha)`
/// (mm) the strip centers sit at `z_k = z0 + k * period`.
#[derive(Debug, Clone, Copy)]
struct SlitOptics {
    tan_alpha: f64,
    z0: f64,
    period: f64,
    /// Strip half width along `z` for the box aperture.
    half_width: f64,
    aperture: Aperture,
}

impl SlitOptics {
    fn new(params: &DisplayParams, pose: &CameraPose, slit_width: f64, aperture: Aperture) -> Result<Self> {
        let (u, v, d) = (pose.u(), pose.v(), pose.d());
        let t = params.t;
        if !(d > t) {
            return Err(CalibError::InvalidGeometry(format!(
                "camera distance {d} mm must exceed the gap {t} mm"
            )));
        }
        let tan_alpha = params.alpha.tan();
        let big_p = params.horizontal_period();
        // Barrier offset of the ray through panel point X: a*z + b.
        let a = (d - t) / d;
        let b = t / d * (u - v * tan_alpha) - params.sigma;
        Ok(Self {
            tan_alpha,
            z0: -b / a,
            period: big_p / a,
            half_width: slit_width / (2.0 * params.alpha.cos() * a),
            aperture,
        })
    }

    fn profile(&self, dz: f64) -> f64 {
        let r = dz.abs() / self.half_width;
        match self.aperture {
            Aperture::Box => {
                if r <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Aperture::RaisedCosine => {
                if r < 2.0 {
                    0.5 * (1.0 + (std::f64::consts::PI * r / 2.0).cos())
                } else {
                    0.0
                }
            }
        }
    }

    fn transmission(&self, x_mm: f64, y_mm: f64) -> f64 {
        let z = x_mm - y_mm * self.tan_alpha;
        self.profile(wrap_centered(z - self.z0, self.period))
    }

    /// Strip pieces `(z_lo, z_hi, level)` overlapping `[z_min, z_max]`.
    fn slabs(&self, z_min: f64, z_max: f64, out: &mut Vec<(f64, f64, f64)>) {
        out.clear();
        let reach = match self.aperture {
            Aperture::Box => self.half_width,
            Aperture::RaisedCosine => 2.0 * self.half_width,
        };
        let k0 = ((z_min - reach - self.z0) / self.period).ceil() as i64;
        let k1 = ((z_max + reach - self.z0) / self.period).floor() as i64;
        for k in k0..=k1 {
            let c = self.z0 + k as f64 * self.period;
            match self.aperture {
                Aperture::Box => out.push((c - reach, c + reach, 1.0)),
                Aperture::RaisedCosine => {
                    const PIECES: usize = 16;
                    let step = 2.0 * reach / PIECES as f64;
                    for i in 0..PIECES {
                        let lo = c - reach + i as f64 * step;
                        out.push((lo, lo + step, self.profile(lo + step / 2.0 - c)));
                    }
                }
            }
        }
    }
}

/// Convex polygon with at most eight vertices.
#[derive(Debug, Clone, Copy)]
struct Polygon {
    pts: [(f64, f64); 8],
    len: usize,
}

impl Polygon {
    fn rect(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let mut pts = [(0.0, 0.0); 8];
        pts[..4].copy_from_slice(&[(x0, y0), (x1, y0), (x1, y1), (x0, y1)]);
        Self { pts, len: 4 }
    }

    /// Keep the part where `f(p) <= 0` for the affine function `f`.
    fn clip(&self, f: impl Fn((f64, f64)) -> f64) -> Self {
        let mut out = Polygon {
            pts: [(0.0, 0.0); 8],
            len: 0,
        };
        for i in 0..self.len {
            let a = self.pts[i];
            let b = self.pts[(i + 1) % self.len];
            let (fa, fb) = (f(a), f(b));
            if fa <= 0.0 {
                out.push(a);
            }
            if (fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0) {
                let s = fa / (fa - fb);
                out.push((a.0 + s * (b.0 - a.0), a.1 + s * (b.1 - a.1)));
            }
        }
        out
    }

    fn push(&mut self, p: (f64, f64)) {
        if self.len < self.pts.len() {
            self.pts[self.len] = p;
            self.len += 1;
        }
    }

    /// Area, centroid and central second moments `(sxx, syy, sxy)`.
    fn moments(&self) -> Option<(f64, (f64, f64), (f64, f64, f64))> {
        if self.len < 3 {
            return None;
        }
        let (mut a, mut cx, mut cy, mut ixx, mut iyy, mut ixy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..self.len {
            let (x0, y0) = self.pts[i];
            let (x1, y1) = self.pts[(i + 1) % self.len];
            let cr = x0 * y1 - x1 * y0;
            a += cr;
            cx += (x0 + x1) * cr;
            cy += (y0 + y1) * cr;
            ixx += (x0 * x0 + x0 * x1 + x1 * x1) * cr;
            iyy += (y0 * y0 + y0 * y1 + y1 * y1) * cr;
            ixy += (x0 * y1 + 2.0 * x0 * y0 + 2.0 * x1 * y1 + x1 * y0) * cr;
        }
        a /= 2.0;
        if a.abs() < 1e-300 {
            return None;
        }
        cx /= 6.0 * a;
        cy /= 6.0 * a;
        let sxx = ixx / (12.0 * a) - cx * cx;
        let syy = iyy / (12.0 * a) - cy * cy;
        let sxy = ixy / (24.0 * a) - cx * cy;
        Some((a.abs(), (cx, cy), (sxx.max(0.0), syy.max(0.0), sxy)))
    }
}

/// Gaussian footprint in image pixels.
#[derive(Debug, Clone, Copy)]
struct Splat {
    channel: usize,
    mx: f64,
    my: f64,
    sx: f64,
    sy: f64,
    weight: f64,
}

impl Splat {
    fn radius(s: f64) -> f64 {
        4.0 * s + 1.0
    }

    fn x_range(&self) -> (i64, i64) {
        let r = Self::radius(self.sx);
        ((self.mx - r).floor() as i64, (self.mx + r).ceil() as i64)
    }

    fn y_range(&self) -> (i64, i64) {
        let r = Self::radius(self.sy);
        ((self.my - r).floor() as i64, (self.my + r).ceil() as i64)
    }
}

/// Fractions of a unit Gaussian falling into the pixels `lo..=hi`.
fn pixel_fractions(mean: f64, sigma: f64, lo: i64, hi: i64, out: &mut Vec<f64>) {
    out.clear();
    let cdf = |x: f64| {
        if sigma <= 1e-12 {
            if x >= 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            0.5 * (1.0 + erf(x / (sigma * std::f64::consts::SQRT_2)))
        }
    };
    let mut prev = cdf(lo as f64 - 0.5 - mean);
    for i in lo..=hi {
        let next = cdf(i as f64 + 0.5 - mean);
        out.push(next - prev);
        prev = next;
    }
}

fn jacobian(h: &Homography, x: f64, y: f64) -> [[f64; 2]; 2] {
    let m = &h.matrix;
    let w = m[(2, 0)] * x + m[(2, 1)] * y + m[(2, 2)];
    let u = (m[(0, 0)] * x + m[(0, 1)] * y + m[(0, 2)]) / w;
    let v = (m[(1, 0)] * x + m[(1, 1)] * y + m[(1, 2)]) / w;
    [
        [(m[(0, 0)] - u * m[(2, 0)]) / w, (m[(0, 1)] - u * m[(2, 1)]) / w],
        [(m[(1, 0)] - v * m[(2, 0)]) / w, (m[(1, 1)] - v * m[(2, 1)]) / w],
    ]
}

/// Panel millimeters to capture pixels, with the capture size and corner
/// positions.
fn capture_mapping(params: &DisplayParams, pose: &CameraPose, opts: &SimOptions) -> Result<(Homography, usize, usize)> {
    let panel = &params.panel;
    if opts.apply_perspective {
        let h = pose.homography();
        for (x, y) in panel.corners_mm() {
            let m = &h.matrix;
            if m[(2, 0)] * x + m[(2, 1)] * y + m[(2, 2)] <= 0.0 {
                return Err(CalibError::InvalidGeometry("panel corner behind the camera".into()));
            }
        }
        Ok((h, pose.intrinsics.width, pose.intrinsics.height))
    } else {
        let m = nalgebra::Matrix3::new(
            1.0 / panel.q,
            0.0,
            panel.center_col(),
            0.0,
            1.0 / panel.row_pitch,
            panel.center_row(),
            0.0,
            0.0,
            1.0,
        );
        Ok((Homography::new(m), panel.panel_w, panel.panel_h))
    }
}

const ROW_CHUNKS: usize = 64;

fn render_splat(
    panel_img: &PanelImage,
    params: &DisplayParams,
    optics: &SlitOptics,
    h: &Homography,
    width: usize,
    height: usize,
    psf: f64,
) -> Vec<Array2<f64>> {
    let panel = &params.panel;
    let (q, rp) = (panel.q, panel.row_pitch);
    let (cc, cr) = (panel.center_col(), panel.center_row());
    let tan_a = optics.tan_alpha;
    let rows = panel.panel_h;
    let chunk = rows.div_ceil(ROW_CHUNKS).max(1);

    let pieces: Vec<_> = (0..rows.div_ceil(chunk))
        .into_par_iter()
        .map(|ci| {
            let mut splats = Vec::new();
            let mut slabs = Vec::new();
            for r in ci * chunk..((ci + 1) * chunk).min(rows) {
                let y0 = (r as f64 - 0.5 - cr) * rp;
                let y1 = y0 + rp;
                for c in 0..panel.panel_w {
                    let channel = c % 3;
                    let level = panel_img.planes[channel][[r, c]];
                    if level == 0 {
                        continue;
                    }
                    let level = level as f64 / 255.0;
                    let x0 = (c as f64 - 0.5 - cc) * q;
                    let x1 = x0 + q;
                    let zs = [x0 - y0 * tan_a, x1 - y0 * tan_a, x0 - y1 * tan_a, x1 - y1 * tan_a];
                    let z_min = zs.iter().cloned().fold(f64::INFINITY, f64::min);
                    let z_max = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    optics.slabs(z_min, z_max, &mut slabs);
                    // Work relative to the cell center for precision.
                    let (ox, oy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
                    let oz = ox - oy * tan_a;
                    let cell = Polygon::rect(x0 - ox, x1 - ox, y0 - oy, y1 - oy);
                    for &(lo, hi, t) in &slabs {
                        let (lo, hi) = (lo - oz, hi - oz);
                        let piece = cell
                            .clip(|(x, y)| lo - (x - y * tan_a))
                            .clip(|(x, y)| (x - y * tan_a) - hi);
                        let Some((area, (mx, my), (sxx, syy, sxy))) = piece.moments() else {
                            continue;
                        };
                        let (px, py) = (mx + ox, my + oy);
                        let (u, v) = h.apply(px, py);
                        let j = jacobian(h, px, py);
                        let det = (j[0][0] * j[1][1] - j[0][1] * j[1][0]).abs();
                        let cxx = j[0][0] * j[0][0] * sxx + 2.0 * j[0][0] * j[0][1] * sxy + j[0][1] * j[0][1] * syy;
                        let cyy = j[1][0] * j[1][0] * sxx + 2.0 * j[1][0] * j[1][1] * sxy + j[1][1] * j[1][1] * syy;
                        splats.push(Splat {
                            channel,
                            mx: u,
                            my: v,
                            sx: (cxx + psf * psf).sqrt(),
                            sy: (cyy + psf * psf).sqrt(),
                            weight: level * t * area * det,
                        });
                    }
                }
            }
            accumulate(&splats, width as i64, height as i64)
        })
        .collect();

    let mut out: Vec<Array2<f64>> = (0..3).map(|_| Array2::zeros((height, width))).collect();
    for piece in pieces.into_iter().flatten() {
        let (x0, y0, bufs) = piece;
        for (dst, src) in out.iter_mut().zip(bufs) {
            let (bh, bw) = src.dim();
            let mut view = dst.slice_mut(ndarray::s![y0..y0 + bh, x0..x0 + bw]);
            view += &src;
        }
    }
    out
}

type Band = (usize, usize, Vec<Array2<f64>>);

/// Splat into a buffer covering just the touched region of the image.
fn accumulate(splats: &[Splat], width: i64, height: i64) -> Option<Band> {
    let (mut bx0, mut bx1, mut by0, mut by1) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    for s in splats {
        let (a, b) = s.x_range();
        let (c, d) = s.y_range();
        bx0 = bx0.min(a.max(0));
        bx1 = bx1.max(b.min(width - 1));
        by0 = by0.min(c.max(0));
        by1 = by1.max(d.min(height - 1));
    }
    if bx0 > bx1 || by0 > by1 {
        return None;
    }
    let (bw, bh) = ((bx1 - bx0 + 1) as usize, (by1 - by0 + 1) as usize);
    let mut bufs: Vec<Array2<f64>> = (0..3).map(|_| Array2::zeros((bh, bw))).collect();
    let (mut fx, mut fy) = (Vec::new(), Vec::new());
    for s in splats {
        let (xa, xb) = s.x_range();
        let (ya, yb) = s.y_range();
        let (xa, xb) = (xa.max(0), xb.min(width - 1));
        let (ya, yb) = (ya.max(0), yb.min(height - 1));
        if xa > xb || ya > yb {
            continue;
        }
        pixel_fractions(s.mx, s.sx, xa, xb, &mut fx);
        pixel_fractions(s.my, s.sy, ya, yb, &mut fy);
        let buf = &mut bufs[s.channel];
        for (jy, wy) in fy.iter().enumerate() {
            let row = (ya - by0) as usize + jy;
            let wy = wy * s.weight;
            for (jx, wx) in fx.iter().enumerate() {
                buf[[row, (xa - bx0) as usize + jx]] += wy * wx;
            }
        }
    }
    Some((bx0 as usize, by0 as usize, bufs))
}

fn render_raster(
    panel_img: &PanelImage,
    params: &DisplayParams,
    optics: &SlitOptics,
    h: &Homography,
    width: usize,
    height: usize,
    supersample: usize,
) -> Result<Vec<Array2<f64>>> {
    let inv = h.inverse()?;
    let panel = &params.panel;
    let k = supersample;
    let norm = 1.0 / (k * k) as f64;
    let mut out: Vec<Array2<f64>> = (0..3).map(|_| Array2::zeros((height, width))).collect();
    let rows: Vec<[Vec<f64>; 3]> = (0..height)
        .into_par_iter()
        .map(|j| {
            let mut acc = [vec![0.0; width], vec![0.0; width], vec![0.0; width]];
            for i in 0..width {
                for b in 0..k {
                    let py = j as f64 - 0.5 + (b as f64 + 0.5) / k as f64;
                    for a in 0..k {
                        let px = i as f64 - 0.5 + (a as f64 + 0.5) / k as f64;
                        let (xm, ym) = inv.apply(px, py);
                        let (ci, ri) = panel.mm_to_index(xm, ym);
                        let (c, r) = (ci.round(), ri.round());
                        if c < 0.0 || r < 0.0 || c >= panel.panel_w as f64 || r >= panel.panel_h as f64 {
                            continue;
                        }
                        let (c, r) = (c as usize, r as usize);
                        let level = panel_img.planes[c % 3][[r, c]];
                        if level == 0 {
                            continue;
                        }
                        acc[c % 3][i] += level as f64 / 255.0 * optics.transmission(xm, ym);
                    }
                }
            }
            acc
        })
        .collect();
    for (j, acc) in rows.into_iter().enumerate() {
        for (c, row) in acc.into_iter().enumerate() {
            for (i, v) in row.into_iter().enumerate() {
                out[c][[j, i]] = v * norm;
            }
        }
    }
    Ok(out)
}

/// Separable Gaussian blur with zero padding.
pub fn gaussian_blur(img: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let r = (4.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / total).collect();
    let pass = |src: &Array2<f64>| {
        let (h, w) = src.dim();
        let mut dst = Array2::zeros((h, w));
        dst.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(j, mut row)| {
            for i in 0..w as i64 {
                let mut s = 0.0;
                for (o, k) in (-r..=r).zip(&kernel) {
                    let x = i + o;
                    if x >= 0 && x < w as i64 {
                        s += k * src[[j, x as usize]];
                    }
                }
                row[i as usize] = s;
            }
        });
        dst
    };
    let horizontal = pass(img);
    pass(&horizontal.t().as_standard_layout().into_owned()).t().as_standard_layout().into_owned()
}

/// Photograph `panel_img` shown on a display with parameters `params` from
/// `pose`.
pub fn simulate_capture(
    panel_img: &PanelImage,
    params: &DisplayParams,
    pose: &CameraPose,
    opts: &SimOptions,
) -> Result<CapturedImage> {
    panel_img.check_matches(&params.panel)?;
    opts.validate(params)?;
    let slit = opts.slit_width_for(params);
    let optics = SlitOptics::new(params, pose, slit, opts.aperture)?;
    let (h, width, height) = capture_mapping(params, pose, opts)?;
    let planes = match opts.mode {
        RenderMode::Splat => render_splat(panel_img, params, &optics, &h, width, height, opts.psf_sigma),
        RenderMode::Raster => {
            let raw = render_raster(panel_img, params, &optics, &h, width, height, opts.supersample)?;
            raw.iter().map(|p| gaussian_blur(p, opts.psf_sigma)).collect()
        }
    };
    let corners = params.panel.corners_mm().map(|(x, y)| h.apply(x, y));
    let capture = CapturedImage {
        width,
        height,
        planes,
        corners,
        pose: Some(*pose),
        perspective: opts.apply_perspective,
    };
    match opts.noise_scale {
        Some(scale) => add_poisson_noise(&capture, scale, opts.seed),
        None => Ok(capture),
    }
}

/// Shot noise: each value becomes `Poisson(value * scale) / scale`. Every
/// (channel, row) draws from its own stream of a generator seeded with
/// `seed`, so the result does not depend on scheduling.
pub fn add_poisson_noise(img: &CapturedImage, scale: f64, seed: u64) -> Result<CapturedImage> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(CalibError::InvalidParameter("noise scale must be positive".into()));
    }
    let mut out = img.clone();
    for (c, plane) in out.planes.iter_mut().enumerate() {
        plane.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(j, mut row)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((c as u64) << 32) | j as u64);
            for v in row.iter_mut() {
                let lambda = v.max(0.0) * scale;
                *v = if lambda > 0.0 {
                    Poisson::new(lambda).map(|d| d.sample(&mut rng)).unwrap_or(lambda) / scale
                } else {
                    0.0
                };
            }
        });
    }
    Ok(out)
}

fn power(img: &CapturedImage) -> f64 {
    img.planes.iter().flat_map(|p| p.iter()).map(|v| v * v).sum()
}

/// Signal-to-noise ratio in dB over the whole frame. Infinite when the two
/// images are identical.
pub fn snr(clean: &CapturedImage, noisy: &CapturedImage) -> Result<f64> {
    clean.check_same_size(noisy)?;
    let noise: f64 = clean
        .planes
        .iter()
        .zip(&noisy.planes)
        .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (y - x) * (y - x)))
        .sum();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (power(clean) / noise).log10())
}

/// Photon scale whose expected shot noise gives `snr_db` on `clean`.
pub fn noise_scale_for_snr(clean: &CapturedImage, snr_db: f64) -> Result<f64> {
    let total: f64 = clean.planes.iter().flat_map(|p| p.iter()).sum();
    let signal = power(clean);
    if !(signal > 0.0) {
        return Err(CalibError::EmptyInput("capture has no signal".into()));
    }
    Ok(10f64.powf(snr_db / 10.0) * total / signal)
}
