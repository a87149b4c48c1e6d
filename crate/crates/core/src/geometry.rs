//! Display geometry: physical parameters, their projection onto the panel
//! plane for a given viewing distance, view coordinates, and the point
//! lattice that appears when views are assigned with wrong parameters.
//!
//! Units: `p`, `t`, `sigma` and every camera/eye coordinate are millimeters.
//! Panel-plane coordinates are subpixel columns (`x`) and rows (`y`),
//! measured from the panel center unless a function says otherwise. Angles
//! are radians internally; constructors and accessors named `*_deg` take or
//! return degrees.

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};

/// Absolute tolerance for geometric equality checks.
pub const GEOMETRY_TOLERANCE: f64 = 1e-9;

/// Reduce `value` into `[0, period)`.
pub fn wrap_positive(value: f64, period: f64) -> f64 {
    let r = value.rem_euclid(period);
    // rem_euclid can round up to `period` for tiny negative inputs.
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Reduce `value` into `(-period/2, period/2]`.
pub fn wrap_centered(value: f64, period: f64) -> f64 {
    let r = wrap_positive(value, period);
    if r > period / 2.0 {
        r - period
    } else {
        r
    }
}

/// Physical layout of the flat panel behind the optical element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelGeometry {
    /// Subpixel columns (three per RGB pixel).
    pub panel_w: usize,
    /// Pixel rows.
    pub panel_h: usize,
    /// Subpixel pitch, mm per subpixel column.
    pub q: f64,
    /// Row pitch, mm per row.
    pub row_pitch: f64,
}

impl PanelGeometry {
    pub fn new(panel_w: usize, panel_h: usize, q: f64, row_pitch: f64) -> Result<Self> {
        if panel_w == 0 || panel_h == 0 {
            return Err(CalibError::InvalidParameter(
                "panel dimensions must be positive".into(),
            ));
        }
        if !panel_w.is_multiple_of(3) {
            return Err(CalibError::InvalidParameter(format!(
                "panel width {panel_w} is not a whole number of RGB triplets"
            )));
        }
        if !(q > 0.0 && q.is_finite() && row_pitch > 0.0 && row_pitch.is_finite()) {
            return Err(CalibError::InvalidParameter(
                "subpixel and row pitch must be positive".into(),
            ));
        }
        Ok(Self {
            panel_w,
            panel_h,
            q,
            row_pitch,
        })
    }

    /// Square-pixel panel of the given diagonal (inches) and pixel resolution.
    pub fn from_diagonal(diagonal_in: f64, res_w: usize, res_h: usize) -> Result<Self> {
        let diag_px = ((res_w * res_w + res_h * res_h) as f64).sqrt();
        let pixel_pitch = diagonal_in * 25.4 / diag_px;
        Self::new(3 * res_w, res_h, pixel_pitch / 3.0, pixel_pitch)
    }

    pub fn width_mm(&self) -> f64 {
        self.panel_w as f64 * self.q
    }

    pub fn height_mm(&self) -> f64 {
        self.panel_h as f64 * self.row_pitch
    }

    /// Column-index coordinate of the panel center.
    pub fn center_col(&self) -> f64 {
        (self.panel_w as f64 - 1.0) / 2.0
    }

    /// Row-index coordinate of the panel center.
    pub fn center_row(&self) -> f64 {
        (self.panel_h as f64 - 1.0) / 2.0
    }

    /// Row pitch over subpixel pitch; converts a physical slope into
    /// subpixel columns per row.
    pub fn row_aspect(&self) -> f64 {
        self.row_pitch / self.q
    }

    /// Column/row index (column `c` is centered at `c`) to centered panel
    /// coordinates in subpixels and rows.
    pub fn index_to_centered(&self, col: f64, row: f64) -> (f64, f64) {
        (col - self.center_col(), row - self.center_row())
    }

    pub fn centered_to_index(&self, x: f64, y: f64) -> (f64, f64) {
        (x + self.center_col(), y + self.center_row())
    }

    /// Column/row index to millimeters from the panel center.
    pub fn index_to_mm(&self, col: f64, row: f64) -> (f64, f64) {
        let (x, y) = self.index_to_centered(col, row);
        (x * self.q, y * self.row_pitch)
    }

    pub fn mm_to_index(&self, x_mm: f64, y_mm: f64) -> (f64, f64) {
        self.centered_to_index(x_mm / self.q, y_mm / self.row_pitch)
    }

    /// Physical panel corners in mm, ordered TL, TR, BR, BL.
    pub fn corners_mm(&self) -> [(f64, f64); 4] {
        let hw = self.width_mm() / 2.0;
        let hh = self.height_mm() / 2.0;
        [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)]
    }

    /// Panel corners in column/row index coordinates, ordered TL, TR, BR, BL.
    pub fn corners_index(&self) -> [(f64, f64); 4] {
        let w = self.panel_w as f64 - 0.5;
        let h = self.panel_h as f64 - 0.5;
        [(-0.5, -0.5), (w, -0.5), (w, h), (-0.5, h)]
    }
}

/// Physical display parameters (p, alpha, t, sigma) and the panel they sit on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplayParams {
    /// Barrier slit / lenslet pitch, mm.
    pub p: f64,
    /// Slant angle, radians.
    pub alpha: f64,
    /// Gap between panel and optical element, mm.
    pub t: f64,
    /// Horizontal offset of the slits from the panel center, mm.
    pub sigma: f64,
    pub panel: PanelGeometry,
}

impl DisplayParams {
    /// Validates the parameters and normalizes `sigma` into
    /// `(-P/2, P/2]`, where `P = p / cos(alpha)` is the horizontal slit period.
    pub fn new(p: f64, alpha_deg: f64, t: f64, sigma: f64, panel: PanelGeometry) -> Result<Self> {
        Self::from_radians(p, alpha_deg.to_radians(), t, sigma, panel)
    }

    pub fn from_radians(
        p: f64,
        alpha: f64,
        t: f64,
        sigma: f64,
        panel: PanelGeometry,
    ) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(CalibError::InvalidParameter(format!("pitch {p} must be positive")));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(CalibError::InvalidParameter(format!("gap {t} must be non-negative")));
        }
        if !(alpha > 0.0 && alpha < std::f64::consts::FRAC_PI_2) {
            return Err(CalibError::InvalidParameter(format!(
                "slant angle {:.6} deg must lie strictly between 0 and 90",
                alpha.to_degrees()
            )));
        }
        if !sigma.is_finite() {
            return Err(CalibError::InvalidParameter("offset must be finite".into()));
        }
        let period = p / alpha.cos();
        Ok(Self {
            p,
            alpha,
            t,
            sigma: wrap_centered(sigma, period),
            panel,
        })
    }

    pub fn alpha_deg(&self) -> f64 {
        self.alpha.to_degrees()
    }

    /// Horizontal distance between neighbouring slits on the barrier plane, mm.
    pub fn horizontal_period(&self) -> f64 {
        self.p / self.alpha.cos()
    }

    fn check_distance(&self, d: f64) -> Result<()> {
        if !(d > self.t) || !d.is_finite() {
            return Err(CalibError::InvalidGeometry(format!(
                "observation distance {d} mm must exceed the gap {} mm",
                self.t
            )));
        }
        Ok(())
    }
}

/// Panel-plane parameters (h, alpha, rho) seen from distance `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// Horizontal period of the visible-pixel lines, subpixels.
    pub h: f64,
    /// Slant angle, radians.
    pub alpha: f64,
    /// Horizontal offset of the line family from the panel center, subpixels,
    /// in `[0, h)`.
    pub rho: f64,
    /// Observation distance these were derived for, mm (infinite for pure
    /// rendering parameters).
    pub d: f64,
    /// Row pitch over subpixel pitch of the panel.
    pub row_aspect: f64,
}

impl DerivedParams {
    /// Parameters used by a renderer for view assignment.
    pub fn rendering(h: f64, alpha: f64, rho: f64, row_aspect: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(CalibError::InvalidParameter(format!("horizontal pitch {h} must be positive")));
        }
        if !(row_aspect > 0.0) || !alpha.is_finite() || !rho.is_finite() {
            return Err(CalibError::InvalidParameter("non-finite rendering parameters".into()));
        }
        Ok(Self {
            h,
            alpha,
            rho: wrap_positive(rho, h),
            d: f64::INFINITY,
            row_aspect,
        })
    }

    /// Rendering parameters `(h_r, alpha_r, rho_r) = (beta, 0, epsilon)` under
    /// which view 0 is the set of columns `c` with `(c - epsilon) mod beta == 0`.
    pub fn stripe_rendering(beta: f64, epsilon: f64, panel: &PanelGeometry) -> Result<Self> {
        Self::rendering(beta, 0.0, epsilon - panel.center_col(), panel.row_aspect())
    }

    /// Slope of the lines in subpixel columns per row.
    pub fn slope(&self) -> f64 {
        self.row_aspect * self.alpha.tan()
    }
}

/// Position within one period of views, in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct View(f64);

impl View {
    pub fn new(gamma: f64) -> Self {
        View(wrap_positive(gamma, 1.0))
    }

    pub fn gamma(self) -> f64 {
        self.0
    }
}

/// Project display parameters onto the panel plane for an observer at
/// distance `d`.
pub fn derive(params: &DisplayParams, d: f64) -> Result<DerivedParams> {
    params.check_distance(d)?;
    let scale = d / (d - params.t);
    let q = params.panel.q;
    let h = scale * params.horizontal_period() / q;
    let rho = scale * params.sigma / q;
    Ok(DerivedParams {
        h,
        alpha: params.alpha,
        rho: wrap_positive(rho, h),
        d,
        row_aspect: params.panel.row_aspect(),
    })
}

/// View seen from eye/camera position `(u, v)` at distance `d`, all mm
/// relative to the panel center.
pub fn view_of_position(u: f64, v: f64, d: f64, params: &DisplayParams) -> Result<View> {
    params.check_distance(d)?;
    let (s, c) = params.alpha.sin_cos();
    Ok(View::new(params.t / (params.p * d) * (v * s - u * c)))
}

/// View assigned to the panel point `(x, y)` (subpixels, rows; centered).
pub fn view_of_pixel(x: f64, y: f64, derived: &DerivedParams) -> View {
    let offset = x - derived.rho - y * derived.slope();
    View::new(wrap_positive(offset, derived.h) / derived.h)
}

/// Axis-aligned region of the panel plane, inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// The whole panel in centered coordinates.
    pub fn panel(panel: &PanelGeometry) -> Self {
        let (x0, y0) = panel.index_to_centered(-0.5, -0.5);
        let (x1, y1) = panel.index_to_centered(panel.panel_w as f64 - 0.5, panel.panel_h as f64 - 0.5);
        Self::new(x0, x1, y0, y1)
    }
}

/// Intersection lattice of the rendered view set `P_{gamma'}(render)` with
/// the visible set `P_gamma(actual)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeModel {
    pub h: f64,
    pub h_r: f64,
    pub alpha: f64,
    pub alpha_r: f64,
    pub rho: f64,
    pub rho_r: f64,
    pub gamma: f64,
    pub gamma_prime: f64,
    slope: f64,
    slope_r: f64,
}

impl LatticeModel {
    pub fn new(actual: &DerivedParams, render: &DerivedParams, gamma: View, gamma_prime: View) -> Result<Self> {
        let slope = actual.slope();
        let slope_r = render.row_aspect * render.alpha.tan();
        if (slope - slope_r).abs() <= GEOMETRY_TOLERANCE {
            return Err(CalibError::DegenerateLattice);
        }
        Ok(Self {
            h: actual.h,
            h_r: render.h,
            alpha: actual.alpha,
            alpha_r: render.alpha,
            rho: actual.rho,
            rho_r: render.rho,
            gamma: gamma.gamma(),
            gamma_prime: gamma_prime.gamma(),
            slope,
            slope_r,
        })
    }

    /// Point for lattice indices `(m, n)`: `m` counts rendered lines, `n`
    /// counts visible lines.
    pub fn point(&self, m: i64, n: i64) -> (f64, f64) {
        let (ax, ay) = self.anchor();
        let ((gmx, gmy), (gnx, gny)) = self.generators();
        (
            ax + m as f64 * gmx + n as f64 * gnx,
            ay + m as f64 * gmy + n as f64 * gny,
        )
    }

    /// Point at `(m, n) = (0, 0)`.
    pub fn anchor(&self) -> (f64, f64) {
        let den = self.slope - self.slope_r;
        let c_r = self.rho_r + self.gamma_prime * self.h_r;
        let c = self.rho + self.gamma * self.h;
        let y = (c_r - c) / den;
        (y * self.slope + c, y)
    }

    /// Generator vectors for unit steps in `m` and `n`.
    pub fn generators(&self) -> ((f64, f64), (f64, f64)) {
        let den = self.slope - self.slope_r;
        let ym = self.h_r / den;
        let yn = -self.h / den;
        ((ym * self.slope, ym), (yn * self.slope + self.h, yn))
    }

    /// All lattice points inside `region`, sorted lexicographically by (x, y).
    pub fn points_in(&self, region: &Region) -> Vec<(f64, f64)> {
        let (ax, ay) = self.anchor();
        let ((gmx, gmy), (gnx, gny)) = self.generators();
        let det = gmx * gny - gnx * gmy;
        let corners = [
            (region.x_min, region.y_min),
            (region.x_max, region.y_min),
            (region.x_max, region.y_max),
            (region.x_min, region.y_max),
        ];
        let (mut m_lo, mut m_hi, mut n_lo, mut n_hi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for (cx, cy) in corners {
            let (dx, dy) = (cx - ax, cy - ay);
            let m = (dx * gny - dy * gnx) / det;
            let n = (gmx * dy - gmy * dx) / det;
            m_lo = m_lo.min(m);
            m_hi = m_hi.max(m);
            n_lo = n_lo.min(n);
            n_hi = n_hi.max(n);
        }
        let mut points = Vec::new();
        for m in (m_lo.floor() as i64 - 1)..=(m_hi.ceil() as i64 + 1) {
            for n in (n_lo.floor() as i64 - 1)..=(n_hi.ceil() as i64 + 1) {
                let (x, y) = self.point(m, n);
                if region.contains(x, y) {
                    points.push((x, y));
                }
            }
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        points
    }
}

/// Lattice points where pixels rendered for view `gamma_prime` are seen from
/// view `gamma`.
pub fn predict_lattice(
    actual: &DerivedParams,
    render: &DerivedParams,
    gamma: View,
    gamma_prime: View,
    region: &Region,
) -> Result<Vec<(f64, f64)>> {
    Ok(LatticeModel::new(actual, render, gamma, gamma_prime)?.points_in(region))
}

/// True when rendering with `render` assigns every visible pixel its own view,
/// which holds exactly when the parameters agree (offset modulo one period).
pub fn check_rendering_correct(actual: &DerivedParams, render: &DerivedParams) -> bool {
    let tol = GEOMETRY_TOLERANCE;
    if (actual.h - render.h).abs() > tol * actual.h.max(1.0) {
        return false;
    }
    if (actual.alpha - render.alpha).abs() > tol {
        return false;
    }
    if (actual.row_aspect - render.row_aspect).abs() > tol * actual.row_aspect {
        return false;
    }
    wrap_centered(actual.rho - render.rho, actual.h).abs() <= tol * actual.h.max(1.0)
}

/// Display designs used by the synthetic experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DisplayPreset {
    /// 55 in, 1920x1080, parallax barrier.
    #[serde(rename = "FHD55B")]
    Fhd55b,
    /// 32 in, 3840x2160, parallax barrier.
    #[serde(rename = "UHD32B")]
    Uhd32b,
    /// 10 in, 2560x1600, lenticular sheet.
    #[serde(rename = "WQXGA10L")]
    Wqxga10l,
}

impl DisplayPreset {
    pub const ALL: [DisplayPreset; 3] = [Self::Fhd55b, Self::Uhd32b, Self::Wqxga10l];

    pub fn name(self) -> &'static str {
        match self {
            Self::Fhd55b => "FHD55B",
            Self::Uhd32b => "UHD32B",
            Self::Wqxga10l => "WQXGA10L",
        }
    }

    pub fn panel(self) -> PanelGeometry {
        let (diag, w, h) = match self {
            Self::Fhd55b => (55.0, 1920, 1080),
            Self::Uhd32b => (32.0, 3840, 2160),
            Self::Wqxga10l => (10.0, 2560, 1600),
        };
        PanelGeometry::from_diagonal(diag, w, h).expect("preset panels are valid")
    }

    /// Designed parameters (p mm, alpha deg, t mm, sigma mm).
    pub fn design(self) -> (f64, f64, f64, f64) {
        match self {
            Self::Fhd55b => (1.0, 18.0, 4.0, 0.5),
            Self::Uhd32b => (0.5, 10.0, 2.0, 0.2),
            Self::Wqxga10l => (0.1, 12.0, 1.0, 0.05),
        }
    }

    pub fn params(self) -> DisplayParams {
        let (p, a, t, s) = self.design();
        DisplayParams::new(p, a, t, s, self.panel()).expect("preset parameters are valid")
    }
}

impl std::str::FromStr for DisplayPreset {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FHD55B" => Ok(Self::Fhd55b),
            "UHD32B" => Ok(Self::Uhd32b),
            "WQXGA10L" => Ok(Self::Wqxga10l),
            other => Err(CalibError::Config(format!("unknown display preset '{other}'"))),
        }
    }
}

impl std::fmt::Display for DisplayPreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
