//! From spectral peaks to display parameters.
//!
//! A refined peak `(fx, fy)` of a capture showing stripes of spacing `beta`
//! is the lattice node `(m / beta - n / h, n * r * tan(alpha) / h)` for some
//! unknown integers `(m, n)`, where `r` is the row aspect. Each channel yields
//! a discrete candidate set for `(h, alpha)`; the two channels of a capture
//! agree only near the truth. Two captures at different distances fix the
//! pitch and gap, and the phases of the nodes fix the offset.

use std::f64::consts::PI;
use std::time::Instant;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result, StageExt};
use crate::geometry::{view_of_position, wrap_positive, DisplayParams, PanelGeometry, View};
use crate::pattern::{PatternSpec, GREEN_PATTERN, RED_PATTERN};
use crate::pose::{decompose, homography_from_corners, rectify_packed, CameraPose, Intrinsics};
use crate::sim::CapturedImage;
use crate::spectral::{detect_peaks_pair, refine_peak, window_profile, CoarsePeak, PeakMeasurement, Spectrum};

/// Search ranges for candidate `(h, alpha)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CandidateBounds {
    pub m_max: i64,
    pub n_max: i64,
    /// Subpixels.
    pub h_min: f64,
    pub h_max: f64,
    /// Degrees; candidates need `0 < alpha <= alpha_max_deg`.
    pub alpha_max_deg: f64,
}

impl Default for CandidateBounds {
    fn default() -> Self {
        Self {
            m_max: 8,
            n_max: 3,
            h_min: 3.0,
            h_max: 200.0,
            alpha_max_deg: 45.0,
        }
    }
}

impl CandidateBounds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.m_max >= 0
            && self.n_max >= 1
            && self.h_min > 0.0
            && self.h_max > self.h_min
            && self.alpha_max_deg > 0.0
            && self.alpha_max_deg < 90.0;
        if ok {
            Ok(())
        } else {
            Err(CalibError::Config(format!("invalid candidate bounds {self:?}")))
        }
    }

    fn admits(&self, h: f64, alpha: f64) -> bool {
        h >= self.h_min && h <= self.h_max && alpha > 0.0 && alpha <= self.alpha_max_deg.to_radians()
    }
}

/// One `(h, alpha)` hypothesis and the lattice indices that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Subpixels.
    pub h: f64,
    /// Radians.
    pub alpha: f64,
    pub m: i64,
    pub n: i64,
}

/// Frequency of lattice node `(m, n)` for stripes of spacing `beta`.
pub fn lattice_node(h: f64, alpha: f64, beta: f64, row_aspect: f64, m: i64, n: i64) -> (f64, f64) {
    (
        m as f64 / beta - n as f64 / h,
        n as f64 * row_aspect * alpha.tan() / h,
    )
}

/// All `(h, alpha)` within `bounds` consistent with `peak`.
pub fn candidate_set(
    peak: &PeakMeasurement,
    beta: f64,
    row_aspect: f64,
    bounds: &CandidateBounds,
) -> Result<Vec<Candidate>> {
    let peak = if peak.fy < 0.0 { peak.conjugate() } else { *peak };
    let mut out = Vec::new();
    if peak.fy > 0.0 {
        for n in 1..=bounds.n_max {
            for m in -bounds.m_max..=bounds.m_max {
                let denom = m as f64 / beta - peak.fx;
                if denom.abs() < 1e-12 {
                    continue;
                }
                let h = n as f64 / denom;
                let alpha = (peak.fy / (row_aspect * denom)).atan();
                if h.is_finite() && bounds.admits(h, alpha) {
                    out.push(Candidate { h, alpha, m, n });
                }
            }
        }
    }
    if out.is_empty() {
        return Err(CalibError::NoCandidates(format!(
            "peak at ({:.6}, {:.6}) admits no (h, alpha) within bounds",
            peak.fx, peak.fy
        )));
    }
    Ok(out)
}

/// Distance between candidates with `h` relative to the pair mean and
/// `alpha` in degrees.
pub fn candidate_distance(a: &Candidate, b: &Candidate) -> f64 {
    let mean = 0.5 * (a.h + b.h);
    ((a.h - b.h) / mean).powi(2) + (a.alpha - b.alpha).to_degrees().powi(2)
}

/// A pair of candidates, one per channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateMatch {
    pub h: f64,
    pub alpha: f64,
    pub distance: f64,
    pub first: Candidate,
    pub second: Candidate,
}

/// Every cross pair with distance at most `threshold`, closest first.
pub fn candidate_matches(c1: &[Candidate], c2: &[Candidate], threshold: f64) -> Vec<CandidateMatch> {
    let mut out: Vec<CandidateMatch> = c1
        .iter()
        .flat_map(|a| c2.iter().map(move |b| (a, b)))
        .filter_map(|(a, b)| {
            let distance = candidate_distance(a, b);
            (distance <= threshold).then_some(CandidateMatch {
                h: 0.5 * (a.h + b.h),
                alpha: 0.5 * (a.alpha + b.alpha),
                distance,
                first: *a,
                second: *b,
            })
        })
        .collect();
    out.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.h.total_cmp(&b.h)));
    out
}

/// The closest cross pair and its midpoint.
pub fn intersect_candidates(c1: &[Candidate], c2: &[Candidate], threshold: f64) -> Result<CandidateMatch> {
    if c1.is_empty() || c2.is_empty() {
        return Err(CalibError::EmptyInput("candidate set is empty".into()));
    }
    let best = candidate_matches(c1, c2, f64::INFINITY)
        .into_iter()
        .next()
        .expect("both sets are nonempty");
    if best.distance > threshold {
        return Err(CalibError::AmbiguousCalibration {
            distance: best.distance,
            threshold,
        });
    }
    Ok(best)
}

/// Number of `peaks` lying within half a bin of some node of the lattice
/// `(h, alpha)` with `1 <= n <= n_max`. Bins are `1 / bins_x` cycles per
/// subpixel column by `1 / bins_y` cycles per row.
pub fn explained_peaks(
    h: f64,
    alpha: f64,
    row_aspect: f64,
    n_max: i64,
    peaks: &[(f64, PeakMeasurement)],
    bins_x: f64,
    bins_y: f64,
) -> usize {
    peaks
        .iter()
        .filter(|(beta, peak)| {
            let peak = if peak.fy < 0.0 { peak.conjugate() } else { *peak };
            (1..=n_max).any(|n| {
                let m = (beta * (peak.fx + n as f64 / h)).round() as i64;
                let (fx, fy) = lattice_node(h, alpha, *beta, row_aspect, m, n);
                (fx - peak.fx).abs() * bins_x <= 0.5 && (fy - peak.fy).abs() * bins_y <= 0.5
            })
        })
        .count()
}

/// Least-squares `(h, alpha)` from every peak that the lattice `(h, alpha)`
/// explains. Each node gives `m/beta - fx = n/h` and `fy = n s/h`, linear in
/// `1/h` and `s/h`; peaks are weighted by squared magnitude. Returns the
/// refined pair and the number of peaks used.
pub fn refine_lattice(
    h: f64,
    alpha: f64,
    row_aspect: f64,
    n_max: i64,
    peaks: &[(f64, PeakMeasurement)],
    bins_x: f64,
    bins_y: f64,
) -> (f64, f64, usize) {
    let top = peaks.iter().map(|(_, p)| p.log_magnitude).fold(f64::NEG_INFINITY, f64::max);
    let (mut sa, mut sb, mut sw, mut used) = (0.0, 0.0, 0.0, 0);
    for (beta, peak) in peaks {
        let peak = if peak.fy < 0.0 { peak.conjugate() } else { *peak };
        let node = (1..=n_max).find_map(|n| {
            let m = (beta * (peak.fx + n as f64 / h)).round() as i64;
            let (fx, fy) = lattice_node(h, alpha, *beta, row_aspect, m, n);
            ((fx - peak.fx).abs() * bins_x <= 0.5 && (fy - peak.fy).abs() * bins_y <= 0.5).then_some((m, n))
        });
        if let Some((m, n)) = node {
            let (m, n) = (m as f64, n as f64);
            let w = (2.0 * (peak.log_magnitude - top)).exp();
            sa += w * n * (m / beta - peak.fx);
            sb += w * n * peak.fy;
            sw += w * n * n;
            used += 1;
        }
    }
    if used == 0 || !(sa > 0.0) {
        return (h, alpha, 0);
    }
    let (a, b) = (sa / sw, sb / sw);
    (1.0 / a, (b / (a * row_aspect)).atan(), used)
}

/// Pitch and gap (mm) from the horizontal periods `h1`, `h2` (subpixels)
/// seen at distances `d1`, `d2` (mm).
pub fn solve_pitch_gap(h1: f64, d1: f64, h2: f64, d2: f64, alpha: f64, q: f64) -> Result<(f64, f64)> {
    if !(h1 > 0.0 && h2 > 0.0 && d1 > 0.0 && d2 > 0.0 && q > 0.0) {
        return Err(CalibError::InvalidParameter(format!(
            "periods and distances must be positive (h1 = {h1}, h2 = {h2}, d1 = {d1}, d2 = {d2})"
        )));
    }
    let (h1, h2) = (h1 * q, h2 * q);
    let denom = d2 * h1 - d1 * h2;
    let scale = (d2 * h1).abs() + (d1 * h2).abs();
    if (d1 - d2).abs() <= 1e-9 * (d1 + d2) || denom.abs() <= 1e-12 * scale {
        return Err(CalibError::DegenerateObservation(format!(
            "observations at d1 = {d1} and d2 = {d2} carry no depth information"
        )));
    }
    let p = h1 * h2 * (d2 - d1) * alpha.cos() / denom;
    let t = d1 * d2 * (h1 - h2) / denom;
    Ok((p, t))
}

/// Stripe channel prepared for the offset search.
#[derive(Debug, Clone, Copy)]
pub struct OffsetChannel<'a> {
    pub spectrum: &'a Spectrum,
    pub beta: f64,
    /// Lit column of the stripes in centered subpixel coordinates.
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OffsetNode {
    m: i64,
    n: i64,
    beta: f64,
    epsilon: f64,
    value: Complex64,
}

/// Tuning of the offset search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OffsetSettings {
    /// Coarse samples over one period.
    pub grid: usize,
    /// Nodes weaker than this fraction of the strongest are dropped.
    pub node_fraction: f64,
    pub max_nodes: usize,
    /// Minimum phase coherence of the nodes at the optimum.
    pub min_coherence: f64,
}

impl Default for OffsetSettings {
    fn default() -> Self {
        Self {
            grid: 1024,
            node_fraction: 0.05,
            max_nodes: 16,
            min_coherence: 0.3,
        }
    }
}

/// Phase search result. `theta = rho + gamma * h` is the column offset of
/// the visible strips through the panel center, modulo `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetPhase {
    pub tau: f64,
    pub theta: f64,
    /// Objective at the optimum over the sum of node magnitudes.
    pub coherence: f64,
    pub nodes: usize,
}

fn select_nodes(
    channels: &[OffsetChannel],
    h: f64,
    alpha: f64,
    row_aspect: f64,
    bounds: &CandidateBounds,
    settings: &OffsetSettings,
) -> Result<Vec<OffsetNode>> {
    let mut coarse = Vec::new();
    for (ci, ch) in channels.iter().enumerate() {
        let spec = ch.spectrum;
        for n in 1..=bounds.n_max {
            for m in -bounds.m_max..=bounds.m_max {
                let (fx, fy) = lattice_node(h, alpha, ch.beta, row_aspect, m, n);
                let (kx, ky) = spec.bin(fx, fy);
                let inside = kx.abs() < spec.width() as f64 / 2.0 - 2.0 && ky.abs() < spec.height() as f64 / 2.0 - 2.0;
                if !inside || kx.hypot(ky) < 2.0 {
                    continue;
                }
                let mag = spec.magnitude(kx.round() as i64, ky.round() as i64);
                coarse.push((mag, ci, fx, fy, m, n));
            }
        }
    }
    coarse.sort_by(|a, b| b.0.total_cmp(&a.0));
    let top = coarse.first().map_or(0.0, |c| c.0);
    coarse.retain(|c| c.0 >= settings.node_fraction * top && c.0 > 0.0);
    coarse.truncate(settings.max_nodes);
    let mut nodes = Vec::with_capacity(coarse.len());
    for (ci, ch) in channels.iter().enumerate() {
        let mine: Vec<_> = coarse.iter().filter(|c| c.1 == ci).collect();
        let freqs: Vec<(f64, f64)> = mine.iter().map(|c| (c.2, c.3)).collect();
        let values = ch.spectrum.sample_many(&freqs)?;
        nodes.extend(mine.iter().zip(values).map(|(c, value)| OffsetNode {
            m: c.4,
            n: c.5,
            beta: ch.beta,
            epsilon: ch.epsilon,
            value,
        }));
    }
    Ok(nodes)
}

/// Real part of the node sum after removing the stripe phase of each node
/// and the strip phase implied by `theta`. Node values are real and
/// positive up to these two phases, so the sum peaks at the true `theta`.
fn offset_objective(nodes: &[OffsetNode], h: f64, theta: f64) -> f64 {
    nodes
        .iter()
        .map(|nd| {
            let phase = 2.0 * PI * (nd.m as f64 * nd.epsilon / nd.beta - nd.n as f64 * theta / h);
            (nd.value * Complex64::from_polar(1.0, phase)).re
        })
        .sum()
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Strip offset that brings the lattice nodes of all `channels` into phase.
/// `tau` is the same offset expressed as the row in `[0, h / s)` where a
/// visible strip crosses the first channel's stripe column, with
/// `s = row_aspect * tan(alpha)`.
pub fn search_offset_phase(
    channels: &[OffsetChannel],
    h: f64,
    alpha: f64,
    row_aspect: f64,
    bounds: &CandidateBounds,
    settings: &OffsetSettings,
) -> Result<OffsetPhase> {
    if channels.is_empty() || settings.grid < 4 {
        return Err(CalibError::InvalidParameter("offset search needs channels and a grid".into()));
    }
    let s = row_aspect * alpha.tan();
    if !(s > 0.0 && h > 0.0) {
        return Err(CalibError::InvalidParameter(format!("invalid lattice (h = {h}, alpha = {alpha})")));
    }
    let nodes = select_nodes(channels, h, alpha, row_aspect, bounds, settings)?;
    let total: f64 = nodes.iter().map(|n| n.value.norm()).sum();
    if nodes.is_empty() || total <= 0.0 {
        return Err(CalibError::OffsetUndetectable { ratio: 0.0 });
    }
    let step = h / settings.grid as f64;
    let (best_k, _) = (0..settings.grid)
        .map(|k| (k, offset_objective(&nodes, h, k as f64 * step)))
        .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
    let theta0 = best_k as f64 * step;
    let theta = golden_section_max(|th| offset_objective(&nodes, h, th), theta0 - step, theta0 + step, h * 1e-13);
    let coherence = offset_objective(&nodes, h, theta) / total;
    if coherence < settings.min_coherence {
        return Err(CalibError::OffsetUndetectable { ratio: coherence });
    }
    let theta = wrap_positive(theta, h);
    let tau = wrap_positive((channels[0].epsilon - theta) / s, h / s);
    Ok(OffsetPhase {
        tau,
        theta,
        coherence,
        nodes: nodes.len(),
    })
}

/// Offset of the visible strips against the panel columns, as seen by a
/// camera in view `gamma`, and the barrier offset in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetEstimate {
    pub tau: f64,
    /// Subpixels, in `[0, h)`.
    pub rho: f64,
    /// Millimeters, in `(-P/2, P/2]` with `P = p / cos(alpha)`.
    pub sigma: f64,
    pub coherence: f64,
}

/// Convert a phase-search result to `rho` and `sigma`. `h` is the period
/// observed at distance `d`.
pub fn offset_from_phase(phase: &OffsetPhase, h: f64, gamma: View, d: f64, t: f64, panel: &PanelGeometry) -> Result<(f64, f64)> {
    if !(d > t) {
        return Err(CalibError::InvalidGeometry(format!("distance {d} does not exceed the gap {t}")));
    }
    let rho = wrap_positive(phase.theta - gamma.gamma() * h, h);
    let sigma = (d - t) / d * rho * panel.q;
    Ok((rho, sigma))
}

/// Offset from a single stripe channel.
#[allow(clippy::too_many_arguments)]
pub fn estimate_offset(
    spec: &Spectrum,
    h: f64,
    alpha: f64,
    pattern: &PatternSpec,
    gamma: View,
    d: f64,
    t: f64,
    p: f64,
    panel: &PanelGeometry,
    bounds: &CandidateBounds,
    settings: &OffsetSettings,
) -> Result<OffsetEstimate> {
    let channel = OffsetChannel {
        spectrum: spec,
        beta: pattern.beta as f64,
        epsilon: pattern.epsilon as f64 - panel.center_col(),
    };
    let phase = search_offset_phase(&[channel], h, alpha, panel.row_aspect(), bounds, settings)?;
    let (rho, sigma) = offset_from_phase(&phase, h, gamma, d, t, panel)?;
    let period = p / alpha.cos();
    Ok(OffsetEstimate {
        tau: phase.tau,
        rho,
        sigma: crate::geometry::wrap_centered(sigma, period),
        coherence: phase.coherence,
    })
}

/// Where the camera pose of a capture comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoseSource {
    /// Decompose the homography of the panel corners with known intrinsics.
    Corners(Intrinsics),
    Known(CameraPose),
}

/// One capture of the calibration pattern.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub image: &'a CapturedImage,
    pub pose: PoseSource,
}

impl<'a> Observation<'a> {
    /// Perspective captures take their pose from the corners using the
    /// intrinsics recorded with the capture; flat ones use the recorded pose.
    pub fn from_capture(image: &'a CapturedImage) -> Result<Self> {
        let pose = image
            .pose
            .ok_or_else(|| CalibError::InvalidParameter("capture carries no camera information".into()))?;
        let pose = if image.perspective {
            PoseSource::Corners(pose.intrinsics)
        } else {
            PoseSource::Known(pose)
        };
        Ok(Self { image, pose })
    }

    pub fn with_intrinsics(image: &'a CapturedImage, intrinsics: Intrinsics) -> Self {
        Self {
            image,
            pose: PoseSource::Corners(intrinsics),
        }
    }

    fn camera(&self, panel: &PanelGeometry) -> Result<CameraPose> {
        match self.pose {
            PoseSource::Known(pose) => Ok(pose),
            PoseSource::Corners(k) => {
                let h = homography_from_corners(&panel.corners_mm(), &self.image.corners)?;
                decompose(&h, &k)
            }
        }
    }
}

/// Settings of the calibration pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub bounds: CandidateBounds,
    /// Largest accepted candidate distance.
    pub match_threshold: f64,
    /// Spatial window standard deviation is the extent over this.
    pub window_divisor: f64,
    /// Bins around DC ignored by peak detection.
    pub dc_radius: f64,
    /// Peaks refined per channel.
    pub max_peaks: usize,
    /// Strongest peaks per channel tried for the candidate sets.
    pub peak_retries: usize,
    pub offset: OffsetSettings,
    /// Panel columns per rectified column; by default the largest whole
    /// number of columns covered by one capture pixel.
    pub column_step: Option<usize>,
    /// Mirror captures horizontally before analysis.
    pub flip: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            bounds: CandidateBounds::default(),
            match_threshold: 1e-4,
            window_divisor: 8.0,
            dc_radius: 4.0,
            max_peaks: 8,
            peak_retries: 3,
            offset: OffsetSettings::default(),
            column_step: None,
            flip: false,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        let ok = self.match_threshold > 0.0
            && self.window_divisor > 0.0
            && self.dc_radius >= 0.0
            && self.max_peaks >= 1
            && self.peak_retries >= 1
            && self.column_step != Some(0)
            && self.offset.grid >= 4
            && self.offset.max_nodes >= 1
            && (0.0..=1.0).contains(&self.offset.node_fraction);
        if ok {
            Ok(())
        } else {
            Err(CalibError::Config(format!("invalid calibration settings {self:?}")))
        }
    }
}

/// Lattice fit of one capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureFit {
    /// Lattice refined over all explained peaks.
    pub h: f64,
    pub alpha: f64,
    pub u: f64,
    pub v: f64,
    pub d: f64,
    pub matched: CandidateMatch,
    /// Refined peaks of both channels consistent with the fitted lattice.
    pub explained: usize,
    /// Larger fit residual of the two peaks used.
    pub residual: f64,
    pub red_peak: PeakMeasurement,
    pub green_peak: PeakMeasurement,
}

/// Estimated display parameters with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub p: f64,
    pub alpha_deg: f64,
    pub t: f64,
    pub sigma: f64,
    pub h1: f64,
    pub h2: f64,
    pub rho: f64,
    pub tau: f64,
    pub gamma: f64,
    pub match_dist: f64,
    pub residual1: f64,
    pub residual2: f64,
    pub offset_coherence: f64,
    pub fit1: CaptureFit,
    pub fit2: CaptureFit,
    pub elapsed_ms: f64,
}

impl CalibrationResult {
    pub const CSV_HEADER: &'static str = "p,alpha_deg,t,sigma,h1,h2,rho,match_dist,residual1,residual2";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.p,
            self.alpha_deg,
            self.t,
            self.sigma,
            self.h1,
            self.h2,
            self.rho,
            self.match_dist,
            self.residual1,
            self.residual2
        )
    }

    /// `key = value` lines.
    pub fn report(&self) -> String {
        let rows: [(&str, f64); 18] = [
            ("p", self.p),
            ("alpha_deg", self.alpha_deg),
            ("t", self.t),
            ("sigma", self.sigma),
            ("h1", self.h1),
            ("h2", self.h2),
            ("rho", self.rho),
            ("tau", self.tau),
            ("gamma", self.gamma),
            ("d1", self.fit1.d),
            ("d2", self.fit2.d),
            ("match_dist", self.match_dist),
            ("residual1", self.residual1),
            ("residual2", self.residual2),
            ("explained1", self.fit1.explained as f64),
            ("explained2", self.fit2.explained as f64),
            ("offset_coherence", self.offset_coherence),
            ("elapsed_ms", self.elapsed_ms),
        ];
        let mut out: String = rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        out.push_str("offset_source = capture1\n");
        out
    }

    pub fn params(&self, panel: PanelGeometry) -> Result<DisplayParams> {
        DisplayParams::new(self.p, self.alpha_deg, self.t, self.sigma, panel)
    }
}

struct ChannelPeaks {
    beta: f64,
    peaks: Vec<PeakMeasurement>,
}

fn channel_peaks(spec: &Spectrum, coarse: Vec<CoarsePeak>, beta: f64) -> ChannelPeaks {
    let peaks = coarse
        .into_iter()
        .filter_map(|c| refine_peak(spec, c.kx, c.ky).ok())
        .collect();
    ChannelPeaks { beta, peaks }
}

struct LatticeFit {
    h: f64,
    alpha: f64,
    matched: CandidateMatch,
    explained: usize,
    red_peak: PeakMeasurement,
    green_peak: PeakMeasurement,
}

/// Candidate intersection for one capture, trying the strongest few peaks
/// of each channel and preferring the lattice that explains the most peaks.
fn fit_lattice(
    red: &ChannelPeaks,
    green: &ChannelPeaks,
    row_aspect: f64,
    bins: (f64, f64),
    cfg: &CalibrationConfig,
) -> Result<LatticeFit> {
    if red.peaks.is_empty() || green.peaks.is_empty() {
        return Err(CalibError::UnreliablePeak("no usable spectral peak".into()));
    }
    let all: Vec<(f64, PeakMeasurement)> = red
        .peaks
        .iter()
        .map(|p| (red.beta, *p))
        .chain(green.peaks.iter().map(|p| (green.beta, *p)))
        .collect();
    let tries = cfg.peak_retries;
    let mut order: Vec<(usize, usize)> = (0..tries.min(red.peaks.len()))
        .flat_map(|i| (0..tries.min(green.peaks.len())).map(move |j| (i, j)))
        .collect();
    order.sort_by_key(|&(i, j)| (i + j, i));
    let mut last_err = None;
    for (i, j) in order {
        let (rp, gp) = (red.peaks[i], green.peaks[j]);
        let c1 = match candidate_set(&rp, red.beta, row_aspect, &cfg.bounds) {
            Ok(c) => c,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let c2 = match candidate_set(&gp, green.beta, row_aspect, &cfg.bounds) {
            Ok(c) => c,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let matches = candidate_matches(&c1, &c2, cfg.match_threshold);
        if matches.is_empty() {
            last_err = Some(match intersect_candidates(&c1, &c2, cfg.match_threshold) {
                Err(e) => e,
                Ok(_) => unreachable!("a match under the threshold exists"),
            });
            continue;
        }
        let best = matches
            .into_iter()
            .map(|m| {
                let k = explained_peaks(m.h, m.alpha, row_aspect, cfg.bounds.n_max, &all, bins.0, bins.1);
                (k, m)
            })
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.h.total_cmp(&a.1.h)))
            .expect("matches are nonempty");
        let (explained, matched) = best;
        let (h, alpha, _) = refine_lattice(matched.h, matched.alpha, row_aspect, cfg.bounds.n_max, &all, bins.0, bins.1);
        return Ok(LatticeFit {
            h,
            alpha,
            matched,
            explained,
            red_peak: rp,
            green_peak: gp,
        });
    }
    Err(last_err.unwrap_or_else(|| CalibError::NoCandidates("no peak pair produced candidates".into())))
}

/// Whole panel columns per capture pixel across the imaged panel.
pub fn auto_column_step(corners: &[(f64, f64); 4], panel_w: usize) -> usize {
    let dist = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).hypot(a.1 - b.1);
    let footprint = 0.5 * (dist(corners[0], corners[1]) + dist(corners[3], corners[2]));
    let ratio = panel_w as f64 / footprint;
    if ratio.is_finite() && ratio >= 1.0 {
        (ratio.floor() as usize).min(panel_w)
    } else {
        1
    }
}

struct Analysis {
    fit: CaptureFit,
    red: Spectrum,
    green: Spectrum,
}

fn analyze(obs: &Observation, panel: &PanelGeometry, cfg: &CalibrationConfig, keep_images: bool) -> Result<Analysis> {
    let pose = obs.camera(panel).stage("pose")?;
    let step = cfg.column_step.unwrap_or_else(|| auto_column_step(&obs.image.corners, panel.panel_w));
    let out_w = panel.panel_w / step.max(1);
    let (wx, wy) = (
        window_profile(out_w, cfg.window_divisor),
        window_profile(panel.panel_h, cfg.window_divisor),
    );
    let packed = rectify_packed(
        obs.image,
        &obs.image.corners,
        panel.panel_w,
        panel.panel_h,
        step,
        cfg.flip,
        [RED_PATTERN.channel, GREEN_PATTERN.channel],
        Some((&wx, &wy)),
    )
    .stage("rectify")?;
    let (red, green) = Spectrum::from_packed(packed, keep_images);
    let (red, green) = (red.with_column_step(step as f64), green.with_column_step(step as f64));
    let bins = ((red.width() * step) as f64, red.height() as f64);
    let (rc, gc) = detect_peaks_pair(&red, &green, cfg.dc_radius, cfg.max_peaks);
    let (rp, gp) = (
        channel_peaks(&red, rc, RED_PATTERN.beta as f64),
        channel_peaks(&green, gc, GREEN_PATTERN.beta as f64),
    );
    let lattice = fit_lattice(&rp, &gp, panel.row_aspect(), bins, cfg).stage("candidates")?;
    let fit = CaptureFit {
        h: lattice.h,
        alpha: lattice.alpha,
        u: pose.u(),
        v: pose.v(),
        d: pose.d(),
        matched: lattice.matched,
        explained: lattice.explained,
        residual: lattice.red_peak.residual.max(lattice.green_peak.residual),
        red_peak: lattice.red_peak,
        green_peak: lattice.green_peak,
    };
    Ok(Analysis { fit, red, green })
}

/// Estimate `p`, `alpha`, `t` and `sigma` from two captures of the
/// calibration multiplex taken at different distances.
pub fn calibrate(
    obs1: &Observation,
    obs2: &Observation,
    panel: &PanelGeometry,
    cfg: &CalibrationConfig,
) -> Result<CalibrationResult> {
    let start = Instant::now();
    cfg.validate()?;
    let a1 = analyze(obs1, panel, cfg, true).stage("capture 1")?;
    let channels = [
        OffsetChannel {
            spectrum: &a1.red,
            beta: RED_PATTERN.beta as f64,
            epsilon: RED_PATTERN.epsilon as f64 - panel.center_col(),
        },
        OffsetChannel {
            spectrum: &a1.green,
            beta: GREEN_PATTERN.beta as f64,
            epsilon: GREEN_PATTERN.epsilon as f64 - panel.center_col(),
        },
    ];
    let phase = search_offset_phase(&channels, a1.fit.h, a1.fit.alpha, panel.row_aspect(), &cfg.bounds, &cfg.offset)
        .stage("offset")?;
    let fit1 = a1.fit;
    drop(a1.red);
    drop(a1.green);
    let fit2 = analyze(obs2, panel, cfg, false).stage("capture 2")?.fit;

    let alpha = 0.5 * (fit1.alpha + fit2.alpha);
    let (p, t) = solve_pitch_gap(fit1.h, fit1.d, fit2.h, fit2.d, alpha, panel.q).stage("pitch and gap")?;
    let provisional = DisplayParams::from_radians(p, alpha, t, 0.0, *panel).stage("pitch and gap")?;
    let gamma = view_of_position(fit1.u, fit1.v, fit1.d, &provisional).stage("offset")?;
    let (rho, sigma) = offset_from_phase(&phase, fit1.h, gamma, fit1.d, t, panel).stage("offset")?;
    let params = DisplayParams::from_radians(p, alpha, t, sigma, *panel).stage("offset")?;
    Ok(CalibrationResult {
        p,
        alpha_deg: alpha.to_degrees(),
        t,
        sigma: params.sigma,
        h1: fit1.h,
        h2: fit2.h,
        rho,
        tau: phase.tau,
        gamma: gamma.gamma(),
        match_dist: fit1.matched.distance.max(fit2.matched.distance),
        residual1: fit1.residual,
        residual2: fit2.residual,
        offset_coherence: phase.coherence,
        fit1,
        fit2,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Absolute value of the difference of two offsets modulo `period`.
pub fn offset_error(a: f64, b: f64, period: f64) -> f64 {
    crate::geometry::wrap_centered(a - b, period).abs()
}
