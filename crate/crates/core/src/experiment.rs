//! Randomized synthetic experiments: perturbed displays seen by jittered
//! cameras, optional shot noise, and error statistics in the layout of the
//! usual mean (standard deviation) tables. Also the rendering-distortion demo.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::Vector3;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::Statistics;

use crate::error::{CalibError, Result};
use crate::estimate::{calibrate, offset_error, CalibrationConfig, Observation};
use crate::geometry::{derive, view_of_position, DerivedParams, DisplayParams, DisplayPreset, PanelGeometry, View};
use crate::pattern::{interleave_views, make_calibration_multiplex, PanelImage};
use crate::pose::{CameraPose, Intrinsics};
use crate::sim::{add_poisson_noise, noise_scale_for_snr, simulate_capture, snr, CapturedImage, SimOptions};
use crate::spectral::{apply_gaussian_window, Spectrum};

/// A display described from scratch instead of by preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomDisplay {
    #[serde(default = "custom_name")]
    pub name: String,
    pub diagonal_in: f64,
    pub res_w: usize,
    pub res_h: usize,
    pub p: f64,
    pub alpha_deg: f64,
    pub t: f64,
    pub sigma: f64,
}

fn custom_name() -> String {
    "custom".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DisplayChoice {
    Preset(DisplayPreset),
    Custom(CustomDisplay),
}

impl DisplayChoice {
    pub fn name(&self) -> String {
        match self {
            Self::Preset(p) => p.name().to_string(),
            Self::Custom(c) => c.name.clone(),
        }
    }

    pub fn params(&self) -> Result<DisplayParams> {
        match self {
            Self::Preset(p) => Ok(p.params()),
            Self::Custom(c) => {
                let panel = PanelGeometry::from_diagonal(c.diagonal_in, c.res_w, c.res_h)?;
                DisplayParams::new(c.p, c.alpha_deg, c.t, c.sigma, panel)
            }
        }
    }
}

/// Settings of a batch of randomized calibration trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub display: DisplayChoice,
    pub trials: usize,
    /// Relative perturbation bound of p, alpha and t; sigma moves by up to
    /// this fraction of the designed p.
    pub perturbation: f64,
    /// Camera position jitter along each axis, mm.
    pub jitter_mm: f64,
    /// Bound on the extra camera rotation, degrees.
    pub rotation_deg: f64,
    pub d1: f64,
    pub d2: f64,
    /// Noise levels of a sweep as target SNR in dB; `inf` is noiseless.
    pub snr_db: Vec<f64>,
    /// Explicit photon scales; when non-empty these replace `snr_db`.
    pub noise_scale: Vec<f64>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub capture_width: usize,
    pub capture_height: usize,
    /// Fraction of the frame the panel spans at the nominal distance; see
    /// [`trial_focal`].
    pub fill: f64,
    /// Write zero elapsed times so reruns give byte-identical CSV.
    pub deterministic: bool,
    pub sim: SimOptions,
    pub calibration: CalibrationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            display: DisplayChoice::Preset(DisplayPreset::Fhd55b),
            trials: 10,
            perturbation: 0.01,
            jitter_mm: 50.0,
            rotation_deg: 1.0,
            d1: 700.0,
            d2: 1000.0,
            snr_db: vec![f64::INFINITY, 24.0, 18.0, 12.0, 6.0],
            noise_scale: Vec::new(),
            seed: 1,
            out_dir: PathBuf::from("out"),
            capture_width: 1920,
            capture_height: 1080,
            fill: 0.85,
            deterministic: false,
            sim: SimOptions::default(),
            calibration: CalibrationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CalibError::Config(msg));
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if !(self.perturbation >= 0.0 && self.perturbation < 0.5) {
            return fail(format!("perturbation {} must lie in [0, 0.5)", self.perturbation));
        }
        if !(self.jitter_mm >= 0.0 && self.jitter_mm.is_finite()) {
            return fail(format!("jitter {} mm must be non-negative", self.jitter_mm));
        }
        if !(self.rotation_deg >= 0.0 && self.rotation_deg < 90.0) {
            return fail(format!("rotation bound {} deg out of range", self.rotation_deg));
        }
        if !(self.d1 > 0.0 && self.d2 > 0.0 && self.d1.is_finite() && self.d2.is_finite()) {
            return fail("distances must be positive".into());
        }
        if self.d1 == self.d2 {
            return fail(format!("d1 and d2 must differ (both {})", self.d1));
        }
        if self.capture_width == 0 || self.capture_height == 0 {
            return fail("capture size must be positive".into());
        }
        if !(self.fill > 0.0 && self.fill <= 1.0) {
            return fail(format!("fill {} must lie in (0, 1]", self.fill));
        }
        if self.snr_db.iter().any(|s| s.is_nan() || *s == f64::NEG_INFINITY) {
            return fail("snr levels must be numbers or inf".into());
        }
        if self.noise_scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return fail("noise scales must be positive".into());
        }
        let params = self.display.params().map_err(|e| CalibError::Config(e.to_string()))?;
        if self.d1.min(self.d2) - self.jitter_mm <= params.t {
            return fail("jittered cameras could reach the barrier plane".into());
        }
        self.sim.validate(&params).map_err(|e| CalibError::Config(e.to_string()))?;
        self.calibration.validate()
    }

    /// Noise levels of a sweep; [`run_table2`] uses `sim.noise_scale`.
    pub fn levels(&self) -> Vec<NoiseLevel> {
        if !self.noise_scale.is_empty() {
            return self.noise_scale.iter().map(|&s| NoiseLevel::Scale(s)).collect();
        }
        self.snr_db
            .iter()
            .map(|&s| if s == f64::INFINITY { NoiseLevel::Noiseless } else { NoiseLevel::Snr(s) })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseLevel {
    Noiseless,
    /// Target SNR in dB, reached through the photon scale.
    Snr(f64),
    /// Photons at full intensity.
    Scale(f64),
}

impl NoiseLevel {
    pub fn label(&self) -> String {
        match self {
            Self::Noiseless => "noiseless".into(),
            Self::Snr(s) => format!("snr{s}"),
            Self::Scale(s) => format!("scale{s}"),
        }
    }

    /// Shot noise at this level; borrowed through when noiseless.
    pub fn apply<'a>(&self, clean: &'a CapturedImage, seed: u64) -> Result<Cow<'a, CapturedImage>> {
        let scale = match *self {
            Self::Noiseless => return Ok(Cow::Borrowed(clean)),
            Self::Snr(db) => noise_scale_for_snr(clean, db)?,
            Self::Scale(s) => s,
        };
        Ok(Cow::Owned(add_poisson_noise(clean, scale, seed)?))
    }
}

/// Perturb `p`, `alpha` and `t` by relative amounts uniform in
/// `[-fraction, fraction]`, and `sigma` by `fraction * p` at most.
pub fn perturb_display<R: Rng + ?Sized>(base: &DisplayParams, fraction: f64, rng: &mut R) -> Result<DisplayParams> {
    if !(fraction >= 0.0 && fraction.is_finite()) {
        return Err(CalibError::InvalidParameter(format!("perturbation {fraction} must be non-negative")));
    }
    let mut draw = || rng.random_range(-fraction..=fraction);
    let p = base.p * (1.0 + draw());
    let alpha = base.alpha * (1.0 + draw());
    let t = base.t * (1.0 + draw());
    let sigma = base.sigma + draw() * base.p;
    DisplayParams::from_radians(p, alpha, t, sigma, base.panel)
}

/// Camera aimed at the panel center from a jittered position near
/// `(0, 0, d)`, then turned by a small random rotation.
pub fn trial_pose<R: Rng + ?Sized>(
    d: f64,
    jitter_mm: f64,
    rotation_deg: f64,
    intrinsics: Intrinsics,
    rng: &mut R,
) -> Result<CameraPose> {
    let mut draw = |r: f64| rng.random_range(-r..=r);
    let (u, v, dz) = (draw(jitter_mm), draw(jitter_mm), draw(jitter_mm));
    let angle = draw(rotation_deg).to_radians();
    let axis = Vector3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    let pose = CameraPose::look_at_center(u, v, d + dz, intrinsics)?;
    if angle == 0.0 || axis.norm() == 0.0 {
        return Ok(pose);
    }
    pose.rotated(axis, angle)
}

/// Absolute errors of one calibration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamErrors {
    pub dp: f64,
    pub dalpha_deg: f64,
    pub dt: f64,
    pub dsigma: f64,
}

impl ParamErrors {
    pub fn as_array(&self) -> [f64; 4] {
        [self.dp, self.dalpha_deg, self.dt, self.dsigma]
    }

    fn from_array(a: [f64; 4]) -> Self {
        Self {
            dp: a[0],
            dalpha_deg: a[1],
            dt: a[2],
            dsigma: a[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub truth: DisplayParams,
    /// `None` when calibration failed.
    pub errors: Option<ParamErrors>,
    pub elapsed_ms: f64,
    /// `ok`, or the error that stopped the trial.
    pub status: String,
    /// Mean measured SNR of the two captures, dB.
    pub snr_db: f64,
}

/// Errors of a batch of trials at one noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub display: String,
    pub level: NoiseLevel,
    pub records: Vec<TrialRecord>,
    pub mean: ParamErrors,
    pub std: ParamErrors,
    pub successes: usize,
    pub failures: usize,
    pub mean_elapsed_ms: f64,
    pub snr_db: f64,
    pub deterministic: bool,
}

pub const CSV_HEADER: [&str; 8] = ["trial", "seed", "dp", "dalpha_deg", "dt", "dsigma", "elapsed_ms", "status"];

impl ErrorReport {
    pub fn from_records(
        display: String,
        level: NoiseLevel,
        mut records: Vec<TrialRecord>,
        deterministic: bool,
    ) -> Self {
        records.sort_by_key(|r| r.trial);
        let ok: Vec<&TrialRecord> = records.iter().filter(|r| r.errors.is_some()).collect();
        let column = |i: usize| -> Vec<f64> { ok.iter().map(|r| r.errors.unwrap().as_array()[i]).collect() };
        let mean = ParamErrors::from_array(std::array::from_fn(|i| column(i).mean()));
        let std = ParamErrors::from_array(std::array::from_fn(|i| column(i).std_dev()));
        let mean_elapsed_ms = ok.iter().map(|r| r.elapsed_ms).mean();
        // Not `Statistics::mean`: its running update turns a list of
        // infinities into NaN.
        let snr_db = records.iter().map(|r| r.snr_db).sum::<f64>() / records.len() as f64;
        Self {
            display,
            level,
            mean,
            std,
            successes: ok.len(),
            failures: records.len() - ok.len(),
            mean_elapsed_ms,
            snr_db,
            deterministic,
            records,
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CalibError::Io(std::io::Error::other(e));
        w.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.records {
            let elapsed = if self.deterministic { 0.0 } else { r.elapsed_ms };
            let mut row = vec![r.trial.to_string(), r.seed.to_string()];
            match r.errors {
                Some(e) => row.extend(e.as_array().iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), 4)),
            }
            row.push(elapsed.to_string());
            row.push(r.status.clone());
            w.write_record(&row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CalibError::Io(std::io::Error::other(e.to_string())))?;
        String::from_utf8(bytes).map_err(|e| CalibError::Io(std::io::Error::other(e)))
    }
}

/// Four decimals, or scientific below 1e-3 so small errors stay visible.
fn cell(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        format!("{v:.4}")
    }
}

/// Mean and (standard deviation) per display, one pair of rows each.
pub fn format_table(reports: &[ErrorReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<10} {:>12} {:>12} {:>12} {:>12}", "Display", "|dp| mm", "|da| deg", "|dt| mm", "|ds| mm");
    for r in reports {
        let cells = |e: &ParamErrors, wrap: bool| -> Vec<String> {
            e.as_array().iter().map(|&v| if wrap { format!("({})", cell(v)) } else { cell(v) }).collect()
        };
        let m = cells(&r.mean, false);
        let s = cells(&r.std, true);
        let _ = writeln!(out, "{:<10} {:>12} {:>12} {:>12} {:>12}", r.display, m[0], m[1], m[2], m[3]);
        let _ = writeln!(out, "{:<10} {:>12} {:>12} {:>12} {:>12}", "", s[0], s[1], s[2], s[3]);
        if r.failures > 0 {
            let _ = writeln!(out, "{:<10} {} of {} trials failed", "", r.failures, r.records.len());
        }
    }
    out
}

/// Everything a trial draws from its own generator, in drawing order.
#[derive(Debug, Clone, Copy)]
pub struct TrialSetup {
    pub trial: usize,
    pub seed: u64,
    pub truth: DisplayParams,
    pub poses: [CameraPose; 2],
    pub noise_seeds: [u64; 2],
}

/// Focal length in pixels for the nominal distance `d`: the panel spans
/// `fill` of the frame, less if the closest jittered and most rotated camera
/// would otherwise lose a corner.
pub fn trial_focal(cfg: &ExperimentConfig, panel: &PanelGeometry, d: f64) -> f64 {
    let near = d - cfg.jitter_mm;
    let turn = cfg.rotation_deg.to_radians();
    // Aimed at the center from a lateral offset j, the far edge at half
    // extent e is seen atan((e - j) / n) + atan(j / n) off axis, largest at
    // j = e / 2. The 2% covers the coupling of the two axes.
    let fits = |pixels: usize, extent_mm: f64| {
        let e = 0.5 * extent_mm;
        let j = cfg.jitter_mm.min(0.5 * e);
        let angle = ((e - j) / near).atan() + (j / near).atan() + turn;
        (0.5 * pixels as f64 - 1.0) / (1.02 * angle.tan())
    };
    let framed = cfg.fill * (cfg.capture_width as f64 / panel.width_mm()).min(cfg.capture_height as f64 / panel.height_mm()) * d;
    framed
        .min(fits(cfg.capture_width, panel.width_mm()))
        .min(fits(cfg.capture_height, panel.height_mm()))
}

pub fn setup_trial(cfg: &ExperimentConfig, base: &DisplayParams, trial: usize) -> Result<TrialSetup> {
    let seed = cfg.seed.wrapping_add(trial as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = perturb_display(base, cfg.perturbation, &mut rng)?;
    let mut pose_at = |d: f64| {
        let k = Intrinsics::centered(trial_focal(cfg, &base.panel, d), cfg.capture_width, cfg.capture_height)?;
        trial_pose(d, cfg.jitter_mm, cfg.rotation_deg, k, &mut rng)
    };
    let poses = [pose_at(cfg.d1)?, pose_at(cfg.d2)?];
    let noise_seeds = [rng.random(), rng.random()];
    Ok(TrialSetup {
        trial,
        seed,
        truth,
        poses,
        noise_seeds,
    })
}

/// Noiseless captures of the calibration multiplex for a trial.
pub fn trial_captures(setup: &TrialSetup, pattern: &PanelImage, sim: &SimOptions) -> Result<[CapturedImage; 2]> {
    let opts = SimOptions {
        noise_scale: None,
        ..*sim
    };
    let [p1, p2] = &setup.poses;
    Ok([
        simulate_capture(pattern, &setup.truth, p1, &opts)?,
        simulate_capture(pattern, &setup.truth, p2, &opts)?,
    ])
}

fn evaluate(setup: &TrialSetup, clean: &[CapturedImage; 2], level: NoiseLevel, calib: &CalibrationConfig) -> TrialRecord {
    let mut record = TrialRecord {
        trial: setup.trial,
        seed: setup.seed,
        truth: setup.truth,
        errors: None,
        elapsed_ms: 0.0,
        status: String::new(),
        snr_db: f64::NAN,
    };
    let outcome = (|| -> Result<ParamErrors> {
        let a = level.apply(&clean[0], setup.noise_seeds[0])?;
        let b = level.apply(&clean[1], setup.noise_seeds[1])?;
        record.snr_db = 0.5 * (snr(&clean[0], &a)? + snr(&clean[1], &b)?);
        let res = calibrate(
            &Observation::from_capture(&a)?,
            &Observation::from_capture(&b)?,
            &setup.truth.panel,
            calib,
        )?;
        record.elapsed_ms = res.elapsed_ms;
        let truth = &setup.truth;
        Ok(ParamErrors {
            dp: (res.p - truth.p).abs(),
            dalpha_deg: (res.alpha_deg - truth.alpha_deg()).abs(),
            dt: (res.t - truth.t).abs(),
            dsigma: offset_error(res.sigma, truth.sigma, truth.horizontal_period()),
        })
    })();
    match outcome {
        Ok(e) => {
            record.errors = Some(e);
            record.status = "ok".into();
        }
        Err(e) => record.status = e.to_string(),
    }
    record
}

/// Run every trial at every level; the clean captures of a trial are shared
/// by all levels.
fn run_levels(cfg: &ExperimentConfig, levels: &[NoiseLevel]) -> Result<Vec<ErrorReport>> {
    cfg.validate()?;
    let base = cfg.display.params()?;
    let pattern = make_calibration_multiplex(base.panel.panel_w, base.panel.panel_h)?;
    let per_trial: Vec<Vec<TrialRecord>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<Vec<TrialRecord>> {
            let setup = setup_trial(cfg, &base, trial)?;
            let clean = match trial_captures(&setup, &pattern, &cfg.sim) {
                Ok(c) => c,
                Err(e) => {
                    let failed = TrialRecord {
                        trial,
                        seed: setup.seed,
                        truth: setup.truth,
                        errors: None,
                        elapsed_ms: 0.0,
                        status: format!("simulation: {e}"),
                        snr_db: f64::NAN,
                    };
                    return Ok(vec![failed; levels.len()]);
                }
            };
            Ok(levels.iter().map(|&l| evaluate(&setup, &clean, l, &cfg.calibration)).collect())
        })
        .collect::<Result<_>>()?;
    Ok(levels
        .iter()
        .enumerate()
        .map(|(i, &level)| {
            let records = per_trial.iter().map(|t| t[i].clone()).collect();
            ErrorReport::from_records(cfg.display.name(), level, records, cfg.deterministic)
        })
        .collect())
}

/// Calibrate `cfg.trials` randomized instances of the display. Shot noise
/// is applied when `cfg.sim.noise_scale` is set.
pub fn run_table2(cfg: &ExperimentConfig) -> Result<ErrorReport> {
    let level = cfg.sim.noise_scale.map_or(NoiseLevel::Noiseless, NoiseLevel::Scale);
    Ok(run_levels(cfg, &[level])?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub levels: Vec<ErrorReport>,
}

impl SweepReport {
    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CalibError::Io(std::io::Error::other(e));
        w.write_record([
            "level", "snr_db", "mean_dp", "mean_dalpha_deg", "mean_dt", "mean_dsigma", "successes", "failures",
        ])
        .map_err(io)?;
        for r in &self.levels {
            let mut row = vec![r.level.label(), r.snr_db.to_string()];
            row.extend(r.mean.as_array().iter().map(|v| v.to_string()));
            row.push(r.successes.to_string());
            row.push(r.failures.to_string());
            w.write_record(&row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CalibError::Io(std::io::Error::other(e.to_string())))?;
        String::from_utf8(bytes).map_err(|e| CalibError::Io(std::io::Error::other(e)))
    }

    pub fn format_summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>9} {:>12} {:>12} {:>12} {:>12} {:>6}",
            "level", "SNR dB", "|dp| mm", "|da| deg", "|dt| mm", "|ds| mm", "fail"
        );
        for r in &self.levels {
            let m = &r.mean;
            let _ = writeln!(
                out,
                "{:<12} {:>9.2} {:>12} {:>12} {:>12} {:>12} {:>6}",
                r.level.label(),
                r.snr_db,
                cell(m.dp),
                cell(m.dalpha_deg),
                cell(m.dt),
                cell(m.dsigma),
                r.failures
            );
        }
        out
    }
}

/// Repeat the trials of [`run_table2`] at every level of the config.
pub fn run_noise_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    let levels = cfg.levels();
    if levels.is_empty() {
        return Err(CalibError::Config("noise sweep needs at least one level".into()));
    }
    Ok(SweepReport {
        levels: run_levels(cfg, &levels)?,
    })
}

/// `n` fully saturated colors evenly spaced in hue.
pub fn rainbow(n: usize) -> Vec<[u8; 3]> {
    (0..n)
        .map(|k| {
            let h = 6.0 * k as f64 / n as f64;
            let x = 1.0 - (h % 2.0 - 1.0).abs();
            let (r, g, b) = match h as usize {
                0 => (1.0, x, 0.0),
                1 => (x, 1.0, 0.0),
                2 => (0.0, 1.0, x),
                3 => (0.0, x, 1.0),
                4 => (x, 0.0, 1.0),
                _ => (1.0, 0.0, x),
            };
            [r, g, b].map(|c: f64| (255.0 * c).round() as u8)
        })
        .collect()
}

/// Captures of a multi-view pattern rendered with the true parameters and
/// with `render`.
#[derive(Debug, Clone)]
pub struct DistortionDemo {
    pub correct: CapturedImage,
    pub wrong: CapturedImage,
    /// Rendering parameters matching the display at the camera distance.
    pub correct_render: DerivedParams,
    pub render: DerivedParams,
    /// View the camera sits in.
    pub gamma: View,
    /// Centered log-magnitude spectrum of the wrong capture's luminance.
    pub spectrum: Array2<f64>,
}

/// Render one flat color per view, interleave with the correct parameters
/// and with `render`, and photograph both from `camera`.
pub fn demo_distortion(
    actual: &DisplayParams,
    render: &DerivedParams,
    camera: &CameraPose,
    colors: &[[u8; 3]],
    opts: &SimOptions,
) -> Result<DistortionDemo> {
    if colors.is_empty() {
        return Err(CalibError::EmptyInput("no view colors".into()));
    }
    let panel = &actual.panel;
    let views: Vec<PanelImage> = colors
        .iter()
        .map(|&c| PanelImage::filled(panel.panel_w, panel.panel_h, c))
        .collect();
    let correct_render = derive(actual, camera.d())?;
    let gamma = view_of_position(camera.u(), camera.v(), camera.d(), actual)?;
    let shoot = |r: &DerivedParams| -> Result<CapturedImage> {
        simulate_capture(&interleave_views(&views, r, panel)?, actual, camera, opts)
    };
    let correct = shoot(&correct_render)?;
    let wrong = if render == &correct_render { correct.clone() } else { shoot(render)? };
    let spectrum = Spectrum::from_windowed(apply_gaussian_window(&wrong.luminance())).log_magnitude_centered();
    Ok(DistortionDemo {
        correct,
        wrong,
        correct_render,
        render: *render,
        gamma,
        spectrum,
    })
}
