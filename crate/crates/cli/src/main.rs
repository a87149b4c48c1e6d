//! `parcal`: simulate captures, calibrate from two photographs, and run the
//! randomized trial and noise-sweep experiments.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use parcal::experiment::{setup_trial, trial_captures, trial_focal};
use parcal::io::{
    corners_path, read_capture_png, read_corners, write_capture_png, write_corners, write_demo, write_panel_png,
};
use parcal::{
    calibrate, demo_distortion, derive, format_table, make_calibration_multiplex, rainbow, run_noise_sweep,
    run_table2, CalibError, CameraPose, DerivedParams, DisplayChoice, DisplayParams, DisplayPreset, ExperimentConfig,
    Intrinsics, NoiseLevel, Observation,
};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "parcal", version, about = "Parameter calibration of slanted-barrier and lenticular 3D displays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Photograph the calibration pattern on a perturbed display from two
    /// jittered distances.
    Simulate(ExperimentArgs),
    /// Estimate p, alpha, t and sigma from two captures.
    Calibrate(CalibrateArgs),
    /// Randomized noiseless trials, reported as mean (standard deviation).
    Table2(Table2Args),
    /// The trials repeated at every noise level.
    Sweep(ExperimentArgs),
    /// Captures of a multi-view pattern rendered with correct and wrong
    /// parameters.
    Demo(DemoArgs),
}

/// Experiment settings; flags override the config file.
#[derive(Args, Clone, Default)]
struct ExperimentArgs {
    /// TOML file with ExperimentConfig keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// FHD55B, UHD32B or WQXGA10L.
    #[arg(long)]
    preset: Option<DisplayPreset>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    perturbation: Option<f64>,
    #[arg(long)]
    jitter_mm: Option<f64>,
    #[arg(long)]
    rotation_deg: Option<f64>,
    #[arg(long)]
    d1: Option<f64>,
    #[arg(long)]
    d2: Option<f64>,
    /// Comma-separated target SNR levels in dB; `inf` is noiseless.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    snr_db: Option<Vec<f64>>,
    /// Comma-separated photon scales; replace the SNR levels.
    #[arg(long, value_delimiter = ',')]
    noise_scale: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    capture_width: Option<usize>,
    #[arg(long)]
    capture_height: Option<usize>,
    /// Write zero elapsed times so reruns are byte-identical.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct Table2Args {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Run every built-in display instead of the configured one.
    #[arg(long)]
    all: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    capture1: PathBuf,
    capture2: PathBuf,
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Focal length in pixels, one for both captures or `f1,f2`; otherwise
    /// read from `<capture>.camera.toml`.
    #[arg(long, value_delimiter = ',', num_args = 1..=2)]
    focal: Vec<f64>,
    /// Captures were taken through a mirror.
    #[arg(long)]
    flip: bool,
}

#[derive(Args)]
struct DemoArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, default_value_t = 8)]
    views: usize,
    /// Rendering slant; defaults to 0 (unslanted rendering).
    #[arg(long, allow_negative_numbers = true)]
    render_alpha_deg: Option<f64>,
    /// Rendering horizontal period in subpixels; defaults to the true one.
    #[arg(long)]
    render_h: Option<f64>,
    /// Rendering offset in subpixels; defaults to the true one.
    #[arg(long, allow_negative_numbers = true)]
    render_rho: Option<f64>,
    /// Camera position across the panel, mm.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    u: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    v: f64,
}

/// Camera record written next to each simulated capture.
#[derive(Serialize, Deserialize)]
struct CameraFile {
    intrinsics: Intrinsics,
    /// True camera position (u, v, d), mm.
    position: [f64; 3],
}

/// A calibration that ran but failed; exit code 2.
#[derive(Debug)]
struct CalibrationFailed(CalibError);

impl std::fmt::Display for CalibrationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "calibration failed: {}", self.0)
    }
}

impl std::error::Error for CalibrationFailed {}

impl ExperimentArgs {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(p) = self.preset {
            cfg.display = DisplayChoice::Preset(p);
        }
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field.clone() { cfg.$field = v; })* };
        }
        set!(trials, perturbation, jitter_mm, rotation_deg, d1, d2, snr_db, noise_scale, seed, out_dir, capture_width, capture_height);
        cfg.deterministic |= self.deterministic;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<CalibrationFailed>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Simulate(args) => simulate(&args.resolve()?),
        Command::Calibrate(args) => calibrate_files(&args),
        Command::Table2(args) => table2(&args),
        Command::Sweep(args) => sweep(&args.resolve()?),
        Command::Demo(args) => demo(&args),
    }
}

fn out_dir(cfg: &ExperimentConfig) -> anyhow::Result<&Path> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    Ok(&cfg.out_dir)
}

fn simulate(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let base = cfg.display.params()?;
    let setup = setup_trial(cfg, &base, 0)?;
    let pattern = make_calibration_multiplex(base.panel.panel_w, base.panel.panel_h)?;
    let clean = trial_captures(&setup, &pattern, &cfg.sim)?;
    let level = match (cfg.noise_scale.first(), cfg.snr_db.first()) {
        (Some(&s), _) => NoiseLevel::Scale(s),
        (None, Some(&db)) if db.is_finite() => NoiseLevel::Snr(db),
        _ => NoiseLevel::Noiseless,
    };
    let dir = out_dir(cfg)?;
    write_panel_png(&pattern, dir.join("panel.png"))?;
    for (i, capture) in clean.iter().enumerate() {
        let img = level.apply(capture, setup.noise_seeds[i])?;
        let path = dir.join(format!("capture{}.png", i + 1));
        write_capture_png(&img, 1.0, &path)?;
        write_corners(&img.corners, corners_path(&path))?;
        let pose = setup.poses[i];
        let camera = CameraFile {
            intrinsics: pose.intrinsics,
            position: [pose.u(), pose.v(), pose.d()],
        };
        fs::write(path.with_extension("camera.toml"), toml::to_string(&camera)?)?;
        println!("{} at d = {:.1} mm", path.display(), pose.d());
    }
    fs::write(dir.join("truth.toml"), toml::to_string(&setup.truth)?)?;
    let t = &setup.truth;
    println!(
        "truth: p = {} mm, alpha = {} deg, t = {} mm, sigma = {} mm",
        t.p,
        t.alpha_deg(),
        t.t,
        t.sigma
    );
    Ok(())
}

fn intrinsics_for(path: &Path, width: usize, height: usize, focal: Option<f64>) -> anyhow::Result<Intrinsics> {
    if let Some(f) = focal {
        return Ok(Intrinsics::centered(f, width, height)?);
    }
    let camera = path.with_extension("camera.toml");
    let text = fs::read_to_string(&camera)
        .with_context(|| format!("no --focal given and {} is unreadable", camera.display()))?;
    let file: CameraFile = toml::from_str(&text).with_context(|| format!("parsing {}", camera.display()))?;
    Ok(file.intrinsics)
}

fn calibrate_files(args: &CalibrateArgs) -> anyhow::Result<()> {
    let cfg = args.experiment.resolve()?;
    let panel = cfg.display.params()?.panel;
    let mut captures = Vec::new();
    for (i, path) in [&args.capture1, &args.capture2].into_iter().enumerate() {
        let corners = read_corners(corners_path(path))?;
        let img = read_capture_png(path, 1.0, corners).with_context(|| format!("reading {}", path.display()))?;
        let focal = args.focal.get(i).or(args.focal.first()).copied();
        let k = intrinsics_for(path, img.width, img.height, focal)?;
        captures.push((img, k));
    }
    let calib = parcal::CalibrationConfig {
        flip: args.flip || cfg.calibration.flip,
        ..cfg.calibration
    };
    let obs: Vec<Observation> = captures.iter().map(|(img, k)| Observation::with_intrinsics(img, *k)).collect();
    let result = calibrate(&obs[0], &obs[1], &panel, &calib).map_err(CalibrationFailed)?;
    let report = result.report();
    print!("{report}");
    if args.experiment.out_dir.is_some() {
        fs::write(out_dir(&cfg)?.join("calibration.txt"), &report)?;
    }
    Ok(())
}

fn table2(args: &Table2Args) -> anyhow::Result<()> {
    let cfg = args.experiment.resolve()?;
    let displays = if args.all {
        DisplayPreset::ALL.iter().map(|&p| DisplayChoice::Preset(p)).collect()
    } else {
        vec![cfg.display.clone()]
    };
    let dir = out_dir(&cfg)?;
    let mut reports = Vec::new();
    for display in displays {
        let one = ExperimentConfig { display, ..cfg.clone() };
        let report = run_table2(&one)?;
        fs::write(dir.join(format!("table2_{}.csv", report.display)), report.to_csv()?)?;
        for r in report.records.iter().filter(|r| r.errors.is_none()) {
            eprintln!("{} trial {}: {}", report.display, r.trial, r.status);
        }
        reports.push(report);
    }
    let table = format_table(&reports);
    fs::write(dir.join("table2.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn sweep(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let report = run_noise_sweep(cfg)?;
    let dir = out_dir(cfg)?;
    let name = cfg.display.name();
    for level in &report.levels {
        fs::write(dir.join(format!("sweep_{name}_{}.csv", level.level.label())), level.to_csv()?)?;
    }
    fs::write(dir.join(format!("sweep_{name}_summary.csv")), report.summary_csv()?)?;
    print!("{}", report.format_summary());
    Ok(())
}

fn demo(args: &DemoArgs) -> anyhow::Result<()> {
    let cfg = args.experiment.resolve()?;
    if args.views == 0 {
        bail!(CalibError::Config("views must be at least 1".into()));
    }
    let actual: DisplayParams = cfg.display.params()?;
    let d = cfg.d1;
    let k = Intrinsics::centered(trial_focal(&cfg, &actual.panel, d), cfg.capture_width, cfg.capture_height)?;
    let camera = CameraPose::look_at_center(args.u, args.v, d, k)?;
    let correct = derive(&actual, d)?;
    let render = DerivedParams::rendering(
        args.render_h.unwrap_or(correct.h),
        args.render_alpha_deg.unwrap_or(0.0).to_radians(),
        args.render_rho.unwrap_or(correct.rho),
        correct.row_aspect,
    )?;
    let demo = demo_distortion(&actual, &render, &camera, &rainbow(args.views), &cfg.sim)?;
    for path in write_demo(&demo, out_dir(&cfg)?)? {
        println!("{}", path.display());
    }
    Ok(())
}
