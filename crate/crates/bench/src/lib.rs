//! Fixtures shared by the benchmarks.

use parcal::experiment::{setup_trial, trial_captures, TrialSetup};
use parcal::{make_calibration_multiplex, CapturedImage, DisplayChoice, DisplayPreset, ExperimentConfig, PanelImage, Result};

/// Noiseless trial 0 of `preset` photographed at `width` x `height`.
pub struct Fixture {
    pub setup: TrialSetup,
    pub pattern: PanelImage,
    pub captures: [CapturedImage; 2],
    pub cfg: ExperimentConfig,
}

pub fn fixture(preset: DisplayPreset, width: usize, height: usize) -> Result<Fixture> {
    let cfg = ExperimentConfig {
        display: DisplayChoice::Preset(preset),
        capture_width: width,
        capture_height: height,
        ..Default::default()
    };
    let base = preset.params();
    let setup = setup_trial(&cfg, &base, 0)?;
    let pattern = make_calibration_multiplex(base.panel.panel_w, base.panel.panel_h)?;
    let captures = trial_captures(&setup, &pattern, &cfg.sim)?;
    Ok(Fixture { setup, pattern, captures, cfg })
}
