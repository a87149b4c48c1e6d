//! Calibration of slanted-barrier and lenticular autostereoscopic displays
//! from two photographs of stripe patterns.
//!
//! The pipeline: [`pattern`] builds the panel images, [`sim`] photographs
//! them through a (possibly misaligned) barrier, [`pose`] recovers the
//! camera pose and rectifies each photograph onto the panel grid,
//! [`spectral`] locates the reciprocal-lattice peaks, and [`estimate`] turns
//! them into pitch, slant, gap and offset. [`experiment`] drives randomized
//! trials over the built-in display presets.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimate;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod pattern;
pub mod pose;
pub mod sim;
pub mod spectral;

pub use error::{CalibError, Result};
pub use geometry::{
    check_rendering_correct, derive, predict_lattice, view_of_pixel, view_of_position, DerivedParams,
    DisplayParams, DisplayPreset, LatticeModel, PanelGeometry, Region, View,
};
pub use pattern::{
    interleave_views, make_calibration_multiplex, make_stripes, PanelImage, PatternSpec, GREEN_PATTERN,
    RED_PATTERN,
};
pub use pose::{decompose, homography_from_corners, rectify, CameraPose, Homography, Intrinsics};
pub use sim::{
    add_poisson_noise, simulate_capture, snr, visibility, Aperture, CapturedImage, RenderMode, SimOptions,
};
pub use spectral::{
    apply_gaussian_window, detect_peaks, detect_peaks_pair, refine_peak, sample_spectrum_at, spectrum, CoarsePeak,
    PeakMeasurement, Spectrum,
};
pub use estimate::{
    calibrate, candidate_set, estimate_offset, intersect_candidates, solve_pitch_gap, CalibrationConfig,
    CalibrationResult, Candidate, CandidateBounds, Observation, PoseSource,
};
pub use experiment::{
    demo_distortion, format_table, perturb_display, rainbow, run_noise_sweep, run_table2, trial_pose, DisplayChoice,
    DistortionDemo, ErrorReport, ExperimentConfig, NoiseLevel, ParamErrors, SweepReport, TrialRecord,
};
