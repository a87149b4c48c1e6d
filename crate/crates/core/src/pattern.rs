//! Panel images: single-view stripe patterns, the two-pattern calibration
//! multiplex, and general view interleaving.

use ndarray::Array2;

use crate::error::{CalibError, Result};
use crate::geometry::{view_of_pixel, DerivedParams, PanelGeometry};

/// Stripe spacing and offset of the red calibration pattern.
pub const RED_PATTERN: PatternSpec = PatternSpec {
    beta: 15,
    epsilon: 0,
    channel: 0,
    width: 1,
};

/// Stripe spacing and offset of the green calibration pattern.
pub const GREEN_PATTERN: PatternSpec = PatternSpec {
    beta: 24,
    epsilon: 1,
    channel: 1,
    width: 1,
};

/// One stripe pattern: every `beta`-th subpixel column starting at
/// `epsilon` is lit in `channel`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatternSpec {
    pub beta: usize,
    pub epsilon: usize,
    pub channel: usize,
    /// Lit columns per period. 1 is the delta-comb pattern; wider stripes
    /// trade lattice sharpness for signal.
    pub width: usize,
}

impl PatternSpec {
    pub fn new(beta: usize, epsilon: usize, channel: usize) -> Result<Self> {
        let spec = Self {
            beta,
            epsilon,
            channel,
            width: 1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_width(mut self, width: usize) -> Result<Self> {
        self.width = width;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta < 3 || !self.beta.is_multiple_of(3) {
            return Err(CalibError::InvalidParameter(format!(
                "stripe spacing {} must be a positive multiple of 3",
                self.beta
            )));
        }
        if self.epsilon >= self.beta {
            return Err(CalibError::InvalidParameter(format!(
                "stripe offset {} must be below the spacing {}",
                self.epsilon, self.beta
            )));
        }
        if self.channel > 2 {
            return Err(CalibError::InvalidParameter(format!("channel {} out of range", self.channel)));
        }
        if self.width == 0 || self.width >= self.beta {
            return Err(CalibError::InvalidParameter(format!("stripe width {} out of range", self.width)));
        }
        Ok(())
    }

    pub fn is_lit(&self, col: usize) -> bool {
        (col + self.beta - self.epsilon % self.beta) % self.beta < self.width
    }
}

/// Panel content at subpixel resolution: three 8-bit planes of
/// `height x width` (rows x subpixel columns). Physically, column `c` only
/// emits the color `c % 3`; the simulator reads plane `c % 3` there.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelImage {
    pub width: usize,
    pub height: usize,
    pub planes: [Array2<u8>; 3],
}

impl PanelImage {
    pub fn black(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            planes: std::array::from_fn(|_| Array2::zeros((height, width))),
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self {
            width,
            height,
            planes: std::array::from_fn(|c| Array2::from_elem((height, width), rgb[c])),
        }
    }

    pub fn for_panel(panel: &PanelGeometry) -> Self {
        Self::black(panel.panel_w, panel.panel_h)
    }

    pub fn pixel(&self, col: usize, row: usize) -> [u8; 3] {
        std::array::from_fn(|c| self.planes[c][[row, col]])
    }

    pub fn check_matches(&self, panel: &PanelGeometry) -> Result<()> {
        if self.width != panel.panel_w || self.height != panel.panel_h {
            return Err(CalibError::DimensionMismatch {
                expected: format!("{}x{}", panel.panel_w, panel.panel_h),
                actual: format!("{}x{}", self.width, self.height),
            });
        }
        Ok(())
    }

    /// Value emitted by the physical subpixel at `(col, row)`, in `[0, 1]`.
    pub fn emitted(&self, col: usize, row: usize) -> f64 {
        f64::from(self.planes[col % 3][[row, col]]) / 255.0
    }
}

pub fn make_stripes(spec: &PatternSpec, width: usize, height: usize) -> Result<PanelImage> {
    spec.validate()?;
    if width == 0 || height == 0 {
        return Err(CalibError::DimensionMismatch {
            expected: "non-empty panel".into(),
            actual: format!("{width}x{height}"),
        });
    }
    let mut img = PanelImage::black(width, height);
    let plane = &mut img.planes[spec.channel];
    for col in (0..width).filter(|&c| spec.is_lit(c)) {
        plane.column_mut(col).fill(255);
    }
    Ok(img)
}

/// Red stripes (beta 15, epsilon 0) and green stripes (beta 24, epsilon 1)
/// in one panel image; blue stays dark.
pub fn make_calibration_multiplex(width: usize, height: usize) -> Result<PanelImage> {
    let mut img = make_stripes(&RED_PATTERN, width, height)?;
    let green = make_stripes(&GREEN_PATTERN, width, height)?;
    let [_, g, _] = green.planes;
    img.planes[1] = g;
    Ok(img)
}

/// Assign every subpixel the value of the view image whose bin contains the
/// subpixel's view label under `render`. Bin `k` covers `[k/N, (k+1)/N)`.
pub fn interleave_views(
    view_images: &[PanelImage],
    render: &DerivedParams,
    panel: &PanelGeometry,
) -> Result<PanelImage> {
    let first = view_images
        .first()
        .ok_or_else(|| CalibError::EmptyInput("no view images to interleave".into()))?;
    for img in view_images {
        img.check_matches(panel)?;
    }
    let n = view_images.len();
    let mut out = PanelImage::black(first.width, first.height);
    for row in 0..panel.panel_h {
        for col in 0..panel.panel_w {
            let (x, y) = panel.index_to_centered(col as f64, row as f64);
            let gamma = view_of_pixel(x, y, render).gamma();
            let bin = ((gamma * n as f64).floor() as usize).min(n - 1);
            let src = &view_images[bin];
            for c in 0..3 {
                out.planes[c][[row, col]] = src.planes[c][[row, col]];
            }
        }
    }
    Ok(out)
}
