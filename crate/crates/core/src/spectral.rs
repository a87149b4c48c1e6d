//! Windowed Fourier analysis of rectified captures.
//!
//! Frequencies are in cycles per subpixel column (`fx`) and cycles per row
//! (`fy`). Bin `(kx, ky)` sits at `(kx / W, ky / H)` with DC at `(0, 0)`;
//! negative bins wrap. Phases are referenced to the image center
//! `((W - 1) / 2, (H - 1) / 2)`, which coincides with the panel center after
//! rectification. The transform is unitary.

use std::sync::{Arc, OnceLock};

use nalgebra::{SMatrix, SVector};
use ndarray::{Array2, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};

/// Window standard deviation as a fraction of the image extent.
pub const DEFAULT_WINDOW_DIVISOR: f64 = 6.0;

/// Multiply by a separable Gaussian centered on the image, with standard
/// deviations `W / divisor` and `H / divisor`.
pub fn apply_gaussian_window_with(img: &Array2<f64>, divisor: f64) -> Array2<f64> {
    let (h, w) = img.dim();
    let wx = window_profile(w, divisor);
    let wy = window_profile(h, divisor);
    let mut out = img.clone();
    out.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(j, mut row)| {
        let gy = wy[j];
        for (v, gx) in row.iter_mut().zip(&wx) {
            *v *= gx * gy;
        }
    });
    out
}

pub fn apply_gaussian_window(img: &Array2<f64>) -> Array2<f64> {
    apply_gaussian_window_with(img, DEFAULT_WINDOW_DIVISOR)
}

/// Samples of the window along one axis of length `n`.
pub fn window_profile(n: usize, divisor: f64) -> Vec<f64> {
    let c = (n as f64 - 1.0) / 2.0;
    let s = n as f64 / divisor;
    (0..n).map(|i| (-(i as f64 - c).powi(2) / (2.0 * s * s)).exp()).collect()
}

fn fft_rows(data: &mut Array2<Complex64>, planner: &mut FftPlanner<f64>) {
    let n = data.ncols();
    let fft = planner.plan_fft_forward(n);
    let scratch_len = fft.get_inplace_scratch_len();
    data.axis_iter_mut(Axis(0)).into_par_iter().for_each_init(
        || vec![Complex64::default(); scratch_len],
        |scratch, mut row| {
            let slice = row.as_slice_mut().expect("standard layout");
            fft.process_with_scratch(slice, scratch);
        },
    );
}

/// Column transforms, done on bands of adjacent columns gathered into
/// contiguous buffers.
fn fft_columns(data: &mut Array2<Complex64>, planner: &mut FftPlanner<f64>) {
    const BAND: usize = 16;
    let h = data.nrows();
    let fft = planner.plan_fft_forward(h);
    let scratch_len = fft.get_inplace_scratch_len();
    data.axis_chunks_iter_mut(Axis(1), BAND).into_par_iter().for_each_init(
        || (vec![Complex64::default(); BAND * h], vec![Complex64::default(); scratch_len]),
        |(buf, scratch), mut band| {
            let b = band.ncols();
            for y in 0..h {
                let row = band.row(y);
                for (c, v) in row.as_slice().expect("contiguous band row").iter().enumerate() {
                    buf[c * h + y] = *v;
                }
            }
            fft.process_with_scratch(&mut buf[..b * h], scratch);
            for y in 0..h {
                let mut row = band.row_mut(y);
                for (c, v) in row.as_slice_mut().expect("contiguous band row").iter_mut().enumerate() {
                    *v = buf[c * h + y];
                }
            }
        },
    );
}

/// In-place 2-D DFT in natural bin order, without normalization.
fn fft2(data: &mut Array2<Complex64>) {
    let mut planner = FftPlanner::new();
    fft_rows(data, &mut planner);
    fft_columns(data, &mut planner);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Whole,
    /// Transform of the real part of a packed pair.
    Re,
    /// Transform of the imaginary part of a packed pair.
    Im,
}

/// DFT of a windowed real image.
#[derive(Debug, Clone)]
pub struct Spectrum {
    width: usize,
    height: usize,
    /// Subpixel columns per image column.
    x_step: f64,
    /// Unnormalized coefficients indexed `[ky, kx]`.
    raw: Arc<Array2<Complex64>>,
    part: Part,
    norm: f64,
    image: Option<Array2<f64>>,
    floor: f64,
}

impl Spectrum {
    pub fn from_windowed(image: Array2<f64>) -> Self {
        let mut z = image.mapv(|v| Complex64::new(v, 0.0));
        fft2(&mut z);
        let l1 = image.iter().map(|v| v.abs()).sum();
        Self::assemble(image.dim(), Some(image), l1, Arc::new(z), Part::Whole)
    }

    /// Spectra of two same-sized real images from a single complex
    /// transform. The two share the packed coefficients.
    pub fn pair(a: Array2<f64>, b: Array2<f64>) -> Result<(Self, Self)> {
        if a.dim() != b.dim() {
            return Err(CalibError::DimensionMismatch {
                expected: format!("{:?}", a.dim()),
                actual: format!("{:?}", b.dim()),
            });
        }
        let mut z = Array2::<Complex64>::zeros(a.dim());
        ndarray::Zip::from(&mut z)
            .and(&a)
            .and(&b)
            .par_for_each(|z, &re, &im| *z = Complex64::new(re, im));
        let (l1a, l1b) = packed_l1(&z);
        fft2(&mut z);
        let raw = Arc::new(z);
        let dim = a.dim();
        Ok((
            Self::assemble(dim, Some(a), l1a, raw.clone(), Part::Re),
            Self::assemble(dim, Some(b), l1b, raw, Part::Im),
        ))
    }

    /// Like [`Spectrum::pair`], for images already packed as `a + ib`. The
    /// transform runs in place; the images are split out first only when
    /// `keep_images` is set, which [`Spectrum::sample_at`] needs.
    pub fn from_packed(mut z: Array2<Complex64>, keep_images: bool) -> (Self, Self) {
        let (l1a, l1b) = packed_l1(&z);
        let (a, b) = if keep_images {
            (Some(z.mapv(|v| v.re)), Some(z.mapv(|v| v.im)))
        } else {
            (None, None)
        };
        let dim = z.dim();
        fft2(&mut z);
        let raw = Arc::new(z);
        (
            Self::assemble(dim, a, l1a, raw.clone(), Part::Re),
            Self::assemble(dim, b, l1b, raw, Part::Im),
        )
    }

    fn assemble(
        (height, width): (usize, usize),
        image: Option<Array2<f64>>,
        l1: f64,
        raw: Arc<Array2<Complex64>>,
        part: Part,
    ) -> Self {
        let norm = 1.0 / ((width * height) as f64).sqrt();
        // No coefficient exceeds the l1 norm of the image times `norm`.
        Self {
            width,
            height,
            x_step: 1.0,
            raw,
            part,
            norm,
            image,
            floor: 1e-12 * (l1 * norm).max(f64::MIN_POSITIVE),
        }
    }

    /// Coefficient at natural indices, phase referenced to pixel (0, 0).
    #[inline]
    fn coeff(&self, row: usize, col: usize) -> Complex64 {
        let z = self.raw[[row, col]];
        match self.part {
            Part::Whole => z * self.norm,
            Part::Re | Part::Im => {
                let r = (self.height - row) % self.height;
                let c = (self.width - col) % self.width;
                self.separate(z, self.raw[[r, c]])
            }
        }
    }

    /// This part's coefficient from the packed one at `k` and at `-k`.
    #[inline]
    fn separate(&self, z: Complex64, mirror: Complex64) -> Complex64 {
        let zc = mirror.conj();
        match self.part {
            Part::Whole => z * self.norm,
            Part::Re => (z + zc) * (0.5 * self.norm),
            Part::Im => (z - zc) * Complex64::new(0.0, -0.5 * self.norm),
        }
    }

    /// Declare that image columns are `step` subpixel columns apart, so that
    /// frequencies are reported per subpixel column.
    pub fn with_column_step(mut self, step: f64) -> Self {
        assert!(step > 0.0, "column step must be positive");
        self.x_step = step;
        self
    }

    pub fn column_step(&self) -> f64 {
        self.x_step
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// The windowed image the spectrum was computed from, if retained.
    pub fn image(&self) -> Option<&Array2<f64>> {
        self.image.as_ref()
    }

    /// Tiny positive magnitude added before taking logarithms.
    pub fn magnitude_floor(&self) -> f64 {
        self.floor
    }

    fn origin(&self) -> (f64, f64) {
        ((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0)
    }

    fn index(&self, kx: i64, ky: i64) -> (usize, usize) {
        (
            ky.rem_euclid(self.height as i64) as usize,
            kx.rem_euclid(self.width as i64) as usize,
        )
    }

    /// Coefficient at bin `(kx, ky)`, phase referenced to the image center.
    pub fn at(&self, kx: i64, ky: i64) -> Complex64 {
        let (ox, oy) = self.origin();
        let (fx, fy) = (kx as f64 / self.width as f64, ky as f64 / self.height as f64);
        let phase = 2.0 * std::f64::consts::PI * (fx * ox + fy * oy);
        let (r, c) = self.index(kx, ky);
        self.coeff(r, c) * Complex64::from_polar(1.0, phase)
    }

    pub fn magnitude(&self, kx: i64, ky: i64) -> f64 {
        let (r, c) = self.index(kx, ky);
        self.coeff(r, c).norm()
    }

    pub fn frequency(&self, kx: f64, ky: f64) -> (f64, f64) {
        (kx / (self.width as f64 * self.x_step), ky / self.height as f64)
    }

    pub fn bin(&self, fx: f64, fy: f64) -> (f64, f64) {
        (fx * self.width as f64 * self.x_step, fy * self.height as f64)
    }

    /// Log-magnitude with the DC bin at the center, for inspection.
    pub fn log_magnitude_centered(&self) -> Array2<f64> {
        let (w, h) = (self.width as i64, self.height as i64);
        let floor = self.floor;
        Array2::from_shape_fn((self.height, self.width), |(j, i)| {
            let kx = i as i64 - w / 2;
            let ky = j as i64 - h / 2;
            (self.magnitude(kx, ky) + floor).ln()
        })
    }

    /// Exact transform of the windowed image at an arbitrary frequency, in
    /// the units of [`Spectrum::frequency`].
    pub fn sample_at(&self, fx: f64, fy: f64) -> Result<Complex64> {
        Ok(self.sample_many(&[(fx, fy)])?[0])
    }

    /// [`Spectrum::sample_at`] for several frequencies, sharing the row sums
    /// between frequencies with equal `fx`.
    pub fn sample_many(&self, freqs: &[(f64, f64)]) -> Result<Vec<Complex64>> {
        const LANES: usize = 4;
        let image = self
            .image
            .as_ref()
            .ok_or_else(|| CalibError::InvalidParameter("spectrum was built without its image".into()))?;
        let (ox, oy) = self.origin();
        let tau = 2.0 * std::f64::consts::PI;
        let mut groups: Vec<f64> = Vec::new();
        let group_of: Vec<usize> = freqs
            .iter()
            .map(|&(fx, _)| match groups.iter().position(|&g| g == fx) {
                Some(k) => k,
                None => {
                    groups.push(fx);
                    groups.len() - 1
                }
            })
            .collect();
        if groups.is_empty() {
            return Ok(Vec::new());
        }
        // Phasors for LANES groups at a time, interleaved by column.
        let blocks: Vec<Vec<([f64; LANES], [f64; LANES])>> = groups
            .chunks(LANES)
            .map(|block| {
                (0..self.width)
                    .map(|x| {
                        let (mut re, mut im) = ([0.0; LANES], [0.0; LANES]);
                        for (l, fx) in block.iter().enumerate() {
                            let (s, c) = (-tau * fx * self.x_step * (x as f64 - ox)).sin_cos();
                            re[l] = c;
                            im[l] = s;
                        }
                        (re, im)
                    })
                    .collect()
            })
            .collect();
        let ng = groups.len();
        let row_sums: Vec<Vec<Complex64>> = image
            .axis_iter(Axis(0))
            .into_par_iter()
            .map(|row| {
                let row = row.to_slice().expect("standard layout");
                let mut sums = Vec::with_capacity(ng);
                for block in &blocks {
                    let (mut re, mut im) = ([0.0; LANES], [0.0; LANES]);
                    for (v, (pr, pi)) in row.iter().zip(block) {
                        for l in 0..LANES {
                            re[l] += v * pr[l];
                            im[l] += v * pi[l];
                        }
                    }
                    sums.extend((0..LANES).map(|l| Complex64::new(re[l], im[l])));
                }
                sums.truncate(ng);
                sums
            })
            .collect();
        Ok(freqs
            .iter()
            .zip(&group_of)
            .map(|(&(_, fy), &g)| {
                let mut acc = Complex64::default();
                for (y, r) in row_sums.iter().enumerate() {
                    acc += r[g] * Complex64::from_polar(1.0, -tau * fy * (y as f64 - oy));
                }
                acc * self.norm
            })
            .collect())
    }
}

/// l1 norms of the real and imaginary parts.
fn packed_l1(z: &Array2<Complex64>) -> (f64, f64) {
    z.axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| row.iter().fold((0.0, 0.0), |(a, b), v| (a + v.re.abs(), b + v.im.abs())))
        .reduce(|| (0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1))
}

/// Windowed spectrum of a single channel.
pub fn spectrum(windowed: &Array2<f64>) -> Spectrum {
    Spectrum::from_windowed(windowed.clone())
}

/// Local maximum of the magnitude on the bin grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarsePeak {
    pub kx: i64,
    pub ky: i64,
    pub magnitude: f64,
}

/// Local maxima over 8-neighborhoods in the half plane `fy > 0`, outside
/// the DC disk of radius `exclude_dc_radius` bins, strongest first. The
/// lower half plane mirrors the upper one for real images.
pub fn detect_peaks(spec: &Spectrum, exclude_dc_radius: f64, max_peaks: usize) -> Vec<CoarsePeak> {
    match PeakSearch::new(spec, exclude_dc_radius, max_peaks) {
        Some(search) => search.scan(&search.power(&[spec]).remove(0)),
        None => Vec::new(),
    }
}

/// [`detect_peaks`] on both halves of a packed pair, sharing one pass over
/// the coefficients. Spectra that do not share a transform are searched
/// separately.
pub fn detect_peaks_pair(
    a: &Spectrum,
    b: &Spectrum,
    exclude_dc_radius: f64,
    max_peaks: usize,
) -> (Vec<CoarsePeak>, Vec<CoarsePeak>) {
    if !Arc::ptr_eq(&a.raw, &b.raw) {
        return (
            detect_peaks(a, exclude_dc_radius, max_peaks),
            detect_peaks(b, exclude_dc_radius, max_peaks),
        );
    }
    match PeakSearch::new(a, exclude_dc_radius, max_peaks) {
        Some(search) => {
            let mut power = search.power(&[a, b]);
            let pb = power.pop().expect("two tables");
            let pa = power.pop().expect("two tables");
            rayon::join(|| search.scan(&pa), || search.scan(&pb))
        }
        None => (Vec::new(), Vec::new()),
    }
}

/// Search region: columns `kx_lo..=kx_hi`, rows `1..=ky_hi`, with squared
/// magnitudes tabulated one bin beyond it.
struct PeakSearch {
    kx_lo: i64,
    depth: usize,
    span: usize,
    r2: f64,
    max_peaks: usize,
}

impl PeakSearch {
    fn new(spec: &Spectrum, exclude_dc_radius: f64, max_peaks: usize) -> Option<Self> {
        let (w, h) = (spec.width as i64, spec.height as i64);
        let (kx_lo, kx_hi) = (-(w - 1) / 2 + 1, (w - 1) / 2 - 1);
        let ky_hi = (h - 1) / 2 - 1;
        if max_peaks == 0 || ky_hi < 1 || kx_hi < kx_lo {
            return None;
        }
        Some(Self {
            kx_lo,
            depth: (ky_hi + 2) as usize,
            span: (kx_hi - kx_lo + 3) as usize,
            r2: exclude_dc_radius * exclude_dc_radius,
            max_peaks,
        })
    }

    /// One row-major table per spectrum; all must share a transform.
    fn power(&self, specs: &[&Spectrum]) -> Vec<Vec<f64>> {
        let first = specs[0];
        let w = first.width;
        let mut tables: Vec<Vec<f64>> = specs.iter().map(|_| vec![0.0; self.depth * self.span]).collect();
        let mut row_sets: Vec<Vec<&mut [f64]>> = (0..self.depth).map(|_| Vec::with_capacity(specs.len())).collect();
        for table in tables.iter_mut() {
            for (set, row) in row_sets.iter_mut().zip(table.chunks_mut(self.span)) {
                set.push(row);
            }
        }
        row_sets.into_par_iter().enumerate().for_each(|(r, mut outs)| {
            let here = first.raw.row(r);
            let there = first.raw.row((first.height - r) % first.height);
            let (here, there) = (here.as_slice().expect("standard layout"), there.as_slice().expect("standard layout"));
            let mut c = (self.kx_lo - 1).rem_euclid(w as i64) as usize;
            for i in 0..self.span {
                let (z, zm) = (here[c], there[if c == 0 { 0 } else { w - c }]);
                for (out, spec) in outs.iter_mut().zip(specs) {
                    out[i] = spec.separate(z, zm).norm_sqr();
                }
                c += 1;
                if c == w {
                    c = 0;
                }
            }
        });
        tables
    }

    fn scan(&self, power: &[f64]) -> Vec<CoarsePeak> {
        let span = self.span;
        let rows: Vec<Vec<CoarsePeak>> = (1..self.depth - 1)
            .into_par_iter()
            .map(|r| {
                let ky = r as i64;
                let (below, here, above) = (
                    &power[(r - 1) * span..r * span],
                    &power[r * span..(r + 1) * span],
                    &power[(r + 1) * span..(r + 2) * span],
                );
                let mut found = Vec::new();
                for i in 1..span - 1 {
                    let kx = self.kx_lo + i as i64 - 1;
                    let m = here[i];
                    if m <= 0.0 || ((kx * kx + ky * ky) as f64) <= self.r2 {
                        continue;
                    }
                    // Ties go to the bin with the smaller (kx, ky).
                    let is_max = below[i - 1] < m
                        && here[i - 1] < m
                        && above[i - 1] < m
                        && below[i] < m
                        && above[i] <= m
                        && below[i + 1] <= m
                        && here[i + 1] <= m
                        && above[i + 1] <= m;
                    if is_max {
                        found.push(CoarsePeak {
                            kx,
                            ky,
                            magnitude: m.sqrt(),
                        });
                    }
                }
                sort_peaks(&mut found);
                found.truncate(self.max_peaks);
                found
            })
            .collect();
        let mut all: Vec<CoarsePeak> = rows.into_iter().flatten().collect();
        sort_peaks(&mut all);
        all.truncate(self.max_peaks);
        all
    }
}

fn sort_peaks(peaks: &mut [CoarsePeak]) {
    peaks.sort_by(|a, b| {
        b.magnitude
            .total_cmp(&a.magnitude)
            .then(a.ky.cmp(&b.ky))
            .then(a.kx.cmp(&b.kx))
    });
}

/// Sub-bin peak location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakMeasurement {
    /// Cycles per subpixel column.
    pub fx: f64,
    /// Cycles per row.
    pub fy: f64,
    /// Fractional bin coordinates.
    pub kx: f64,
    pub ky: f64,
    /// Fitted log-magnitude at the vertex.
    pub log_magnitude: f64,
    /// RMS residual of the quadratic fit.
    pub residual: f64,
}

impl PeakMeasurement {
    /// The same peak seen at the conjugate frequency.
    pub fn conjugate(self) -> Self {
        Self {
            fx: -self.fx,
            fy: -self.fy,
            kx: -self.kx,
            ky: -self.ky,
            ..self
        }
    }
}

/// Vertex of a fitted paraboloid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Paraboloid {
    /// Coefficients of `a x^2 + b y^2 + c xy + d x + e y + f`.
    pub coeffs: [f64; 6],
    pub vertex: (f64, f64),
    pub peak: f64,
    pub residual: f64,
}

const FIT_RADIUS: i64 = 2;
const FIT_SIDE: usize = 5;

fn fit_operator() -> &'static SMatrix<f64, 6, 25> {
    static OP: OnceLock<SMatrix<f64, 6, 25>> = OnceLock::new();
    OP.get_or_init(|| {
        let mut a = SMatrix::<f64, 25, 6>::zeros();
        for (r, (dy, dx)) in (-FIT_RADIUS..=FIT_RADIUS)
            .flat_map(|dy| (-FIT_RADIUS..=FIT_RADIUS).map(move |dx| (dy, dx)))
            .enumerate()
        {
            let (x, y) = (dx as f64, dy as f64);
            a.row_mut(r).copy_from_slice(&[x * x, y * y, x * y, x, y, 1.0]);
        }
        let normal = a.transpose() * a;
        normal.try_inverse().expect("5x5 design has full rank") * a.transpose()
    })
}

/// Least-squares paraboloid through a 5x5 grid of samples `z[dy][dx]`
/// centered on offset `(0, 0)`.
pub fn fit_paraboloid(z: &[[f64; FIT_SIDE]; FIT_SIDE]) -> Result<Paraboloid> {
    let samples = SVector::<f64, 25>::from_iterator(z.iter().flat_map(|row| row.iter().copied()));
    vertex_of(fit_operator() * samples, z)
}

fn vertex_of(p: SVector<f64, 6>, z: &[[f64; FIT_SIDE]; FIT_SIDE]) -> Result<Paraboloid> {
    let (a, b, c, d, e, f) = (p[0], p[1], p[2], p[3], p[4], p[5]);
    let det = 4.0 * a * b - c * c;
    if !(a < 0.0 && b < 0.0 && det > 0.0) {
        return Err(CalibError::UnreliablePeak(format!(
            "fitted surface is not concave (a = {a:.3e}, b = {b:.3e}, c = {c:.3e})"
        )));
    }
    let x = (c * e - 2.0 * b * d) / det;
    let y = (c * d - 2.0 * a * e) / det;
    let eval = |x: f64, y: f64| a * x * x + b * y * y + c * x * y + d * x + e * y + f;
    let mut ss = 0.0;
    for (j, row) in z.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            let r = v - eval(i as f64 - FIT_RADIUS as f64, j as f64 - FIT_RADIUS as f64);
            ss += r * r;
        }
    }
    Ok(Paraboloid {
        coeffs: [a, b, c, d, e, f],
        vertex: (x, y),
        peak: eval(x, y),
        residual: (ss / 25.0).sqrt(),
    })
}

/// Weighted least-squares paraboloid through `z[dy][dx]` with weights
/// `w[dy][dx]`.
pub fn fit_paraboloid_weighted(z: &[[f64; FIT_SIDE]; FIT_SIDE], w: &[[f64; FIT_SIDE]; FIT_SIDE]) -> Result<Paraboloid> {
    let mut normal = SMatrix::<f64, 6, 6>::zeros();
    let mut rhs = SVector::<f64, 6>::zeros();
    for (j, row) in z.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            let (x, y) = (i as f64 - FIT_RADIUS as f64, j as f64 - FIT_RADIUS as f64);
            let basis = SVector::<f64, 6>::from([x * x, y * y, x * y, x, y, 1.0]);
            normal += w[j][i] * basis * basis.transpose();
            rhs += w[j][i] * v * basis;
        }
    }
    let p = normal
        .try_inverse()
        .ok_or_else(|| CalibError::UnreliablePeak("weights leave the fit underdetermined".into()))?
        * rhs;
    vertex_of(p, z)
}

/// Sub-bin location of the peak near `(kx, ky)` from a paraboloid fit to
/// the log-magnitude over the surrounding 5x5 bins. Samples are weighted by
/// squared magnitude, the inverse variance of a log-magnitude under additive
/// noise.
pub fn refine_peak(spec: &Spectrum, kx: i64, ky: i64) -> Result<PeakMeasurement> {
    let (hw, hh) = (spec.width as i64 / 2, spec.height as i64 / 2);
    if kx.abs() + FIT_RADIUS >= hw || ky.abs() + FIT_RADIUS >= hh {
        return Err(CalibError::UnreliablePeak(format!(
            "bin ({kx}, {ky}) is too close to the Nyquist boundary"
        )));
    }
    let floor = spec.floor;
    let mut z = [[0.0; FIT_SIDE]; FIT_SIDE];
    let mut w = [[0.0; FIT_SIDE]; FIT_SIDE];
    for j in 0..FIT_SIDE {
        for i in 0..FIT_SIDE {
            let m = spec.magnitude(kx + i as i64 - FIT_RADIUS, ky + j as i64 - FIT_RADIUS);
            z[j][i] = (m + floor).ln();
            w[j][i] = m * m;
        }
    }
    let fit = fit_paraboloid_weighted(&z, &w)?;
    let (dx, dy) = fit.vertex;
    if dx.abs() > 1.0 || dy.abs() > 1.0 {
        return Err(CalibError::UnreliablePeak(format!(
            "vertex offset ({dx:.3}, {dy:.3}) leaves the coarse bin neighborhood"
        )));
    }
    let (bx, by) = (kx as f64 + dx, ky as f64 + dy);
    let (fx, fy) = spec.frequency(bx, by);
    Ok(PeakMeasurement {
        fx,
        fy,
        kx: bx,
        ky: by,
        log_magnitude: fit.peak,
        residual: fit.residual,
    })
}

/// Exact transform at `(fx, fy)`; see [`Spectrum::sample_at`].
pub fn sample_spectrum_at(spec: &Spectrum, fx: f64, fy: f64) -> Result<Complex64> {
    spec.sample_at(fx, fy)
}
