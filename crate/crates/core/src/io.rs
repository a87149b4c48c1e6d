//! Image files: 8-bit panel frames, 16-bit captures, corner sidecars and
//! preview/spectrum dumps.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use ndarray::Array2;

use crate::error::{CalibError, Result};
use crate::experiment::DistortionDemo;
use crate::pattern::PanelImage;
use crate::sim::CapturedImage;

/// Write the panel as the display would show it: one RGB pixel per
/// subpixel triplet, each component taken from its own subpixel column.
pub fn write_panel_png(img: &PanelImage, path: impl AsRef<Path>) -> Result<()> {
    if !img.width.is_multiple_of(3) {
        return Err(CalibError::InvalidParameter(format!("panel width {} is not a multiple of 3", img.width)));
    }
    let out = RgbImage::from_fn((img.width / 3) as u32, img.height as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb(std::array::from_fn(|c| img.planes[c][[y, 3 * x + c]]))
    });
    out.save(path)?;
    Ok(())
}

/// Read an 8-bit frame written by [`write_panel_png`]. Every plane holds
/// the pixel's component across the whole triplet, so
/// [`PanelImage::emitted`] matches the file.
pub fn read_panel_png(path: impl AsRef<Path>) -> Result<PanelImage> {
    let rgb = image::open(path)?.into_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut img = PanelImage::black(3 * w, h);
    for (x, y, px) in rgb.enumerate_pixels() {
        let (x, y) = (x as usize, y as usize);
        for c in 0..3 {
            for k in 0..3 {
                img.planes[c][[y, 3 * x + k]] = px.0[c];
            }
        }
    }
    Ok(img)
}

/// Store a capture as 16-bit RGB with `full_scale` mapped to 65535.
pub fn write_capture_png(img: &CapturedImage, full_scale: f64, path: impl AsRef<Path>) -> Result<()> {
    if !(full_scale > 0.0 && full_scale.is_finite()) {
        return Err(CalibError::InvalidParameter("full scale must be positive".into()));
    }
    let k = 65535.0 / full_scale;
    let out: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::from_fn(img.width as u32, img.height as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb(std::array::from_fn(|c| (img.planes[c][[y, x]] * k).round().clamp(0.0, 65535.0) as u16))
    });
    out.save(path)?;
    Ok(())
}

/// Read a 16-bit capture; values come back in `[0, full_scale]`.
pub fn read_capture_png(path: impl AsRef<Path>, full_scale: f64, corners: [(f64, f64); 4]) -> Result<CapturedImage> {
    let rgb = image::open(path)?.into_rgb16();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let k = full_scale / 65535.0;
    let planes = (0..3)
        .map(|c| Array2::from_shape_fn((h, w), |(y, x)| f64::from(rgb.get_pixel(x as u32, y as u32).0[c]) * k))
        .collect();
    CapturedImage::from_planes(planes, corners)
}

/// Corner sidecar: four `x y` lines, TL TR BR BL, in capture pixels.
pub fn write_corners(corners: &[(f64, f64); 4], path: impl AsRef<Path>) -> Result<()> {
    let text: String = corners.iter().map(|(x, y)| format!("{x} {y}\n")).collect();
    fs::write(path, text)?;
    Ok(())
}

pub fn read_corners(path: impl AsRef<Path>) -> Result<[(f64, f64); 4]> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let bad = |why: &str| CalibError::InvalidParameter(format!("{}: {why}", path.display()));
    let rows: Vec<(f64, f64)> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let v: Vec<f64> = l.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad("corner lines must hold two numbers"))?;
            match v[..] {
                [x, y] if x.is_finite() && y.is_finite() => Ok((x, y)),
                _ => Err(bad("corner lines must hold two numbers")),
            }
        })
        .collect::<Result<_>>()?;
    <[(f64, f64); 4]>::try_from(rows).map_err(|r| bad(&format!("expected 4 corners, found {}", r.len())))
}

/// Sidecar path next to an image: `capture.png` -> `capture.corners.txt`.
pub fn corners_path(image: &Path) -> PathBuf {
    image.with_extension("corners.txt")
}

/// Linear stretch of `data` from its range onto 0..=255.
pub fn write_gray_png(data: &Array2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let (lo, hi) = data
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (h, w) = data.dim();
    let out = GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let v = data[[y as usize, x as usize]];
        Luma([if v.is_finite() { ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8 } else { 0 }])
    });
    out.save(path)?;
    Ok(())
}

/// 8-bit preview of captures placed left to right on a common scale.
pub fn write_preview_png(images: &[&CapturedImage], path: impl AsRef<Path>) -> Result<()> {
    let first = images.first().ok_or_else(|| CalibError::EmptyInput("no captures to preview".into()))?;
    for img in images {
        img.check_same_size(first)?;
    }
    let peak = images.iter().map(|i| i.max_value()).fold(0.0, f64::max);
    let k = if peak > 0.0 { 255.0 / peak } else { 0.0 };
    let w = first.width;
    let out = RgbImage::from_fn((w * images.len()) as u32, first.height as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let img = images[x / w];
        Rgb(std::array::from_fn(|c| (img.planes[c][[y, x % w]] * k).round().clamp(0.0, 255.0) as u8))
    });
    out.save(path)?;
    Ok(())
}

/// Write the demo captures, their side-by-side comparison and the spectrum
/// of the distorted capture into `dir`.
pub fn write_demo(demo: &DistortionDemo, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let paths: Vec<PathBuf> = ["demo_correct.png", "demo_wrong.png", "demo_side_by_side.png", "demo_spectrum.png"]
        .iter()
        .map(|n| dir.join(n))
        .collect();
    write_preview_png(&[&demo.correct], &paths[0])?;
    write_preview_png(&[&demo.wrong], &paths[1])?;
    write_preview_png(&[&demo.correct, &demo.wrong], &paths[2])?;
    write_gray_png(&demo.spectrum, &paths[3])?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::make_calibration_multiplex;

    #[test]
    fn panel_round_trip_keeps_emission() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.png");
        let img = make_calibration_multiplex(360, 20).unwrap();
        write_panel_png(&img, &path).unwrap();
        let back = read_panel_png(&path).unwrap();
        assert_eq!((back.width, back.height), (360, 20));
        for r in 0..20 {
            for c in 0..360 {
                assert_eq!(back.emitted(c, r), img.emitted(c, r));
            }
        }
        let png = image::open(&path).unwrap();
        assert_eq!((png.width(), png.height()), (120, 20));
        assert!(write_panel_png(&PanelImage::black(10, 2), dir.path().join("x.png")).is_err());
    }

    #[test]
    fn capture_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cap.png");
        let mut cap = CapturedImage::black(40, 30);
        for c in 0..3 {
            cap.planes[c] = Array2::from_shape_fn((30, 40), |(y, x)| ((x * 7 + y * 3 + c * 11) % 50) as f64 / 80.0);
        }
        write_capture_png(&cap, 1.0, &path).unwrap();
        let back = read_capture_png(&path, 1.0, cap.corners).unwrap();
        for c in 0..3 {
            for (a, b) in cap.planes[c].iter().zip(back.planes[c].iter()) {
                assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
            }
        }
        assert_eq!(back.corners, cap.corners);
        assert!(matches!(image::open(&path).unwrap(), image::DynamicImage::ImageRgb16(_)));
    }

    #[test]
    fn corner_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = corners_path(&dir.path().join("cap1.png"));
        assert!(path.ends_with("cap1.corners.txt"));
        let corners = [(1.5, 2.25), (100.125, 3.0), (99.0, 80.5), (0.1, 81.0)];
        write_corners(&corners, &path).unwrap();
        assert_eq!(read_corners(&path).unwrap(), corners);
        fs::write(&path, "1 2\n3 4\n5 6\n").unwrap();
        assert!(matches!(read_corners(&path), Err(CalibError::InvalidParameter(_))));
        fs::write(&path, "1 2\n3 4\n5 6\n7 x\n").unwrap();
        assert!(read_corners(&path).is_err());
        assert!(matches!(read_corners(dir.path().join("missing")), Err(CalibError::Io(_))));
    }

    #[test]
    fn gray_dump_stretches_range() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let data = Array2::from_shape_fn((4, 5), |(y, x)| (x + y) as f64);
        write_gray_png(&data, &path).unwrap();
        let g = image::open(&path).unwrap().into_luma8();
        assert_eq!(g.get_pixel(0, 0).0[0], 0);
        assert_eq!(g.get_pixel(4, 3).0[0], 255);
    }

    #[test]
    fn demo_files_are_png() {
        use crate::experiment::{demo_distortion, rainbow};
        use crate::geometry::{DerivedParams, DisplayParams, PanelGeometry};
        use crate::pose::{CameraPose, Intrinsics};
        use crate::sim::SimOptions;
        let panel = PanelGeometry::new(300, 100, 0.2, 0.6).unwrap();
        let actual = DisplayParams::new(1.0, 18.0, 4.0, 0.2, panel).unwrap();
        let render = DerivedParams::stripe_rendering(15.0, 0.0, &panel).unwrap();
        let camera = CameraPose::frontal(0.0, 0.0, 700.0, Intrinsics::centered(1000.0, 64, 64).unwrap()).unwrap();
        let opts = SimOptions {
            apply_perspective: false,
            ..Default::default()
        };
        let demo = demo_distortion(&actual, &render, &camera, &rainbow(6), &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_demo(&demo, dir.path().join("demo")).unwrap();
        assert_eq!(paths.len(), 4);
        for p in &paths {
            let img = image::open(p).unwrap();
            assert!(img.width() > 0 && img.height() > 0);
        }
        assert_eq!(image::open(&paths[2]).unwrap().width(), 2 * image::open(&paths[0]).unwrap().width());
    }
}
