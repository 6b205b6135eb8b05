//! Oracle-objective heatmaps with the sampled points overlaid.
//!
//! Markers shrink with age: points from the latest iteration are drawn
//! largest and the initial batch smallest. The final selection gets a red
//! ring.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use vantage::campaign::{CampaignConfig, CampaignRecord};
use vantage::geometry::{unit_grid, NormalizedPoint};
use vantage::simulator::true_objective;

use crate::error::{write_atomic, CliError};

pub const MATRIX_FILE: &str = "heatmap.txt";
pub const IMAGE_FILE: &str = "heatmap.png";

/// Target image side in pixels. Each matrix cell is at least one pixel.
const TARGET_PIXELS: u32 = 404;

/// `resolution × resolution` oracle values. Row `r` holds
/// `ν_v = r / (resolution - 1)`, columns run over `ν_h` the same way.
pub fn oracle_matrix(cfg: &CampaignConfig, resolution: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let tests = cfg.rollout.normalized_test_points()?;
    let values: Vec<f64> = unit_grid(resolution, resolution)
        .iter()
        .map(|p| true_objective(&cfg.landscape, p, &tests))
        .collect();
    Ok(values.chunks(resolution).map(<[f64]>::to_vec).collect())
}

pub fn matrix_text(matrix: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in matrix {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

// Samples of the viridis colormap, interpolated linearly.
const VIRIDIS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

fn colormap(t: f64) -> Rgb<u8> {
    let x = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - i as f64;
    let c = |k: usize| (VIRIDIS[i][k] + f * (VIRIDIS[i + 1][k] - VIRIDIS[i][k])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

fn disc(img: &mut RgbImage, cx: f64, cy: f64, radius: f64, inner: f64, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    let x0 = (cx - radius).floor().max(0.0) as u32;
    let y0 = (cy - radius).floor().max(0.0) as u32;
    let x1 = ((cx + radius).ceil() as u32).min(w.saturating_sub(1));
    let y1 = ((cy + radius).ceil() as u32).min(h.saturating_sub(1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
            if d <= radius && d >= inner {
                img.put_pixel(x, y, color);
            }
        }
    }
}

/// Renders the matrix with `ν_v` increasing upward and the record's points
/// on top.
pub fn render(matrix: &[Vec<f64>], record: &CampaignRecord) -> RgbImage {
    let n = matrix.len().max(1) as u32;
    let cell = TARGET_PIXELS.div_ceil(n).max(1);
    let side = cell * n;
    let (lo, hi) = matrix
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = hi - lo;
    let mut img = RgbImage::new(side, side);
    for (r, row) in matrix.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let t = if span > 0.0 { (v - lo) / span } else { 0.5 };
            let color = colormap(t);
            let top = (n - 1 - r as u32) * cell;
            for y in top..top + cell {
                for x in c as u32 * cell..(c as u32 + 1) * cell {
                    img.put_pixel(x, y, color);
                }
            }
        }
    }

    let to_px = |p: &NormalizedPoint| (p.nu_h * (side - 1) as f64 + 0.5, (1.0 - p.nu_v) * (side - 1) as f64 + 0.5);
    let rounds = record.iterations.len().max(1) as f64;
    let (min_r, max_r) = (side as f64 * 0.006 + 1.0, side as f64 * 0.02 + 2.0);
    for (k, it) in record.iterations.iter().enumerate() {
        let radius = min_r + (max_r - min_r) * (k + 1) as f64 / rounds;
        for o in &it.observations {
            let (x, y) = to_px(&o.point);
            disc(&mut img, x, y, radius, 0.0, Rgb([0, 0, 0]));
            disc(&mut img, x, y, radius - 1.0, 0.0, Rgb([255, 255, 255]));
        }
    }
    let (x, y) = to_px(&record.final_selection.point);
    disc(&mut img, x, y, max_r + 4.0, max_r + 1.5, Rgb([220, 30, 30]));
    img
}

#[derive(Debug, Clone)]
pub struct HeatmapFiles {
    pub matrix: PathBuf,
    pub image: PathBuf,
}

/// Writes `heatmap.txt` and `heatmap.png` into `out_dir`.
pub fn emit_heatmap(
    record: &CampaignRecord,
    cfg: &CampaignConfig,
    resolution: usize,
    out_dir: &Path,
) -> Result<HeatmapFiles, CliError> {
    let matrix = oracle_matrix(cfg, resolution)?;
    std::fs::create_dir_all(out_dir).map_err(crate::error::io_error(out_dir))?;
    let files = HeatmapFiles {
        matrix: out_dir.join(MATRIX_FILE),
        image: out_dir.join(IMAGE_FILE),
    };
    write_atomic(&files.matrix, matrix_text(&matrix).as_bytes())?;
    let mut png = Vec::new();
    render(&matrix, record)
        .write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
        .map_err(|e| CliError::Io {
            path: files.image.clone(),
            source: std::io::Error::other(e),
        })?;
    write_atomic(&files.image, &png)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vantage::campaign::Strategy;
    use vantage::simulator::{exhaustive_optimum, Landscape, Preset};
    use vantage::surrogate::Observation;

    fn record() -> CampaignRecord {
        let o = |h, v, j| Observation::new(NormalizedPoint::new(h, v).unwrap(), j).unwrap();
        CampaignRecord::from_batches(
            Strategy::Random,
            0,
            vec![vec![o(0.1, 0.2, 0.3), o(0.9, 0.9, 0.1)], vec![o(0.5, 0.5, 0.6)]],
        )
        .unwrap()
    }

    #[test]
    fn corners_at_resolution_two() {
        let cfg = CampaignConfig { landscape: Preset::Square.landscape(), ..CampaignConfig::default() };
        let m = oracle_matrix(&cfg, 2).unwrap();
        let tests = cfg.rollout.normalized_test_points().unwrap();
        let f = |h, v| true_objective(&cfg.landscape, &NormalizedPoint::new(h, v).unwrap(), &tests);
        assert_eq!(m, vec![vec![f(0.0, 0.0), f(1.0, 0.0)], vec![f(0.0, 1.0), f(1.0, 1.0)]]);
    }

    #[test]
    fn constant_landscape_is_uniform() {
        let cfg = CampaignConfig { landscape: Landscape::constant(0.35), ..CampaignConfig::default() };
        let m = oracle_matrix(&cfg, 7).unwrap();
        assert!(m.iter().flatten().all(|&v| v == m[0][0]));
        assert!((m[0][0] - 0.35).abs() < 1e-15);
        // A flat field still renders.
        let img = render(&m, &record());
        assert_eq!(img.width(), img.height());
    }

    #[test]
    fn maximum_matches_exhaustive_optimum() {
        let cfg = CampaignConfig { landscape: Preset::PickPlace.landscape(), ..CampaignConfig::default() };
        let m = oracle_matrix(&cfg, 101).unwrap();
        let tests = cfg.rollout.normalized_test_points().unwrap();
        let (_, best) = exhaustive_optimum(&cfg.landscape, &tests, 101);
        let max = m.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(max, best);
    }

    #[test]
    fn writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CampaignConfig::default();
        let files = emit_heatmap(&record(), &cfg, 11, dir.path()).unwrap();
        let text = std::fs::read_to_string(&files.matrix).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.lines().all(|l| l.split(' ').count() == 11));
        let img = image::open(&files.image).unwrap().to_rgb8();
        assert!(img.width() >= 11);
        // The final selection ring is drawn in red.
        assert!(img.pixels().any(|p| *p == Rgb([220, 30, 30])));
    }
}
