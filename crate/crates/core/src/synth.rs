//! Procedural test data: oriented-sinusoid texture classes and bright-field
//! style scans with tissue on a glass background.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use crate::dataset::{DatasetManifest, PatchRecord, Split};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SeededRng};
use crate::tiler::{save_gray_png, ScanImage};

/// Spatial frequencies (cycles per pixel) of the texture classes.
pub const TEXTURE_FREQUENCIES: [f64; 4] = [0.04, 0.08, 0.14, 0.22];
/// Number of orientations, evenly spaced over 180 degrees.
pub const TEXTURE_ANGLES: usize = 6;

/// Layout of a synthetic texture dataset. Class `k` is the sinusoid with
/// frequency `TEXTURE_FREQUENCIES[k / 6]` and orientation `(k % 6) * 30`
/// degrees; every patch gets its own random phase, a small frequency and
/// angle jitter, and additive Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureDatasetSpec {
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub side: usize,
    /// Standard deviation of the additive noise, in 8-bit levels.
    pub noise: f64,
    pub seed: u64,
}

impl Default for TextureDatasetSpec {
    fn default() -> Self {
        Self {
            classes: 24,
            train_per_class: 30,
            test_per_class: 10,
            side: 64,
            noise: 12.0,
            seed: 42,
        }
    }
}

impl TextureDatasetSpec {
    pub fn max_classes() -> usize {
        TEXTURE_FREQUENCIES.len() * TEXTURE_ANGLES
    }
}

/// One patch of texture class `class`.
pub fn texture_patch(class: usize, side: usize, noise: f64, rng: &mut SeededRng) -> Vec<u8> {
    let freq = TEXTURE_FREQUENCIES[class / TEXTURE_ANGLES] * (1.0 + 0.04 * (rng.unit_f64() - 0.5));
    let angle = (class % TEXTURE_ANGLES) as f64 * PI / TEXTURE_ANGLES as f64
        + (rng.unit_f64() - 0.5) * (4.0f64).to_radians();
    let phase = rng.unit_f64() * 2.0 * PI;
    let contrast = 70.0 + 20.0 * rng.unit_f64();
    let (s, c) = angle.sin_cos();
    let mut px = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let t = 2.0 * PI * freq * (x as f64 * c + y as f64 * s) + phase;
            let v = 120.0 + contrast * t.sin() + noise * rng.normal();
            px.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    px
}

/// Writes every patch as `<dir>/patches/<id>.png` and the manifest as
/// `<dir>/manifest.tsv`. Returns the manifest (root = `dir`).
pub fn write_texture_dataset(dir: &Path, spec: &TextureDatasetSpec) -> Result<DatasetManifest> {
    if spec.classes == 0 || spec.classes > TextureDatasetSpec::max_classes() {
        return Err(Error::InvalidArgument(format!(
            "texture classes must be in 1..={}",
            TextureDatasetSpec::max_classes()
        )));
    }
    let patch_dir = dir.join("patches");
    fs::create_dir_all(&patch_dir).map_err(|e| Error::io(&patch_dir, e))?;
    let mut records = Vec::new();
    for class in 0..spec.classes {
        let mut rng = SeededRng::new(derive_seed(spec.seed, class as u64));
        for (split, count) in [
            (Split::Train, spec.train_per_class),
            (Split::Test, spec.test_per_class),
        ] {
            for i in 0..count {
                let patch_id = format!("tex{class:02}_{split}_{i:03}");
                let pixels = texture_patch(class, spec.side, spec.noise, &mut rng);
                let rel = format!("patches/{patch_id}.png");
                save_gray_png(&dir.join(&rel), spec.side, &pixels)?;
                records.push(PatchRecord {
                    patch_id,
                    class_id: class as u32,
                    split,
                    grid_row: (i / 8) as u32,
                    grid_col: (i % 8) as u32,
                    path: rel,
                });
            }
        }
    }
    let manifest = DatasetManifest::new([], records, dir)?;
    manifest.write(&dir.join("manifest.tsv"))?;
    Ok(manifest)
}

/// A scan of bright glass (values 235..=250) with `blobs` elliptical tissue
/// regions textured by class `texture_class`.
pub fn synthetic_scan(
    scan_id: &str,
    width: usize,
    height: usize,
    texture_class: usize,
    blobs: usize,
    seed: u64,
) -> Result<ScanImage> {
    let mut rng = SeededRng::new(seed);
    let mut px: Vec<u8> = (0..width * height)
        .map(|_| 235 + rng.below(16) as u8)
        .collect();
    let tile = 256.min(width).min(height).max(1);
    let texture = texture_patch(texture_class, tile, 10.0, &mut rng);
    for _ in 0..blobs {
        let cx = rng.unit_f64() * width as f64;
        let cy = rng.unit_f64() * height as f64;
        let rx = (0.1 + 0.2 * rng.unit_f64()) * width as f64;
        let ry = (0.1 + 0.2 * rng.unit_f64()) * height as f64;
        for y in 0..height {
            let dy = (y as f64 - cy) / ry;
            if dy.abs() > 1.0 {
                continue;
            }
            for x in 0..width {
                let dx = (x as f64 - cx) / rx;
                if dx * dx + dy * dy <= 1.0 {
                    // darken into the tissue range
                    let t = texture[(y % tile) * tile + (x % tile)];
                    px[y * width + x] = (f64::from(t) * 0.75) as u8;
                }
            }
        }
    }
    ScanImage::new(scan_id, width, height, px)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patches_are_deterministic() {
        let a = texture_patch(5, 16, 10.0, &mut SeededRng::new(1));
        let b = texture_patch(5, 16, 10.0, &mut SeededRng::new(1));
        assert_eq!(a, b);
        assert_eq!(a.len(), 256);
    }

    #[test]
    fn dataset_layout() {
        let dir = tempfile::tempdir().unwrap();
        let spec = TextureDatasetSpec {
            classes: 3,
            train_per_class: 2,
            test_per_class: 1,
            side: 8,
            ..TextureDatasetSpec::default()
        };
        let m = write_texture_dataset(dir.path(), &spec).unwrap();
        assert_eq!(m.records().len(), 9);
        assert!(dir.path().join("manifest.tsv").is_file());
        assert!(m.records().iter().all(|r| m.resolve(r).is_file()));
    }

    #[test]
    fn scan_has_background_and_tissue() {
        let scan = synthetic_scan("s", 300, 200, 3, 2, 9).unwrap();
        assert!(scan.pixels().iter().any(|&p| p >= 235));
        assert!(scan.pixels().iter().any(|&p| p < 200));
    }
}
