//! Cuts a grayscale scan into non-overlapping square patches, drops
//! near-pure background, whitens what is left and prepares network-sized
//! inputs.

use std::path::{Path, PathBuf};

use image::GrayImage;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A full grayscale scan held in memory, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanImage {
    pub scan_id: String,
    width: usize,
    height: usize,
    pixels: Vec<u8>,
    /// Micrometers per pixel, when known.
    pub resolution_um: Option<f64>,
}

impl ScanImage {
    pub fn new(
        scan_id: impl Into<String>,
        width: usize,
        height: usize,
        pixels: Vec<u8>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "scan dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "scan has {} pixels, expected {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self {
            scan_id: scan_id.into(),
            width,
            height,
            pixels,
            resolution_um: None,
        })
    }

    /// Loads a PNG or TIFF and converts it to 8-bit luma.
    pub fn load(path: &Path, scan_id: impl Into<String>) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_luma8();
        let (w, h) = img.dimensions();
        Self::new(scan_id, w as usize, h as usize, img.into_raw())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    fn crop_square(&self, x: usize, y: usize, side: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(side * side);
        for row in y..y + side {
            let start = row * self.width + x;
            out.extend_from_slice(&self.pixels[start..start + side]);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
    pub x: usize,
    pub y: usize,
}

/// A square patch cut from a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPatch {
    pub scan_id: String,
    pub grid_row: usize,
    pub grid_col: usize,
    pub side: usize,
    pub pixels: Vec<u8>,
    /// Fraction of background pixels, in `[0, 1]`.
    pub homogeneity: f64,
}

impl RawPatch {
    pub fn patch_id(&self) -> String {
        patch_name(&self.scan_id, self.grid_row, self.grid_col)
    }

    pub fn file_name(&self) -> String {
        format!("{}.png", self.patch_id())
    }

    /// Writes the patch as an 8-bit grayscale PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        save_gray_png(path, self.side, &self.pixels)
    }
}

/// `<scan_id>_r<row>_c<col>`
pub fn patch_name(scan_id: &str, row: usize, col: usize) -> String {
    format!("{scan_id}_r{row}_c{col}")
}

/// A patch resampled to the network input size, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPatch {
    pub patch_id: String,
    side: usize,
    values: Vec<f32>,
}

impl PreparedPatch {
    pub fn new(patch_id: impl Into<String>, side: usize, values: Vec<f32>) -> Result<Self> {
        if side == 0 || values.len() != side * side {
            return Err(Error::Shape(format!(
                "prepared patch needs {side}x{side} values, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidData(format!(
                "prepared value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            patch_id: patch_id.into(),
            side,
            values,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Values back on the 0..=255 grid, `round(v * 255)`.
    pub fn levels(&self) -> Vec<u8> {
        self.values.iter().map(|&v| quantize(v)).collect()
    }
}

pub(crate) fn quantize(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct TilerConfig {
    pub patch_size: usize,
    /// Pixels at or above this brightness count as background.
    pub bg_threshold: u8,
    /// Patches whose background fraction exceeds this are dropped.
    pub homogeneity_max: f64,
    /// Keep patches with homogeneity at or above `homogeneity_max` instead
    /// (the literal reading of the selection rule).
    pub invert_homogeneity: bool,
    pub resize_to: usize,
}

impl Default for TilerConfig {
    fn default() -> Self {
        Self {
            patch_size: 1000,
            bg_threshold: 220,
            homogeneity_max: 0.99,
            invert_homogeneity: false,
            resize_to: 224,
        }
    }
}

impl TilerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::InvalidArgument(
                "patch_size must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.homogeneity_max) {
            return Err(Error::InvalidArgument(format!(
                "homogeneity_max must lie in [0, 1], got {}",
                self.homogeneity_max
            )));
        }
        if self.resize_to == 0 {
            return Err(Error::InvalidArgument(
                "resize_to must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn keeps(&self, homogeneity: f64) -> bool {
        if self.invert_homogeneity {
            homogeneity >= self.homogeneity_max
        } else {
            homogeneity <= self.homogeneity_max
        }
    }
}

/// Offsets of every full patch, row-major. Remainders at the right and bottom
/// edges are dropped.
pub fn tile_grid(width: usize, height: usize, patch_size: usize) -> Vec<GridCell> {
    if patch_size == 0 {
        return Vec::new();
    }
    let (cols, rows) = (width / patch_size, height / patch_size);
    (0..rows)
        .flat_map(|row| {
            (0..cols).map(move |col| GridCell {
                row,
                col,
                x: col * patch_size,
                y: row * patch_size,
            })
        })
        .collect()
}

/// Fraction of pixels with value `>= bg_threshold`. Empty input yields 0.
pub fn homogeneity(pixels: &[u8], bg_threshold: u8) -> f64 {
    if pixels.is_empty() {
        return 0.0;
    }
    let background = pixels.iter().filter(|&&p| p >= bg_threshold).count();
    background as f64 / pixels.len() as f64
}

/// Cuts the grid, scores each patch on its raw pixels and keeps those that
/// pass the homogeneity rule. Output follows row-major grid order.
pub fn select_patches(scan: &ScanImage, config: &TilerConfig) -> Result<Vec<RawPatch>> {
    config.validate()?;
    let side = config.patch_size;
    let cells = tile_grid(scan.width, scan.height, side);
    let kept = cells
        .par_iter()
        .filter_map(|cell| {
            let pixels = scan.crop_square(cell.x, cell.y, side);
            let h = homogeneity(&pixels, config.bg_threshold);
            config.keeps(h).then(|| RawPatch {
                scan_id: scan.scan_id.clone(),
                grid_row: cell.row,
                grid_col: cell.col,
                side,
                pixels,
                homogeneity: h,
            })
        })
        .collect();
    Ok(kept)
}

/// Sets every pixel at or above `bg_threshold` to 255.
pub fn whiten_background(pixels: &mut [u8], bg_threshold: u8) {
    for p in pixels.iter_mut().filter(|p| **p >= bg_threshold) {
        *p = 255;
    }
}

/// Area-average downsampling to `resize_to x resize_to`, rounded back to
/// 8-bit levels and scaled into `[0, 1]`.
pub fn prepare(patch: &RawPatch, resize_to: usize) -> Result<PreparedPatch> {
    prepare_pixels(patch.patch_id(), patch.side, &patch.pixels, resize_to)
}

pub fn prepare_pixels(
    patch_id: impl Into<String>,
    side: usize,
    pixels: &[u8],
    resize_to: usize,
) -> Result<PreparedPatch> {
    if pixels.len() != side * side {
        return Err(Error::Shape(format!(
            "patch declares side {side} but holds {} pixels",
            pixels.len()
        )));
    }
    if resize_to == 0 || side < resize_to {
        return Err(Error::InvalidArgument(format!(
            "cannot resample a {side}x{side} patch to {resize_to}x{resize_to} (upsampling unsupported)"
        )));
    }
    let levels = area_resample(pixels, side, resize_to);
    let values = levels.into_iter().map(|l| f32::from(l) / 255.0).collect();
    PreparedPatch::new(patch_id, resize_to, values)
}

/// For each output index, the source indices it covers and their share of
/// the output cell (shares sum to 1).
fn box_weights(input: usize, output: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(input);
            (first..last)
                .filter_map(|i| {
                    let overlap = hi.min(i as f64 + 1.0) - lo.max(i as f64);
                    (overlap > 0.0).then_some((i, overlap / scale))
                })
                .collect()
        })
        .collect()
}

fn area_resample(pixels: &[u8], side: usize, out: usize) -> Vec<u8> {
    if side == out {
        return pixels.to_vec();
    }
    let weights = box_weights(side, out);
    // horizontal pass: side rows x out cols
    let mut rows = vec![0.0f64; side * out];
    for y in 0..side {
        let src = &pixels[y * side..(y + 1) * side];
        for (ox, taps) in weights.iter().enumerate() {
            rows[y * out + ox] = taps.iter().map(|&(i, w)| w * f64::from(src[i])).sum();
        }
    }
    let mut result = Vec::with_capacity(out * out);
    for taps in &weights {
        for ox in 0..out {
            let v: f64 = taps.iter().map(|&(i, w)| w * rows[i * out + ox]).sum();
            result.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    result
}

pub(crate) fn save_gray_png(path: &Path, side: usize, pixels: &[u8]) -> Result<()> {
    let img = GrayImage::from_raw(side as u32, side as u32, pixels.to_vec()).ok_or_else(|| {
        Error::Shape(format!(
            "{} pixels do not form a {side}x{side} patch",
            pixels.len()
        ))
    })?;
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a square 8-bit patch image. Returns `(side, pixels)`.
pub fn load_patch(path: &Path) -> Result<(usize, Vec<u8>)> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "patch file not found"),
        ));
    }
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_luma8();
    let (w, h) = img.dimensions();
    if w != h {
        return Err(Error::Shape(format!(
            "{}: patches must be square, got {w}x{h}",
            path.display()
        )));
    }
    Ok((w as usize, img.into_raw()))
}

/// Output of [`tile_scan`]: the kept patches and where they were written.
#[derive(Debug, Clone)]
pub struct TiledPatch {
    pub patch: RawPatch,
    pub file: PathBuf,
}

/// Full tiling step: select, whiten and write each kept patch as
/// `<scan_id>_r<row>_c<col>.png` under `out_dir`.
pub fn tile_scan(
    scan: &ScanImage,
    config: &TilerConfig,
    out_dir: &Path,
) -> Result<Vec<TiledPatch>> {
    let mut patches = select_patches(scan, config)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    patches
        .par_iter_mut()
        .map(|patch| {
            whiten_background(&mut patch.pixels, config.bg_threshold);
            let file = out_dir.join(patch.file_name());
            patch.save_png(&file)?;
            Ok(TiledPatch {
                patch: patch.clone(),
                file,
            })
        })
        .collect()
}
