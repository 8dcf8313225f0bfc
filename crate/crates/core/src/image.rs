//! Grayscale image denoising with a learned patch dictionary.
//!
//! Images hold `f64` pixels in nominal `[0, 255]` units. Noisy and
//! reconstructed intermediates may leave that range; only [`reconstruct_image`]
//! and [`write_pgm`] clamp.

use std::io::{Read, Write};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::coding::{error_budget, OmpDictionary, SignalBatch};
use crate::dictionary::{init_redundant_dct, Dictionary};
use crate::error::{GscadError, Result};
use crate::learner::{learn_from, LearnConfig, LearnReport};

pub const PIXEL_MAX: f64 = 255.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pixels: DMatrix<f64>,
}

impl GrayImage {
    /// Wraps an `H x W` pixel matrix; entries must be finite.
    pub fn new(pixels: DMatrix<f64>) -> Result<Self> {
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(GscadError::InvalidParameter(
                "image contains non-finite pixels".into(),
            ));
        }
        Ok(GrayImage { pixels })
    }

    pub fn from_fn(height: usize, width: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        GrayImage::new(DMatrix::from_fn(height, width, f))
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn pixels(&self) -> &DMatrix<f64> {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[(row, col)]
    }

    pub fn clamped(&self) -> GrayImage {
        GrayImage {
            pixels: self.pixels.map(|v| v.clamp(0.0, PIXEL_MAX)),
        }
    }

    /// Top-left `height x width` window starting at `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<GrayImage> {
        if row + height > self.height() || col + width > self.width() {
            return Err(GscadError::DimensionMismatch(format!(
                "crop {height}x{width} at ({row}, {col}) exceeds {}x{}",
                self.height(),
                self.width()
            )));
        }
        Ok(GrayImage {
            pixels: self.pixels.view((row, col), (height, width)).clone_owned(),
        })
    }
}

/// Deterministic piecewise-smooth test scene with a gradient background,
/// flat shapes with sharp edges and a striped texture region.
pub fn synthetic_scene(height: usize, width: usize) -> GrayImage {
    let (h, w) = (height as f64, width as f64);
    let radius = 0.22 * h.min(w);
    GrayImage::from_fn(height, width, |r, c| {
        let (y, x) = (r as f64, c as f64);
        let mut v = 50.0 + 110.0 * x / w + 30.0 * (y / h);
        if (y - 0.35 * h).powi(2) + (x - 0.32 * w).powi(2) <= radius * radius {
            v += 70.0;
        }
        if y > 0.6 * h && y < 0.9 * h && x > 0.1 * w && x < 0.45 * w {
            v -= 45.0;
        }
        if y > 0.55 * h && x > 0.55 * w {
            v = 120.0 + 40.0 * (2.0 * std::f64::consts::PI * (x + 0.5 * y) / 9.0).sin();
        }
        v.round().clamp(0.0, PIXEL_MAX)
    })
    .expect("scene pixels are finite")
}

// ---------------------------------------------------------------------------
// PGM I/O

fn header_error(msg: impl Into<String>) -> GscadError {
    GscadError::MalformedHeader(msg.into())
}

/// Reads the next whitespace-delimited header token, skipping `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(header_error("unexpected end of file"));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = next_token(bytes, pos)?;
    tok.parse()
        .map_err(|_| header_error(format!("{what} is not a number: {tok:?}")))
}

/// Parses a binary (`P5`) or ASCII (`P2`) PGM with maxval 255.
pub fn read_pgm<R: Read>(mut input: R) -> Result<GrayImage> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let magic = next_token(&bytes, &mut pos)?;
    let binary = match magic.as_str() {
        "P5" => true,
        "P2" => false,
        other => return Err(header_error(format!("unknown magic {other:?}"))),
    };
    let width = header_number(&bytes, &mut pos, "width")?;
    let height = header_number(&bytes, &mut pos, "height")?;
    let maxval = header_number(&bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(header_error(format!("empty image {width}x{height}")));
    }
    if maxval != 255 {
        return Err(GscadError::UnsupportedMaxval(maxval as u32));
    }

    let count = width * height;
    let mut values = Vec::with_capacity(count);
    if binary {
        // Exactly one whitespace byte separates maxval from the raster.
        pos += 1;
        let raster = bytes
            .get(pos..pos + count)
            .ok_or_else(|| header_error(format!("raster truncated: expected {count} bytes")))?;
        values.extend(raster.iter().map(|&b| f64::from(b)));
    } else {
        for i in 0..count {
            let v = header_number(&bytes, &mut pos, "pixel")
                .map_err(|_| header_error(format!("raster truncated at pixel {i}")))?;
            if v > maxval {
                return Err(header_error(format!("pixel {v} exceeds maxval")));
            }
            values.push(v as f64);
        }
    }
    // The raster is row-major.
    GrayImage::new(DMatrix::from_row_slice(height, width, &values))
}

pub fn read_pgm_file(path: &std::path::Path) -> Result<GrayImage> {
    read_pgm(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Writes a binary PGM; pixels are clamped to `[0, 255]` and rounded.
pub fn write_pgm<W: Write>(image: &GrayImage, mut out: W) -> Result<()> {
    write!(out, "P5\n{} {}\n255\n", image.width(), image.height())?;
    let mut raster = Vec::with_capacity(image.width() * image.height());
    for r in 0..image.height() {
        for c in 0..image.width() {
            raster.push(image.get(r, c).clamp(0.0, PIXEL_MAX).round() as u8);
        }
    }
    out.write_all(&raster)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Noise and quality

/// Adds i.i.d. `N(0, sigma^2)` noise to every pixel, without clamping.
pub fn add_gaussian_noise(image: &GrayImage, sigma: f64, seed: u64) -> Result<GrayImage> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(GscadError::InvalidParameter(format!(
            "sigma must be finite and nonnegative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| GscadError::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Column-major draw order.
    let pixels = image.pixels.map(|v| v + normal.sample(&mut rng));
    GrayImage::new(pixels)
}

/// `10 log10(255^2 / MSE)`; identical images give `+inf`.
pub fn psnr_image(clean: &GrayImage, recon: &GrayImage) -> Result<f64> {
    if clean.pixels.shape() != recon.pixels.shape() {
        return Err(GscadError::DimensionMismatch(format!(
            "images are {:?} and {:?}",
            clean.pixels.shape(),
            recon.pixels.shape()
        )));
    }
    let mse = (&clean.pixels - &recon.pixels).norm_squared() / clean.pixels.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PIXEL_MAX * PIXEL_MAX / mse).log10())
}

// ---------------------------------------------------------------------------
// Patches

#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    /// `patch_size^2 x N`; column `i` is the centered patch at `origins[i]`.
    pub patches: DMatrix<f64>,
    pub means: Vec<f64>,
    /// `(row, col)` of each patch's top-left pixel.
    pub origins: Vec<(usize, usize)>,
    pub patch_size: usize,
    pub stride: usize,
    pub height: usize,
    pub width: usize,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }
}

/// Origins `0, stride, 2 stride, ...` along one axis, plus the last valid
/// origin so every pixel is covered.
fn axis_origins(extent: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = extent - patch;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().expect("at least origin 0") != last {
        v.push(last);
    }
    v
}

/// Extracts every overlapping `patch_size x patch_size` patch, enumerating
/// origins column by column. Patches are vectorized column-major and stored
/// with their mean removed.
pub fn extract_patches(image: &GrayImage, patch_size: usize, stride: usize) -> Result<PatchGrid> {
    if patch_size == 0 || stride == 0 {
        return Err(GscadError::InvalidParameter(
            "patch size and stride must be positive".into(),
        ));
    }
    let (height, width) = (image.height(), image.width());
    if height < patch_size || width < patch_size {
        return Err(GscadError::ImageTooSmall {
            height,
            width,
            patch: patch_size,
        });
    }
    let rows = axis_origins(height, patch_size, stride);
    let cols = axis_origins(width, patch_size, stride);
    let origins: Vec<(usize, usize)> = cols
        .iter()
        .flat_map(|&c| rows.iter().map(move |&r| (r, c)))
        .collect();

    let m = patch_size * patch_size;
    let mut patches = DMatrix::zeros(m, origins.len());
    let mut means = Vec::with_capacity(origins.len());
    for (i, &(r0, c0)) in origins.iter().enumerate() {
        let block = image.pixels.view((r0, c0), (patch_size, patch_size));
        let mean = block.mean();
        let mut col = patches.column_mut(i);
        for (k, v) in block.iter().enumerate() {
            col[k] = v - mean;
        }
        means.push(mean);
    }
    Ok(PatchGrid {
        patches,
        means,
        origins,
        patch_size,
        stride,
        height,
        width,
    })
}

/// Overlap-averaged reconstruction without clamping.
pub fn reconstruct_unclamped(grid: &PatchGrid, patches_hat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = grid.patch_size;
    if patches_hat.shape() != (s * s, grid.len()) {
        return Err(GscadError::DimensionMismatch(format!(
            "expected {}x{} patch estimates, got {:?}",
            s * s,
            grid.len(),
            patches_hat.shape()
        )));
    }
    let mut sum = DMatrix::<f64>::zeros(grid.height, grid.width);
    let mut count = DMatrix::<f64>::zeros(grid.height, grid.width);
    for (i, &(r0, c0)) in grid.origins.iter().enumerate() {
        let mean = grid.means[i];
        let col = patches_hat.column(i);
        for dc in 0..s {
            for dr in 0..s {
                sum[(r0 + dr, c0 + dc)] += col[dc * s + dr] + mean;
                count[(r0 + dr, c0 + dc)] += 1.0;
            }
        }
    }
    Ok(sum.component_div(&count))
}

/// Adds back patch means, averages overlapping estimates uniformly and clamps
/// to `[0, 255]`.
pub fn reconstruct_image(grid: &PatchGrid, patches_hat: &DMatrix<f64>) -> Result<GrayImage> {
    let pixels = reconstruct_unclamped(grid, patches_hat)?;
    GrayImage::new(pixels.map(|v| v.clamp(0.0, PIXEL_MAX)))
}

// ---------------------------------------------------------------------------
// Denoising

/// Learner settings for patch dictionaries; the coding penalty is set per
/// image from the noise level by [`DenoiseConfig::lambda2`].
pub fn default_learn_config() -> LearnConfig {
    LearnConfig {
        outer_max_iter: 3,
        ..LearnConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseConfig {
    /// Noise standard deviation in pixel units.
    pub sigma: f64,
    pub tau: f64,
    pub patch_size: usize,
    /// Atoms in the redundant DCT start.
    pub dct_atoms: usize,
    /// Train on this many randomly chosen patches; `None` uses all.
    pub subsample: Option<usize>,
    /// Coding penalty is `lambda2_scale * max(sigma, 1) / 255` on patches
    /// scaled to unit range.
    pub lambda2_scale: f64,
    pub seed: u64,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        DenoiseConfig {
            sigma: 10.0,
            tau: 0.9,
            patch_size: 8,
            dct_atoms: 256,
            subsample: None,
            lambda2_scale: 3.0,
            seed: 0,
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(GscadError::InvalidParameter(format!(
                "sigma must be finite and nonnegative, got {}",
                self.sigma
            )));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(GscadError::InvalidParameter(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        if self.patch_size < 2 {
            return Err(GscadError::InvalidParameter(format!(
                "patch size must be at least 2, got {}",
                self.patch_size
            )));
        }
        if !(self.lambda2_scale >= 0.0) {
            return Err(GscadError::InvalidParameter(format!(
                "lambda2 scale must be nonnegative, got {}",
                self.lambda2_scale
            )));
        }
        if self.subsample == Some(0) {
            return Err(GscadError::InvalidParameter(
                "subsample must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Per-patch squared-error budget `sigma^2 F_m^{-1}(tau)` in pixel units.
    pub fn epsilon0(&self) -> Result<f64> {
        error_budget(self.sigma, self.tau, self.patch_size * self.patch_size)
    }

    /// Coding penalty for unit-range patches.
    pub fn lambda2(&self) -> f64 {
        self.lambda2_scale * self.sigma.max(1.0) / PIXEL_MAX
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseOutput {
    pub image: GrayImage,
    pub report: LearnReport,
    pub epsilon0: f64,
    pub lambda2: f64,
    pub training_patches: usize,
    /// Average number of atoms OMP used per patch.
    pub mean_atoms: f64,
}

/// Learns a dictionary on (a subset of) the noisy image's centered patches,
/// starting from a redundant DCT, then codes every patch with error-budget
/// OMP and averages the overlapping estimates.
///
/// `learn_cfg.params.lambda2` is replaced by [`DenoiseConfig::lambda2`].
pub fn denoise(noisy: &GrayImage, learn_cfg: &LearnConfig, dcfg: &DenoiseConfig) -> Result<DenoiseOutput> {
    dcfg.validate()?;
    let grid = extract_patches(noisy, dcfg.patch_size, 1)?;
    let epsilon0 = dcfg.epsilon0()?;
    let lambda2 = dcfg.lambda2();

    let training = match dcfg.subsample {
        Some(k) if k < grid.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(dcfg.seed);
            let mut idx = sample(&mut rng, grid.len(), k).into_vec();
            idx.sort_unstable();
            grid.patches.select_columns(&idx)
        }
        _ => grid.patches.clone(),
    };
    let training_patches = training.ncols();
    let signals = SignalBatch::new(training / PIXEL_MAX)?;

    let mut cfg = learn_cfg.clone();
    cfg.params.lambda2 = lambda2;
    let init = init_redundant_dct(dcfg.patch_size, dcfg.dct_atoms)?;
    let report = learn_from(&signals, init, &cfg)?;

    let (patches_hat, mean_atoms) = code_patches(&report.dictionary, &grid.patches, epsilon0)?;
    let image = reconstruct_image(&grid, &patches_hat)?;
    Ok(DenoiseOutput {
        image,
        report,
        epsilon0,
        lambda2,
        training_patches,
        mean_atoms,
    })
}

/// Error-budget OMP reconstruction of every column; also returns the mean
/// support size.
pub fn code_patches(
    dict: &Dictionary,
    patches: &DMatrix<f64>,
    epsilon0: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let omp = OmpDictionary::new(dict.atoms());
    let coded: Vec<(DVector<f64>, usize)> = (0..patches.ncols())
        .into_par_iter()
        .map(|i| {
            let y = patches.column(i).clone_owned();
            omp.error_constrained(&y, epsilon0)
                .map(|r| (dict.atoms() * &r.code, r.support.len()))
        })
        .collect::<Result<_>>()?;
    let total: usize = coded.iter().map(|(_, k)| k).sum();
    let cols: Vec<DVector<f64>> = coded.into_iter().map(|(c, _)| c).collect();
    let mean = total as f64 / cols.len().max(1) as f64;
    Ok((DMatrix::from_columns(&cols), mean))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenoiseMetrics {
    pub image: String,
    pub sigma: f64,
    pub psnr_noisy: f64,
    pub psnr_denoised: f64,
    pub p_hat: usize,
    pub seconds: f64,
}

pub fn write_metrics_csv<W: Write>(rows: &[DenoiseMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| GscadError::MalformedCsv(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs [`denoise`] on `noisy` and scores it against `clean`.
pub fn denoise_and_score(
    name: &str,
    clean: &GrayImage,
    noisy: &GrayImage,
    learn_cfg: &LearnConfig,
    dcfg: &DenoiseConfig,
) -> Result<(DenoiseOutput, DenoiseMetrics)> {
    let start = Instant::now();
    let out = denoise(noisy, learn_cfg, dcfg)?;
    let metrics = DenoiseMetrics {
        image: name.to_string(),
        sigma: dcfg.sigma,
        psnr_noisy: psnr_image(clean, noisy)?,
        psnr_denoised: psnr_image(clean, &out.image)?,
        p_hat: out.report.p_hat,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((out, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ramp(h: usize, w: usize) -> GrayImage {
        GrayImage::from_fn(h, w, |r, c| ((r * 7 + c * 13) % 256) as f64).unwrap()
    }

    #[test]
    fn pgm_binary_round_trip() {
        let img = ramp(5, 9);
        let mut buf = Vec::new();
        write_pgm(&img, &mut buf).unwrap();
        assert_eq!(read_pgm(&buf[..]).unwrap(), img);
    }

    #[test]
    fn pgm_ascii_with_comments() {
        let text = b"P2\n# a comment\n3 2\n255\n0 1 2\n# mid\n253 254 255\n";
        let img = read_pgm(&text[..]).unwrap();
        assert_eq!((img.height(), img.width()), (2, 3));
        assert_eq!(img.get(0, 2), 2.0);
        assert_eq!(img.get(1, 0), 253.0);
    }

    #[test]
    fn pgm_single_zero_pixel() {
        let img = read_pgm(&b"P5 1 1 255\n\0"[..]).unwrap();
        assert_eq!(img.get(0, 0), 0.0);
    }

    #[test]
    fn pgm_errors() {
        assert!(matches!(
            read_pgm(&b"P5\n4 4\n255\n\x01\x02"[..]),
            Err(GscadError::MalformedHeader(_))
        ));
        assert!(matches!(
            read_pgm(&b"P5\n4"[..]),
            Err(GscadError::MalformedHeader(_))
        ));
        assert!(matches!(
            read_pgm(&b"P6\n1 1\n255\n\0\0\0"[..]),
            Err(GscadError::MalformedHeader(_))
        ));
        assert!(matches!(
            read_pgm(&b"P2\n1 1\n65535\n7\n"[..]),
            Err(GscadError::UnsupportedMaxval(65535))
        ));
        assert!(matches!(
            read_pgm(&b"P2\n2 1\n255\n7\n"[..]),
            Err(GscadError::MalformedHeader(_))
        ));
    }

    #[test]
    fn write_pgm_clamps_out_of_range_pixels() {
        let img = GrayImage::from_fn(1, 3, |_, c| [-20.0, 100.4, 300.0][c]).unwrap();
        let mut buf = Vec::new();
        write_pgm(&img, &mut buf).unwrap();
        let back = read_pgm(&buf[..]).unwrap();
        assert_eq!(back.pixels().as_slice(), &[0.0, 100.0, 255.0]);
    }

    #[test]
    fn zero_noise_is_identity_and_noise_is_seeded() {
        let img = ramp(16, 16);
        assert_eq!(add_gaussian_noise(&img, 0.0, 3).unwrap(), img);
        let a = add_gaussian_noise(&img, 10.0, 3).unwrap();
        assert_eq!(a, add_gaussian_noise(&img, 10.0, 3).unwrap());
        assert_ne!(a, add_gaussian_noise(&img, 10.0, 4).unwrap());
    }

    #[test]
    fn noise_standard_deviation_matches() {
        let img = GrayImage::new(DMatrix::from_element(512, 512, 128.0)).unwrap();
        let noisy = add_gaussian_noise(&img, 10.0, 1).unwrap();
        let diff = noisy.pixels() - img.pixels();
        let sd = (diff.norm_squared() / diff.len() as f64).sqrt();
        assert!((sd - 10.0).abs() < 0.2, "sd = {sd}");
    }

    #[test]
    fn psnr_cases() {
        let img = ramp(4, 4);
        assert_eq!(psnr_image(&img, &img).unwrap(), f64::INFINITY);
        let shifted = GrayImage::new(img.pixels().add_scalar(255.0)).unwrap();
        assert_abs_diff_eq!(psnr_image(&img, &shifted).unwrap(), 0.0, epsilon = 1e-12);
        assert!(psnr_image(&img, &ramp(4, 5)).is_err());
    }

    #[test]
    fn patch_counts_and_centering() {
        let img = ramp(20, 13);
        let g = extract_patches(&img, 8, 1).unwrap();
        assert_eq!(g.len(), 13 * 6);
        assert_eq!(g.origins[0], (0, 0));
        assert_eq!(g.origins[1], (1, 0));
        for col in g.patches.column_iter() {
            assert!(col.sum().abs() <= 1e-10 * 64.0);
        }
        assert!(matches!(
            extract_patches(&img, 14, 1),
            Err(GscadError::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn single_patch_is_the_centered_image() {
        let img = ramp(8, 8);
        let g = extract_patches(&img, 8, 1).unwrap();
        assert_eq!(g.len(), 1);
        let mean = img.pixels().mean();
        assert_abs_diff_eq!(g.means[0], mean, epsilon = 1e-12);
        // Column-major vectorization.
        assert_abs_diff_eq!(g.patches[(8 * 2 + 3, 0)], img.get(3, 2) - mean, epsilon = 1e-12);
        let out = reconstruct_image(&g, &g.patches).unwrap();
        assert!((out.pixels() - img.pixels()).amax() < 1e-10);
    }

    #[test]
    fn constant_image_has_zero_patches() {
        let img = GrayImage::new(DMatrix::from_element(10, 12, 77.0)).unwrap();
        let g = extract_patches(&img, 4, 1).unwrap();
        assert!(g.patches.iter().all(|&v| v == 0.0));
        assert!(g.means.iter().all(|&m| m == 77.0));
        let zeros = DMatrix::zeros(16, g.len());
        assert_eq!(reconstruct_image(&g, &zeros).unwrap(), img);
    }

    #[test]
    fn strided_extraction_covers_every_pixel() {
        let img = ramp(11, 14);
        let g = extract_patches(&img, 4, 3).unwrap();
        let back = reconstruct_unclamped(&g, &g.patches).unwrap();
        assert!((back - img.pixels()).amax() < 1e-10);
        assert!(g.origins.iter().any(|&(r, _)| r == 7));
        assert!(g.origins.iter().any(|&(_, c)| c == 10));
    }

    #[test]
    fn reconstruct_rejects_wrong_shape() {
        let g = extract_patches(&ramp(9, 9), 8, 1).unwrap();
        assert!(matches!(
            reconstruct_image(&g, &DMatrix::zeros(64, 3)),
            Err(GscadError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn synthetic_scene_is_integral_and_in_range() {
        let img = synthetic_scene(64, 64);
        assert!(img
            .pixels()
            .iter()
            .all(|&v| (0.0..=255.0).contains(&v) && v.fract() == 0.0));
        assert_eq!(img, synthetic_scene(64, 64));
    }

    #[test]
    fn denoise_config_budget_and_penalty() {
        let d = DenoiseConfig::default();
        // 100 * F_64^{-1}(0.9)
        assert_abs_diff_eq!(d.epsilon0().unwrap(), 7885.96, epsilon = 0.01);
        assert_abs_diff_eq!(d.lambda2(), 30.0 / 255.0, epsilon = 1e-15);
        let quiet = DenoiseConfig {
            sigma: 0.0,
            ..d.clone()
        };
        assert_abs_diff_eq!(quiet.epsilon0().unwrap(), 64e-8, epsilon = 1e-20);
        assert!(DenoiseConfig { tau: 1.0, ..d.clone() }.validate().is_err());
        assert!(DenoiseConfig { subsample: Some(0), ..d }.validate().is_err());
    }

    #[test]
    fn metrics_csv_header() {
        let rows = [DenoiseMetrics {
            image: "scene".into(),
            sigma: 10.0,
            psnr_noisy: 28.1,
            psnr_denoised: 33.0,
            p_hat: 200,
            seconds: 1.5,
        }];
        let mut buf = Vec::new();
        write_metrics_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "image,sigma,psnr_noisy,psnr_denoised,p_hat,seconds\nscene,10.0,28.1,33.0,200,1.5\n"
        );
    }
}
