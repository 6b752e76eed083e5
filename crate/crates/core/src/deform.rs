//! Training-set deformation: elastic distortion plus rotation-or-shear and
//! anisotropic scaling, resampled bilinearly onto a 29x29 grid.
//!
//! All geometry uses pixel units with `x` = column, `y` = row, and the image
//! center at (14, 14). A [`DisplacementField`] maps every target pixel `p` to
//! the source location `p + field(p)`; pixels sampled from outside the image
//! read the background value -1.
//!
//! Per-image RNG draw order (part of the reproducibility contract):
//! sigma, alpha, rotation/shear coin, angle, gamma, sx, sy, then 841 dx noise
//! values and 841 dy noise values in row-major order.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::Engine;
use crate::mnist_io::{normalize_pixel, Dataset, Label, RawImage, COLS, ROWS};
use crate::rng::{uniform, Purpose, Streams};

pub const NORM_SIDE: usize = 29;
pub const NORM_PIXELS: usize = NORM_SIDE * NORM_SIDE;
pub const CENTER: f64 = 14.0;
pub const BACKGROUND: f32 = -1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeformError {
    #[error("gaussian sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("gaussian kernel size must be odd and at least 3, got {0}")]
    EvenSize(usize),
    #[error("invalid deformation parameters: {0}")]
    InvalidParams(String),
}

/// A 29x29 network input with values in [-1, 1], row-major.
#[derive(Clone, PartialEq)]
pub struct NormImage(Box<[f32; NORM_PIXELS]>);

impl NormImage {
    pub fn background() -> Self {
        NormImage(Box::new([BACKGROUND; NORM_PIXELS]))
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut img = Self::background();
        for y in 0..NORM_SIDE {
            for x in 0..NORM_SIDE {
                img.0[y * NORM_SIDE + x] = f(y, x);
            }
        }
        img
    }

    pub fn from_slice(v: &[f32]) -> Option<Self> {
        <[f32; NORM_PIXELS]>::try_from(v).ok().map(|a| NormImage(Box::new(a)))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0[..]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.0[row * NORM_SIDE + col]
    }

    /// Value at integer coordinates, background outside the grid.
    #[inline]
    fn sample_or_background(&self, row: i64, col: i64) -> f32 {
        if (0..NORM_SIDE as i64).contains(&row) && (0..NORM_SIDE as i64).contains(&col) {
            self.0[row as usize * NORM_SIDE + col as usize]
        } else {
            BACKGROUND
        }
    }

    /// Sum of `pixel - (-1)`, i.e. the amount of ink above background.
    pub fn mass(&self) -> f64 {
        self.0.iter().map(|&v| v as f64 + 1.0).sum()
    }
}

impl std::fmt::Debug for NormImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "NormImage(mass {:.3})", self.mass())
    }
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + t * (b - a)
}

/// Source coordinate on the 28-pixel axis for output index `u` of the
/// 29-pixel axis. Corners map to corners, so output pixel 14 sits exactly
/// between source pixels 13 and 14.
#[inline]
pub fn upscale_source_coord(u: usize) -> f64 {
    u as f64 * (ROWS - 1) as f64 / (NORM_SIDE - 1) as f64
}

/// Normalizes and bilinearly resamples a 28x28 digit onto 29x29.
pub fn upscale_28_to_29(img: &RawImage) -> NormImage {
    let norm: Vec<f32> = img.pixels().iter().map(|&p| normalize_pixel(p)).collect();
    let at = |r: usize, c: usize| norm[r * COLS + c];
    NormImage::from_fn(|y, x| {
        let sy = upscale_source_coord(y);
        let sx = upscale_source_coord(x);
        let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(ROWS - 1), (x0 + 1).min(COLS - 1));
        let (fy, fx) = ((sy - y0 as f64) as f32, (sx - x0 as f64) as f32);
        let top = lerp(at(y0, x0), at(y0, x1), fx);
        let bottom = lerp(at(y1, x0), at(y1, x1), fx);
        lerp(top, bottom, fy).clamp(-1.0, 1.0)
    })
}

/// Normalized, separable Gaussian sampled at integer offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    size: usize,
    taps: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(sigma: f64, size: usize) -> Result<Self, DeformError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(DeformError::InvalidSigma(sigma));
        }
        if size % 2 == 0 || size < 3 {
            return Err(DeformError::EvenSize(size));
        }
        let half = (size / 2) as f64;
        let raw: Vec<f64> = (0..size)
            .map(|k| {
                let d = k as f64 - half;
                (-d * d / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        Ok(Self { size, taps: raw.into_iter().map(|v| v / total).collect() })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// One-dimensional taps; each sums to one.
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Entry of the 2-D kernel.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.taps[row] * self.taps[col]
    }

    /// The full 2-D kernel, row-major.
    pub fn to_2d(&self) -> Vec<f64> {
        (0..self.size)
            .flat_map(|r| (0..self.size).map(move |c| (r, c)))
            .map(|(r, c)| self.at(r, c))
            .collect()
    }

    /// Convolves a 29x29 grid with zero padding outside the grid.
    pub fn convolve_zero_padded(&self, grid: &[f64]) -> Vec<f64> {
        let n = NORM_SIDE as i64;
        let half = (self.size / 2) as i64;
        let mut rows = vec![0.0; NORM_PIXELS];
        for y in 0..n {
            for x in 0..n {
                let mut acc = 0.0;
                for (k, &t) in self.taps.iter().enumerate() {
                    let sx = x + k as i64 - half;
                    if (0..n).contains(&sx) {
                        acc += t * grid[(y * n + sx) as usize];
                    }
                }
                rows[(y * n + x) as usize] = acc;
            }
        }
        let mut out = vec![0.0; NORM_PIXELS];
        for y in 0..n {
            for x in 0..n {
                let mut acc = 0.0;
                for (k, &t) in self.taps.iter().enumerate() {
                    let sy = y + k as i64 - half;
                    if (0..n).contains(&sy) {
                        acc += t * rows[(sy * n + x) as usize];
                    }
                }
                out[(y * n + x) as usize] = acc;
            }
        }
        out
    }
}

/// Every tunable of the deformation pipeline. Ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeformParams {
    /// Gaussian smoothing std of the elastic field, pixels.
    pub sigma_range: [f64; 2],
    /// Elastic magnitude, pixels.
    pub alpha_range: [f64; 2],
    /// Max rotation / shear angle in degrees for most digits.
    pub beta_default: f64,
    /// Max rotation / shear angle in degrees for digits 1 and 7.
    pub beta_reduced: f64,
    /// Scaling range in percent.
    pub gamma_range: [f64; 2],
    pub kernel_size: usize,
}

impl Default for DeformParams {
    fn default() -> Self {
        Self {
            sigma_range: [5.0, 6.0],
            alpha_range: [36.0, 38.0],
            beta_default: 15.0,
            beta_reduced: 7.5,
            gamma_range: [15.0, 20.0],
            kernel_size: 21,
        }
    }
}

impl DeformParams {
    /// Parameters that leave every image untouched (apart from upscaling).
    pub fn identity() -> Self {
        Self {
            alpha_range: [0.0, 0.0],
            beta_default: 0.0,
            beta_reduced: 0.0,
            gamma_range: [0.0, 0.0],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DeformError> {
        let range = |name: &str, r: [f64; 2], min: f64| {
            if !(r[0].is_finite() && r[1].is_finite()) || r[0] > r[1] || r[0] < min {
                Err(DeformError::InvalidParams(format!("{name} range {r:?} must satisfy {min} <= lo <= hi")))
            } else {
                Ok(())
            }
        };
        range("alpha", self.alpha_range, 0.0)?;
        range("gamma", self.gamma_range, 0.0)?;
        range("sigma", self.sigma_range, 0.0)?;
        if self.sigma_range[0] <= 0.0 {
            return Err(DeformError::InvalidSigma(self.sigma_range[0]));
        }
        if self.gamma_range[1] >= 100.0 {
            return Err(DeformError::InvalidParams("gamma must stay below 100 percent".into()));
        }
        for (name, b) in [("beta_default", self.beta_default), ("beta_reduced", self.beta_reduced)] {
            if !(0.0..90.0).contains(&b) {
                return Err(DeformError::InvalidParams(format!("{name} = {b} must be in [0, 90) degrees")));
            }
        }
        if self.kernel_size % 2 == 0 || self.kernel_size < 3 {
            return Err(DeformError::EvenSize(self.kernel_size));
        }
        Ok(())
    }

    /// Max angle for a digit: 1 and 7 are rotated and sheared less.
    pub fn beta_for(&self, digit: Label) -> f64 {
        match digit.digit() {
            1 | 7 => self.beta_reduced,
            _ => self.beta_default,
        }
    }
}

/// Per-pixel source offsets in pixel units.
#[derive(Clone, PartialEq)]
pub struct DisplacementField {
    pub dx: Vec<f32>,
    pub dy: Vec<f32>,
}

impl DisplacementField {
    pub fn zero() -> Self {
        Self { dx: vec![0.0; NORM_PIXELS], dy: vec![0.0; NORM_PIXELS] }
    }

    pub fn uniform(dx: f32, dy: f32) -> Self {
        Self { dx: vec![dx; NORM_PIXELS], dy: vec![dy; NORM_PIXELS] }
    }

    /// Largest absolute component over both grids.
    pub fn max_abs(&self) -> f32 {
        self.dx.iter().chain(&self.dy).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.dx.iter().chain(&self.dy).all(|v| v.is_finite())
    }
}

impl std::fmt::Debug for DisplacementField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DisplacementField(max |d| = {})", self.max_abs())
    }
}

/// Smoothed uniform noise scaled by `alpha`. Each component is a convex
/// combination of values in [-1, 1], so `|d| <= alpha`.
pub fn sample_elastic_field(
    rng: &mut impl Rng,
    sigma: f64,
    alpha: f64,
    kernel_size: usize,
) -> Result<DisplacementField, DeformError> {
    let kernel = GaussianKernel::new(sigma, kernel_size)?;
    let mut noise = || -> Vec<f64> { (0..NORM_PIXELS).map(|_| uniform(rng, -1.0, 1.0)).collect() };
    let nx = noise();
    let ny = noise();
    let scale = |grid: Vec<f64>| -> Vec<f32> {
        kernel
            .convolve_zero_padded(&grid)
            .into_iter()
            .map(|v| (alpha * v.clamp(-1.0, 1.0)) as f32)
            .collect()
    };
    Ok(DisplacementField { dx: scale(nx), dy: scale(ny) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AffineMode {
    Rotation,
    Shear,
}

/// One random affine draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineSample {
    pub mode: AffineMode,
    pub angle_deg: f64,
    pub sx: f64,
    pub sy: f64,
}

impl AffineSample {
    pub fn identity() -> Self {
        Self { mode: AffineMode::Rotation, angle_deg: 0.0, sx: 1.0, sy: 1.0 }
    }

    /// Maps an offset from the center: scale first, then rotate or shear
    /// horizontally (`x += tan(angle) * y`).
    pub fn apply(&self, dx: f64, dy: f64) -> (f64, f64) {
        let (u, v) = (self.sx * dx, self.sy * dy);
        let t = self.angle_deg.to_radians();
        match self.mode {
            AffineMode::Rotation => {
                let (s, c) = t.sin_cos();
                (c * u - s * v, s * u + c * v)
            }
            AffineMode::Shear => (u + t.tan() * v, v),
        }
    }
}

/// Fair coin between rotation and shear, angle uniform in `[-beta, beta]`,
/// `gamma` uniform in its range, then `sx` and `sy` independently uniform in
/// `[1 - gamma/100, 1 + gamma/100]`.
pub fn sample_affine(rng: &mut impl Rng, params: &DeformParams, digit: Label) -> AffineSample {
    let mode = if rng.random::<bool>() { AffineMode::Shear } else { AffineMode::Rotation };
    let beta = params.beta_for(digit);
    let angle_deg = uniform(rng, -beta, beta);
    let gamma = uniform(rng, params.gamma_range[0], params.gamma_range[1]) / 100.0;
    let sx = uniform(rng, 1.0 - gamma, 1.0 + gamma);
    let sy = uniform(rng, 1.0 - gamma, 1.0 + gamma);
    AffineSample { mode, angle_deg, sx, sy }
}

/// Sums the affine offset and the elastic offset at every target pixel, so
/// the image is resampled exactly once.
pub fn compose_warp(affine: &AffineSample, elastic: &DisplacementField) -> DisplacementField {
    let mut out = DisplacementField::zero();
    for y in 0..NORM_SIDE {
        for x in 0..NORM_SIDE {
            let i = y * NORM_SIDE + x;
            let (ox, oy) = (x as f64 - CENTER, y as f64 - CENTER);
            let (mx, my) = affine.apply(ox, oy);
            out.dx[i] = ((mx - ox) + elastic.dx[i] as f64) as f32;
            out.dy[i] = ((my - oy) + elastic.dy[i] as f64) as f32;
        }
    }
    out
}

/// `out(p)` = bilinear sample of `img` at `p + field(p)`.
pub fn warp_bilinear(img: &NormImage, field: &DisplacementField) -> NormImage {
    NormImage::from_fn(|y, x| {
        let i = y * NORM_SIDE + x;
        let sx = x as f32 + field.dx[i];
        let sy = y as f32 + field.dy[i];
        let (fx0, fy0) = (sx.floor(), sy.floor());
        let (tx, ty) = (sx - fx0, sy - fy0);
        let (x0, y0) = (fx0 as i64, fy0 as i64);
        let top = lerp(img.sample_or_background(y0, x0), img.sample_or_background(y0, x0 + 1), tx);
        let bottom = lerp(img.sample_or_background(y0 + 1, x0), img.sample_or_background(y0 + 1, x0 + 1), tx);
        lerp(top, bottom, ty).clamp(-1.0, 1.0)
    })
}

/// The full per-image pipeline: upscale, draw sigma and alpha, draw the
/// affine part, draw the elastic field, compose, warp.
pub fn deform_image(rng: &mut impl Rng, img: &RawImage, digit: Label, params: &DeformParams) -> NormImage {
    let base = upscale_28_to_29(img);
    let sigma = uniform(rng, params.sigma_range[0], params.sigma_range[1]);
    let alpha = uniform(rng, params.alpha_range[0], params.alpha_range[1]);
    let affine = sample_affine(rng, params, digit);
    let elastic = sample_elastic_field(rng, sigma, alpha, params.kernel_size)
        .expect("deformation parameters are validated before use");
    warp_bilinear(&base, &compose_warp(&affine, &elastic))
}

/// One fresh deformation of every training image. Image `i` of epoch `e`
/// uses substream `(Deform, e, i)`, so the result does not depend on how
/// the work is spread over lanes.
pub fn deform_epoch(
    streams: &Streams,
    epoch: u64,
    train: &Dataset,
    params: &DeformParams,
    engine: &Engine,
) -> Result<Vec<(NormImage, Label)>, DeformError> {
    params.validate()?;
    Ok(engine.map_indexed(train.len(), |i| {
        let (img, label) = train.get(i);
        let mut rng = streams.stream(Purpose::Deform, epoch, i as u64);
        (deform_image(&mut rng, img, label, params), label)
    }))
}

/// Upscaled, un-deformed copies of every image.
pub fn upscale_all(data: &Dataset, engine: &Engine) -> Vec<(NormImage, Label)> {
    engine.map_indexed(data.len(), |i| {
        let (img, label) = data.get(i);
        (upscale_28_to_29(img), label)
    })
}
