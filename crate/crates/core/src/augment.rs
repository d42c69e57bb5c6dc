//! Seeded augmentation plans and their application.
//!
//! A plan fixes every random choice for one output image: the illuminant
//! drawn from the bank, a gamma exponent, and affine and elastic geometry.
//! Plans are a pure function of `(seed, item index)`, so batch runs give the
//! same bytes whatever the thread schedule.
//!
//! Transform order: color cast, gamma, affine (scale, rotation about the
//! center, translation), flips, elastic warp.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bank::IlluminantBank;
use crate::color::{apply_gamma, von_kries_cast, von_kries_correct, Illuminant, ImageBuffer};
use crate::constancy::estimate_illuminant;
use crate::error::{Error, Result};
use crate::filter::{gaussian_smooth, reflect_index};
use crate::metrics::{BinaryMask, ProbMap};

pub const DEFAULT_CROP_MARGIN: f64 = 0.15;
pub const DEFAULT_TTA_COUNT: usize = 8;
const GAMMA_MAX_ATTEMPTS: usize = 10_000;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-item seed: `mix64(seed ^ mix64(index))`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index))
}

pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}

/// Normal(mean, stddev) truncated to `(low, high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSamplerConfig {
    pub mean: f64,
    pub stddev: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for GammaSamplerConfig {
    fn default() -> Self {
        Self { mean: 1.0, stddev: 0.1, low: 0.0, high: 2.0 }
    }
}

impl GammaSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.low < self.mean
            && self.mean < self.high
            && self.stddev > 0.0
            && self.stddev.is_finite()
            && self.low >= 0.0
            && self.high <= 2.0;
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "gamma sampler needs 0 <= low < mean < high <= 2 and stddev > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

pub fn sample_gamma<R: Rng + ?Sized>(cfg: &GammaSamplerConfig, rng: &mut R) -> Result<f64> {
    cfg.validate()?;
    let normal = Normal::new(cfg.mean, cfg.stddev)
        .map_err(|e| Error::InvalidConfig(format!("gamma sampler: {e}")))?;
    for _ in 0..GAMMA_MAX_ATTEMPTS {
        let g = normal.sample(rng);
        if g > cfg.low && g <= cfg.high {
            return Ok(g);
        }
    }
    Err(Error::SamplerExhausted(GAMMA_MAX_ATTEMPTS))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricConfig {
    /// Rotation drawn uniformly from `±rotation_range` degrees.
    pub rotation_range: f64,
    pub flip_h: f64,
    pub flip_v: f64,
    /// Translation per axis, uniform in `±translate_frac · min(H, W)`.
    pub translate_frac: f64,
    /// Scale drawn log-uniformly from this interval.
    pub scale_range: (f64, f64),
    pub elastic_alpha: f64,
    pub elastic_sigma: f64,
}

impl Default for GeometricConfig {
    fn default() -> Self {
        Self {
            rotation_range: 45.0,
            flip_h: 0.5,
            flip_v: 0.5,
            translate_frac: 0.1,
            scale_range: (0.8, 1.25),
            elastic_alpha: 10.0,
            elastic_sigma: 4.0,
        }
    }
}

impl GeometricConfig {
    /// No geometric change at all.
    pub fn identity() -> Self {
        Self {
            rotation_range: 0.0,
            flip_h: 0.0,
            flip_v: 0.0,
            translate_frac: 0.0,
            scale_range: (1.0, 1.0),
            elastic_alpha: 0.0,
            elastic_sigma: 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.rotation_range >= 0.0 && self.rotation_range <= 180.0) {
            return bad(format!("rotation range {} not in [0, 180]", self.rotation_range));
        }
        for p in [self.flip_h, self.flip_v] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("flip probability {p} not in [0, 1]"));
            }
        }
        if !(self.translate_frac >= 0.0 && self.translate_frac <= 1.0) {
            return bad(format!("translate fraction {} not in [0, 1]", self.translate_frac));
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("scale range ({lo}, {hi}) must be positive and ordered"));
        }
        if !(self.elastic_alpha >= 0.0 && self.elastic_alpha.is_finite()) {
            return bad(format!("elastic alpha {} must be >= 0", self.elastic_alpha));
        }
        if self.elastic_alpha > 0.0 && !(self.elastic_sigma > 0.0 && self.elastic_sigma.is_finite()) {
            return bad(format!("elastic sigma {} must be > 0", self.elastic_sigma));
        }
        Ok(())
    }
}

/// One fully determined augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub illuminant: Illuminant,
    pub gamma: f64,
    /// Degrees, clockwise as displayed (x right, y down).
    pub rotation: f64,
    pub flip_h: bool,
    pub flip_v: bool,
    /// Fractions of `min(H, W)`; converted to pixels when applied.
    pub translation: (f64, f64),
    pub scale: f64,
    pub elastic_alpha: f64,
    pub elastic_sigma: f64,
    pub elastic_field_seed: u64,
}

impl AugmentationPlan {
    pub fn identity() -> Self {
        Self {
            illuminant: Illuminant::NEUTRAL,
            gamma: 1.0,
            rotation: 0.0,
            flip_h: false,
            flip_v: false,
            translation: (0.0, 0.0),
            scale: 1.0,
            elastic_alpha: 0.0,
            elastic_sigma: 4.0,
            elastic_field_seed: 0,
        }
    }

    fn has_affine(&self) -> bool {
        self.rotation != 0.0 || self.scale != 1.0 || self.translation != (0.0, 0.0)
    }

    fn has_elastic(&self) -> bool {
        self.elastic_alpha != 0.0
    }
}

fn symmetric(u: f64, range: f64) -> f64 {
    if range == 0.0 { 0.0 } else { (2.0 * u - 1.0) * range }
}

/// Draws, from the item RNG and in this order: illuminant, gamma (when
/// enabled), rotation, horizontal flip, vertical flip, x and y translation,
/// scale, elastic field seed. A disabled gamma sampler leaves γ = 1.
pub fn make_plan(
    bank: &IlluminantBank,
    gamma_cfg: Option<&GammaSamplerConfig>,
    geo_cfg: &GeometricConfig,
    seed: u64,
    image_index: u64,
) -> Result<AugmentationPlan> {
    geo_cfg.validate()?;
    let mut rng = item_rng(seed, image_index);
    let illuminant = bank.sample(&mut rng)?;
    let gamma = match gamma_cfg {
        Some(cfg) => sample_gamma(cfg, &mut rng)?,
        None => 1.0,
    };
    let rotation = symmetric(rng.random::<f64>(), geo_cfg.rotation_range);
    let flip_h = rng.random::<f64>() < geo_cfg.flip_h;
    let flip_v = rng.random::<f64>() < geo_cfg.flip_v;
    let tx = symmetric(rng.random::<f64>(), geo_cfg.translate_frac);
    let ty = symmetric(rng.random::<f64>(), geo_cfg.translate_frac);
    let u: f64 = rng.random();
    let (lo, hi) = geo_cfg.scale_range;
    let scale = if lo == hi { lo } else { (lo.ln() + u * (hi.ln() - lo.ln())).exp() };
    let elastic_field_seed = rng.next_u64();
    Ok(AugmentationPlan {
        illuminant,
        gamma,
        rotation,
        flip_h,
        flip_v,
        translation: (tx, ty),
        scale,
        elastic_alpha: geo_cfg.elastic_alpha,
        elastic_sigma: geo_cfg.elastic_sigma,
        elastic_field_seed,
    })
}

/// Source coordinate for each output pixel, row-major.
struct Warp {
    width: usize,
    height: usize,
    coords: Vec<(f64, f64)>,
}

impl Warp {
    fn affine(width: usize, height: usize, plan: &AugmentationPlan) -> Self {
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        let unit = width.min(height) as f64;
        let (tx, ty) = (plan.translation.0 * unit, plan.translation.1 * unit);
        let (sin, cos) = plan.rotation.to_radians().sin_cos();
        let mut coords = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                // inverse of p' = c + s·R(θ)(p − c) + t
                let dx = x as f64 - cx - tx;
                let dy = y as f64 - cy - ty;
                let sx = (cos * dx + sin * dy) / plan.scale + cx;
                let sy = (-sin * dx + cos * dy) / plan.scale + cy;
                coords.push((sx, sy));
            }
        }
        Self { width, height, coords }
    }

    /// Displacement field: uniform noise in [-1, 1] per pixel and axis,
    /// Gaussian-smoothed, scaled by alpha.
    fn elastic(width: usize, height: usize, plan: &AugmentationPlan) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.elastic_field_seed);
        let n = width * height;
        let noise_x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let noise_y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let fx = gaussian_smooth(&noise_x, width, height, plan.elastic_sigma);
        let fy = gaussian_smooth(&noise_y, width, height, plan.elastic_sigma);
        let coords = (0..n)
            .map(|i| {
                let (x, y) = ((i % width) as f64, (i / width) as f64);
                (x + plan.elastic_alpha * fx[i], y + plan.elastic_alpha * fy[i])
            })
            .collect();
        Self { width, height, coords }
    }

    fn bilinear(&self, img: &ImageBuffer) -> ImageBuffer {
        let (w, h) = (self.width, self.height);
        let src = img.data();
        let mut out = Vec::with_capacity(w * h * 3);
        for &(x, y) in &self.coords {
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = (x - x0, y - y0);
            let xa = reflect_index(x0 as isize, w);
            let xb = reflect_index(x0 as isize + 1, w);
            let ya = reflect_index(y0 as isize, h);
            let yb = reflect_index(y0 as isize + 1, h);
            let (ia, ib, ic, id) = (
                (ya * w + xa) * 3,
                (ya * w + xb) * 3,
                (yb * w + xa) * 3,
                (yb * w + xb) * 3,
            );
            for c in 0..3 {
                let top = src[ia + c] * (1.0 - fx) + src[ib + c] * fx;
                let bottom = src[ic + c] * (1.0 - fx) + src[id + c] * fx;
                out.push(crate::color::clip(top * (1.0 - fy) + bottom * fy));
            }
        }
        ImageBuffer::from_parts_unchecked(w, h, out, img.encoding())
    }

    fn nearest(&self, mask: &BinaryMask) -> BinaryMask {
        let (w, h) = (self.width, self.height);
        let data = self
            .coords
            .iter()
            .map(|&(x, y)| {
                let xi = reflect_index(x.round() as isize, w);
                let yi = reflect_index(y.round() as isize, h);
                mask.get(xi, yi)
            })
            .collect();
        BinaryMask::new(w, h, data).expect("warp preserves dimensions")
    }
}

fn flip_image(img: &ImageBuffer, flip_h: bool, flip_v: bool) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        let sy = if flip_v { h - 1 - y } else { y };
        for x in 0..w {
            let sx = if flip_h { w - 1 - x } else { x };
            out.extend(img.pixel(sx, sy));
        }
    }
    ImageBuffer::from_parts_unchecked(w, h, out, img.encoding())
}

fn flip_mask(mask: &BinaryMask, flip_h: bool, flip_v: bool) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    BinaryMask::from_fn(w, h, |x, y| {
        mask.get(if flip_h { w - 1 - x } else { x }, if flip_v { h - 1 - y } else { y })
    })
    .expect("flip preserves dimensions")
}

/// Geometric part of a plan on an image (bilinear, mirrored borders).
pub fn transform_image(img: &ImageBuffer, plan: &AugmentationPlan) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    if plan.has_affine() {
        out = Warp::affine(w, h, plan).bilinear(&out);
    }
    if plan.flip_h || plan.flip_v {
        out = flip_image(&out, plan.flip_h, plan.flip_v);
    }
    if plan.has_elastic() {
        out = Warp::elastic(w, h, plan).bilinear(&out);
    }
    out
}

/// Geometric part of a plan on a mask (nearest neighbour).
pub fn transform_mask(mask: &BinaryMask, plan: &AugmentationPlan) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut out = mask.clone();
    if plan.has_affine() {
        out = Warp::affine(w, h, plan).nearest(&out);
    }
    if plan.flip_h || plan.flip_v {
        out = flip_mask(&out, plan.flip_h, plan.flip_v);
    }
    if plan.has_elastic() {
        out = Warp::elastic(w, h, plan).nearest(&out);
    }
    out
}

pub fn apply_plan(img_wb: &ImageBuffer, plan: &AugmentationPlan) -> Result<ImageBuffer> {
    let cast = von_kries_cast(img_wb, &plan.illuminant);
    let graded = apply_gamma(&cast, plan.gamma)?;
    Ok(transform_image(&graded, plan))
}

pub fn apply_plan_with_mask(
    img_wb: &ImageBuffer,
    mask: &BinaryMask,
    plan: &AugmentationPlan,
) -> Result<(ImageBuffer, BinaryMask)> {
    if mask.width() != img_wb.width() || mask.height() != img_wb.height() {
        return Err(Error::ShapeMismatch(format!(
            "mask {}x{} vs image {}x{}",
            mask.width(),
            mask.height(),
            img_wb.width(),
            img_wb.height()
        )));
    }
    Ok((apply_plan(img_wb, plan)?, transform_mask(mask, plan)))
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }
}

pub fn tight_bbox(mask: &BinaryMask) -> Result<BBox> {
    let mut bb: Option<BBox> = None;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                let b = bb.get_or_insert(BBox { x0: x, y0: y, x1: x, y1: y });
                b.x0 = b.x0.min(x);
                b.x1 = b.x1.max(x);
                b.y1 = y;
            }
        }
    }
    bb.ok_or(Error::EmptyMask)
}

/// Tight box grown by `margin · size` in total per dimension
/// (`ceil(margin · size / 2)` on each side), clamped to the image.
pub fn expanded_bbox(mask: &BinaryMask, margin: f64) -> Result<BBox> {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::InvalidConfig(format!("margin {margin} must be >= 0")));
    }
    let b = tight_bbox(mask)?;
    // absorb rounding noise such as 0.15 * 20 / 2 = 1.5000000000000002
    let pad = |size: usize| (margin * size as f64 / 2.0 - 1e-9).ceil().max(0.0) as usize;
    let (px, py) = (pad(b.width()), pad(b.height()));
    Ok(BBox {
        x0: b.x0.saturating_sub(px),
        y0: b.y0.saturating_sub(py),
        x1: (b.x1 + px).min(mask.width() - 1),
        y1: (b.y1 + py).min(mask.height() - 1),
    })
}

pub fn crop(img: &ImageBuffer, b: &BBox) -> ImageBuffer {
    let mut out = Vec::with_capacity(b.width() * b.height() * 3);
    for y in b.y0..=b.y1 {
        let start = (y * img.width() + b.x0) * 3;
        out.extend_from_slice(&img.data()[start..start + b.width() * 3]);
    }
    ImageBuffer::from_parts_unchecked(b.width(), b.height(), out, img.encoding())
}

pub fn crop_bbox(img: &ImageBuffer, mask: &BinaryMask, margin: f64) -> Result<ImageBuffer> {
    if mask.width() != img.width() || mask.height() != img.height() {
        return Err(Error::ShapeMismatch(format!(
            "mask {}x{} vs image {}x{}",
            mask.width(),
            mask.height(),
            img.width(),
            img.height()
        )));
    }
    Ok(crop(img, &expanded_bbox(mask, margin)?))
}

/// Median of one pixel's values; even counts average the middle two.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

pub fn tta_median(preds: &[ProbMap]) -> Result<ProbMap> {
    let first = preds.first().ok_or(Error::EmptyInput)?;
    if let Some(m) = preds.iter().find(|m| m.width != first.width || m.height != first.height) {
        return Err(Error::ShapeMismatch(format!(
            "map {}x{} vs {}x{}",
            m.width, m.height, first.width, first.height
        )));
    }
    let mut column = vec![0.0; preds.len()];
    let data = (0..first.data.len())
        .map(|i| {
            for (v, m) in column.iter_mut().zip(preds) {
                *v = m.data[i];
            }
            median(&mut column)
        })
        .collect();
    Ok(ProbMap { width: first.width, height: first.height, data })
}

/// White-balances `img` with the bank's estimator, then returns `count`
/// versions: index 0 is the white-balanced image itself, index `i ≥ 1` is
/// cast with an illuminant drawn from the item RNG `(seed, i)`.
pub fn tta_expand(img: &ImageBuffer, bank: &IlluminantBank, count: usize, seed: u64) -> Result<Vec<ImageBuffer>> {
    if count == 0 {
        return Err(Error::InvalidConfig("TTA count must be >= 1".into()));
    }
    let tau = estimate_illuminant(img, bank.estimator())?;
    let wb = von_kries_correct(img, &tau)?;
    let mut out = Vec::with_capacity(count);
    for i in 1..count {
        let cast_with = bank.sample(&mut item_rng(seed, i as u64))?;
        out.push(von_kries_cast(&wb, &cast_with));
    }
    out.insert(0, wb);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::BankEntry;
    use crate::color::Encoding;
    use crate::constancy::EstimatorConfig;

    fn bank(n: usize) -> IlluminantBank {
        let entries = (0..n)
            .map(|i| {
                let t = i as f64 / n.max(1) as f64;
                BankEntry {
                    id: format!("e{i}"),
                    illuminant: Illuminant::from_rgb(0.4 + t, 0.5, 0.9 - 0.5 * t).unwrap(),
                }
            })
            .collect();
        IlluminantBank::new(entries, EstimatorConfig::default()).unwrap()
    }

    fn gradient_image(w: usize, h: usize) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, Encoding::EncodedSRGB, |x, y| {
            let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
            [0.1 + 0.6 * u, 0.2 + 0.5 * v, 0.3 + 0.3 * (u * v)]
        })
        .unwrap()
    }

    #[test]
    fn seed_mixing_is_fixed() {
        // SplitMix64 reference outputs for state 0 and 1
        assert_eq!(mix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(mix64(1), 0x910A_2DEC_8902_5CC1);
        assert_ne!(derive_seed(0, 0), derive_seed(0, 1));
    }

    #[test]
    fn gamma_draws_are_bounded_and_reproducible() {
        let cfg = GammaSamplerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws: Vec<f64> = (0..10_000).map(|_| sample_gamma(&cfg, &mut rng).unwrap()).collect();
        assert!(draws.iter().all(|&g| g > 0.0 && g <= 2.0));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 1.0).abs() < 0.005, "mean {mean}");
        let again: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            (0..10_000).map(|_| sample_gamma(&cfg, &mut rng).unwrap()).collect()
        };
        assert_eq!(draws, again);
    }

    #[test]
    fn gamma_truncation_rejects_tails() {
        // with a tight window, every draw must land inside it
        let cfg = GammaSamplerConfig { mean: 1.0, stddev: 0.5, low: 0.9, high: 1.1 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let g = sample_gamma(&cfg, &mut rng).unwrap();
            assert!(g > 0.9 && g <= 1.1);
        }
        let bad = GammaSamplerConfig { stddev: 0.0, ..GammaSamplerConfig::default() };
        assert!(sample_gamma(&bad, &mut rng).is_err());
    }

    #[test]
    fn plans_are_deterministic_per_index() {
        let b = bank(16);
        let gamma = GammaSamplerConfig::default();
        let geo = GeometricConfig::default();
        let p = |i| make_plan(&b, Some(&gamma), &geo, 42, i).unwrap();
        assert_eq!(p(3), p(3));
        let plans: Vec<_> = (0..100).map(p).collect();
        for i in 0..plans.len() {
            for j in i + 1..plans.len() {
                assert_ne!(plans[i], plans[j]);
            }
        }
        for plan in &plans {
            assert!(plan.gamma > 0.0 && plan.gamma <= 2.0);
            assert!(plan.rotation.abs() <= 45.0);
            assert!(plan.scale >= 0.8 && plan.scale <= 1.25);
            assert!(plan.translation.0.abs() <= 0.1 && plan.translation.1.abs() <= 0.1);
        }
    }

    #[test]
    fn zero_ranges_give_identity_geometry() {
        let plan = make_plan(&bank(3), None, &GeometricConfig::identity(), 7, 0).unwrap();
        assert_eq!(plan.rotation, 0.0);
        assert!(!plan.flip_h && !plan.flip_v);
        assert_eq!(plan.translation, (0.0, 0.0));
        assert_eq!(plan.scale, 1.0);
        assert_eq!(plan.gamma, 1.0);
        assert_eq!(plan.elastic_alpha, 0.0);
    }

    #[test]
    fn identity_plan_is_exact() {
        let img = gradient_image(13, 9);
        assert_eq!(apply_plan(&img, &AugmentationPlan::identity()).unwrap(), img);
    }

    #[test]
    fn flips_are_involutions() {
        let img = gradient_image(7, 5);
        for (h, v) in [(true, false), (false, true), (true, true)] {
            let plan = AugmentationPlan { flip_h: h, flip_v: v, ..AugmentationPlan::identity() };
            let once = apply_plan(&img, &plan).unwrap();
            assert_ne!(once, img);
            assert_eq!(apply_plan(&once, &plan).unwrap(), img);
        }
        let plan = AugmentationPlan { flip_h: true, ..AugmentationPlan::identity() };
        let once = apply_plan(&img, &plan).unwrap();
        assert_eq!(once.pixel(0, 2), img.pixel(6, 2));
    }

    #[test]
    fn quarter_turn_is_an_index_permutation() {
        let n = 11;
        let img = gradient_image(n, n);
        let plan = AugmentationPlan { rotation: 90.0, ..AugmentationPlan::identity() };
        let out = apply_plan(&img, &plan).unwrap();
        for y in 0..n {
            for x in 0..n {
                // clockwise on screen: output (x, y) reads source (y, n-1-x)
                let want = img.pixel(y, n - 1 - x);
                let got = out.pixel(x, y);
                for c in 0..3 {
                    assert!((got[c] - want[c]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn elastic_warp_moves_pixels_smoothly() {
        let img = gradient_image(32, 32);
        let plan = AugmentationPlan { elastic_alpha: 10.0, elastic_sigma: 4.0, elastic_field_seed: 5, ..AugmentationPlan::identity() };
        let out = apply_plan(&img, &plan).unwrap();
        assert_ne!(out, img);
        assert_eq!(out, apply_plan(&img, &plan).unwrap());
        let zero = AugmentationPlan { elastic_alpha: 0.0, ..plan };
        assert_eq!(apply_plan(&img, &zero).unwrap(), img);
    }

    fn disk(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> (ImageBuffer, BinaryMask) {
        let inside = |x: usize, y: usize| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r;
        let img = ImageBuffer::from_fn(w, h, Encoding::EncodedSRGB, |x, y| {
            if inside(x, y) { [0.9, 0.9, 0.9] } else { [0.0; 3] }
        })
        .unwrap();
        (img, BinaryMask::from_fn(w, h, inside).unwrap())
    }

    fn centroid(weights: impl Iterator<Item = f64>, w: usize) -> (f64, f64) {
        let (mut sx, mut sy, mut total) = (0.0, 0.0, 0.0);
        for (i, v) in weights.enumerate() {
            sx += v * (i % w) as f64;
            sy += v * (i / w) as f64;
            total += v;
        }
        (sx / total, sy / total)
    }

    #[test]
    fn masks_follow_the_image() {
        let (w, h) = (96, 80);
        let (img, mask) = disk(w, h, 40.0, 35.0, 12.0);
        let b = bank(4);
        for idx in 0..6 {
            let plan = make_plan(&b, None, &GeometricConfig { translate_frac: 0.05, ..GeometricConfig::default() }, 99, idx).unwrap();
            let plan = AugmentationPlan { illuminant: Illuminant::NEUTRAL, ..plan };
            let (out, out_mask) = apply_plan_with_mask(&img, &mask, &plan).unwrap();
            let ci = centroid(out.pixels().map(|p| p[0]), w);
            let cm = centroid(out_mask.data().iter().map(|&v| if v { 1.0 } else { 0.0 }), w);
            let d = ((ci.0 - cm.0).powi(2) + (ci.1 - cm.1).powi(2)).sqrt();
            assert!(d < 0.5, "plan {idx}: centroid offset {d}");
        }
    }

    #[test]
    fn mask_size_must_match() {
        let img = gradient_image(8, 8);
        let mask = BinaryMask::new(4, 4, vec![true; 16]).unwrap();
        assert!(matches!(
            apply_plan_with_mask(&img, &mask, &AugmentationPlan::identity()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn bbox_margins() {
        let mask = BinaryMask::from_fn(100, 100, |x, y| (40..=59).contains(&x) && (40..=59).contains(&y)).unwrap();
        assert_eq!(expanded_bbox(&mask, 0.15).unwrap(), BBox { x0: 38, y0: 38, x1: 61, y1: 61 });
        assert_eq!(expanded_bbox(&mask, 0.0).unwrap(), BBox { x0: 40, y0: 40, x1: 59, y1: 59 });
        let full = BinaryMask::new(10, 6, vec![true; 60]).unwrap();
        let img = gradient_image(10, 6);
        assert_eq!(crop_bbox(&img, &full, 0.15).unwrap(), img);
        let empty = BinaryMask::new(10, 6, vec![false; 60]).unwrap();
        assert!(matches!(crop_bbox(&img, &empty, 0.15), Err(Error::EmptyMask)));
    }

    #[test]
    fn crop_takes_the_right_pixels() {
        let img = gradient_image(10, 8);
        let mask = BinaryMask::from_fn(10, 8, |x, y| x == 3 && (2..=4).contains(&y)).unwrap();
        let out = crop_bbox(&img, &mask, 0.0).unwrap();
        assert_eq!((out.width(), out.height()), (1, 3));
        assert_eq!(out.pixel(0, 1), img.pixel(3, 3));
    }

    #[test]
    fn median_rules() {
        let map = |v: f64| ProbMap::new(1, 1, vec![v]).unwrap();
        let single = ProbMap::new(2, 1, vec![0.1, 0.7]).unwrap();
        assert_eq!(tta_median(std::slice::from_ref(&single)).unwrap(), single);
        assert_eq!(tta_median(&[map(0.2), map(0.9), map(0.5)]).unwrap().data, vec![0.5]);
        let even = tta_median(&[map(0.2), map(0.4), map(0.6), map(0.9)]).unwrap().data[0];
        assert!((even - 0.5).abs() < 1e-15);
        assert!(matches!(tta_median(&[]), Err(Error::EmptyInput)));
        assert!(matches!(tta_median(&[map(0.1), single]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn tta_expansion() {
        let img = gradient_image(16, 12);
        let b = bank(1000);
        let one = tta_expand(&img, &b, 1, 3).unwrap();
        assert_eq!(one.len(), 1);
        let tau = estimate_illuminant(&img, b.estimator()).unwrap();
        assert_eq!(one[0], von_kries_correct(&img, &tau).unwrap());

        let five = tta_expand(&img, &b, 5, 3).unwrap();
        assert_eq!(five, tta_expand(&img, &b, 5, 3).unwrap());
        assert_eq!(five[0], one[0]);
        for i in 0..5 {
            for j in i + 1..5 {
                let diff = five[i]
                    .data()
                    .iter()
                    .zip(five[j].data())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(diff > 0.0, "outputs {i} and {j} coincide");
            }
        }
        assert!(tta_expand(&img, &b, 0, 3).is_err());
    }
}
