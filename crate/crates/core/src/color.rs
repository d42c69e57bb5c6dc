//! Pixel buffers and the color math everything else is built on: von Kries
//! diagonal scaling, power-law gamma, the sRGB transfer curve and the
//! sRGB → XYZ → CIE L*a*b* conversion (D65).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Estimation and casting work on the stored (encoded) sample values.
/// Linearization is only applied on the way to L*a*b*.
pub const ESTIMATION_SPACE: Encoding = Encoding::EncodedSRGB;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Encoding {
    EncodedSRGB,
    LinearRGB,
}

/// Row-major interleaved RGB image with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<f64>,
    encoding: Encoding,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, data: Vec<f64>, encoding: Encoding) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("zero-sized image {width}x{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidImage(format!(
                "{} samples for a {width}x{height}x3 image",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::InvalidImage(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, data, encoding })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3], encoding: Encoding) -> Result<Self> {
        let data = std::iter::repeat_n(rgb, width * height).flatten().collect();
        Self::new(width, height, data, encoding)
    }

    /// Builds an image from a per-pixel function, clipping its output.
    pub fn from_fn(
        width: usize,
        height: usize,
        encoding: Encoding,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).map(clip));
            }
        }
        Self::new(width, height, data, encoding)
    }

    pub(crate) fn from_parts_unchecked(
        width: usize,
        height: usize,
        data: Vec<f64>,
        encoding: Encoding,
    ) -> Self {
        debug_assert_eq!(data.len(), width * height * 3);
        Self { width, height, data, encoding }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Applies `f` to every sample with its channel index; output is clipped.
    fn map_channels(&self, f: impl Fn(usize, f64) -> f64) -> ImageBuffer {
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &s)| clip(f(i % 3, s)))
            .collect();
        Self::from_parts_unchecked(self.width, self.height, data, self.encoding)
    }
}

/// Clamp to `[0, 1]`; NaN maps to 0.
#[inline]
pub fn clip(s: f64) -> f64 {
    if s >= 1.0 {
        1.0
    } else if s > 0.0 {
        s
    } else {
        0.0
    }
}

/// Unit-L2 RGB direction of a scene light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Illuminant {
    r: f64,
    g: f64,
    b: f64,
}

impl Illuminant {
    pub const NEUTRAL: Illuminant = Illuminant {
        r: 1.0 / SQRT_3,
        g: 1.0 / SQRT_3,
        b: 1.0 / SQRT_3,
    };

    /// Normalizes an arbitrary non-negative RGB triple to unit length.
    pub fn from_rgb(r: f64, g: f64, b: f64) -> Result<Self> {
        let rgb = [r, g, b];
        if rgb.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidIlluminant(rgb));
        }
        let norm = (r * r + g * g + b * b).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidIlluminant(rgb));
        }
        if r == g && g == b {
            return Ok(Self::NEUTRAL);
        }
        Ok(Self { r: r / norm, g: g / norm, b: b / norm })
    }

    /// Accepts a triple that is already unit length within `tol`. Values
    /// within 1e-9 are kept verbatim; the rest are renormalized.
    pub fn from_unit(r: f64, g: f64, b: f64, tol: f64) -> Result<Self> {
        let rgb = [r, g, b];
        if rgb.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidIlluminant(rgb));
        }
        let norm = (r * r + g * g + b * b).sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidIlluminant(rgb));
        }
        if (norm - 1.0).abs() > tol {
            return Err(Error::InvalidIlluminant(rgb));
        }
        if (norm - 1.0).abs() <= 1e-9 {
            Ok(Self { r, g, b })
        } else {
            Ok(Self { r: r / norm, g: g / norm, b: b / norm })
        }
    }

    pub fn rgb(&self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    pub fn is_neutral(&self) -> bool {
        self.r == self.g && self.g == self.b
    }

    /// Per-channel white-balancing gains `1 / (√3 τ)`. Neutral light gives
    /// exactly 1.
    pub fn correction_gains(&self) -> Result<[f64; 3]> {
        if self.is_neutral() {
            return Ok([1.0; 3]);
        }
        let rgb = self.rgb();
        if rgb.contains(&0.0) {
            return Err(Error::DegenerateIlluminant(rgb));
        }
        Ok(rgb.map(|t| 1.0 / (SQRT_3 * t)))
    }

    /// Per-channel casting gains `√3 τ`, the reciprocals of
    /// [`correction_gains`](Self::correction_gains).
    pub fn cast_gains(&self) -> [f64; 3] {
        if self.is_neutral() {
            return [1.0; 3];
        }
        self.rgb().map(|t| SQRT_3 * t)
    }

    /// Angle between two illuminants in degrees.
    pub fn angular_error(&self, other: &Illuminant) -> f64 {
        angular_distance(self.rgb(), other.rgb())
    }
}

/// Angle in degrees between two RGB directions (not necessarily unit).
pub fn angular_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}

/// White-balance: divide out the illuminant with a diagonal transform.
pub fn von_kries_correct(img: &ImageBuffer, tau: &Illuminant) -> Result<ImageBuffer> {
    let gains = tau.correction_gains()?;
    Ok(scale_channels(img, gains))
}

/// Re-light a white-balanced image with `tau`.
pub fn von_kries_cast(img_wb: &ImageBuffer, tau: &Illuminant) -> ImageBuffer {
    scale_channels(img_wb, tau.cast_gains())
}

pub fn scale_channels(img: &ImageBuffer, gains: [f64; 3]) -> ImageBuffer {
    if gains == [1.0; 3] {
        return img.clone();
    }
    img.map_channels(|c, s| s * gains[c])
}

pub fn apply_gamma(img: &ImageBuffer, gamma: f64) -> Result<ImageBuffer> {
    if !(gamma > 0.0 && gamma <= 2.0) {
        return Err(Error::GammaOutOfRange(gamma));
    }
    if gamma == 1.0 {
        return Ok(img.clone());
    }
    Ok(img.map_channels(|_, s| s.powf(gamma)))
}

#[inline]
pub fn srgb_decode(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
pub fn srgb_encode(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        c * 12.92
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_to_linear(img: &ImageBuffer) -> Result<ImageBuffer> {
    convert_encoding(img, Encoding::EncodedSRGB, Encoding::LinearRGB, srgb_decode)
}

pub fn linear_to_srgb(img: &ImageBuffer) -> Result<ImageBuffer> {
    convert_encoding(img, Encoding::LinearRGB, Encoding::EncodedSRGB, srgb_encode)
}

fn convert_encoding(
    img: &ImageBuffer,
    from: Encoding,
    to: Encoding,
    f: fn(f64) -> f64,
) -> Result<ImageBuffer> {
    if img.encoding != from {
        return Err(Error::EncodingMismatch { expected: from, found: img.encoding });
    }
    let mut out = img.map_channels(|_, s| f(s));
    out.encoding = to;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabPoint {
    #[serde(rename = "L")]
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

/// Linear sRGB → XYZ (D65).
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

/// D65 reference white (2° observer).
const D65_WHITE: [f64; 3] = [0.950_47, 1.0, 1.088_83];

pub fn linear_rgb_to_xyz(rgb: [f64; 3]) -> [f64; 3] {
    RGB_TO_XYZ.map(|row| row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2])
}

pub fn xyz_to_lab(xyz: [f64; 3]) -> LabPoint {
    const DELTA: f64 = 6.0 / 29.0;
    let f = |t: f64| {
        if t > DELTA * DELTA * DELTA {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    };
    let fx = f(xyz[0] / D65_WHITE[0]);
    let fy = f(xyz[1] / D65_WHITE[1]);
    let fz = f(xyz[2] / D65_WHITE[2]);
    LabPoint {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// Encoded sRGB triple in `[0, 1]` → CIE L*a*b* (D65).
pub fn rgb_to_lab(rgb: [f64; 3]) -> LabPoint {
    xyz_to_lab(linear_rgb_to_xyz(rgb.map(|c| srgb_decode(clip(c)))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(pixels: &[[f64; 3]]) -> ImageBuffer {
        ImageBuffer::new(pixels.len(), 1, pixels.concat(), Encoding::EncodedSRGB).unwrap()
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(ImageBuffer::new(2, 1, vec![0.0; 5], Encoding::LinearRGB).is_err());
        assert!(ImageBuffer::new(0, 1, vec![], Encoding::LinearRGB).is_err());
        assert!(ImageBuffer::new(1, 1, vec![0.0, 1.5, 0.0], Encoding::LinearRGB).is_err());
    }

    #[test]
    fn illuminant_normalizes() {
        let t = Illuminant::from_rgb(0.5, 0.25, 0.25).unwrap();
        let [r, g, b] = t.rgb();
        assert!(((r * r + g * g + b * b).sqrt() - 1.0).abs() < 1e-12);
        assert!((r - 0.816_496_580_927_726).abs() < 1e-12);
        assert!(Illuminant::from_rgb(0.0, 0.0, 0.0).is_err());
        assert!(Illuminant::from_rgb(-0.1, 0.5, 0.5).is_err());
        assert!(Illuminant::from_rgb(f64::NAN, 0.5, 0.5).is_err());
        assert_eq!(Illuminant::from_rgb(3.0, 3.0, 3.0).unwrap(), Illuminant::NEUTRAL);
    }

    #[test]
    fn correction_gains_match_hand_values() {
        let t = Illuminant::from_rgb(2.0, 1.0, 1.0).unwrap();
        let g = t.correction_gains().unwrap();
        assert!((g[0] - 0.707_106_781_186_547_5).abs() < 1e-12);
        assert!((g[1] - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!((g[2] - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(Illuminant::NEUTRAL.correction_gains().unwrap(), [1.0; 3]);
    }

    #[test]
    fn degenerate_illuminant_is_an_error() {
        let t = Illuminant::from_rgb(1.0, 1.0, 0.0).unwrap();
        let im = img(&[[0.2, 0.2, 0.2]]);
        assert!(matches!(von_kries_correct(&im, &t), Err(Error::DegenerateIlluminant(_))));
    }

    #[test]
    fn correct_clips_overflow() {
        let t = Illuminant::from_rgb(2.0, 1.0, 1.0).unwrap();
        let out = von_kries_correct(&img(&[[1.0, 0.9, 0.9]]), &t).unwrap();
        let p = out.pixel(0, 0);
        assert!((p[0] - 0.707_106_781_186_547_5).abs() < 1e-12);
        assert_eq!(p[1], 1.0);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn cast_applies_inverse_gains() {
        let t = Illuminant::from_rgb(2.0, 1.0, 1.0).unwrap();
        let p = von_kries_cast(&img(&[[0.5, 0.5, 0.5]]), &t).pixel(0, 0);
        assert!((p[0] - 0.707_106_781_186_547_5).abs() < 1e-12);
        assert!((p[1] - 0.353_553_390_593_273_8).abs() < 1e-12);
        assert!((p[2] - 0.353_553_390_593_273_8).abs() < 1e-12);
    }

    #[test]
    fn neutral_is_bitwise_identity() {
        let im = img(&[[0.1, 0.2, 0.3], [0.9, 1.0, 0.0]]);
        assert_eq!(von_kries_correct(&im, &Illuminant::NEUTRAL).unwrap(), im);
        assert_eq!(von_kries_cast(&im, &Illuminant::NEUTRAL), im);
    }

    #[test]
    fn gamma_values_and_range() {
        let im = img(&[[0.25, 0.25, 0.25]]);
        assert_eq!(apply_gamma(&im, 1.0).unwrap(), im);
        assert!((apply_gamma(&im, 0.5).unwrap().pixel(0, 0)[0] - 0.5).abs() < 1e-15);
        assert!((apply_gamma(&im, 2.0).unwrap().pixel(0, 0)[0] - 0.0625).abs() < 1e-15);
        for g in [0.0, -1.0, 2.0001, f64::NAN] {
            assert!(matches!(apply_gamma(&im, g), Err(Error::GammaOutOfRange(_))));
        }
    }

    #[test]
    fn srgb_transfer_points() {
        assert_eq!(srgb_decode(0.0), 0.0);
        assert!((srgb_decode(1.0) - 1.0).abs() < 1e-15);
        // independent evaluation of the piecewise curve: 0.21404114048223255
        assert!((srgb_decode(0.5) - 0.214_041_140_482_232_55).abs() < 1e-12);
        let im = img(&[[0.5, 0.0, 1.0]]);
        let lin = srgb_to_linear(&im).unwrap();
        assert_eq!(lin.encoding(), Encoding::LinearRGB);
        assert!(matches!(srgb_to_linear(&lin), Err(Error::EncodingMismatch { .. })));
        assert!(linear_to_srgb(&im).is_err());
    }

    #[test]
    fn lab_reference_points() {
        let w = rgb_to_lab([1.0, 1.0, 1.0]);
        assert!((w.l - 100.0).abs() < 1e-3 && w.a.abs() < 1e-3 && w.b.abs() < 1e-3);
        let k = rgb_to_lab([0.0, 0.0, 0.0]);
        assert!(k.l.abs() < 1e-12 && k.a.abs() < 1e-12 && k.b.abs() < 1e-12);
        let r = rgb_to_lab([1.0, 0.0, 0.0]);
        assert!((r.l - 53.24).abs() < 0.05);
        assert!((r.a - 80.09).abs() < 0.05);
        assert!((r.b - 67.20).abs() < 0.05);
    }

    fn arb_image() -> impl Strategy<Value = ImageBuffer> {
        (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
            prop::collection::vec(0.0f64..=1.0, w * h * 3).prop_map(move |d| {
                ImageBuffer::new(w, h, d, Encoding::EncodedSRGB).unwrap()
            })
        })
    }

    fn arb_illuminant() -> impl Strategy<Value = Illuminant> {
        (0.05f64..1.0, 0.05f64..1.0, 0.05f64..1.0)
            .prop_map(|(r, g, b)| Illuminant::from_rgb(r, g, b).unwrap())
    }

    fn in_unit(im: &ImageBuffer) -> bool {
        im.data().iter().all(|s| (0.0..=1.0).contains(s))
    }

    proptest! {
        #[test]
        fn outputs_stay_in_unit_interval(im in arb_image(), t in arb_illuminant(), g in 0.01f64..=2.0) {
            prop_assert!(in_unit(&von_kries_correct(&im, &t).unwrap()));
            prop_assert!(in_unit(&von_kries_cast(&im, &t)));
            prop_assert!(in_unit(&apply_gamma(&im, g).unwrap()));
            let lin = srgb_to_linear(&im).unwrap();
            prop_assert!(in_unit(&lin));
            prop_assert!(in_unit(&linear_to_srgb(&lin).unwrap()));
        }

        #[test]
        fn cast_undoes_correct_without_clipping(im in arb_image(), t in arb_illuminant()) {
            // shrink the image so the correction cannot clip
            let gains = t.correction_gains().unwrap();
            let max_gain = gains.iter().cloned().fold(1.0, f64::max);
            let im = ImageBuffer::new(
                im.width(), im.height(),
                im.data().iter().map(|s| s / max_gain).collect(),
                Encoding::EncodedSRGB,
            ).unwrap();
            let corrected = von_kries_correct(&im, &t).unwrap();
            let back = von_kries_cast(&corrected, &t);
            for (a, b) in back.data().iter().zip(im.data()) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }

        #[test]
        fn gamma_preserves_order(a in 0.0f64..=1.0, b in 0.0f64..=1.0, g in 0.01f64..=2.0) {
            let im = img(&[[a, a, a], [b, b, b]]);
            let out = apply_gamma(&im, g).unwrap();
            let (oa, ob) = (out.pixel(0, 0)[0], out.pixel(1, 0)[0]);
            if a < b { prop_assert!(oa <= ob); }
            if a > b { prop_assert!(oa >= ob); }
        }

        #[test]
        fn srgb_round_trip(s in 0.0f64..=1.0) {
            prop_assert!((srgb_encode(srgb_decode(s)) - s).abs() < 1e-6);
        }

        #[test]
        fn grays_are_neutral_in_lab(s in 0.0f64..=1.0) {
            let lab = rgb_to_lab([s, s, s]);
            prop_assert!(lab.a.abs() < 1e-3 && lab.b.abs() < 1e-3);
        }
    }
}
