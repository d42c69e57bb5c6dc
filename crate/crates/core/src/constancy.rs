//! Illuminant estimation in the (n, p, σ) Minkowski framework.
//!
//! For each channel the estimate is the Minkowski p-mean of the magnitude of
//! the n-th order Gaussian derivative of the image at scale σ:
//!
//! * n = 0, σ = 0, p = 1: gray-world
//! * n = 0, σ = 0, p = ∞: max-RGB
//! * n = 0, σ = 0, 1 < p < ∞: shades of gray
//! * n ≥ 1: gray-edge
//!
//! The three channel energies are normalized to a unit-length [`Illuminant`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::color::{Illuminant, ImageBuffer};
use crate::error::{Error, Result};
use crate::filter;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Minkowski {
    Finite(f64),
    Infinity,
}

impl fmt::Display for Minkowski {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Minkowski::Finite(p) => write!(f, "{p}"),
            Minkowski::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for Minkowski {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" | "infinity" | "Inf" => Ok(Minkowski::Infinity),
            _ => {
                let p: f64 = s
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad Minkowski norm {s:?}")))?;
                if p.is_infinite() && p > 0.0 {
                    Ok(Minkowski::Infinity)
                } else {
                    Ok(Minkowski::Finite(p))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub deriv_order: u8,
    pub minkowski_p: Minkowski,
    pub smoothing_sigma: f64,
    /// Pixels with any channel at or above this value are excluded, together
    /// with their 8-neighbours. Values above 1 disable exclusion.
    pub saturation_threshold: f64,
}

impl Default for EstimatorConfig {
    /// Shades of gray with p = 6, no smoothing, saturation cut at 0.98.
    fn default() -> Self {
        Self {
            deriv_order: 0,
            minkowski_p: Minkowski::Finite(6.0),
            smoothing_sigma: 0.0,
            saturation_threshold: 0.98,
        }
    }
}

impl EstimatorConfig {
    pub fn gray_world() -> Self {
        Self { minkowski_p: Minkowski::Finite(1.0), ..Self::default() }
    }

    pub fn max_rgb() -> Self {
        Self { minkowski_p: Minkowski::Infinity, ..Self::default() }
    }

    pub fn shades_of_gray(p: f64) -> Self {
        Self { minkowski_p: Minkowski::Finite(p), ..Self::default() }
    }

    pub fn gray_edge(order: u8, p: f64, sigma: f64) -> Self {
        Self {
            deriv_order: order,
            minkowski_p: Minkowski::Finite(p),
            smoothing_sigma: sigma,
            ..Self::default()
        }
    }

    pub fn with_saturation_threshold(mut self, t: f64) -> Self {
        self.saturation_threshold = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.deriv_order > 2 {
            return Err(Error::InvalidConfig(format!(
                "derivative order {} not in {{0, 1, 2}}",
                self.deriv_order
            )));
        }
        if let Minkowski::Finite(p) = self.minkowski_p {
            if !(p >= 1.0 && p.is_finite()) {
                return Err(Error::InvalidConfig(format!("Minkowski p = {p} must be >= 1")));
            }
        }
        let sigma = self.smoothing_sigma;
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma = {sigma} must be >= 0")));
        }
        if self.deriv_order >= 1 && sigma == 0.0 {
            return Err(Error::InvalidConfig(
                "derivative orders 1 and 2 need sigma > 0".into(),
            ));
        }
        if !(self.saturation_threshold > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "saturation threshold {} must be > 0",
                self.saturation_threshold
            )));
        }
        Ok(())
    }
}

/// Unclipped per-channel filter output, interleaved like [`ImageBuffer`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelResponse {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ChannelResponse {
    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }
}

fn split_planes(img: &ImageBuffer) -> [Vec<f64>; 3] {
    let n = img.width() * img.height();
    let mut planes = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for p in img.pixels() {
        for c in 0..3 {
            planes[c].push(p[c]);
        }
    }
    planes
}

/// Gaussian-smoothed image (order 0), gradient magnitude
/// `√(dx² + dy²)` (order 1) or `√(dxx² + 2dxy² + dyy²)` (order 2), per
/// channel. Kernel radius is `ceil(3σ)` with mirrored borders.
pub fn gaussian_derivative(img: &ImageBuffer, order: u8, sigma: f64) -> Result<ChannelResponse> {
    if order > 2 {
        return Err(Error::InvalidConfig(format!("derivative order {order} not in {{0, 1, 2}}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) || (order >= 1 && sigma == 0.0) {
        return Err(Error::InvalidConfig(format!(
            "sigma = {sigma} invalid for derivative order {order}"
        )));
    }
    let (w, h) = (img.width(), img.height());
    if order == 0 && sigma == 0.0 {
        return Ok(ChannelResponse { width: w, height: h, data: img.data().to_vec() });
    }
    let g0 = filter::gaussian_kernel(sigma, 0);
    let g1 = filter::gaussian_kernel(sigma, 1);
    let g2 = filter::gaussian_kernel(sigma, 2);
    let planes = split_planes(img);
    let responses: Vec<Vec<f64>> = planes
        .iter()
        .map(|plane| match order {
            0 => filter::separable(plane, w, h, &g0, &g0),
            1 => {
                let dx = filter::separable(plane, w, h, &g1, &g0);
                let dy = filter::separable(plane, w, h, &g0, &g1);
                dx.iter().zip(&dy).map(|(a, b)| a.hypot(*b)).collect()
            }
            _ => {
                let dxx = filter::separable(plane, w, h, &g2, &g0);
                let dyy = filter::separable(plane, w, h, &g0, &g2);
                let dxy = filter::separable(plane, w, h, &g1, &g1);
                dxx.iter()
                    .zip(&dyy)
                    .zip(&dxy)
                    .map(|((a, b), c)| (a * a + 2.0 * c * c + b * b).sqrt())
                    .collect()
            }
        })
        .collect();
    let mut data = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        data.extend([responses[0][i], responses[1][i], responses[2][i]]);
    }
    Ok(ChannelResponse { width: w, height: h, data })
}

/// Pixels excluded from estimation: any channel at or above `threshold`,
/// dilated by one pixel (3×3). `None` when nothing is excluded.
pub fn saturation_mask(img: &ImageBuffer, threshold: f64) -> Option<Vec<bool>> {
    let (w, h) = (img.width(), img.height());
    let saturated: Vec<bool> = img.pixels().map(|p| p.iter().any(|&s| s >= threshold)).collect();
    if !saturated.contains(&true) {
        return None;
    }
    let mut excluded = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if !saturated[y * w + x] {
                continue;
            }
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    excluded[ny * w + nx] = true;
                }
            }
        }
    }
    Some(excluded)
}

pub fn estimate_illuminant(img: &ImageBuffer, cfg: &EstimatorConfig) -> Result<Illuminant> {
    let energy = channel_energies(img, cfg)?;
    if energy.iter().all(|&e| e == 0.0) {
        return Err(Error::BlackImage);
    }
    Illuminant::from_rgb(energy[0], energy[1], energy[2])
}

/// Per-channel Minkowski energies before normalization.
pub fn channel_energies(img: &ImageBuffer, cfg: &EstimatorConfig) -> Result<[f64; 3]> {
    cfg.validate()?;
    let excluded = saturation_mask(img, cfg.saturation_threshold);
    if let Some(mask) = &excluded {
        if mask.iter().all(|&e| e) {
            return Err(Error::NoValidPixels);
        }
    }
    let response;
    let samples: &[f64] = if cfg.deriv_order == 0 && cfg.smoothing_sigma == 0.0 {
        img.data()
    } else {
        response = gaussian_derivative(img, cfg.deriv_order, cfg.smoothing_sigma)?;
        &response.data
    };
    let keep = |i: usize| excluded.as_ref().is_none_or(|m| !m[i]);

    let mut max = [0.0f64; 3];
    let mut count = 0usize;
    for (i, px) in samples.chunks_exact(3).enumerate() {
        if keep(i) {
            count += 1;
            for c in 0..3 {
                max[c] = max[c].max(px[c].abs());
            }
        }
    }
    let p = match cfg.minkowski_p {
        Minkowski::Infinity => return Ok(max),
        Minkowski::Finite(p) => p,
    };
    // Scale by the channel max before raising to p so large p cannot underflow.
    let inv_max = max.map(|m| if m > 0.0 { 1.0 / m } else { 0.0 });
    let int_p = (p.fract() == 0.0 && p <= 64.0).then_some(p as i32);
    let mut acc = [0.0f64; 3];
    for (i, px) in samples.chunks_exact(3).enumerate() {
        if keep(i) {
            for c in 0..3 {
                let v = px[c].abs() * inv_max[c];
                acc[c] += match int_p {
                    Some(1) => v,
                    Some(k) => v.powi(k),
                    None => v.powf(p),
                };
            }
        }
    }
    let n = count as f64;
    Ok(std::array::from_fn(|c| {
        if max[c] == 0.0 {
            0.0
        } else if int_p == Some(1) {
            max[c] * (acc[c] / n)
        } else {
            max[c] * (acc[c] / n).powf(1.0 / p)
        }
    }))
}
