//! Sampled Gaussian kernels and separable correlation on single-channel
//! planes with mirrored borders.

/// Mirror an out-of-range index back into `0..n` (edge sample repeated:
/// `-1 → 0`, `n → n-1`).
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    if (0..n).contains(&i) {
        return i as usize;
    }
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

pub fn kernel_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil().max(1.0) as usize
}

/// Taps `w[-r..=r]` (stored at `w[j + r]`) for correlation
/// `out[i] = Σ_j w[j] · f[i + j]`.
///
/// * order 0: normalized Gaussian, Σ w = 1.
/// * order 1: Σ w = 0 and Σ j·w[j] = 1, so a unit ramp has slope 1.
/// * order 2: Σ w = 0 and Σ j²·w[j] = 2, so `x²` has second derivative 2.
pub fn gaussian_kernel(sigma: f64, order: u8) -> Vec<f64> {
    assert!(sigma > 0.0, "kernel sigma must be positive");
    let r = kernel_radius(sigma) as isize;
    let g: Vec<f64> = (-r..=r)
        .map(|j| (-((j * j) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / sum).collect();
    let taps = |f: &dyn Fn(isize, f64) -> f64| -> Vec<f64> {
        (-r..=r).zip(&g).map(|(j, &gj)| f(j, gj)).collect()
    };
    match order {
        0 => g,
        1 => {
            let w = taps(&|j, gj| j as f64 * gj);
            let moment: f64 = (-r..=r).zip(&w).map(|(j, v)| j as f64 * v).sum();
            w.into_iter().map(|v| v / moment).collect()
        }
        2 => {
            let s2 = sigma * sigma;
            let w = taps(&|j, gj| ((j * j) as f64 / s2 - 1.0) * gj);
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            let w: Vec<f64> = w.into_iter().map(|v| v - mean).collect();
            let moment: f64 = (-r..=r).zip(&w).map(|(j, v)| (j * j) as f64 * v).sum();
            w.into_iter().map(|v| 2.0 * v / moment).collect()
        }
        _ => panic!("unsupported derivative order {order}"),
    }
}

/// Correlates each row of a `width × height` plane with `kernel`.
pub fn correlate_rows(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        let dst = &mut out[y * width..(y + 1) * width];
        for (x, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let xi = x as isize + k as isize - r;
                acc += w * row[reflect_index(xi, width)];
            }
            *d = acc;
        }
    }
    out
}

/// Correlates each column of a `width × height` plane with `kernel`.
pub fn correlate_cols(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; plane.len()];
    for (k, w) in kernel.iter().enumerate() {
        for y in 0..height {
            let ys = reflect_index(y as isize + k as isize - r, height);
            let src = &plane[ys * width..(ys + 1) * width];
            let dst = &mut out[y * width..(y + 1) * width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    out
}

/// Separable filter: `kx` along rows, then `ky` along columns.
pub fn separable(plane: &[f64], width: usize, height: usize, kx: &[f64], ky: &[f64]) -> Vec<f64> {
    let tmp = correlate_rows(plane, width, height, kx);
    correlate_cols(&tmp, width, height, ky)
}

pub fn gaussian_smooth(plane: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma, 0);
    separable(plane, width, height, &k, &k)
}
