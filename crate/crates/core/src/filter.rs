//! Separable 1-D convolution with edge clamping.

use crate::raster::{Pixel, Raster};

/// Normalized sampled Gaussian truncated at 4 sigma.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Normalized box of odd width `2 * radius + 1`.
pub fn box_kernel(radius: usize) -> Vec<f64> {
    let n = 2 * radius + 1;
    vec![1.0 / n as f64; n]
}

/// Convolves along x with `kx` and then along y with `ky`; `None` skips an axis.
pub fn convolve_separable<P: Pixel>(src: &Raster<P>, kx: Option<&[f64]>, ky: Option<&[f64]>) -> Raster<P> {
    let mut out = match kx {
        Some(k) => convolve_x(src, k),
        None => src.clone(),
    };
    if let Some(k) = ky {
        out = convolve_y(&out, k);
    }
    out
}

fn convolve_x<P: Pixel>(src: &Raster<P>, k: &[f64]) -> Raster<P> {
    let r = (k.len() / 2) as i64;
    let w = src.width() as i64;
    Raster::from_fn(src.width(), src.height(), |x, y| {
        P::from_channels(|c| {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let sx = (x as i64 + i as i64 - r).clamp(0, w - 1) as usize;
                acc += kv * src.get(sx, y).channel(c);
            }
            acc
        })
    })
}

fn convolve_y<P: Pixel>(src: &Raster<P>, k: &[f64]) -> Raster<P> {
    let r = (k.len() / 2) as i64;
    let h = src.height() as i64;
    Raster::from_fn(src.width(), src.height(), |x, y| {
        P::from_channels(|c| {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let sy = (y as i64 + i as i64 - r).clamp(0, h - 1) as usize;
                acc += kv * src.get(x, sy).channel(c);
            }
            acc
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::AlphaMask;

    #[test]
    fn kernels_sum_to_one() {
        for s in [0.3, 1.0, 2.5, 7.0] {
            assert!((gaussian_kernel(s).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!((box_kernel(5).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(box_kernel(5).len(), 11);
    }

    #[test]
    fn constant_field_is_preserved() {
        let m = AlphaMask::filled(9, 6, 0.4);
        let k = gaussian_kernel(1.5);
        let out = convolve_separable(&m, Some(&k), Some(&k));
        assert!(out.pixels().iter().all(|&v| (v - 0.4).abs() < 1e-6));
    }
}
