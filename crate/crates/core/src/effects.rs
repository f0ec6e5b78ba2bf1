//! Visual effects. They take the flow by shared reference only; the ground
//! truth never changes.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{box_kernel, convolve_separable, gaussian_kernel};
use crate::raster::{binarize, AlphaMask, FlowField, Image, Raster};
use crate::rng::SeedPath;

/// Per-axis blur scales below this are skipped.
pub const MIN_BLUR_SIGMA: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlurFilter {
    Box,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectsParams {
    pub blur_prob: f64,
    /// Largest proportion of the mean absolute flow used as the filter scale.
    pub blur_strength: f64,
    pub blur_filter: BlurFilter,
    pub fog_prob: f64,
    pub fog_mean: f64,
    pub fog_std: f64,
}

impl Default for EffectsParams {
    fn default() -> Self {
        Self { blur_prob: 0.3, blur_strength: 0.3, blur_filter: BlurFilter::Box, fog_prob: 0.2, fog_mean: 0.3, fog_std: 0.1 }
    }
}

impl EffectsParams {
    /// No blur and no fog.
    pub fn disabled() -> Self {
        Self { blur_prob: 0.0, fog_prob: 0.0, ..Self::default() }
    }

    pub fn check(&self) -> Result<()> {
        for (name, v) in [("blur_prob", self.blur_prob), ("fog_prob", self.fog_prob), ("fog_mean", self.fog_mean)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParams(format!("{name} = {v} outside [0, 1]")));
            }
        }
        for (name, v) in [("blur_strength", self.blur_strength), ("fog_std", self.fog_std)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// A separable motion-blur filter fixed from frame-1 statistics, reusable for both frames.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionBlur {
    pub sigma: [f64; 2],
    kx: Option<Vec<f64>>,
    ky: Option<Vec<f64>>,
}

impl MotionBlur {
    /// Filter scale per axis is `strength * mean |flow_d|` over pixels where the binarized mask is 1.
    pub fn from_flow(mask: &AlphaMask, flow: &FlowField, strength: f64, filter: BlurFilter) -> Result<Self> {
        mask.check_same_dims(flow)?;
        let bin = binarize(mask);
        let (mut sx, mut sy, mut n) = (0.0f64, 0.0f64, 0usize);
        for (m, w) in bin.pixels().iter().zip(flow.pixels()) {
            if *m == 1.0 {
                sx += (w[0] as f64).abs();
                sy += (w[1] as f64).abs();
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::EmptyMask);
        }
        let sigma = [strength * sx / n as f64, strength * sy / n as f64];
        let kernel = |s: f64| {
            (s >= MIN_BLUR_SIGMA).then(|| match filter {
                // Width 2s + 1 rounded to the nearest odd integer.
                BlurFilter::Box => box_kernel(s.round() as usize),
                BlurFilter::Gaussian => gaussian_kernel(s),
            })
        };
        Ok(Self { sigma, kx: kernel(sigma[0]), ky: kernel(sigma[1]) })
    }

    pub fn is_identity(&self) -> bool {
        self.kx.is_none() && self.ky.is_none()
    }

    pub fn apply(&self, img: &Image, mask: &AlphaMask) -> (Image, AlphaMask) {
        if self.is_identity() {
            return (img.clone(), mask.clone());
        }
        let (kx, ky) = (self.kx.as_deref(), self.ky.as_deref());
        let img = convolve_separable(img, kx, ky).map(|p: [f32; 3]| p.map(|v| v.clamp(0.0, 1.0)));
        let mask = convolve_separable(mask, kx, ky).map(|v: f32| v.clamp(0.0, 1.0));
        (img, mask)
    }
}

pub fn motion_blur(img: &Image, mask: &AlphaMask, flow: &FlowField, strength: f64, filter: BlurFilter) -> Result<(Image, AlphaMask)> {
    if !(strength >= 0.0) {
        return Err(Error::InvalidParams(format!("blur strength {strength}")));
    }
    img.check_same_dims(mask)?;
    Ok(MotionBlur::from_flow(mask, flow, strength, filter)?.apply(img, mask))
}

/// Keys cubic convolution weight (a = -0.5).
fn cubic_weight(t: f64) -> f64 {
    let a = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Bicubic, pixel-center aligned, edge-clamped resampling of a single-channel field.
fn bicubic_resize(src: &Raster<f32>, width: usize, height: usize) -> Raster<f32> {
    fn pass(len_in: usize, len_out: usize) -> Vec<([usize; 4], [f64; 4])> {
        let scale = len_in as f64 / len_out as f64;
        (0..len_out)
            .map(|o| {
                let s = (o as f64 + 0.5) * scale - 0.5;
                let base = s.floor();
                let t = s - base;
                let idx = std::array::from_fn(|k| (base as i64 - 1 + k as i64).clamp(0, len_in as i64 - 1) as usize);
                let w = std::array::from_fn(|k| cubic_weight(t - (k as f64 - 1.0)));
                (idx, w)
            })
            .collect()
    }
    let xs = pass(src.width(), width);
    let ys = pass(src.height(), height);
    let rows = Raster::from_fn(width, src.height(), |x, y| {
        let (idx, w) = &xs[x];
        (0..4).map(|k| w[k] * src.get(idx[k], y) as f64).sum::<f64>() as f32
    });
    Raster::from_fn(width, height, |x, y| {
        let (idx, w) = &ys[y];
        (0..4).map(|k| w[k] * rows.get(x, idx[k]) as f64).sum::<f64>() as f32
    })
}

/// Multi-octave fog density in [0, 1].
///
/// Octave k is Gaussian noise at `size / 2^k` with standard deviation
/// proportional to `2^k / min(w, h)`, for k = 0 ..= floor(log2 min(w, h)) - 2;
/// octaves are bicubically upsampled and summed, the sum is rescaled to the
/// requested mean and standard deviation and finally clamped.
pub fn generate_fog(w: usize, h: usize, mean: f64, std: f64, seed: &SeedPath) -> Result<AlphaMask> {
    if w == 0 || h == 0 {
        return Err(Error::InvalidParams(format!("fog size {w}x{h}")));
    }
    if !(std >= 0.0) || !mean.is_finite() {
        return Err(Error::InvalidParams(format!("fog mean {mean} std {std}")));
    }
    if std == 0.0 {
        return Ok(Raster::filled(w, h, mean.clamp(0.0, 1.0) as f32));
    }
    let min_side = w.min(h);
    let octaves = (min_side as f64).log2().floor() as i64 - 2;
    let octaves = octaves.max(0) as u32;
    let mut acc = vec![0.0f64; w * h];
    for k in 0..=octaves {
        let ow = (w >> k).max(1);
        let oh = (h >> k).max(1);
        let s = (1u64 << k) as f64 / min_side as f64;
        let mut rng = seed.child("octave", k as u64).rng();
        let noise: Vec<f32> = (0..ow * oh).map(|_| (s * rng.sample::<f64, _>(StandardNormal)) as f32).collect();
        let up = bicubic_resize(&Raster::new(ow, oh, noise)?, w, h);
        acc.iter_mut().zip(up.pixels()).for_each(|(a, v)| *a += *v as f64);
    }
    let n = acc.len() as f64;
    let m = acc.iter().sum::<f64>() / n;
    let sd = (acc.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
    let data = acc
        .iter()
        .map(|v| {
            let z = if sd > 0.0 { (v - m) / sd } else { 0.0 };
            (mean + std * z).clamp(0.0, 1.0) as f32
        })
        .collect();
    Raster::new(w, h, data)
}

/// Overlays white with opacity `fog`.
pub fn apply_fog(img: &Image, fog: &AlphaMask) -> Result<Image> {
    img.check_same_dims(fog)?;
    Ok(Raster::from_fn(img.width(), img.height(), |x, y| {
        let a = fog.get(x, y);
        img.get(x, y).map(|c| a + (1.0 - a) * c)
    }))
}
