//! Row-major rasters with pixel centers at integer coordinates.

use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::par;

/// A pixel type made of `CHANNELS` real components.
pub trait Pixel: Copy + Send + Sync + Debug + PartialEq + 'static {
    const CHANNELS: usize;
    fn channel(&self, c: usize) -> f64;
    fn from_channels(f: impl FnMut(usize) -> f64) -> Self;

    fn zero() -> Self {
        Self::from_channels(|_| 0.0)
    }
}

impl Pixel for f32 {
    const CHANNELS: usize = 1;
    fn channel(&self, _c: usize) -> f64 {
        *self as f64
    }
    fn from_channels(mut f: impl FnMut(usize) -> f64) -> Self {
        f(0) as f32
    }
}

macro_rules! array_pixel {
    ($t:ty, $n:expr) => {
        impl Pixel for [$t; $n] {
            const CHANNELS: usize = $n;
            fn channel(&self, c: usize) -> f64 {
                self[c] as f64
            }
            fn from_channels(f: impl FnMut(usize) -> f64) -> Self {
                let mut f = f;
                std::array::from_fn(|c| f(c) as $t)
            }
        }
    };
}

array_pixel!(f32, 2);
array_pixel!(f32, 3);
array_pixel!(f64, 2);

#[derive(Clone, Debug, PartialEq)]
pub struct Raster<P> {
    width: usize,
    height: usize,
    data: Vec<P>,
}

/// RGB image with channel values in [0, 1].
pub type Image = Raster<[f32; 3]>;
/// Per-pixel opacity in [0, 1].
pub type AlphaMask = Raster<f32>;
/// Per-pixel (u, v) displacement from frame 1 to frame 2, in pixels.
pub type FlowField = Raster<[f32; 2]>;

impl<P: Pixel> Raster<P> {
    pub fn new(width: usize, height: usize, data: Vec<P>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParams(format!("raster size {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} pixels", width * height),
                actual: format!("{} pixels", data.len()),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: P) -> Self {
        assert!(width > 0 && height > 0, "raster must be non-empty");
        Self { width, height, data: vec![value; width * height] }
    }

    /// Builds a raster by evaluating `f(x, y)` at every pixel (rows in parallel).
    pub fn from_fn<F>(width: usize, height: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> P + Sync + Send,
    {
        assert!(width > 0 && height > 0, "raster must be non-empty");
        let mut data = vec![P::zero(); width * height];
        par::for_each_row(&mut data, width, |y, row| {
            for (x, px) in row.iter_mut().enumerate() {
                *px = f(x, y);
            }
        });
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> P {
        self.data[y * self.width + x]
    }

    pub fn pixels(&self) -> &[P] {
        &self.data
    }

    pub fn into_pixels(self) -> Vec<P> {
        self.data
    }

    pub fn map<Q: Pixel>(&self, f: impl Fn(P) -> Q + Sync + Send) -> Raster<Q> {
        Raster::from_fn(self.width, self.height, |x, y| f(self.get(x, y)))
    }

    pub(crate) fn check_same_dims<Q>(&self, other: &Raster<Q>) -> Result<()> {
        let theirs = (other.width, other.height);
        if (self.width, self.height) != theirs {
            return Err(Error::dims((self.width, self.height), theirs));
        }
        Ok(())
    }

    /// Bilinear interpolation at real coordinates, clamped to the pixel-center extent.
    pub fn sample(&self, x: f64, y: f64) -> P {
        bilinear_sample(self, x, y)
    }
}

/// Bilinear interpolation of the four pixel centers around `(x, y)`.
///
/// Coordinates outside `[0, W-1] x [0, H-1]` are clamped to the border. At
/// integer coordinates the stored pixel is returned exactly.
pub fn bilinear_sample<P: Pixel>(img: &Raster<P>, x: f64, y: f64) -> P {
    let xm = (img.width - 1) as f64;
    let ym = (img.height - 1) as f64;
    let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, xm) };
    let y = if y.is_nan() { 0.0 } else { y.clamp(0.0, ym) };
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p00 = img.get(x0, y0);
    let p10 = img.get(x1, y0);
    let p01 = img.get(x0, y1);
    let p11 = img.get(x1, y1);
    P::from_channels(|c| {
        let a = p00.channel(c);
        let b = p10.channel(c);
        let top = a + (b - a) * fx;
        let d = p01.channel(c);
        let e = p11.channel(c);
        let bottom = d + (e - d) * fx;
        top + (bottom - top) * fy
    })
}

/// Thresholds a mask at its middle value; exactly 0.5 maps to 1.
pub fn binarize(mask: &AlphaMask) -> AlphaMask {
    mask.map(|a| if a >= 0.5 { 1.0 } else { 0.0 })
}

impl Raster<[f32; 3]> {
    /// Every channel finite and inside [0, 1].
    pub fn is_unit_range(&self) -> bool {
        self.data.iter().flatten().all(|v| v.is_finite() && (0.0..=1.0).contains(v))
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().flatten().map(|&v| quantize(v)).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(Error::DimensionMismatch {
                expected: format!("{} bytes", width * height * 3),
                actual: format!("{} bytes", bytes.len()),
            });
        }
        let data = bytes
            .chunks_exact(3)
            .map(|c| [c[0] as f32 / 255.0, c[1] as f32 / 255.0, c[2] as f32 / 255.0])
            .collect();
        Raster::new(width, height, data)
    }

    /// The image as it reads back after an 8-bit round trip.
    pub fn quantized(&self) -> Self {
        self.map(|p| p.map(|v| quantize(v) as f32 / 255.0))
    }

    /// Resamples to a new size by bilinear interpolation (pixel-center aligned).
    pub fn resize(&self, width: usize, height: usize) -> Self {
        resize(self, width, height)
    }
}

impl Raster<f32> {
    pub fn is_unit_range(&self) -> bool {
        self.data.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }
}

impl Raster<[f32; 2]> {
    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|v| v.is_finite())
    }
}

pub(crate) fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Pixel-center aligned bilinear resize.
pub fn resize<P: Pixel>(src: &Raster<P>, width: usize, height: usize) -> Raster<P> {
    if src.dims() == (width, height) {
        return src.clone();
    }
    let sx = src.width as f64 / width as f64;
    let sy = src.height as f64 / height as f64;
    Raster::from_fn(width, height, |x, y| {
        bilinear_sample(src, (x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_image_samples_constant() {
        let img = Image::filled(7, 5, [0.3, 0.6, 0.9]);
        for &(x, y) in &[(0.0, 0.0), (2.37, 1.91), (6.0, 4.0), (-3.0, 10.0), (5.5, 0.25)] {
            assert_eq!(img.sample(x, y), [0.3, 0.6, 0.9]);
        }
    }

    #[test]
    fn lattice_point_returns_stored_pixel() {
        let img = AlphaMask::from_fn(8, 8, |x, y| (x * 8 + y) as f32 / 64.0);
        assert_eq!(img.sample(3.0, 5.0), img.get(3, 5));
    }

    #[test]
    fn two_by_two_checker_center() {
        let img = AlphaMask::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((img.sample(0.5, 0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_is_edge_clamped() {
        let img = AlphaMask::new(2, 1, vec![0.25, 0.75]).unwrap();
        assert_eq!(img.sample(-4.0, 0.0), 0.25);
        assert_eq!(img.sample(9.0, 3.0), 0.75);
    }

    #[test]
    fn binarize_threshold_and_tie() {
        let m = AlphaMask::new(3, 1, vec![0.7, 0.3, 0.5]).unwrap();
        assert_eq!(binarize(&m).pixels(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn new_rejects_bad_length() {
        assert!(matches!(AlphaMask::new(2, 2, vec![0.0; 3]), Err(Error::DimensionMismatch { .. })));
        assert!(AlphaMask::new(0, 2, vec![]).is_err());
    }

    proptest! {
        #[test]
        fn binarize_is_idempotent(vals in prop::collection::vec(0.0f32..=1.0, 16)) {
            let m = AlphaMask::new(4, 4, vals).unwrap();
            let b = binarize(&m);
            prop_assert_eq!(binarize(&b), b);
        }

        #[test]
        fn linear_along_rows_of_bilinear_image(
            a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -0.1f64..0.1,
            x in 0.0f64..9.0, y in 0.0f64..9.0,
        ) {
            // f(x, y) = a + b x + c y + d x y is reproduced exactly by bilinear interpolation.
            let f = |x: f64, y: f64| a + b * x + c * y + d * x * y;
            let img = Raster::<[f64; 2]>::from_fn(10, 10, |px, py| [f(px as f64, py as f64), 0.0]);
            prop_assert!((img.sample(x, y)[0] - f(x, y)).abs() < 1e-12);
        }
    }
}
