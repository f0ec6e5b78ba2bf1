//! Foreground object masks: random star-shaped polygons with optional holes,
//! Chaikin smoothing, 4x4 supersampled rasterization and Gaussian feathering.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{convolve_separable, gaussian_kernel};
use crate::raster::{bilinear_sample, AlphaMask, Raster};
use crate::rng::{sample_int, sample_uniform, SeedPath};

/// Vertex radii are drawn from this band around the unit radius.
pub const RADIUS_BAND: (f64, f64) = (0.4, 1.0);
/// Resampling attempts before a mask is declared degenerate.
pub const MAX_ATTEMPTS: usize = 16;
const SUPERSAMPLE: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskParams {
    pub sides_min: u32,
    pub sides_max: u32,
    /// Largest hole bounding-box diagonal relative to the outer polygon's.
    pub hole_max_rel_diag: f64,
    pub subdivisions: u32,
    /// Object bounding-box diagonal relative to the image diagonal.
    pub size_min_rel: f64,
    pub size_max_rel: f64,
    /// Object center relative to the image dimensions.
    pub center_min_rel: f64,
    pub center_max_rel: f64,
    pub blur_prob: f64,
    /// Largest feathering sigma in pixels.
    pub blur_strength: f64,
}

impl Default for MaskParams {
    fn default() -> Self {
        Self {
            sides_min: 3,
            sides_max: 8,
            hole_max_rel_diag: 0.4,
            subdivisions: 1,
            size_min_rel: 0.15,
            size_max_rel: 0.6,
            center_min_rel: 0.0,
            center_max_rel: 1.0,
            blur_prob: 0.5,
            blur_strength: 2.0,
        }
    }
}

impl MaskParams {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.sides_min < 3 {
            return bad(format!("sides_min = {} < 3", self.sides_min));
        }
        if self.sides_min > self.sides_max {
            return bad(format!("sides_min {} > sides_max {}", self.sides_min, self.sides_max));
        }
        if self.size_min_rel > self.size_max_rel {
            return bad(format!("size_min_rel {} > size_max_rel {}", self.size_min_rel, self.size_max_rel));
        }
        if self.center_min_rel > self.center_max_rel {
            return bad(format!("center_min_rel {} > center_max_rel {}", self.center_min_rel, self.center_max_rel));
        }
        for (name, v) in [
            ("hole_max_rel_diag", self.hole_max_rel_diag),
            ("size_min_rel", self.size_min_rel),
            ("blur_strength", self.blur_strength),
        ] {
            if !(v >= 0.0) {
                return bad(format!("{name} = {v} must be >= 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.blur_prob) {
            return bad(format!("blur_prob = {} outside [0, 1]", self.blur_prob));
        }
        Ok(())
    }
}

pub type Point = [f64; 2];

#[derive(Clone, Debug, PartialEq)]
pub struct PolygonSpec {
    pub outer: Vec<Point>,
    pub hole: Option<Vec<Point>>,
    pub subdivisions: u32,
}

/// Signed shoelace area.
pub fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

fn bbox(ring: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in ring {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (lo, hi)
}

fn map_ring(ring: &[Point], f: impl Fn(Point) -> Point) -> Vec<Point> {
    ring.iter().map(|&p| f(p)).collect()
}

impl PolygonSpec {
    /// Outer area minus hole area.
    pub fn area(&self) -> f64 {
        signed_area(&self.outer).abs() - self.hole.as_deref().map_or(0.0, |h| signed_area(h).abs())
    }

    pub fn bbox(&self) -> (Point, Point) {
        bbox(&self.outer)
    }

    pub fn bbox_diag(&self) -> f64 {
        let (lo, hi) = self.bbox();
        (hi[0] - lo[0]).hypot(hi[1] - lo[1])
    }

    pub fn transformed(&self, f: impl Fn(Point) -> Point + Copy) -> Self {
        Self {
            outer: map_ring(&self.outer, f),
            hole: self.hole.as_ref().map(|h| map_ring(h, f)),
            subdivisions: self.subdivisions,
        }
    }

    /// Scales the polygon to `target_diag` and moves its bounding-box center to `center`.
    pub fn placed(&self, center: Point, target_diag: f64) -> Self {
        let (lo, hi) = self.bbox();
        let c = [(lo[0] + hi[0]) * 0.5, (lo[1] + hi[1]) * 0.5];
        let diag = self.bbox_diag();
        let s = if diag > 0.0 { target_diag / diag } else { 0.0 };
        self.transformed(|p| [center[0] + s * (p[0] - c[0]), center[1] + s * (p[1] - c[1])])
    }
}

/// One round of Chaikin corner cutting on a closed ring; doubles the vertex count.
pub fn chaikin(ring: &[Point]) -> Vec<Point> {
    let n = ring.len();
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        out.push([0.75 * a[0] + 0.25 * b[0], 0.75 * a[1] + 0.25 * b[1]]);
        out.push([0.25 * a[0] + 0.75 * b[0], 0.25 * a[1] + 0.75 * b[1]]);
    }
    out
}

/// Star-shaped ring around the origin: sorted uniform angles (no angular gap
/// of pi or more, so the origin is interior) and radii in [`RADIUS_BAND`].
fn star_ring<R: Rng + ?Sized>(sides: usize, rng: &mut R) -> Vec<Point> {
    let mut angles: Vec<f64>;
    loop {
        angles = (0..sides).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        angles.sort_by(f64::total_cmp);
        let wrap = angles[0] + 2.0 * PI - angles[sides - 1];
        let max_gap = angles.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max);
        if max_gap < PI {
            break;
        }
    }
    angles
        .iter()
        .map(|&a| {
            let r = RADIUS_BAND.0 + (RADIUS_BAND.1 - RADIUS_BAND.0) * rng.random::<f64>();
            [r * a.cos(), r * a.sin()]
        })
        .collect()
}

pub fn generate_polygon(p: &MaskParams, seed: &SeedPath) -> Result<PolygonSpec> {
    p.check()?;
    let mut rng = seed.rng();
    let sides = sample_int(p.sides_min, p.sides_max, &mut rng)? as usize;
    let mut outer = star_ring(sides, &mut rng);

    let mut hole = None;
    if p.hole_max_rel_diag > 0.0 && rng.random_bool(0.5) {
        let hole_sides = sample_int(p.sides_min, p.sides_max, &mut rng)? as usize;
        let ring = star_ring(hole_sides, &mut rng);
        let rel = sample_uniform(0.5, 1.0, &mut rng)? * p.hole_max_rel_diag.min(1.0);
        let (olo, ohi) = bbox(&outer);
        let (hlo, hhi) = bbox(&ring);
        let (ow, oh) = (ohi[0] - olo[0], ohi[1] - olo[1]);
        let (hw, hh) = (hhi[0] - hlo[0], hhi[1] - hlo[1]);
        // Fit inside the outer bounding box as well as under the diagonal cap.
        let s = (rel * ow.hypot(oh) / hw.hypot(hh)).min(rel * ow / hw).min(rel * oh / hh);
        let oc = [(olo[0] + ohi[0]) * 0.5, (olo[1] + ohi[1]) * 0.5];
        let hc = [(hlo[0] + hhi[0]) * 0.5, (hlo[1] + hhi[1]) * 0.5];
        hole = Some(map_ring(&ring, |q| [oc[0] + s * (q[0] - hc[0]), oc[1] + s * (q[1] - hc[1])]));
    }

    for _ in 0..p.subdivisions {
        outer = chaikin(&outer);
        hole = hole.map(|h| chaikin(&h));
    }
    Ok(PolygonSpec { outer, hole, subdivisions: p.subdivisions })
}

/// Anti-aliased even-odd coverage of `poly` (already in pixel coordinates).
pub fn rasterize(poly: &PolygonSpec, w: usize, h: usize) -> Result<AlphaMask> {
    let area = poly.area();
    if !(area >= 1.0) {
        return Err(Error::DegeneratePolygon { area });
    }
    let mut edges: Vec<(Point, Point)> = Vec::new();
    for ring in std::iter::once(&poly.outer).chain(poly.hole.iter()) {
        let n = ring.len();
        edges.extend((0..n).map(|i| (ring[i], ring[(i + 1) % n])));
    }
    let ss = SUPERSAMPLE as f64;
    let total = (SUPERSAMPLE * SUPERSAMPLE) as f32;
    let mut data = vec![0.0f32; w * h];
    crate::par::for_each_row(&mut data, w, |y, row| {
        let subs = w * SUPERSAMPLE;
        let mut counts = vec![0u32; w];
        let mut diff = vec![0i32; subs + 1];
        let mut xs = Vec::new();
        for k in 0..SUPERSAMPLE {
            let sy = y as f64 - 0.5 + (k as f64 + 0.5) / ss;
            xs.clear();
            for &(a, b) in &edges {
                if (a[1] <= sy) != (b[1] <= sy) {
                    xs.push(a[0] + (sy - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
                }
            }
            xs.sort_by(f64::total_cmp);
            diff.iter_mut().for_each(|d| *d = 0);
            for span in xs.chunks_exact(2) {
                // Sub-sample s has center (s + 0.5) / ss - 0.5.
                let start = (ss * span[0] + 0.5 * ss - 0.5).ceil().clamp(0.0, subs as f64) as usize;
                let end = (ss * span[1] + 0.5 * ss - 0.5).ceil().clamp(0.0, subs as f64) as usize;
                if start < end {
                    diff[start] += 1;
                    diff[end] -= 1;
                }
            }
            let mut run = 0i32;
            for (s, d) in diff.iter().take(subs).enumerate() {
                run += d;
                if run > 0 {
                    counts[s / SUPERSAMPLE] += 1;
                }
            }
        }
        for (px, c) in row.iter_mut().zip(&counts) {
            *px = *c as f32 / total;
        }
    });
    Raster::new(w, h, data)
}

/// Gaussian feathering with edge clamping; `sigma == 0` is the identity.
pub fn feather(mask: &AlphaMask, sigma: f64) -> AlphaMask {
    if !(sigma > 0.0) {
        return mask.clone();
    }
    let k = gaussian_kernel(sigma);
    convolve_separable(mask, Some(&k), Some(&k)).map(|v: f32| v.clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Placement {
    pub center: Point,
    pub target_diag: f64,
}

pub fn place_object(p: &MaskParams, frame: (usize, usize), seed: &SeedPath) -> Result<Placement> {
    if p.size_min_rel > p.size_max_rel || p.center_min_rel > p.center_max_rel {
        return Err(Error::InvalidParams("inverted placement range".into()));
    }
    let mut rng = seed.rng();
    let (w, h) = (frame.0 as f64, frame.1 as f64);
    let diag = w.hypot(h);
    let target_diag = sample_uniform(p.size_min_rel, p.size_max_rel, &mut rng)? * diag;
    let cx = sample_uniform(p.center_min_rel, p.center_max_rel, &mut rng)? * w;
    let cy = sample_uniform(p.center_min_rel, p.center_max_rel, &mut rng)? * h;
    Ok(Placement { center: [cx, cy], target_diag })
}

/// Source of foreground object shapes.
#[derive(Clone, Debug, Default)]
pub enum MaskSource {
    #[default]
    Polygons,
    /// User-supplied grayscale masks (bright = object).
    Images(Vec<AlphaMask>),
}

impl MaskSource {
    /// Loads every image file in `dir` (lexicographic order) as a mask.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut masks = Vec::new();
        for path in crate::io::list_files(dir, &["png", "jpg", "jpeg", "bmp", "tif", "tiff"])? {
            let img = image::open(&path)?.to_luma32f();
            let (w, h) = (img.width() as usize, img.height() as usize);
            masks.push(Raster::new(w, h, img.into_raw().into_iter().map(|v| v.clamp(0.0, 1.0)).collect())?);
        }
        if masks.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(MaskSource::Images(masks))
    }
}

/// A placed, feathered object mask and where it was put.
#[derive(Clone, Debug)]
pub struct ObjectMask {
    pub mask: AlphaMask,
    pub placement: Placement,
}

/// Pastes a mask image so that its diagonal equals the placement's and its
/// center sits at the placement center; pixels outside it are 0.
pub fn place_mask_image(src: &AlphaMask, placement: Placement, frame: (usize, usize)) -> AlphaMask {
    let (sw, sh) = (src.width() as f64, src.height() as f64);
    let s = placement.target_diag / sw.hypot(sh);
    let [cx, cy] = placement.center;
    Raster::from_fn(frame.0, frame.1, |x, y| {
        let u = (x as f64 - cx) / s + sw * 0.5 - 0.5;
        let v = (y as f64 - cy) / s + sh * 0.5 - 0.5;
        if u < -0.5 || v < -0.5 || u >= sw - 0.5 || v >= sh - 0.5 {
            0.0
        } else {
            bilinear_sample(src, u, v)
        }
    })
}

/// Samples one foreground object mask, resampling degenerate draws.
pub fn generate_mask(p: &MaskParams, source: &MaskSource, frame: (usize, usize), seed: &SeedPath) -> Result<ObjectMask> {
    p.check()?;
    let mut last_area = 0.0;
    for attempt in 0..MAX_ATTEMPTS as u64 {
        let s = seed.child("attempt", attempt);
        let placement = place_object(p, frame, &s.child("place", 0))?;
        let mask = match source {
            MaskSource::Polygons => {
                let poly = generate_polygon(p, &s.child("polygon", 0))?.placed(placement.center, placement.target_diag);
                match rasterize(&poly, frame.0, frame.1) {
                    Ok(m) => m,
                    Err(Error::DegeneratePolygon { area }) => {
                        last_area = area;
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
            MaskSource::Images(list) => {
                let pick = s.child("pick", 0).rng().random_range(0..list.len());
                place_mask_image(&list[pick], placement, frame)
            }
        };
        let mut rng = s.child("feather", 0).rng();
        let mask = if rng.random_bool(p.blur_prob) {
            feather(&mask, sample_uniform(0.0, p.blur_strength, &mut rng)?)
        } else {
            mask
        };
        if !mask.pixels().iter().any(|&v| v > 0.5) {
            last_area = mask.sum();
            continue;
        }
        return Ok(ObjectMask { mask, placement });
    }
    Err(Error::DegeneratePolygon { area: last_area })
}
