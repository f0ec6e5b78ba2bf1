//! Layer motion as a bilinear grid warp.
//!
//! Rigid motion, perspective distortion and freeform vertex jitter are all
//! baked into one n x n lattice of displaced vertices. The dense flow is the
//! bilinear interpolation of the vertex displacements; frame 2 is produced by
//! locating, for each destination pixel, the warped cell that contains it and
//! inverting that cell's bilinear map in closed form.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{bilinear_sample, FlowField, Pixel, Raster};
use crate::rng::{sample_symmetric, SeedPath};

pub type Point = [f64; 2];

/// Resampling attempts before a folding warp is given up on.
pub const MAX_ATTEMPTS: usize = 16;
const INSIDE_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionParams {
    /// Scale factor is `p_s^U`; must be >= 1.
    pub p_s: f64,
    /// Rotation angle is `pi * p_r * U`.
    pub p_r: f64,
    /// Translation along each axis is `size * p_t * U`.
    pub p_t: f64,
    /// Vertex jitter along each axis is `0.5 * cell * p_g * U`.
    pub p_g: f64,
    pub grid_size: u32,
    /// Corner jitter of the 2x2 perspective grid for foreground layers.
    pub perspective_strength: f64,
    pub background_perspective_strength: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            p_s: 1.3,
            p_r: 0.1,
            p_t: 0.1,
            p_g: 0.2,
            grid_size: 4,
            perspective_strength: 0.05,
            background_perspective_strength: 0.05,
        }
    }
}

impl MotionParams {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.p_s >= 1.0) {
            return bad(format!("p_s = {} must be >= 1", self.p_s));
        }
        for (name, v) in [
            ("p_r", self.p_r),
            ("p_t", self.p_t),
            ("p_g", self.p_g),
            ("perspective_strength", self.perspective_strength),
            ("background_perspective_strength", self.background_perspective_strength),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} = {v} must be >= 0"));
            }
        }
        if self.grid_size < 2 {
            return bad(format!("grid_size = {} < 2", self.grid_size));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Foreground,
    Background,
}

/// Similarity transform about a center: `c + scale * R(angle) * (x - c) + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rigid {
    pub scale: f64,
    pub angle: f64,
    pub translation: Point,
    pub center: Point,
}

impl Rigid {
    pub const IDENTITY: Rigid = Rigid { scale: 1.0, angle: 0.0, translation: [0.0, 0.0], center: [0.0, 0.0] };

    /// Maps unit draws `u` (each in [-1, 1]) through the scale/rotation/translation formulas.
    pub fn from_draws(p: &MotionParams, frame: (usize, usize), center: Point, u_scale: f64, u_angle: f64, u_t: Point) -> Self {
        Rigid {
            scale: p.p_s.powf(u_scale),
            angle: PI * p.p_r * u_angle,
            translation: [frame.0 as f64 * p.p_t * u_t[0], frame.1 as f64 * p.p_t * u_t[1]],
            center,
        }
    }

    pub fn apply(&self, x: Point) -> Point {
        let (s, c) = self.angle.sin_cos();
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        [
            self.center[0] + self.scale * (c * dx - s * dy) + self.translation[0],
            self.center[1] + self.scale * (s * dx + c * dy) + self.translation[1],
        ]
    }
}

/// An n x n lattice spanning the pixel-center extent of a frame, with
/// displaced destination vertices. Vertex `(i, j)` is row `i`, column `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWarp {
    n: usize,
    frame: (usize, usize),
    src: Vec<Point>,
    dst: Vec<Point>,
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

impl GridWarp {
    fn lattice(n: usize, frame: (usize, usize)) -> Vec<Point> {
        let cw = (frame.0 - 1) as f64 / (n - 1) as f64;
        let ch = (frame.1 - 1) as f64 / (n - 1) as f64;
        (0..n * n).map(|k| [(k % n) as f64 * cw, (k / n) as f64 * ch]).collect()
    }

    /// Bakes an arbitrary point map into the lattice.
    pub fn from_map(n: usize, frame: (usize, usize), f: impl Fn(Point) -> Point) -> Result<Self> {
        if n < 2 || frame.0 < 2 || frame.1 < 2 {
            return Err(Error::InvalidParams(format!("grid {n} on frame {}x{}", frame.0, frame.1)));
        }
        let src = Self::lattice(n, frame);
        let dst = src.iter().map(|&p| f(p)).collect();
        Ok(Self { n, frame, src, dst })
    }

    pub fn identity(n: usize, frame: (usize, usize)) -> Result<Self> {
        Self::from_map(n, frame, |p| p)
    }

    pub fn from_vertices(n: usize, frame: (usize, usize), dst: Vec<Point>) -> Result<Self> {
        let mut g = Self::identity(n, frame)?;
        if dst.len() != n * n {
            return Err(Error::DimensionMismatch { expected: format!("{} vertices", n * n), actual: format!("{}", dst.len()) });
        }
        g.dst = dst;
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn frame(&self) -> (usize, usize) {
        self.frame
    }

    pub fn vertices_src(&self) -> &[Point] {
        &self.src
    }

    pub fn vertices_dst(&self) -> &[Point] {
        &self.dst
    }

    pub fn cell_size(&self) -> Point {
        [(self.frame.0 - 1) as f64 / (self.n - 1) as f64, (self.frame.1 - 1) as f64 / (self.n - 1) as f64]
    }

    /// Destination corners of cell `(row, col)` as `[p00, p10, p11, p01]`.
    pub fn cell_dst(&self, row: usize, col: usize) -> [Point; 4] {
        let n = self.n;
        let k = row * n + col;
        [self.dst[k], self.dst[k + 1], self.dst[k + n + 1], self.dst[k + n]]
    }

    pub fn cell_src(&self, row: usize, col: usize) -> [Point; 4] {
        let n = self.n;
        let k = row * n + col;
        [self.src[k], self.src[k + 1], self.src[k + n + 1], self.src[k + n]]
    }

    /// True when every destination cell has a positive bilinear Jacobian.
    ///
    /// The Jacobian determinant is bilinear in (u, v), so positivity at the
    /// four corners implies positivity over the whole cell.
    pub fn is_fold_free(&self) -> bool {
        (0..self.n - 1).all(|r| (0..self.n - 1).all(|c| cell_is_positive(&self.cell_dst(r, c))))
    }

    /// Vertex displacement interpolated at a real source position.
    pub fn displacement_at(&self, x: f64, y: f64) -> Point {
        let [cw, ch] = self.cell_size();
        let m = (self.n - 2) as f64;
        let gx = x / cw;
        let gy = y / ch;
        let col = gx.floor().clamp(0.0, m);
        let row = gy.floor().clamp(0.0, m);
        let fx = gx - col;
        let fy = gy - row;
        let k = row as usize * self.n + col as usize;
        let d = |i: usize| sub(self.dst[i], self.src[i]);
        let (d00, d10, d01, d11) = (d(k), d(k + 1), d(k + self.n), d(k + self.n + 1));
        std::array::from_fn(|c| {
            let top = d00[c] + (d10[c] - d00[c]) * fx;
            let bottom = d01[c] + (d11[c] - d01[c]) * fx;
            top + (bottom - top) * fy
        })
    }

    /// Where a source position lands in frame 2.
    pub fn map_point(&self, p: Point) -> Point {
        let d = self.displacement_at(p[0], p[1]);
        [p[0] + d[0], p[1] + d[1]]
    }

    /// Source position of destination point `p`, or `None` outside the warped grid.
    pub fn inverse_point(&self, p: Point) -> Option<Point> {
        match self.locate(p) {
            Located::Inside { row, col, uv } => Some(self.src_point(row, col, uv)),
            Located::Outside { .. } => None,
        }
    }

    fn src_point(&self, row: usize, col: usize, uv: (f64, f64)) -> Point {
        let [cw, ch] = self.cell_size();
        [(col as f64 + uv.0) * cw, (row as f64 + uv.1) * ch]
    }

    fn locate(&self, p: Point) -> Located {
        let [cw, ch] = self.cell_size();
        let m = (self.n - 2) as i64;
        let mut col = ((p[0] / cw).floor() as i64).clamp(0, m);
        let mut row = ((p[1] / ch).floor() as i64).clamp(0, m);
        let mut last = None;
        for _ in 0..(2 * self.n + 4) {
            let cell = self.cell_dst(row as usize, col as usize);
            let Some((u, v)) = solve_bilinear(&cell, p) else { break };
            last = Some((row as usize, col as usize, (u, v)));
            if let Some(uv) = accept(u, v) {
                return Located::Inside { row: row as usize, col: col as usize, uv };
            }
            let dc = if u < -INSIDE_EPS { -1 } else if u > 1.0 + INSIDE_EPS { 1 } else { 0 };
            let dr = if v < -INSIDE_EPS { -1 } else if v > 1.0 + INSIDE_EPS { 1 } else { 0 };
            let (nr, nc) = (row + dr, col + dc);
            if nr < 0 || nc < 0 || nr > m || nc > m {
                break;
            }
            row = nr;
            col = nc;
        }
        // Exhaustive scan over cells whose bounding box contains the point.
        for r in 0..self.n - 1 {
            for c in 0..self.n - 1 {
                let cell = self.cell_dst(r, c);
                if !in_bbox(&cell, p) {
                    continue;
                }
                if let Some(uv) = invert_bilinear(&cell, p) {
                    return Located::Inside { row: r, col: c, uv };
                }
            }
        }
        Located::Outside { last }
    }
}

enum Located {
    Inside { row: usize, col: usize, uv: (f64, f64) },
    Outside { last: Option<(usize, usize, (f64, f64))> },
}

fn in_bbox(cell: &[Point; 4], p: Point) -> bool {
    let tol = 1e-7;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for q in cell {
        for d in 0..2 {
            lo[d] = lo[d].min(q[d]);
            hi[d] = hi[d].max(q[d]);
        }
    }
    (0..2).all(|d| p[d] >= lo[d] - tol && p[d] <= hi[d] + tol)
}

fn cell_is_positive(c: &[Point; 4]) -> bool {
    let [a, b, cc, d] = *c;
    cross(sub(b, a), sub(d, a)) > 0.0
        && cross(sub(b, a), sub(cc, b)) > 0.0
        && cross(sub(cc, d), sub(d, a)) > 0.0
        && cross(sub(cc, d), sub(cc, b)) > 0.0
}

fn accept(u: f64, v: f64) -> Option<(f64, f64)> {
    let ok = |t: f64| (-INSIDE_EPS..=1.0 + INSIDE_EPS).contains(&t);
    (ok(u) && ok(v)).then(|| (u.clamp(0.0, 1.0), v.clamp(0.0, 1.0)))
}

/// Bilinear map of a cell given as `[p00, p10, p11, p01]`.
pub fn bilinear_point(cell: &[Point; 4], u: f64, v: f64) -> Point {
    let [a, b, c, d] = *cell;
    std::array::from_fn(|k| {
        let top = a[k] + (b[k] - a[k]) * u;
        let bottom = d[k] + (c[k] - d[k]) * u;
        top + (bottom - top) * v
    })
}

/// Solves `bilinear(cell, u, v) = p` for real (u, v), returning the root
/// closest to the unit square (possibly outside it).
///
/// With `e = p10 - p00`, `f = p01 - p00`, `g = p00 - p10 + p11 - p01` and
/// `h = p - p00`, eliminating u gives `k2 v^2 + k1 v + k0 = 0` where
/// `k2 = g x f`, `k1 = e x f + h x g`, `k0 = h x e`.
fn solve_bilinear(cell: &[Point; 4], p: Point) -> Option<(f64, f64)> {
    let [a, b, c, d] = *cell;
    let e = sub(b, a);
    let f = sub(d, a);
    let g = [a[0] - b[0] + c[0] - d[0], a[1] - b[1] + c[1] - d[1]];
    let h = sub(p, a);
    let k2 = cross(g, f);
    let k1 = cross(e, f) + cross(h, g);
    let k0 = cross(h, e);

    let mut roots = [f64::NAN; 2];
    if k2 == 0.0 {
        if k1 == 0.0 {
            return None;
        }
        roots[0] = -k0 / k1;
    } else {
        let disc = k1 * k1 - 4.0 * k2 * k0;
        let scale = (k1 * k1).max((4.0 * k2 * k0).abs());
        let disc = if disc < 0.0 && disc > -1e-12 * scale { 0.0 } else { disc };
        if disc < 0.0 {
            return None;
        }
        // Cancellation-free form of the two roots.
        let q = -0.5 * (k1 + k1.signum() * disc.sqrt());
        if q == 0.0 {
            roots[0] = 0.0;
        } else {
            roots[0] = q / k2;
            roots[1] = k0 / q;
        }
    }

    let mut best: Option<(f64, f64, f64)> = None;
    for v in roots.into_iter().filter(|v| v.is_finite()) {
        // Least-squares u from u (e + v g) = h - v f.
        let den = [e[0] + v * g[0], e[1] + v * g[1]];
        let num = [h[0] - v * f[0], h[1] - v * f[1]];
        let nn = den[0] * den[0] + den[1] * den[1];
        if nn == 0.0 {
            continue;
        }
        let u = (num[0] * den[0] + num[1] * den[1]) / nn;
        let out = |t: f64| if t < 0.0 { -t } else if t > 1.0 { t - 1.0 } else { 0.0 };
        let dist = out(u) + out(v);
        if best.is_none_or(|b| dist < b.2) {
            best = Some((u, v, dist));
        }
    }
    best.map(|(u, v, _)| (u, v))
}

/// Local coordinates of `p` inside a positively oriented cell, or `None` when
/// the point lies outside it.
pub fn invert_bilinear(cell: &[Point; 4], p: Point) -> Option<(f64, f64)> {
    let (u, v) = solve_bilinear(cell, p)?;
    accept(u, v)
}

/// How destination pixels outside the warped grid are filled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outside {
    /// Sample the nearest point of the source grid boundary.
    Clamp,
    /// Write zero (masks: the object moved away).
    Zero,
}

/// Frame 2 of `src` under `g`, by per-destination inverse lookup.
pub fn forward_warp<P: Pixel>(src: &Raster<P>, g: &GridWarp, outside: Outside) -> Result<Raster<P>> {
    if src.dims() != g.frame {
        return Err(Error::dims(g.frame, src.dims()));
    }
    Ok(Raster::from_fn(src.width(), src.height(), |x, y| {
        let p = [x as f64, y as f64];
        match g.locate(p) {
            Located::Inside { row, col, uv } => {
                let s = g.src_point(row, col, uv).map(snap);
                bilinear_sample(src, s[0], s[1])
            }
            Located::Outside { last } => match outside {
                Outside::Zero => P::zero(),
                Outside::Clamp => {
                    let s = match last {
                        Some((row, col, (u, v))) => g.src_point(row, col, (u.clamp(0.0, 1.0), v.clamp(0.0, 1.0))),
                        None => p,
                    };
                    bilinear_sample(src, s[0], s[1])
                }
            },
        }
    }))
}

/// Rounds away solver noise around lattice coordinates.
fn snap(t: f64) -> f64 {
    let r = t.round();
    if (t - r).abs() < 1e-9 {
        r
    } else {
        t
    }
}

/// Dense flow: the interpolated vertex displacement at every pixel center.
pub fn flow_field(g: &GridWarp) -> FlowField {
    Raster::from_fn(g.frame.0, g.frame.1, |x, y| {
        let d = g.displacement_at(x as f64, y as f64);
        [d[0] as f32, d[1] as f32]
    })
}

/// Samples a fold-free layer motion.
///
/// Foreground: scale, rotation and translation about `center`, then a 2x2
/// perspective corner jitter over the frame, then per-vertex jitter, all baked
/// into a `grid_size` lattice. Background: perspective corner jitter only, on
/// a 2x2 lattice.
pub fn sample_motion(p: &MotionParams, kind: LayerKind, frame: (usize, usize), center: Point, seed: &SeedPath) -> Result<GridWarp> {
    p.check()?;
    for attempt in 0..MAX_ATTEMPTS as u64 {
        let mut rng = seed.child("attempt", attempt).rng();
        let g = match kind {
            LayerKind::Background => {
                let persp = perspective_offsets(p.background_perspective_strength, frame, &mut rng);
                GridWarp::from_map(2, frame, |x| apply_perspective(&persp, frame, x))?
            }
            LayerKind::Foreground => {
                let u_scale = sample_symmetric(&mut rng);
                let u_angle = sample_symmetric(&mut rng);
                let u_t = [sample_symmetric(&mut rng), sample_symmetric(&mut rng)];
                let rigid = Rigid::from_draws(p, frame, center, u_scale, u_angle, u_t);
                let persp = perspective_offsets(p.perspective_strength, frame, &mut rng);
                let n = p.grid_size as usize;
                let mut g = GridWarp::from_map(n, frame, |x| apply_perspective(&persp, frame, rigid.apply(x)))?;
                let [cw, ch] = g.cell_size();
                for v in g.dst.iter_mut() {
                    v[0] += 0.5 * cw * p.p_g * sample_symmetric(&mut rng);
                    v[1] += 0.5 * ch * p.p_g * sample_symmetric(&mut rng);
                }
                g
            }
        };
        if g.is_fold_free() {
            return Ok(g);
        }
    }
    Err(Error::FoldUnrecoverable { attempts: MAX_ATTEMPTS })
}

/// Independent offsets of the four frame corners, `0.5 * (size - 1) * strength * U` per axis.
fn perspective_offsets<R: Rng + ?Sized>(strength: f64, frame: (usize, usize), rng: &mut R) -> [Point; 4] {
    let ext = [(frame.0 - 1) as f64, (frame.1 - 1) as f64];
    std::array::from_fn(|_| {
        let ox = 0.5 * ext[0] * strength * sample_symmetric(rng);
        let oy = 0.5 * ext[1] * strength * sample_symmetric(rng);
        [ox, oy]
    })
}

/// Adds the bilinearly interpolated corner offsets (`[o00, o10, o11, o01]`) to `x`.
fn apply_perspective(offsets: &[Point; 4], frame: (usize, usize), x: Point) -> Point {
    let u = x[0] / (frame.0 - 1) as f64;
    let v = x[1] / (frame.1 - 1) as f64;
    let o = bilinear_point(offsets, u, v);
    [x[0] + o[0], x[1] + o[1]]
}
