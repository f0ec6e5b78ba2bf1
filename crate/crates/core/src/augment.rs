//! RandAugment-style augmentation of rendered samples.
//!
//! Spatial operations are affine maps `A(x) = c + L (x - c) + t` about the
//! frame center, applied identically to both frames. A point `p` with flow
//! `W(p)` lands on `A p` in frame 1 and `A (p + W(p))` in frame 2, hence the
//! new flow is `W'(x) = L W(A^-1 x)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{bilinear_sample, FlowField, Image, Raster};
use crate::rng::{sample_symmetric, SeedPath};
use crate::scene::RenderedSample;

/// Level-1 bounds. Ratios interpolate geometrically with the level.
pub const MAX_ROTATION_DEG: f64 = 17.0;
pub const MAX_SCALE: f64 = 2.0;
pub const MAX_SQUEEZE: f64 = 1.25;
pub const MAX_TRANSLATION_REL: f64 = 0.1;
pub const MAX_NOISE_STD: f64 = 0.04;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentParams {
    pub num_ops: u32,
    pub level: f64,
    pub enabled_spatial: bool,
    pub enabled_color: bool,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self { num_ops: 2, level: 0.5, enabled_spatial: true, enabled_color: true }
    }
}

impl AugmentParams {
    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.level) {
            return Err(Error::InvalidParams(format!("augment level {} outside [0, 1]", self.level)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AugmentKind {
    Rotation,
    Scale,
    Squeeze,
    Translation,
    Noise,
}

impl AugmentKind {
    pub const SPATIAL: [AugmentKind; 4] = [AugmentKind::Rotation, AugmentKind::Scale, AugmentKind::Squeeze, AugmentKind::Translation];

    pub fn is_spatial(self) -> bool {
        self != AugmentKind::Noise
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AugmentOp {
    Rotation { radians: f64 },
    Scale { factor: f64 },
    /// x scaled by `factor`, y by `1 / factor`.
    Squeeze { factor: f64 },
    /// Translation as a fraction of the frame size.
    Translation { rel: [f64; 2] },
    Noise { std: f64, seed: u64 },
}

impl AugmentOp {
    pub fn kind(&self) -> AugmentKind {
        match self {
            AugmentOp::Rotation { .. } => AugmentKind::Rotation,
            AugmentOp::Scale { .. } => AugmentKind::Scale,
            AugmentOp::Squeeze { .. } => AugmentKind::Squeeze,
            AugmentOp::Translation { .. } => AugmentKind::Translation,
            AugmentOp::Noise { .. } => AugmentKind::Noise,
        }
    }

    /// The affine map of a spatial op on a frame; `None` for noise.
    pub fn affine(&self, frame: (usize, usize)) -> Option<Affine> {
        let c = [(frame.0 as f64 - 1.0) * 0.5, (frame.1 as f64 - 1.0) * 0.5];
        let (lin, t) = match *self {
            AugmentOp::Rotation { radians } => {
                let (s, co) = radians.sin_cos();
                ([[co, -s], [s, co]], [0.0, 0.0])
            }
            AugmentOp::Scale { factor } => ([[factor, 0.0], [0.0, factor]], [0.0, 0.0]),
            AugmentOp::Squeeze { factor } => ([[factor, 0.0], [0.0, 1.0 / factor]], [0.0, 0.0]),
            AugmentOp::Translation { rel } => ([[1.0, 0.0], [0.0, 1.0]], [rel[0] * frame.0 as f64, rel[1] * frame.1 as f64]),
            AugmentOp::Noise { .. } => return None,
        };
        Some(Affine { lin, center: c, translation: t })
    }
}

/// `x -> center + lin (x - center) + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub lin: [[f64; 2]; 2],
    pub center: [f64; 2],
    pub translation: [f64; 2],
}

impl Affine {
    pub fn det(&self) -> f64 {
        self.lin[0][0] * self.lin[1][1] - self.lin[0][1] * self.lin[1][0]
    }

    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.center[0], x[1] - self.center[1]];
        [
            self.center[0] + self.lin[0][0] * d[0] + self.lin[0][1] * d[1] + self.translation[0],
            self.center[1] + self.lin[1][0] * d[0] + self.lin[1][1] * d[1] + self.translation[1],
        ]
    }

    pub fn apply_linear(&self, v: [f64; 2]) -> [f64; 2] {
        [self.lin[0][0] * v[0] + self.lin[0][1] * v[1], self.lin[1][0] * v[0] + self.lin[1][1] * v[1]]
    }

    pub fn inverse(&self) -> Result<Affine> {
        let det = self.det();
        if det.abs() < 1e-6 {
            return Err(Error::SingularTransform { det });
        }
        let [[a, b], [c, d]] = self.lin;
        let inv = [[d / det, -b / det], [-c / det, a / det]];
        let t = self.translation;
        let it = [-(inv[0][0] * t[0] + inv[0][1] * t[1]), -(inv[1][0] * t[0] + inv[1][1] * t[1])];
        Ok(Affine { lin: inv, center: self.center, translation: it })
    }
}

fn magnitude<R: Rng + ?Sized>(kind: AugmentKind, level: f64, rng: &mut R) -> AugmentOp {
    let u = sample_symmetric(rng);
    match kind {
        AugmentKind::Rotation => AugmentOp::Rotation { radians: (MAX_ROTATION_DEG * level * u).to_radians() },
        AugmentKind::Scale => AugmentOp::Scale { factor: MAX_SCALE.powf(level * u) },
        AugmentKind::Squeeze => AugmentOp::Squeeze { factor: MAX_SQUEEZE.powf(level * u) },
        AugmentKind::Translation => {
            let v = sample_symmetric(rng);
            AugmentOp::Translation { rel: [MAX_TRANSLATION_REL * level * u, MAX_TRANSLATION_REL * level * v] }
        }
        AugmentKind::Noise => AugmentOp::Noise { std: MAX_NOISE_STD * level, seed: rng.random() },
    }
}

/// Draws `num_ops` kinds uniformly with replacement from the enabled set.
pub fn sample_augment_ops(p: &AugmentParams, seed: &SeedPath) -> Result<Vec<AugmentOp>> {
    p.check()?;
    if p.num_ops == 0 {
        return Ok(Vec::new());
    }
    let mut kinds = Vec::new();
    if p.enabled_spatial {
        kinds.extend(AugmentKind::SPATIAL);
    }
    if p.enabled_color {
        kinds.push(AugmentKind::Noise);
    }
    if kinds.is_empty() {
        return Err(Error::NoOpsEnabled);
    }
    let mut rng = seed.rng();
    Ok((0..p.num_ops)
        .map(|_| {
            let k = kinds[rng.random_range(0..kinds.len())];
            magnitude(k, p.level, &mut rng)
        })
        .collect())
}

fn warp_affine(img: &Image, inv: &Affine) -> Image {
    Raster::from_fn(img.width(), img.height(), |x, y| {
        let s = inv.apply([x as f64, y as f64]);
        bilinear_sample(img, s[0], s[1])
    })
}

fn warp_flow(flow: &FlowField, a: &Affine, inv: &Affine) -> FlowField {
    Raster::from_fn(flow.width(), flow.height(), |x, y| {
        let s = inv.apply([x as f64, y as f64]);
        let w = bilinear_sample(flow, s[0], s[1]);
        let v = a.apply_linear([w[0] as f64, w[1] as f64]);
        [v[0] as f32, v[1] as f32]
    })
}

fn add_noise(img: &Image, std: f64, seed: &SeedPath) -> Image {
    let normal = Normal::new(0.0, std).expect("finite std");
    let mut rng = seed.rng();
    let data = img
        .pixels()
        .iter()
        .map(|p| p.map(|c| (c as f64 + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32))
        .collect();
    Raster::new(img.width(), img.height(), data).expect("same size")
}

/// Applies ops in order. Spatial ops transform both frames identically and
/// remap the flow; noise perturbs each frame independently.
pub fn apply_augment(s: &RenderedSample, ops: &[AugmentOp]) -> Result<RenderedSample> {
    let mut out = s.clone();
    for op in ops {
        match op.affine(out.image1.dims()) {
            Some(a) => {
                let inv = a.inverse()?;
                out.image1 = warp_affine(&out.image1, &inv);
                out.image2 = warp_affine(&out.image2, &inv);
                out.flow = warp_flow(&out.flow, &a, &inv);
            }
            None => {
                let AugmentOp::Noise { std, seed } = *op else { unreachable!() };
                if std > 0.0 {
                    let base = SeedPath::new(seed);
                    out.image1 = add_noise(&out.image1, std, &base.child("frame", 1));
                    out.image2 = add_noise(&out.image2, std, &base.child("frame", 2));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Provenance;

    fn sample(w: usize, h: usize) -> RenderedSample {
        RenderedSample {
            image1: Image::from_fn(w, h, |x, y| [x as f32 / w as f32, y as f32 / h as f32, 0.5]),
            image2: Image::from_fn(w, h, |x, y| [(x + 1) as f32 / (w + 1) as f32, y as f32 / h as f32, 0.5]),
            flow: FlowField::from_fn(w, h, |x, y| [0.05 * x as f32 - 1.0, 0.5 + 0.02 * y as f32]),
            provenance: Provenance::default(),
        }
    }

    #[test]
    fn zero_ops() {
        let p = AugmentParams { num_ops: 0, ..Default::default() };
        assert!(sample_augment_ops(&p, &SeedPath::new(1)).unwrap().is_empty());
        let s = sample(8, 8);
        assert_eq!(apply_augment(&s, &[]).unwrap(), s);
    }

    #[test]
    fn disabled_kinds_are_excluded() {
        let p = AugmentParams { num_ops: 3, level: 1.0, enabled_spatial: false, enabled_color: true };
        for i in 0..3334 {
            let ops = sample_augment_ops(&p, &SeedPath::new(i)).unwrap();
            assert!(ops.iter().all(|o| o.kind() == AugmentKind::Noise));
        }
        let p = AugmentParams { enabled_spatial: false, enabled_color: false, ..p };
        assert!(matches!(sample_augment_ops(&p, &SeedPath::new(1)), Err(Error::NoOpsEnabled)));
    }

    #[test]
    fn ops_are_deterministic() {
        let p = AugmentParams { num_ops: 4, ..Default::default() };
        let s = SeedPath::new(5).child("augment", 2);
        assert_eq!(sample_augment_ops(&p, &s).unwrap(), sample_augment_ops(&p, &s).unwrap());
    }

    #[test]
    fn level_zero_is_identity() {
        let p = AugmentParams { num_ops: 8, level: 0.0, enabled_spatial: true, enabled_color: false };
        let s = sample(12, 10);
        let ops = sample_augment_ops(&p, &SeedPath::new(3)).unwrap();
        let out = apply_augment(&s, &ops).unwrap();
        for (a, b) in out.flow.pixels().iter().zip(s.flow.pixels()) {
            assert!((a[0] - b[0]).abs() < 1e-5 && (a[1] - b[1]).abs() < 1e-5);
        }
    }

    #[test]
    fn translation_keeps_flow_values() {
        let s = RenderedSample { flow: FlowField::filled(10, 10, [1.5, -2.0]), ..sample(10, 10) };
        let out = apply_augment(&s, &[AugmentOp::Translation { rel: [0.2, -0.1] }]).unwrap();
        assert!(out.flow.pixels().iter().all(|p| *p == [1.5, -2.0]));
    }

    #[test]
    fn noise_leaves_flow_bit_identical() {
        let s = sample(10, 10);
        let out = apply_augment(&s, &[AugmentOp::Noise { std: 0.04, seed: 9 }]).unwrap();
        assert_eq!(out.flow, s.flow);
        assert_ne!(out.image1, s.image1);
        assert!(out.image1.is_unit_range());
    }

    #[test]
    fn singular_transform_is_rejected() {
        let s = sample(6, 6);
        assert!(matches!(apply_augment(&s, &[AugmentOp::Scale { factor: 1e-4 }]), Err(Error::SingularTransform { .. })));
    }
}
