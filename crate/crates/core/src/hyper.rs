//! Rendering hyperparameters, their search space and the config file.
//!
//! Every tunable scalar has a dotted path (`motion.p_t`, `mask.sides_min`, ...)
//! and belongs to one search subgroup. The search works on a normalized
//! vector in `[0, 1]^D`; [`SearchSpace::encode`] and [`SearchSpace::decode`]
//! map between that vector and [`HyperParams`].

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::AugmentParams;
use crate::effects::{BlurFilter, EffectsParams};
use crate::error::{Error, Result};
use crate::masks::MaskParams;
use crate::motion::MotionParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub fg_count_min: u32,
    pub fg_count_max: u32,
    /// Working resolution (width, height).
    pub resolution: (usize, usize),
    pub mask: MaskParams,
    pub motion: MotionParams,
    pub effects: EffectsParams,
    pub augment: AugmentParams,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            fg_count_min: 4,
            fg_count_max: 4,
            resolution: (1280, 720),
            mask: MaskParams::default(),
            motion: MotionParams::default(),
            effects: EffectsParams::default(),
            augment: AugmentParams::default(),
        }
    }
}

impl HyperParams {
    pub fn frame(&self) -> (usize, usize) {
        self.resolution
    }

    /// Structural invariants (no search-space bounds).
    pub fn check(&self) -> Result<()> {
        let errs = structural_errors(self);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Stable identifier: SHA-256 over the canonical JSON form, first 16 hex digits.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("hyperparameters serialize");
        let digest = Sha256::digest(canon.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn get(&self, path: &str) -> Option<f64> {
        scalar(path).map(|d| (d.get)(self))
    }

    pub fn set(&mut self, path: &str, value: f64) -> Result<()> {
        let d = scalar(path).ok_or_else(|| Error::InvalidConfig(format!("unknown parameter {path}")))?;
        (d.set)(self, value);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Mask,
    Motion,
    Effects,
    Augment,
    Scene,
}

impl Group {
    pub const ALL: [Group; 5] = [Group::Motion, Group::Mask, Group::Effects, Group::Augment, Group::Scene];
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Group::Mask => "mask",
            Group::Motion => "motion",
            Group::Effects => "effects",
            Group::Augment => "augment",
            Group::Scene => "scene",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarKind {
    Real,
    Integer,
    /// Box filter below 0.5, Gaussian at or above.
    Filter,
}

pub struct ScalarDef {
    pub path: &'static str,
    pub group: Group,
    pub kind: ScalarKind,
    get: fn(&HyperParams) -> f64,
    set: fn(&mut HyperParams, f64),
}

macro_rules! real {
    ($path:literal, $group:ident, $($f:ident).+) => {
        ScalarDef { path: $path, group: Group::$group, kind: ScalarKind::Real, get: |h| h.$($f).+, set: |h, v| h.$($f).+ = v }
    };
}

macro_rules! int {
    ($path:literal, $group:ident, $($f:ident).+) => {
        ScalarDef {
            path: $path,
            group: Group::$group,
            kind: ScalarKind::Integer,
            get: |h| h.$($f).+ as f64,
            set: |h, v| h.$($f).+ = v.round().max(0.0) as u32,
        }
    };
}

/// All tunable scalars, in encoding order.
pub static SCALARS: &[ScalarDef] = &[
    int!("fg_count_min", Scene, fg_count_min),
    int!("fg_count_max", Scene, fg_count_max),
    int!("mask.sides_min", Mask, mask.sides_min),
    int!("mask.sides_max", Mask, mask.sides_max),
    real!("mask.hole_max_rel_diag", Mask, mask.hole_max_rel_diag),
    int!("mask.subdivisions", Mask, mask.subdivisions),
    real!("mask.size_min_rel", Mask, mask.size_min_rel),
    real!("mask.size_max_rel", Mask, mask.size_max_rel),
    real!("mask.center_min_rel", Mask, mask.center_min_rel),
    real!("mask.center_max_rel", Mask, mask.center_max_rel),
    real!("mask.blur_prob", Mask, mask.blur_prob),
    real!("mask.blur_strength", Mask, mask.blur_strength),
    real!("motion.p_s", Motion, motion.p_s),
    real!("motion.p_r", Motion, motion.p_r),
    real!("motion.p_t", Motion, motion.p_t),
    real!("motion.p_g", Motion, motion.p_g),
    int!("motion.grid_size", Motion, motion.grid_size),
    real!("motion.perspective_strength", Motion, motion.perspective_strength),
    real!("motion.background_perspective_strength", Motion, motion.background_perspective_strength),
    real!("effects.blur_prob", Effects, effects.blur_prob),
    real!("effects.blur_strength", Effects, effects.blur_strength),
    ScalarDef {
        path: "effects.blur_filter",
        group: Group::Effects,
        kind: ScalarKind::Filter,
        get: |h| match h.effects.blur_filter {
            BlurFilter::Box => 0.0,
            BlurFilter::Gaussian => 1.0,
        },
        set: |h, v| h.effects.blur_filter = if v >= 0.5 { BlurFilter::Gaussian } else { BlurFilter::Box },
    },
    real!("effects.fog_prob", Effects, effects.fog_prob),
    real!("effects.fog_mean", Effects, effects.fog_mean),
    real!("effects.fog_std", Effects, effects.fog_std),
    int!("augment.num_ops", Augment, augment.num_ops),
    real!("augment.level", Augment, augment.level),
];

pub fn scalar(path: &str) -> Option<&'static ScalarDef> {
    SCALARS.iter().find(|d| d.path == path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimension {
    pub path: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
    pub group: Group,
}

impl Dimension {
    fn def(&self) -> &'static ScalarDef {
        scalar(&self.path).expect("dimension paths are validated")
    }

    pub fn to_unit(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => (v - self.lower) / (self.upper - self.lower),
            Scale::Log => (v / self.lower).ln() / (self.upper / self.lower).ln(),
        }
    }

    pub fn from_unit(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        if t == 1.0 {
            return self.upper;
        }
        match self.scale {
            Scale::Linear => self.lower + t * (self.upper - self.lower),
            Scale::Log => self.lower * ((self.upper / self.lower).ln() * t).exp(),
        }
    }
}

/// Box bounds, scale and subgroup for every searched scalar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

fn dim(path: &str, lower: f64, upper: f64, scale: Scale) -> Dimension {
    let group = scalar(path).expect("known scalar").group;
    Dimension { path: path.into(), lower, upper, scale, group }
}

impl Default for SearchSpace {
    fn default() -> Self {
        use Scale::*;
        Self {
            dims: vec![
                dim("fg_count_min", 0.0, 8.0, Linear),
                dim("fg_count_max", 0.0, 8.0, Linear),
                dim("mask.sides_min", 3.0, 12.0, Linear),
                dim("mask.sides_max", 3.0, 16.0, Linear),
                dim("mask.hole_max_rel_diag", 0.0, 0.9, Linear),
                dim("mask.subdivisions", 0.0, 4.0, Linear),
                dim("mask.size_min_rel", 0.02, 1.0, Linear),
                dim("mask.size_max_rel", 0.02, 1.5, Linear),
                dim("mask.center_min_rel", -0.2, 1.2, Linear),
                dim("mask.center_max_rel", -0.2, 1.2, Linear),
                dim("mask.blur_prob", 0.0, 1.0, Linear),
                dim("mask.blur_strength", 0.0, 8.0, Linear),
                dim("motion.p_s", 1.0, 4.0, Linear),
                dim("motion.p_r", 0.0, 1.0, Linear),
                dim("motion.p_t", 0.002, 1.0, Log),
                dim("motion.p_g", 0.005, 1.0, Log),
                dim("motion.grid_size", 2.0, 10.0, Linear),
                dim("motion.perspective_strength", 0.0, 0.3, Linear),
                dim("motion.background_perspective_strength", 0.0, 0.3, Linear),
                dim("effects.blur_prob", 0.0, 1.0, Linear),
                dim("effects.blur_strength", 0.01, 2.0, Log),
                dim("effects.blur_filter", 0.0, 1.0, Linear),
                dim("effects.fog_prob", 0.0, 1.0, Linear),
                dim("effects.fog_mean", 0.0, 1.0, Linear),
                dim("effects.fog_std", 0.005, 0.5, Log),
                dim("augment.num_ops", 0.0, 6.0, Linear),
                dim("augment.level", 0.0, 1.0, Linear),
            ],
        }
    }
}

impl SearchSpace {
    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for d in &self.dims {
            if scalar(&d.path).is_none() {
                return Err(Error::InvalidConfig(format!("unknown parameter {}", d.path)));
            }
            if !seen.insert(d.path.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate dimension {}", d.path)));
            }
            if !(d.lower < d.upper) {
                return Err(Error::InvalidConfig(format!("{}: lower {} >= upper {}", d.path, d.lower, d.upper)));
            }
            if d.scale == Scale::Log && !(d.lower > 0.0) {
                return Err(Error::InvalidConfig(format!("{}: log scale needs lower > 0", d.path)));
            }
        }
        Ok(())
    }

    /// Replaces or adds dimensions by path.
    pub fn with_overrides(mut self, overrides: &[Dimension]) -> Result<Self> {
        for o in overrides {
            match self.dims.iter_mut().find(|d| d.path == o.path) {
                Some(d) => *d = o.clone(),
                None => self.dims.push(o.clone()),
            }
        }
        self.check()?;
        Ok(self)
    }

    pub fn indices_of(&self, group: Group) -> Vec<usize> {
        self.dims.iter().enumerate().filter(|(_, d)| d.group == group).map(|(i, _)| i).collect()
    }

    pub fn encode(&self, h: &HyperParams) -> Vec<f64> {
        self.dims.iter().map(|d| d.to_unit((d.def().get)(h))).collect()
    }

    /// Writes the coordinates into a copy of `base`; out-of-box coordinates are
    /// clamped and inverted min/max pairs are swapped.
    pub fn decode(&self, v: &[f64], base: &HyperParams) -> Result<HyperParams> {
        if v.len() != self.dims.len() {
            return Err(Error::DimensionMismatch { expected: format!("{} coordinates", self.dims.len()), actual: v.len().to_string() });
        }
        let mut h = base.clone();
        for (d, &t) in self.dims.iter().zip(v) {
            (d.def().set)(&mut h, d.from_unit(t));
        }
        repair_pairs(&mut h);
        Ok(h)
    }
}

fn repair_pairs(h: &mut HyperParams) {
    fn order<T: PartialOrd>(a: &mut T, b: &mut T) {
        if *a > *b {
            std::mem::swap(a, b);
        }
    }
    order(&mut h.fg_count_min, &mut h.fg_count_max);
    order(&mut h.mask.sides_min, &mut h.mask.sides_max);
    order(&mut h.mask.size_min_rel, &mut h.mask.size_max_rel);
    order(&mut h.mask.center_min_rel, &mut h.mask.center_max_rel);
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn structural_errors(h: &HyperParams) -> Vec<FieldError> {
    let mut errs = Vec::new();
    let mut push = |path: &str, message: String| errs.push(FieldError { path: path.into(), message });
    let unit = |v: f64| (0.0..=1.0).contains(&v);
    let nonneg = |v: f64| v >= 0.0 && v.is_finite();

    if h.fg_count_min > h.fg_count_max {
        push("fg_count_min", format!("{} > fg_count_max {}", h.fg_count_min, h.fg_count_max));
    }
    if h.resolution.0 < 2 || h.resolution.1 < 2 {
        push("resolution", format!("{}x{} is smaller than 2x2", h.resolution.0, h.resolution.1));
    }

    let m = &h.mask;
    if m.sides_min < 3 {
        push("mask.sides_min", format!("{} violates sides_min (≥3)", m.sides_min));
    }
    if m.sides_min > m.sides_max {
        push("mask.sides_max", format!("{} < sides_min {}", m.sides_max, m.sides_min));
    }
    if m.size_min_rel > m.size_max_rel {
        push("mask.size_max_rel", format!("{} < size_min_rel {}", m.size_max_rel, m.size_min_rel));
    }
    if m.center_min_rel > m.center_max_rel {
        push("mask.center_max_rel", format!("{} < center_min_rel {}", m.center_max_rel, m.center_min_rel));
    }
    for (p, v) in [("mask.hole_max_rel_diag", m.hole_max_rel_diag), ("mask.size_min_rel", m.size_min_rel), ("mask.blur_strength", m.blur_strength)] {
        if !nonneg(v) {
            push(p, format!("{v} must be ≥ 0"));
        }
    }
    if !unit(m.blur_prob) {
        push("mask.blur_prob", format!("{} outside [0, 1]", m.blur_prob));
    }

    let mo = &h.motion;
    if !(mo.p_s >= 1.0) {
        push("motion.p_s", format!("{} violates p_s (≥1)", mo.p_s));
    }
    for (p, v) in [
        ("motion.p_r", mo.p_r),
        ("motion.p_t", mo.p_t),
        ("motion.p_g", mo.p_g),
        ("motion.perspective_strength", mo.perspective_strength),
        ("motion.background_perspective_strength", mo.background_perspective_strength),
    ] {
        if !nonneg(v) {
            push(p, format!("{v} must be ≥ 0"));
        }
    }
    if mo.grid_size < 2 {
        push("motion.grid_size", format!("{} < 2", mo.grid_size));
    }

    let e = &h.effects;
    for (p, v) in [("effects.blur_prob", e.blur_prob), ("effects.fog_prob", e.fog_prob), ("effects.fog_mean", e.fog_mean)] {
        if !unit(v) {
            push(p, format!("{v} outside [0, 1]"));
        }
    }
    for (p, v) in [("effects.blur_strength", e.blur_strength), ("effects.fog_std", e.fog_std)] {
        if !nonneg(v) {
            push(p, format!("{v} must be ≥ 0"));
        }
    }
    if !unit(h.augment.level) {
        push("augment.level", format!("{} outside [0, 1]", h.augment.level));
    }
    errs
}

/// Every violated invariant or search-space bound, with its field path.
pub fn validate(h: &HyperParams, space: &SearchSpace) -> Result<(), Vec<FieldError>> {
    let mut errs = structural_errors(h);
    for d in &space.dims {
        let Some(v) = h.get(&d.path) else {
            errs.push(FieldError { path: d.path.clone(), message: "unknown parameter".into() });
            continue;
        };
        let tol = 1e-12 * (d.upper - d.lower).abs().max(1.0);
        if v < d.lower - tol || v > d.upper + tol {
            errs.push(FieldError { path: d.path.clone(), message: format!("{v} outside search bounds [{}, {}]", d.lower, d.upper) });
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

/// Where appearance images and optional object masks come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppearanceConfig {
    /// Directory of appearance images; when absent, `procedural` textures are used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub procedural: usize,
    /// Directory of grayscale object masks replacing random polygons.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for AppearanceConfig {
    fn default() -> Self {
        Self { dir: None, procedural: 16, mask_dir: None, seed: 0 }
    }
}

impl AppearanceConfig {
    pub fn load_pool(&self, resolution: (usize, usize)) -> Result<crate::scene::AppearancePool> {
        let pool = match &self.dir {
            Some(dir) => crate::scene::AppearancePool::from_dir(dir, resolution)?,
            None => crate::scene::AppearancePool::procedural(self.procedural, resolution, self.seed)?,
        };
        Ok(match &self.mask_dir {
            Some(dir) => pool.with_masks(crate::masks::MaskSource::from_dir(dir)?),
            None => pool,
        })
    }
}

/// One config file: hyperparameters, the appearance source and optional
/// search-space overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub appearance: AppearanceConfig,
    pub hyper: HyperParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub space: Vec<Dimension>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text)?;
        c.hyper.check()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => e.into(),
        })?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_toml()?.as_bytes())
    }

    pub fn search_space(&self) -> Result<SearchSpace> {
        SearchSpace::default().with_overrides(&self.space)
    }
}

/// A standalone search-space file: `[[dim]]` entries overriding the defaults.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    #[serde(default)]
    pub dim: Vec<Dimension>,
}

impl SpaceFile {
    pub fn load(path: &Path) -> Result<Vec<Dimension>> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        Ok(toml::from_str::<SpaceFile>(&text)?.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_validate() {
        assert_eq!(validate(&HyperParams::default(), &SearchSpace::default()), Ok(()));
        SearchSpace::default().check().unwrap();
        assert_eq!(SearchSpace::default().len(), SCALARS.len());
    }

    #[test]
    fn sides_min_two_is_reported() {
        let mut h = HyperParams::default();
        h.mask.sides_min = 2;
        let errs = validate(&h, &SearchSpace::default()).unwrap_err();
        assert!(errs.iter().any(|e| e.path == "mask.sides_min"), "{errs:?}");
    }

    #[test]
    fn p_s_below_one_is_reported() {
        let mut h = HyperParams::default();
        h.motion.p_s = 0.5;
        let errs = validate(&h, &SearchSpace::default()).unwrap_err();
        let e = errs.iter().find(|e| e.path == "motion.p_s").unwrap();
        assert!(e.message.contains("p_s (≥1)"));
    }

    #[test]
    fn encode_examples() {
        let lin = Dimension { path: "motion.p_s".into(), lower: 2.0, upper: 4.0, scale: Scale::Linear, group: Group::Motion };
        assert_eq!(lin.to_unit(2.0), 0.0);
        assert_eq!(lin.to_unit(3.0), 0.5);
        assert_eq!(lin.from_unit(0.5), 3.0);
        let log = Dimension { path: "motion.p_t".into(), lower: 0.01, upper: 1.0, scale: Scale::Log, group: Group::Motion };
        assert!((log.from_unit(0.5) - 0.1).abs() < 1e-15);
        assert_eq!(log.to_unit(0.01), 0.0);
    }

    #[test]
    fn decode_clamps_and_checks_length() {
        let s = SearchSpace::default();
        let base = HyperParams::default();
        assert!(matches!(s.decode(&[0.5], &base), Err(Error::DimensionMismatch { .. })));
        let h = s.decode(&vec![2.0; s.len()], &base).unwrap();
        assert_eq!(h.motion.p_t, 1.0);
        let h = s.decode(&vec![-1.0; s.len()], &base).unwrap();
        assert_eq!(h.motion.p_t, 0.002);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let mut text = Config::default().to_toml().unwrap();
        text.push_str("\n[hyper.extra]\nfoo = 1\n");
        assert!(Config::from_toml(&text).is_err());
        let text = Config::default().to_toml().unwrap().replace("p_t = ", "p_tt = ");
        assert!(Config::from_toml(&text).is_err());
    }

    #[test]
    fn config_round_trip() {
        let mut c = Config::default();
        c.hyper.effects.blur_filter = BlurFilter::Gaussian;
        c.space.push(dim("motion.p_t", 0.01, 0.5, Scale::Log));
        let back = Config::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hyper.hash(), c.hyper.hash());
        assert_eq!(back.search_space().unwrap().dims.iter().find(|d| d.path == "motion.p_t").unwrap().upper, 0.5);
    }

    #[test]
    fn missing_keys_take_defaults() {
        let c = Config::from_toml("[hyper.motion]\np_t = 0.0\n").unwrap();
        let mut want = Config::default();
        want.hyper.motion.p_t = 0.0;
        assert_eq!(c, want);
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn hash_depends_on_values() {
        let a = HyperParams::default();
        let mut b = a.clone();
        b.motion.p_t += 1e-9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn bad_space_is_rejected() {
        assert!(SearchSpace::default().with_overrides(&[dim("motion.p_t", 0.0, 1.0, Scale::Log)]).is_err());
        assert!(SearchSpace::default().with_overrides(&[dim("motion.p_t", 1.0, 1.0, Scale::Linear)]).is_err());
    }

    fn in_bounds_params() -> impl Strategy<Value = HyperParams> {
        let space = SearchSpace::default();
        prop::collection::vec(0.0f64..=1.0, space.len()).prop_map(move |v| space.decode(&v, &HyperParams::default()).unwrap())
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(h in in_bounds_params()) {
            let s = SearchSpace::default();
            let back = s.decode(&s.encode(&h), &h).unwrap();
            for d in &s.dims {
                let (a, b) = (h.get(&d.path).unwrap(), back.get(&d.path).unwrap());
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{}: {} vs {}", d.path, a, b);
            }
        }

        #[test]
        fn decoded_candidates_validate(v in prop::collection::vec(-0.5f64..=1.5, 27)) {
            let s = SearchSpace::default();
            let h = s.decode(&v, &HyperParams::default()).unwrap();
            prop_assert_eq!(validate(&h, &s), Ok(()));
        }
    }
}
