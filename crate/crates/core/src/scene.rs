//! Layered scenes: sampling from hyperparameters and rendering the training
//! triplet (frame 1, frame 2, flow) by back-to-front compositing.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use crate::effects::{apply_fog, generate_fog, BlurFilter, MotionBlur};
use crate::error::{Error, Result};
use crate::hyper::HyperParams;
use crate::masks::{generate_mask, MaskSource};
use crate::motion::{flow_field, forward_warp, sample_motion, GridWarp, LayerKind, Outside};
use crate::raster::{binarize, AlphaMask, FlowField, Image, Pixel, Raster};
use crate::rng::{sample_int, sample_uniform, SeedPath};

/// Appearance images at the working resolution, plus the foreground shape source.
#[derive(Clone, Debug)]
pub struct AppearancePool {
    images: Vec<Arc<Image>>,
    masks: MaskSource,
}

impl AppearancePool {
    /// Resizes every image to `resolution`.
    pub fn from_images(images: Vec<Image>, resolution: (usize, usize)) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptyPool);
        }
        let images = images.into_iter().map(|i| Arc::new(i.resize(resolution.0, resolution.1))).collect();
        Ok(Self { images, masks: MaskSource::Polygons })
    }

    /// Loads image files from `dir` in lexicographic order.
    pub fn from_dir(dir: &Path, resolution: (usize, usize)) -> Result<Self> {
        let mut images = Vec::new();
        for path in crate::io::list_files(dir, &["png", "jpg", "jpeg", "bmp", "tif", "tiff"])? {
            images.push(crate::io::read_image(&path)?);
        }
        Self::from_images(images, resolution)
    }

    /// Smooth multi-octave color textures, for runs without a photo collection.
    pub fn procedural(count: usize, resolution: (usize, usize), seed: u64) -> Result<Self> {
        let root = SeedPath::new(seed).child("procedural", 0);
        let (w, h) = resolution;
        let images = crate::par::map_indices(count, |i| -> Result<Image> {
            let s = root.child("image", i as u64);
            let mut rng = s.rng();
            let channels = (0..3)
                .map(|c| {
                    let mean = sample_uniform(0.2, 0.8, &mut rng)?;
                    generate_fog(w, h, mean, 0.15, &s.child("channel", c))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Raster::from_fn(w, h, |x, y| std::array::from_fn(|c| channels[c].get(x, y))))
        });
        Self::from_images(images.into_iter().collect::<Result<_>>()?, resolution)
    }

    pub fn with_masks(mut self, masks: MaskSource) -> Self {
        self.masks = masks;
        self
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.images[0].dims()
    }

    pub fn images(&self) -> &[Arc<Image>] {
        &self.images
    }

    pub fn masks(&self) -> &MaskSource {
        &self.masks
    }
}

#[derive(Clone, Debug)]
pub struct LayerSpec {
    pub appearance: Arc<Image>,
    /// All ones for the background.
    pub mask1: AlphaMask,
    pub warp: GridWarp,
    pub depth_index: usize,
    /// Motion-blur strength when blur was drawn for this layer.
    pub blur: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FogDraw {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug)]
pub struct SceneSpec {
    pub layers: Vec<LayerSpec>,
    pub blur_filter: BlurFilter,
    pub fog: Option<FogDraw>,
    pub frame: (usize, usize),
    pub seed: SeedPath,
}

impl SceneSpec {
    pub fn foreground_count(&self) -> usize {
        self.layers.len() - 1
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Provenance {
    pub hyper_hash: String,
    pub root_seed: u64,
    pub index: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedSample {
    pub image1: Image,
    pub image2: Image,
    pub flow: FlowField,
    pub provenance: Provenance,
}

/// Picks `k` pool indices, without replacement while the pool lasts.
fn pick_appearances<R: Rng + ?Sized>(pool_len: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let mut idx: Vec<usize> = (0..pool_len).collect();
        let take = (k - out.len()).min(pool_len);
        for i in 0..take {
            let j = rng.random_range(i..pool_len);
            idx.swap(i, j);
        }
        out.extend_from_slice(&idx[..take]);
    }
    out
}

pub fn sample_scene(h: &HyperParams, pool: &AppearancePool, seed: &SeedPath) -> Result<SceneSpec> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    h.check()?;
    let frame = h.frame();
    if pool.resolution() != frame {
        return Err(Error::dims(frame, pool.resolution()));
    }
    let mut rng = seed.child("layout", 0).rng();
    let k = sample_int(h.fg_count_min, h.fg_count_max, &mut rng)? as usize;
    let picks = pick_appearances(pool.len(), k + 1, &mut rng);

    let center = [(frame.0 as f64 - 1.0) * 0.5, (frame.1 as f64 - 1.0) * 0.5];
    let mut layers = Vec::with_capacity(k + 1);
    for (depth, &pick) in picks.iter().enumerate() {
        let (mask1, warp) = if depth == 0 {
            let warp = sample_motion(&h.motion, LayerKind::Background, frame, center, &seed.child("motion", 0))?;
            (AlphaMask::filled(frame.0, frame.1, 1.0), warp)
        } else {
            let om = generate_mask(&h.mask, pool.masks(), frame, &seed.child("mask", depth as u64))?;
            let warp = sample_motion(&h.motion, LayerKind::Foreground, frame, om.placement.center, &seed.child("motion", depth as u64))?;
            (om.mask, warp)
        };
        let mut brng = seed.child("blur", depth as u64).rng();
        let blur = if brng.random_bool(h.effects.blur_prob) {
            Some(sample_uniform(0.0, h.effects.blur_strength, &mut brng)?)
        } else {
            None
        };
        layers.push(LayerSpec { appearance: Arc::clone(&pool.images[pick]), mask1, warp, depth_index: depth, blur });
    }

    let mut frng = seed.child("fog", 0).rng();
    let fog = frng.random_bool(h.effects.fog_prob).then_some(FogDraw { mean: h.effects.fog_mean, std: h.effects.fog_std });
    Ok(SceneSpec { layers, blur_filter: h.effects.blur_filter, fog, frame, seed: seed.clone() })
}

/// One layer after warping and per-layer effects.
#[derive(Clone, Debug)]
pub struct LayerRasters {
    pub image1: Image,
    pub mask1: AlphaMask,
    pub image2: Image,
    pub mask2: AlphaMask,
    pub flow: FlowField,
    /// Binarized, unblurred frame-1 mask used for flow compositing.
    pub flow_mask: AlphaMask,
}

pub fn render_layer(layer: &LayerSpec, filter: BlurFilter) -> Result<LayerRasters> {
    let image1 = layer.appearance.as_ref().clone();
    let mask1 = layer.mask1.clone();
    let flow = flow_field(&layer.warp);
    let image2 = forward_warp(&image1, &layer.warp, Outside::Clamp)?;
    let mask2 = if layer.depth_index == 0 { mask1.clone() } else { forward_warp(&mask1, &layer.warp, Outside::Zero)? };
    let flow_mask = binarize(&mask1);
    let (image1, mask1, image2, mask2) = match layer.blur {
        Some(strength) => match MotionBlur::from_flow(&mask1, &flow, strength, filter) {
            Ok(blur) => {
                let (i1, m1) = blur.apply(&image1, &mask1);
                let (i2, m2) = blur.apply(&image2, &mask2);
                (i1, m1, i2, m2)
            }
            // A feathered mask with no opaque pixel carries no motion statistics.
            Err(Error::EmptyMask) => (image1, mask1, image2, mask2),
            Err(e) => return Err(e),
        },
        None => (image1, mask1, image2, mask2),
    };
    Ok(LayerRasters { image1, mask1, image2, mask2, flow, flow_mask })
}

pub fn render_layers(scene: &SceneSpec) -> Result<Vec<LayerRasters>> {
    crate::par::map_slice(&scene.layers, |l| render_layer(l, scene.blur_filter)).into_iter().collect()
}

/// Back-to-front blending `acc = M * layer + (1 - M) * acc`, starting from the first (background) layer.
pub fn composite<P: Pixel>(layers: &[(&Raster<P>, &AlphaMask)]) -> Result<Raster<P>> {
    let (first, rest) = layers.split_first().ok_or(Error::EmptyInput)?;
    let dims = first.0.dims();
    for (r, m) in layers {
        if r.dims() != dims {
            return Err(Error::dims(dims, r.dims()));
        }
        if m.dims() != dims {
            return Err(Error::dims(dims, m.dims()));
        }
    }
    if rest.is_empty() {
        return Ok(first.0.clone());
    }
    let mut acc = first.0.clone();
    for (layer, mask) in rest {
        let prev = acc;
        acc = Raster::from_fn(dims.0, dims.1, |x, y| {
            let m = mask.get(x, y) as f64;
            let (l, a) = (layer.get(x, y), prev.get(x, y));
            P::from_channels(|c| m * l.channel(c) + (1.0 - m) * a.channel(c))
        });
    }
    Ok(acc)
}

/// Composites the three rasters from per-layer renders and overlays fog.
pub fn assemble(scene: &SceneSpec, layers: &[LayerRasters]) -> Result<(Image, Image, FlowField)> {
    let f1: Vec<_> = layers.iter().map(|l| (&l.image1, &l.mask1)).collect();
    let f2: Vec<_> = layers.iter().map(|l| (&l.image2, &l.mask2)).collect();
    let fl: Vec<_> = layers.iter().map(|l| (&l.flow, &l.flow_mask)).collect();
    let mut image1 = composite(&f1)?;
    let mut image2 = composite(&f2)?;
    let flow = composite(&fl)?;
    if let Some(fog) = scene.fog {
        let field = generate_fog(scene.frame.0, scene.frame.1, fog.mean, fog.std, &scene.seed.child("fog-field", 0))?;
        image1 = apply_fog(&image1, &field)?;
        image2 = apply_fog(&image2, &field)?;
    }
    Ok((image1, image2, flow))
}

pub fn render_sample(scene: &SceneSpec) -> Result<RenderedSample> {
    let layers = render_layers(scene)?;
    let (image1, image2, flow) = assemble(scene, &layers)?;
    Ok(RenderedSample { image1, image2, flow, provenance: Provenance { hyper_hash: String::new(), root_seed: scene.seed.root(), index: 0 } })
}

/// Seed path of dataset sample `index`.
pub fn sample_seed(root_seed: u64, index: u64) -> SeedPath {
    SeedPath::new(root_seed).child("sample", index)
}

/// Samples and renders dataset sample `index`; a pure function of its inputs.
pub fn render_indexed(h: &HyperParams, pool: &AppearancePool, root_seed: u64, index: u64) -> Result<RenderedSample> {
    let scene = sample_scene(h, pool, &sample_seed(root_seed, index))?;
    let mut s = render_sample(&scene)?;
    s.provenance = Provenance { hyper_hash: h.hash(), root_seed, index };
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_h(k: u32) -> HyperParams {
        let mut h = HyperParams::default();
        h.resolution = (32, 24);
        h.fg_count_min = k;
        h.fg_count_max = k;
        h
    }

    fn pool() -> AppearancePool {
        AppearancePool::procedural(6, (32, 24), 1).unwrap()
    }

    #[test]
    fn foreground_count_follows_range() {
        let p = pool();
        let s = sample_scene(&small_h(0), &p, &SeedPath::new(1)).unwrap();
        assert_eq!(s.layers.len(), 1);
        let s = sample_scene(&small_h(4), &p, &SeedPath::new(1)).unwrap();
        assert_eq!(s.layers.len(), 5);
        assert!(s.layers[0].mask1.pixels().iter().all(|&v| v == 1.0));
        let distinct: std::collections::HashSet<_> = s.layers.iter().map(|l| Arc::as_ptr(&l.appearance)).collect();
        assert_eq!(distinct.len(), 5);
    }

    #[test]
    fn scene_sampling_is_deterministic() {
        let p = pool();
        let a = render_indexed(&small_h(2), &p, 9, 3).unwrap();
        let b = render_indexed(&small_h(2), &p, 9, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_pool_is_rejected() {
        assert!(matches!(AppearancePool::from_images(vec![], (4, 4)), Err(Error::EmptyPool)));
    }

    #[test]
    fn small_pool_still_fills_every_layer() {
        let p = AppearancePool::procedural(2, (32, 24), 1).unwrap();
        let s = sample_scene(&small_h(4), &p, &SeedPath::new(2)).unwrap();
        assert_eq!(s.layers.len(), 5);
    }

    #[test]
    fn composite_examples() {
        let bg = Image::filled(4, 4, [0.2, 0.4, 0.6]);
        let ones = AlphaMask::filled(4, 4, 1.0);
        assert_eq!(composite(&[(&bg, &ones)]).unwrap(), bg);
        let top = Image::filled(4, 4, [1.0, 0.0, 0.0]);
        assert_eq!(composite(&[(&bg, &ones), (&top, &ones)]).unwrap(), top);

        let half = AlphaMask::filled(4, 4, 0.5);
        let black = Image::filled(4, 4, [0.0; 3]);
        let white = Image::filled(4, 4, [1.0; 3]);
        let img = composite(&[(&black, &ones), (&white, &half)]).unwrap();
        assert!(img.pixels().iter().all(|p| *p == [0.5; 3]));
        let f_bg = FlowField::filled(4, 4, [1.0, 1.0]);
        let f_fg = FlowField::filled(4, 4, [-3.0, 2.0]);
        let bin = binarize(&half);
        assert!(composite(&[(&f_bg, &ones), (&f_fg, &bin)]).unwrap().pixels().iter().all(|p| *p == [-3.0, 2.0]));
        let small = Image::filled(3, 4, [0.0; 3]);
        assert!(matches!(composite(&[(&bg, &ones), (&small, &ones)]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn background_translation_gives_constant_flow() {
        let p = pool();
        let mut s = sample_scene(&small_h(0), &p, &SeedPath::new(4)).unwrap();
        s.layers[0].warp = GridWarp::from_map(2, (32, 24), |q| [q[0] + 2.0, q[1] - 1.0]).unwrap();
        s.layers[0].blur = None;
        s.fog = None;
        let r = render_sample(&s).unwrap();
        assert!(r.flow.pixels().iter().all(|p| *p == [2.0, -1.0]));
    }

    #[test]
    fn identity_warps_give_static_pair() {
        let p = pool();
        let mut s = sample_scene(&small_h(2), &p, &SeedPath::new(5)).unwrap();
        for l in &mut s.layers {
            l.warp = GridWarp::identity(l.warp.n(), (32, 24)).unwrap();
            l.blur = None;
        }
        s.fog = None;
        let r = render_sample(&s).unwrap();
        assert_eq!(r.image1, r.image2);
        assert!(r.flow.pixels().iter().all(|p| *p == [0.0, 0.0]));
    }
}
