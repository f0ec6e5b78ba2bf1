//! Dataset files: PNG frame pairs, `.flo` flow files and a line-delimited
//! JSON manifest.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! config.toml          hyperparameters used for generation
//! 000000_img1.png      frame 1 (8-bit RGB)
//! 000000_img2.png      frame 2
//! 000000_flow.flo      ground-truth flow
//! manifest.jsonl       header record, then one record per sample
//! ```
//!
//! The manifest is written last, through a temporary file and a rename, so a
//! directory without `manifest.jsonl` is an incomplete run.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{apply_augment, sample_augment_ops};
use crate::error::{Error, Result};
use crate::hyper::{Config, HyperParams};
use crate::raster::{FlowField, Image, Raster};
use crate::scene::{render_indexed, sample_seed, AppearancePool, Provenance, RenderedSample};

pub const FLO_MAGIC: f32 = 202021.25;
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CONFIG_FILE: &str = "config.toml";
pub const GENERATOR_VERSION: &str = concat!("flowforge ", env!("CARGO_PKG_VERSION"));

/// Regular files in `dir` whose extension (case-insensitive) is in `exts`, sorted by name.
pub fn list_files(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let ok = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)));
        if ok && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn missing(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    }
}

pub fn read_image(path: &Path) -> Result<Image> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let rgb = image::open(path)?.to_rgb8();
    Image::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let enc = image::codecs::png::PngEncoder::new(&mut buf);
    image::ImageEncoder::write_image(enc, &img.to_rgb8(), img.width() as u32, img.height() as u32, image::ExtendedColorType::Rgb8)?;
    Ok(buf)
}

pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    write_atomic(path, &encode_png(img)?)
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * flow.pixels().len());
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for p in flow.pixels() {
        out.extend_from_slice(&p[0].to_le_bytes());
        out.extend_from_slice(&p[1].to_le_bytes());
    }
    out
}

pub fn read_flo(bytes: &[u8]) -> Result<FlowField> {
    let word = |i: usize| -> Option<[u8; 4]> { bytes.get(4 * i..4 * i + 4).map(|b| b.try_into().unwrap()) };
    let magic = word(0).ok_or(Error::TruncatedFile { expected: 12, actual: bytes.len() })?;
    let magic = f32::from_le_bytes(magic);
    if magic.to_bits() != FLO_MAGIC.to_bits() {
        return Err(Error::BadMagic(magic));
    }
    let (Some(w), Some(h)) = (word(1), word(2)) else {
        return Err(Error::TruncatedFile { expected: 12, actual: bytes.len() });
    };
    let (w, h) = (i32::from_le_bytes(w), i32::from_le_bytes(h));
    if w <= 0 || h <= 0 {
        return Err(Error::Format(format!("invalid .flo dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = 12 + 8 * w * h;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile { expected, actual: bytes.len() });
    }
    let data = bytes[12..expected]
        .chunks_exact(8)
        .map(|c| [f32::from_le_bytes(c[..4].try_into().unwrap()), f32::from_le_bytes(c[4..].try_into().unwrap())])
        .collect();
    Raster::new(w, h, data)
}

pub fn read_flo_file(path: &Path) -> Result<FlowField> {
    read_flo(&fs::read(path).map_err(missing(path))?)
}

pub fn write_flo_file(path: &Path, flow: &FlowField) -> Result<()> {
    write_atomic(path, &write_flo(flow))
}

/// Whether augmentation is baked into the stored samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentMode {
    #[default]
    Off,
    Materialize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub index: u64,
    pub image1: String,
    pub image2: String,
    pub flow: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub hyper_hash: String,
    pub root_seed: u64,
    pub count: usize,
    pub resolution: (usize, usize),
    pub augment: AugmentMode,
    pub generator_version: String,
    pub samples: Vec<SampleEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    Header {
        hyper_hash: String,
        root_seed: u64,
        count: usize,
        resolution: (usize, usize),
        augment: AugmentMode,
        generator_version: String,
    },
    Sample(SampleEntry),
}

impl DatasetManifest {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = serde_json::to_string(&Record::Header {
            hyper_hash: self.hyper_hash.clone(),
            root_seed: self.root_seed,
            count: self.count,
            resolution: self.resolution,
            augment: self.augment,
            generator_version: self.generator_version.clone(),
        })?;
        s.push('\n');
        for e in &self.samples {
            s.push_str(&serde_json::to_string(&Record::Sample(e.clone()))?);
            s.push('\n');
        }
        Ok(s)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines.next().ok_or_else(|| Error::Format("empty manifest".into()))?;
        let Record::Header { hyper_hash, root_seed, count, resolution, augment, generator_version } = serde_json::from_str(first)? else {
            return Err(Error::Format("manifest must start with a header record".into()));
        };
        let mut samples = Vec::new();
        for line in lines {
            match serde_json::from_str(line)? {
                Record::Sample(e) => samples.push(e),
                Record::Header { .. } => return Err(Error::Format("duplicate manifest header".into())),
            }
        }
        Ok(Self { hyper_hash, root_seed, count, resolution, augment, generator_version, samples })
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        Self::from_jsonl(&fs::read_to_string(&path).map_err(missing(&path))?)
    }

    /// Fails with `MissingFile` when the count disagrees with the listing or a listed file is absent.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        if self.samples.len() != self.count {
            let i = self.samples.len().min(self.count);
            return Err(Error::MissingFile(dir.join(sample_names(i as u64).0)));
        }
        for e in &self.samples {
            for f in [&e.image1, &e.image2, &e.flow] {
                let p = dir.join(f);
                if !p.is_file() {
                    return Err(Error::MissingFile(p));
                }
            }
        }
        Ok(())
    }
}

pub fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    write_atomic(&dir.join(MANIFEST_FILE), manifest.to_jsonl()?.as_bytes())
}

fn sample_names(index: u64) -> (String, String, String) {
    (format!("{index:06}_img1.png"), format!("{index:06}_img2.png"), format!("{index:06}_flow.flo"))
}

/// Renders sample `index`, augmented when `mode` asks for it.
pub fn dataset_sample(h: &HyperParams, pool: &AppearancePool, root_seed: u64, index: u64, mode: AugmentMode) -> Result<RenderedSample> {
    let s = render_indexed(h, pool, root_seed, index)?;
    match mode {
        AugmentMode::Off => Ok(s),
        AugmentMode::Materialize => augment_indexed(h, &s),
    }
}

/// The augmented copy of a rendered dataset sample, with ops seeded by its provenance.
pub fn augment_indexed(h: &HyperParams, s: &RenderedSample) -> Result<RenderedSample> {
    let ops = sample_augment_ops(&h.augment, &sample_seed(s.provenance.root_seed, s.provenance.index).child("augment", 0))?;
    apply_augment(s, &ops)
}

pub fn write_sample(dir: &Path, s: &RenderedSample) -> Result<SampleEntry> {
    let (a, b, f) = sample_names(s.provenance.index);
    write_png(&dir.join(&a), &s.image1)?;
    write_png(&dir.join(&b), &s.image2)?;
    write_flo_file(&dir.join(&f), &s.flow)?;
    Ok(SampleEntry { index: s.provenance.index, image1: a, image2: b, flow: f })
}

/// Renders and writes `count` samples in parallel, then the manifest.
/// `progress` is called once per finished sample (from worker threads).
pub fn generate_dataset(
    dir: &Path,
    config: &Config,
    pool: &AppearancePool,
    root_seed: u64,
    count: usize,
    mode: AugmentMode,
    progress: &(dyn Fn(usize) + Sync),
) -> Result<DatasetManifest> {
    let h = &config.hyper;
    h.check()?;
    fs::create_dir_all(dir)?;
    config.save(&dir.join(CONFIG_FILE))?;
    let results = crate::par::map_indices(count, |i| {
        let s = dataset_sample(h, pool, root_seed, i as u64, mode)?;
        let e = write_sample(dir, &s)?;
        progress(i);
        Ok::<_, Error>(e)
    });
    let samples = results.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest {
        hyper_hash: h.hash(),
        root_seed,
        count,
        resolution: h.resolution,
        augment: mode,
        generator_version: GENERATOR_VERSION.into(),
        samples,
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

/// A dataset opened for streaming.
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    /// Opens `dir`; with `expected_hash`, the manifest must carry that hyperparameter hash.
    pub fn open(dir: &Path, expected_hash: Option<&str>) -> Result<Self> {
        let manifest = DatasetManifest::read(dir)?;
        manifest.verify(dir)?;
        if let Some(cfg) = expected_hash {
            if cfg != manifest.hyper_hash {
                return Err(Error::HashMismatch { dataset: manifest.hyper_hash.clone(), config: cfg.to_string() });
            }
        }
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    pub fn len(&self) -> usize {
        self.manifest.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.samples.is_empty()
    }

    pub fn sample(&self, k: usize) -> Result<RenderedSample> {
        let e = self.manifest.samples.get(k).ok_or_else(|| Error::MissingFile(self.dir.join(sample_names(k as u64).0)))?;
        Ok(RenderedSample {
            image1: read_image(&self.dir.join(&e.image1))?,
            image2: read_image(&self.dir.join(&e.image2))?,
            flow: read_flo_file(&self.dir.join(&e.flow))?,
            provenance: Provenance { hyper_hash: self.manifest.hyper_hash.clone(), root_seed: self.manifest.root_seed, index: e.index },
        })
    }

    pub fn flow(&self, k: usize) -> Result<FlowField> {
        let e = self.manifest.samples.get(k).ok_or_else(|| Error::MissingFile(self.dir.join(sample_names(k as u64).2)))?;
        read_flo_file(&self.dir.join(&e.flow))
    }

    pub fn samples(&self) -> impl Iterator<Item = Result<RenderedSample>> + '_ {
        (0..self.len()).map(|k| self.sample(k))
    }

    pub fn flows(&self) -> impl Iterator<Item = Result<FlowField>> + '_ {
        (0..self.len()).map(|k| self.flow(k))
    }
}

/// Streams the samples of a dataset directory.
pub fn load_dataset(dir: &Path, expected_hash: Option<&str>) -> Result<impl Iterator<Item = Result<RenderedSample>>> {
    let ds = Dataset::open(dir, expected_hash)?;
    Ok((0..ds.len()).map(move |k| ds.sample(k)))
}

/// Flow files of a directory of `.flo` files, in name order.
pub fn flo_dir(dir: &Path) -> Result<impl Iterator<Item = Result<FlowField>>> {
    let files = list_files(dir, &["flo"])?;
    Ok(files.into_iter().map(|p| read_flo_file(&p)))
}

/// Reads every line of a JSONL file into values of `T`.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path).map_err(missing(path))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_pixel_layout() {
        let f = Raster::new(1, 1, vec![[3.5f32, -2.25]]).unwrap();
        let b = write_flo(&f);
        assert_eq!(b.len(), 20);
        assert_eq!(&b[0..4], b"PIEH");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[8..12], &[1, 0, 0, 0]);
        assert_eq!(&b[12..16], &[0x00, 0x00, 0x60, 0x40]);
        assert_eq!(&b[16..20], &[0x00, 0x00, 0x10, 0xc0]);
        assert_eq!(read_flo(&b).unwrap(), f);
    }

    #[test]
    fn corrupt_files() {
        let mut b = write_flo(&Raster::filled(2, 2, [1.0f32, 2.0]));
        assert!(matches!(read_flo(&b[..30]), Err(Error::TruncatedFile { expected: 44, actual: 30 })));
        assert!(matches!(read_flo(&b[..2]), Err(Error::TruncatedFile { .. })));
        b[0] ^= 1;
        assert!(matches!(read_flo(&b), Err(Error::BadMagic(_))));
    }

    #[test]
    fn manifest_text_round_trip() {
        let m = DatasetManifest {
            hyper_hash: "abc".into(),
            root_seed: 9,
            count: 1,
            resolution: (4, 3),
            augment: AugmentMode::Materialize,
            generator_version: GENERATOR_VERSION.into(),
            samples: vec![SampleEntry { index: 0, image1: "a".into(), image2: "b".into(), flow: "c".into() }],
        };
        assert_eq!(DatasetManifest::from_jsonl(&m.to_jsonl().unwrap()).unwrap(), m);
    }

    #[test]
    fn png_round_trip_is_exact_after_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = Raster::from_fn(5, 4, |x, y| [x as f32 / 4.0, y as f32 / 3.0, 0.5]).quantized();
        let p = dir.path().join("a.png");
        write_png(&p, &img).unwrap();
        assert_eq!(read_image(&p).unwrap(), img);
    }
}
