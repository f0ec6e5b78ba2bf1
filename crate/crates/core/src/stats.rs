//! Motion-magnitude histograms, flow colorization and the comparison report.

use std::borrow::Borrow;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{FlowField, Image, Raster};

pub const BINS: usize = 24;
/// Magnitudes at or above this land in the last bin.
pub const MAX_EDGE: f64 = 256.0;

/// `[0, 1, 256^(1/23), 256^(2/23), ..., 256]`: a unit first bin, then 23
/// log-spaced bins.
pub fn bin_edges() -> &'static [f64; BINS + 1] {
    static EDGES: OnceLock<[f64; BINS + 1]> = OnceLock::new();
    EDGES.get_or_init(|| {
        let mut e = [0.0; BINS + 1];
        for (i, v) in e.iter_mut().enumerate().skip(1) {
            *v = MAX_EDGE.powf((i - 1) as f64 / (BINS - 1) as f64);
        }
        e[BINS] = MAX_EDGE;
        e
    })
}

pub fn bin_of(magnitude: f64) -> usize {
    let upper = &bin_edges()[1..];
    upper.partition_point(|&e| e <= magnitude).min(BINS - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
}

impl Histogram {
    pub fn from_masses(masses: Vec<f64>) -> Result<Self> {
        if masses.len() != BINS {
            return Err(Error::DimensionMismatch { expected: format!("{BINS} bins"), actual: masses.len().to_string() });
        }
        let total: f64 = masses.iter().sum();
        if masses.iter().any(|m| !(*m >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!("histogram masses must be non-negative and sum to 1 (sum {total})")));
        }
        Ok(Self { edges: bin_edges().to_vec(), masses })
    }

    pub fn cumulative(&self) -> Vec<f64> {
        self.masses
            .iter()
            .scan(0.0, |acc, m| {
                *acc += m;
                Some(*acc)
            })
            .collect()
    }

    /// L1 distance between the mass vectors, in `[0, 2]`.
    pub fn l1(&self, other: &Histogram) -> f64 {
        self.masses.iter().zip(&other.masses).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// Integer bin counts; merging shards gives the same counts as one pass.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HistogramAccumulator {
    pub counts: [u64; BINS],
}

impl HistogramAccumulator {
    pub fn add_flow(&mut self, flow: &FlowField) {
        for p in flow.pixels() {
            let (u, v) = (p[0] as f64, p[1] as f64);
            self.counts[bin_of((u * u + v * v).sqrt())] += 1;
        }
    }

    pub fn merge(&mut self, other: &HistogramAccumulator) {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn finish(&self) -> Result<Histogram> {
        let total = self.total();
        if total == 0 {
            return Err(Error::EmptyInput);
        }
        let masses = self.counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Histogram { edges: bin_edges().to_vec(), masses })
    }
}

pub fn motion_histogram<I>(flows: I) -> Result<Histogram>
where
    I: IntoIterator,
    I::Item: Borrow<FlowField>,
{
    let mut acc = HistogramAccumulator::default();
    for f in flows {
        acc.add_flow(f.borrow());
    }
    acc.finish()
}

/// Like [`motion_histogram`], for fallible sources such as files on disk.
pub fn try_motion_histogram<I>(flows: I) -> Result<Histogram>
where
    I: IntoIterator<Item = Result<FlowField>>,
{
    let mut acc = HistogramAccumulator::default();
    for f in flows {
        acc.add_flow(&f?);
    }
    acc.finish()
}

fn hsv_to_rgb(h_deg: f64, s: f64, v: f64) -> [f32; 3] {
    let h = h_deg.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [(r + m) as f32, (g + m) as f32, (b + m) as f32]
}

/// Hue of a flow vector in degrees, `[0, 360)`.
pub fn flow_hue(u: f64, v: f64) -> f64 {
    v.atan2(u).to_degrees().rem_euclid(360.0)
}

/// 99th percentile of the magnitudes, or 1 when that is zero.
pub fn auto_max_magnitude(flow: &FlowField) -> f64 {
    let mut mags: Vec<f64> = flow.pixels().iter().map(|p| (p[0] as f64).hypot(p[1] as f64)).filter(|m| m.is_finite()).collect();
    if mags.is_empty() {
        return 1.0;
    }
    let k = ((mags.len() - 1) as f64 * 0.99).round() as usize;
    let (_, m, _) = mags.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    if *m > 0.0 {
        *m
    } else {
        1.0
    }
}

/// Hue encodes direction, saturation encodes `min(|w| / max_mag, 1)`; zero flow is white.
pub fn colorize_flow(flow: &FlowField, max_mag: Option<f64>) -> Result<Image> {
    let max = match max_mag {
        Some(m) if m > 0.0 && m.is_finite() => m,
        Some(m) => return Err(Error::InvalidParams(format!("max magnitude {m} must be positive"))),
        None => auto_max_magnitude(flow),
    };
    Ok(flow.map(|p| {
        let (u, v) = (p[0] as f64, p[1] as f64);
        let s = (u.hypot(v) / max).min(1.0);
        if !(s > 0.0) {
            return [1.0; 3];
        }
        hsv_to_rgb(flow_hue(u, v), s, 1.0)
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub label: String,
    pub samples: usize,
    pub histogram: Histogram,
    pub cumulative: Vec<f64>,
}

impl ReportEntry {
    pub fn new(label: impl Into<String>, samples: usize, histogram: Histogram) -> Self {
        let cumulative = histogram.cumulative();
        Self { label: label.into(), samples, histogram, cumulative }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub entries: Vec<ReportEntry>,
}

const PALETTE: [[f32; 3]; 6] = [
    [0.12, 0.47, 0.71],
    [1.0, 0.5, 0.05],
    [0.17, 0.63, 0.17],
    [0.84, 0.15, 0.16],
    [0.58, 0.4, 0.74],
    [0.55, 0.34, 0.29],
];

impl StatsReport {
    /// Grouped bar chart: one group per bin, one colored bar per entry.
    pub fn bar_chart(&self, bar_height: usize) -> Image {
        let n = self.entries.len().max(1);
        let bar_w = 6;
        let group_w = n * bar_w + 4;
        let margin = 8;
        let w = 2 * margin + BINS * group_w;
        let h = 2 * margin + bar_height + 1;
        let peak = self.entries.iter().flat_map(|e| e.histogram.masses.iter().copied()).fold(0.0, f64::max).max(1e-12);
        let mut data = vec![[1.0f32; 3]; w * h];
        let base_y = margin + bar_height;
        for x in margin..w - margin {
            data[base_y * w + x] = [0.0; 3];
        }
        for (k, e) in self.entries.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            for (b, &m) in e.histogram.masses.iter().enumerate() {
                let top = ((m / peak) * bar_height as f64).round() as usize;
                let x0 = margin + b * group_w + 2 + k * bar_w;
                for y in base_y - top..base_y {
                    for x in x0..x0 + bar_w - 1 {
                        data[y * w + x] = color;
                    }
                }
            }
        }
        Raster::new(w, h, data).expect("sized buffer")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edges_shape() {
        let e = bin_edges();
        assert_eq!(e.len(), 25);
        assert_eq!(e[0], 0.0);
        assert_eq!(e[1], 1.0);
        assert_eq!(e[24], 256.0);
        assert!(e.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(bin_of(0.0), 0);
        assert_eq!(bin_of(0.999), 0);
        assert_eq!(bin_of(1.0), 1);
        assert_eq!(bin_of(1e6), 23);
        assert_eq!(bin_of(256.0), 23);
    }

    #[test]
    fn zero_flow_first_bin() {
        let h = motion_histogram([Raster::filled(4, 4, [0.0f32, 0.0])]).unwrap();
        assert_eq!(h.masses[0], 1.0);
        assert!(matches!(motion_histogram(Vec::<FlowField>::new()), Err(Error::EmptyInput)));
    }

    #[test]
    fn disjoint_l1_is_two() {
        let a = motion_histogram([Raster::filled(2, 2, [0.0f32, 0.0])]).unwrap();
        let b = motion_histogram([Raster::filled(2, 2, [100.0f32, 0.0])]).unwrap();
        assert_eq!(a.l1(&b), 2.0);
        assert_eq!(a.l1(&a), 0.0);
    }

    #[test]
    fn colorize_examples() {
        let z = colorize_flow(&Raster::filled(3, 2, [0.0f32, 0.0]), None).unwrap();
        assert!(z.pixels().iter().all(|p| *p == [1.0; 3]));
        let f = Raster::new(4, 1, vec![[2.0f32, 1.0], [-2.0, -1.0], [4.0, 0.0], [8.0, 0.0]]).unwrap();
        let c = colorize_flow(&f, Some(4.0)).unwrap();
        let d = (flow_hue(2.0, 1.0) - flow_hue(-2.0, -1.0)).abs();
        assert!((d - 180.0).abs() < 1e-9);
        assert_eq!(c.get(2, 0), c.get(3, 0));
        assert!(colorize_flow(&f, Some(0.0)).is_err());
    }

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [1.0, 0.0, 0.0]);
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), [0.0, 1.0, 0.0]);
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), [0.0, 0.0, 1.0]);
        assert_eq!(hsv_to_rgb(77.0, 0.0, 1.0), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn chart_has_expected_size() {
        let h = motion_histogram([Raster::filled(2, 2, [3.0f32, 0.0])]).unwrap();
        let r = StatsReport { entries: vec![ReportEntry::new("a", 1, h.clone()), ReportEntry::new("b", 1, h)] };
        let img = r.bar_chart(100);
        assert_eq!(img.height(), 117);
        assert!(img.pixels().iter().any(|p| *p == PALETTE[1]));
    }
}
