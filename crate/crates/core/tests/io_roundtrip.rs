use flowforge::hyper::Config;
use flowforge::io::{
    flo_dir, generate_dataset, load_dataset, read_flo, write_flo, write_flo_file, write_manifest, AugmentMode, Dataset, DatasetManifest,
};
use flowforge::scene::{render_indexed, AppearancePool};
use flowforge::stats::{colorize_flow, motion_histogram, try_motion_histogram, HistogramAccumulator};
use flowforge::{Error, FlowField, Raster};
use proptest::prelude::*;

fn small_config() -> Config {
    let mut c = Config::default();
    c.hyper.resolution = (48, 32);
    c
}

fn flows() -> impl Strategy<Value = FlowField> {
    (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
        prop::collection::vec((-300.0f32..300.0, -300.0f32..300.0), w * h)
            .prop_map(move |v| Raster::new(w, h, v.into_iter().map(|(a, b)| [a, b]).collect()).unwrap())
    })
}

proptest! {
    #[test]
    fn flo_round_trip_is_bit_exact(f in flows()) {
        let back = read_flo(&write_flo(&f)).unwrap();
        prop_assert_eq!(back.dims(), f.dims());
        for (a, b) in back.pixels().iter().zip(f.pixels()) {
            prop_assert_eq!(a[0].to_bits(), b[0].to_bits());
            prop_assert_eq!(a[1].to_bits(), b[1].to_bits());
        }
    }

    #[test]
    fn histogram_ignores_order_and_sharding(fs in prop::collection::vec(flows(), 1..6), split in 0usize..6) {
        let whole = motion_histogram(&fs).unwrap();
        let mut rev = fs.clone();
        rev.reverse();
        prop_assert_eq!(&motion_histogram(&rev).unwrap(), &whole);
        let k = split.min(fs.len());
        let (mut a, mut b) = (HistogramAccumulator::default(), HistogramAccumulator::default());
        fs[..k].iter().for_each(|f| a.add_flow(f));
        fs[k..].iter().for_each(|f| b.add_flow(f));
        a.merge(&b);
        prop_assert_eq!(a.finish().unwrap(), whole.clone());
        prop_assert!((whole.masses.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn colorize_is_scale_invariant(f in flows(), e in -3i32..4, max in 0.5f64..50.0) {
        let lambda = 2f64.powi(e);
        let scaled = f.map(|p| [p[0] * lambda as f32, p[1] * lambda as f32]);
        prop_assert_eq!(colorize_flow(&f, Some(max)).unwrap(), colorize_flow(&scaled, Some(max * lambda)).unwrap());
    }
}

#[test]
fn four_samples_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let pool = AppearancePool::procedural(6, cfg.hyper.resolution, 1).unwrap();
    let m = generate_dataset(dir.path(), &cfg, &pool, 7, 4, AugmentMode::Off, &|_| {}).unwrap();
    assert_eq!(m.count, 4);
    assert_eq!(DatasetManifest::read(dir.path()).unwrap(), m);
    let loaded: Vec<_> = load_dataset(dir.path(), Some(&cfg.hyper.hash())).unwrap().collect::<Result<_, _>>().unwrap();
    assert_eq!(loaded.len(), 4);
    for (i, s) in loaded.iter().enumerate() {
        let fresh = render_indexed(&cfg.hyper, &pool, 7, i as u64).unwrap();
        assert_eq!(s.flow, fresh.flow);
        assert_eq!(s.image1, fresh.image1.quantized());
        assert_eq!(s.image2, fresh.image2.quantized());
        assert_eq!(s.provenance, fresh.provenance);
    }
}

#[test]
fn broken_datasets_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let pool = AppearancePool::procedural(6, cfg.hyper.resolution, 1).unwrap();
    let mut m = generate_dataset(dir.path(), &cfg, &pool, 7, 3, AugmentMode::Off, &|_| {}).unwrap();

    assert!(matches!(Dataset::open(dir.path(), Some("0000000000000000")), Err(Error::HashMismatch { .. })));

    m.count = 4;
    write_manifest(dir.path(), &m).unwrap();
    assert!(matches!(Dataset::open(dir.path(), None), Err(Error::MissingFile(_))));

    m.count = 3;
    write_manifest(dir.path(), &m).unwrap();
    std::fs::remove_file(dir.path().join(&m.samples[1].flow)).unwrap();
    assert!(matches!(Dataset::open(dir.path(), None), Err(Error::MissingFile(_))));

    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(Dataset::open(empty.path(), None), Err(Error::MissingFile(_))));
}

#[test]
fn zero_count_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let pool = AppearancePool::procedural(2, cfg.hyper.resolution, 1).unwrap();
    let m = generate_dataset(dir.path(), &cfg, &pool, 1, 0, AugmentMode::Off, &|_| {}).unwrap();
    assert_eq!(m.count, 0);
    assert!(Dataset::open(dir.path(), None).unwrap().is_empty());
}

#[test]
fn external_flo_directory_histogram() {
    let dir = tempfile::tempdir().unwrap();
    for (i, v) in [0.5f32, 3.0, 40.0].iter().enumerate() {
        write_flo_file(&dir.path().join(format!("frame_{i:04}.flo")), &Raster::filled(4, 4, [*v, 0.0])).unwrap();
    }
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let h = try_motion_histogram(flo_dir(dir.path()).unwrap()).unwrap();
    let third = 1.0 / 3.0;
    assert!((h.masses[0] - third).abs() < 1e-12);
    assert!((h.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(h.masses.iter().filter(|m| **m > 0.0).count(), 3);
}
