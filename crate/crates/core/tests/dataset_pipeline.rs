//! End-to-end dataset checks: generation, validation, statistics, single
//! image reproduction, determinism across runs, and configuration errors.

use crumple_core::dataset::{
    compute_stats, generate, preview_damage, render_one, validate_manifest, DatasetError,
    DatasetManifest, GenerationConfig, ModelSource, Split,
};
use crumple_core::render::{load_mask_png, Quality};
use crumple_core::scene::CameraRanges;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

fn small_config(count: u32, seed: u64) -> GenerationConfig {
    GenerationConfig {
        count,
        seed,
        damage_free_fraction: 0.2,
        quality: Quality::Preview,
        camera: CameraRanges {
            width: 96,
            height: 96,
            ..CameraRanges::default()
        },
        ..GenerationConfig::default()
    }
}

fn toycar_source(id: &str) -> ModelSource {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/models");
    ModelSource {
        id: id.to_string(),
        geometry: root.join("toycar.obj"),
        labels: root.join("toycar.labels.json"),
    }
}

fn tree_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn generated_datasets_validate_and_aggregate_consistently() {
    let config = small_config(10, 7);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let report = generate(&config, &out).unwrap();
    assert_eq!(report.failed, 0);
    assert_eq!(report.manifest.records.len(), 10);
    assert_eq!(report.manifest.output, ".");
    assert_eq!(report.manifest.resolution, [96, 96]);

    let reloaded = DatasetManifest::load(&out).unwrap();
    assert_eq!(reloaded, report.manifest);

    let validation = validate_manifest(&out).unwrap();
    assert_eq!(validation.checked_images, 10);
    assert!(
        validation.problems.is_empty(),
        "unexpected problems: {:?}",
        validation.problems
    );

    // The two leading images are damage free and the rest carry a primary.
    for record in &report.manifest.records {
        assert_eq!(record.model_id, "builtin-car");
        assert!(record.error.is_none());
        if record.index < 2 {
            assert!(record.primary_damage.is_none());
            assert!(record.damage_types.is_empty());
            assert_eq!(record.damage_pixel_fraction, 0.0);
            let rel = record.damage_map.as_ref().unwrap();
            let (_, _, mask) = load_mask_png(&out.join(rel)).unwrap();
            assert!(mask.iter().all(|&d| d == 0));
        } else {
            assert!(record.primary_damage.is_some());
            assert_eq!(record.damage_types.first().copied(), record.primary_damage);
        }
        assert!(record.foreground_fraction > 0.0, "car out of frame");
    }

    let stats = compute_stats(&out).unwrap();
    assert_eq!(stats.total_images, 10);
    assert_eq!(stats.ok_images, 10);
    assert_eq!(stats.failed_images, 0);
    assert_eq!(stats.split_counts.values().sum::<u32>(), 10);
    assert_eq!(stats.co_occurrence.len(), 28);

    // The co-occurrence table and the per-record fractions agree on the
    // total number of damaged pixels, and no damage sits on background.
    for d in 1..6 {
        assert_eq!(stats.co_occurrence[0][d], 0, "damage code {d} on background");
    }
    let table_damaged: u64 = stats
        .co_occurrence
        .iter()
        .map(|row| row[1..].iter().sum::<u64>())
        .sum();
    let record_damaged: f64 = report
        .manifest
        .records
        .iter()
        .map(|r| r.damage_pixel_fraction * (96.0 * 96.0))
        .sum();
    assert!((table_damaged as f64 - record_damaged).abs() < 0.5);

    let primaries: u32 = stats.per_type.values().map(|t| t.images_primary).sum();
    assert_eq!(primaries, 8);
    for (name, t) in &stats.per_type {
        assert!(
            t.pixel_fraction_histogram.iter().sum::<u32>() == t.images_with,
            "{name} histogram does not cover its images"
        );
    }
}

#[test]
fn repeated_runs_are_byte_identical_and_render_one_matches() {
    let config = small_config(6, 99);
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    generate(&config, &a).unwrap();
    generate(&config, &b).unwrap();

    let files_a = tree_files(&a);
    let files_b = tree_files(&b);
    assert_eq!(
        files_a.keys().collect::<Vec<_>>(),
        files_b.keys().collect::<Vec<_>>()
    );
    for (path, bytes) in &files_a {
        assert_eq!(bytes, &files_b[path], "{} differs between runs", path.display());
    }

    // Re-rendering one index reproduces the full run's files for it.
    let c = dir.path().join("c");
    let record = render_one(&config, 4, &c, None).unwrap();
    assert_eq!(record.index, 4);
    for rel in [
        record.image.as_ref().unwrap(),
        record.part_map.as_ref().unwrap(),
        record.damage_map.as_ref().unwrap(),
        record.meta.as_ref().unwrap(),
    ] {
        let from_run = std::fs::read(a.join(rel)).unwrap();
        let alone = std::fs::read(c.join(rel)).unwrap();
        assert_eq!(from_run, alone, "{rel} differs from the batch run");
    }
    let full = DatasetManifest::load(&a).unwrap();
    assert_eq!(&full.records[4], &record);

    assert!(matches!(
        render_one(&config, 6, &c, None),
        Err(DatasetError::IndexOutOfRange { .. })
    ));
}

#[test]
fn models_rotate_round_robin_and_splits_follow_the_fractions() {
    let mut config = small_config(8, 3);
    config.damage_free_fraction = 1.0;
    config.models = (0..4).map(|i| toycar_source(&format!("m{i}"))).collect();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let report = generate(&config, &out).unwrap();
    assert_eq!(report.failed, 0);

    let mut per_model: BTreeMap<String, u32> = BTreeMap::new();
    for record in &report.manifest.records {
        *per_model.entry(record.model_id.clone()).or_default() += 1;
        assert_eq!(
            record.model_id,
            format!("m{}", record.index % 4),
            "models must cycle by index"
        );
        assert!(record.damage_types.is_empty());
    }
    assert_eq!(per_model.len(), 4);
    assert!(per_model.values().all(|&n| n == 2));

    // round(0.827 * 8) = 7 train, round(0.082 * 8) = 1 val, remainder test.
    let stats = compute_stats(&out).unwrap();
    assert_eq!(stats.split_counts.get("train"), Some(&7));
    assert_eq!(stats.split_counts.get("val"), Some(&1));
    assert_eq!(stats.split_counts.get("test"), None);
    for record in &report.manifest.records {
        let expected = if record.index < 7 { Split::Train } else { Split::Val };
        assert_eq!(record.split, expected);
    }
}

#[test]
fn validation_flags_corrupted_datasets() {
    let config = small_config(4, 11);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let report = generate(&config, &out).unwrap();
    assert!(validate_manifest(&out).unwrap().is_valid());

    // Damage on a part whose material refuses it: shattered glass cannot
    // appear on the background or on metal.
    let (record, target) = report
        .manifest
        .records
        .iter()
        .find_map(|record| {
            let rel = record.part_map.as_ref()?;
            let (_, _, parts) = load_mask_png(&out.join(rel)).ok()?;
            let metal = parts.iter().position(|&p| (1..=15).contains(&p))?;
            Some((record, metal))
        })
        .expect("some image shows a metal part");
    let damage_rel = record.damage_map.as_ref().unwrap();
    let mut damage = image::open(out.join(damage_rel)).unwrap().to_luma8();
    let w = damage.width();
    damage.put_pixel(target as u32 % w, target as u32 / w, image::Luma([4]));
    damage.save(out.join(damage_rel)).unwrap();
    let after_pixel = validate_manifest(&out).unwrap();
    assert!(
        after_pixel
            .problems
            .iter()
            .any(|p| p.contains("incompatible")),
        "expected a compatibility problem, got {:?}",
        after_pixel.problems
    );

    // A missing color file and a tampered seed are both reported.
    let image_rel = record.image.as_ref().unwrap().clone();
    std::fs::remove_file(out.join(&image_rel)).unwrap();
    let mut manifest = DatasetManifest::load(&out).unwrap();
    manifest.records[1].seed ^= 1;
    manifest.save(&out).unwrap();
    let report = validate_manifest(&out).unwrap();
    assert!(report.problems.iter().any(|p| p.contains("missing color file")));
    assert!(report.problems.iter().any(|p| p.contains("does not derive")));
}

#[test]
fn bad_configurations_are_rejected_with_config_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let path = dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        path
    };

    let unknown = GenerationConfig::load(&write("unknown.toml", "count = 4\nwat = 1\n"));
    match unknown {
        Err(e @ DatasetError::Parse { .. }) => assert_eq!(e.exit_code(), 1),
        other => panic!("expected a parse error, got {other:?}"),
    }

    let zero = GenerationConfig::load(&write("zero.toml", "count = 0\n"));
    match zero {
        Err(e @ DatasetError::Config(_)) => assert_eq!(e.exit_code(), 1),
        other => panic!("expected a config error, got {other:?}"),
    }

    let fraction = GenerationConfig::load(&write("frac.toml", "damage_free_fraction = 1.5\n"));
    assert!(matches!(fraction, Err(DatasetError::Config(_))));

    let splits = GenerationConfig::load(&write(
        "splits.toml",
        "[splits]\ntrain = 0.9\nval = 0.2\n",
    ));
    assert!(matches!(splits, Err(DatasetError::Config(_))));

    let mut dupes = small_config(2, 0);
    dupes.models = vec![toycar_source("same"), toycar_source("same")];
    assert!(matches!(dupes.validate(), Err(DatasetError::Config(_))));

    assert_eq!(
        DatasetError::IndexOutOfRange { index: 9, count: 2 }.exit_code(),
        2
    );
    assert_eq!(DatasetError::Invalid(3).exit_code(), 2);
    assert_eq!(
        DatasetError::Partial { failed: 1, total: 4 }.exit_code(),
        2
    );

    // Relative model paths resolve against the configuration file.
    let nested = dir.path().join("nested");
    std::fs::create_dir_all(&nested).unwrap();
    let toml = "count = 1\n[[models]]\nid = \"t\"\ngeometry = \"car.obj\"\nlabels = \"car.json\"\n";
    let config = GenerationConfig::load(&write("nested/rel.toml", toml)).unwrap();
    assert_eq!(config.models[0].geometry, nested.join("car.obj"));
    assert_eq!(config.models[0].labels, nested.join("car.json"));
}

#[test]
fn config_snapshot_survives_a_toml_round_trip() {
    let config = small_config(5, 21);
    let text = toml::to_string(&config).unwrap();
    let back: GenerationConfig = toml::from_str(&text).unwrap();
    assert_eq!(back, config);
}

#[test]
fn previews_render_every_damage_type() {
    let dir = tempfile::tempdir().unwrap();
    for dtype in crumple_core::damage::ALL_DAMAGE_TYPES {
        // Seed picked so even the hairline crack labels a few pixels at
        // this resolution.
        let color = preview_damage(dtype, 5, 96, dir.path()).unwrap();
        assert!(color.is_file());
        let damage_rel = dir
            .path()
            .join(format!("preview-{}-damage.png", dtype.name()));
        let (w, h, mask) = load_mask_png(&damage_rel).unwrap();
        assert_eq!((w, h), (96, 96));
        assert!(
            mask.iter().any(|&d| d == dtype.code()),
            "{dtype} preview carries no labeled pixels"
        );
        assert!(mask.iter().all(|&d| d == 0 || d == dtype.code()));
    }
}
