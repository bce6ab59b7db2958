mod common;

use onestep_vqa::features::{extract_video_block, VideoFeatureAccumulator};
use onestep_vqa::table::FeatureTable;
use onestep_vqa::temporal::DirectionSet;
use onestep_vqa::video::{save_y4m, Chroma};
use onestep_vqa::{
    downscale_by_2, extract_batch, extract_features, extract_features_from_files, nvs_fits_for_pair, ManifestRow,
    Variant, VariantConfig, VideoSequence,
};

const GOLDEN_BASE_LABELS: [&str; 36] = [
    "ref.s1.nfs.alpha",
    "ref.s1.D1.alpha",
    "ref.s1.D1.sigma",
    "ref.s1.D2.alpha",
    "ref.s1.D2.sigma",
    "ref.s1.D3.alpha",
    "ref.s1.D3.sigma",
    "ref.s1.D4.alpha",
    "ref.s1.D4.sigma",
    "ref.s2.nfs.alpha",
    "ref.s2.D1.alpha",
    "ref.s2.D1.sigma",
    "ref.s2.D2.alpha",
    "ref.s2.D2.sigma",
    "ref.s2.D3.alpha",
    "ref.s2.D3.sigma",
    "ref.s2.D4.alpha",
    "ref.s2.D4.sigma",
    "cmp.s1.nfs.alpha",
    "cmp.s1.D1.alpha",
    "cmp.s1.D1.sigma",
    "cmp.s1.D2.alpha",
    "cmp.s1.D2.sigma",
    "cmp.s1.D3.alpha",
    "cmp.s1.D3.sigma",
    "cmp.s1.D4.alpha",
    "cmp.s1.D4.sigma",
    "cmp.s2.nfs.alpha",
    "cmp.s2.D1.alpha",
    "cmp.s2.D1.sigma",
    "cmp.s2.D2.alpha",
    "cmp.s2.D2.sigma",
    "cmp.s2.D3.alpha",
    "cmp.s2.D3.sigma",
    "cmp.s2.D4.alpha",
    "cmp.s2.D4.sigma",
];

#[test]
fn golden_base_labels() {
    assert_eq!(VariantConfig::base().labels(), GOLDEN_BASE_LABELS);
}

#[test]
fn variant_one_restricts_only_temporal_features() {
    let labels = VariantConfig::of(Variant::I).labels();
    assert_eq!(labels.len(), 20);
    assert!(labels.contains(&"ref.s2.nfs.alpha".to_string()));
    assert!(!labels.iter().any(|l| l.contains(".s2.D")));
}

#[test]
fn larger_variants_are_supersets_of_base() {
    let r = common::noise_video(40, 36, 3, 1);
    let c = common::noise_video(40, 36, 3, 2);
    let base = extract_features(&r, &c, VariantConfig::base()).unwrap();
    for variant in [Variant::III] {
        let wide = extract_features(&r, &c, VariantConfig::of(variant)).unwrap();
        assert_eq!(wide.len(), 76);
        for (label, v) in base.labels.iter().zip(&base.values) {
            assert_eq!(wide.get(label).unwrap().to_bits(), v.to_bits(), "{label}");
        }
    }
    // variants I and II share every spatial feature and the scale-1 diagonals
    let one = extract_features(&r, &c, VariantConfig::of(Variant::I)).unwrap();
    for (label, v) in one.labels.iter().zip(&one.values) {
        assert_eq!(base.get(label).unwrap().to_bits(), v.to_bits(), "{label}");
    }
    let two = extract_features(&r, &c, VariantConfig::of(Variant::II)).unwrap();
    assert_eq!(two.len(), 44);
    for label in ["ref.s1.nfs.alpha", "cmp.s2.nfs.alpha"] {
        assert_eq!(two.get(label), base.get(label));
    }
}

#[test]
fn identical_inputs_give_identical_blocks() {
    let v = common::textured_video(48, 40, 4, 3);
    let fv = extract_features(&v, &v, VariantConfig::base()).unwrap();
    let (r, c) = fv.blocks();
    assert_eq!(r, c);
    assert!(fv.values.iter().all(|x| x.is_finite()));
}

#[test]
fn duplicating_frames_of_a_static_video_is_neutral() {
    let frame = common::textured_video(40, 40, 1 + 1, 4).frames()[0].clone();
    let short = VideoSequence::new(vec![frame.clone(); 2], 30.0, "").unwrap();
    let long = VideoSequence::new(vec![frame; 4], 30.0, "").unwrap();
    let a = extract_features(&short, &short, VariantConfig::base()).unwrap();
    let b = extract_features(&long, &long, VariantConfig::base()).unwrap();
    assert_eq!(a.values, b.values);
}

#[test]
fn temporal_features_pool_the_t_minus_one_pairs() {
    let v = common::noise_video(30, 30, 5, 8);
    let block = extract_video_block(v.frames().iter().cloned().map(Ok), VariantConfig::base()).unwrap();
    let dirs = DirectionSet::Diagonal4.directions();
    let mut sums = vec![(0.0, 0.0); dirs.len()];
    for pair in v.frames().windows(2) {
        for (acc, (_, fit)) in sums
            .iter_mut()
            .zip(nvs_fits_for_pair(&pair[0], &pair[1], dirs).unwrap())
        {
            acc.0 += fit.alpha;
            acc.1 += fit.sigma;
        }
    }
    for (k, (a, s)) in sums.iter().enumerate() {
        assert!((block[1 + 2 * k] - a / 4.0).abs() < 1e-12);
        assert!((block[2 + 2 * k] - s / 4.0).abs() < 1e-12);
    }
    // scale 2 pools the same pairs after downscaling
    let halves: Vec<_> = v.frames().iter().map(|f| downscale_by_2(f).unwrap()).collect();
    let fits = nvs_fits_for_pair(&halves[0], &halves[1], dirs).unwrap();
    assert!(fits.iter().all(|(_, f)| f.sigma > 0.0));
}

#[test]
fn videos_need_not_share_resolution_or_length() {
    let r = common::noise_video(64, 48, 4, 1);
    let c = common::noise_video(32, 20, 2, 2);
    assert_eq!(extract_features(&r, &c, VariantConfig::base()).unwrap().len(), 36);
}

#[test]
fn blur_moves_spatial_shape_at_both_scales() {
    let mut rng = common::rng(77);
    let frames: Vec<_> = (0..2)
        .map(|_| common::noise_frame(1920, 1080, 128.0, 40.0, &mut rng))
        .collect();
    let blurred: Vec<_> = frames.iter().map(|f| common::blur(f, 3.0)).collect();
    let r = VideoSequence::new(frames, 30.0, "noise").unwrap();
    let c = VideoSequence::new(blurred, 30.0, "blurred").unwrap();
    let fv = extract_features(&r, &c, VariantConfig::base()).unwrap();
    for s in ["s1", "s2"] {
        let a = fv.get(&format!("ref.{s}.nfs.alpha")).unwrap();
        let b = fv.get(&format!("cmp.{s}.nfs.alpha")).unwrap();
        assert!((a - b).abs() > 0.05, "{s}: ref {a} vs cmp {b}");
    }
}

#[test]
fn streaming_equals_in_memory() {
    let dir = tempfile::tempdir().unwrap();
    let r = common::textured_video(40, 32, 3, 5);
    let c = common::noise_video(40, 32, 3, 6);
    save_y4m(dir.path().join("r.y4m"), &r, Chroma::C420).unwrap();
    save_y4m(dir.path().join("c.y4m"), &c, Chroma::C444).unwrap();
    for v in Variant::ALL {
        let cfg = VariantConfig::of(v);
        let mem = extract_features(&r, &c, cfg).unwrap();
        let disk = extract_features_from_files(dir.path().join("r.y4m"), dir.path().join("c.y4m"), cfg).unwrap();
        assert_eq!(mem, disk);
    }
}

#[test]
fn accumulator_rejects_size_changes() {
    let mut acc = VideoFeatureAccumulator::new(VariantConfig::base());
    acc.push(common::noise_video(20, 20, 2, 1).frames()[0].clone()).unwrap();
    assert!(acc.push(common::noise_video(22, 20, 2, 1).frames()[0].clone()).is_err());
}

fn write_manifest_fixture(dir: &std::path::Path, rows: usize) -> Vec<ManifestRow> {
    (0..rows)
        .map(|i| {
            let r = dir.join(format!("r{i}.y4m"));
            let c = dir.join(format!("c{i}.y4m"));
            save_y4m(&r, &common::textured_video(36, 30, 3, i as u64), Chroma::C420).unwrap();
            save_y4m(&c, &common::noise_video(36, 30, 3, 100 + i as u64), Chroma::C420).unwrap();
            ManifestRow {
                id: format!("pair{i}"),
                ref_path: r,
                cmp_path: c,
            }
        })
        .collect()
}

#[test]
fn batch_reports_failing_rows_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = write_manifest_fixture(dir.path(), 3);
    manifest[1].cmp_path = dir.path().join("missing.y4m");
    let out = extract_batch(&manifest, VariantConfig::base(), 2).unwrap();
    let ok: Vec<&str> = out.successes().map(|(id, _)| id).collect();
    assert_eq!(ok, ["pair0", "pair2"]);
    let failed: Vec<&str> = out.failures().map(|(id, _)| id).collect();
    assert_eq!(failed, ["pair1"]);
    assert!(out.failures().all(|(_, e)| e.is_io()));
    assert!(out.has_failures());
}

#[test]
fn batch_is_bit_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_manifest_fixture(dir.path(), 5);
    let csv = |workers| {
        let mut bytes = Vec::new();
        extract_batch(&manifest, VariantConfig::of(Variant::II), workers)
            .unwrap()
            .to_table()
            .write_csv(&mut bytes)
            .unwrap();
        bytes
    };
    let one = csv(1);
    assert_eq!(one, csv(8));
    let table = FeatureTable::read_csv(one.as_slice()).unwrap();
    assert_eq!(table.rows.len(), 5);
    assert_eq!(table.variant, VariantConfig::of(Variant::II));
    // 17 significant digits survive the text round trip
    let direct = extract_batch(&manifest, VariantConfig::of(Variant::II), 1).unwrap();
    for ((_, values), (_, fv)) in table.rows.iter().zip(direct.successes()) {
        assert_eq!(values, &fv.values);
    }
}

#[test]
fn empty_manifest_is_an_empty_success() {
    let out = extract_batch(&[], VariantConfig::base(), 0).unwrap();
    assert!(out.rows.is_empty() && !out.has_failures());
}
