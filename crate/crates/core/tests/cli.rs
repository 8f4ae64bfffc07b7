use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use volaug::source_match::{compute_image_cdf, IntensityHistogram, SMConfig};
use volaug::volume::{
    load_labels, load_volume, preclip_ct, save_labels, save_volume, Modality, PhantomSpec, ShapeMode, TissueIntensity,
};
use volaug::{LabelMap, Volume};

fn volaug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volaug")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = volaug(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn spec(n_labels: usize) -> PhantomSpec {
    PhantomSpec {
        seed: 12,
        dims: [30, 28, 24],
        spacing: [1.0, 1.0, 2.0],
        n_labels,
        shape_mode: ShapeMode::NestedEllipsoids,
        intensity_table: (0..n_labels)
            .map(|k| TissueIntensity {
                mean: -700.0 + 450.0 * k as f64,
                std: 35.0,
            })
            .collect(),
    }
}

/// Temp dir holding a synthesized phantom at `<dir>/ph_{image,labels}.svol.json`.
fn with_phantom(n_labels: usize) -> (TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    fs::write(&spec_path, serde_json::to_string(&spec(n_labels)).unwrap()).unwrap();
    ok(&["synth", s(&spec_path), s(&dir.path().join("ph"))]);
    let img = dir.path().join("ph_image.svol.json");
    let lab = dir.path().join("ph_labels.svol.json");
    (dir, img, lab)
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap()
}

#[test]
fn synth_is_reproducible() {
    let (dir, img, lab) = with_phantom(3);
    let (a, b) = (read(&img), read(&img.with_extension("bin")));
    ok(&["synth", s(&dir.path().join("spec.json")), s(&dir.path().join("ph"))]);
    assert_eq!(read(&img), a);
    assert_eq!(read(&img.with_extension("bin")), b);
    assert_eq!(load_labels(&lab).unwrap().label_set(), [0, 1, 2]);
}

#[test]
fn synth_seed_flag_overrides_spec() {
    let (dir, img, _) = with_phantom(2);
    ok(&["--seed", "99", "synth", s(&dir.path().join("spec.json")), s(&dir.path().join("other"))]);
    let other = load_volume(dir.path().join("other_image.svol.json")).unwrap();
    assert_ne!(other, load_volume(&img).unwrap());
}

#[test]
fn synth_rejects_malformed_spec() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"seed": 1, "dims": [8, 8]}"#).unwrap();
    let out = volaug(&["synth", s(&bad), s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let mut sp = spec(3);
    sp.n_labels = 1;
    fs::write(&bad, serde_json::to_string(&sp).unwrap()).unwrap();
    assert_eq!(volaug(&["synth", s(&bad), s(&dir.path().join("x"))]).status.code(), Some(2));
}

#[test]
fn augment_samples_are_order_independent() {
    let (dir, img, lab) = with_phantom(3);
    let d = dir.path();
    ok(&["--seed", "5", "augment", s(&img), s(&lab), s(&d.join("a")), "--n", "2", "--normalize"]);
    ok(&["--seed", "5", "augment", s(&img), s(&lab), s(&d.join("b")), "--start", "1", "--n", "1", "--normalize"]);
    for suffix in ["image.svol.bin", "labels.svol.bin", "meta.json"] {
        assert_eq!(read(&d.join(format!("a_1_{suffix}"))), read(&d.join(format!("b_1_{suffix}"))));
    }
    assert_ne!(read(&d.join("a_0_image.svol.bin")), read(&d.join("a_1_image.svol.bin")));
}

#[test]
fn augment_passthrough_is_identity() {
    let (dir, img, lab) = with_phantom(3);
    let d = dir.path();
    let cfg = d.join("cfg.toml");
    fs::write(
        &cfg,
        "seed = 3\n[geometry]\ntranslation = 0.0\nrotation = 0.0\nscale = [1.0, 1.0]\nelastic = 0.0\n[jitter]\nenabled = false\n[src]\nenabled = false\n",
    )
    .unwrap();
    ok(&["--config", s(&cfg), "augment", s(&img), s(&lab), s(&d.join("id"))]);
    assert_eq!(read(&d.join("id_0_image.svol.bin")), read(&img.with_extension("bin")));
    assert_eq!(read(&d.join("id_0_labels.svol.bin")), read(&lab.with_extension("bin")));
}

#[test]
fn augment_output_norm_matches_post_cda_norm() {
    let (dir, img, lab) = with_phantom(4);
    let d = dir.path();
    ok(&["--seed", "8", "augment", s(&img), s(&lab), s(&d.join("n")), "--n", "4", "--normalize"]);
    for k in 0..4 {
        let meta: Value = serde_json::from_slice(&read(&d.join(format!("n_{k}_meta.json")))).unwrap();
        let want = meta["post_cda_norm"].as_f64().unwrap();
        let got = load_volume(d.join(format!("n_{k}_image.svol.json"))).unwrap().frobenius_norm();
        assert!((got - want).abs() / want <= 1e-6, "sample {k}: {got} vs {want}");
        assert_eq!(meta["sample"], k);
    }
}

#[test]
fn augment_needs_seed_and_matching_inputs() {
    let (dir, img, _) = with_phantom(2);
    let d = dir.path();
    let out = volaug(&["augment", s(&img), s(&d.join("ph_labels.svol.json")), s(&d.join("x"))]);
    assert_eq!(out.status.code(), Some(1));
    let small = d.join("small.svol.json");
    save_labels(&LabelMap::new([2, 2, 2], [1.0; 3], vec![0; 8]).unwrap(), &small).unwrap();
    assert_eq!(volaug(&["--seed", "1", "augment", s(&img), s(&small), s(&d.join("x"))]).status.code(), Some(2));
    let missing = d.join("missing.svol.json");
    assert_eq!(volaug(&["--seed", "1", "augment", s(&img), s(&missing), s(&d.join("x"))]).status.code(), Some(2));
}

#[test]
fn fit_hist_single_volume_equals_image_cdf() {
    let (dir, img, _) = with_phantom(3);
    let d = dir.path();
    fs::write(d.join("list.txt"), "ph_image.svol.json\n").unwrap();
    ok(&["fit-hist", s(&d.join("list.txt")), s(&d.join("h.json"))]);
    let cfg = SMConfig::new(Modality::Ct);
    let want = compute_image_cdf(&preclip_ct(&load_volume(&img).unwrap()), &cfg).unwrap();
    assert_eq!(String::from_utf8(read(&d.join("h.json"))).unwrap(), want.to_json().unwrap());
}

#[test]
fn fit_hist_ignores_list_order() {
    let (dir, _, _) = with_phantom(3);
    let d = dir.path();
    ok(&["--seed", "2", "synth", s(&d.join("spec.json")), s(&d.join("q"))]);
    ok(&["--seed", "3", "synth", s(&d.join("spec.json")), s(&d.join("r"))]);
    fs::write(d.join("l1.txt"), "ph_image.svol.json\nq_image.svol.json\nr_image.svol.json\n").unwrap();
    fs::write(d.join("l2.txt"), "# permuted\nr_image.svol.json\n\nph_image.svol.json\nq_image.svol.json\n").unwrap();
    ok(&["fit-hist", s(&d.join("l1.txt")), s(&d.join("h1.json"))]);
    ok(&["fit-hist", s(&d.join("l2.txt")), s(&d.join("h2.json"))]);
    assert_eq!(read(&d.join("h1.json")), read(&d.join("h2.json")));
}

#[test]
fn fit_hist_rejects_bad_lists() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("list.txt"), "nope.svol.json\n").unwrap();
    assert_eq!(volaug(&["fit-hist", s(&d.join("list.txt")), s(&d.join("h.json"))]).status.code(), Some(2));
    fs::write(d.join("empty.txt"), "\n# nothing\n").unwrap();
    assert_eq!(volaug(&["fit-hist", s(&d.join("empty.txt")), s(&d.join("h.json"))]).status.code(), Some(2));
    assert!(!d.join("h.json").exists());
}

#[test]
fn match_against_own_histogram_is_near_identity() {
    let (dir, img, _) = with_phantom(3);
    let d = dir.path();
    fs::write(d.join("list.txt"), "ph_image.svol.json\n").unwrap();
    ok(&["fit-hist", s(&d.join("list.txt")), s(&d.join("h.json"))]);
    ok(&["match", s(&img), s(&d.join("h.json")), s(&d.join("m.svol.json"))]);
    let clipped = preclip_ct(&load_volume(&img).unwrap());
    let matched = load_volume(d.join("m.svol.json")).unwrap();
    let w = SMConfig::new(Modality::Ct).bin_width();
    for (a, b) in clipped.data().iter().zip(matched.data()) {
        assert!((f64::from(*a) - f64::from(*b)).abs() <= w);
    }
}

#[test]
fn match_constant_volume_and_modality_check() {
    let (dir, _, _) = with_phantom(3);
    let d = dir.path();
    fs::write(d.join("list.txt"), "ph_image.svol.json\n").unwrap();
    ok(&["fit-hist", s(&d.join("list.txt")), s(&d.join("h.json"))]);
    let c = d.join("c.svol.json");
    save_volume(&Volume::filled([6, 6, 6], [1.0; 3], 40.0).unwrap(), &c).unwrap();
    ok(&["--modality", "ct", "match", s(&c), s(&d.join("h.json")), s(&d.join("cm.svol.json"))]);
    let out = load_volume(d.join("cm.svol.json")).unwrap();
    assert!(out.data().iter().all(|&v| v == out.data()[0]));
    let mismatch = volaug(&["--modality", "mr", "match", s(&c), s(&d.join("h.json")), s(&d.join("x.svol.json"))]);
    assert_eq!(mismatch.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("mismatch"));
}

fn cube(lo: [usize; 3]) -> LabelMap {
    LabelMap::from_fn([8, 8, 8], [1.0; 3], |x, y, z| {
        u16::from([x, y, z].iter().zip(lo).all(|(&c, l)| c >= l && c < l + 2))
    })
    .unwrap()
}

#[test]
fn evaluate_identical_maps() {
    let (dir, _, lab) = with_phantom(4);
    let out = dir.path().join("r.json");
    ok(&["evaluate", s(&lab), s(&lab), s(&out)]);
    let r: Value = serde_json::from_slice(&read(&out)).unwrap();
    let per = r["per_label"].as_object().unwrap();
    assert_eq!(per.keys().collect::<Vec<_>>(), ["1", "2", "3"]);
    for m in per.values() {
        assert_eq!((m["dsc"].as_f64(), m["assd_mm"].as_f64(), m["hd95_mm"].as_f64()), (Some(1.0), Some(0.0), Some(0.0)));
    }
    assert_eq!(r["mean"]["dsc"].as_f64(), Some(1.0));
}

#[test]
fn evaluate_shifted_cube_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    save_labels(&cube([2, 2, 2]), d.join("p.svol.json")).unwrap();
    save_labels(&cube([3, 2, 2]), d.join("g.svol.json")).unwrap();
    ok(&["evaluate", s(&d.join("p.svol.json")), s(&d.join("g.svol.json")), s(&d.join("r.json"))]);
    let r: Value = serde_json::from_slice(&read(&d.join("r.json"))).unwrap();
    let m = &r["per_label"]["1"];
    assert_eq!(m["dsc"].as_f64(), Some(0.5));
    // every voxel of both 2-cubes is on the surface; 4 of 8 per cube sit one voxel from the other cube,
    // the other 4 overlap it
    assert_eq!(m["assd_mm"].as_f64(), Some(0.5));
    assert_eq!(m["hd95_mm"].as_f64(), Some(1.0));

    let top: Vec<_> = r.as_object().unwrap().keys().cloned().collect();
    assert_eq!(top, ["mean", "per_label"]);
    for entry in r["per_label"].as_object().unwrap().values().chain([&r["mean"]]) {
        let keys: Vec<_> = entry.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["assd_mm", "dsc", "hd95_mm"]);
        assert!(entry["dsc"].as_f64().is_some_and(|v| (0.0..=1.0).contains(&v)));
        assert!(entry["assd_mm"].as_f64().is_some_and(|v| v >= 0.0));
    }
}

#[test]
fn evaluate_missing_label_warns_with_null() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gt = LabelMap::from_fn([6, 6, 6], [1.0; 3], |x, _, _| if x < 3 { 1 } else { 2 }).unwrap();
    let pred = LabelMap::from_fn([6, 6, 6], [1.0; 3], |_, _, _| 1).unwrap();
    save_labels(&pred, d.join("p.svol.json")).unwrap();
    save_labels(&gt, d.join("g.svol.json")).unwrap();
    let out = ok(&["evaluate", s(&d.join("p.svol.json")), s(&d.join("g.svol.json")), s(&d.join("r.json"))]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let r: Value = serde_json::from_slice(&read(&d.join("r.json"))).unwrap();
    assert!(r["per_label"]["2"]["assd_mm"].is_null());
    assert_eq!(r["per_label"]["2"]["dsc"].as_f64(), Some(0.0));
}

#[test]
fn evaluate_dim_mismatch_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    save_labels(&cube([0, 0, 0]), d.join("p.svol.json")).unwrap();
    save_labels(&LabelMap::new([2, 2, 2], [1.0; 3], vec![1; 8]).unwrap(), d.join("g.svol.json")).unwrap();
    let out = volaug(&["evaluate", s(&d.join("p.svol.json")), s(&d.join("g.svol.json")), s(&d.join("r.json"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inspect_prints_headers() {
    let (dir, img, lab) = with_phantom(3);
    let text = String::from_utf8(ok(&["inspect", s(&img)]).stdout).unwrap();
    assert!(text.contains("[30, 28, 24]") && text.contains("f32"));
    let text = String::from_utf8(ok(&["inspect", s(&lab)]).stdout).unwrap();
    assert!(text.contains("[0, 1, 2]"));
    let h = dir.path().join("h.json");
    IntensityHistogram::new(&SMConfig { n_bins: 2, ..SMConfig::new(Modality::Mr) }, vec![0.5, 1.0])
        .unwrap()
        .save(&h)
        .unwrap();
    let text = String::from_utf8(ok(&["inspect", s(&h)]).stdout).unwrap();
    assert!(text.contains("mr") && text.contains("n_bins     2"));
    let junk = dir.path().join("junk.json");
    fs::write(&junk, "{}").unwrap();
    assert_eq!(volaug(&["inspect", s(&junk)]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(volaug(&[]).status.code(), Some(1));
    assert_eq!(volaug(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(volaug(&["--modality", "pet", "inspect", "x"]).status.code(), Some(1));
    assert_eq!(volaug(&["--threads", "0", "inspect", "x"]).status.code(), Some(1));
    assert_eq!(volaug(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[geometry]\nscale = [2.0, 1.0]\n").unwrap();
    let out = volaug(&["--config", s(&cfg), "--seed", "1", "augment", "a", "b", "c"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn commands_leave_inputs_untouched() {
    let (dir, img, lab) = with_phantom(3);
    let d = dir.path();
    let before: Vec<Vec<u8>> = [&img, &lab].iter().flat_map(|p| [read(p), read(&p.with_extension("bin"))]).collect();
    ok(&["--seed", "1", "augment", s(&img), s(&lab), s(&d.join("a")), "--normalize"]);
    fs::write(d.join("list.txt"), "ph_image.svol.json\n").unwrap();
    ok(&["fit-hist", s(&d.join("list.txt")), s(&d.join("h.json"))]);
    ok(&["match", s(&img), s(&d.join("h.json")), s(&d.join("m.svol.json"))]);
    ok(&["evaluate", s(&lab), s(&lab), s(&d.join("r.json"))]);
    let after: Vec<Vec<u8>> = [&img, &lab].iter().flat_map(|p| [read(p), read(&p.with_extension("bin"))]).collect();
    assert_eq!(before, after);
}
