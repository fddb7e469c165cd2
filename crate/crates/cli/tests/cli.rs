use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use floodbench::depth::{fwdet, DepthField};
use floodbench::metrics::{depth_rmse, read_manifest, MetricsRecord};
use floodbench::raster::{code, read_mask, read_raster, write_mask, write_raster, RasterFormat};
use floodbench::speckle::enl;
use floodbench::synth::SceneSpec;
use floodbench::BinaryMask;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_floodbench"));
    c.env("RUST_LOG", "info").env_remove("FLOODBENCH_CACHE_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code_of(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_spec() -> SceneSpec {
    let mut spec = SceneSpec::standard(11);
    spec.grid.width = 128;
    spec.grid.height = 128;
    spec.grid.cell_size = 20.0;
    spec
}

/// Writes the spec and generates the scene through the CLI.
fn scene(dir: &Path) -> PathBuf {
    let spec = dir.join("scene.toml");
    std::fs::write(&spec, small_spec().to_toml()).unwrap();
    let out_dir = dir.join("scene");
    let out = run(&["synth", "--spec", s(&spec), "--out-dir", s(&out_dir)]);
    assert_eq!(code_of(&out), 0, "{}", stderr(&out));
    out_dir
}

#[test]
fn enumerate_counts() {
    for (space, n) in [("filters", 26), ("mappers", 48), ("mappers-morph", 432), ("depth", 19)] {
        let out = run(&["enumerate", "--space", space]);
        assert_eq!(code_of(&out), 0);
        let text = String::from_utf8(out.stdout).unwrap();
        assert_eq!(text.lines().count(), n, "{space}");
        let mut lines: Vec<&str> = text.lines().collect();
        lines.sort_unstable();
        lines.dedup();
        assert_eq!(lines.len(), n, "{space} has duplicates");
    }
    assert_eq!(code_of(&run(&["enumerate", "--space", "everything"])), 2);
}

#[test]
fn synth_is_reproducible_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let a = scene(dir.path());
    for f in ["dem.fbr", "truth_depth.fbr", "clean_backscatter.fbr", "flood_intensity.fbr", "reference_intensity.fbr", "truth_mask.fbr"] {
        assert!(a.join(f).is_file(), "{f}");
    }
    let again = dir.path().join("again");
    let out = run(&["synth", "--spec", s(&dir.path().join("scene.toml")), "--out-dir", s(&again)]);
    assert_eq!(code_of(&out), 0);
    for f in ["dem.fbr", "flood_intensity.fbr", "truth_mask.fbr"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }

    let mut bad = small_spec();
    bad.radar.water_db = -5.0;
    let spec = dir.path().join("bad.toml");
    std::fs::write(&spec, bad.to_toml()).unwrap();
    let out = run(&["synth", "--spec", s(&spec), "--out-dir", s(&dir.path().join("bad"))]);
    assert_eq!(code_of(&out), 2, "{}", stderr(&out));
    assert!(!dir.path().join("bad").join("dem.fbr").exists());
}

#[test]
fn despeckle_behaviour() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scene(dir.path());
    let input = sc.join("flood_intensity.fbr");

    let copy = dir.path().join("copy.fbr");
    let out = run(&["despeckle", "--in", s(&input), "--out", s(&copy), "--method", "none"]);
    assert_eq!(code_of(&out), 0);
    assert_eq!(std::fs::read(&input).unwrap(), std::fs::read(&copy).unwrap());

    let out = run(&["despeckle", "--in", s(&input), "--out", s(&copy), "--method", "gaussian"]);
    assert_eq!(code_of(&out), 2);
    assert!(stderr(&out).contains("Usage"), "{}", stderr(&out));

    let filtered = dir.path().join("median.fbr");
    let out = run(&["despeckle", "--in", s(&input), "--out", s(&filtered), "--method", "median", "--window", "5"]);
    assert_eq!(code_of(&out), 0, "{}", stderr(&out));
    let before = read_raster(&input, RasterFormat::FlatBinary).unwrap();
    let after = read_raster(&filtered, RasterFormat::FlatBinary).unwrap();
    // Dry land away from the water.
    let land = BinaryMask::from_fn(*before.geometry(), |r, _| if r < 20 { code::FLOODED } else { code::DRY }).unwrap();
    assert!(enl(&after, &land).unwrap() > enl(&before, &land).unwrap());

    let out = run(&["despeckle", "--in", s(&input), "--out", s(&copy), "--method", "median", "--window", "4"]);
    assert_eq!(code_of(&out), 2);
}

#[test]
fn mapflood_behaviour() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scene(dir.path());
    let input = sc.join("flood_intensity.fbr");
    let mask_path = dir.path().join("otsu.fbr");
    let out = run(&["mapflood", "--in", s(&input), "--method", "global_threshold", "--selector", "otsu", "--out", s(&mask_path)]);
    assert_eq!(code_of(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("threshold_db="), "{}", stderr(&out));
    let mask = read_mask(&mask_path, RasterFormat::FlatBinary).unwrap();
    assert!(mask.flooded_count() > 0 && mask.dry_count() > 0);

    let out = run(&["mapflood", "--in", s(&input), "--method", "change_detection", "--out", s(&mask_path)]);
    assert_eq!(code_of(&out), 2);

    // Identical images carry no change signal.
    let out = run(&[
        "mapflood", "--in", s(&input), "--ref", s(&input), "--method", "change_detection", "--out", s(&dir.path().join("cd.fbr")),
    ]);
    assert_eq!(code_of(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("no change signal"));
    assert!(!dir.path().join("cd.fbr").exists());

    let cleaned = dir.path().join("clean.fbr");
    let out = run(&[
        "mapflood", "--in", s(&input), "--method", "global_threshold", "--fill-holes", "50", "--remove-patches", "50", "--out", s(&cleaned),
    ]);
    assert_eq!(code_of(&out), 0);
    let clean = read_mask(&cleaned, RasterFormat::FlatBinary).unwrap();
    let expected = floodbench::floodmap::remove_patches(&floodbench::floodmap::fill_holes(&mask, 50), 50);
    assert_eq!(clean, expected);
}

#[test]
fn depth_behaviour() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scene(dir.path());
    let truth = sc.join("truth_mask.fbr");
    let dem = sc.join("dem.fbr");
    let depth = dir.path().join("depth.fbr");
    let wse = dir.path().join("wse.fbr");
    let out = run(&[
        "depth", "--mask", s(&truth), "--dem", s(&dem), "--method", "fwdet", "--smoothing", "3", "--out", s(&depth), "--wse-out", s(&wse),
    ]);
    assert_eq!(code_of(&out), 0, "{}", stderr(&out));
    let m = read_mask(&truth, RasterFormat::FlatBinary).unwrap();
    let z = read_raster(&dem, RasterFormat::FlatBinary).unwrap();
    let DepthField { depth: d, wse: w } = fwdet(&m, &z, None, 3).unwrap();
    assert_eq!(read_raster(&depth, RasterFormat::FlatBinary).unwrap(), d);
    assert_eq!(read_raster(&wse, RasterFormat::FlatBinary).unwrap(), w);

    let out = run(&["depth", "--mask", s(&truth), "--dem", s(&dem), "--method", "cross_section", "--out", s(&depth)]);
    assert_eq!(code_of(&out), 2);

    let empty = dir.path().join("empty.fbr");
    write_mask(&BinaryMask::filled(*m.geometry(), code::DRY), &empty, RasterFormat::FlatBinary).unwrap();
    let out = run(&["depth", "--mask", s(&empty), "--dem", s(&dem), "--method", "fwdet", "--out", s(&dir.path().join("e.fbr"))]);
    assert_eq!(code_of(&out), 3);
    assert!(stderr(&out).contains("empty flood"), "{}", stderr(&out));

    let out = run(&[
        "depth", "--mask", s(&truth), "--dem", s(&dem), "--method", "cross_section", "--sections", s(&sc.join("sections.txt")), "--out", s(&depth),
    ]);
    assert_eq!(code_of(&out), 0, "{}", stderr(&out));
}

#[test]
fn metrics_behaviour() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scene(dir.path());
    let truth = sc.join("truth_mask.fbr");
    let csv = dir.path().join("m.csv");
    let out = run(&["metrics", "--pred", s(&truth), "--ref", s(&truth), "--out-csv", s(&csv)]);
    assert_eq!(code_of(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!((row[0], row[1]), ("1", "1"));

    let bad = dir.path().join("wm.csv");
    std::fs::write(&bad, "easting,northing,depth\n1,2,3\n").unwrap();
    let out = run(&["metrics", "--pred-depth", s(&sc.join("truth_depth.fbr")), "--watermarks", s(&bad)]);
    assert_eq!(code_of(&out), 2);

    // Depth RMSE against a shifted copy matches the library value.
    let truth_depth = read_raster(&sc.join("truth_depth.fbr"), RasterFormat::FlatBinary).unwrap();
    let shifted = truth_depth.map_valid(|i, v| f64::from(v) + if i % 3 == 0 { 0.5 } else { 0.0 });
    let shifted_path = dir.path().join("shifted.fbr");
    write_raster(&shifted, &shifted_path, RasterFormat::FlatBinary).unwrap();
    let out = run(&["metrics", "--pred-depth", s(&shifted_path), "--ref-depth", s(&sc.join("truth_depth.fbr"))]);
    assert_eq!(code_of(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let rmse: f64 = stdout.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert_eq!(rmse, depth_rmse(&shifted, &truth_depth).unwrap());
}

fn without_wall(mut records: Vec<MetricsRecord>) -> Vec<MetricsRecord> {
    for r in &mut records {
        r.wall_ms = 0;
    }
    records.sort_by(|a, b| a.config_id.cmp(&b.config_id));
    records
}

#[test]
fn sweep_behaviour() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scene(dir.path());
    let plan = dir.path().join("plan.toml");
    std::fs::write(
        &plan,
        r#"
[inputs]
flood = "scene/flood_intensity.fbr"
reference = "scene/reference_intensity.fbr"
dem = "scene/dem.fbr"
permanent_water = "scene/permanent_water.fbr"
truth_mask = "scene/truth_mask.fbr"
truth_depth = "scene/truth_depth.fbr"

[filters]
methods = ["none", "median"]

[mappers]
methods = ["global_threshold", "change_detection"]

[depth]
methods = ["fwdet"]
per_method = 2
"#,
    )
    .unwrap();
    assert!(sc.join("permanent_water.fbr").is_file());
    let out_dir = dir.path().join("out");
    let out = run(&["sweep", "--plan", s(&plan), "--out-dir", s(&out_dir), "--jobs", "4"]);
    assert_eq!(code_of(&out), 0, "{}", stderr(&out));
    let first = read_manifest(&out_dir.join("manifest.csv")).unwrap();
    // 4 filters x 4 mappers, then 2 maps per method x 9 fwdet settings.
    assert_eq!(first.len(), 16 + 2 * 2 * 9);
    assert!(out_dir.join("summary.csv").is_file());
    assert!(stderr(&out).contains("stage=map config="));

    let out = run(&["sweep", "--plan", s(&plan), "--out-dir", s(&out_dir), "--jobs", "1"]);
    assert_eq!(code_of(&out), 0);
    assert!(stderr(&out).contains("cache_misses=0"), "{}", stderr(&out));
    let second = read_manifest(&out_dir.join("manifest.csv")).unwrap();
    assert_eq!(without_wall(first), without_wall(second));

    let cache = dir.path().join("elsewhere");
    let out = bin()
        .args(["sweep", "--plan", s(&plan), "--out-dir", s(&dir.path().join("out2"))])
        .env("FLOODBENCH_CACHE_DIR", &cache)
        .output()
        .unwrap();
    assert_eq!(code_of(&out), 0);
    assert!(std::fs::read_dir(&cache).unwrap().count() > 0);
    assert!(!dir.path().join("out2").join("cache").exists());

    let out = run(&["sweep", "--plan", s(&dir.path().join("missing.toml")), "--out-dir", s(&out_dir)]);
    assert_eq!(code_of(&out), 2);
}
