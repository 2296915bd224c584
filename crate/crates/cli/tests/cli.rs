use std::path::Path;
use std::process::{Command, Output};

use grainpipe_core::pipeline::{build_mini_archive, mini_expectation, RunManifest};

fn grainpipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grainpipe"))
        .args(args)
        .env_remove("GRAINPIPE_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn invalid_invocations_exit_2() {
    assert_eq!(code(&grainpipe(&["--help"])), 0);
    assert_eq!(code(&grainpipe(&["frobnicate"])), 2);
    assert_eq!(code(&grainpipe(&["run"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let o = grainpipe(&["--set", "grid.no_such_key=1", "segment", "--cells", s(dir.path())]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let o = Command::new(env!("CARGO_BIN_EXE_grainpipe"))
        .args(["segment", "--cells", s(dir.path())])
        .env("GRAINPIPE_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn synth_and_run() {
    let data = tempfile::tempdir().unwrap();
    let o = grainpipe(&["--seed", "4", "synth", "--out", s(data.path()), "--dishes", "2", "--days", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let synth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.path().join("synth.json")).unwrap()).unwrap();
    assert_eq!(synth["seed"], 4);
    assert!(data.path().join("dish01/day1_hsi.truth.json").exists());

    let manifest = data.path().join("manifest.json");
    let out = tempfile::tempdir().unwrap();
    let o = grainpipe(&["run", "--manifest", s(&manifest), "--out", s(out.path()), "--workers", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["workers"], 2);

    // Break one dish: the other still runs, the exit code reports the failure.
    let mut m = RunManifest::load(&manifest).unwrap();
    m.dishes[0].reference_frame = Some(data.path().join("missing.cube.json"));
    let broken = data.path().join("broken.json");
    m.save(&broken).unwrap();
    let out2 = tempfile::tempdir().unwrap();
    let o = grainpipe(&["run", "--manifest", s(&broken), "--out", s(out2.path())]);
    assert_eq!(code(&o), 1);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("dish00: FAILED"), "{stdout}");
    assert!(stdout.contains("dish01: ok"), "{stdout}");
}

#[test]
fn env_seed_is_the_default_seed() {
    let data = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_grainpipe"))
        .args(["synth", "--out", s(data.path()), "--days", "2", "--no-hsi"])
        .env("GRAINPIPE_SEED", "17")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let synth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(data.path().join("synth.json")).unwrap()).unwrap();
    assert_eq!(synth["seed"], 17);
}

#[test]
fn stage_verbs_chain() {
    let data = tempfile::tempdir().unwrap();
    assert_eq!(code(&grainpipe(&["synth", "--out", s(data.path()), "--days", "1"])), 0);
    let d = data.path().join("dish00");
    let out = tempfile::tempdir().unwrap();
    let (grid, loc, cells) = (out.path().join("grid"), out.path().join("loc"), out.path().join("cells"));

    let o = grainpipe(&["detect-grid", "--reference", s(&d.join("reference.cube.json")), "--out", s(&grid)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = grainpipe(&[
        "localize",
        "--grid",
        s(&grid.join("grid.json")),
        "--rgb",
        s(&d.join("day1_rgb.cube.json")),
        "--hsi",
        s(&d.join("day1_hsi.cube.json")),
        "--dark",
        s(&d.join("day1_hsi_dark.cube.json")),
        "--day",
        "1",
        "--out",
        s(&loc),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(loc.join("hsi_grid.json").exists());
    let o = grainpipe(&[
        "extract",
        "--grid",
        s(&loc.join("hsi_grid.json")),
        "--frame",
        s(&d.join("day1_hsi.cube.json")),
        "--dark",
        s(&d.join("day1_hsi_dark.cube.json")),
        "--day",
        "1",
        "--out",
        s(&cells),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&grainpipe(&["segment", "--cells", s(&cells)])), 0);
    assert_eq!(code(&grainpipe(&["spectra", "--cells", s(&cells)])), 0);
    assert!(cells.join("cell_3_3.mask.pbm").exists());
    assert!(cells.join("spectrum_3_3.csv").exists());

    // A frame that is not a cube container fails the item, not the invocation.
    let o = grainpipe(&["detect-grid", "--reference", s(&d.join("scene.json")), "--out", s(&grid)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn convert_repacks() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("f.raw");
    std::fs::write(&raw, [0x01u8, 0x23, 0x45, 0x67, 0x89, 0xab]).unwrap();
    let out = dir.path().join("f.cube.json");
    let o = grainpipe(&[
        "convert",
        s(&raw),
        s(&out),
        "--raw-layout",
        "mono12p",
        "--height",
        "1",
        "--width",
        "2",
        "--channels",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cube = grainpipe_core::pixcodec::read_cube(&out).unwrap();
    assert_eq!(cube.data, vec![0x301 as f32, 0x452 as f32, 0x967 as f32, 0xab8 as f32]);
    let o = grainpipe(&["convert", s(&raw), s(&out), "--raw-layout", "mono12p"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn validate_dataset_reports() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("archive");
    let exp = mini_expectation();
    build_mini_archive(&root, &exp).unwrap();
    let expected = dir.path().join("expected.json");
    std::fs::write(&expected, serde_json::to_string(&exp).unwrap()).unwrap();
    let report = dir.path().join("report.json");

    let o = grainpipe(&[
        "validate-dataset",
        "--root",
        s(&root),
        "--expected",
        s(&expected),
        "--report",
        s(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASSED"));

    std::fs::remove_file(root.join("B/dish00/k0001/day0_rgb.cube.json")).unwrap();
    let o = grainpipe(&["validate-dataset", "--root", s(&root), "--expected", s(&expected)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("missing B/dish00/k0001: rgb day 0"));

    // Against the published counts the mini archive is itemized, not fatal.
    let o = grainpipe(&["validate-dataset", "--root", s(&root)]);
    assert_eq!(code(&o), 1);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL total kernels: expected 2242, found 50"), "{stdout}");
    assert!(stdout.contains("note: expected counts are inconsistent"));
}
