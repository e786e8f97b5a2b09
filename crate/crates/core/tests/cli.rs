use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flashwarn::hexgrid::Units;
use flashwarn::ihl::IhlClass;
use flashwarn::lts::LtsLevel;
use flashwarn::raster_io;

fn flashwarn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flashwarn"))
        .args(args)
        .output()
        .expect("spawn flashwarn")
}

fn ok(args: &[&str]) -> Output {
    let out = flashwarn(args);
    assert!(
        out.status.success(),
        "flashwarn {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["synth", "--out", dir.to_str().unwrap(), "--rows", "120", "--cols", "120"];
    args.extend_from_slice(extra);
    ok(&args);
    dir.join("config.toml")
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

/// Rows of a hex CSV as `(cell, ihl_class, lts_level)`.
fn rows(csv: &Path) -> Vec<(String, String, String)> {
    let text = String::from_utf8(read(csv)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(raster_io::HEX_CSV_HEADER));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 7, "{l}");
            (f[0].to_string(), f[1].to_string(), f[3].to_string())
        })
        .collect()
}

/// Replaces the bundle's rainfall with `fraction` times the design depth.
fn set_rain_fraction(dir: &Path, fraction: f64) {
    let design = raster_io::read_ascii_grid(dir.join("design.asc"), Units::Dimensionless).unwrap();
    let rain = design.map_values(|raw| fraction * (raw * 0.0254)).unwrap();
    raster_io::write_ascii_grid(&rain, dir.join("rainfall.asc")).unwrap();
}

#[test]
fn ihl_writes_classes_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), &[]);
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    ok(&["ihl", "--config", config.to_str().unwrap(), "--out", out_a.to_str().unwrap()]);
    ok(&["ihl", "--config", config.to_str().unwrap(), "--out", out_b.to_str().unwrap(), "--workers", "3"]);
    let r = rows(&out_a.join("ihl.csv"));
    assert!(!r.is_empty());
    assert!(r.iter().all(|(_, c, _)| ["A", "B", "C", "D"].contains(&c.as_str())));
    for f in ["ihl.csv", "ihl.geojson"] {
        assert_eq!(read(out_a.join(f)), read(out_b.join(f)), "{f}");
    }
}

#[test]
fn missing_raster_exits_2_naming_path() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), &[]);
    std::fs::remove_file(tmp.path().join("dist4.asc")).unwrap();
    let out = flashwarn(&["ihl", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dist4.asc"), "{err}");
}

#[test]
fn malformed_raster_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), &[]);
    std::fs::write(tmp.path().join("hand.asc"), "ncols 2\nnrows 1\nxllcorner 0\n").unwrap();
    let out = flashwarn(&["lts", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("hand.asc:") && err.contains("missing header key"), "{err}");
}

#[test]
fn lts_covers_exactly_the_ihl_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), &[]);
    let c = config.to_str().unwrap();
    ok(&["ihl", "--config", c]);
    ok(&["lts", "--config", c]);
    let out = tmp.path().join("out");
    let ihl: Vec<_> = rows(&out.join("ihl.csv")).into_iter().map(|r| (r.0, r.1)).collect();
    let lts: Vec<_> = rows(&out.join("lts.csv")).into_iter().map(|r| (r.0, r.1)).collect();
    assert_eq!(ihl, lts);
}

#[test]
fn lts_rainfall_scenarios() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), &[]);
    let c = config.to_str().unwrap();
    let lts_csv = tmp.path().join("out/lts.csv");

    set_rain_fraction(tmp.path(), 0.0);
    ok(&["lts", "--config", c]);
    assert!(rows(&lts_csv).iter().all(|r| r.2 == "F"));

    set_rain_fraction(tmp.path(), 1.3);
    ok(&["lts", "--config", c]);
    assert!(rows(&lts_csv).iter().all(|r| r.2 == "E"));

    set_rain_fraction(tmp.path(), 1.0);
    ok(&["lts", "--config", c]);
    let r = rows(&lts_csv);
    let expect = |class: IhlClass| match class {
        IhlClass::A | IhlClass::B | IhlClass::C => LtsLevel::E,
        IhlClass::D => LtsLevel::D,
    };
    for (cell, class, level) in &r {
        let class: IhlClass = class.parse().unwrap();
        assert_eq!(level.parse::<LtsLevel>().unwrap(), expect(class), "{cell}");
    }
    assert!(r.iter().any(|x| x.1 == "C") && r.iter().any(|x| x.1 == "D"));
}

fn summary(out: &Output) -> serde_json::Value {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert_eq!(text.lines().count(), 1, "{text}");
    serde_json::from_str(&text).unwrap()
}

#[test]
fn validate_synthetic_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), &[]);
    let c = config.to_str().unwrap();
    let first = ok(&["validate", "--config", c]);
    let s = summary(&first);
    assert_eq!(s["status"], "ok");
    assert!(s["rho"].as_f64().unwrap() > 0.0);
    assert!(s["p_value"].as_f64().unwrap() < 0.05);
    let stored = read(tmp.path().join("out/summary.json"));
    let second = ok(&["validate", "--config", c, "--workers", "2"]);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(stored, read(tmp.path().join("out/summary.json")));
}

#[test]
fn validate_without_points_is_undefined() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), &["--rates", "0,0,0,0,0,0"]);
    let text = String::from_utf8(read(tmp.path().join("impacts.csv"))).unwrap();
    assert_eq!(text, "lat,lng,source,category,timestamp\n");
    let out = ok(&["validate", "--config", config.to_str().unwrap()]);
    let s = summary(&out);
    assert_eq!(s["status"], "undefined");
    assert_eq!(s["retained"], 0);
    assert!(s["rho"].is_null() && s["p_value"].is_null());
}

#[test]
fn validate_window_and_lenient_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), &[]);
    let c = config.to_str().unwrap();
    // A window before the event keeps no points.
    let out = ok(&["validate", "--config", c, "--window", "2019-09-01T00:00:00Z..2019-09-02T00:00:00Z"]);
    assert_eq!(summary(&out)["retained"], 0);
    let bad = flashwarn(&["validate", "--config", c, "--window", "2019-09-02T00:00:00Z..2019-09-01T00:00:00Z"]);
    assert_eq!(bad.status.code(), Some(2));

    let pts = tmp.path().join("impacts.csv");
    let mut text = String::from_utf8(read(&pts)).unwrap();
    text.push_str("29.76,-95.37,TWITTER,flood,2019-09-18T04:30:00Z\n");
    std::fs::write(&pts, text).unwrap();
    let strict = flashwarn(&["validate", "--config", c]);
    assert_eq!(strict.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&strict.stderr).contains("TWITTER"));
    let lenient = ok(&["validate", "--config", c, "--lenient-points"]);
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("skipped 1"));
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    synth(&a, &["--seed", "42"]);
    synth(&b, &["--seed", "42"]);
    for f in flashwarn::synth::BUNDLE_FILES {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f}");
    }
    let bad = flashwarn(&["synth", "--out", tmp.path().join("c").to_str().unwrap(), "--rates", "1,2"]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = flashwarn(&["synth", "--out", tmp.path().join("d").to_str().unwrap(), "--east-fraction", "-1"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), &[]);
    let mut text = std::fs::read_to_string(&config).unwrap();
    text.push_str("\n[lts.triggers.A]\nB = 0.01\n");
    std::fs::write(&config, text).unwrap();
    let out = flashwarn(&["lts", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lts.triggers.A"));
    let out = flashwarn(&["lts", "--config", config.to_str().unwrap(), "--workers", "0"]);
    assert_eq!(out.status.code(), Some(2));
}
