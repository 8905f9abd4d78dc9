use std::path::Path;
use std::process::{Command, Output};

fn spu(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spu")).current_dir(dir).args(args).output().expect("spawn spu")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = spu(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn footprint_prints_rounded_forms() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["clt", "footprint"]);
    for needle in ["2621440", "202752", "0.76", "12.93", "13.16", "10.000 Mb", "5.166 Mb"] {
        assert!(out.contains(needle), "missing {needle} in\n{out}");
    }
}

#[test]
fn rates_json_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let v: serde_json::Value = serde_json::from_str(&ok(dir.path(), &["rates", "--json"])).unwrap();
    assert!((v["hit_probability"].as_f64().unwrap() - 0.01724).abs() < 1e-5);
    assert_eq!(v["max_mbps"].as_f64().unwrap(), 512.0);

    std::fs::write(dir.path().join("c.toml"), "[rates]\nactivity_uci = 100\njson = true\n").unwrap();
    let half: serde_json::Value = serde_json::from_str(&ok(dir.path(), &["--config", "c.toml", "rates"])).unwrap();
    let ratio = half["cr1_hz"].as_f64().unwrap() / v["cr1_hz"].as_f64().unwrap();
    assert!((ratio - 0.5).abs() < 1e-12);

    // Explicit flags win over the file.
    let full: serde_json::Value =
        serde_json::from_str(&ok(dir.path(), &["--config", "c.toml", "rates", "--activity-uci", "200"])).unwrap();
    assert_eq!(full["cr1_hz"], v["cr1_hz"]);
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "--events", "3000", "--seed", "4", "--out", "a.bin", "--warp-seed", "2"]);
    ok(dir.path(), &["simulate", "--events", "3000", "--seed", "4", "--out", "b.bin", "--warp-seed", "2"]);
    ok(dir.path(), &["simulate", "--events", "3000", "--seed", "5", "--out", "c.bin", "--warp-seed", "2"]);
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.bin").len(), 3000 * 26);
    assert_eq!(read("a.bin"), read("b.bin"));
    assert_ne!(read("a.bin"), read("c.bin"));
}

#[test]
fn capture_session_exports_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--events", "4000", "--out", "ev.bin", "--luts-out", "luts", "--compton-fraction", "0.2"]);

    ok(d, &["spu", "--events", "ev.bin", "--luts", "luts", "--capture", "reg.cap", "--stats", "spu.json"]);
    ok(d, &["daq-host", "--capture", "reg.cap", "--out-dir", "reg", "--singles-csv"]);
    let spu_stats: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("spu.json")).unwrap()).unwrap();
    let host: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("reg/stats.json")).unwrap()).unwrap();
    let packaged = spu_stats.to_string();
    assert!(packaged.contains("\"packaged\""));
    let packets = host["session"]["packets"].as_u64().unwrap();
    assert!(packets > 0 && packets < 4000);
    assert_eq!(host["session"]["decode_errors"], 0);
    let singles = std::fs::read_to_string(d.join("reg/singles.csv")).unwrap();
    assert_eq!(singles.lines().count() as u64, packets + 1);

    ok(d, &["spu", "--events", "ev.bin", "--luts", "luts", "--mode", "flood-offline", "--capture", "flood.cap"]);
    ok(d, &["daq-host", "--capture", "flood.cap", "--out-dir", "flood"]);
    let pgm = std::fs::read(d.join("flood/flood_m0_b0.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n512 512\n"));

    ok(d, &["spu", "--events", "ev.bin", "--luts", "luts", "--mode", "energy-offline", "--capture", "e.cap"]);
    ok(d, &["daq-host", "--capture", "e.cap", "--out-dir", "energy"]);
    let csv = std::fs::read_to_string(d.join("energy/spectra_m0_b2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 529 * 256);

    ok(d, &["spu", "--events", "ev.bin", "--luts", "luts", "--mode", "flood-online", "--capture", "on.cap"]);
    ok(d, &["daq-host", "--capture", "on.cap", "--out-dir", "online"]);
    let online: Vec<_> = std::fs::read_dir(d.join("online"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("online_flood"))
        .collect();
    assert_eq!(online.len(), 4);
    let pgm = std::fs::read(d.join("online").join(&online[0])).unwrap();
    assert!(pgm.starts_with(b"P5\n512 512\n1023\n"));
    assert_eq!(pgm.len(), 16 + 2 * 512 * 512);
}

#[test]
fn clt_tools_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["clt", "generate", "--out", "full.fclt", "--warp-seed", "9", "--full"]);
    ok(d, &["clt", "convert", "full.fclt", "b.bclt"]);
    ok(d, &["clt", "convert", "b.bclt", "back.fclt"]);
    assert_eq!(std::fs::read(d.join("full.fclt")).unwrap(), std::fs::read(d.join("back.fclt")).unwrap());
    ok(d, &["clt", "check", "b.bclt"]);
    std::fs::write(d.join("junk.bclt"), b"nonsense").unwrap();
    assert!(!spu(d, &["clt", "check", "junk.bclt"]).status.success());
}

#[test]
fn loopback_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["loopback", "--events", "3000", "--report", "r.json"]);
    assert!(out.trim_end().ends_with("PASS"), "{out}");
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(r["decoded"], r["regular"]["packaged"]);
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = spu(dir.path(), &["spu", "--events", "missing.bin"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.bin"));
    assert!(!spu(dir.path(), &["spu", "--mode", "sideways"]).status.success());
}
