use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use skywatch_core::adsb::{encode, RawFrame};
use skywatch_core::audio::{synth, write_wav, MfccConfig};
use skywatch_core::geometry::{enu_offset, offset_position, Enu, GeoPosition};

fn skywatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skywatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SCENARIO: &str = r#"{
  "schema_version": 1, "name": "short", "seed": 5, "duration": 6.0,
  "system": { "lat": 59.0, "lon": 18.0 },
  "targets": [
    { "name": "d", "class": "Drone", "size_m": 0.5, "sound_class": "Drone",
      "waypoints": [ { "t": 0, "enu": [0, 120, 20] }, { "t": 6, "enu": [5, 30, 10] } ] },
    { "name": "h", "class": "Helicopter", "size_m": 12,
      "adsb": { "icao": "A1B2C3", "callsign": "MED1", "category": "Rotorcraft" },
      "waypoints": [ { "t": 0, "enu": [1000, 2000, 300] }, { "t": 6, "enu": [900, 2000, 300] } ] }
  ],
  "sensors": { "fcam": { "enabled": false } }
}"#;

fn write_scenario(dir: &Path) -> PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(&path, SCENARIO).unwrap();
    path
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let sc = write_scenario(dir);
    let out = dir.join(name);
    let mut args = vec!["simulate", "--scenario", p(&sc), "--out", p(&out)];
    args.extend_from_slice(extra);
    ok(&skywatch(&args));
    out
}

#[test]
fn simulate_writes_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a", &[]);
    let b = simulate(dir.path(), "b", &[]);
    for f in ["events.jsonl", "metrics.csv", "summary.json", "adsb_frames.txt"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert!(!x.is_empty(), "{f}");
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["ticks"], 60);
    let metrics = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 61);

    let c = simulate(dir.path(), "c", &["--seed", "1234"]);
    assert_ne!(
        std::fs::read(a.join("events.jsonl")).unwrap(),
        std::fs::read(c.join("events.jsonl")).unwrap()
    );
}

#[test]
fn realtime_mode_gives_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("s.json");
    std::fs::write(&sc, SCENARIO.replace("\"duration\": 6.0", "\"duration\": 1.0").replace("\"t\": 6", "\"t\": 1")).unwrap();
    let fast = dir.path().join("fast");
    let slow = dir.path().join("slow");
    ok(&skywatch(&["simulate", "--scenario", p(&sc), "--out", p(&fast)]));
    let t0 = std::time::Instant::now();
    ok(&skywatch(&["--realtime", "simulate", "--scenario", p(&sc), "--out", p(&slow)]));
    assert!(t0.elapsed() >= std::time::Duration::from_millis(900));
    for f in ["events.jsonl", "summary.json"] {
        assert_eq!(std::fs::read(fast.join(f)).unwrap(), std::fs::read(slow.join(f)).unwrap());
    }
}

#[test]
fn config_file_and_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path());
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "scenario = \"scenario.json\"\nseed = 9\n[fusion]\nmin_sensors = 2\n").unwrap();
    let out = dir.path().join("o");
    ok(&skywatch(&["--config", p(&cfg), "--out", p(&out), "simulate"]));
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"seed\": 9"));
    assert!(summary.contains("\"scenario\": \"short\""));

    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    assert_eq!(skywatch(&["--config", p(&cfg), "simulate"]).status.code(), Some(2));
    assert_eq!(
        skywatch(&["--config", p(&dir.path().join("missing.toml")), "simulate"]).status.code(),
        Some(2)
    );
    assert_eq!(
        skywatch(&["simulate", "--scenario", p(&dir.path().join("missing.json"))]).status.code(),
        Some(2)
    );
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, SCENARIO.replace("\"schema_version\": 1", "\"schema_version\": 7")).unwrap();
    assert_eq!(skywatch(&["simulate", "--scenario", p(&bad)]).status.code(), Some(2));
    let _ = sc;
}

#[test]
fn decode_adsb_round_trips_simulated_frames() {
    let dir = tempfile::tempdir().unwrap();
    let run = simulate(dir.path(), "run", &[]);
    let out = skywatch(&["decode-adsb", p(&run.join("adsb_frames.txt")), "--lat", "59.0", "--lon", "18.0"]);
    let text = ok(&out);
    let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["icao"], 0xA1B2C3);
    assert_eq!(last["callsign"], "MED1");
    assert_eq!(last["class"], "Helicopter");
    assert_eq!(last["displayable"], true);
    // last position report at 5.5 s: east 1000 - 100 * 5.5 / 6
    let origin = GeoPosition::new(59.0, 18.0, 0.0).unwrap();
    let got = GeoPosition::new(last["lat"].as_f64().unwrap(), last["lon"].as_f64().unwrap(), 0.0).unwrap();
    let d = enu_offset(&origin, &got);
    let east = 1000.0 - 100.0 * 5.5 / 6.0;
    assert!((d.east - east).abs() < 5.1 && (d.north - 2000.0).abs() < 5.1, "{d:?}");
}

#[test]
fn decode_adsb_defaults_gating_and_malformed_lines() {
    let dir = tempfile::tempdir().unwrap();
    let origin = GeoPosition::new(47.0, 8.0, 400.0).unwrap();
    let far = offset_position(&origin, &Enu { east: 0.0, north: 36_000.0, up: 0.0 });
    let icao = 0x3C6DD4;
    let even = RawFrame::new(encode::airborne_position(icao, far.lat, far.lon, 20_000.0, false), 0);
    let odd = RawFrame::new(encode::airborne_position(icao, far.lat, far.lon, 20_000.0, true), 0);
    let frames = format!(
        "# no identification in this stream\n1000000,{}\nnot hex at all\n2000000,{}\n*8D00;\n",
        even.to_hex(),
        odd.to_hex()
    );
    let input = dir.path().join("frames.txt");
    std::fs::write(&input, frames).unwrap();
    let out = skywatch(&["decode-adsb", p(&input), "--lat", "47", "--lon", "8", "--alt", "400"]);
    let text = ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("2 skipped"));
    let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["class"], "Airplane");
    assert_eq!(last["confidence"], 0.75);
    assert_eq!(last["displayable"], false);
    let hd = last["horizontal_distance"].as_f64().unwrap();
    assert!((hd - 36_000.0).abs() < 50.0, "{hd}");

    let junk = dir.path().join("junk.txt");
    std::fs::write(&junk, "zz\n1,2\n").unwrap();
    assert_eq!(
        skywatch(&["decode-adsb", p(&junk), "--lat", "47", "--lon", "8"]).status.code(),
        Some(2)
    );
}

const GT: &str = "frame,class,x,y,w,h,bin
0,Drone,10,10,20,20,Close
3,Bird,100,100,8,8,Distant
1,Drone,12,10,20,20,Medium
2,Airplane,50,50,30,10,Close
";

const PRED: &str = "frame,class,confidence,x,y,w,h
0,Drone,0.9,11,10,20,20
3,Bird,0.6,100,100,8,8
1,Drone,0.8,40,40,20,20
2,Airplane,0.7,50,50,30,10
";

#[test]
fn evaluate_csv_reports_bins_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.csv");
    let pred = dir.path().join("pred.csv");
    std::fs::write(&gt, GT).unwrap();
    std::fs::write(&pred, PRED).unwrap();
    let out = dir.path().join("eval");
    let text = ok(&skywatch(&["evaluate", "--gt", p(&gt), "--pred", p(&pred), "--out", p(&out)]));
    for s in ["[Close]", "[Medium]", "[Distant]"] {
        assert!(text.contains(s), "{text}");
    }
    for f in ["eval.json", "sweep.csv", "pr.csv", "pr.svg"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
    let drone = report["classes"].as_array().unwrap().iter().find(|c| c["class"] == "Drone").unwrap();
    assert_eq!(drone["counts"]["tp"], 1);
    assert_eq!(drone["counts"]["fp"], 1);
    assert_eq!(drone["counts"]["fn"], 1);

    std::fs::write(&pred, "frame,class,confidence,x,y,w,h\n").unwrap();
    let text = ok(&skywatch(&["evaluate", "--gt", p(&gt), "--pred", p(&pred), "--out", p(&out)]));
    assert!(text.contains("Drone"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
    for c in report["classes"].as_array().unwrap() {
        assert_eq!(c["counts"]["tp"], 0);
        assert_eq!(c["precision"], 0.0);
        assert_eq!(c["recall"], 0.0);
    }

    std::fs::write(&pred, "frame,class,confidence,x,y,w,h\n0,Zeppelin,0.9,1,1,2,2\n").unwrap();
    assert_eq!(
        skywatch(&["evaluate", "--gt", p(&gt), "--pred", p(&pred), "--out", p(&out)]).status.code(),
        Some(2)
    );
}

#[test]
fn evaluate_from_event_log() {
    let dir = tempfile::tempdir().unwrap();
    let run = simulate(dir.path(), "run", &[]);
    let out = dir.path().join("eval");
    let text = ok(&skywatch(&[
        "evaluate",
        "--events",
        p(&run.join("events.jsonl")),
        "--sensor",
        "IRcam",
        "--out",
        p(&out),
    ]));
    assert!(text.contains("Drone"), "{text}");
    assert_eq!(
        skywatch(&["evaluate", "--events", p(&run.join("events.jsonl")), "--sensor", "Audio"]).status.code(),
        Some(2)
    );
}

#[test]
fn mfcc_dump_writes_one_row_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("tone.wav");
    let samples = synth::tone(440.0, 1.0, 44_100, 0.5);
    write_wav(std::fs::File::create(&wav).unwrap(), &samples, 44_100).unwrap();
    let out = dir.path().join("m");
    ok(&skywatch(&["mfcc-dump", p(&wav), "--out", p(&out)]));
    let csv = std::fs::read_to_string(out.join("mfcc.csv")).unwrap();
    let cfg = MfccConfig::default();
    assert_eq!(csv.lines().count(), cfg.frame_count(samples.len()) + 1);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), cfg.num_coeffs + 1);
}

#[test]
fn fuse_replay_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let run = simulate(dir.path(), "run", &[]);
    let text = ok(&skywatch(&["fuse-replay", p(&run.join("events.jsonl"))]));
    assert_eq!(text.lines().count(), 60);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["t"], 100);

    ok(&skywatch(&["report", p(&run)]));
    let md = std::fs::read_to_string(run.join("report.md")).unwrap();
    assert!(md.starts_with("# Run report: short"));
    let svg = std::fs::read_to_string(run.join("timeline.svg")).unwrap();
    assert!(svg.contains("<svg") && svg.contains("System"));
    assert_eq!(skywatch(&["report", p(&dir.path().join("nothing"))]).status.code(), Some(2));
}
