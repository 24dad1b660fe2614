use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use posemetric::dataset::{clip_from_json, read_dataset};
use posemetric::format::round_sig9_slice;
use posemetric::pipeline::Bundle;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_posemetric"));
    c.env_remove("POSEMETRIC_SEED").env("RUST_LOG", "info");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Small dataset plus a bundle with a briefly trained model and two metric networks.
fn trained(dir: &Path) -> (PathBuf, PathBuf) {
    let data = dir.join("data.json");
    let bundle = dir.join("bundle");
    let o = run(&["synth", "-o", s(&data), "--clips", "3", "--frames", "30"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let quick = ["--steps", "5", "--batch", "16"];
    let o = run(&[&["train-ae", "--dataset", s(&data), "--bundle", s(&bundle)][..], &quick].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    for metric in ["legs_spread", "spine_flexion"] {
        let o = run(&[&["train-metric", "--dataset", s(&data), "--bundle", s(&bundle), "--metric", metric][..], &quick].concat());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    (data, bundle)
}

#[test]
fn ingest_two_valid_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("bvh");
    fs::create_dir(&dir).unwrap();
    fs::copy(fixture("walk.bvh"), dir.join("walk.bvh")).unwrap();
    fs::copy(fixture("turn.bvh"), dir.join("turn.BVH")).unwrap();
    let out = tmp.path().join("d.json");
    let o = run(&["ingest", s(&dir), "-o", s(&out), "--scale", "0.01"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let d = read_dataset(&out).unwrap();
    assert_eq!(d.clips.len(), 2);
    assert_eq!(d.pose_count(), 24 + 16);
    assert!(stdout(&o).contains("2 clips"));
}

#[test]
fn ingest_empty_directory_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["ingest", s(tmp.path()), "-o", s(&tmp.path().join("d.json"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["ingest", s(&tmp.path().join("missing")), "-o", s(&tmp.path().join("d.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ingest_skips_corrupt_file_with_warning() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("bvh");
    fs::create_dir(&dir).unwrap();
    fs::copy(fixture("walk.bvh"), dir.join("a.bvh")).unwrap();
    fs::copy(fixture("bad_number.bvh"), dir.join("b.bvh")).unwrap();
    let out = tmp.path().join("d.json");
    let o = run(&["ingest", s(&dir), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(read_dataset(&out).unwrap().clips.len(), 1);
    let err = stderr(&o);
    assert!(err.contains("b.bvh") && err.contains("line 132"), "{err}");
}

#[test]
fn ingest_with_role_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("bvh");
    fs::create_dir(&dir).unwrap();
    fs::copy(fixture("walk.bvh"), dir.join("a.bvh")).unwrap();
    let roles = tmp.path().join("roles.json");
    fs::write(&roles, r#"{"lknee": "LeftFoot", "rknee": "RightFoot"}"#).unwrap();
    let out = tmp.path().join("d.json");
    let o = run(&["ingest", s(&dir), "-o", s(&out), "--roles", s(&roles)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let d = read_dataset(&out).unwrap();
    assert_eq!(d.skeleton.role_index("lknee").unwrap(), d.skeleton.joint_index("LeftFoot").unwrap());
}

#[test]
fn train_ae_is_reproducible_and_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data.json");
    assert!(run(&["synth", "-o", s(&data), "--clips", "2", "--frames", "20"]).status.success());
    let mut csvs = Vec::new();
    let mut encoders = Vec::new();
    for name in ["a", "b"] {
        let bundle = tmp.path().join(name);
        let o = bin()
            .args(["train-ae", "--dataset", s(&data), "--bundle", s(&bundle), "--steps", "40", "--batch", "32", "--lr", "1e-3"])
            .env("POSEMETRIC_SEED", "11")
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        for f in ["encoder.tnn", "decoder.tnn", "bundle.json", "loss_autoencoder.csv"] {
            assert!(bundle.join(f).is_file(), "{f}");
        }
        csvs.push(fs::read_to_string(bundle.join("loss_autoencoder.csv")).unwrap());
        encoders.push(fs::read(bundle.join("encoder.tnn")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(encoders[0], encoders[1]);
    let losses: Vec<f32> = csvs[0].lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(losses.len(), 40);
    assert!(losses.last().unwrap() < losses.first().unwrap());
}

#[test]
fn train_ae_resume_continues_and_drops_metric_networks() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, bundle) = trained(tmp.path());
    let before = Bundle::load(&bundle).unwrap();
    assert_eq!(before.metrics.len(), 2);
    let o = run(&["train-ae", "--dataset", s(&data), "--bundle", s(&bundle), "--resume", "--steps", "5", "--batch", "16", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("legs_spread"), "{}", stderr(&o));
    let after = Bundle::load(&bundle).unwrap();
    assert!(after.metrics.is_empty());
    assert_eq!(after.model.stats(), before.model.stats());
    assert_ne!(after.model.decoder(), before.model.decoder());

    let empty = tmp.path().join("nothing");
    let o = run(&["train-ae", "--dataset", s(&data), "--bundle", s(&empty), "--resume"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn train_ae_missing_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["train-ae", "--dataset", s(&tmp.path().join("none.json")), "--bundle", s(&tmp.path().join("b"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("does not exist"));
}

#[test]
fn train_metric_unknown_name_lists_registry() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["train-metric", "--dataset", "x", "--bundle", s(tmp.path()), "--metric", "elbow"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for name in ["legs_spread", "shoulders_openness", "spine_flexion"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn edit_eval_and_metric_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, bundle) = trained(tmp.path());
    assert!(bundle.join("metric_spine_flexion.tnn").is_file());
    assert!(bundle.join("metric_legs_spread.tnn").is_file());

    let out = tmp.path().join("edited.json");
    let o = run(&[
        "edit", "--bundle", s(&bundle), "--dataset", s(&data), "--clip", "synth_001", "--frame", "10",
        "--target", "legs_spread=1.2", "--radius", "3", "-o", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let b = Bundle::load(&bundle).unwrap();
    let d = read_dataset(&data).unwrap();
    let original = d.clip("synth_001").unwrap();
    let edited = clip_from_json(&fs::read_to_string(&out).unwrap(), 21).unwrap();
    assert_eq!(edited.len(), original.len());
    for (t, (orig, new)) in original.poses.iter().zip(&edited.poses).enumerate() {
        let recon = round_sig9_slice(&b.model.reconstruct(orig).unwrap().flatten());
        let unchanged = recon == new.flatten();
        if !(7..=13).contains(&t) {
            assert!(unchanged, "frame {t} changed outside the curve support");
        }
        if (8..=12).contains(&t) {
            assert!(!unchanged, "frame {t} should be edited");
        }
    }

    let both = tmp.path().join("both.json");
    let o = run(&[
        "edit", "--bundle", s(&bundle), "--dataset", s(&data), "--clip", "synth_001", "--frame", "10",
        "--target", "legs_spread=1.2", "--target", "spine_flexion=0.5", "-o", s(&both),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_ne!(fs::read(&both).unwrap(), fs::read(&out).unwrap());

    let o = run(&[
        "edit", "--bundle", s(&bundle), "--dataset", s(&data), "--clip", "synth_001", "--frame", "10",
        "--target", "legs_spread=1.2", "--radius", "0", "-o", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let snapshot: Vec<(PathBuf, Vec<u8>)> = fs::read_dir(&bundle)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    let o = run(&["eval", "--bundle", s(&bundle), "--dataset", s(&data), "--metric", "legs_spread", "--trials", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = stdout(&o);
    for section in ["[reconstruction]", "[metric move: legs_spread]", "[no-op drift: legs_spread]"] {
        assert!(report.contains(section), "{report}");
    }
    for (p, bytes) in snapshot {
        assert_eq!(fs::read(&p).unwrap(), bytes, "{}", p.display());
    }
}

#[test]
fn serve_reports_port_and_answers_health() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, bundle) = trained(tmp.path());
    let mut child = bin()
        .args(["serve", "--bundle", s(&bundle), "--dataset", s(&data), "--port", "0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let port: u16 = loop {
        let line = lines.next().expect("server exited before listening").unwrap();
        if let Some(rest) = line.split("listening on port ").nth(1) {
            break rest.split_whitespace().next().unwrap().parse().unwrap();
        }
    };
    let mut stream = TcpStream::connect(("127.0.0.1", port)).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
    stream
        .write_all(b"GET /api/health HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n")
        .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"latent_dim\":64"), "{response}");
}

#[test]
fn serve_missing_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["serve", "--bundle", s(&tmp.path().join("nope")), "--dataset", s(&tmp.path().join("d.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn metrics_list_and_usage_errors() {
    let o = run(&["metrics", "list"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let names: Vec<&str> = out.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(names, vec!["legs_spread", "shoulders_openness", "spine_flexion"]);

    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
