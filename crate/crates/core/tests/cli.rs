use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_reid-fuse"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn dataset(dir: &Path) -> String {
    let spec = dir.join("spec.toml");
    std::fs::write(&spec, "n_ids = 10\nimages_per_id = 4\ndim = 64\n").unwrap();
    let d = dir.join("data");
    let ds = d.to_str().unwrap().to_string();
    ok(&[
        "synth",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        &ds,
        "--seed",
        "5",
    ]);
    ok(&["ingest", "--dataset", &ds]);
    ok(&["gallery", "--dataset", &ds]);
    ds
}

#[test]
fn usage_errors_exit_nonzero() {
    assert_eq!(run(&["evaluate", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert!(!run(&["evaluate", "--dataset", "/nonexistent/dir"])
        .status
        .success());
    assert!(run(&["--help"]).status.success());
}

#[test]
fn every_subcommand_has_help() {
    for cmd in [
        "ingest",
        "slice-geometry",
        "gallery",
        "retrieve",
        "evaluate",
        "bootstrap",
        "sweep",
        "holdout",
        "synth",
        "compare",
        "serve",
    ] {
        assert!(run(&[cmd, "--help"]).status.success(), "{cmd}");
    }
}

#[test]
fn analysis_commands_print_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path());

    let slices = tmp.path().join("slices.jsonl");
    let out = ok(&[
        "slice-geometry",
        "--dataset",
        &ds,
        "--split",
        "val",
        "--out",
        slices.to_str().unwrap(),
    ]);
    assert!(out.contains("0 failed"), "{out}");
    let first: serde_json::Value = serde_json::from_str(
        std::fs::read_to_string(&slices)
            .unwrap()
            .lines()
            .next()
            .unwrap(),
    )
    .unwrap();
    assert_eq!(first["crops"].as_array().unwrap().len(), 6);

    let r = ok(&[
        "retrieve",
        "--dataset",
        &ds,
        "--query",
        "1:1:1010",
        "--top",
        "3",
        "--json",
    ]);
    let top: serde_json::Value = serde_json::from_str(&r).unwrap();
    assert_eq!(top.as_array().unwrap().len(), 3);
    assert_eq!(top[0]["rank"], 1);

    let reports: Vec<String> = ["fused_val", "fused_test", "head_val", "head_test"]
        .iter()
        .map(|n| {
            tmp.path()
                .join(format!("{n}.json"))
                .to_str()
                .unwrap()
                .to_string()
        })
        .collect();
    ok(&[
        "evaluate",
        "--dataset",
        &ds,
        "--mode",
        "val",
        "--out",
        &reports[0],
    ]);
    ok(&[
        "evaluate",
        "--dataset",
        &ds,
        "--mode",
        "test",
        "--out",
        &reports[1],
    ]);
    ok(&[
        "evaluate",
        "--dataset",
        &ds,
        "--mode",
        "val",
        "--stream",
        "head",
        "--out",
        &reports[2],
    ]);
    ok(&[
        "evaluate",
        "--dataset",
        &ds,
        "--mode",
        "test",
        "--stream",
        "head",
        "--out",
        &reports[3],
    ]);

    let boot = ok(&[
        "bootstrap",
        "--resamples",
        "2000",
        "--report",
        &reports[1],
        "--report",
        &reports[3],
    ]);
    assert!(boot.contains("Bonferroni over 1 comparisons"), "{boot}");
    let subset = tmp.path().join("subset.json");
    let subset = subset.to_str().unwrap();
    ok(&[
        "evaluate",
        "--dataset",
        &ds,
        "--mode",
        "val",
        "--per-id",
        "2",
        "--out",
        subset,
    ]);
    let mismatch = run(&[
        "bootstrap",
        "--resamples",
        "200",
        "--report",
        subset,
        "--report",
        &reports[3],
    ]);
    assert!(!mismatch.status.success());

    let cmp = ok(&[
        "compare",
        "--resamples",
        "2000",
        "--model",
        &format!("head:{}:{}", reports[2], reports[3]),
        "--model",
        &format!("ensemble:{}:{}", reports[0], reports[1]),
    ]);
    let lines: Vec<&str> = cmp.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with(" #  Setup"));
    assert!(lines[2].contains("ensemble"));

    let sweep = ok(&["sweep", "--dataset", &ds, "--axis", "k"]);
    assert_eq!(sweep.lines().count(), 11);
    assert!(sweep
        .lines()
        .any(|l| l.starts_with("20 ") && l.ends_with('*')));
    let custom = ok(&[
        "sweep",
        "--dataset",
        &ds,
        "--axis",
        "lambda",
        "--values",
        "0,0.5,1",
        "--json",
    ]);
    let table: serde_json::Value = serde_json::from_str(&custom).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 3);
    assert!(
        !run(&["sweep", "--dataset", &ds, "--axis", "tau", "--values", "-1"])
            .status
            .success()
    );

    let hold = ok(&["holdout", "--dataset", &ds, "--drop", "head"]);
    assert_eq!(hold.lines().count(), 6);
    assert!(hold.contains("head *"));
    assert!(
        !run(&["holdout", "--dataset", &ds, "--drop", "fin_of_nothing"])
            .status
            .success()
    );
}

#[test]
fn serve_answers_http() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path());
    let port = 20000 + (std::process::id() % 20000) as u16;
    let mut child = bin()
        .args(["serve", "--dataset", &ds, "--port", &port.to_string()])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let body = loop {
        if let Ok(mut s) = TcpStream::connect(("127.0.0.1", port)) {
            s.write_all(
                b"GET /api/models HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n",
            )
            .unwrap();
            let mut text = String::new();
            s.read_to_string(&mut text).unwrap();
            break text;
        }
        assert!(Instant::now() < deadline, "server did not start");
        std::thread::sleep(Duration::from_millis(100));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(body.starts_with("HTTP/1.1 200"), "{body}");
    assert!(body.contains("\"lambda\":0.75"), "{body}");
}
