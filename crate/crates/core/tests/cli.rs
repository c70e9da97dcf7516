use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use bearing_monitor::dataset::{
    parse_snapshot, scan_dataset, synth_bearing, SnapshotFormat, SyntheticConfig,
};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bearing-monitor"));
    c.env_remove("BEARING_MONITOR_DATA").env_remove("RUST_LOG");
    c
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_with_stdin(cmd: &mut Command, input: &[u8]) -> Output {
    let mut child = cmd
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let input = input.to_vec();
    let writer = std::thread::spawn(move || stdin.write_all(&input));
    let out = child.wait_with_output().unwrap();
    writer.join().unwrap().unwrap();
    out
}

fn frames(snapshots: &[Vec<f64>]) -> Vec<String> {
    snapshots
        .iter()
        .map(|s| s.iter().map(f64::to_string).collect::<Vec<_>>().join(" "))
        .collect()
}

fn healthy_frames(n: usize, seed: u64) -> Vec<String> {
    frames(&synth_bearing(&SyntheticConfig::healthy(n, 0.1, seed).with_snapshot_len(1024)).unwrap())
}

fn lines(text: &[u8]) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(text)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn run_all_then_sweep_k() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(
        bin()
            .args([
                "run-all",
                "--synthetic",
                "--mode",
                "handcrafted",
                "--seed",
                "2",
                "--out",
            ])
            .arg(dir.path()),
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("accuracy "), "{stdout}");
    for f in [
        "verdicts.csv",
        "accuracy_vs_k.csv",
        "bearing_stats.csv",
        "run.json",
        "timings.csv",
        "fold_D2B1.json",
    ] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let features = std::fs::read_to_string(dir.path().join("features_D1B1.csv")).unwrap();
    assert_eq!(
        features.lines().next(),
        Some("timestamp,rms,kurtosis,skewness,crest_factor,peak_to_peak")
    );

    let sweep = dir.path().join("sweep.csv");
    let out = run_ok(
        bin()
            .args(["sweep-k", "--k-grid", "1:50:1", "--stats"])
            .arg(dir.path().join("bearing_stats.csv"))
            .arg("--out")
            .arg(&sweep),
    );
    let csv = std::fs::read_to_string(&sweep).unwrap();
    assert_eq!(csv.lines().count(), 51);
    assert!(String::from_utf8_lossy(&out.stderr).contains("best K"));
}

#[test]
fn run_fold_writes_one_fold() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        bin()
            .args([
                "run-fold",
                "--test",
                "3.3",
                "--synthetic",
                "--mode",
                "handcrafted",
                "--format",
                "csv",
                "--out",
            ])
            .arg(dir.path()),
    );
    let verdicts = std::fs::read_to_string(dir.path().join("verdicts.csv")).unwrap();
    assert_eq!(verdicts.lines().count(), 2);
    assert!(verdicts.lines().nth(1).unwrap().starts_with("D3B3,"));
    assert!(!dir.path().join("run.json").exists());
}

#[test]
fn missing_data_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run-all", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("BEARING_MONITOR_DATA"));

    let out = bin()
        .args(["run-all", "--out"])
        .arg(dir.path())
        .env("BEARING_MONITOR_DATA", dir.path().join("nowhere"))
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn synth_ims_layout_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("life");
    run_ok(
        bin()
            .args([
                "synth",
                "--snapshots",
                "6",
                "--samples",
                "500",
                "--fault-onset",
                "3",
                "--format",
                "ims",
                "--seed",
                "9",
                "--out",
            ])
            .arg(&target),
    );
    let refs = scan_dataset(&target).unwrap();
    assert_eq!(refs.len(), 6);
    let expected = synth_bearing(
        &SyntheticConfig::healthy(6, 0.5, 9)
            .with_snapshot_len(500)
            .with_fault(3, 1.5, 0.0),
    )
    .unwrap();
    for (r, want) in refs.iter().zip(&expected) {
        let name = r.path.file_name().unwrap().to_string_lossy();
        let snap = parse_snapshot(
            &name,
            &std::fs::read(&r.path).unwrap(),
            SnapshotFormat {
                channels: 1,
                rows: Some(500),
            },
        )
        .unwrap();
        assert_eq!(&snap.column(0), want);
    }
}

#[test]
fn stream_skips_malformed_frames_without_side_effects() {
    let good = healthy_frames(60, 1);
    let base = [
        "stream",
        "--stdin",
        "--handcrafted",
        "--k",
        "30",
        "--samples",
        "1024",
    ];
    let clean = run_with_stdin(bin().args(base), (good.join("\n") + "\n").as_bytes());
    assert!(clean.status.success());

    let mut dirty = Vec::new();
    for (i, f) in good.iter().enumerate() {
        if i == 5 {
            dirty.push("1 2 three".to_string());
        }
        if i == 20 {
            dirty.push("1 2 3".to_string());
            dirty.push(String::new());
        }
        if i == 30 {
            let rest = &f[f.find(' ').unwrap()..];
            dirty.push(format!("NaN{rest}"));
        }
        dirty.push(f.clone());
    }
    let noisy = run_with_stdin(bin().args(base), (dirty.join("\n") + "\n").as_bytes());
    assert!(noisy.status.success());
    assert_eq!(clean.stdout, noisy.stdout);
    let stderr = String::from_utf8_lossy(&noisy.stderr);
    assert!(stderr.contains("frames 60 malformed 3"), "{stderr}");

    let records = lines(&clean.stdout);
    assert_eq!(records.len(), 60);
    assert!(records[..10].iter().all(|r| r["phase"] == "init"));
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r["index"], i);
    }
}

#[test]
fn stream_checkpoint_and_resume() {
    let good = healthy_frames(80, 2);
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("session.bin");
    let base = [
        "stream",
        "--stdin",
        "--handcrafted",
        "--k",
        "30",
        "--seed",
        "4",
    ];

    let whole = run_with_stdin(bin().args(base), (good.join("\n") + "\n").as_bytes());
    let first = run_with_stdin(
        bin().args(base).arg("--checkpoint").arg(&ckpt),
        (good[..37].join("\n") + "\n").as_bytes(),
    );
    assert!(first.status.success());
    assert!(ckpt.is_file());
    let second = run_with_stdin(
        bin()
            .args(["stream", "--stdin", "--handcrafted", "--resume"])
            .arg(&ckpt),
        (good[37..].join("\n") + "\n").as_bytes(),
    );
    assert!(
        second.status.success(),
        "{}",
        String::from_utf8_lossy(&second.stderr)
    );
    let mut joined = first.stdout.clone();
    joined.extend_from_slice(&second.stdout);
    assert_eq!(joined, whole.stdout);
}

#[test]
fn stream_over_tcp() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let addr = format!("127.0.0.1:{port}");
    let mut server = bin()
        .args(["stream", "--handcrafted", "--k", "30", "--listen", &addr])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();

    let deadline = Instant::now() + Duration::from_secs(20);
    let connect = || loop {
        match TcpStream::connect(&addr) {
            Ok(s) => return s,
            Err(_) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(50)),
            Err(e) => panic!("server never came up: {e}"),
        }
    };
    let good = healthy_frames(25, 3);
    let mut results = Vec::new();
    for _ in 0..2 {
        let mut sock = connect();
        let mut payload = good.join("\n");
        payload.push_str("\nnot a frame\n");
        sock.write_all(payload.as_bytes()).unwrap();
        sock.shutdown(std::net::Shutdown::Write).unwrap();
        let records: Vec<serde_json::Value> = BufReader::new(sock)
            .lines()
            .map(|l| serde_json::from_str(&l.unwrap()).unwrap())
            .collect();
        results.push(records);
    }
    server.kill().unwrap();
    let _ = server.wait();

    assert_eq!(results[0].len(), 25);
    // Each connection starts a fresh session.
    assert_eq!(results[0], results[1]);
}

#[test]
fn stream_requires_a_source() {
    let out = bin()
        .args(["stream", "--handcrafted", "--k", "5"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = bin()
        .args(["stream", "--stdin", "--handcrafted"])
        .output()
        .unwrap();
    assert!(!out.status.success(), "K is required without --resume");
}
