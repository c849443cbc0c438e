use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use sha2::{Digest, Sha256};
use tracebench::config::RunConfig;

const BIN: &str = env!("CARGO_BIN_EXE_tracebench");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_lists_every_config_key() {
    let help = String::from_utf8(run_ok(&["--help"]).stdout).unwrap();
    let keys = RunConfig::default().keys().unwrap();
    assert!(keys.len() > 60);
    for (k, _) in keys {
        assert!(help.contains(&format!("  {k} = ")), "help misses {k}");
    }
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(code(&["gen-demos", "--n", "0", "--out", p(&out)]), 2);
    assert_eq!(code(&["--set", "train.nope=1", "report"]), 2);
    assert_eq!(code(&["--set", "sim.dt=-1", "report"]), 2);
    assert_eq!(code(&["eval", "--out", p(&out)]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["--config", p(&dir.path().join("missing.toml")), "report"]), 2);
}

#[test]
fn data_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing");
    assert_eq!(code(&["label", "--raw", p(&missing), "--out", p(&dir.path().join("o"))]), 3);
    let ckpt = dir.path().join("bad.ckpt");
    std::fs::write(&ckpt, b"definitely not a checkpoint").unwrap();
    assert_eq!(
        code(&["eval", "--ckpt", p(&ckpt), "--trials", "1", "--out", p(&dir.path().join("e"))]),
        3
    );
    let results = dir.path().join("r.jsonl");
    std::fs::write(&results, "{\"outcome\":\n").unwrap();
    assert_eq!(code(&["report", "--results", p(&results)]), 3);
}

#[test]
fn config_file_and_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[eval]\ntrials = 2\n[sim]\nlayout = \"straight\"\n").unwrap();
    let out = dir.path().join("ev");
    run_ok(&["--config", p(&cfg), "--set", "eval.seed=4", "eval", "--expert", "--out", p(&out)]);
    let lines = std::fs::read_to_string(out.join("results.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2);
}

#[test]
fn pipeline_is_deterministic_and_divergence_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    run_ok(&["gen-demos", "--n", "3", "--seed", "2", "--out", p(&d("raw1"))]);
    let out = run_ok(&["gen-demos", "--n", "3", "--seed", "2", "--out", p(&d("raw2"))]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("success"));
    assert_eq!(sha(&d("raw1/manifest.json")), sha(&d("raw2/manifest.json")));
    for ep in ["ep_0000", "ep_0001", "ep_0002"] {
        let a = std::fs::read_dir(d("raw1").join(ep)).unwrap();
        for f in a {
            let f = f.unwrap().path();
            let name = f.file_name().unwrap();
            assert_eq!(sha(&f), sha(&d("raw2").join(ep).join(name)), "{ep}/{name:?}");
        }
    }

    run_ok(&["label", "--raw", p(&d("raw1")), "--out", p(&d("lab"))]);
    run_ok(&["gen-demos", "--n", "3", "--seed", "2", "--label", "--out", p(&d("lab2"))]);
    let a = tracebench::labeling::read_dataset(&d("lab")).unwrap();
    let b = tracebench::labeling::read_dataset(&d("lab2")).unwrap();
    assert_eq!(a, b);

    let (lab, m1) = (d("lab"), d("m1.ckpt"));
    let small = ["--set", "policy.chunk=5", "--set", "train.samples_per_episode=2"];
    let train = |out: &str, threads: &str| {
        let mut args: Vec<&str> = small.to_vec();
        let out = d(out);
        let out = out.to_str().unwrap().to_string();
        args.extend(["train", "--data", p(&lab), "--epochs", "4", "--seed", "3", "--out", &out]);
        let o = Command::new(BIN).env("TRACEBENCH_THREADS", threads).args(&args).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    train("m1.ckpt", "1");
    train("m2.ckpt", "3");
    assert_eq!(sha(&d("m1.ckpt")), sha(&d("m2.ckpt")));
    let curves = std::fs::read_to_string(d("m1.ckpt.curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 5);
    let best: Vec<f64> = curves
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(best.windows(2).all(|w| w[1] <= w[0]));

    let eval = |out: &str| {
        let mut args: Vec<&str> = small.to_vec();
        let out = d(out);
        let out = out.to_str().unwrap().to_string();
        args.extend(["eval", "--ckpt", p(&m1), "--trials", "2", "--budget", "20", "--out", &out]);
        run_ok(&args);
    };
    eval("e1");
    eval("e2");
    assert_eq!(sha(&d("e1/results.jsonl")), sha(&d("e2/results.jsonl")));
    let table = std::fs::read_to_string(d("e1/report.txt")).unwrap();
    assert!(table.contains("pooled"));

    let mut args: Vec<&str> = small.to_vec();
    let out = d("bad.ckpt");
    args.extend(["--set", "train.lr=1e300", "train", "--data", p(&lab), "--epochs", "3", "--out", p(&out)]);
    assert_eq!(code(&args), 4);

    // Zero epochs still writes the initial network.
    let mut args: Vec<&str> = small.to_vec();
    let init = d("init.ckpt");
    args.extend(["train", "--data", p(&lab), "--epochs", "0", "--out", p(&init)]);
    run_ok(&args);
    assert!(tracebench::policy::checkpoint::load(&init).is_ok());
}

#[test]
fn expert_as_policy_traces_straight_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(&[
        "--set",
        "sim.layout=straight",
        "eval",
        "--expert",
        "--trials",
        "5",
        "--preset",
        "rope",
        "--preset",
        "cable",
        "--out",
        p(dir.path()),
    ]);
    let table = String::from_utf8(out.stdout).unwrap();
    let pooled = table.lines().find(|l| l.contains("pooled")).unwrap();
    assert!(pooled.contains("100.0% [72.2, 100.0]"), "{table}");
}

#[test]
fn report_pools_results_and_handles_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let empty = String::from_utf8(run_ok(&["report"]).stdout).unwrap();
    assert_eq!(empty.lines().count(), 1);
    assert!(empty.starts_with("model"));

    let trial = |outcome: &str, seed: u64| {
        format!(
            "{{\"outcome\":\"{outcome}\",\"success_time\":{},\"completion_ratio\":0.9,\"contact_seen\":true,\
             \"final_arc_length\":0.45,\"steps\":90,\"seed\":{seed},\"preset\":\"rope\"}}\n",
            if outcome == "success" { "3.0" } else { "null" }
        )
    };
    let mut a = String::new();
    let mut b = String::new();
    for i in 0..20 {
        a.push_str(&trial(if i < 16 { "success" } else { "object_dropping" }, i));
        b.push_str(&trial(if i < 16 { "success" } else { "robot_collision" }, 100 + i));
    }
    std::fs::write(dir.path().join("a.jsonl"), a).unwrap();
    std::fs::write(dir.path().join("b.jsonl"), b).unwrap();
    let out = run_ok(&[
        "report",
        "--results",
        p(&dir.path().join("a.jsonl")),
        p(&dir.path().join("b.jsonl")),
    ]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("80.0% [65.2, 89.5]"), "{table}");
    let json = run_ok(&["report", "--results", p(&dir.path().join("a.jsonl")), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["rows"][0]["trials"], 20);
}

fn spawn_server(dataset: &Path, port: &str) -> (std::process::Child, String) {
    let mut child = Command::new(BIN)
        .args(["serve", "--port", port, "--dataset", p(dataset), "--tick-hz", "60"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.as_mut().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("listening line").to_string();
    (child, addr)
}

fn wait_exit(child: &mut std::process::Child) -> i32 {
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        if let Some(status) = child.try_wait().unwrap() {
            return status.code().unwrap_or(-1);
        }
        assert!(Instant::now() < deadline, "server did not exit");
        std::thread::sleep(Duration::from_millis(50));
    }
}

#[test]
fn serve_reports_health_and_flushes_recording_on_interrupt() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("session");
    let (mut child, addr) = spawn_server(&dataset, "0");
    let port = addr.rsplit(':').next().unwrap().to_string();

    let mut http = TcpStream::connect(&addr).unwrap();
    http.write_all(b"GET /health HTTP/1.0\r\n\r\n").unwrap();
    let mut reply = String::new();
    http.read_to_string(&mut reply).unwrap();
    assert!(reply.contains("\"version\""), "{reply}");

    // A second server on the same port fails at startup.
    let busy = run(&["serve", "--port", &port, "--dataset", p(&dir.path().join("other"))]);
    assert_eq!(busy.status.code(), Some(2));

    let mut client = TcpStream::connect(&addr).unwrap();
    let start = tracebench_service::protocol::encode(
        &tracebench_service::CommandMessage::Record {
            client_seq: 1,
            action: tracebench_service::RecordAction::Start,
        },
        None,
    )
    .unwrap();
    client.write_all(&start).unwrap();
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        let f = tracebench_service::read_frame(&mut client).unwrap();
        if f.json["type"] == "recording" && f.json["on"] == true {
            break;
        }
        assert!(Instant::now() < deadline);
    }
    std::thread::sleep(Duration::from_millis(300));
    let killed = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(killed.success());
    assert_eq!(wait_exit(&mut child), 0);
    let data = tracebench::labeling::read_dataset(&dataset).unwrap();
    assert_eq!(data.len(), 1);
    assert!(data[0].len() >= 2);
}
