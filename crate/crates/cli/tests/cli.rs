use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn cbcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbcast"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn last_json(out: &Output) -> Value {
    let stdout = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(stdout.lines().last().expect("some output")).unwrap()
}

#[test]
fn simulate_is_clean_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for path in [&a, &b] {
        let out = cbcast(&[
            "simulate", "--procs", "3", "--seed", "1", "--steps", "200", "--trace",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let summary = last_json(&out);
        assert_eq!(summary["violations"], 0);
        assert_eq!(summary["prng"], "ChaCha8Rng");
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);

    let out = cbcast(&["check-trace", "--trace", a.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(last_json(&out)["violations"], 0);
}

#[test]
fn simulate_with_drain_and_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.json");
    std::fs::write(&cfg, r#"{"n_procs": 4, "seed": 9, "max_steps": 300}"#).unwrap();
    let out = cbcast(&["simulate", "--config", cfg.to_str().unwrap(), "--drain"]);
    assert_eq!(out.status.code(), Some(0));
    let s = last_json(&out);
    assert_eq!(s["n_procs"], 4);
    assert_eq!(s["seed"], 9);
    assert_eq!(s["in_flight"], 0);
    assert_eq!(s["queued"], 0);

    std::fs::write(&cfg, r#"{"n_procs": 4, "bogus": 1}"#).unwrap();
    let out = cbcast(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cbcast(&["simulate", "--procs", "0"]).status.code(), Some(1));
    assert_eq!(cbcast(&["simulate", "--p-drop", "1.5"]).status.code(), Some(1));
    assert_eq!(cbcast(&["simulate", "--procs", "x"]).status.code(), Some(1));
    assert_eq!(cbcast(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(cbcast(&[]).status.code(), Some(1));
    assert_eq!(cbcast(&["check-trace", "--trace", "/no/such/file"]).status.code(), Some(1));
    assert_eq!(cbcast(&["--help"]).status.code(), Some(0));
    assert_eq!(cbcast(&["--version"]).status.code(), Some(0));
}

#[test]
fn check_trace_flags_violating_executions() {
    for name in ["fifo-violation.jsonl", "causal-violation.jsonl"] {
        let out = cbcast(&["check-trace", "--trace", &fixture(name)]);
        assert_eq!(out.status.code(), Some(2), "{name}");
        let s = last_json(&out);
        assert_eq!((s["cd"].as_u64(), s["lcd"].as_u64()), (Some(1), Some(1)), "{name}");
        assert_eq!(s["correspondence"], 0);
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.contains("CD violation at p2"), "{stdout}");
    }
    for name in ["fifo-buffered.jsonl", "causal-buffered.jsonl"] {
        let out = cbcast(&["check-trace", "--trace", &fixture(name)]);
        assert_eq!(out.status.code(), Some(0), "{name}");
        assert_eq!(last_json(&out)["violations"], 0);
    }
}

#[test]
fn check_trace_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = cbcast(&["check-trace", "--trace", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));

    let bad = dir.path().join("bad.jsonl");
    let good = std::fs::read_to_string(fixture("fifo-buffered.jsonl")).unwrap();
    let mut lines: Vec<&str> = good.lines().collect();
    lines.insert(3, "{\"kind\":\"deliver\"");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    let out = cbcast(&["check-trace", "--trace", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));

    let short = dir.path().join("short.jsonl");
    std::fs::write(
        &short,
        "{\"kind\":\"broadcast\",\"pid\":0,\"msg\":{\"vc\":[1,0],\"sender\":0,\"raw\":1}}\n\
         {\"kind\":\"broadcast\",\"pid\":1,\"msg\":{\"vc\":[0,1,0],\"sender\":1,\"raw\":2}}\n",
    )
    .unwrap();
    let out = cbcast(&["check-trace", "--trace", short.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn replay_figures_prints_the_scripted_clocks() {
    let out = cbcast(&["replay-figures"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let clocks: Vec<&Value> = v["vector_clocks"]["messages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| &m["vc"])
        .collect();
    assert_eq!(clocks, [&serde_json::json!([1, 0, 0]), &serde_json::json!([1, 1, 0]), &serde_json::json!([0, 0, 1])]);
    assert_eq!(v["fifo"]["final_clocks"][2], serde_json::json!([2, 0, 0]));
    assert_eq!(v["causal"]["final_clocks"][2], serde_json::json!([2, 1, 0]));
    for k in ["vector_clocks", "fifo", "causal"] {
        assert_eq!(v[k]["violations"], 0);
    }
}

#[test]
fn kvs_node_rejects_bad_config() {
    let out = cbcast(&[
        "kvs-node", "--id", "5", "--listen", "127.0.0.1:0", "--peer", "1=http://127.0.0.1:1",
        "--peer", "2=http://127.0.0.1:2", "--peer", "3=http://127.0.0.1:3",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(cbcast(&["kvs-node", "--id", "0", "--listen", "127.0.0.1:0", "--peer", "nope"]).status.code(), Some(1));

    // Port already taken.
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = held.local_addr().unwrap().to_string();
    let out = cbcast(&["kvs-node", "--id", "0", "--listen", &addr]);
    assert_eq!(out.status.code(), Some(1));
}

#[cfg(unix)]
#[test]
fn kvs_node_shuts_down_cleanly_on_sigterm() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_cbcast"))
        .args(["kvs-node", "--id", "0", "--listen", "127.0.0.1:0"])
        .env("RUST_LOG", "warn")
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    while !line.contains("listening on") {
        line.clear();
        assert!(stderr.read_line(&mut line).unwrap() > 0, "node exited early");
    }
    let status = Command::new("kill")
        .args(["-TERM", &child.id().to_string()])
        .status()
        .unwrap();
    assert!(status.success());
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        if let Some(status) = child.try_wait().unwrap() {
            assert_eq!(status.code(), Some(0));
            break;
        }
        assert!(Instant::now() < deadline, "node did not stop");
        std::thread::sleep(Duration::from_millis(20));
    }
}
