//! End-to-end command-line checks: exit codes, the single-process
//! simulator, and the four-process deployment agreeing with it bit for
//! bit.

use std::io::Write;
use std::process::{Command, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_splitfss"))
}

fn write_config(name: &str, contents: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("splitfss-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::File::create(&path)
        .unwrap()
        .write_all(contents.as_bytes())
        .unwrap();
    path
}

#[test]
fn selftest_exit_codes() {
    let ok = bin()
        .args(["selftest", "--domain-bits", "32"])
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stdout)
    );
    assert!(String::from_utf8_lossy(&ok.stdout).contains("PASS"));

    let bad = bin()
        .args(["selftest", "--domain-bits", "", "--inject-corruption"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}

#[test]
fn usage_errors_exit_one() {
    let out = bin().arg("no-such-subcommand").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin()
        .args(["local-sim", "--override", "variant=not-a-variant"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dealer_requires_a_private_variant() {
    let out = bin()
        .args(["dealer", "--override", "variant=public-local"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dealer"));
}

#[test]
fn local_sim_writes_metrics() {
    let outpath =
        std::env::temp_dir().join(format!("splitfss-metrics-{}.jsonl", std::process::id()));
    let _ = std::fs::remove_file(&outpath);
    let out = bin()
        .args([
            "local-sim",
            "--override",
            "variant=private-vanilla",
            "--override",
            "hyper.batch_size=4",
            "--override",
            "hyper.epochs=1",
            "--override",
            "hyper.max_batches_per_epoch=2",
            "--override",
            "hyper.test_samples=4",
            "--override",
            "synthetic_train=64",
            "--override",
            "synthetic_test=8",
            "--override",
            &format!("output={:?}", outpath).replace('"', ""),
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    let line = std::fs::read_to_string(&outpath).unwrap();
    let record: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert_eq!(record["variant"], "private-vanilla");
    assert!(record["preprocessing_bytes_per_batch"].as_u64().unwrap() > 0);
}

fn config_for_ports(base: u16) -> String {
    format!(
        r#"{{
  "variant": "private-vanilla",
  "hyper": {{
    "eta": 0.002, "momentum": 0.9, "batch_size": 4, "epochs": 1,
    "max_batches_per_epoch": 2, "test_samples": 4, "seed": 33,
    "fixed": {{ "ring_bits": 64, "frac_bits": 16 }},
    "arch": {{ "input_hw": 28, "conv1_channels": 16, "conv2_channels": 16,
               "kernel": 5, "fc_hidden": 100, "classes": 10, "split_index": 6 }},
    "reveal_loss": false
  }},
  "endpoints": {{
    "server0": "127.0.0.1:{p0}",
    "server1": "127.0.0.1:{p1}",
    "dealer": "127.0.0.1:{p2}"
  }},
  "synthetic_train": 64,
  "synthetic_test": 8
}}"#,
        p0 = base,
        p1 = base + 1,
        p2 = base + 2
    )
}

#[test]
fn four_processes_match_local_sim() {
    // ports in the dynamic range, offset by pid to dodge parallel runs
    let base = 20000 + (std::process::id() % 20000) as u16;
    let cfg_path = write_config("four-proc.json", &config_for_ports(base));
    let cfg_arg = cfg_path.to_str().unwrap();

    let spawn = |role: &str| {
        bin()
            .args([role, "--config", cfg_arg])
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap()
    };
    let s0 = spawn("server0");
    let s1 = spawn("server1");
    let dealer = spawn("dealer");
    let client = spawn("client");

    let client_out = client.wait_with_output().unwrap();
    assert!(
        client_out.status.success(),
        "client: {}",
        String::from_utf8_lossy(&client_out.stderr)
    );
    for (name, child) in [("server0", s0), ("server1", s1), ("dealer", dealer)] {
        let out = child.wait_with_output().unwrap();
        assert!(
            out.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let client_stdout = String::from_utf8_lossy(&client_out.stdout).to_string();
    let four_proc = client_stdout
        .lines()
        .find(|l| l.contains("test accuracy"))
        .unwrap()
        .to_string();
    let four_proc_bytes: u64 = client_stdout
        .lines()
        .find(|l| l.contains("sent"))
        .and_then(|l| l.split_whitespace().rev().nth(1).map(str::to_string))
        .unwrap()
        .parse()
        .unwrap();

    // the simulator with the same config must report the same accuracy
    // and move the same client bytes
    let metrics =
        std::env::temp_dir().join(format!("splitfss-parity-{}.jsonl", std::process::id()));
    let _ = std::fs::remove_file(&metrics);
    let sim = bin()
        .args([
            "local-sim",
            "--config",
            cfg_arg,
            "--override",
            &format!("output={}", metrics.display()),
        ])
        .output()
        .unwrap();
    assert!(sim.status.success());
    let sim_line = String::from_utf8_lossy(&sim.stdout)
        .lines()
        .find(|l| l.contains("test accuracy"))
        .unwrap()
        .to_string();
    assert_eq!(four_proc, sim_line, "deployment modes disagree on accuracy");

    let record: serde_json::Value = serde_json::from_str(
        std::fs::read_to_string(&metrics)
            .unwrap()
            .lines()
            .next()
            .unwrap(),
    )
    .unwrap();
    let sim_bytes: u64 = record["parties"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["party"] == "client")
        .unwrap()["sent_bytes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(
        four_proc_bytes, sim_bytes,
        "deployment modes disagree on client bytes"
    );
}

#[test]
fn make_tapes_produces_parseable_material() {
    let dir = std::env::temp_dir().join(format!("splitfss-tapes-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let out = bin()
        .args([
            "make-tapes",
            "--out",
            dir.to_str().unwrap(),
            "--override",
            "variant=private-vanilla",
            "--override",
            "hyper.batch_size=4",
            "--override",
            "hyper.epochs=1",
            "--override",
            "hyper.max_batches_per_epoch=2",
            "--override",
            "hyper.test_samples=4",
            "--override",
            "synthetic_train=16",
            "--override",
            "synthetic_test=8",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for (name, bundles) in [
        ("server0.tape", 1 + 2 + 1), // init + train batches + test batch
        ("server1.tape", 4),
        ("client.tape", 3), // masks only, no init
    ] {
        let bytes = std::fs::read(dir.join(name)).unwrap();
        let parsed = splitfss::protocol::material::parse_tape(&bytes).unwrap();
        assert_eq!(parsed.len(), bundles, "{name}");
    }
    // public variants have no dealer material
    let out = bin()
        .args([
            "make-tapes",
            "--out",
            dir.to_str().unwrap(),
            "--override",
            "variant=public-local",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn viia_dumps_graymaps() {
    let dir = std::env::temp_dir().join(format!("splitfss-viia-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let out = bin()
        .args([
            "viia",
            "--mode",
            "masked",
            "--count",
            "3",
            "--out",
            dir.to_str().unwrap(),
            "--override",
            "synthetic_train=16",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("viia prints a JSON report");
    assert!(report["mean_abs_correlation"].as_f64().unwrap() < 0.2);
    let pgm = std::fs::read(dir.join("img000_ch00.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n24 24\n255\n"));
    let raw = std::fs::read(dir.join("img000_raw.pgm")).unwrap();
    assert!(raw.starts_with(b"P5\n"));
}
