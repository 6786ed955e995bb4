use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn specter(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specter"))
        .args(args)
        .env("SPECTER_THREADS", "1")
        .output()
        .expect("spawn specter")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
    host: PathBuf,
    stego: PathBuf,
    payload: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let host = dir.path().join("host.tsg");
        let stego = dir.path().join("stego.tsg");
        let payload = dir.path().join("payload.bin");
        std::fs::write(&payload, b"the quick brown fox jumps over the lazy dog 0123456789").unwrap();
        let out = specter(&[
            "gen-host",
            "--len",
            "30000",
            "--std",
            "0.02",
            "--seed",
            "7",
            "--out",
            p(&host),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let out = specter(&[
            "embed",
            "--host",
            p(&host),
            "--payload",
            p(&payload),
            "--seed",
            "42",
            "--out",
            p(&stego),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        Fixture {
            dir,
            host,
            stego,
            payload,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn payload_len(&self) -> String {
        std::fs::metadata(&self.payload).unwrap().len().to_string()
    }

    fn extract(&self, host: &Path, seed: &str, out: &Path) -> Output {
        specter(&[
            "extract",
            "--host",
            p(host),
            "--payload-len",
            &self.payload_len(),
            "--seed",
            seed,
            "--out",
            p(out),
        ])
    }
}

#[test]
fn round_trip_and_embed_record() {
    let f = Fixture::new();
    let out = f.path("out.bin");
    assert_eq!(code(&f.extract(&f.stego, "42", &out)), 0);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&f.payload).unwrap());

    let again = f.path("again.tsg");
    let rec = specter(&[
        "embed",
        "--host",
        p(&f.host),
        "--payload",
        p(&f.payload),
        "--seed",
        "42",
        "--out",
        p(&again),
    ]);
    let rec: serde_json::Value = serde_json::from_slice(&rec.stdout).unwrap();
    assert_eq!(rec["payload_len"], 54);
    assert_eq!(rec["ldpc_blocks"], 1);
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(&f.stego).unwrap());
}

#[test]
fn wrong_seed_and_clean_host_exit_3() {
    let f = Fixture::new();
    assert_eq!(code(&f.extract(&f.stego, "43", &f.path("x"))), 3);
    assert_eq!(code(&f.extract(&f.host, "42", &f.path("x"))), 3);
    assert!(!f.path("x").exists());
}

#[test]
fn wrong_length_exits_2_and_force_writes() {
    let f = Fixture::new();
    let out = f.path("x");
    let args = |force: bool| {
        let mut a = vec![
            "extract",
            "--host",
            p(&f.stego),
            "--payload-len",
            "53",
            "--seed",
            "42",
            "--out",
            p(&out),
        ];
        if force {
            a.push("--force");
        }
        specter(&a)
    };
    assert_eq!(code(&args(false)), 2);
    assert!(!out.exists());
    assert_eq!(code(&args(true)), 2);
    assert_eq!(std::fs::read(&out).unwrap().len(), 53);
}

#[test]
fn malformed_store_exits_4() {
    let f = Fixture::new();
    let bad = f.path("bad.tsg");
    std::fs::write(&bad, b"TSG2\x01\x00\x00\x00").unwrap();
    assert_eq!(code(&f.extract(&bad, "42", &f.path("x"))), 4);
    let mut bytes = std::fs::read(&f.stego).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&bad, &bytes).unwrap();
    assert_eq!(code(&specter(&["inspect", p(&bad)])), 4);
}

#[test]
fn usage_errors_exit_64() {
    let f = Fixture::new();
    assert_eq!(code(&specter(&["frobnicate"])), 64);
    assert_eq!(code(&specter(&["embed", "--host", p(&f.host)])), 64);
    let gamma = specter(&[
        "embed",
        "--host",
        p(&f.host),
        "--payload",
        p(&f.payload),
        "--seed",
        "1",
        "--gamma",
        "0.5",
        "--out",
        p(&f.path("y")),
    ]);
    assert_eq!(code(&gamma), 64);
    let empty = f.path("empty.bin");
    std::fs::write(&empty, b"").unwrap();
    let e = specter(&[
        "embed",
        "--host",
        p(&f.host),
        "--payload",
        p(&empty),
        "--seed",
        "1",
        "--out",
        p(&f.path("y")),
    ]);
    assert_eq!(code(&e), 64);
    let sel = specter(&[
        "embed",
        "--host",
        p(&f.host),
        "--payload",
        p(&f.payload),
        "--seed",
        "1",
        "--filter",
        "nothing.*",
        "--out",
        p(&f.path("y")),
    ]);
    assert_eq!(code(&sel), 64);
    assert_eq!(code(&specter(&["--help"])), 0);
}

#[test]
fn capacity_exits_3() {
    let f = Fixture::new();
    let small = f.path("small.tsg");
    assert_eq!(
        code(&specter(&[
            "gen-host",
            "--len",
            "5000",
            "--std",
            "0.02",
            "--seed",
            "1",
            "--out",
            p(&small)
        ])),
        0
    );
    let e = specter(&[
        "embed",
        "--host",
        p(&small),
        "--payload",
        p(&f.payload),
        "--seed",
        "1",
        "--out",
        p(&f.path("y")),
    ]);
    assert_eq!(code(&e), 3);
}

#[test]
fn inspect_lists_tensors() {
    let f = Fixture::new();
    let out = specter(&["inspect", p(&f.stego)]);
    assert_eq!(code(&out), 0);
    let lines: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["tensor_count"], 1);
    assert_eq!(lines[1]["elements"], 30000);
    assert_eq!(lines[1]["bytes"], 120000);
}

#[test]
fn probe_and_analyze_emit_json() {
    let f = Fixture::new();
    let probe = specter(&["probe", "--host", p(&f.stego), "--seed", "42"]);
    assert_eq!(code(&probe), 0);
    let est: serde_json::Value = serde_json::from_slice(&probe.stdout).unwrap();
    assert!(est["gain"].as_f64().unwrap() > 0.5);

    let ks = specter(&[
        "analyze",
        "ks",
        "--a",
        p(&f.host),
        "--b",
        p(&f.stego),
        "--signal-gamma",
        "0.002",
        "--signal-seed",
        "42",
    ]);
    assert_eq!(code(&ks), 0);
    let report: serde_json::Value = serde_json::from_slice(&ks.stdout).unwrap();
    assert!(report["ks"]["d_stat"].as_f64().unwrap() < 0.05);
    assert_eq!(report["a"]["n"], 30000);
    assert!(report.get("binomial_probe").is_some());
}

#[test]
fn attacks_rewrite_the_store() {
    let f = Fixture::new();
    let out = f.path("attacked.tsg");
    let x = f.path("x");
    for args in [
        vec!["attack", "prune", "--mode", "magnitude", "--ratio", "0.25"],
        vec!["attack", "noise", "--std", "0.001", "--seed", "3"],
        vec!["attack", "quantize"],
    ] {
        let mut a = args.clone();
        a.extend(["--in", p(&f.stego), "--out", p(&out)]);
        assert_eq!(code(&specter(&a)), 0, "{args:?}");
        assert_eq!(code(&f.extract(&out, "42", &x)), 0, "{args:?}");
        assert_eq!(std::fs::read(&x).unwrap(), std::fs::read(&f.payload).unwrap());
    }
    let a = specter(&[
        "attack",
        "prune",
        "--mode",
        "shuffle",
        "--seed",
        "5",
        "--in",
        p(&f.stego),
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&a), 0);
    assert_ne!(code(&f.extract(&out, "42", &x)), 0);
}

#[test]
fn fedavg_reports_outcome() {
    let f = Fixture::new();
    let out = specter(&[
        "fedavg",
        "--participants",
        "4",
        "--boost",
        "4",
        "--update-std",
        "1e-4",
        "--host",
        p(&f.host),
        "--payload",
        p(&f.payload),
        "--seed",
        "42",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["outcome"], "ok");
}

#[test]
fn raw_f32_streams() {
    let f = Fixture::new();
    let raw_host = f.path("host.f32");
    let raw_stego = f.path("stego.f32");
    assert_eq!(
        code(&specter(&[
            "gen-host",
            "--len",
            "30000",
            "--std",
            "0.02",
            "--seed",
            "7",
            "--out",
            p(&raw_host)
        ])),
        0
    );
    assert_eq!(std::fs::metadata(&raw_host).unwrap().len(), 120_000);
    let e = specter(&[
        "embed",
        "--host",
        p(&raw_host),
        "--payload",
        p(&f.payload),
        "--seed",
        "42",
        "--out",
        p(&raw_stego),
    ]);
    assert_eq!(code(&e), 0);
    // Same values as the TSG1 stego, without the container.
    let tsg = std::fs::read(&f.stego).unwrap();
    assert_eq!(std::fs::read(&raw_stego).unwrap()[..], tsg[tsg.len() - 120_000..]);
    let x = f.path("x");
    assert_eq!(code(&f.extract(&raw_stego, "42", &x)), 0);
    assert_eq!(std::fs::read(&x).unwrap(), std::fs::read(&f.payload).unwrap());
}

#[test]
fn f16_host_round_trip() {
    let f = Fixture::new();
    let host = f.path("h16.tsg");
    let stego = f.path("s16.tsg");
    assert_eq!(
        code(&specter(&[
            "gen-host",
            "--len",
            "30000",
            "--std",
            "0.02",
            "--seed",
            "7",
            "--dtype",
            "f16",
            "--out",
            p(&host)
        ])),
        0
    );
    let e = specter(&[
        "embed",
        "--host",
        p(&host),
        "--payload",
        p(&f.payload),
        "--seed",
        "42",
        "--out",
        p(&stego),
    ]);
    assert_eq!(code(&e), 0);
    assert_eq!(
        std::fs::metadata(&stego).unwrap().len(),
        std::fs::metadata(&host).unwrap().len()
    );
    let x = f.path("x");
    assert_eq!(code(&f.extract(&stego, "42", &x)), 0);
    assert_eq!(std::fs::read(&x).unwrap(), std::fs::read(&f.payload).unwrap());
}
