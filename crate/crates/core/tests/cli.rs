use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use zfmiso::harness::{read_records, CSV_HEADER};

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("zfmiso-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn zfmiso(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zfmiso")).args(args).output().unwrap()
}

fn write_config(dir: &PathBuf, body: &str) -> String {
    let path = dir.join("cfg.txt");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = "K = 4\nM = 2\nN = 2\nP = 10\ndmin = 1.5,0,0,0\n";

#[test]
fn run_writes_header_and_binary_feasibility() {
    let dir = workdir("run");
    let cfg = write_config(&dir, SMALL);
    let out = dir.join("run.csv");
    let o = zfmiso(&["run", "--config", &cfg, "--method", "alg1", "--trials", "5", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    for line in lines {
        let feasible = line.split(',').nth(8).unwrap();
        assert!(feasible == "0" || feasible == "1", "{line}");
    }
    let recs = read_records(text.as_bytes()).unwrap();
    assert_eq!(recs.len(), 5);
    assert!(recs.iter().all(|r| r.users == 4 && r.rt_users == 1));
}

#[test]
fn sweep_is_reproducible_without_timing() {
    let dir = workdir("sweep");
    let cfg = write_config(&dir, SMALL);
    let run = |name: &str, extra: &[&str]| {
        let out = dir.join(name);
        let mut args = vec![
            "--no-timing", "sweep", "--config", &cfg, "--param", "dmin", "--start", "0", "--stop", "2", "--step", "0.5",
            "--trials", "4", "--seed", "11", "--out",
        ];
        let o_str = out.to_string_lossy().into_owned();
        args.push(&o_str);
        args.extend_from_slice(extra);
        let o = zfmiso(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(&out).unwrap()
    };
    let a = run("a.csv", &[]);
    let b = run("b.csv", &[]);
    assert_eq!(a, b);
    let c = run("c.csv", &["--sequential"]);
    assert_eq!(a, c);

    let o = zfmiso(&["gaps", "--in", dir.join("a.csv").to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("[mean over 4 draws]"), "{text}");
    assert!(text.lines().any(|l| l.trim_start().starts_with("F =")), "{text}");
}

#[test]
fn config_errors_exit_2() {
    let dir = workdir("cfgerr");
    let out = dir.join("x.csv");
    let out = out.to_str().unwrap();

    let missing = dir.join("missing.txt");
    let o = zfmiso(&["run", "--config", missing.to_str().unwrap(), "--method", "alg1", "--out", out]);
    assert_eq!(o.status.code(), Some(2));

    let bad = write_config(&dir, "K = 4\nM = 2\nP = 10\n");
    let o = zfmiso(&["run", "--config", &bad, "--method", "alg1", "--out", out]);
    assert_eq!(o.status.code(), Some(2));

    let good = write_config(&dir, SMALL);
    let o = zfmiso(&["run", "--config", &good, "--method", "nope", "--out", out]);
    assert_eq!(o.status.code(), Some(2));

    let o = zfmiso(&[
        "sweep", "--config", &good, "--param", "dmin", "--start", "1", "--stop", "0", "--step", "0.5", "--out", out,
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn enumeration_guard_exits_3() {
    let dir = workdir("guard");
    let cfg = write_config(&dir, "K = 64\nM = 4\nN = 8\nP = 20\n");
    let out = dir.join("x.csv");
    let o = zfmiso(&["run", "--config", &cfg, "--method", "bound", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    // Heuristics have no such limit.
    let o = zfmiso(&["run", "--config", &cfg, "--method", "alg2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
}
