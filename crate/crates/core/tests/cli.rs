use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
seed = 5
length = 24
templates = ["please activate my {PLAN} plan today", "is {BRAND} coverage available downtown"]

[[concepts]]
id = "legacy"
values = { PLAN = "4G", BRAND = "TelcoOne" }

[[concepts]]
id = "current"
values = { PLAN = "5G", BRAND = "TalkNow" }

[schedule]
kind = "abrupt"
switch_points = [12]
"#;

fn odd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_odd")).args(args).env_remove("ODD_CONFIG").output().unwrap()
}

fn setup() -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let scenario = dir.path().join("small.toml");
    fs::write(&scenario, SMALL).unwrap();
    (dir, scenario)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn lines(p: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(p).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn compare_writes_three_row_table() {
    let (dir, scenario) = setup();
    let out = dir.path().join("out");
    let o = odd(&["compare", "--scenario", s(&scenario), "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("results.tsv")).unwrap();
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0].split('\t').collect::<Vec<_>>(), ["strategy", "EM", "ED", "BLEU", "ROUGE-L", "ChrF", "TokCos"]);
    let names: Vec<&str> = rows[1..].iter().map(|r| r.split('\t').next().unwrap()).collect();
    assert_eq!(names, ["greedy", "temp-scaled", "odd"]);
    for name in names {
        assert_eq!(lines(&out.join(format!("{name}.jsonl"))).len(), 24);
    }
    assert_eq!(String::from_utf8(o.stdout).unwrap(), table);
}

#[test]
fn greedy_and_odd_agree_on_cold_start() {
    let (dir, scenario) = setup();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(odd(&["run", "--scenario", s(&scenario), "--strategy", "greedy", "-o", s(&a)]).status.code(), Some(0));
    assert_eq!(odd(&["run", "--scenario", s(&scenario), "--strategy", "odd", "-o", s(&b)]).status.code(), Some(0));
    let g = lines(&a.join("greedy.jsonl"));
    let o = lines(&b.join("odd.jsonl"));
    assert_eq!(g[0]["hypothesis"], o[0]["hypothesis"]);
    assert_eq!(o[0]["summary"]["bypass_steps"], o[0]["summary"]["steps"]);
}

#[test]
fn usage_errors_exit_1() {
    let o = odd(&["compare", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(odd(&[]).status.code(), Some(1));
    assert_eq!(odd(&["run", "--scenario", "x", "--strategy", "beam"]).status.code(), Some(1));
    assert_eq!(odd(&["--help"]).status.code(), Some(0));
}

#[test]
fn validation_errors_exit_2() {
    let (dir, scenario) = setup();
    assert_eq!(odd(&["simulate", "--scenario", "/nonexistent.toml"]).status.code(), Some(2));
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[scoring]\nfrequency = 0.9\nlength = 0.9\nrecency = 0.9\n").unwrap();
    let o = odd(&["run", "--scenario", s(&scenario), "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let broken = dir.path().join("broken.toml");
    fs::write(&broken, SMALL.replace("BRAND = \"TalkNow\"", "OTHER = \"x\"")).unwrap();
    assert_eq!(odd(&["simulate", "--scenario", s(&broken)]).status.code(), Some(2));
    let snap = dir.path().join("junk.trie");
    fs::write(&snap, b"not a trie").unwrap();
    assert_eq!(odd(&["trie", "inspect", s(&snap)]).status.code(), Some(2));
}

#[test]
fn unreachable_provider_exits_3() {
    let (dir, scenario) = setup();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = dir.path().join("ext.toml");
    fs::write(&cfg, format!("[base_lm]\nconnect = \"127.0.0.1:{port}\"\n")).unwrap();
    let o = odd(&["run", "--scenario", s(&scenario), "--config", s(&cfg), "-o", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_is_seeded() {
    let (dir, scenario) = setup();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let c = dir.path().join("c.jsonl");
    odd(&["simulate", "--scenario", s(&scenario), "-o", s(&a)]);
    odd(&["simulate", "--scenario", s(&scenario), "-o", s(&b)]);
    odd(&["simulate", "--scenario", s(&scenario), "--seed", "99", "-o", s(&c)]);
    let items = lines(&a);
    assert_eq!(items.len(), 24);
    assert_eq!(items[12]["concept"], "current");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn trie_snapshot_commands() {
    let (dir, scenario) = setup();
    let out = dir.path().join("out");
    let o = odd(&["run", "--scenario", s(&scenario), "--save-trie", "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let snap = out.join("odd.trie");
    let o = odd(&["trie", "inspect", s(&snap)]);
    assert_eq!(o.status.code(), Some(0));
    let info: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(info["n_max"], 5);
    assert!(info["nodes"].as_u64().unwrap() > 0);
    let o = odd(&["trie", "dump", s(&snap), "--vocab", s(&out.join("vocab.txt"))]);
    assert_eq!(o.status.code(), Some(0));
    let dump = String::from_utf8(o.stdout).unwrap();
    assert_eq!(dump.lines().count() as u64, info["nodes"].as_u64().unwrap());
    assert!(dump.contains("\"text\":\"activate my 5G\""));
}

#[test]
fn trained_model_file_matches_builtin() {
    let (dir, scenario) = setup();
    let model = dir.path().join("model.json");
    assert_eq!(odd(&["train-lm", "--scenario", s(&scenario), "-o", s(&model)]).status.code(), Some(0));
    assert!(dir.path().join("model.vocab").exists());
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, format!("[base_lm]\nmodel = {:?}\n", s(&model))).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    odd(&["run", "--scenario", s(&scenario), "-o", s(&a)]);
    let o = odd(&["run", "--scenario", s(&scenario), "--config", s(&cfg), "-o", s(&b)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(a.join("odd.jsonl")).unwrap(), fs::read(b.join("odd.jsonl")).unwrap());
}

#[test]
fn config_from_environment() {
    let (dir, scenario) = setup();
    let cfg = dir.path().join("env.toml");
    fs::write(&cfg, "strategy = \"greedy\"\ntrace = true\n").unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_odd"))
        .args(["run", "--scenario", s(&scenario), "-o", s(&out)])
        .env("ODD_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let recs = lines(&out.join("greedy.jsonl"));
    assert!(recs[0]["steps"].is_array());
}

#[test]
fn serve_lm_over_stdio() {
    use std::io::{BufRead, BufReader, Write};
    use std::process::Stdio;
    let (_dir, scenario) = setup();
    let mut child = Command::new(env!("CARGO_BIN_EXE_odd"))
        .args(["serve-lm", "--scenario", s(&scenario)])
        .env_remove("ODD_CONFIG")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let mut line = String::new();
    stdout.read_line(&mut line).unwrap();
    let hs: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(hs["protocol"], "odd-logits");
    let vocab = 14;
    writeln!(stdin, "{{\"prefix\":[1,2],\"vocab\":{vocab}}}").unwrap();
    stdin.flush().unwrap();
    line.clear();
    stdout.read_line(&mut line).unwrap();
    let resp: serde_json::Value = serde_json::from_str(&line).unwrap();
    assert_eq!(resp["logits"].as_array().unwrap().len(), vocab);
    drop(stdin);
    assert!(child.wait().unwrap().success());
}
