//! End-to-end runs of the `docpost` binary over the golden corpus.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_docpost");

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/golden").join(name)
}

fn docpost(args: &[&str]) -> Output {
    docpost_env(args, &[])
}

fn docpost_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("DOCPOST_BACKEND_URL").env_remove("DOCPOST_BACKEND_TOKEN");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_else(|| panic!("no stderr"));
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&read(path)).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every artifact under `dir`, by relative path.
fn artifacts(dir: &Path) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    for doc in std::fs::read_dir(dir).unwrap() {
        let doc = doc.unwrap().path();
        for f in std::fs::read_dir(&doc).unwrap() {
            let f = f.unwrap().path();
            let key = format!("{}/{}", doc.file_name().unwrap().to_string_lossy(), f.file_name().unwrap().to_string_lossy());
            m.insert(key, read(&f));
        }
    }
    m
}

#[test]
fn process_matches_pinned_tree() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["annual_report", "long_handbook", "cjk_policy"] {
        let input = golden(name).join("input.json");
        let out = docpost(&["process", s(&input), "--out-dir", s(tmp.path())]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let dir = tmp.path().join(name);
        assert_eq!(read(&dir.join("tree.json")), read(&golden(name).join("expected/tree.json")), "{name}");
        assert_eq!(read(&dir.join("tree.md")), read(&golden(name).join("expected/tree.md")), "{name}");
        for f in ["merge_log.json", "chunk_plan.json", "report.json", "predictions.json"] {
            assert!(dir.join(f).is_file(), "{name}/{f}");
        }
    }
}

#[test]
fn missing_config_is_a_machine_readable_error() {
    let input = golden("annual_report").join("input.json");
    let out = docpost(&["process", s(&input), "--config", "/nonexistent/docpost.toml"]);
    assert!(!out.status.success());
    let err = stderr_json(&out);
    assert_eq!(err["error"], "cli.ConfigNotFound");
    assert!(err["message"].as_str().unwrap().contains("docpost.toml"));
}

#[test]
fn invalid_settings_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[chunk]\nstrid = 4\n").unwrap();
    let input = golden("annual_report").join("input.json");
    let out = docpost(&["inspect-chunks", s(&input), "--config", s(&cfg)]);
    assert_eq!(stderr_json(&out)["error"], "cli.ConfigInvalid");
    let out = docpost(&["inspect-chunks", s(&input), "--stride", "3", "--threshold", "3"]);
    assert_eq!(stderr_json(&out)["error"], "cli.ConfigInvalid");
    let out = docpost(&["process", s(&input), "--profile", "no_such_profile", "--out-dir", s(tmp.path())]);
    assert!(!out.status.success());
    assert_eq!(stderr_json(&out)["error"], "ingest.SchemaUnknown");
}

#[test]
fn flag_beats_env_beats_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[chunk]\nstride = 6\nthreshold = 1\n[predictor]\nmode = \"remote\"\n").unwrap();
    let input = golden("long_handbook").join("input.json");
    let stride = |out: &Output| -> u64 {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        v["stride"].as_u64().unwrap()
    };

    // The file asks for remote mode without a URL: invalid on its own.
    let out = docpost(&["inspect-chunks", s(&input), "--config", s(&cfg)]);
    assert_eq!(stderr_json(&out)["error"], "cli.ConfigInvalid");
    // The environment supplies the URL; the file supplies the stride.
    let env = [("DOCPOST_BACKEND_URL", "http://127.0.0.1:9/")];
    assert_eq!(stride(&docpost_env(&["inspect-chunks", s(&input), "--config", s(&cfg)], &env)), 6);
    // A flag overrides both.
    let args = ["inspect-chunks", s(&input), "--config", s(&cfg), "--stride", "4", "--predictor", "rules"];
    assert_eq!(stride(&docpost_env(&args, &env)), 4);
    // No file: defaults.
    assert_eq!(stride(&docpost(&["inspect-chunks", s(&input)])), 8);
}

#[test]
fn unreachable_backend_falls_back_with_warnings() {
    let tmp = tempfile::tempdir().unwrap();
    let input = golden("annual_report").join("input.json");
    let args = ["process", s(&input), "--predictor", "remote", "--backend-url", "http://127.0.0.1:9/", "--out-dir", s(tmp.path())];
    let out = docpost_env(&args, &[("DOCPOST_BACKEND_TOKEN", "tok-unreachable-42")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&tmp.path().join("annual_report/report.json"));
    assert!(report["warnings"].as_u64().unwrap() > 0);
    // The rule fallback produces the same tree as rules mode.
    let tree = read(&tmp.path().join("annual_report/tree.json"));
    assert_eq!(tree, read(&golden("annual_report").join("expected/tree.json")));
    let everything = format!("{}{}{:?}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr), artifacts(tmp.path()));
    assert!(!everything.contains("tok-unreachable-42"));
}

/// Minimal HTTP/1.1 server answering every title request with level 1 and
/// everything else with `[]`. Records the Authorization header of each call.
fn mock_backend() -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/predict", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let (mut len, mut auth) = (0usize, String::new());
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
                if lower.starts_with("authorization:") {
                    auth = line["authorization:".len()..].trim().to_string();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(auth);
            let req: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
            let reply = match req["task"].as_str() {
                Some("title_hierarchy") => Value::Array(
                    req["blocks"].as_array().unwrap().iter().map(|b| json!({"idx": b["idx"], "level": 1})).collect(),
                ),
                _ => json!([]),
            };
            let text = reply.to_string();
            let resp = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    (url, seen)
}

#[test]
fn remote_backend_replies_are_used_and_token_stays_private() {
    let (url, seen) = mock_backend();
    let tmp = tempfile::tempdir().unwrap();
    let input = golden("annual_report").join("input.json");
    let args = ["process", s(&input), "--predictor", "remote", "--out-dir", s(tmp.path())];
    let out = docpost_env(&args, &[("DOCPOST_BACKEND_URL", &url), ("DOCPOST_BACKEND_TOKEN", "tok-secret-1234")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let calls = seen.lock().unwrap().clone();
    assert!(!calls.is_empty());
    assert!(calls.iter().all(|a| a == "Bearer tok-secret-1234"), "{calls:?}");

    let dir = tmp.path().join("annual_report");
    let report = read_json(&dir.join("report.json"));
    assert_eq!(report["warnings"], 0);
    let pred = read_json(&dir.join("predictions.json"));
    let levels: Vec<i64> = pred["hierarchy"].as_array().unwrap().iter().map(|h| h["level"].as_i64().unwrap()).collect();
    assert!(!levels.is_empty() && levels.iter().all(|&l| l == 1), "{levels:?}");
    assert!(pred["text_truncation"].as_array().unwrap().is_empty());
    assert!(read(&dir.join("tree.md")).lines().filter(|l| l.starts_with('#')).all(|l| l.starts_with("# ")));

    let everything = format!("{}{}{:?}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr), artifacts(tmp.path()));
    assert!(!everything.contains("tok-secret-1234"));
}

#[test]
fn batch_is_reproducible_and_isolates_failures() {
    let inputs = tempfile::tempdir().unwrap();
    for name in ["annual_report", "survey_paper", "financial_tables", "long_handbook"] {
        std::fs::copy(golden(name).join("input.json"), inputs.path().join(format!("{name}.json"))).unwrap();
    }
    std::fs::write(inputs.path().join("broken.json"), "{\"blocks\": [").unwrap();

    let run = |jobs: &str| {
        let out_dir = tempfile::tempdir().unwrap();
        let out = docpost(&["process", s(inputs.path()), "--out-dir", s(out_dir.path()), "--jobs", jobs]);
        (out, artifacts(out_dir.path()), out_dir)
    };
    let (a, art_a, _ka) = run("1");
    let (b, art_b, _kb) = run("4");
    for out in [&a, &b] {
        assert!(!out.status.success());
        let err = stderr_json(out);
        assert_eq!(err["error"], "ingest.MalformedInput");
        assert!(err["input"].as_str().unwrap().ends_with("broken.json"));
        assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 4);
    }
    assert_eq!(art_a.len(), 4 * 6);
    assert_eq!(art_a, art_b);
}

#[test]
fn normalize_then_process_gives_the_same_tree() {
    let tmp = tempfile::tempdir().unwrap();
    let canonical = tmp.path().join("canonical.json");
    let input = golden("survey_paper").join("input.json");
    let out = docpost(&["normalize", s(&input), "-o", s(&canonical)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&canonical);
    assert_eq!(doc["source_schema"], "mineru");
    let out = docpost(&["process", s(&canonical), "--out-dir", s(tmp.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&tmp.path().join("survey_paper/tree.json")), read(&golden("survey_paper").join("expected/tree.json")));
}

#[test]
fn export_renders_a_saved_tree() {
    let tree = golden("thesis_chapter").join("expected/tree.json");
    let out = docpost(&["export", s(&tree)]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), read(&golden("thesis_chapter").join("expected/tree.md")));
    let out = docpost(&["export", s(&tree), "--format", "json"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), read(&tree));

    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("t.json");
    std::fs::write(&bad, "{\"root\": 3}").unwrap();
    let out = docpost(&["export", s(&bad)]);
    assert!(!out.status.success());
    assert_eq!(stderr_json(&out)["error"], "ingest.InvalidDocument");
}

#[test]
fn eval_of_gold_against_itself_is_perfect_and_order_free() {
    let tmp = tempfile::tempdir().unwrap();
    let mut shuffled_dir = PathBuf::new();
    for (i, name) in ["annual_report", "financial_tables", "text_pairs_14"].iter().enumerate() {
        let gold = read_json(&golden(name).join("gold.json"));
        let d = tmp.path().join("pred").join(name);
        std::fs::create_dir_all(&d).unwrap();
        std::fs::write(d.join("predictions.json"), gold.to_string()).unwrap();
        // Same annotations with every list reversed.
        let mut rev = gold.clone();
        for key in ["hierarchy", "text_truncation", "association", "table_truncation"] {
            if let Some(a) = rev[key].as_array_mut() {
                a.reverse();
            }
        }
        shuffled_dir = tmp.path().join("shuffled");
        let g = shuffled_dir.join(format!("{i}"));
        std::fs::create_dir_all(&g).unwrap();
        std::fs::write(g.join("gold.json"), rev.to_string()).unwrap();
    }
    let mut gold_dir = tmp.path().join("gold");
    for name in ["annual_report", "financial_tables", "text_pairs_14"] {
        let d = gold_dir.join(name);
        std::fs::create_dir_all(&d).unwrap();
        std::fs::copy(golden(name).join("gold.json"), d.join("gold.json")).unwrap();
    }
    let pred = tmp.path().join("pred");
    let r1 = tmp.path().join("r1.json");
    let r2 = tmp.path().join("r2.json");
    let out = docpost(&["eval", "--pred", s(&pred), "--gold", s(&gold_dir), "--report", s(&r1)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ALL"));
    gold_dir = shuffled_dir;
    let out = docpost(&["eval", "--pred", s(&pred), "--gold", s(&gold_dir), "--report", s(&r2)]);
    assert!(out.status.success());
    assert_eq!(read(&r1), read(&r2));

    let summary = &read_json(&r1)["summary"];
    assert_eq!(summary["mean_teds"], 1.0, "{summary}");
}

#[test]
fn corrupted_annotations_are_a_schema_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("predictions.json");
    std::fs::write(&bad, "{\"version\": 1, \"doc_id\": ").unwrap();
    let gold = golden("annual_report").join("gold.json");
    let out = docpost(&["eval", "--pred", s(&bad), "--gold", s(&gold)]);
    assert!(!out.status.success());
    assert_eq!(stderr_json(&out)["error"], "eval.SchemaMismatch");
}
