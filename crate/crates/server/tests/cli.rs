mod common;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use common::*;

const BIN: &str = env!("CARGO_BIN_EXE_ypsp");

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("ypsp.toml");
    let text = format!(
        "schema = {:?}\ndata = [{:?}]\ngazetteer = {:?}\n{extra}",
        fixture("schema.json"),
        fixture("restaurants.nt"),
        fixture("gazetteer.tsv"),
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn ypsp(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("YPSP_CONFIG").output().unwrap()
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[tokio::test]
async fn query_file_matches_http_body() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let qpath = fixture("veg_lunch.rq");
    let out = ypsp(&["query", "--config", cfg.to_str().unwrap(), "--file", qpath.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let (base, _) = serve(sample_directory()).await;
    let client = reqwest::Client::new();
    let http = get_sparql(&client, &base, include_str!("../../../fixtures/veg_lunch.rq")).await.bytes().await.unwrap();
    assert_eq!(out.stdout, http.as_ref());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["results"]["bindings"][0]["name"]["value"], "Darshini");
}

#[tokio::test]
async fn structured_query_matches_http_body() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let request = r#"{"class":"Restaurant","filters":{"cost":{"max":20}}}"#;
    let out = ypsp(&["query", "--config", cfg.to_str().unwrap(), "--structured", request]);
    assert_eq!(out.status.code(), Some(0));
    let (base, _) = serve(sample_directory()).await;
    let client = reqwest::Client::new();
    let http = client
        .post(format!("{base}/search"))
        .header("content-type", "application/json")
        .body(request)
        .send()
        .await
        .unwrap()
        .bytes()
        .await
        .unwrap();
    assert_eq!(out.stdout, http.as_ref());

    let sat = ypsp(&["query", "--config", cfg.to_str().unwrap(), "--structured", r#"{"class":"Restaurant"}"#]);
    let v: serde_json::Value = serde_json::from_slice(&sat.stdout).unwrap();
    let results = v["results"].as_array().unwrap();
    assert_eq!(results.len(), 3);
    assert!(results.iter().all(|r| r["penalty"] == 0.0));

    let file = tmp.path().join("req.json");
    std::fs::write(&file, request).unwrap();
    let at = ypsp(&["query", "--config", cfg.to_str().unwrap(), "--structured", &format!("@{}", file.display())]);
    assert_eq!(at.stdout, http.as_ref());
}

#[test]
fn query_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let cfg = cfg.to_str().unwrap();
    let empty = tmp.path().join("empty.rq");
    std::fs::write(&empty, "  \n").unwrap();
    assert_eq!(ypsp(&["query", "--config", cfg, "--file", empty.to_str().unwrap()]).status.code(), Some(1));

    let bad = tmp.path().join("bad.rq");
    std::fs::write(&bad, "SELECT ?x WHERE {\n ?x foo:bar ?y }").unwrap();
    let out = ypsp(&["query", "--config", cfg, "--file", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = ypsp(&["query", "--config", cfg, "--structured", r#"{"class":"Holiday"}"#]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());

    // usage errors
    assert_eq!(ypsp(&[]).status.code(), Some(1));
    assert_eq!(ypsp(&["query", "--config", cfg]).status.code(), Some(1));
    assert_eq!(ypsp(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "schema = \"missing.json\"\ngazetteer = \"missing.tsv\"\n").unwrap();
    let out = ypsp(&["serve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
    let out = ypsp(&["serve", "--config", tmp.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&cfg, "schema = [").unwrap();
    assert_eq!(ypsp(&["serve", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn serve_listens_and_port_in_use_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let port = free_port();
    let cfg = write_config(tmp.path(), &format!("port = {port}\n"));
    let mut child = Command::new(BIN)
        .args(["serve", "--config", cfg.to_str().unwrap()])
        .env_remove("YPSP_PORT")
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let started = Instant::now();
    let mut up = false;
    while started.elapsed() < Duration::from_secs(10) {
        if std::net::TcpStream::connect(("127.0.0.1", port)).is_ok() {
            up = true;
            break;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    assert!(up, "server did not come up on {port}");

    let clash = ypsp(&["serve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(clash.status.code(), Some(3));

    // YPSP_PORT overrides the file
    let other = free_port();
    let mut second = Command::new(BIN)
        .args(["serve", "--config", cfg.to_str().unwrap()])
        .env("YPSP_PORT", other.to_string())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let started = Instant::now();
    let mut up2 = false;
    while started.elapsed() < Duration::from_secs(10) {
        if std::net::TcpStream::connect(("127.0.0.1", other)).is_ok() {
            up2 = true;
            break;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    child.kill().unwrap();
    second.kill().unwrap();
    let _ = child.wait();
    let _ = second.wait();
    assert!(up2);
}

#[test]
fn load_and_export() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ypsp(&["load", fixture("restaurants.nt").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "3 entities, 28 triples\n");

    let bad = tmp.path().join("bad.nt");
    let mut f = std::fs::File::create(&bad).unwrap();
    writeln!(f, "<http://a> <http://b> <http://c> .").unwrap();
    writeln!(f, "<http://a> <http://b> \"unterminated .").unwrap();
    drop(f);
    let out = ypsp(&["load", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let cfg = write_config(tmp.path(), "");
    let first = tmp.path().join("first.nt");
    let out = ypsp(&["export", first.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "3 entities, 28 triples\n");

    // export, load the export, export again: identical bytes
    let cfg2 = tmp.path().join("again.toml");
    std::fs::write(
        &cfg2,
        format!("schema = {:?}\ndata = {:?}\ngazetteer = {:?}\n", fixture("schema.json"), first, fixture("gazetteer.tsv")),
    )
    .unwrap();
    let second = tmp.path().join("second.nt");
    assert_eq!(ypsp(&["export", second.to_str().unwrap(), "--config", cfg2.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
}

#[tokio::test]
async fn federate_command() {
    let (base, _) = serve(sample_directory()).await;
    let tmp = tempfile::tempdir().unwrap();
    let endpoints = tmp.path().join("endpoints.toml");
    std::fs::write(
        &endpoints,
        format!("[[endpoints]]\nname = \"one\"\nurl = \"{base}/sparql\"\ntimeout_ms = 2000\n"),
    )
    .unwrap();
    let cfg = write_config(tmp.path(), "endpoints_file = \"endpoints.toml\"\n");
    let qpath = fixture("veg_lunch.rq");
    let out = tokio::task::spawn_blocking(move || {
        ypsp(&["federate", "--config", cfg.to_str().unwrap(), "--file", qpath.to_str().unwrap()])
    })
    .await
    .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["results"]["bindings"].as_array().unwrap().len(), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"partial\":false"));
}

#[test]
fn sample_config_works() {
    let out = ypsp(&[
        "query",
        "--config",
        fixture("ypsp.toml").to_str().unwrap(),
        "--structured",
        r#"{"class":"Restaurant","near":{"locality":"Adugodi","radiusKm":1}}"#,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["results"][0]["bindings"]["name"]["value"], "Darshini");
    assert_eq!(v["results"][0]["penalty"], 2.0);
}
