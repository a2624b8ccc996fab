mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use serde_json::Value;

use studchain::explorer::{respond, Explorer};
use studchain::server::reload_loop;
use studchain_core::{ChainStore, Payload};
use studchain_testkit::{achievement, gen, org_key};

use common::{endpoint_paths, get, personal_fields, populated, request, start, write_chain};

#[test]
fn endpoints_answer_with_json() {
    let p = populated();
    let server = start(p.store.clone());
    let head: Value = serde_json::from_str(&get(server.addr, "/head").1).unwrap();
    assert_eq!(head["height"], p.store.len() as u64 - 1);
    assert_eq!(head["head"], p.store.head_hash().to_string());
    assert_eq!(head["replica_digest"], p.store.replica_digest().to_string());

    let (status, body) = get(server.addr, &format!("/blocks/{}", p.recognition));
    assert_eq!(status, 200);
    let block: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(block["hash"], p.recognition.to_string());
    assert_eq!(block["payload"]["kind"], "contract");

    let orgs: Value = serde_json::from_str(&get(server.addr, "/orgs").1).unwrap();
    let names: Vec<&str> = orgs.as_array().unwrap().iter().map(|o| o["display_name"].as_str().unwrap()).collect();
    assert_eq!(names, ["root", "home-u", "abroad-u"]);

    let contracts: Value = serde_json::from_str(&get(server.addr, "/contracts").1).unwrap();
    let kinds: Vec<&str> = contracts.as_array().unwrap().iter().map(|c| c["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["recognition", "degree"]);

    let (status, body) = get(server.addr, &format!("/students/{}/progress/{}", p.student, p.degree));
    assert_eq!(status, 200);
    let progress: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(progress["fulfilled"], true);
    assert_eq!(progress["fraction"], 1.0);

    for path in endpoint_paths(&p) {
        let (status, body) = get(server.addr, &path);
        assert_eq!(status, 200, "{path}");
        assert_eq!(respond(&p.store, "GET", &path).body, body, "{path}");
    }
}

#[test]
fn errors_have_status_codes_and_names() {
    let p = populated();
    let server = start(p.store.clone());
    let unknown = "ab".repeat(32);
    let s = p.student;
    let cases = [
        ("POST", "/head".to_string(), 405, "MethodNotAllowed"),
        ("DELETE", format!("/blocks/{}", p.degree), 405, "MethodNotAllowed"),
        ("PUT", format!("/students/{s}/transcript"), 405, "MethodNotAllowed"),
        ("GET", format!("/blocks/{unknown}"), 404, "UnknownBlock"),
        ("GET", "/blocks/xyz".to_string(), 400, "BadHash"),
        ("GET", format!("/students/{s}/progress/{unknown}"), 404, "UnknownBlock"),
        ("GET", format!("/students/{s}/progress/{}", p.recognition), 404, "NotADegreeContract"),
        ("GET", "/students/nobody/transcript".to_string(), 400, "BadStudentId"),
        ("GET", "/nowhere".to_string(), 404, "NotFound"),
        ("GET", "/".to_string(), 404, "NotFound"),
    ];
    for (method, path, status, name) in cases {
        let (got, body) = request(server.addr, method, &path);
        assert_eq!(got, status, "{method} {path}");
        let v: Value = serde_json::from_str(&body).unwrap();
        assert_eq!(v["error"], name, "{method} {path}");
    }

    let stranger = studchain_testkit::student(4242);
    let (status, body) = get(server.addr, &format!("/students/{stranger}/transcript"));
    assert_eq!(status, 200);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["entries"], Value::Array(vec![]));

    let empty = start(ChainStore::new(*p.store.schedule()));
    assert_eq!(get(empty.addr, "/head").0, 404);
    assert_eq!(get(empty.addr, "/orgs"), (200, "[]\n".to_string()));
}

#[test]
fn no_endpoint_exposes_a_personal_name() {
    let p = populated();
    for path in endpoint_paths(&p) {
        let body = respond(&p.store, "GET", &path).body;
        assert_eq!(personal_fields(&body), Vec::<String>::new(), "{path}");
    }
    // Every payload shape, not only the ones on this chain.
    let mut runner = TestRunner::new(Config {
        cases: 300,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&gen::payload(), |payload| {
            let body = serde_json::to_string(&payload).unwrap();
            prop_assert_eq!(personal_fields(&body), Vec::<String>::new());
            Ok(())
        })
        .unwrap();
}

#[test]
fn the_lint_catches_a_personal_name() {
    assert_eq!(personal_fields(r#"{"a":[{"student_name":"x"}]}"#), vec!["$.a[].student_name"]);
    assert_eq!(personal_fields(r#"{"nickname":1}"#), vec!["$.nickname"]);
    assert!(personal_fields(r#"{"display_name":"uni","degree_name":"BSc"}"#).is_empty());
}

#[test]
fn reload_swaps_in_new_valid_chains_only() {
    let p = populated();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.chain");
    let shorter = p.store.truncated(4);
    write_chain(&path, &shorter);
    let explorer = Arc::new(Explorer::new(shorter.clone()));
    let rt = tokio::runtime::Runtime::new().unwrap();
    let schedule = *p.store.schedule();
    rt.spawn(reload_loop(explorer.clone(), path.clone(), schedule, Duration::from_millis(10)));

    let held = explorer.snapshot();
    write_chain(&path, &p.store);
    let deadline = Instant::now() + Duration::from_secs(10);
    while explorer.snapshot().head_hash() != p.store.head_hash() {
        assert!(Instant::now() < deadline, "reload did not happen");
        std::thread::sleep(Duration::from_millis(10));
    }
    // Readers keep the snapshot they already hold.
    assert_eq!(held.head_hash(), shorter.head_hash());

    // A damaged file is ignored and the last good snapshot stays live.
    let mut bytes = Vec::new();
    p.store.write_to(&mut bytes).unwrap();
    let n = bytes.len();
    bytes[n - 1] ^= 1;
    std::fs::write(&path, &bytes).unwrap();
    std::thread::sleep(Duration::from_millis(200));
    assert_eq!(explorer.snapshot().head_hash(), p.store.head_hash());
}

#[test]
fn extra_blocks_appear_in_the_transcript() {
    let mut p = populated();
    let home = org_key("home-u");
    let extra = achievement(p.student, home.org_id(), "MA-301", "3.0", &["math"], true);
    let before = respond(&p.store, "GET", &format!("/students/{}/transcript", p.student)).body;
    let block = p.store.mine_next(&home, Payload::Achievement(extra), 99).unwrap();
    p.store.append(block).unwrap();
    let after = respond(&p.store, "GET", &format!("/students/{}/transcript", p.student)).body;
    assert!(!before.contains("MA-301") && after.contains("MA-301"));
}

#[test]
fn request_battery_leaves_the_chain_file_untouched() {
    let p = populated();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ledger.chain");
    write_chain(&path, &p.store);
    let before = std::fs::read(&path).unwrap();
    let server = start(p.store.clone());
    let schedule = *p.store.schedule();
    server
        .rt
        .spawn(reload_loop(server.explorer.clone(), path.clone(), schedule, Duration::from_millis(5)));
    let statuses = common::request_battery(server.addr, &p, 11, 200);
    assert!(statuses.keys().all(|s| [200, 400, 404, 405].contains(s)), "{statuses:?}");
    assert_eq!(std::fs::read(&path).unwrap(), before);
    assert_eq!(server.explorer.snapshot().head_hash(), p.store.head_hash());
}
