#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::Path;
use std::sync::Arc;

use serde_json::Value;

use studchain::explorer::Explorer;
use studchain::server;
use studchain_core::{ChainStore, Digest, Payload, StudentId};
use studchain_testkit::fixtures::StudyAbroad;

/// An explorer served on an ephemeral local port for as long as this
/// value lives.
pub struct TestServer {
    pub addr: SocketAddr,
    pub explorer: Arc<Explorer>,
    pub rt: tokio::runtime::Runtime,
}

pub fn start(store: ChainStore) -> TestServer {
    let explorer = Arc::new(Explorer::new(store));
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let addr = listener.local_addr().unwrap();
    rt.spawn(server::serve(explorer.clone(), listener));
    TestServer { addr, explorer, rt }
}

/// One HTTP/1.1 request on a fresh connection; returns status and body.
pub fn request(addr: SocketAddr, method: &str, path: &str) -> (u16, String) {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\nContent-Length: 0\r\n\r\n"
    )
    .unwrap();
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).unwrap();
    let text = String::from_utf8_lossy(&raw).into_owned();
    let status = text.split(' ').nth(1).and_then(|c| c.parse().ok()).expect("status line");
    let body = text.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    (status, body)
}

pub fn get(addr: SocketAddr, path: &str) -> (u16, String) {
    request(addr, "GET", path)
}

/// The four-block scenario followed by the foreign exam, fully settled:
/// one recognition and one degree award on chain.
pub struct Populated {
    pub store: ChainStore,
    pub student: StudentId,
    pub degree: Digest,
    pub recognition: Digest,
}

pub fn populated() -> Populated {
    let mut f = StudyAbroad::build();
    let exam = f.foreign_exam();
    f.world.submit_settled("abroad-u", Payload::Achievement(exam)).unwrap();
    Populated {
        store: f.world.store,
        student: f.student,
        degree: f.degree,
        recognition: f.recognition,
    }
}

pub fn write_chain(path: &Path, store: &ChainStore) {
    let mut bytes = Vec::new();
    store.write_to(&mut bytes).unwrap();
    std::fs::write(path, bytes).unwrap();
}

/// Keys that would identify a person rather than an organization or a
/// course.
pub const PERSONAL_KEYS: [&str; 14] = [
    "name",
    "first_name",
    "last_name",
    "given_name",
    "family_name",
    "surname",
    "full_name",
    "student_name",
    "email",
    "birth_date",
    "date_of_birth",
    "address",
    "phone",
    "matriculation_number",
];

/// Every object key anywhere in `v`, with its path.
pub fn keys(v: &Value, path: &str, out: &mut Vec<String>) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                out.push(format!("{path}.{k}"));
                keys(child, &format!("{path}.{k}"), out);
            }
        }
        Value::Array(items) => {
            for child in items {
                keys(child, &format!("{path}[]"), out);
            }
        }
        _ => {}
    }
}

/// Paths of personal-name keys in a JSON body. Organizations may carry a
/// display name; nothing tied to a student may.
pub fn personal_fields(body: &str) -> Vec<String> {
    let v: Value = serde_json::from_str(body).expect("JSON body");
    let mut all = Vec::new();
    keys(&v, "$", &mut all);
    all.into_iter()
        .filter(|p| {
            let key = p.rsplit('.').next().unwrap();
            PERSONAL_KEYS.contains(&key) || (key.contains("name") && key != "display_name" && key != "degree_name")
        })
        .collect()
}

/// GET paths covering every endpoint of a populated chain.
pub fn endpoint_paths(p: &Populated) -> Vec<String> {
    let mut paths = vec!["/head".to_string(), "/orgs".to_string(), "/contracts".to_string()];
    for h in 0..p.store.len() as u64 {
        paths.push(format!("/blocks/{}", p.store.hash_at(h).unwrap()));
    }
    paths.push(format!("/students/{}/transcript", p.student));
    paths.push(format!("/students/{}/progress/{}", p.student, p.degree));
    paths
}

/// Random requests over every method and a mix of real, malformed and
/// unknown paths. Returns how many of each status came back.
pub fn request_battery(addr: SocketAddr, p: &Populated, seed: u64, count: usize) -> std::collections::BTreeMap<u16, usize> {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let methods = ["GET", "POST", "PUT", "DELETE", "PATCH", "HEAD", "OPTIONS"];
    let mut paths = endpoint_paths(p);
    paths.extend(["/", "/blocks/", "/students//transcript", "/head/extra", "/orgs?x=1"].map(String::from));
    let alphabet: Vec<char> = "abcdef0123456789-/_.~%".chars().collect();
    let mut statuses = std::collections::BTreeMap::new();
    for _ in 0..count {
        let method = *methods.choose(&mut rng).unwrap();
        let path = match rng.gen_range(0..3) {
            0 => paths.choose(&mut rng).unwrap().clone(),
            1 => {
                let mut s: Vec<char> = paths.choose(&mut rng).unwrap().chars().collect();
                let i = rng.gen_range(1..s.len().max(2));
                s.insert(i.min(s.len()), *alphabet.choose(&mut rng).unwrap());
                s.into_iter().collect()
            }
            _ => {
                let len = rng.gen_range(0..40);
                let tail: String = (0..len).map(|_| *alphabet.choose(&mut rng).unwrap()).collect();
                format!("/{tail}")
            }
        };
        let (status, _) = request(addr, method, &path);
        *statuses.entry(status).or_insert(0) += 1;
    }
    statuses
}
