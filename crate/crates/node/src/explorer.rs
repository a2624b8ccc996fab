//! Read-only JSON views of a chain snapshot.
//!
//! Routing is a pure function of (snapshot, method, path) so the HTTP
//! layer stays a thin adapter and the same bodies back the CLI queries.

use std::sync::{Arc, RwLock};

use serde::Serialize;

use studchain_core::contract::ContractAst;
use studchain_core::engine::{progress_report, ProgressError};
use studchain_core::records::effective_transcript;
use studchain_core::store::OrgEntry;
use studchain_core::{Block, ChainStore, Digest, OrgId, Payload, StudentId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub body: String,
}

#[derive(Serialize)]
pub struct HeadView {
    pub height: u64,
    pub head: Digest,
    pub replica_digest: Digest,
}

#[derive(Serialize)]
pub struct BlockView<'a> {
    pub hash: Digest,
    #[serde(flatten)]
    pub block: &'a Block,
}

#[derive(Serialize)]
pub struct ContractView<'a> {
    pub block: Digest,
    pub height: u64,
    pub publisher: OrgId,
    pub kind: &'static str,
    pub source: &'a str,
}

#[derive(Serialize)]
struct ErrorView<'a> {
    error: &'a str,
}

fn json<T: Serialize + ?Sized>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("views serialize");
    s.push('\n');
    s
}

fn ok<T: Serialize + ?Sized>(v: &T) -> Response {
    Response {
        status: 200,
        body: json(v),
    }
}

fn error(status: u16, name: &str) -> Response {
    Response {
        status,
        body: json(&ErrorView { error: name }),
    }
}

pub fn head_view(store: &ChainStore) -> Option<HeadView> {
    Some(HeadView {
        height: store.head_height()?,
        head: store.head_hash(),
        replica_digest: store.replica_digest(),
    })
}

pub fn org_views(store: &ChainStore) -> Vec<&OrgEntry> {
    let mut orgs: Vec<&OrgEntry> = store.state().orgs.values().collect();
    orgs.sort_by_key(|o| o.registered_at);
    orgs
}

pub fn contract_views(store: &ChainStore) -> Vec<ContractView<'_>> {
    store
        .state()
        .contracts
        .iter()
        .map(|c| {
            let source = match &store.block(c.height).expect("contract block").payload {
                Payload::Contract(p) => p.source.as_str(),
                _ => unreachable!("contracts come from contract payloads"),
            };
            ContractView {
                block: c.block,
                height: c.height,
                publisher: c.publisher,
                kind: match c.ast {
                    ContractAst::Recognition(_) => "recognition",
                    ContractAst::Degree(_) => "degree",
                    ContractAst::Sanction(_) => "sanction",
                },
                source,
            }
        })
        .collect()
}

/// Transcript body; an unknown student gets an empty transcript.
pub fn transcript_json(store: &ChainStore, student: &StudentId) -> String {
    json(&effective_transcript(store, student))
}

pub fn progress_json(store: &ChainStore, student: &StudentId, contract: &Digest) -> Result<String, ProgressError> {
    progress_report(store, student, contract).map(|r| json(&r))
}

/// Answers one request against `store`. Only GET is served.
pub fn respond(store: &ChainStore, method: &str, path: &str) -> Response {
    if method != "GET" {
        return error(405, "MethodNotAllowed");
    }
    let segments: Vec<&str> = path.trim_start_matches('/').split('/').collect();
    match segments.as_slice() {
        ["head"] => match head_view(store) {
            Some(v) => ok(&v),
            None => error(404, "EmptyChain"),
        },
        ["blocks", hash] => {
            let Ok(hash) = hash.parse::<Digest>() else {
                return error(400, "BadHash");
            };
            match store.block_by_hash(&hash) {
                Some(block) => ok(&BlockView { hash, block }),
                None => error(404, "UnknownBlock"),
            }
        }
        ["orgs"] => ok(&org_views(store)),
        ["contracts"] => ok(&contract_views(store)),
        ["students", student, "transcript"] => match student.parse::<StudentId>() {
            Ok(s) => Response {
                status: 200,
                body: transcript_json(store, &s),
            },
            Err(_) => error(400, "BadStudentId"),
        },
        ["students", student, "progress", contract] => {
            let Ok(s) = student.parse::<StudentId>() else {
                return error(400, "BadStudentId");
            };
            let Ok(c) = contract.parse::<Digest>() else {
                return error(400, "BadHash");
            };
            match progress_json(store, &s, &c) {
                Ok(body) => Response { status: 200, body },
                Err(e) => error(404, e.name()),
            }
        }
        _ => error(404, "NotFound"),
    }
}

/// Shared explorer state: an immutable chain snapshot that a reload
/// replaces in one step while readers keep whatever they already hold.
pub struct Explorer {
    snapshot: RwLock<Arc<ChainStore>>,
}

impl Explorer {
    pub fn new(store: ChainStore) -> Self {
        Explorer {
            snapshot: RwLock::new(Arc::new(store)),
        }
    }

    pub fn snapshot(&self) -> Arc<ChainStore> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn replace(&self, store: ChainStore) {
        *self.snapshot.write().expect("snapshot lock") = Arc::new(store);
    }

    pub fn handle(&self, method: &str, path: &str) -> Response {
        respond(&self.snapshot(), method, path)
    }
}
