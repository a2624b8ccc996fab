use std::collections::BTreeMap;

use studchain_core::contract::{self, ContractAst};
use studchain_core::engine::on_block_appended;
use studchain_core::payload::{ContractPayload, OrgRegistration};
use studchain_core::records::{AssessmentResult, SourceKind};
use studchain_core::{
    AchievementRecord, AppendError, Block, ChainStore, Decimal, DifficultySchedule, Digest, OrgId, OrgKey, Payload,
    StudentId,
};

/// Two leading zero bits everywhere: mining costs a handful of hashes.
pub fn easy_schedule() -> DifficultySchedule {
    DifficultySchedule::new(2, 1000, 2).expect("valid schedule")
}

/// Deterministic key for a named organization.
pub fn org_key(name: &str) -> OrgKey {
    OrgKey::from_seed(*Digest::of(name.as_bytes()).as_bytes())
}

/// Deterministic student id number `n`.
pub fn student(n: u32) -> StudentId {
    let mut bytes = [0u8; 16];
    bytes[12..].copy_from_slice(&n.to_be_bytes());
    bytes[6] = 0x40;
    bytes[8] = 0x80;
    StudentId::from_bytes(bytes).expect("v4 layout")
}

pub fn achievement(
    student: StudentId,
    issuer: OrgId,
    course_id: &str,
    credits: &str,
    topics: &[&str],
    passed: bool,
) -> AchievementRecord {
    AchievementRecord {
        student,
        course_id: course_id.into(),
        title: format!("Course {course_id}"),
        credit_points: credits.parse::<Decimal>().expect("decimal literal"),
        workload_hours: 30,
        issuer,
        topics: topics.iter().map(|t| t.to_string()).collect(),
        result: if passed {
            AssessmentResult::Passed
        } else {
            AssessmentResult::Failed
        },
        grade: None,
        assessment_tick: 1,
        source_kind: SourceKind::UniversityExam,
    }
}

/// A single chain with named organizations, mining and appending blocks
/// and optionally publishing every fulfillment the contracts produce.
pub struct World {
    pub store: ChainStore,
    keys: BTreeMap<String, OrgKey>,
    by_id: BTreeMap<OrgId, String>,
    tick: u64,
}

impl World {
    /// A chain whose genesis registers the org `root`.
    pub fn new(schedule: DifficultySchedule) -> Self {
        let mut world = World {
            store: ChainStore::new(schedule),
            keys: BTreeMap::new(),
            by_id: BTreeMap::new(),
            tick: 0,
        };
        world.register("root");
        world
    }

    pub fn with_orgs(names: &[&str]) -> Self {
        let mut world = World::new(easy_schedule());
        for name in names {
            world.register(name);
        }
        world
    }

    pub fn register(&mut self, name: &str) -> OrgId {
        let key = org_key(name);
        let payload = Payload::OrgRegistration(OrgRegistration {
            display_name: name.into(),
            public_key: key.public_key(),
        });
        self.keys.insert(name.into(), key.clone());
        self.by_id.insert(key.org_id(), name.into());
        self.submit(name, payload).expect("registration accepted");
        key.org_id()
    }

    pub fn key(&self, name: &str) -> &OrgKey {
        &self.keys[name]
    }

    pub fn org(&self, name: &str) -> OrgId {
        self.keys[name].org_id()
    }

    pub fn name_of(&self, org: &OrgId) -> Option<&str> {
        self.by_id.get(org).map(String::as_str)
    }

    /// Mines `payload` as `name` without any prior checks and appends it.
    pub fn mine(&mut self, name: &str, payload: Payload) -> Block {
        self.tick += 1;
        self.store
            .mine_next(&self.keys[name], payload, self.tick)
            .expect("nonce found")
    }

    /// Mines and appends; does not publish fulfillments.
    pub fn submit(&mut self, name: &str, payload: Payload) -> Result<Digest, AppendError> {
        let block = self.mine(name, payload);
        let hash = block.hash();
        self.store.append(block)?;
        Ok(hash)
    }

    /// Mines and appends, then publishes all fulfillments it triggers
    /// (transitively), each signed by the contract's publisher.
    pub fn submit_settled(&mut self, name: &str, payload: Payload) -> Result<Digest, AppendError> {
        let hash = self.submit(name, payload)?;
        self.settle(hash);
        Ok(hash)
    }

    /// Publishes fulfillments triggered by the block `from` and by every
    /// fulfillment that follows. Returns the fulfillment block hashes.
    pub fn settle(&mut self, from: Digest) -> Vec<Digest> {
        let mut queue = vec![from];
        let mut published = Vec::new();
        while let Some(hash) = queue.pop() {
            let block = self.store.block_by_hash(&hash).expect("appended").clone();
            for payload in on_block_appended(&self.store, &block) {
                let Payload::Fulfillment(f) = &payload else { unreachable!() };
                let publisher = f.publisher(&self.store).expect("contract publisher");
                let name = self.by_id[&publisher].clone();
                // A fulfillment mined earlier in this loop may have consumed
                // the same (contract, subject) pair.
                if self.store.check_payload(&payload, &publisher).is_err() {
                    continue;
                }
                let h = self.submit(&name, payload).expect("fulfillment accepted");
                published.push(h);
                queue.insert(0, h);
            }
        }
        published
    }

    /// Publishes a contract given in any valid source form.
    pub fn contract(&mut self, name: &str, source: &str) -> Result<Digest, AppendError> {
        let canonical = contract::print(&contract::parse(source).expect("contract parses"));
        self.submit_settled(name, Payload::Contract(ContractPayload { source: canonical }))
    }

    pub fn resolved_contract(&self, block: &Digest) -> ContractAst<OrgId> {
        self.store.state().contract(block).expect("contract block").ast.clone()
    }
}

/// A transcript holding `records` as entries, with synthetic origins.
pub fn transcript_of(student: StudentId, records: &[AchievementRecord]) -> studchain_core::EffectiveTranscript {
    studchain_core::EffectiveTranscript {
        student,
        entries: records
            .iter()
            .enumerate()
            .map(|(i, a)| studchain_core::records::TranscriptEntry {
                achievement: a.clone(),
                origin_block_hash: Digest::of(&(i as u64).to_be_bytes()),
                correction_trail: vec![],
            })
            .collect(),
    }
}
