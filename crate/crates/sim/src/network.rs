use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use studchain_core::block::HEADER_LEN;
use studchain_core::consensus::{mine_block, verify_pow};
use studchain_core::contract;
use studchain_core::engine::{on_block_appended, progress_report};
use studchain_core::payload::{ContractPayload, OrgRegistration};
use studchain_core::records::{
    effective_transcript, transcript_text, AssessmentResult, CorrectionAction, SourceKind,
};
use studchain_core::{
    fork_choice, sign_block, AchievementRecord, Block, ChainStore, CorrectionRecord, Decimal, DifficultySchedule, Digest,
    OrgId, OrgKey, Payload,
};

use crate::light::{light_client_sync, LightClientState, LightSyncError, PayloadCheck};
use crate::report::{Detection, PeerHead, QueryResult, SimReport, SubmissionOutcome};
use crate::scenario::{
    Action, BlockRef, CorrectionChange, Injection, Query, ScenarioError, SimScenario, Submission,
};

/// Display name of the organization registered in every genesis block.
pub const ROOT_ORG: &str = "root";

/// Signing key of organization `name` in a simulation seeded with `seed`.
pub fn org_key(seed: u64, name: &str) -> OrgKey {
    let d = Digest::of_parts(&[b"sim-org", &seed.to_be_bytes(), name.as_bytes()]);
    OrgKey::from_seed(*d.as_bytes())
}

/// The genesis block shared by all peers of a simulation.
pub fn genesis(seed: u64, schedule: DifficultySchedule) -> Block {
    let key = org_key(seed, ROOT_ORG);
    let payload = Payload::OrgRegistration(OrgRegistration {
        display_name: ROOT_ORG.into(),
        public_key: key.public_key(),
    });
    ChainStore::new(schedule)
        .mine_next(&key, payload, 0)
        .expect("genesis nonce")
}

fn extend_digest(prev: &Digest, record: &[u8]) -> Digest {
    Digest::of_parts(&[prev.as_bytes(), record])
}

/// A peer holding the whole chain: the validated store plus the raw
/// replica bytes it serves to others. The two agree unless the replica
/// was tampered with.
#[derive(Debug, Clone)]
pub struct FullPeer {
    store: ChainStore,
    replica: Arc<Vec<Vec<u8>>>,
    replica_digest: Digest,
    offered: BTreeMap<usize, Digest>,
    distrusted: BTreeSet<usize>,
}

impl FullPeer {
    fn new(store: ChainStore) -> Self {
        let replica = store.encoded_blocks();
        FullPeer {
            replica_digest: store.replica_digest(),
            replica: Arc::new(replica),
            store,
            offered: BTreeMap::new(),
            distrusted: BTreeSet::new(),
        }
    }

    pub fn store(&self) -> &ChainStore {
        &self.store
    }

    pub fn replica(&self) -> &[Vec<u8>] {
        &self.replica
    }

    pub fn replica_digest(&self) -> Digest {
        self.replica_digest
    }

    pub fn distrusts(&self, peer: usize) -> bool {
        self.distrusted.contains(&peer)
    }

    /// Header bytes of every block, as served to light clients.
    pub fn served_headers(&self) -> Vec<Vec<u8>> {
        self.replica
            .iter()
            .map(|r| r[..r.len().min(HEADER_LEN)].to_vec())
            .collect()
    }

    fn append_local(&mut self, block: Block) -> Result<Digest, studchain_core::AppendError> {
        let record = block.encode();
        let hash = block.hash();
        self.store.append(block)?;
        self.replica_digest = extend_digest(&self.replica_digest, &record);
        Arc::make_mut(&mut self.replica).push(record);
        Ok(hash)
    }

    fn tamper(&mut self, height: u64, offset: usize) -> bool {
        let replica = Arc::make_mut(&mut self.replica);
        let Some(byte) = replica.get_mut(height as usize).and_then(|r| r.get_mut(offset)) else {
            return false;
        };
        *byte ^= 0xff;
        self.replica_digest = studchain_core::store::replica_digest_of(replica);
        true
    }
}

#[derive(Debug, Clone)]
pub enum PeerNode {
    Full(Box<FullPeer>),
    Light(LightClientState),
}

#[derive(Debug, Clone)]
struct Offer {
    from: usize,
    to: usize,
    arrive: u64,
    records: Arc<Vec<Vec<u8>>>,
    digest: Digest,
}

/// Tick-driven network state. Every step is a deterministic function of
/// the scenario, the seed and the schedule.
pub struct Simulation {
    scenario: SimScenario,
    schedule: DifficultySchedule,
    peers: Vec<PeerNode>,
    group_of: Vec<usize>,
    keys: BTreeMap<String, OrgKey>,
    names: BTreeMap<OrgId, String>,
    in_flight: VecDeque<Offer>,
    light_seen: BTreeMap<usize, Digest>,
    tick: u64,
    next_event: usize,
    submitted: Vec<Option<Digest>>,
    mined: Vec<Block>,
    last_head_change: u64,
    heads: Vec<Digest>,
    detections: Vec<Detection>,
    submissions: Vec<SubmissionOutcome>,
    queries: Vec<QueryResult>,
}

/// Runs `scenario` to completion.
pub fn run(scenario: &SimScenario, schedule: DifficultySchedule) -> Result<SimReport, ScenarioError> {
    let mut sim = Simulation::new(scenario.clone(), schedule)?;
    sim.run_to_end()?;
    Ok(sim.report())
}

impl Simulation {
    pub fn new(scenario: SimScenario, schedule: DifficultySchedule) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let genesis = genesis(scenario.seed, schedule);
        let mut store = ChainStore::new(schedule);
        store.append(genesis.clone()).expect("genesis valid");
        let trusted = (0..scenario.peer_count)
            .find(|p| !scenario.is_light(*p))
            .expect("validated: one full peer");
        let peers = (0..scenario.peer_count)
            .map(|p| {
                if scenario.is_light(p) {
                    PeerNode::Light(LightClientState::new(genesis.header.clone(), trusted))
                } else {
                    PeerNode::Full(Box::new(FullPeer::new(store.clone())))
                }
            })
            .collect();
        let mut sim = Simulation {
            group_of: vec![0; scenario.peer_count],
            heads: vec![genesis.hash(); scenario.peer_count],
            scenario,
            schedule,
            peers,
            keys: BTreeMap::new(),
            names: BTreeMap::new(),
            in_flight: VecDeque::new(),
            light_seen: BTreeMap::new(),
            tick: 0,
            next_event: 0,
            submitted: Vec::new(),
            mined: vec![genesis],
            last_head_change: 0,
            detections: Vec::new(),
            submissions: Vec::new(),
            queries: Vec::new(),
        };
        sim.key(ROOT_ORG);
        Ok(sim)
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn peers(&self) -> &[PeerNode] {
        &self.peers
    }

    pub fn full_peer(&self, peer: usize) -> Option<&FullPeer> {
        match self.peers.get(peer)? {
            PeerNode::Full(f) => Some(f),
            PeerNode::Light(_) => None,
        }
    }

    pub fn light_client(&self, peer: usize) -> Option<&LightClientState> {
        match self.peers.get(peer)? {
            PeerNode::Light(l) => Some(l),
            PeerNode::Full(_) => None,
        }
    }

    /// Every block some peer mined and appended locally, genesis first.
    pub fn mined_blocks(&self) -> &[Block] {
        &self.mined
    }

    /// Hash of the block produced by the n-th submission, if accepted.
    pub fn submitted(&self, n: usize) -> Option<Digest> {
        self.submitted.get(n).copied().flatten()
    }

    pub fn key(&mut self, name: &str) -> OrgKey {
        let seed = self.scenario.seed;
        let key = self
            .keys
            .entry(name.to_string())
            .or_insert_with(|| org_key(seed, name))
            .clone();
        self.names.insert(key.org_id(), name.to_string());
        key
    }

    pub fn finished(&self) -> bool {
        self.tick > self.scenario.max_ticks
            || (self.tick > 0 && self.in_flight.is_empty() && self.next_event == self.scenario.events.len())
    }

    pub fn run_to_end(&mut self) -> Result<(), ScenarioError> {
        while !self.finished() {
            self.step()?;
        }
        Ok(())
    }

    /// One tick: deliver offers, apply this tick's events, sync light
    /// clients, then offer changed heads to reachable neighbors.
    pub fn step(&mut self) -> Result<(), ScenarioError> {
        while self.in_flight.front().is_some_and(|o| o.arrive <= self.tick) {
            let offer = self.in_flight.pop_front().expect("front exists");
            if self.reachable(offer.from, offer.to) {
                self.receive(offer);
            }
        }
        while let Some(event) = self.scenario.events.get(self.next_event) {
            if event.tick != self.tick {
                break;
            }
            let (index, event) = (self.next_event, event.clone());
            self.next_event += 1;
            self.apply(index, event.actor, event.action)?;
        }
        self.sync_light_clients();
        self.gossip_step();
        self.note_heads();
        self.tick += 1;
        Ok(())
    }

    fn reachable(&self, a: usize, b: usize) -> bool {
        self.group_of[a] == self.group_of[b]
    }

    fn full_mut(&mut self, peer: usize) -> &mut FullPeer {
        match &mut self.peers[peer] {
            PeerNode::Full(f) => f,
            PeerNode::Light(_) => unreachable!("validated: full peer"),
        }
    }

    /// Sends each full peer's replica to every reachable full neighbor
    /// that has not yet been offered its current digest.
    pub fn gossip_step(&mut self) {
        let arrive = self.tick + self.scenario.latency;
        for from in 0..self.peers.len() {
            let PeerNode::Full(sender) = &self.peers[from] else {
                continue;
            };
            let (records, digest) = (sender.replica.clone(), sender.replica_digest);
            let mut sent = Vec::new();
            for to in 0..self.peers.len() {
                if to == from || !self.reachable(from, to) || !matches!(self.peers[to], PeerNode::Full(_)) {
                    continue;
                }
                if sender.offered.get(&to) == Some(&digest) {
                    continue;
                }
                sent.push(to);
                self.in_flight.push_back(Offer {
                    from,
                    to,
                    arrive,
                    records: records.clone(),
                    digest,
                });
            }
            let sender = self.full_mut(from);
            for to in sent {
                sender.offered.insert(to, digest);
            }
        }
    }

    fn flag(&mut self, detector: usize, offender: usize, height: u64, reason: &str) {
        self.detections.push(Detection {
            tick: self.tick,
            detector,
            offender,
            height,
            reason: reason.into(),
        });
    }

    /// Pulls the blocks of `offer` the receiver lacks, validates them on a
    /// copy of its chain and switches if fork choice prefers the result.
    /// The first invalid block ends the pull and marks the sender.
    fn receive(&mut self, offer: Offer) {
        let peer = self.full_mut(offer.to);
        if peer.distrusted.contains(&offer.from) || peer.replica_digest == offer.digest {
            return;
        }
        let common = peer
            .replica
            .iter()
            .zip(offer.records.iter())
            .take_while(|(a, b)| a == b)
            .count();
        if common == offer.records.len() {
            return;
        }
        let mut candidate = if common == peer.store.len() {
            peer.store.clone()
        } else {
            peer.store.truncated(common)
        };
        for (k, record) in offer.records[common..].iter().enumerate() {
            let height = (common + k) as u64;
            let result = Block::decode(record)
                .map_err(|_| "Undecodable")
                .and_then(|b| candidate.append(b).map_err(|e| e.name()));
            if let Err(reason) = result {
                peer.distrusted.insert(offer.from);
                self.flag(offer.to, offer.from, height, reason);
                return;
            }
        }
        if fork_choice(&[&peer.store, &candidate]) == Ok(1) {
            peer.store = candidate;
            peer.replica = offer.records;
            peer.replica_digest = offer.digest;
        }
    }

    fn sync_light_clients(&mut self) {
        for l in 0..self.peers.len() {
            let PeerNode::Light(client) = &self.peers[l] else {
                continue;
            };
            let trusted = client.trusted_peer;
            if !self.reachable(l, trusted) {
                continue;
            }
            let PeerNode::Full(full) = &self.peers[trusted] else {
                continue;
            };
            if self.light_seen.get(&l) == Some(&full.replica_digest) {
                continue;
            }
            self.light_seen.insert(l, full.replica_digest);
            match light_client_sync(client, &full.served_headers(), &self.schedule) {
                Ok(next) => self.peers[l] = PeerNode::Light(next),
                Err(LightSyncError::HeaderChainInvalid(h)) => self.flag(l, trusted, h, "HeaderChainInvalid"),
            }
        }
    }

    fn note_heads(&mut self) {
        for (p, node) in self.peers.iter().enumerate() {
            if let PeerNode::Full(f) = node {
                let head = f.store.head_hash();
                if self.heads[p] != head {
                    self.heads[p] = head;
                    self.last_head_change = self.tick;
                }
            }
        }
    }

    fn resolve(&self, index: usize, r: BlockRef) -> Result<Digest, ScenarioError> {
        match r {
            BlockRef::Hash(h) => Ok(h),
            BlockRef::Submission(n) => self.submitted(n).ok_or_else(|| ScenarioError::Invalid {
                index,
                message: format!("@{n} was rejected and names no block"),
            }),
        }
    }

    /// Payload for `sub` as seen from `peer`'s chain, or the name of the
    /// reason it cannot be built.
    fn payload(&mut self, index: usize, peer: usize, sub: &Submission) -> Result<Result<Payload, String>, ScenarioError> {
        Ok(Ok(match sub {
            Submission::Register { name } => Payload::OrgRegistration(OrgRegistration {
                display_name: name.clone(),
                public_key: self.key(name).public_key(),
            }),
            Submission::Achievement {
                org,
                student,
                course,
                credits,
                topics,
                passed,
            } => Payload::Achievement(AchievementRecord {
                student: *student,
                course_id: course.clone(),
                title: course.clone(),
                credit_points: *credits,
                workload_hours: (credits.units() * 30 / Decimal::SCALE) as u32,
                issuer: self.key(org).org_id(),
                topics: topics.clone(),
                result: if *passed {
                    AssessmentResult::Passed
                } else {
                    AssessmentResult::Failed
                },
                grade: None,
                assessment_tick: self.tick,
                source_kind: SourceKind::UniversityExam,
            }),
            Submission::Correction { target, change, .. } => {
                let target = self.resolve(index, *target)?;
                let action = match change {
                    CorrectionChange::Invalidate => CorrectionAction::Invalidate,
                    CorrectionChange::Credits(c) => {
                        let PeerNode::Full(f) = &self.peers[peer] else { unreachable!() };
                        let Some(state) = f.store.state().achievements.get(&target) else {
                            return Ok(Err("UnknownTarget".into()));
                        };
                        let mut record = state.current.clone();
                        record.credit_points = *c;
                        CorrectionAction::Replace(record)
                    }
                };
                Payload::Correction(CorrectionRecord {
                    target_block_hash: target,
                    action,
                    reason: "scenario correction".into(),
                })
            }
            Submission::Contract { source, .. } => {
                let source = match contract::parse(source) {
                    Ok(ast) => contract::print(&ast),
                    Err(_) => source.clone(),
                };
                Payload::Contract(ContractPayload { source })
            }
        }))
    }

    fn apply(&mut self, index: usize, actor: usize, action: Action) -> Result<(), ScenarioError> {
        match action {
            Action::Submit(sub) => {
                let result = match self.payload(index, actor, &sub)? {
                    Ok(payload) => self.mine_and_settle(actor, sub.signer(), payload),
                    Err(e) => Err(e),
                };
                self.submitted.push(result.as_ref().ok().copied());
                self.submissions.push(SubmissionOutcome {
                    index: self.submitted.len() - 1,
                    tick: self.tick,
                    peer: actor,
                    result,
                });
            }
            Action::Inject(injection) => self.inject(index, actor, injection)?,
            Action::Partition(groups) => {
                for (g, members) in groups.iter().enumerate() {
                    for &p in members {
                        self.group_of[p] = g;
                    }
                }
                self.forget_offers();
            }
            Action::Heal => {
                self.group_of.iter_mut().for_each(|g| *g = 0);
                self.forget_offers();
            }
            Action::Tamper { height, offset } => {
                if !self.full_mut(actor).tamper(height, offset) {
                    return Err(ScenarioError::Invalid {
                        index,
                        message: format!("no byte {offset} in block {height} of peer {actor}"),
                    });
                }
            }
            Action::Query(q) => {
                let answer = self.answer(index, actor, &q)?;
                self.queries.push(QueryResult {
                    tick: self.tick,
                    peer: actor,
                    query: q.to_string(),
                    answer,
                });
            }
        }
        Ok(())
    }

    fn forget_offers(&mut self) {
        for node in &mut self.peers {
            if let PeerNode::Full(f) = node {
                f.offered.clear();
            }
        }
    }

    /// Mines `payload` signed by `signer` onto `peer`'s chain, then
    /// publishes every fulfillment it triggers, transitively.
    fn mine_and_settle(&mut self, peer: usize, signer: &str, payload: Payload) -> Result<Digest, String> {
        let key = self.key(signer);
        let hash = self.mine_local(peer, &key, payload).map_err(String::from)?;
        let mut queue = VecDeque::from([hash]);
        while let Some(h) = queue.pop_front() {
            let store = &self.full_mut(peer).store;
            let block = store.block_by_hash(&h).expect("appended").clone();
            for payload in on_block_appended(store, &block) {
                let store = &self.full_mut(peer).store;
                let Payload::Fulfillment(f) = &payload else { continue };
                let Some(publisher) = f.publisher(store) else { continue };
                if store.check_payload(&payload, &publisher).is_err() {
                    continue;
                }
                let Some(name) = self.names.get(&publisher).cloned() else { continue };
                let key = self.key(&name);
                if let Ok(fh) = self.mine_local(peer, &key, payload) {
                    queue.push_back(fh);
                }
            }
        }
        Ok(hash)
    }

    fn mine_local(&mut self, peer: usize, key: &OrgKey, payload: Payload) -> Result<Digest, &'static str> {
        let tick = self.tick;
        let f = self.full_mut(peer);
        let block = f.store.mine_next(key, payload, tick).map_err(|_| "NonceExhausted")?;
        f.append_local(block.clone()).map_err(|e| e.name())?;
        let hash = block.hash();
        self.mined.push(block);
        Ok(hash)
    }

    /// Offers the actor's replica extended by one invalid block, without
    /// keeping that block locally.
    fn inject(&mut self, index: usize, actor: usize, injection: Injection) -> Result<(), ScenarioError> {
        let tick = self.tick;
        let intruder = format!("intruder-{actor}-{tick}");
        let key = self.key(&intruder);
        let registration = Payload::OrgRegistration(OrgRegistration {
            display_name: intruder,
            public_key: key.public_key(),
        });
        let store = self.full_mut(actor).store.clone();
        let mine = |key: &OrgKey, payload| store.mine_next(key, payload, tick).expect("nonce found");
        let block = match injection {
            Injection::BadPow => {
                let mut b = mine(&key, registration);
                while verify_pow(&self.schedule, &b.header) {
                    b.header.nonce = b.header.nonce.wrapping_add(1);
                }
                b.signature = sign_block(&b.header, &key);
                b
            }
            Injection::BadSignature => {
                let mut b = mine(&key, registration);
                b.signature[0] ^= 0x01;
                b
            }
            Injection::BadLink => mine_block(
                &self.schedule,
                store.next_height(),
                Digest::of(b"unlinked"),
                registration,
                &key,
                tick,
            )
            .expect("nonce found"),
            Injection::Unchecked(sub) => match self.payload(index, actor, &sub)? {
                Ok(payload) => mine(&self.key(sub.signer()), payload),
                Err(_) => return Ok(()),
            },
        };
        let sender = self.full_mut(actor);
        let mut records = (*sender.replica).clone();
        let digest = extend_digest(&sender.replica_digest, &block.encode());
        records.push(block.encode());
        let records = Arc::new(records);
        for to in 0..self.peers.len() {
            if to != actor && self.reachable(actor, to) && matches!(self.peers[to], PeerNode::Full(_)) {
                self.in_flight.push_back(Offer {
                    from: actor,
                    to,
                    arrive: tick + self.scenario.latency,
                    records: records.clone(),
                    digest,
                });
            }
        }
        Ok(())
    }

    fn answer(&self, index: usize, peer: usize, q: &Query) -> Result<String, ScenarioError> {
        let full = match &self.peers[peer] {
            PeerNode::Full(f) => f,
            PeerNode::Light(client) => {
                return Ok(match q {
                    Query::Head => format!("height {} head {}", client.head_height(), client.head_hash()),
                    Query::Payload(h) => {
                        let trusted = client.trusted_peer;
                        let record = match &self.peers[trusted] {
                            PeerNode::Full(f) if self.reachable(peer, trusted) => f.replica.get(*h as usize),
                            _ => return Ok("unreachable".into()),
                        };
                        match record.map(|r| client.check_block_bytes(*h, r)) {
                            Some(PayloadCheck::Accepted) => "accepted".into(),
                            Some(PayloadCheck::Rejected) => "rejected".into(),
                            Some(PayloadCheck::Unknown) | None => "unknown".into(),
                        }
                    }
                    _ => unreachable!("validated: light clients query heads and payloads"),
                });
            }
        };
        let store = &full.store;
        Ok(match q {
            Query::Head => format!(
                "height {} head {}",
                store.head_height().unwrap_or(0),
                store.head_hash()
            ),
            Query::Transcript(s) => {
                let text = transcript_text(&effective_transcript(store, s));
                if text.is_empty() {
                    "(empty)".into()
                } else {
                    text
                }
            }
            Query::Progress(s, c) => {
                let c = self.resolve(index, *c)?;
                match progress_report(store, s, &c) {
                    Ok(r) => serde_json::to_string(&r).expect("serializable"),
                    Err(e) => e.name().into(),
                }
            }
            Query::Payload(h) => match store.block(*h) {
                Some(b) => format!("accepted {}", b.payload.kind_name()),
                None => "unknown".into(),
            },
        })
    }

    pub fn report(&self) -> SimReport {
        let heads: Vec<PeerHead> = self
            .peers
            .iter()
            .enumerate()
            .map(|(peer, node)| match node {
                PeerNode::Full(f) => PeerHead {
                    peer,
                    light: false,
                    height: f.store.head_height().unwrap_or(0),
                    head: f.store.head_hash(),
                },
                PeerNode::Light(l) => PeerHead {
                    peer,
                    light: true,
                    height: l.head_height(),
                    head: l.head_hash(),
                },
            })
            .collect();
        let stores: Vec<&ChainStore> = self
            .peers
            .iter()
            .filter_map(|n| match n {
                PeerNode::Full(f) => Some(&f.store),
                PeerNode::Light(_) => None,
            })
            .collect();
        let first = stores[0].head_hash();
        let converged = stores.iter().all(|s| s.head_hash() == first);
        let best = stores[fork_choice(&stores).expect("one full peer")];
        SimReport {
            seed: self.scenario.seed,
            ticks: self.tick.saturating_sub(1),
            heads,
            convergence_tick: converged.then_some(self.last_head_change),
            detected_tampers: self.detections.clone(),
            submissions: self.submissions.clone(),
            fulfillment_blocks: best
                .blocks()
                .iter()
                .filter(|b| matches!(b.payload, Payload::Fulfillment(_)))
                .map(Block::hash)
                .collect(),
            query_results: self.queries.clone(),
        }
    }
}
