//! Line-oriented scenario files.
//!
//! ```text
//! PEERS 5 LIGHT 4 SEED 7 LATENCY 1 MAXTICKS 60
//! # comments and blank lines are ignored
//! TICK 1 PEER 0 SUBMIT REGISTER home-u
//! TICK 2 PEER 0 SUBMIT ACHIEVEMENT home-u <uuid> MA-101 6.0 math,analysis PASSED
//! TICK 3 PEER 1 SUBMIT CORRECTION home-u @1 INVALIDATE
//! TICK 4 PEER 0 PARTITION 0,1|2,3,4
//! TICK 9 PEER 0 HEAL
//! TICK 12 PEER 3 TAMPER 2 40
//! TICK 13 PEER 2 INJECT BADPOW
//! TICK 20 PEER 0 QUERY TRANSCRIPT <uuid>
//! ```
//!
//! `@n` names the block produced by the n-th SUBMIT event (counting from
//! zero); a 64-digit hex digest may be given instead.

use std::collections::BTreeSet;
use std::fmt;

use studchain_core::{Decimal, Digest, StudentId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimScenario {
    pub peer_count: usize,
    pub light_clients: BTreeSet<usize>,
    pub seed: u64,
    pub latency: u64,
    pub max_ticks: u64,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub tick: u64,
    pub actor: usize,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Submit(Submission),
    Inject(Injection),
    Partition(Vec<Vec<usize>>),
    Heal,
    Tamper { height: u64, offset: usize },
    Query(Query),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Submission {
    Register {
        name: String,
    },
    Achievement {
        org: String,
        student: StudentId,
        course: String,
        credits: Decimal,
        topics: Vec<String>,
        passed: bool,
    },
    Correction {
        org: String,
        target: BlockRef,
        change: CorrectionChange,
    },
    Contract {
        org: String,
        source: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionChange {
    Invalidate,
    Credits(Decimal),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockRef {
    Submission(usize),
    Hash(Digest),
}

/// Invalid data a malicious peer offers to its neighbors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Injection {
    BadPow,
    BadSignature,
    BadLink,
    /// A correctly sealed block whose payload skipped every local check.
    Unchecked(Submission),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    Head,
    Transcript(StudentId),
    Progress(StudentId, BlockRef),
    Payload(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("event {index}: {message}")]
    Invalid { index: usize, message: String },
}

impl ScenarioError {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioError::Syntax { .. } => "ScenarioSyntax",
            ScenarioError::Invalid { .. } => "ScenarioInvalid",
        }
    }
}

impl fmt::Display for BlockRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockRef::Submission(n) => write!(f, "@{n}"),
            BlockRef::Hash(h) => write!(f, "{h}"),
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Head => write!(f, "HEAD"),
            Query::Transcript(s) => write!(f, "TRANSCRIPT {s}"),
            Query::Progress(s, c) => write!(f, "PROGRESS {s} {c}"),
            Query::Payload(h) => write!(f, "PAYLOAD {h}"),
        }
    }
}

impl Submission {
    /// Name of the organization that signs the block.
    pub fn signer(&self) -> &str {
        match self {
            Submission::Register { name } => name,
            Submission::Achievement { org, .. } | Submission::Correction { org, .. } | Submission::Contract { org, .. } => {
                org
            }
        }
    }

    fn refs(&self) -> Option<BlockRef> {
        match self {
            Submission::Correction { target, .. } => Some(*target),
            _ => None,
        }
    }
}

impl Action {
    fn block_ref(&self) -> Option<BlockRef> {
        match self {
            Action::Submit(s) | Action::Inject(Injection::Unchecked(s)) => s.refs(),
            Action::Query(Query::Progress(_, c)) => Some(*c),
            _ => None,
        }
    }
}

struct Tokens<'a> {
    line: usize,
    text: &'a str,
    rest: &'a str,
}

impl<'a> Tokens<'a> {
    fn new(line: usize, text: &'a str) -> Self {
        Tokens { line, text, rest: text }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ScenarioError> {
        Err(ScenarioError::Syntax {
            line: self.line,
            message: message.into(),
        })
    }

    fn next(&mut self, what: &str) -> Result<&'a str, ScenarioError> {
        let trimmed = self.rest.trim_start();
        if trimmed.is_empty() {
            return self.err(format!("expected {what}"));
        }
        let end = trimmed.find(char::is_whitespace).unwrap_or(trimmed.len());
        self.rest = &trimmed[end..];
        Ok(&trimmed[..end])
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ScenarioError> {
        let t = self.next(kw)?;
        if t != kw {
            return self.err(format!("expected {kw}, found `{t}`"));
        }
        Ok(())
    }

    fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, ScenarioError> {
        let t = self.next(what)?;
        match t.parse() {
            Ok(v) => Ok(v),
            Err(_) => self.err(format!("invalid {what} `{t}`")),
        }
    }

    fn block_ref(&mut self) -> Result<BlockRef, ScenarioError> {
        let t = self.next("block reference")?;
        if let Some(n) = t.strip_prefix('@') {
            return match n.parse() {
                Ok(n) => Ok(BlockRef::Submission(n)),
                Err(_) => self.err(format!("invalid block reference `{t}`")),
            };
        }
        match t.parse() {
            Ok(h) => Ok(BlockRef::Hash(h)),
            Err(_) => self.err(format!("invalid block reference `{t}`")),
        }
    }

    fn remainder(&mut self) -> &'a str {
        let r = self.rest.trim();
        self.rest = "";
        r
    }

    fn end(&self) -> Result<(), ScenarioError> {
        let r = self.rest.trim();
        if r.is_empty() {
            Ok(())
        } else {
            self.err(format!("unexpected `{r}` in `{}`", self.text.trim()))
        }
    }
}

fn id_list(t: &Tokens<'_>, s: &str) -> Result<Vec<usize>, ScenarioError> {
    s.split(',')
        .map(|p| p.parse().or_else(|_| t.err(format!("invalid peer id `{p}`"))))
        .collect()
}

fn submission(t: &mut Tokens<'_>) -> Result<Submission, ScenarioError> {
    let kind = t.next("payload kind")?;
    let sub = match kind {
        "REGISTER" => Submission::Register {
            name: t.next("organization name")?.into(),
        },
        "ACHIEVEMENT" => {
            let org = t.next("organization")?.into();
            let student = t.parse("student id")?;
            let course = t.next("course id")?.into();
            let credits = t.parse("credit points")?;
            let topics = t.next("topics")?;
            let topics = if topics == "-" {
                Vec::new()
            } else {
                topics.split(',').map(String::from).collect()
            };
            let passed = match t.next("PASSED or FAILED")? {
                "PASSED" => true,
                "FAILED" => false,
                other => return t.err(format!("expected PASSED or FAILED, found `{other}`")),
            };
            Submission::Achievement {
                org,
                student,
                course,
                credits,
                topics,
                passed,
            }
        }
        "CORRECTION" => {
            let org = t.next("organization")?.into();
            let target = t.block_ref()?;
            let change = match t.next("INVALIDATE or CREDITS")? {
                "INVALIDATE" => CorrectionChange::Invalidate,
                "CREDITS" => CorrectionChange::Credits(t.parse("credit points")?),
                other => return t.err(format!("expected INVALIDATE or CREDITS, found `{other}`")),
            };
            Submission::Correction { org, target, change }
        }
        "CONTRACT" => {
            let org = t.next("organization")?.into();
            let source = t.remainder();
            if source.is_empty() {
                return t.err("expected contract source");
            }
            Submission::Contract {
                org,
                source: source.into(),
            }
        }
        other => return t.err(format!("unknown payload kind `{other}`")),
    };
    t.end()?;
    Ok(sub)
}

fn action(t: &mut Tokens<'_>) -> Result<Action, ScenarioError> {
    let name = t.next("action")?;
    let action = match name {
        "SUBMIT" => return submission(t).map(Action::Submit),
        "INJECT" => match t.next("injection kind")? {
            "BADPOW" => Action::Inject(Injection::BadPow),
            "BADSIG" => Action::Inject(Injection::BadSignature),
            "BADLINK" => Action::Inject(Injection::BadLink),
            "PAYLOAD" => return submission(t).map(|s| Action::Inject(Injection::Unchecked(s))),
            other => return t.err(format!("unknown injection `{other}`")),
        },
        "PARTITION" => {
            let groups_text = t.next("partition groups")?;
            let groups = groups_text.split('|').map(|g| id_list(t, g)).collect::<Result<_, _>>()?;
            Action::Partition(groups)
        }
        "HEAL" => Action::Heal,
        "TAMPER" => Action::Tamper {
            height: t.parse("height")?,
            offset: t.parse("byte offset")?,
        },
        "QUERY" => Action::Query(match t.next("query kind")? {
            "HEAD" => Query::Head,
            "TRANSCRIPT" => Query::Transcript(t.parse("student id")?),
            "PROGRESS" => {
                let s = t.parse("student id")?;
                Query::Progress(s, t.block_ref()?)
            }
            "PAYLOAD" => Query::Payload(t.parse("height")?),
            other => return t.err(format!("unknown query `{other}`")),
        }),
        other => return t.err(format!("unknown action `{other}`")),
    };
    t.end()?;
    Ok(action)
}

pub fn parse_scenario(text: &str) -> Result<SimScenario, ScenarioError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let Some((n, header)) = lines.next() else {
        return Err(ScenarioError::Syntax {
            line: 1,
            message: "missing PEERS header".into(),
        });
    };
    let mut t = Tokens::new(n, header);
    t.keyword("PEERS")?;
    let peer_count = t.parse("peer count")?;
    t.keyword("LIGHT")?;
    let light = t.next("light client ids")?;
    let light_clients = if light == "-" {
        BTreeSet::new()
    } else {
        id_list(&t, light)?.into_iter().collect()
    };
    t.keyword("SEED")?;
    let seed = t.parse("seed")?;
    t.keyword("LATENCY")?;
    let latency = t.parse("latency")?;
    t.keyword("MAXTICKS")?;
    let max_ticks = t.parse("tick limit")?;
    t.end()?;

    let mut events = Vec::new();
    for (n, line) in lines {
        let mut t = Tokens::new(n, line);
        t.keyword("TICK")?;
        let tick = t.parse("tick")?;
        t.keyword("PEER")?;
        let actor = t.parse("peer id")?;
        let action = action(&mut t)?;
        events.push(Event { tick, actor, action });
    }
    let scenario = SimScenario {
        peer_count,
        light_clients,
        seed,
        latency,
        max_ticks,
        events,
    };
    scenario.validate()?;
    Ok(scenario)
}

impl SimScenario {
    pub fn is_light(&self, peer: usize) -> bool {
        self.light_clients.contains(&peer)
    }

    /// Checks everything that can be checked before running. Errors name
    /// the first offending event; header problems are reported as event 0.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |index: usize, message: String| Err(ScenarioError::Invalid { index, message });
        if self.peer_count == 0 {
            return invalid(0, "at least one peer is required".into());
        }
        if self.latency == 0 {
            return invalid(0, "latency must be at least one tick".into());
        }
        if let Some(l) = self.light_clients.iter().find(|&&l| l >= self.peer_count) {
            return invalid(0, format!("light client {l} does not exist"));
        }
        if self.light_clients.len() == self.peer_count {
            return invalid(0, "at least one full peer is required".into());
        }
        let mut prev_tick = 0;
        let mut submissions = 0;
        for (i, e) in self.events.iter().enumerate() {
            if e.tick < prev_tick {
                return invalid(i, format!("tick {} goes backwards", e.tick));
            }
            prev_tick = e.tick;
            if e.tick > self.max_ticks {
                return invalid(i, format!("tick {} is past the tick limit", e.tick));
            }
            if e.actor >= self.peer_count {
                return invalid(i, format!("peer {} does not exist", e.actor));
            }
            let light_ok = matches!(
                e.action,
                Action::Query(Query::Head | Query::Payload(_)) | Action::Partition(_) | Action::Heal
            );
            if self.is_light(e.actor) && !light_ok {
                return invalid(i, format!("light client {} cannot perform this action", e.actor));
            }
            if let Some(BlockRef::Submission(n)) = e.action.block_ref() {
                if n >= submissions {
                    return invalid(i, format!("@{n} does not name an earlier submission"));
                }
            }
            if let Action::Partition(groups) = &e.action {
                let mut seen = BTreeSet::new();
                for p in groups.iter().flatten() {
                    if *p >= self.peer_count || !seen.insert(*p) {
                        return invalid(i, format!("peer {p} is unknown or listed twice"));
                    }
                }
                if seen.len() != self.peer_count {
                    return invalid(i, "partition groups must cover every peer".into());
                }
            }
            if matches!(e.action, Action::Submit(_)) {
                submissions += 1;
            }
        }
        Ok(())
    }
}
