use std::ffi::OsString;
use std::fmt::Write as _;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use studchain_core::consensus::{PowError, ScheduleError};
use studchain_core::contract::{self, ParseError};
use studchain_core::engine::{due_fulfillments, ProgressError};
use studchain_core::payload::{ContractPayload, OrgRegistration};
use studchain_core::records::{
    effective_transcript, transcript_text, AssessmentResult, CorrectionAction, CorrectionError, SourceKind,
};
use studchain_core::store::PayloadRejection;
use studchain_core::{
    AchievementRecord, AppendError, ChainStore, CorrectionRecord, Decimal, DifficultySchedule, Digest, OrgKey, Payload,
    StudentId,
};
use studchain_sim::ScenarioError;

use crate::explorer::{self, Explorer};
use crate::files::{self, FileError, PoolEntry};
use crate::server;

#[derive(Parser, Debug)]
#[command(name = "studchain", version, about = "Append-only ledger of academic achievements")]
pub struct Cli {
    /// Chain file
    #[arg(long, global = true, default_value = "studchain.chain")]
    pub chain: PathBuf,
    /// Signing key file of the operating organization
    #[arg(long, global = true, default_value = "studchain.key")]
    pub key: PathBuf,
    /// Leading zero bits required at height 0
    #[arg(long, global = true, default_value_t = 8)]
    pub pow_base: u32,
    /// Heights per extra bit of difficulty
    #[arg(long, global = true, default_value_t = 1000)]
    pub pow_step: u64,
    /// Upper bound on required zero bits
    #[arg(long, global = true, default_value_t = 24)]
    pub pow_cap: u32,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Creates a new signing key file (never overwrites)
    Keygen {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Queues the registration of the key's organization
    RegisterOrg {
        #[arg(long)]
        name: String,
    },
    /// Prints a fresh anonymous student id
    NewStudent {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Queues an achievement issued by the key's organization
    SubmitAchievement(AchievementArgs),
    /// Queues a correction of an earlier achievement
    SubmitCorrection(CorrectionArgs),
    /// Queues a contract read from a source file
    SubmitContract {
        #[arg(long)]
        file: PathBuf,
    },
    /// Mines queued payloads of the key's organization, then every
    /// fulfillment it is due to publish
    Mine {
        /// Block timestamp; defaults to the block height
        #[arg(long)]
        tick: Option<u64>,
    },
    #[command(subcommand)]
    Query(QueryCommand),
    /// Replays the chain file from genesis through every check
    Validate,
    #[command(subcommand)]
    Sim(SimCommand),
    /// Serves the read-only HTTP explorer
    Serve {
        #[arg(long, value_parser = clap::value_parser!(u16).range(1024..))]
        port: u16,
        /// Chain file poll interval in milliseconds
        #[arg(long, default_value_t = 1000)]
        reload_ms: u64,
    },
}

#[derive(Subcommand, Debug)]
pub enum QueryCommand {
    /// Effective transcript of a student
    Transcript {
        student: StudentId,
        /// Tab-separated lines instead of JSON
        #[arg(long)]
        text: bool,
    },
    /// Progress of a student towards a degree contract
    Progress { student: StudentId, contract: Digest },
}

#[derive(Subcommand, Debug)]
pub enum SimCommand {
    /// Runs a scenario file and prints its report
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ResultArg {
    Passed,
    Failed,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    UniversityExam,
    Mooc,
    OpenBadge,
}

impl From<ResultArg> for AssessmentResult {
    fn from(r: ResultArg) -> Self {
        match r {
            ResultArg::Passed => AssessmentResult::Passed,
            ResultArg::Failed => AssessmentResult::Failed,
        }
    }
}

impl From<SourceArg> for SourceKind {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::UniversityExam => SourceKind::UniversityExam,
            SourceArg::Mooc => SourceKind::Mooc,
            SourceArg::OpenBadge => SourceKind::OpenBadge,
        }
    }
}

#[derive(Args, Debug)]
pub struct AchievementArgs {
    #[arg(long)]
    pub student: StudentId,
    #[arg(long)]
    pub course_id: String,
    #[arg(long)]
    pub title: String,
    #[arg(long)]
    pub credits: Decimal,
    #[arg(long)]
    pub hours: u32,
    /// Comma-separated topic tags
    #[arg(long)]
    pub topics: String,
    #[arg(long, value_enum)]
    pub result: ResultArg,
    #[arg(long)]
    pub grade: Option<Decimal>,
    /// Logical tick of the assessment
    #[arg(long, default_value_t = 0)]
    pub tick: u64,
    #[arg(long, value_enum, default_value = "university-exam")]
    pub source: SourceArg,
}

/// Either `--invalidate`, or any subset of fields to change in the
/// target's current record.
#[derive(Args, Debug)]
pub struct CorrectionArgs {
    #[arg(long)]
    pub target: Digest,
    #[arg(long, default_value = "")]
    pub reason: String,
    #[arg(long, conflicts_with_all = ["course_id", "title", "credits", "hours", "topics", "result", "grade", "tick", "source"])]
    pub invalidate: bool,
    #[arg(long)]
    pub course_id: Option<String>,
    #[arg(long)]
    pub title: Option<String>,
    #[arg(long)]
    pub credits: Option<Decimal>,
    #[arg(long)]
    pub hours: Option<u32>,
    #[arg(long)]
    pub topics: Option<String>,
    #[arg(long, value_enum)]
    pub result: Option<ResultArg>,
    #[arg(long)]
    pub grade: Option<Decimal>,
    #[arg(long)]
    pub tick: Option<u64>,
    #[arg(long, value_enum)]
    pub source: Option<SourceArg>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error("{0}")]
    Append(#[from] AppendError),
    #[error("{0}")]
    Contract(#[from] ParseError),
    #[error("{0}")]
    Progress(#[from] ProgressError),
    #[error("{0}")]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Pow(#[from] PowError),
    #[error("{0}")]
    Serve(io::Error),
}

impl CliError {
    /// Name of the underlying typed error.
    pub fn name(&self) -> &'static str {
        match self {
            CliError::File(e) => e.name(),
            CliError::Append(e) => e.name(),
            CliError::Contract(e) => e.name(),
            CliError::Progress(e) => e.name(),
            CliError::Scenario(e) => e.name(),
            CliError::Pow(_) => "NonceExhausted",
            CliError::Serve(_) => "Io",
        }
    }
}

impl From<PayloadRejection> for CliError {
    fn from(r: PayloadRejection) -> Self {
        CliError::Append(r.into())
    }
}

/// Exit code and captured output of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Parses `argv` (program name first) and runs the command: exit 0 on
/// success, 1 on a domain error, 2 on a usage error.
pub fn cli_dispatch<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome {
                    code: 2,
                    stdout: String::new(),
                    stderr: text,
                }
            } else {
                Outcome {
                    code: 0,
                    stdout: text,
                    stderr: String::new(),
                }
            };
        }
    };
    let schedule = match DifficultySchedule::new(cli.pow_base, cli.pow_step, cli.pow_cap) {
        Ok(s) => s,
        Err(e @ (ScheduleError::Bits { .. } | ScheduleError::Step)) => {
            return Outcome {
                code: 2,
                stdout: String::new(),
                stderr: format!("error: invalid proof-of-work schedule: {e}\n"),
            }
        }
    };
    let mut out = String::new();
    match execute(&cli, schedule, &mut out) {
        Ok(()) => Outcome {
            code: 0,
            stdout: out,
            stderr: String::new(),
        },
        Err(e) => Outcome {
            code: 1,
            stdout: out,
            stderr: format!("error: {}: {e}\n", e.name()),
        },
    }
}

fn rng(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

fn topics(list: &str) -> Vec<String> {
    if list.is_empty() {
        Vec::new()
    } else {
        list.split(',').map(String::from).collect()
    }
}

fn execute(cli: &Cli, schedule: DifficultySchedule, out: &mut String) -> Result<(), CliError> {
    match &cli.command {
        Command::Keygen { seed } => {
            let key = OrgKey::generate(&mut rng(*seed));
            files::write_key(&cli.key, &key)?;
            writeln!(out, "org {}", key.org_id()).unwrap();
        }
        Command::NewStudent { seed } => {
            writeln!(out, "{}", StudentId::generate(&mut rng(*seed))).unwrap();
        }
        Command::RegisterOrg { name } => {
            let key = files::read_key(&cli.key)?;
            let payload = Payload::OrgRegistration(OrgRegistration {
                display_name: name.clone(),
                public_key: key.public_key(),
            });
            submit(cli, schedule, &key, payload, out)?;
        }
        Command::SubmitAchievement(a) => {
            let key = files::read_key(&cli.key)?;
            let record = AchievementRecord {
                student: a.student,
                course_id: a.course_id.clone(),
                title: a.title.clone(),
                credit_points: a.credits,
                workload_hours: a.hours,
                issuer: key.org_id(),
                topics: topics(&a.topics),
                result: a.result.into(),
                grade: a.grade,
                assessment_tick: a.tick,
                source_kind: a.source.into(),
            };
            submit(cli, schedule, &key, Payload::Achievement(record), out)?;
        }
        Command::SubmitCorrection(c) => {
            let key = files::read_key(&cli.key)?;
            let store = files::load_chain(&cli.chain, schedule, true)?;
            let action = if c.invalidate {
                CorrectionAction::Invalidate
            } else {
                let Some(state) = store.state().achievements.get(&c.target) else {
                    return Err(PayloadRejection::Correction(CorrectionError::UnknownTarget).into());
                };
                let mut r = state.current.clone();
                if let Some(v) = &c.course_id {
                    r.course_id = v.clone();
                }
                if let Some(v) = &c.title {
                    r.title = v.clone();
                }
                if let Some(v) = c.credits {
                    r.credit_points = v;
                }
                if let Some(v) = c.hours {
                    r.workload_hours = v;
                }
                if let Some(v) = &c.topics {
                    r.topics = topics(v);
                }
                if let Some(v) = c.result {
                    r.result = v.into();
                }
                if c.grade.is_some() {
                    r.grade = c.grade;
                }
                if let Some(v) = c.tick {
                    r.assessment_tick = v;
                }
                if let Some(v) = c.source {
                    r.source_kind = v.into();
                }
                CorrectionAction::Replace(r)
            };
            let payload = Payload::Correction(CorrectionRecord {
                target_block_hash: c.target,
                action,
                reason: c.reason.clone(),
            });
            submit(cli, schedule, &key, payload, out)?;
        }
        Command::SubmitContract { file } => {
            let key = files::read_key(&cli.key)?;
            let source = std::fs::read_to_string(file).map_err(|source| FileError::Io {
                path: file.clone(),
                source,
            })?;
            let ast = contract::parse(&source)?;
            let payload = Payload::Contract(ContractPayload {
                source: contract::print(&ast),
            });
            submit(cli, schedule, &key, payload, out)?;
        }
        Command::Mine { tick } => mine(cli, schedule, *tick, out)?,
        Command::Query(QueryCommand::Transcript { student, text }) => {
            let store = files::load_chain(&cli.chain, schedule, false)?;
            if *text {
                out.push_str(&transcript_text(&effective_transcript(&store, student)));
            } else {
                out.push_str(&explorer::transcript_json(&store, student));
            }
        }
        Command::Query(QueryCommand::Progress { student, contract }) => {
            let store = files::load_chain(&cli.chain, schedule, false)?;
            out.push_str(&explorer::progress_json(&store, student, contract)?);
        }
        Command::Validate => {
            let store = files::load_chain(&cli.chain, schedule, false)?;
            match store.head_height() {
                Some(h) => writeln!(
                    out,
                    "valid height {h} head {} replica {}",
                    store.head_hash(),
                    store.replica_digest()
                )
                .unwrap(),
                None => writeln!(out, "valid empty chain").unwrap(),
            }
        }
        Command::Sim(SimCommand::Run { scenario, seed }) => {
            let text = std::fs::read_to_string(scenario).map_err(|source| FileError::Io {
                path: scenario.clone(),
                source,
            })?;
            let mut sc = studchain_sim::parse_scenario(&text)?;
            if let Some(s) = seed {
                sc.seed = *s;
            }
            write!(out, "{}", studchain_sim::run(&sc, schedule)?).unwrap();
        }
        Command::Serve { port, reload_ms } => {
            let store = files::load_chain(&cli.chain, schedule, false)?;
            let explorer = Arc::new(Explorer::new(store));
            let addr = SocketAddr::from(([127, 0, 0, 1], *port));
            server::run(
                explorer,
                addr,
                cli.chain.clone(),
                schedule,
                Duration::from_millis(*reload_ms),
            )
            .map_err(CliError::Serve)?;
        }
    }
    Ok(())
}

/// Checks a payload and appends it to the pool. Field checks always run;
/// checks against the chain run only while nothing else is queued, since
/// queued payloads (a registration, say) can change the outcome.
fn submit(
    cli: &Cli,
    schedule: DifficultySchedule,
    key: &OrgKey,
    payload: Payload,
    out: &mut String,
) -> Result<(), CliError> {
    payload.validate().map_err(PayloadRejection::Field)?;
    let pool_path = files::pool_path(&cli.chain);
    let mut pool = files::read_pool(&pool_path)?;
    if pool.is_empty() {
        let store = files::load_chain(&cli.chain, schedule, true)?;
        store.check_payload(&payload, &key.org_id())?;
    }
    writeln!(out, "queued {} {}", payload.kind_name(), pool.len()).unwrap();
    pool.push(PoolEntry {
        issuer: key.org_id(),
        payload,
    });
    files::write_pool(&pool_path, &pool)?;
    Ok(())
}

fn mine_one(
    store: &mut ChainStore,
    key: &OrgKey,
    payload: Payload,
    tick: Option<u64>,
    out: &mut String,
) -> Result<(), CliError> {
    let height = store.next_height();
    let block = store.mine_next(key, payload, tick.unwrap_or(height))?;
    let (hash, kind) = (block.hash(), block.payload.kind_name());
    store.append(block)?;
    writeln!(out, "block {height} {hash} {kind}").unwrap();
    Ok(())
}

/// Mines the key's queued payloads in order, then publishes fulfillments
/// the key's organization owes until none remain. Rejected payloads are
/// dropped; the first rejection is reported after the chain is saved.
fn mine(cli: &Cli, schedule: DifficultySchedule, tick: Option<u64>, out: &mut String) -> Result<(), CliError> {
    let key = files::read_key(&cli.key)?;
    let org = key.org_id();
    let mut store = files::load_chain(&cli.chain, schedule, true)?;
    let pool_path = files::pool_path(&cli.chain);
    let (mine_now, keep): (Vec<_>, Vec<_>) = files::read_pool(&pool_path)?.into_iter().partition(|e| e.issuer == org);
    let before = store.len();
    let mut first_error = None;
    for (i, entry) in mine_now.into_iter().enumerate() {
        if let Err(e) = mine_one(&mut store, &key, entry.payload, tick, out) {
            writeln!(out, "rejected {i} {}", e.name()).unwrap();
            first_error.get_or_insert(e);
        }
    }
    if !store.is_empty() {
        loop {
            let mut progressed = false;
            for payload in due_fulfillments(&store) {
                let Payload::Fulfillment(f) = &payload else { continue };
                if f.publisher(&store) != Some(org) || store.check_payload(&payload, &org).is_err() {
                    continue;
                }
                mine_one(&mut store, &key, payload, tick, out)?;
                progressed = true;
            }
            if !progressed {
                break;
            }
        }
    }
    if store.len() > before {
        files::save_chain(&cli.chain, &store)?;
    }
    files::write_pool(&pool_path, &keep)?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Convenience for tests and scripts: runs `studchain <args>` with the
/// given chain and key files.
pub fn run_with_files(chain: &Path, key: &Path, args: &[&str]) -> Outcome {
    let mut argv: Vec<OsString> = vec!["studchain".into()];
    argv.push("--chain".into());
    argv.push(chain.into());
    argv.push("--key".into());
    argv.push(key.into());
    argv.extend(args.iter().map(OsString::from));
    cli_dispatch(argv)
}
