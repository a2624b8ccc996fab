use std::fmt;

use studchain_core::Digest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerHead {
    pub peer: usize,
    pub light: bool,
    pub height: u64,
    pub head: Digest,
}

/// A peer rejected data offered by another peer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Detection {
    pub tick: u64,
    pub detector: usize,
    pub offender: usize,
    pub height: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubmissionOutcome {
    pub index: usize,
    pub tick: u64,
    pub peer: usize,
    /// Block hash, or the name of the error that rejected it.
    pub result: Result<Digest, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryResult {
    pub tick: u64,
    pub peer: usize,
    pub query: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimReport {
    pub seed: u64,
    /// Last tick executed.
    pub ticks: u64,
    pub heads: Vec<PeerHead>,
    /// Tick of the last head change, if all full peers agree at the end.
    pub convergence_tick: Option<u64>,
    pub detected_tampers: Vec<Detection>,
    pub submissions: Vec<SubmissionOutcome>,
    /// Fulfillment blocks on the preferred final chain, by height.
    pub fulfillment_blocks: Vec<Digest>,
    pub query_results: Vec<QueryResult>,
}

impl SimReport {
    pub fn full_heads(&self) -> impl Iterator<Item = &PeerHead> {
        self.heads.iter().filter(|h| !h.light)
    }
}

impl fmt::Display for SimReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed {}", self.seed)?;
        writeln!(f, "ticks {}", self.ticks)?;
        for h in &self.heads {
            let kind = if h.light { "light" } else { "full" };
            writeln!(f, "head {} {kind} {} {}", h.peer, h.height, h.head)?;
        }
        match self.convergence_tick {
            Some(t) => writeln!(f, "convergence {t}")?,
            None => writeln!(f, "convergence none")?,
        }
        for s in &self.submissions {
            match &s.result {
                Ok(h) => writeln!(f, "submission {} tick {} peer {} accepted {h}", s.index, s.tick, s.peer)?,
                Err(e) => writeln!(f, "submission {} tick {} peer {} rejected {e}", s.index, s.tick, s.peer)?,
            }
        }
        for d in &self.detected_tampers {
            writeln!(
                f,
                "detected tick {} peer {} offender {} height {} {}",
                d.tick, d.detector, d.offender, d.height, d.reason
            )?;
        }
        for h in &self.fulfillment_blocks {
            writeln!(f, "fulfillment {h}")?;
        }
        for q in &self.query_results {
            writeln!(f, "query tick {} peer {} {}", q.tick, q.peer, q.query)?;
            for line in q.answer.lines() {
                writeln!(f, "  {line}")?;
            }
        }
        Ok(())
    }
}
