//! Event routing into the master/shadow count lanes, the snapshot readout
//! protocol, and the sequential oracle histogram used as ground truth.
//!
//! While a snapshot is anywhere between start and completion, new events are
//! designated to the shadow lane; this happens before the conflation cascade
//! so the designation survives merging. The readout then observes master
//! counts that no in-flight update can change, giving a consistent cut at
//! the snapshot start. Once every key is read, shadow counts are folded back
//! into their master counts.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::datapath::{Key, Slot};
use crate::memory::MemReply;
use crate::rmw::MemOp;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SnapshotError {
    #[error("snapshot started while a previous one is still in phase {phase:?}")]
    SnapshotOverlap { phase: SnapshotPhase },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotPhase {
    Idle,
    /// Waiting for pre-cut master-lane increments to drain to memory.
    Draining,
    Reading {
        cursor: Key,
    },
    Merging {
        cursor: Key,
    },
}

impl SnapshotPhase {
    pub fn is_idle(&self) -> bool {
        matches!(self, SnapshotPhase::Idle)
    }
}

/// Route one event to a count lane. Shadow while a snapshot is in progress,
/// master otherwise; each event contributes exactly one unit to exactly one
/// lane.
pub fn route_event(key: Key, phase: SnapshotPhase) -> Slot {
    if phase.is_idle() {
        Slot::master_event(key)
    } else {
        Slot::shadow_event(key)
    }
}

/// Drives low-priority snapshot readouts: waits for the pre-cut master
/// updates to drain, reads every key in ascending order, then issues merge
/// ops folding shadow counts into master counts for every key that received
/// shadow traffic.
///
/// Merges wait until every shadow update routed before the readout finished
/// has reached memory. Shadow events arriving later may miss their key's
/// merge and stay in the shadow count until the next snapshot folds them;
/// totals are unaffected either way.
#[derive(Debug)]
pub struct SnapshotController {
    phase: SnapshotPhase,
    key_space: u64,
    table: BTreeMap<Key, u64>,
    replies_recorded: u64,
    /// Keys routed to the shadow lane since the snapshot started.
    shadow_touched: BTreeSet<Key>,
    merge_queue: VecDeque<Key>,
    /// Bound on admin reads issued ahead of their replies.
    max_outstanding: u64,
    reads_issued: u64,
    /// Shadow increments that must be committed before merging starts.
    shadow_barrier: u64,
}

impl SnapshotController {
    pub fn new(key_space: u64) -> Self {
        Self {
            phase: SnapshotPhase::Idle,
            key_space,
            table: BTreeMap::new(),
            replies_recorded: 0,
            shadow_touched: BTreeSet::new(),
            merge_queue: VecDeque::new(),
            max_outstanding: 32,
            reads_issued: 0,
            shadow_barrier: 0,
        }
    }

    pub fn phase(&self) -> SnapshotPhase {
        self.phase
    }

    pub fn is_idle(&self) -> bool {
        self.phase.is_idle()
    }

    /// Master counts at the snapshot cut; complete once reading finished,
    /// immutable after the controller returns to idle.
    pub fn table(&self) -> &BTreeMap<Key, u64> {
        &self.table
    }

    pub fn start(&mut self) -> Result<(), SnapshotError> {
        if !self.phase.is_idle() {
            return Err(SnapshotError::SnapshotOverlap { phase: self.phase });
        }
        self.phase = SnapshotPhase::Draining;
        self.table.clear();
        self.replies_recorded = 0;
        self.shadow_touched.clear();
        self.merge_queue.clear();
        self.reads_issued = 0;
        self.shadow_barrier = 0;
        Ok(())
    }

    /// Note a shadow-routed event so its key is merged on completion.
    pub fn observe_routed(&mut self, slot: &Slot) {
        if slot.shadow > 0 {
            self.shadow_touched.insert(slot.key);
        }
    }

    /// Record an administrative read reply.
    pub fn accept_reply(&mut self, reply: &MemReply) {
        debug_assert!(matches!(self.phase, SnapshotPhase::Reading { .. }));
        self.table.insert(reply.address, reply.master);
        self.replies_recorded += 1;
    }

    /// Advance the protocol one cycle, pushing admin ops into `admin_queue`.
    /// `master_in_flight` counts master increments routed but not yet
    /// committed to memory; `shadow_routed` / `shadow_committed` are running
    /// totals of shadow increments routed and committed.
    pub fn step(
        &mut self,
        now: u64,
        master_in_flight: u64,
        shadow_routed: u64,
        shadow_committed: u64,
        admin_queue: &mut VecDeque<MemOp>,
    ) {
        loop {
            match self.phase {
                SnapshotPhase::Idle => return,
                SnapshotPhase::Draining => {
                    if master_in_flight > 0 {
                        return;
                    }
                    self.phase = SnapshotPhase::Reading { cursor: 0 };
                }
                SnapshotPhase::Reading { mut cursor } => {
                    while cursor < self.key_space
                        && self.reads_issued - self.replies_recorded < self.max_outstanding
                        && (admin_queue.len() as u64) < self.max_outstanding
                    {
                        admin_queue.push_back(MemOp::admin_read(cursor, now));
                        self.reads_issued += 1;
                        cursor += 1;
                    }
                    self.phase = SnapshotPhase::Reading { cursor };
                    if self.replies_recorded < self.key_space {
                        return;
                    }
                    self.merge_queue = self.shadow_touched.iter().copied().collect();
                    self.shadow_barrier = shadow_routed;
                    self.phase = SnapshotPhase::Merging { cursor: 0 };
                }
                SnapshotPhase::Merging { .. } => {
                    // Hold merges until every shadow update routed before the
                    // readout finished has reached memory.
                    if shadow_committed < self.shadow_barrier {
                        return;
                    }
                    while let Some(key) = self.merge_queue.front().copied() {
                        if admin_queue.len() as u64 >= self.max_outstanding {
                            self.phase = SnapshotPhase::Merging { cursor: key };
                            return;
                        }
                        admin_queue.push_back(MemOp::admin_merge(key, now));
                        self.merge_queue.pop_front();
                    }
                    self.phase = SnapshotPhase::Idle;
                    return;
                }
            }
        }
    }
}

/// Exact sequential count of every generated event; the ground truth every
/// simulated histogram must reproduce.
#[derive(Debug, Default, Clone)]
pub struct OracleHistogram {
    counts: BTreeMap<Key, u64>,
    total: u64,
}

impl OracleHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, key: Key) {
        *self.counts.entry(key).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn count(&self, key: Key) -> u64 {
        self.counts.get(&key).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &BTreeMap<Key, u64> {
        &self.counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub key: Key,
    pub expected: u64,
    pub simulated: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub keys_checked: u64,
    pub mismatches: Vec<Mismatch>,
}

impl OracleReport {
    pub fn is_clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compare a drained memory image (plus any still-in-flight slots) against
/// the oracle histogram: for every key, master + shadow must equal the exact
/// event count.
pub fn verify_against_oracle(
    memory_dump: &BTreeMap<Key, (u64, u64)>,
    in_flight_slots: &[Slot],
    oracle: &OracleHistogram,
) -> OracleReport {
    let mut simulated: BTreeMap<Key, u64> = BTreeMap::new();
    for (&key, &(master, shadow)) in memory_dump {
        *simulated.entry(key).or_insert(0) += master + shadow;
    }
    for slot in in_flight_slots.iter().filter(|s| s.valid) {
        *simulated.entry(slot.key).or_insert(0) += slot.lanes_total();
    }

    let mut keys: BTreeSet<Key> = simulated.keys().copied().collect();
    keys.extend(oracle.counts().keys().copied());
    let keys_checked = keys.len() as u64;
    let mismatches = keys
        .into_iter()
        .filter_map(|key| {
            let expected = oracle.count(key);
            let got = simulated.get(&key).copied().unwrap_or(0);
            (expected != got).then_some(Mismatch {
                key,
                expected,
                simulated: got,
            })
        })
        .collect();
    OracleReport {
        keys_checked,
        mismatches,
    }
}
