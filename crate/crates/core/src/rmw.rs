//! Read-modify-write engine and command scheduler: turns cascade events into
//! memory reads and writes, pairs in-order replies with exiting slots,
//! applies the write-back arithmetic, and groups commands by kind without
//! ever letting a read overtake an earlier write.

use std::collections::VecDeque;

use thiserror::Error;

use crate::conflation::CascadeOutput;
use crate::datapath::{Key, Slot};
use crate::memory::MemReply;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RmwError {
    #[error("exit key {exit:#x} does not pair with pending read {pending:#x}")]
    ReplyKeyMismatch { exit: Key, pending: Key },
    #[error("reply for {reply:#x} does not pair with issued read {pending:#x}")]
    ReplyOrderBroken { reply: Key, pending: Key },
    #[error("write-back for key {key:#x} overflows the stored counter")]
    LaneOverflow { key: Key },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Read,
    Write,
}

/// Who issued a command; replies are routed back by the same tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpSource {
    App,
    Admin,
}

/// A memory command crossing the scheduler/controller boundary. Reads carry
/// no data; writes carry both full counter words. `merge_shadow` marks the
/// administrative fold of a shadow count into its master count, applied
/// atomically in command order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemOp {
    pub kind: OpKind,
    pub source: OpSource,
    pub address: Key,
    pub data: Option<(u64, u64)>,
    pub merge_shadow: bool,
    /// App-clock cycle at which the op was handed to the scheduler.
    pub issue_cycle: u64,
}

impl MemOp {
    pub fn read(address: Key, issue_cycle: u64) -> Self {
        Self {
            kind: OpKind::Read,
            source: OpSource::App,
            address,
            data: None,
            merge_shadow: false,
            issue_cycle,
        }
    }

    pub fn write(address: Key, master: u64, shadow: u64, issue_cycle: u64) -> Self {
        Self {
            kind: OpKind::Write,
            source: OpSource::App,
            address,
            data: Some((master, shadow)),
            merge_shadow: false,
            issue_cycle,
        }
    }

    pub fn admin_read(address: Key, issue_cycle: u64) -> Self {
        Self {
            source: OpSource::Admin,
            ..Self::read(address, issue_cycle)
        }
    }

    pub fn admin_write(address: Key, master: u64, shadow: u64, issue_cycle: u64) -> Self {
        Self {
            source: OpSource::Admin,
            ..Self::write(address, master, shadow, issue_cycle)
        }
    }

    /// Fold shadow into master at the memory side: `master += shadow; shadow = 0`.
    pub fn admin_merge(address: Key, issue_cycle: u64) -> Self {
        Self {
            kind: OpKind::Write,
            source: OpSource::Admin,
            address,
            data: None,
            merge_shadow: true,
            issue_cycle,
        }
    }
}

/// Result of one engine cycle.
#[derive(Debug, Clone, Default)]
pub struct RmwStepResult {
    pub ops: Vec<MemOp>,
    /// The exiting slot's reply has not arrived; the whole pipeline must
    /// stall until it does.
    pub backpressure: bool,
    /// Lane increments carried by a write emitted this cycle.
    pub write_increments: Option<(u64, u64)>,
}

/// Counters for the hazard-freedom checks.
#[derive(Debug, Clone, Copy, Default)]
pub struct RmwDiagnostics {
    /// Reads handed to the scheduler while the same key was already in
    /// flight; must stay zero.
    pub duplicate_pending: u64,
    /// Exit/reply pairings that broke the in-order contract.
    pub key_mismatches: u64,
    /// Reads held back because their key's previous cycle had not retired.
    /// Nonzero only when the conflation window is undersized for the latency.
    pub deferred_reads: u64,
}

/// Pairs cascade events with memory traffic. Reads are issued for every
/// admitted key; the k-th valid exit pairs with the k-th read's reply by
/// sequence alone.
///
/// A read for a key whose previous read-modify-write cycle has not produced
/// its write yet is held in a backlog, along with everything behind it, so
/// the scheduler sees that write arrive first and the read can never observe
/// a stale value. An adequately sized conflation window never triggers this;
/// an undersized one trades throughput for correctness.
#[derive(Debug, Default)]
pub struct RmwEngine {
    /// Keys of requested reads in cascade order, not yet written back.
    pending: VecDeque<Key>,
    /// Requested reads not yet handed to the scheduler (a suffix of
    /// `pending`).
    read_backlog: VecDeque<Key>,
    /// Keys whose read was handed out but whose write has not been.
    in_flight: std::collections::HashSet<Key>,
    /// In-order replies that have arrived but not yet met their exit.
    replies: VecDeque<MemReply>,
    /// Exit slot waiting for its reply under backpressure.
    held_exit: Option<Slot>,
    diagnostics: RmwDiagnostics,
    /// Running totals of increments already emitted as writes.
    committed_increments: (u64, u64),
}

impl RmwEngine {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pending_reads(&self) -> &VecDeque<Key> {
        &self.pending
    }

    pub fn diagnostics(&self) -> RmwDiagnostics {
        self.diagnostics
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
            && self.read_backlog.is_empty()
            && self.replies.is_empty()
            && self.held_exit.is_none()
    }

    /// Increments currently held between exit and emitted write.
    pub fn lanes_in_flight(&self) -> (u64, u64) {
        self.held_exit
            .map(|s| (s.master, s.shadow))
            .unwrap_or((0, 0))
    }

    /// Running total of increments already emitted as writes.
    pub fn committed_increments(&self) -> (u64, u64) {
        self.committed_increments
    }

    pub fn accept_reply(&mut self, reply: MemReply) -> Result<(), RmwError> {
        if let Some(&expected) = self.pending.get(self.replies.len()) {
            if expected != reply.address {
                self.diagnostics.key_mismatches += 1;
                return Err(RmwError::ReplyOrderBroken {
                    reply: reply.address,
                    pending: expected,
                });
            }
        }
        self.replies.push_back(reply);
        Ok(())
    }

    /// One engine cycle: record a newly admitted key, retire the exiting
    /// slot (this cycle's or a held one) against the head reply, then hand
    /// out as many backlogged reads as have become safe. The write for an
    /// exit precedes any same-cycle read in the emitted op order.
    pub fn step(&mut self, cascade_out: &CascadeOutput, now: u64) -> Result<RmwStepResult, RmwError> {
        let mut result = RmwStepResult::default();

        if let Some(key) = cascade_out.read_request {
            self.pending.push_back(key);
            self.read_backlog.push_back(key);
        }

        debug_assert!(
            !(self.held_exit.is_some() && cascade_out.out.out.valid),
            "cascade produced an exit while one was held under backpressure"
        );
        let exit = self.held_exit.take().or_else(|| {
            cascade_out.out.out.valid.then_some(cascade_out.out.out)
        });

        if let Some(slot) = exit {
            let pending_key = *self.pending.front().ok_or(RmwError::ReplyKeyMismatch {
                exit: slot.key,
                pending: 0,
            })?;
            if pending_key != slot.key {
                self.diagnostics.key_mismatches += 1;
                return Err(RmwError::ReplyKeyMismatch {
                    exit: slot.key,
                    pending: pending_key,
                });
            }
            if let Some(reply) = self.replies.pop_front() {
                debug_assert_eq!(reply.address, slot.key);
                let master = reply
                    .master
                    .checked_add(slot.master)
                    .ok_or(RmwError::LaneOverflow { key: slot.key })?;
                let shadow = reply
                    .shadow
                    .checked_add(slot.shadow)
                    .ok_or(RmwError::LaneOverflow { key: slot.key })?;
                self.pending.pop_front();
                let was_in_flight = self.in_flight.remove(&slot.key);
                debug_assert!(was_in_flight, "retired a key that was never read");
                self.committed_increments.0 += slot.master;
                self.committed_increments.1 += slot.shadow;
                result.write_increments = Some((slot.master, slot.shadow));
                result.ops.push(MemOp::write(slot.key, master, shadow, now));
            } else {
                self.held_exit = Some(slot);
                result.backpressure = true;
            }
        }

        // Hand out reads whose key has no unretired earlier cycle. Reads stay
        // strictly in request order so replies keep pairing by sequence.
        while let Some(&key) = self.read_backlog.front() {
            if self.in_flight.contains(&key) {
                self.diagnostics.deferred_reads += 1;
                break;
            }
            if !self.in_flight.insert(key) {
                self.diagnostics.duplicate_pending += 1;
            }
            self.read_backlog.pop_front();
            result.ops.push(MemOp::read(key, now));
        }

        Ok(result)
    }
}

/// Kind-grouping command scheduler in the user clock domain. Ops accumulate
/// in per-kind FIFOs stamped with arrival order; emission greedily continues
/// the current kind up to `block_size`, switching at a full block or when the
/// current queue runs dry. A dry-queue switch waits for a worthwhile backlog
/// on the other side (bounded by an idle-tick escape), since every switch
/// costs a bus turnaround. A read is never emitted while an earlier-arrived
/// write is still queued; writes may pass reads, which is causally safe
/// because a write to a key can only exist after that key's read was issued.
#[derive(Debug)]
pub struct Scheduler {
    reads: VecDeque<(u64, MemOp)>,
    writes: VecDeque<(u64, MemOp)>,
    block_size: usize,
    current: OpKind,
    in_block: usize,
    next_seq: u64,
    kind_switches: u64,
    emitted_total: u64,
    idle_streak: u32,
}

/// Backlog required on the other side before an early kind switch.
const MIN_SWITCH_BACKLOG: usize = 8;
/// Emission calls yielding nothing before a switch is forced anyway.
const MAX_IDLE_CALLS: u32 = 2;

impl Scheduler {
    pub fn new(block_size: usize) -> Self {
        assert!(block_size >= 1);
        Self {
            reads: VecDeque::new(),
            writes: VecDeque::new(),
            block_size,
            current: OpKind::Write,
            in_block: 0,
            next_seq: 0,
            kind_switches: 0,
            emitted_total: 0,
            idle_streak: 0,
        }
    }

    fn switch_backlog(&self) -> usize {
        self.block_size.min(MIN_SWITCH_BACKLOG)
    }

    pub fn enqueue(&mut self, op: MemOp) {
        let seq = self.next_seq;
        self.next_seq += 1;
        match op.kind {
            OpKind::Read => self.reads.push_back((seq, op)),
            OpKind::Write => self.writes.push_back((seq, op)),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.reads.is_empty() && self.writes.is_empty()
    }

    pub fn queued(&self) -> usize {
        self.reads.len() + self.writes.len()
    }

    /// Number of read/write alternations in the emission stream so far.
    pub fn kind_switches(&self) -> u64 {
        self.kind_switches
    }

    /// Queued write data by key, newest wins; used for conservation checks.
    pub fn queued_write_data(&self) -> impl Iterator<Item = (Key, (u64, u64))> + '_ {
        self.writes
            .iter()
            .filter_map(|(_, op)| op.data.map(|d| (op.address, d)))
    }

    fn read_may_go(&self) -> bool {
        match (self.reads.front(), self.writes.front()) {
            (Some((rs, _)), Some((ws, _))) => ws > rs,
            (Some(_), None) => true,
            _ => false,
        }
    }

    /// Emit up to `budget` ops for this user-clock slot.
    pub fn emit(&mut self, budget: usize) -> Vec<MemOp> {
        let mut out = Vec::new();
        while out.len() < budget {
            let block_full = self.in_block >= self.block_size;
            let fresh = self.emitted_total == 0;
            let restless = self.idle_streak >= MAX_IDLE_CALLS;
            let pick = match self.current {
                OpKind::Write => {
                    let switch_worth = self.reads.len() >= self.switch_backlog()
                        || fresh
                        || restless;
                    if !self.writes.is_empty() && !block_full {
                        OpKind::Write
                    } else if self.read_may_go()
                        && (block_full || (self.writes.is_empty() && switch_worth))
                    {
                        OpKind::Read
                    } else if !self.writes.is_empty() {
                        // Block overran but the pending read must not pass
                        // the older write: keep writing.
                        OpKind::Write
                    } else {
                        break;
                    }
                }
                OpKind::Read => {
                    let ordering_blocked = !self.reads.is_empty() && !self.read_may_go();
                    let switch_worth = self.writes.len() >= self.switch_backlog()
                        || fresh
                        || restless;
                    if self.read_may_go() && !block_full {
                        OpKind::Read
                    } else if !self.writes.is_empty()
                        && (block_full || ordering_blocked || switch_worth)
                    {
                        OpKind::Write
                    } else if self.read_may_go() {
                        OpKind::Read
                    } else {
                        break;
                    }
                }
            };
            if pick != self.current {
                self.current = pick;
                self.in_block = 0;
                self.kind_switches += 1;
            }
            let (_, op) = match pick {
                OpKind::Read => self.reads.pop_front().expect("read available"),
                OpKind::Write => self.writes.pop_front().expect("write available"),
            };
            self.in_block += 1;
            self.emitted_total += 1;
            out.push(op);
        }
        if out.is_empty() && !self.is_empty() {
            self.idle_streak += 1;
        } else {
            self.idle_streak = 0;
        }
        out
    }

    /// Return unaccepted ops to the head of their queues, preserving order.
    pub fn requeue(&mut self, ops: &[MemOp]) {
        for op in ops.iter().rev() {
            // Requeued ops keep priority over everything queued later; give
            // them a sequence below all current entries.
            let seq = self
                .reads
                .front()
                .map(|(s, _)| *s)
                .into_iter()
                .chain(self.writes.front().map(|(s, _)| *s))
                .min()
                .unwrap_or(self.next_seq)
                .saturating_sub(1);
            match op.kind {
                OpKind::Read => self.reads.push_front((seq, *op)),
                OpKind::Write => self.writes.push_front((seq, *op)),
            }
            // The requeued op restarts its block slot next emission.
            self.in_block = self.in_block.saturating_sub(1);
        }
    }
}

/// Merges application and administrative command streams for one user-clock
/// slot. Application ops always take priority; admin ops only fill lanes the
/// application left idle.
pub fn arbitrate(app_ops: Vec<MemOp>, admin_ops: &mut VecDeque<MemOp>, lanes: usize) -> Vec<MemOp> {
    let mut merged = app_ops;
    merged.truncate(lanes);
    while merged.len() < lanes {
        match admin_ops.pop_front() {
            Some(op) => merged.push(op),
            None => break,
        }
    }
    merged
}
