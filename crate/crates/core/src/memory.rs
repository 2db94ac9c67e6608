//! Parameterized RLDRAM-like timing model: per-tick command lanes, banked
//! cycle-time constraints, bus-turnaround penalties, periodic refresh
//! blackouts, and in-order read replies with a configurable base latency.
//!
//! Command slots are counted in memory-clock ticks, `lanes_per_user_tick` of
//! them per user-clock tick (8 x 133.25 MHz = 1066 MT/s peak by default).

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::datapath::Key;
use crate::rmw::{MemOp, OpKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryConfig {
    pub user_clock_hz: u64,
    pub app_clock_hz: u64,
    /// Command slots per user tick; also the memory-to-user clock ratio.
    pub lanes_per_user_tick: u64,
    pub banks: u64,
    /// Minimum slots between successive commands to the same bank (tRC).
    pub bank_cycle_ticks: u64,
    /// Minimum slots between commands of differing kind (bus turnaround).
    pub turnaround_ticks: u64,
    pub base_read_latency_app_cycles: u64,
    /// Slots between refresh blackouts; 0 disables refresh.
    pub refresh_interval_ticks: u64,
    /// Blackout length in slots.
    pub refresh_penalty_ticks: u64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            user_clock_hz: 133_250_000,
            app_clock_hz: 375_000_000,
            lanes_per_user_tick: 8,
            banks: 16,
            bank_cycle_ticks: 8,
            // Calibrated against analytic_block_schedule_rate so the
            // grouped 16/16 schedule lands below 60% of peak.
            turnaround_ticks: 12,
            base_read_latency_app_cycles: 220,
            refresh_interval_ticks: 3900,
            refresh_penalty_ticks: 130,
        }
    }
}

impl MemoryConfig {
    /// Nominal peak in transactions per second.
    pub fn peak_rate(&self) -> f64 {
        (self.lanes_per_user_tick * self.user_clock_hz) as f64
    }

    /// App cycle in which a command placed at `slot` is visible.
    fn slot_to_app_cycle(&self, slot: u64) -> u64 {
        let num = slot as u128 * self.app_clock_hz as u128;
        let den = self.lanes_per_user_tick as u128 * self.user_clock_hz as u128;
        (num / den) as u64
    }
}

/// In-order read reply carrying both stored counter words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemReply {
    pub address: Key,
    pub master: u64,
    pub shadow: u64,
    pub reply_cycle: u64,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct MemoryMetrics {
    pub completed_reads: u64,
    pub completed_writes: u64,
    pub turnaround_count: u64,
    pub refresh_stall_ticks: u64,
    pub bank_stall_ticks: u64,
    pub rejected_submissions: u64,
}

#[derive(Debug, Clone, Copy)]
struct InFlightRead {
    reply: MemReply,
    source_admin: bool,
}

/// The memory device and controller behind the command lanes.
#[derive(Debug)]
pub struct MemoryModel {
    config: MemoryConfig,
    storage: BTreeMap<Key, (u64, u64)>,
    /// Next free command slot, in memory ticks.
    cursor: u64,
    bank_busy_until: Vec<u64>,
    last_kind: Option<OpKind>,
    last_slot: u64,
    reads_in_flight: VecDeque<InFlightRead>,
    metrics: MemoryMetrics,
    elapsed_user_ticks: u64,
}

impl MemoryModel {
    pub fn new(config: MemoryConfig) -> Self {
        let banks = config.banks.max(1) as usize;
        Self {
            config,
            storage: BTreeMap::new(),
            cursor: 0,
            bank_busy_until: vec![0; banks],
            last_kind: None,
            last_slot: 0,
            reads_in_flight: VecDeque::new(),
            metrics: MemoryMetrics::default(),
            elapsed_user_ticks: 0,
        }
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.config
    }

    pub fn metrics(&self) -> MemoryMetrics {
        self.metrics
    }

    pub fn storage(&self) -> &BTreeMap<Key, (u64, u64)> {
        &self.storage
    }

    pub fn value(&self, key: Key) -> (u64, u64) {
        self.storage.get(&key).copied().unwrap_or((0, 0))
    }

    pub fn reads_outstanding(&self) -> usize {
        self.reads_in_flight.len()
    }

    pub fn elapsed_user_ticks(&self) -> u64 {
        self.elapsed_user_ticks
    }

    /// Completed transactions as a fraction of the nominal peak over the
    /// elapsed user ticks.
    pub fn effective_rate(&self) -> f64 {
        let slots = self.elapsed_user_ticks * self.config.lanes_per_user_tick;
        if slots == 0 {
            return 0.0;
        }
        (self.metrics.completed_reads + self.metrics.completed_writes) as f64 / slots as f64
    }

    fn first_slot_of(&self, user_tick: u64) -> u64 {
        user_tick * self.config.lanes_per_user_tick
    }

    /// Push a slot out of any refresh blackout it falls into.
    fn skip_refresh(&self, slot: u64) -> u64 {
        let interval = self.config.refresh_interval_ticks;
        let penalty = self.config.refresh_penalty_ticks;
        if interval == 0 || penalty == 0 {
            return slot;
        }
        let k = slot / interval;
        if k >= 1 && slot % interval < penalty {
            return k * interval + penalty;
        }
        slot
    }

    /// Admit `ops` into the command slots of `user_tick`, subject to bank
    /// busy windows, bus turnaround and refresh blackouts. Returns one
    /// accepted flag per op; rejected ops stay with the scheduler.
    ///
    /// A bank conflict rejects that op and everything behind it to the same
    /// bank, preserving per-address order; writes to other banks keep filling
    /// slots. Reads are never admitted past a rejected read, so replies stay
    /// in issue order. A bus-level blockage, meaning turnaround, refresh or
    /// an exhausted slot window, rejects the rest of the batch since the
    /// commands of one tick share the bus in order.
    pub fn submit(&mut self, ops: &[MemOp], user_tick: u64) -> Vec<bool> {
        assert!(ops.len() as u64 <= self.config.lanes_per_user_tick);
        self.note_tick(user_tick);
        let window_start = self.first_slot_of(user_tick);
        let window_end = self.first_slot_of(user_tick + 1);
        self.cursor = self.cursor.max(window_start);

        let banks = self.config.banks.max(1) as usize;
        let mut blocked_banks = vec![false; banks];
        let mut reads_blocked = false;
        let mut accepted = vec![false; ops.len()];
        for (idx, op) in ops.iter().enumerate() {
            let bank = (op.address % banks as u64) as usize;
            if blocked_banks[bank] || (reads_blocked && op.kind == OpKind::Read) {
                reads_blocked |= op.kind == OpKind::Read;
                self.metrics.rejected_submissions += 1;
                continue;
            }
            let mut bus_free = self.cursor;
            let switching = self.last_kind.is_some() && self.last_kind != Some(op.kind);
            if switching {
                bus_free = bus_free.max(self.last_slot + self.config.turnaround_ticks);
            }
            let bus_slot = self.skip_refresh(bus_free);
            if bus_slot >= window_end {
                self.metrics.rejected_submissions += (ops.len() - idx) as u64;
                break;
            }
            let bank_stall = self.bank_busy_until[bank].saturating_sub(bus_slot);
            let slot = self.skip_refresh(bus_slot + bank_stall);
            if slot >= window_end {
                blocked_banks[bank] = true;
                reads_blocked |= op.kind == OpKind::Read;
                self.metrics.rejected_submissions += 1;
                continue;
            }
            self.metrics.bank_stall_ticks += bank_stall;
            self.metrics.refresh_stall_ticks +=
                (bus_slot - bus_free) + (slot - (bus_slot + bank_stall));

            match op.kind {
                OpKind::Read => {
                    let (master, shadow) = self.value(op.address);
                    let reply_cycle = self.config.slot_to_app_cycle(slot)
                        + self.config.base_read_latency_app_cycles;
                    self.reads_in_flight.push_back(InFlightRead {
                        reply: MemReply {
                            address: op.address,
                            master,
                            shadow,
                            reply_cycle,
                        },
                        source_admin: matches!(op.source, crate::rmw::OpSource::Admin),
                    });
                    self.metrics.completed_reads += 1;
                }
                OpKind::Write => {
                    if op.merge_shadow {
                        let (master, shadow) = self.value(op.address);
                        self.storage.insert(op.address, (master + shadow, 0));
                    } else {
                        let data = op.data.expect("write op carries data");
                        self.storage.insert(op.address, data);
                    }
                    self.metrics.completed_writes += 1;
                }
            }
            if switching {
                self.metrics.turnaround_count += 1;
            }
            self.last_kind = Some(op.kind);
            self.last_slot = slot;
            self.bank_busy_until[bank] = slot + self.config.bank_cycle_ticks;
            self.cursor = slot + 1;
            accepted[idx] = true;
        }
        accepted
    }

    /// Record time passing for rate accounting, without submitting.
    pub fn note_tick(&mut self, user_tick: u64) {
        self.elapsed_user_ticks = self.elapsed_user_ticks.max(user_tick + 1);
    }

    /// Replies whose latency has elapsed by `app_cycle`, in issue order.
    /// The boolean marks administrative reads.
    pub fn matured_replies(&mut self, app_cycle: u64) -> Vec<(MemReply, bool)> {
        let mut out = Vec::new();
        while let Some(front) = self.reads_in_flight.front() {
            if front.reply.reply_cycle <= app_cycle {
                let r = self.reads_in_flight.pop_front().unwrap();
                out.push((r.reply, r.source_admin));
            } else {
                break;
            }
        }
        out
    }
}

/// Closed-form throughput of a periodic schedule alternating blocks of
/// `reads_per_block` reads and `writes_per_block` writes with a perfect
/// cycling over the banks: the fraction of command slots doing useful work
/// once turnaround gaps, bank stalls and refresh blackouts are charged.
///
/// This is the calibration oracle for the timing defaults; the simulator
/// must agree with it within a couple of percent on saturated streams.
pub fn analytic_block_schedule_rate(
    config: &MemoryConfig,
    reads_per_block: u64,
    writes_per_block: u64,
) -> f64 {
    let ops = reads_per_block + writes_per_block;
    if ops == 0 {
        return 0.0;
    }
    let switches = if reads_per_block > 0 && writes_per_block > 0 {
        2
    } else {
        0
    };
    // A differing-kind command waits turnaround_ticks after its predecessor,
    // leaving turnaround_ticks - 1 idle slots per switch.
    let turnaround_idle = switches * config.turnaround_ticks.saturating_sub(1);
    // Round-robin over `banks` banks revisits a bank every `banks` slots.
    let bank_idle = ops * config.bank_cycle_ticks.saturating_sub(config.banks);
    let period = ops + turnaround_idle + bank_idle;
    let raw = ops as f64 / period as f64;
    let refresh_factor = if config.refresh_interval_ticks > 0 && config.refresh_penalty_ticks > 0 {
        (config.refresh_interval_ticks - config.refresh_penalty_ticks) as f64
            / config.refresh_interval_ticks as f64
    } else {
        1.0
    };
    raw * refresh_factor
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rmw::OpSource;

    fn no_refresh() -> MemoryConfig {
        MemoryConfig {
            refresh_interval_ticks: 0,
            ..MemoryConfig::default()
        }
    }

    #[test]
    fn default_peak_is_1066_mts() {
        let config = MemoryConfig::default();
        assert_eq!(config.peak_rate(), 1.066e9);
    }

    #[test]
    fn single_read_to_idle_bank_is_accepted_with_base_latency() {
        let mut mem = MemoryModel::new(no_refresh());
        let accepted = mem.submit(&[MemOp::read(5, 0)], 0);
        assert_eq!(accepted, vec![true]);
        assert!(mem.matured_replies(219).is_empty());
        let replies = mem.matured_replies(220);
        assert_eq!(replies.len(), 1);
        assert_eq!(replies[0].0.address, 5);
        assert_eq!(replies[0].0.reply_cycle, 220);
        assert!(!replies[0].1);
    }

    #[test]
    fn same_bank_conflict_rejects_within_bank_cycle() {
        let mut mem = MemoryModel::new(no_refresh());
        // Keys 0 and 16 share bank 0; tRC = 8 exceeds the 8-slot window
        // minus the first slot, so the second op cannot fit this tick.
        let ops = [MemOp::read(0, 0), MemOp::read(16, 0)];
        let accepted = mem.submit(&ops, 0);
        assert_eq!(accepted, vec![true, false]);
        // Next tick has room at slot 8.
        let accepted = mem.submit(&ops[1..], 1);
        assert_eq!(accepted, vec![true]);
    }

    #[test]
    fn bank_conflict_does_not_block_other_bank_writes() {
        let mut mem = MemoryModel::new(no_refresh());
        // Keys 0 and 16 collide on bank 0; writes to other banks may pass
        // the stuck one.
        let ops = [
            MemOp::write(0, 0, 0, 0),
            MemOp::write(16, 0, 0, 0),
            MemOp::write(1, 0, 0, 0),
            MemOp::write(2, 0, 0, 0),
            MemOp::write(3, 0, 0, 0),
        ];
        let accepted = mem.submit(&ops, 0);
        assert_eq!(accepted, vec![true, false, true, true, true]);
    }

    #[test]
    fn reads_are_never_admitted_past_a_rejected_read() {
        let mut mem = MemoryModel::new(no_refresh());
        // The bank-0 collision rejects the second read; the bank-1 read
        // behind it must wait too, so replies stay in issue order.
        let ops = [MemOp::read(0, 0), MemOp::read(16, 0), MemOp::read(1, 0)];
        let accepted = mem.submit(&ops, 0);
        assert_eq!(accepted, vec![true, false, false]);
    }

    #[test]
    fn write_then_read_same_address_returns_post_write_value() {
        let mut mem = MemoryModel::new(no_refresh());
        assert_eq!(mem.submit(&[MemOp::write(7, 41, 1, 0)], 0), vec![true]);
        // Turnaround and the bank cycle push the read into a later tick.
        let mut tick = 1;
        while !mem.submit(&[MemOp::read(7, 0)], tick)[0] {
            tick += 1;
        }
        let replies = mem.matured_replies(u64::MAX);
        assert_eq!(replies[0].0.master, 41);
        assert_eq!(replies[0].0.shadow, 1);
    }

    #[test]
    fn merge_shadow_folds_atomically() {
        let mut mem = MemoryModel::new(no_refresh());
        assert_eq!(mem.submit(&[MemOp::write(3, 10, 4, 0)], 0), vec![true]);
        assert_eq!(mem.submit(&[MemOp::admin_merge(3, 0)], 1), vec![true]);
        assert_eq!(mem.value(3), (14, 0));
    }

    #[test]
    fn read_inside_refresh_window_is_delayed() {
        let config = MemoryConfig {
            refresh_interval_ticks: 64,
            refresh_penalty_ticks: 16,
            ..MemoryConfig::default()
        };
        let mut mem = MemoryModel::new(config);
        // User tick 8 starts at slot 64, the beginning of refresh window 1;
        // the scheduler re-presents the read until a slot opens at 80.
        let mut tick = 8;
        while !mem.submit(&[MemOp::read(1, 0)], tick)[0] {
            tick += 1;
        }
        let reply = mem.matured_replies(u64::MAX)[0].0;
        let undelayed = config.slot_to_app_cycle(64) + config.base_read_latency_app_cycles;
        let delayed = config.slot_to_app_cycle(80) + config.base_read_latency_app_cycles;
        assert_eq!(reply.reply_cycle, delayed);
        assert!(reply.reply_cycle > undelayed);
        assert!(mem.metrics().rejected_submissions > 0);
    }

    #[test]
    fn alternating_kinds_collapse_against_grouped_schedule() {
        let run = |group: bool| -> f64 {
            let mut mem = MemoryModel::new(no_refresh());
            let mut tick = 0u64;
            let mut queue: VecDeque<MemOp> = VecDeque::new();
            for i in 0..4096u64 {
                let key = i % 16;
                if group {
                    // blocks of 16 reads then 16 writes
                    if (i / 16) % 2 == 0 {
                        queue.push_back(MemOp::read(key, 0));
                    } else {
                        queue.push_back(MemOp::write(key, 0, 0, 0));
                    }
                } else if i % 2 == 0 {
                    queue.push_back(MemOp::read(key, 0));
                } else {
                    queue.push_back(MemOp::write(key, 0, 0, 0));
                }
            }
            while !queue.is_empty() {
                let lanes = mem.config().lanes_per_user_tick as usize;
                let batch: Vec<MemOp> = queue.iter().take(lanes).copied().collect();
                let flags = mem.submit(&batch, tick);
                let mut rest: VecDeque<MemOp> = batch
                    .iter()
                    .zip(&flags)
                    .filter(|(_, ok)| !**ok)
                    .map(|(op, _)| *op)
                    .collect();
                rest.extend(queue.iter().skip(batch.len()).copied());
                queue = rest;
                tick += 1;
            }
            mem.effective_rate()
        };
        let grouped = run(true);
        let alternating = run(false);
        assert!(alternating < grouped / 3.0, "alternating {alternating} vs grouped {grouped}");
    }

    #[test]
    fn saturated_single_kind_stream_approaches_peak() {
        let mut mem = MemoryModel::new(no_refresh());
        for tick in 0..1000u64 {
            let ops: Vec<MemOp> = (0..8).map(|l| MemOp::read(tick * 8 + l, 0)).collect();
            let accepted = mem.submit(&ops, tick);
            assert!(accepted.iter().all(|&ok| ok));
        }
        assert!(mem.effective_rate() > 0.999);
    }

    #[test]
    fn analytic_rate_matches_hand_computation() {
        let config = MemoryConfig::default();
        // 32 ops + 2 switches x 11 idle slots, scaled by the refresh duty.
        let expect = 32.0 / 54.0 * (3770.0 / 3900.0);
        let got = analytic_block_schedule_rate(&config, 16, 16);
        assert!((got - expect).abs() < 1e-12);
        assert!(got < 0.60);
    }

    #[test]
    fn analytic_single_kind_is_refresh_bound_only() {
        let config = MemoryConfig::default();
        let got = analytic_block_schedule_rate(&config, 16, 0);
        assert!((got - 3770.0 / 3900.0).abs() < 1e-12);
    }

    #[test]
    fn contention_never_reduces_a_reply_latency() {
        let reads: Vec<MemOp> = (0..32).map(|k| MemOp::read(k, 0)).collect();
        let reply_cycles = |interleave_writes: bool| -> Vec<u64> {
            let mut mem = MemoryModel::new(no_refresh());
            let mut tick = 0u64;
            let mut pending: VecDeque<MemOp> = reads.iter().copied().collect();
            if interleave_writes {
                let mut mixed = VecDeque::new();
                for (i, op) in pending.into_iter().enumerate() {
                    mixed.push_back(MemOp::write(100 + i as u64, 0, 0, 0));
                    mixed.push_back(op);
                }
                pending = mixed;
            }
            while !pending.is_empty() {
                let batch: Vec<MemOp> = pending.iter().take(8).copied().collect();
                let flags = mem.submit(&batch, tick);
                let mut rest: VecDeque<MemOp> = batch
                    .iter()
                    .zip(&flags)
                    .filter(|(_, ok)| !**ok)
                    .map(|(op, _)| *op)
                    .collect();
                rest.extend(pending.iter().skip(batch.len()).copied());
                pending = rest;
                tick += 1;
            }
            mem.matured_replies(u64::MAX)
                .iter()
                .map(|(r, _)| r.reply_cycle)
                .collect()
        };
        let clean = reply_cycles(false);
        let contended = reply_cycles(true);
        assert_eq!(clean.len(), contended.len());
        for (a, b) in clean.iter().zip(&contended) {
            assert!(b >= a, "contention reduced a reply latency: {b} < {a}");
        }
    }

    #[test]
    fn admin_reads_are_tagged_in_replies() {
        let mut mem = MemoryModel::new(no_refresh());
        let ops = [
            MemOp::read(1, 0),
            MemOp {
                source: OpSource::Admin,
                ..MemOp::read(2, 0)
            },
        ];
        assert_eq!(mem.submit(&ops, 0), vec![true, true]);
        let replies = mem.matured_replies(u64::MAX);
        assert!(!replies[0].1);
        assert!(replies[1].1);
    }

    #[test]
    fn replies_preserve_issue_order_under_contention() {
        let mut mem = MemoryModel::new(MemoryConfig {
            refresh_interval_ticks: 40,
            refresh_penalty_ticks: 10,
            ..MemoryConfig::default()
        });
        let mut issued = Vec::new();
        let mut tick = 0u64;
        let mut key = 0u64;
        while issued.len() < 200 {
            let ops: Vec<MemOp> = (0..4).map(|l| MemOp::read(key + l, 0)).collect();
            let flags = mem.submit(&ops, tick);
            let taken = flags.iter().filter(|&&ok| ok).count();
            issued.extend(
                ops.iter()
                    .zip(&flags)
                    .filter(|(_, ok)| **ok)
                    .map(|(o, _)| o.address),
            );
            key += taken as u64;
            tick += 1;
        }
        let replies = mem.matured_replies(u64::MAX);
        let order: Vec<Key> = replies.iter().map(|(r, _)| r.address).collect();
        assert_eq!(order, issued);
        let mut cycles: Vec<u64> = replies.iter().map(|(r, _)| r.reply_cycle).collect();
        let sorted = {
            let mut c = cycles.clone();
            c.sort_unstable();
            c
        };
        cycles.sort_unstable();
        assert_eq!(cycles, sorted);
    }
}
