//! End-to-end simulation: source -> lane routing -> conflation cascade ->
//! read-modify-write engine -> command scheduler -> arbiter -> memory, with
//! in-order replies flowing back to the engine and snapshot controller.
//!
//! One loop iteration is one app-clock cycle; user-clock ticks fire from an
//! integer credit accumulator, so a run is bit-reproducible for a given
//! configuration.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::conflation::{Cascade, ConflationError};
use crate::datapath::{Key, Slot};
use crate::memory::MemoryModel;
use crate::rmw::{arbitrate, MemOp, OpKind, OpSource, RmwEngine, RmwError, Scheduler};
use crate::stats::{
    route_event, verify_against_oracle, OracleHistogram, OracleReport, SnapshotController,
    SnapshotError,
};

use super::config::{ConfigError, RunConfig};
use super::metrics::Metrics;
use super::source::{EventSource, SourceError, SourcePoll};
use super::trace::{write_memory_dump, write_snapshot_csv, TraceWriter};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Conflation(#[from] ConflationError),
    #[error(transparent)]
    Rmw(#[from] RmwError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("trace: {0}")]
    Trace(#[from] std::io::Error),
    #[error("simulation did not drain within {limit} cycles")]
    Hang { limit: u64 },
}

#[derive(Debug)]
pub struct SimOutcome {
    pub metrics: Metrics,
    pub memory_dump: BTreeMap<Key, (u64, u64)>,
    pub oracle_report: Option<OracleReport>,
    /// One table per completed snapshot, in script order.
    pub snapshot_tables: Vec<BTreeMap<Key, u64>>,
    pub warnings: Vec<String>,
}

pub fn run_sim(config: &RunConfig) -> Result<SimOutcome, SimError> {
    let warnings = config.validate()?;
    let mut source = EventSource::new(&config.source)?;
    let mut oracle = config.oracle_check.then(OracleHistogram::new);
    let mut cascade = Cascade::new(config.schedule.clone(), &config.layout)?;
    let mut engine = RmwEngine::new();
    let mut scheduler = Scheduler::new(config.block_size);
    let mut admin: VecDeque<MemOp> = VecDeque::new();
    let mut snapshot = SnapshotController::new(config.source.key_space);
    let mut memory = MemoryModel::new(config.memory);
    let mut metrics = Metrics::default();
    let mut snapshot_tables = Vec::new();

    let mut trace = match &config.trace_dir {
        Some(dir) => {
            cascade.set_record_trace(true);
            Some(TraceWriter::create(dir, config.layout)?)
        }
        None => None,
    };

    let mut script: VecDeque<u64> = {
        let mut s = config.snapshot_script.clone();
        s.sort_unstable();
        s.into()
    };

    // Conservation ledgers: increments routed into the pipeline vs committed
    // to memory. Their difference is exactly what is in flight. Emitted but
    // not yet applied write increments are keyed by address; hazard freedom
    // guarantees at most one outstanding write per key.
    let mut routed = (0u64, 0u64);
    let mut committed = (0u64, 0u64);
    let mut write_deltas: BTreeMap<Key, (u64, u64)> = BTreeMap::new();

    let app_hz = config.memory.app_clock_hz;
    let user_hz = config.memory.user_clock_hz;
    let lanes = config.memory.lanes_per_user_tick as usize;
    let mut user_credit = 0u64;
    let mut user_tick = 0u64;
    let mut stall = false;
    let mut was_idle = true;

    let limit = hang_limit(config, source.total());
    let mut cycle = 0u64;

    loop {
        for (reply, is_admin) in memory.matured_replies(cycle) {
            if is_admin {
                snapshot.accept_reply(&reply);
            } else {
                engine.accept_reply(reply)?;
            }
        }

        if script.front() == Some(&cycle) {
            script.pop_front();
            snapshot.start()?;
        }
        snapshot.step(
            cycle,
            routed.0 - committed.0,
            routed.1,
            committed.1,
            &mut admin,
        );
        if snapshot.is_idle() && !was_idle {
            snapshot_tables.push(snapshot.table().clone());
        }
        was_idle = snapshot.is_idle();

        let input = if stall {
            if source.is_exhausted() {
                metrics.drain_stalls += 1;
            } else {
                metrics.stalls += 1;
            }
            Slot::EMPTY
        } else {
            match source.poll() {
                SourcePoll::Event(key) => {
                    if let Some(o) = oracle.as_mut() {
                        o.record(key);
                    }
                    let slot = route_event(key, snapshot.phase());
                    snapshot.observe_routed(&slot);
                    routed.0 += slot.master;
                    routed.1 += slot.shadow;
                    metrics.events_in += 1;
                    slot
                }
                SourcePoll::Gap | SourcePoll::Exhausted => Slot::EMPTY,
            }
        };

        let cascade_out = cascade.step(input, stall)?;
        metrics.conflations += cascade_out.conflated as u64;
        metrics.hazards += cascade_out.hazard as u64;
        if let Some(t) = trace.as_mut() {
            t.stage_rows(cycle, cascade.last_records())?;
            if cascade_out.out.out.valid {
                t.packed_exit(&cascade_out.out.out)?;
            }
        }

        let step = engine.step(&cascade_out, cycle)?;
        for op in &step.ops {
            match op.kind {
                OpKind::Read => metrics.reads += 1,
                OpKind::Write => {
                    metrics.writes += 1;
                    if let Some(delta) = step.write_increments {
                        let prev = write_deltas.insert(op.address, delta);
                        debug_assert!(prev.is_none(), "two writes in flight for one key");
                    }
                }
            }
            scheduler.enqueue(*op);
        }
        stall = step.backpressure;

        user_credit += user_hz;
        while user_credit >= app_hz {
            user_credit -= app_hz;
            let app_plan = scheduler.emit(lanes);
            let merged = arbitrate(app_plan, &mut admin, lanes);
            let flags = memory.submit(&merged, user_tick);
            let mut app_rejected = Vec::new();
            for (op, ok) in merged.iter().zip(&flags) {
                if *ok {
                    if op.kind == OpKind::Write && op.source == OpSource::App {
                        let (dm, ds) =
                            write_deltas.remove(&op.address).expect("tracked write delta");
                        committed.0 += dm;
                        committed.1 += ds;
                    }
                } else if op.source == OpSource::App {
                    app_rejected.push(*op);
                }
            }
            if let Some(t) = trace.as_mut() {
                let placed: Vec<MemOp> = merged
                    .iter()
                    .zip(&flags)
                    .filter(|(_, ok)| **ok)
                    .map(|(op, _)| *op)
                    .collect();
                t.command_rows(user_tick, &placed)?;
            }
            for (op, ok) in merged.iter().zip(&flags).rev() {
                if !*ok && op.source == OpSource::Admin {
                    admin.push_front(*op);
                }
            }
            scheduler.requeue(&app_rejected);
            user_tick += 1;
        }

        #[cfg(debug_assertions)]
        if cycle.is_multiple_of(1009) {
            let (cm, cs) = cascade.lanes_in_flight();
            let (em, es) = engine.lanes_in_flight();
            let queued: (u64, u64) = write_deltas
                .values()
                .fold((0, 0), |(a, b), (m, s)| (a + m, b + s));
            debug_assert_eq!(routed.0 - committed.0, cm + em + queued.0);
            debug_assert_eq!(routed.1 - committed.1, cs + es + queued.1);
        }

        cycle += 1;
        if source.is_exhausted()
            && !stall
            && cascade.is_empty()
            && engine.is_empty()
            && scheduler.is_empty()
            && admin.is_empty()
            && memory.reads_outstanding() == 0
            && snapshot.is_idle()
            && script.is_empty()
        {
            break;
        }
        if cycle >= limit {
            return Err(SimError::Hang { limit });
        }
    }

    metrics.cycles = cycle;
    metrics.user_ticks = user_tick;
    metrics.rmw_duplicate_pending = engine.diagnostics().duplicate_pending;
    metrics.rmw_key_mismatches = engine.diagnostics().key_mismatches;
    metrics.effective_rate = memory.effective_rate();
    metrics.memory = memory.metrics();
    metrics.derive(&config.schedule, &config.memory);

    let memory_dump = memory.storage().clone();
    let oracle_report = oracle
        .as_ref()
        .map(|o| verify_against_oracle(&memory_dump, &[], o));

    if let Some(t) = trace.as_mut() {
        t.flush()?;
    }
    if let Some(dir) = &config.trace_dir {
        write_memory_dump(&dir.join("memory.csv"), &memory_dump)?;
        for (i, table) in snapshot_tables.iter().enumerate() {
            write_snapshot_csv(&dir.join(format!("snapshot_{i}.csv")), table)?;
        }
        if let Some(report) = &oracle_report {
            std::fs::write(
                dir.join("oracle_report.json"),
                serde_json::to_string_pretty(report).expect("report serialize"),
            )?;
        }
    }

    Ok(SimOutcome {
        metrics,
        memory_dump,
        oracle_report,
        snapshot_tables,
        warnings,
    })
}

fn hang_limit(config: &RunConfig, events: u64) -> u64 {
    // An undersized cascade against a long read latency throttles the run to
    // roughly depth/latency events per cycle, and a duty-cycled source
    // stretches wall time further; budget generously for both regimes.
    let depth = (config.schedule.total_latency() as u64).max(1);
    let saturation = (config.memory.base_read_latency_app_cycles * 8 / depth).max(4);
    let duty = match config.source.kind {
        crate::harness::source::SourceKind::Burst { period, width } => {
            (period.max(1)).div_ceil(width.clamp(1, period.max(1)))
        }
        _ => 1,
    };
    let per_event = config
        .source
        .stride
        .max(1)
        .saturating_mul(duty)
        .saturating_mul(saturation);
    let snapshot_cost = (config.snapshot_script.len() as u64 + 1)
        .saturating_mul(config.source.key_space.saturating_mul(4).max(1_000));
    1_000_000
        + events.saturating_mul(per_event)
        + snapshot_cost
        + config.schedule.total_latency() as u64 * 16
        + config.memory.base_read_latency_app_cycles * 16
}
