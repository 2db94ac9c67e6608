//! Chained conflation stages. Earlier stages only conflate and manufacture
//! key spacing; the last stage alone decides which updates open a
//! read-modify-write cycle and which exiting slots complete one.

use crate::datapath::{Key, LayoutConfig, Slot};

use super::{ConflationError, DspStage, ScheduleConfig, StageOutput};

/// Observable result of one cascade cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CascadeOutput {
    /// Output of the last stage: `out` is the write-back candidate.
    pub out: StageOutput,
    /// Key admitted into the last stage this cycle; each one opens a new
    /// read-modify-write cycle.
    pub read_request: Option<Key>,
    /// Any stage flagged a spacing hazard this cycle.
    pub hazard: bool,
    /// Stages that conflated their arriving slot this cycle.
    pub conflated: u32,
}

/// Per-stage record of one cycle, for trace dumps.
#[derive(Debug, Clone, Copy)]
pub struct StageTraceRecord {
    pub stage: usize,
    pub input: Slot,
    pub output: StageOutput,
}

#[derive(Debug, Clone)]
pub struct Cascade {
    schedule: ScheduleConfig,
    stages: Vec<DspStage>,
    records: Vec<StageTraceRecord>,
    record_trace: bool,
}

impl Cascade {
    pub fn new(schedule: ScheduleConfig, layout: &LayoutConfig) -> Result<Self, ConflationError> {
        schedule.validate()?;
        let stages = schedule
            .stages
            .iter()
            .map(|&cfg| DspStage::new(cfg, layout))
            .collect();
        Ok(Self {
            schedule,
            stages,
            records: Vec::new(),
            record_trace: false,
        })
    }

    pub fn schedule(&self) -> &ScheduleConfig {
        &self.schedule
    }

    pub fn stages(&self) -> &[DspStage] {
        &self.stages
    }

    /// Unstalled cycles from cascade input to last-stage exit.
    pub fn total_latency(&self) -> usize {
        self.stages.iter().map(DspStage::latency).sum()
    }

    /// Enable per-stage trace records, retrievable after each step.
    pub fn set_record_trace(&mut self, enable: bool) {
        self.record_trace = enable;
    }

    pub fn last_records(&self) -> &[StageTraceRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.stages.iter().all(DspStage::is_empty)
    }

    /// Total increments in flight across all stages.
    pub fn lanes_in_flight(&self) -> (u64, u64) {
        self.stages.iter().fold((0, 0), |(m, s), stage| {
            let (sm, ss) = stage.lanes_in_flight();
            (m + sm, s + ss)
        })
    }

    /// Advance every stage one cycle. A stall freezes all of them; slots
    /// otherwise flow stage 0 towards the last.
    pub fn step(&mut self, input: Slot, stall: bool) -> Result<CascadeOutput, ConflationError> {
        self.records.clear();
        let mut carry = input;
        let mut hazard = false;
        let mut conflated = 0;
        let mut last = StageOutput::default();
        let n = self.stages.len();
        for (i, stage) in self.stages.iter_mut().enumerate() {
            let out = stage.step(carry, stall)?;
            hazard |= out.hazard;
            conflated += out.matched as u32;
            if self.record_trace {
                self.records.push(StageTraceRecord {
                    stage: i,
                    input: carry,
                    output: out,
                });
            }
            carry = out.out;
            if i == n - 1 {
                last = out;
            }
        }
        let read_request = if last.admitted {
            Some(self.stages[n - 1].newest().key)
        } else {
            None
        };
        Ok(CascadeOutput {
            out: last,
            read_request,
            hazard,
            conflated,
        })
    }
}
