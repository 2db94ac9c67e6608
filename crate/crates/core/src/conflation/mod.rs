//! Update conflation queues: the reference stage model, the register-accurate
//! DSP-mapped stage with pipelined match feedback, and cascades of stages.
//!
//! A stage is a fixed-depth pipeline of key/count slots with fully parallel
//! key matching. A new update whose key matches a pending slot is merged into
//! that slot instead of being admitted, so at most one update cycle per key is
//! ever in flight. Deep stages need their match feedback pipelined, which in
//! turn requires a minimum spacing between identical input keys; cascading a
//! shallow stage in front manufactures exactly that spacing.

mod cascade;
mod dsp_stage;
mod ref_stage;

pub use cascade::{Cascade, CascadeOutput, StageTraceRecord};
pub use dsp_stage::DspStage;
pub use ref_stage::RefStage;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datapath::{Key, Slot};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConflationError {
    #[error("merge on key {key:#x} overflows the {width}-bit count lane ({value})")]
    LaneOverflow { key: Key, value: u64, width: u32 },
    #[error("schedule stage {stage}: gap_in {gap_in} exceeds upstream gap_out {upstream}")]
    InsufficientSpacing {
        stage: usize,
        gap_in: usize,
        upstream: usize,
    },
    #[error("schedule is empty or stage 0 has nonzero gap_in")]
    MalformedSchedule,
}

/// One conflation stage: `gap_in` feedback/input delay registers and
/// `matchers` parallel key comparators (= the queue depth).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageConfig {
    pub gap_in: usize,
    pub matchers: usize,
}

impl StageConfig {
    pub fn new(gap_in: usize, matchers: usize) -> Self {
        Self { gap_in, matchers }
    }

    /// Spacing guarantee on the stage output stream.
    pub fn gap_out(&self) -> usize {
        self.gap_in + self.matchers
    }
}

/// An ordered cascade of conflation stages. Stage 0 takes the raw stream and
/// must therefore tolerate arbitrary spacing (`gap_in = 0`); every later
/// stage may rely on at most the spacing its predecessor guarantees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub stages: Vec<StageConfig>,
}

impl ScheduleConfig {
    pub fn new(stages: Vec<StageConfig>) -> Self {
        Self { stages }
    }

    /// The two-stage 0-6-250 schedule: a depth-6 opener with combinational
    /// feedback distancing the stream for a depth-244 deep stage.
    pub fn schedule_0_6_250() -> Self {
        Self::new(vec![StageConfig::new(0, 6), StageConfig::new(6, 244)])
    }

    pub fn validate(&self) -> Result<(), ConflationError> {
        let first = self.stages.first().ok_or(ConflationError::MalformedSchedule)?;
        if first.gap_in != 0 {
            return Err(ConflationError::MalformedSchedule);
        }
        if self.stages.iter().any(|s| s.matchers == 0) {
            return Err(ConflationError::MalformedSchedule);
        }
        for (i, pair) in self.stages.windows(2).enumerate() {
            let upstream = pair[0].gap_out();
            if pair[1].gap_in > upstream {
                return Err(ConflationError::InsufficientSpacing {
                    stage: i + 1,
                    gap_in: pair[1].gap_in,
                    upstream,
                });
            }
        }
        Ok(())
    }

    /// Total comparator count across all stages.
    pub fn total_matchers(&self) -> usize {
        self.stages.iter().map(|s| s.matchers).sum()
    }

    /// Unstalled cycles from presenting an update to its exit from the last
    /// stage, assuming it is never conflated.
    pub fn total_latency(&self) -> usize {
        self.stages.iter().map(|s| s.matchers + s.gap_in + 1).sum()
    }

    /// Spacing guarantee of the last stage's output stream.
    pub fn final_gap_out(&self) -> usize {
        self.stages.last().map(StageConfig::gap_out).unwrap_or(0)
    }
}

/// Per-cycle observable result of stepping a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageOutput {
    /// Slot leaving the stage this cycle (empty if none).
    pub out: Slot,
    /// A new valid entry was accepted into the queue this cycle.
    pub admitted: bool,
    /// The arriving update was conflated into a pending entry.
    pub matched: bool,
    /// Spacing-violation diagnostic: a duplicate key was admitted or matched
    /// ambiguously. Never raised when the input spacing precondition holds.
    pub hazard: bool,
}

/// Minimum distance between two valid slots with equal keys in a recorded
/// stream; `None` if no key repeats.
pub fn min_key_gap(stream: &[Slot]) -> Option<usize> {
    let mut last_seen: std::collections::HashMap<Key, usize> = std::collections::HashMap::new();
    let mut min_gap: Option<usize> = None;
    for (pos, slot) in stream.iter().enumerate() {
        if !slot.valid {
            continue;
        }
        if let Some(prev) = last_seen.insert(slot.key, pos) {
            let gap = pos - prev;
            min_gap = Some(min_gap.map_or(gap, |g: usize| g.min(gap)));
        }
    }
    min_gap
}

pub(crate) fn merge_lanes(
    target: &mut Slot,
    master: u64,
    shadow: u64,
    lane_max: u64,
) -> Result<(), ConflationError> {
    target.master += master;
    target.shadow += shadow;
    if target.master > lane_max || target.shadow > lane_max {
        return Err(ConflationError::LaneOverflow {
            key: target.key,
            value: target.master.max(target.shadow),
            width: lane_max.count_ones(),
        });
    }
    Ok(())
}
