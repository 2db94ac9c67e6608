//! Behavioral reference model of a single conflation stage: a shift register
//! of slots with fully combinational parallel matching and immediate merge.

use crate::datapath::{LayoutConfig, Slot};

use super::{merge_lanes, ConflationError, StageConfig, StageOutput};

/// Reference conflation queue of depth `matchers`. Index 0 holds the newest
/// entry; the slot at index `matchers - 1` exits each unstalled cycle.
#[derive(Debug, Clone)]
pub struct RefStage {
    config: StageConfig,
    lane_max: u64,
    slots: Vec<Slot>,
}

impl RefStage {
    pub fn new(matchers: usize, layout: &LayoutConfig) -> Self {
        assert!(matchers >= 1, "a stage needs at least one matcher");
        Self {
            config: StageConfig::new(0, matchers),
            lane_max: layout.lane_max(),
            slots: vec![Slot::EMPTY; matchers],
        }
    }

    pub fn config(&self) -> StageConfig {
        self.config
    }

    /// Unstalled cycles from presenting an update to its exit.
    pub fn latency(&self) -> usize {
        self.config.matchers
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(Slot::is_empty)
    }

    /// Advance one cycle. A stalled cycle freezes all state and emits an
    /// empty slot; the caller re-presents the input next cycle.
    pub fn step(&mut self, input: Slot, stall: bool) -> Result<StageOutput, ConflationError> {
        if stall {
            return Ok(StageOutput::default());
        }
        let depth = self.config.matchers;

        // Parallel match against every pending slot, the exiting one included.
        let mut matched = false;
        if input.valid {
            let mut hits = self
                .slots
                .iter()
                .enumerate()
                .filter(|(_, s)| s.valid && s.key == input.key)
                .map(|(j, _)| j);
            if let Some(j) = hits.next() {
                debug_assert!(hits.next().is_none(), "duplicate key in reference stage");
                merge_lanes(&mut self.slots[j], input.master, input.shadow, self.lane_max)?;
                matched = true;
            }
        }

        let entry = if input.valid && !matched { input } else { Slot::EMPTY };
        let out = self.slots[depth - 1];
        for j in (1..depth).rev() {
            self.slots[j] = self.slots[j - 1];
        }
        self.slots[0] = entry;

        Ok(StageOutput {
            out,
            admitted: entry.valid,
            matched,
            hazard: false,
        })
    }
}
