//! Register-accurate model of a conflation stage mapped onto a DSP slice
//! chain: registered comparator results, the value-delay register on the
//! A:B path, the cascade of P output registers, the trailing merge slice,
//! and (for pipelined feedback) the input delay line plus the OR-reduction
//! register tree.

use std::collections::VecDeque;

use crate::datapath::{LayoutConfig, Slot};

use super::{merge_lanes, ConflationError, StageConfig, StageOutput};

/// A conflation stage as mapped onto DSP slices.
///
/// The arriving key is broadcast on the short comparator path and matched in
/// parallel while its key-value pair crawls through `gap_in` input delay
/// registers. The aggregated match is folded through a `gap_in`-deep register
/// tree and reaches the admission mux exactly when the delayed pair does,
/// replacing a matched pair by an empty slot. Comparator results are
/// registered, so a matched increment is merged one slice position later than
/// its comparison; a trailing slice catches the merge into an exiting value.
///
/// Pairs inside the input delay line are invisible to matching: valid inputs
/// that repeat a key with spacing < `gap_in` are admitted twice. The stage
/// flags this in [`StageOutput::hazard`] instead of erroring.
#[derive(Debug, Clone)]
pub struct DspStage {
    config: StageConfig,
    lane_max: u64,
    /// Input delay registers on the key-value path, length `gap_in`.
    delay: VecDeque<Slot>,
    /// Pipelined OR-reduction of the match vector, length `gap_in`.
    feedback: VecDeque<bool>,
    /// Registered comparator results, one per matcher position.
    match_regs: Vec<bool>,
    /// A:B-path register holding last cycle's increment lanes for the merge.
    value_reg: (u64, u64),
    /// P cascade registers; index 0 is the newest entry.
    pipe: Vec<Slot>,
    /// Trailing merge slice output register.
    tail: Slot,
}

impl DspStage {
    pub fn new(config: StageConfig, layout: &LayoutConfig) -> Self {
        assert!(config.matchers >= 1, "a stage needs at least one matcher");
        Self {
            config,
            lane_max: layout.lane_max(),
            delay: VecDeque::from(vec![Slot::EMPTY; config.gap_in]),
            feedback: VecDeque::from(vec![false; config.gap_in]),
            match_regs: vec![false; config.matchers],
            value_reg: (0, 0),
            pipe: vec![Slot::EMPTY; config.matchers],
            tail: Slot::EMPTY,
        }
    }

    pub fn config(&self) -> StageConfig {
        self.config
    }

    /// Unstalled cycles from presenting an update to its exit:
    /// `matchers + gap_in + OUTPUT_REGS`.
    pub fn latency(&self) -> usize {
        self.config.matchers + self.config.gap_in + Self::OUTPUT_REGS
    }

    /// Fixed implementation constant of the model: the trailing merge slice
    /// adds one output register beyond the matcher chain.
    pub const OUTPUT_REGS: usize = 1;

    /// Cycles by which this stage's output stream lags the reference model.
    pub fn delay_vs_reference(&self) -> usize {
        self.config.gap_in + Self::OUTPUT_REGS
    }

    /// Entry admitted most recently (valid only right after an admitting step).
    pub fn newest(&self) -> Slot {
        self.pipe[0]
    }

    pub fn is_empty(&self) -> bool {
        self.pipe.iter().all(Slot::is_empty)
            && self.tail.is_empty()
            && self.delay.iter().all(Slot::is_empty)
    }

    /// Total increments currently held in stage registers. Delay-line pairs
    /// whose feedback bit is already set are ghosts: their increments have
    /// been merged into the pipe and the pair itself will be squashed.
    pub fn lanes_in_flight(&self) -> (u64, u64) {
        let mut master = 0;
        let mut shadow = 0;
        for s in self.pipe.iter().chain([&self.tail]) {
            master += s.master;
            shadow += s.shadow;
        }
        for (s, &fed_back) in self.delay.iter().zip(self.feedback.iter()) {
            if !fed_back {
                master += s.master;
                shadow += s.shadow;
            }
        }
        if self.pending_merge() {
            master += self.value_reg.0;
            shadow += self.value_reg.1;
        }
        (master, shadow)
    }

    fn pending_merge(&self) -> bool {
        self.match_regs.iter().any(|&m| m)
    }

    /// Advance one cycle. A stalled cycle freezes every register and emits an
    /// empty slot.
    pub fn step(&mut self, input: Slot, stall: bool) -> Result<StageOutput, ConflationError> {
        if stall {
            return Ok(StageOutput::default());
        }
        let depth = self.config.matchers;
        let pipelined = self.config.gap_in > 0;
        let mut hazard = false;

        // Merges scheduled by last cycle's registered comparisons. With
        // pipelined feedback the comparison saw values arriving into slice j,
        // now stored at pipe[j]; with combinational feedback it saw stored
        // values, now one position further on (the exiting one in the tail).
        let (m_master, m_shadow) = self.value_reg;
        for j in 0..depth {
            if !self.match_regs[j] {
                continue;
            }
            let target = if pipelined {
                &mut self.pipe[j]
            } else if j + 1 < depth {
                &mut self.pipe[j + 1]
            } else {
                &mut self.tail
            };
            merge_lanes(target, m_master, m_shadow, self.lane_max)?;
        }

        let out = self.tail;

        // Admission mux: the delayed pair is squashed to an empty slot when
        // its match bit arrives through the feedback tree.
        let (candidate, fed_back) = if pipelined {
            (
                self.delay.pop_front().expect("delay line sized to gap_in"),
                self.feedback.pop_front().expect("feedback tree sized to gap_in"),
            )
        } else {
            let hit = input.valid && self.pipe.iter().any(|s| s.valid && s.key == input.key);
            (input, hit)
        };
        let matched = candidate.valid && fed_back;
        let entry = if matched { Slot::EMPTY } else { candidate };
        let admitted = entry.valid;
        if admitted {
            // Duplicate admission: the matching window missed a pending entry
            // with the same key (input spacing below gap_in).
            if self.pipe[..depth - 1].iter().any(|s| s.valid && s.key == entry.key) {
                hazard = true;
            }
        }

        // This cycle's comparisons, registered for next cycle's merge. The
        // broadcast key is matched against the values arriving into slices
        // 0..matchers (pipelined) or the stored slice contents (combinational).
        let mut any_match = false;
        let mut hits = 0u32;
        for j in 0..depth {
            let against = if pipelined {
                if j == 0 {
                    &entry
                } else {
                    &self.pipe[j - 1]
                }
            } else {
                &self.pipe[j]
            };
            let hit = input.valid && against.valid && against.key == input.key;
            self.match_regs[j] = hit;
            any_match |= hit;
            hits += hit as u32;
        }
        if hits > 1 {
            hazard = true;
        }
        self.value_reg = (input.master, input.shadow);

        // Clock edge: P cascade shift, trailing slice, delay line, OR tree.
        self.tail = self.pipe[depth - 1];
        for j in (1..depth).rev() {
            self.pipe[j] = self.pipe[j - 1];
        }
        self.pipe[0] = entry;
        if pipelined {
            self.delay.push_back(input);
            self.feedback.push_back(any_match);
        }

        Ok(StageOutput {
            out,
            admitted,
            matched,
            hazard,
        })
    }
}
