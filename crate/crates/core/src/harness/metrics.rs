//! Per-run counters and derived figures of merit.

use serde::Serialize;

use crate::conflation::ScheduleConfig;
use crate::memory::{MemoryConfig, MemoryMetrics};

#[derive(Debug, Clone, Default, Serialize)]
pub struct Metrics {
    /// App-clock cycles simulated, drain included.
    pub cycles: u64,
    pub events_in: u64,
    /// Reads issued; every read opens one read-modify-write cycle.
    pub reads: u64,
    pub writes: u64,
    /// Updates absorbed into a pending entry at any stage.
    pub conflations: u64,
    /// Backpressure cycles while the source still had events.
    pub stalls: u64,
    /// Backpressure cycles during drain, after the source emptied.
    pub drain_stalls: u64,
    pub hazards: u64,
    /// Reads issued for a key already pending; must stay zero.
    pub rmw_duplicate_pending: u64,
    /// Exit/reply pairings that broke in-order sequencing; must stay zero.
    pub rmw_key_mismatches: u64,
    pub user_ticks: u64,
    /// Completed transactions over nominal peak.
    pub effective_rate: f64,
    /// Nominal memory peak in MT/s.
    pub peak_rate_mts: f64,
    /// total matchers x app clock.
    pub comparisons_per_second_equivalent: f64,
    /// Worst-case demand: one read plus one write per app cycle, in MT/s.
    pub peak_demand_mts: f64,
    /// Demand over nominal memory peak.
    pub peak_demand_fraction: f64,
    pub memory: MemoryMetrics,
}

impl Metrics {
    pub fn derive(&mut self, schedule: &ScheduleConfig, memory: &MemoryConfig) {
        self.peak_rate_mts = memory.peak_rate() / 1e6;
        self.comparisons_per_second_equivalent =
            schedule.total_matchers() as f64 * memory.app_clock_hz as f64;
        self.peak_demand_mts = 2.0 * memory.app_clock_hz as f64 / 1e6;
        self.peak_demand_fraction = self.peak_demand_mts * 1e6 / memory.peak_rate();
    }

    /// Every consumed event either opened a read-modify-write cycle or was
    /// conflated into a pending one.
    pub fn events_balance_holds(&self) -> bool {
        self.events_in == self.reads + self.conflations
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}
