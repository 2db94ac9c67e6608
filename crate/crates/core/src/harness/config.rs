//! Run configuration: one JSON document wiring layout, schedule, memory,
//! source and snapshot script together, with validation and load helpers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflation::{ConflationError, ScheduleConfig};
use crate::datapath::{DatapathError, LayoutConfig};
use crate::memory::MemoryConfig;

use super::source::SourceSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("layout: {0}")]
    Layout(#[from] DatapathError),
    #[error("schedule: {0}")]
    Schedule(#[from] ConflationError),
    #[error("memory: user clock must divide into nonzero lanes and clocks")]
    Memory,
    #[error("scheduler block_size must be at least 1")]
    BlockSize,
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub layout: LayoutConfig,
    pub schedule: ScheduleConfig,
    pub memory: MemoryConfig,
    pub source: SourceSpec,
    /// App cycles at which snapshot readouts start.
    pub snapshot_script: Vec<u64>,
    /// Scheduler read/write grouping block size.
    pub block_size: usize,
    /// Verify the drained memory image against the sequential oracle.
    pub oracle_check: bool,
    /// Directory for CSV/binary trace dumps; no traces when unset.
    pub trace_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            layout: LayoutConfig::default(),
            schedule: ScheduleConfig::schedule_0_6_250(),
            memory: MemoryConfig::default(),
            source: SourceSpec::default(),
            snapshot_script: Vec::new(),
            block_size: 16,
            oracle_check: false,
            trace_dir: None,
        }
    }
}

impl RunConfig {
    /// Check config consistency. Returns human-readable warnings for legal
    /// but suspicious setups (an undersized queue stalls, it is not an error).
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        self.layout.validate()?;
        self.schedule.validate()?;
        if self.memory.lanes_per_user_tick == 0
            || self.memory.user_clock_hz == 0
            || self.memory.app_clock_hz == 0
        {
            return Err(ConfigError::Memory);
        }
        if self.block_size == 0 {
            return Err(ConfigError::BlockSize);
        }
        let mut warnings = Vec::new();
        let depth = self.schedule.total_latency() as u64;
        if depth < self.memory.base_read_latency_app_cycles {
            warnings.push(format!(
                "cascade latency {depth} is below the base read latency {}; \
                 expect backpressure stalls",
                self.memory.base_read_latency_app_cycles
            ));
        }
        if self.source.key_space > self.layout.max_key() + 1 {
            warnings.push(format!(
                "source key_space {} exceeds the {}-bit key field",
                self.source.key_space, self.layout.key_bits
            ));
        }
        Ok(warnings)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load_many(path: &Path) -> Result<Vec<Self>, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }
}
