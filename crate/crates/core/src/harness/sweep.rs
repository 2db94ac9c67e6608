//! Parameter sweeps: independent runs, one metrics row each, aggregated as
//! CSV. Runs share no mutable state and execute on worker threads.

use std::fmt::Write as _;
use std::thread;

use super::config::RunConfig;
use super::metrics::Metrics;
use super::sim::run_sim;

#[derive(Debug)]
pub struct SweepRow {
    pub index: usize,
    pub result: Result<Metrics, String>,
}

/// Run every configuration; per-run failures are recorded and the sweep
/// continues. Rows come back sorted by config index.
pub fn sweep(configs: &[RunConfig]) -> Result<Vec<SweepRow>, String> {
    if configs.is_empty() {
        return Err("sweep needs at least one configuration".into());
    }
    let workers = thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(configs.len());
    let mut rows: Vec<SweepRow> = thread::scope(|scope| {
        let mut handles = Vec::new();
        for chunk_start in (0..configs.len()).step_by(configs.len().div_ceil(workers)) {
            let chunk_end = (chunk_start + configs.len().div_ceil(workers)).min(configs.len());
            let slice = &configs[chunk_start..chunk_end];
            handles.push(scope.spawn(move || {
                slice
                    .iter()
                    .enumerate()
                    .map(|(offset, config)| SweepRow {
                        index: chunk_start + offset,
                        result: run_sim(config)
                            .map(|outcome| outcome.metrics)
                            .map_err(|e| e.to_string()),
                    })
                    .collect::<Vec<_>>()
            }));
        }
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("sweep worker"))
            .collect()
    });
    rows.sort_by_key(|r| r.index);
    Ok(rows)
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "index,status,cycles,events_in,reads,writes,conflations,stalls,\
         effective_rate,comparisons_per_sec,peak_demand_mts\n",
    );
    for row in rows {
        match &row.result {
            Ok(m) => {
                let _ = writeln!(
                    out,
                    "{},ok,{},{},{},{},{},{},{:.6},{:.3e},{:.1}",
                    row.index,
                    m.cycles,
                    m.events_in,
                    m.reads,
                    m.writes,
                    m.conflations,
                    m.stalls,
                    m.effective_rate,
                    m.comparisons_per_second_equivalent,
                    m.peak_demand_mts
                );
            }
            Err(e) => {
                let _ = writeln!(out, "{},error: {},,,,,,,,,", row.index, e.replace(',', ";"));
            }
        }
    }
    out
}
