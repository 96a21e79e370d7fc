//! Episode log export: a per-vehicle CSV plus a JSON sidecar with the same
//! basename.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::scenario::DensityClass;
use crate::sim::{EpisodeLog, Outcome, SimConfig};
use crate::types::Control;

pub const CSV_HEADER: &str = "tick,vehicle_id,x,y,theta,vx,vy,ax,ay,lane";

pub fn log_to_csv(log: &EpisodeLog) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (tick, snap) in log.snapshots.iter().enumerate() {
        for (id, v) in snap {
            let _ = writeln!(
                out,
                "{tick},{id},{},{},{},{},{},{},{},{}",
                v.x,
                v.y,
                v.theta,
                v.vx,
                v.vy,
                v.ax,
                v.ay,
                v.lane.as_str()
            );
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSidecar {
    pub scenario_seed: u64,
    pub density: DensityClass,
    pub seed: u64,
    pub planner: String,
    pub env_policy: String,
    pub ticks: usize,
    pub outcome: Outcome,
    pub config: SimConfig,
    pub controls: Vec<Control>,
}

impl From<&EpisodeLog> for LogSidecar {
    fn from(log: &EpisodeLog) -> Self {
        LogSidecar {
            scenario_seed: log.scenario_seed,
            density: log.density,
            seed: log.seed,
            planner: log.planner.clone(),
            env_policy: log.env_policy.clone(),
            ticks: log.ticks(),
            outcome: log.outcome.clone(),
            config: log.config.clone(),
            controls: log.controls.clone(),
        }
    }
}

/// Writes `<dir>/<basename>.csv` and `<dir>/<basename>.json`.
pub fn write_log(log: &EpisodeLog, dir: &Path, basename: &str) -> Result<(PathBuf, PathBuf)> {
    let csv = dir.join(format!("{basename}.csv"));
    let json = dir.join(format!("{basename}.json"));
    write_atomic(&csv, log_to_csv(log).as_bytes())?;
    let sidecar = serde_json::to_string_pretty(&LogSidecar::from(log)).map_err(|e| Error::Parse {
        context: json.display().to_string(),
        message: e.to_string(),
    })?;
    write_atomic(&json, sidecar.as_bytes())?;
    Ok((csv, json))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{sample_scenario, ScenarioParams};
    use crate::sim::{run_episode, EnvPolicy, IdmGapAcceptance};

    #[test]
    fn csv_and_sidecar() {
        let s = sample_scenario(2, DensityClass::LowerDense, &ScenarioParams::default()).unwrap();
        let log = run_episode(&s, &mut IdmGapAcceptance::default(), &EnvPolicy::RuleBased, &SimConfig::default()).unwrap();
        let csv = log_to_csv(&log);
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows[0], CSV_HEADER);
        assert_eq!(rows.len() - 1, log.snapshots.iter().map(|s| s.len()).sum::<usize>());
        assert!(rows[1].starts_with("0,0,"));

        let dir = tempfile::tempdir().unwrap();
        let (c, j) = write_log(&log, dir.path(), "ep_0000").unwrap();
        assert_eq!(c.file_stem(), j.file_stem());
        let back: LogSidecar = serde_json::from_str(&std::fs::read_to_string(j).unwrap()).unwrap();
        assert_eq!(back.outcome, log.outcome);
        assert_eq!(back.ticks, log.ticks());
    }
}
