use std::io::{BufRead, BufReader};
use std::path::Path;

use ganmpc::env::{PhysicalParams, Task, Trajectory};
use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::error::{io_err, parse_err, LabError, Result};

pub const TRAJECTORY_FORMAT: &str = "ganmpc-trajectories";
pub const TRAJECTORY_VERSION: u32 = 1;

/// First line of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub format: String,
    pub version: u32,
}

impl Default for TrajectoryHeader {
    fn default() -> Self {
        Self {
            format: TRAJECTORY_FORMAT.into(),
            version: TRAJECTORY_VERSION,
        }
    }
}

/// One episode per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub task: Task,
    pub physical: [f64; 3],
    pub seed: u64,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn new(task: Task, physical: PhysicalParams, seed: u64, t: &Trajectory) -> Self {
        Self {
            task,
            physical: physical.as_array(),
            seed,
            states: t.states.clone(),
            actions: t.actions.clone(),
            rewards: t.rewards.clone(),
        }
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            states: self.states.clone(),
            actions: self.actions.clone(),
            rewards: self.rewards.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        self.trajectory().validate()?;
        let (n, m) = (self.task.state_dim(), self.task.action_dim());
        if self.states.iter().any(|s| s.len() != n) || self.actions.iter().any(|a| a.len() != m) {
            return Err(LabError::Format(format!("state or action width does not match {}", self.task.name())));
        }
        let p = self.physical;
        PhysicalParams::new(p[0], p[1], p[2])?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub header: TrajectoryHeader,
    pub records: Vec<TrajectoryRecord>,
}

impl TrajectoryFile {
    pub fn trajectories(&self) -> Vec<Trajectory> {
        self.records.iter().map(TrajectoryRecord::trajectory).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(&self.header).expect("header serializes");
        out.push(b'\n');
        for r in &self.records {
            serde_json::to_writer(&mut out, r).expect("record serializes");
            out.push(b'\n');
        }
        out
    }

    pub fn parse(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut lines = BufReader::new(bytes).lines().enumerate();
        let header: TrajectoryHeader = match lines.next() {
            Some((_, line)) => serde_json::from_str(&line.map_err(io_err(path))?).map_err(|e| parse_err(path, e))?,
            None => return Err(parse_err(path, "empty trajectory file")),
        };
        if header.format != TRAJECTORY_FORMAT || header.version != TRAJECTORY_VERSION {
            return Err(parse_err(
                path,
                format!("unsupported trajectory format {} v{}", header.format, header.version),
            ));
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: TrajectoryRecord =
                serde_json::from_str(&line).map_err(|e| parse_err(path, format!("line {}: {e}", i + 1)))?;
            r.validate().map_err(|e| parse_err(path, format!("line {}: {e}", i + 1)))?;
            records.push(r);
        }
        Ok(Self { header, records })
    }
}

pub fn write_trajectories(path: &Path, records: Vec<TrajectoryRecord>) -> Result<Vec<u8>> {
    let bytes = TrajectoryFile {
        header: TrajectoryHeader::default(),
        records,
    }
    .to_bytes();
    write_atomic(path, &bytes)?;
    Ok(bytes)
}

/// Reads a trajectory file and returns it with its raw bytes.
pub fn read_trajectories(path: &Path) -> Result<(TrajectoryFile, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok((TrajectoryFile::parse(path, &bytes)?, bytes))
}
