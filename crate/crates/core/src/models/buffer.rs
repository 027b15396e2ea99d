use alloc::collections::VecDeque;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::env::Trajectory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Demonstrator,
    Imitator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub source: Source,
}

/// Bounded transition store with FIFO eviction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    trajectories: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: VecDeque::new(),
            trajectories: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Number of trajectories ever appended.
    pub fn trajectories(&self) -> usize {
        self.trajectories
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        let finite = t
            .state
            .iter()
            .chain(&t.action)
            .chain(&t.next_state)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("replay transition"));
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
        Ok(())
    }

    /// Appends every transition of `traj`; nothing is stored if any value is non-finite.
    pub fn push_trajectory(&mut self, traj: &Trajectory, source: Source) -> Result<()> {
        traj.validate()?;
        let all_finite = traj
            .states
            .iter()
            .chain(&traj.actions)
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !all_finite {
            return Err(Error::NonFinite("replay trajectory"));
        }
        for (s, a, n) in traj.transitions() {
            self.push(Transition {
                state: s.to_vec(),
                action: a.to_vec(),
                next_state: n.to_vec(),
                source,
            })?;
        }
        self.trajectories += 1;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn from_source(&self, source: Source) -> impl Iterator<Item = &Transition> {
        self.items.iter().filter(move |t| t.source == source)
    }
}
