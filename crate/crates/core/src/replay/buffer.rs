use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{ReplayError, SourceTag, Trajectory, Transition};
use crate::numfmt::format_f64;
use crate::rng::{self, SimRng};

pub const DEFAULT_CAPACITY: usize = 1000;

/// Nonnegative sampling weight per source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SourceWeights {
    pub egocentric: f64,
    pub social: f64,
    pub natural: f64,
}

impl SourceWeights {
    pub fn new(egocentric: f64, social: f64, natural: f64) -> Self {
        SourceWeights { egocentric, social, natural }
    }

    pub fn get(&self, tag: SourceTag) -> f64 {
        match tag {
            SourceTag::Egocentric => self.egocentric,
            SourceTag::Social => self.social,
            SourceTag::Natural => self.natural,
        }
    }

    pub fn validate(&self) -> Result<(), ReplayError> {
        for tag in SourceTag::ALL {
            let w = self.get(tag);
            if !(w.is_finite() && w >= 0.0) {
                return Err(ReplayError::InvalidWeights(format!("{tag} weight {w}")));
            }
        }
        Ok(())
    }
}

/// Per-source FIFO queues with a shared per-source capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    queues: [VecDeque<Trajectory>; 3],
}

impl Default for ReplayBuffer {
    fn default() -> Self {
        ReplayBuffer::new(DEFAULT_CAPACITY)
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity, queues: Default::default() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends, evicting the oldest trajectory of the same source when full.
    pub fn store(&mut self, trajectory: Trajectory) -> Result<(), ReplayError> {
        trajectory.validate()?;
        if self.capacity == 0 {
            return Ok(());
        }
        let q = &mut self.queues[trajectory.source().index()];
        if q.len() == self.capacity {
            q.pop_front();
        }
        q.push_back(trajectory);
        Ok(())
    }

    pub fn len(&self, tag: SourceTag) -> usize {
        self.queues[tag.index()].len()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.iter().all(VecDeque::is_empty)
    }

    /// Trajectories of one source, oldest first.
    pub fn trajectories(&self, tag: SourceTag) -> impl Iterator<Item = &Trajectory> {
        self.queues[tag.index()].iter()
    }

    /// Draws `n` trajectories: a source by normalized weight (over weighted
    /// sources that hold data), then a trajectory uniformly within it.
    pub fn sample_batch(&self, weights: &SourceWeights, n: usize, seed: u64) -> Result<Vec<Trajectory>, ReplayError> {
        let mut r = rng::seeded(seed);
        Ok(self.sample_batch_with(weights, n, &mut r)?.into_iter().cloned().collect())
    }

    pub fn sample_batch_with(
        &self,
        weights: &SourceWeights,
        n: usize,
        rng: &mut SimRng,
    ) -> Result<Vec<&Trajectory>, ReplayError> {
        weights.validate()?;
        if n == 0 {
            return Ok(Vec::new());
        }
        let mass: Vec<f64> = SourceTag::ALL
            .iter()
            .map(|&t| if self.len(t) > 0 { weights.get(t) } else { 0.0 })
            .collect();
        let total: f64 = mass.iter().sum();
        if total <= 0.0 {
            return Err(ReplayError::EmptySources);
        }
        let probs: Vec<f64> = mass.iter().map(|m| m / total).collect();
        Ok((0..n)
            .map(|_| {
                let q = &self.queues[rng::categorical(rng, &probs)];
                &q[rng::below(rng, q.len())]
            })
            .collect())
    }

    /// One line per trajectory, oldest first within egocentric, social,
    /// natural: `source\tpolicyId` then one tab-separated field per step.
    /// Acted steps are `state,action,reward,next,behaviorProb` (`-` when the
    /// probability is unknown); natural steps are `state,next`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for tag in SourceTag::ALL {
            for t in self.trajectories(tag) {
                out.push_str(tag.as_str());
                out.push('\t');
                out.push_str(t.policy_id());
                for tr in t.transitions() {
                    out.push('\t');
                    match (tr.action, tr.reward) {
                        (Some(a), Some(r)) => {
                            let bp = tr.behavior_prob.map_or_else(|| "-".to_string(), format_f64);
                            out.push_str(&format!("{},{},{},{},{}", tr.state, a, format_f64(r), tr.next_state, bp));
                        }
                        _ => out.push_str(&format!("{},{}", tr.state, tr.next_state)),
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn load(text: &str, capacity: usize) -> Result<Self, ReplayError> {
        let mut buffer = ReplayBuffer::new(capacity);
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let err = |reason: &str| ReplayError::Parse { line: i + 1, reason: reason.into() };
            let mut fields = line.split('\t');
            let tag: SourceTag = fields.next().unwrap_or("").parse().map_err(|e: String| err(&e))?;
            let policy_id = fields.next().ok_or_else(|| err("missing policy id"))?;
            let mut transitions = Vec::new();
            for step in fields {
                let parts: Vec<&str> = step.split(',').collect();
                let int = |s: &str| s.parse::<usize>().map_err(|_| err("bad integer"));
                let float = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
                transitions.push(match parts[..] {
                    [s, next] => Transition::natural(int(s)?, int(next)?),
                    [s, a, r, next, bp] => Transition::acted(
                        int(s)?,
                        int(a)?,
                        float(r)?,
                        int(next)?,
                        if bp == "-" { None } else { Some(float(bp)?) },
                    ),
                    _ => return Err(err("step needs 2 or 5 fields")),
                });
            }
            buffer.store(Trajectory::new(transitions, tag, policy_id)?)?;
        }
        Ok(buffer)
    }
}
