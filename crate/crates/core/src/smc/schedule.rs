//! Step plans for one particle sweep over one or more datasets.
//!
//! A sweep runs over global steps `0..=G`. At each step every listed component
//! (dataset) either draws its initial state or advances one local time step.
//! Steps that only contain entries are not preceded by resampling, so the
//! particle weights carry across them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// Draw the component's initial state.
    Enter,
    /// Propagate and weight the component at this local time (1-based).
    Advance(usize),
}

/// How datasets of different lengths are placed on a shared time axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncPolicy {
    /// All datasets start together.
    Left,
    /// All datasets end together.
    Right,
    /// Explicit start offset per dataset.
    Offsets(Vec<usize>),
}

impl SyncPolicy {
    pub fn resolve(&self, lengths: &[usize]) -> Result<Vec<usize>> {
        match self {
            SyncPolicy::Left => Ok(vec![0; lengths.len()]),
            SyncPolicy::Right => {
                let max = lengths.iter().copied().max().unwrap_or(0);
                Ok(lengths.iter().map(|&t| max - t).collect())
            }
            SyncPolicy::Offsets(o) => {
                if o.len() != lengths.len() {
                    return Err(Error::Config(format!(
                        "{} offsets given for {} datasets",
                        o.len(),
                        lengths.len()
                    )));
                }
                Ok(o.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    steps: Vec<Vec<(usize, Action)>>,
    lengths: Vec<usize>,
}

impl Schedule {
    /// One dataset of the given length.
    pub fn single(horizon: usize) -> Self {
        Self::stacked_time(&[horizon])
    }

    /// Components are visited one after the other in the given order.
    pub fn stacked_time(lengths: &[usize]) -> Self {
        let mut steps = Vec::new();
        for (c, &t_len) in lengths.iter().enumerate() {
            steps.push(vec![(c, Action::Enter)]);
            for t in 1..=t_len {
                steps.push(vec![(c, Action::Advance(t))]);
            }
        }
        Schedule {
            steps,
            lengths: lengths.to_vec(),
        }
    }

    /// Components run side by side; component `c` enters at `offsets[c]`.
    /// Offsets are shifted so the earliest entry is at step 0. Every step must
    /// have at least one active component.
    pub fn stacked_state(lengths: &[usize], offsets: &[usize]) -> Result<Self> {
        if lengths.is_empty() || lengths.len() != offsets.len() {
            return Err(Error::Config("one offset per dataset required".into()));
        }
        let shift = *offsets.iter().min().expect("nonempty");
        let offsets: Vec<usize> = offsets.iter().map(|&o| o - shift).collect();
        let end = lengths.iter().zip(&offsets).map(|(&t, &o)| o + t).max().expect("nonempty");
        let mut steps = Vec::with_capacity(end + 1);
        for g in 0..=end {
            let mut plan = Vec::new();
            for (c, (&t_len, &o)) in lengths.iter().zip(&offsets).enumerate() {
                if g == o {
                    plan.push((c, Action::Enter));
                } else if g > o && g <= o + t_len {
                    plan.push((c, Action::Advance(g - o)));
                }
            }
            if plan.is_empty() {
                return Err(Error::Config(format!("no dataset is active at global step {g}")));
            }
            steps.push(plan);
        }
        Ok(Schedule {
            steps,
            lengths: lengths.to_vec(),
        })
    }

    pub fn steps(&self) -> &[Vec<(usize, Action)>] {
        &self.steps
    }

    pub fn components(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }
}
