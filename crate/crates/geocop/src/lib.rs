//! Neural solver for geometric combinatorial optimization problems.
//!
//! An encoder-decoder pointer model with single-head residual self-attention
//! in the encoder and domain-knowledge masking in the decoder, applied to
//! three planar tasks: Delaunay triangulation, convex hull, and the
//! traveling salesman problem. The crate also carries the exact geometric
//! solvers used to label training data and verify model outputs, a small
//! dense-tensor layer with explicit backpropagation, dataset tooling,
//! metrics, and experiment orchestration.

pub mod dataset;
pub mod geometry;
pub mod harness;
pub mod model;
pub mod nncore;
pub mod sequencing;

use serde::{Deserialize, Serialize};
use std::fmt;

/// The three tasks the model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Dt,
    Hull,
    Tsp,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Dt => "dt",
            Task::Hull => "hull",
            Task::Tsp => "tsp",
        }
    }

    /// Smallest instance the task is defined for.
    pub fn min_points(&self) -> usize {
        match self {
            Task::Dt | Task::Hull => 3,
            Task::Tsp => 2,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dt" => Ok(Task::Dt),
            "hull" => Ok(Task::Hull),
            "tsp" => Ok(Task::Tsp),
            other => Err(format!("unknown task {other:?} (expected dt, hull, or tsp)")),
        }
    }
}
