//! Accuracy bookkeeping: the per-(stage, task) matrix and the ACC/BWT
//! summary metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower-triangular accuracy record: `row t` holds test accuracies on tasks
/// `0..=t` measured after finishing training stage `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self { rows: Vec::new() }
    }

    /// Append the evaluation row after one training stage; row `t` must hold
    /// `t + 1` entries in `[0, 1]`.
    pub fn push_stage(&mut self, accuracies: Vec<f64>) -> Result<()> {
        if accuracies.len() != self.rows.len() + 1 {
            return Err(Error::DimensionMismatch {
                context: "AccuracyMatrix::push_stage",
                expected: self.rows.len() + 1,
                actual: accuracies.len(),
            });
        }
        if accuracies.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Domain {
                context: "AccuracyMatrix::push_stage",
                message: "accuracies must lie in [0, 1]".into(),
            });
        }
        self.rows.push(accuracies);
        Ok(())
    }

    pub fn num_stages(&self) -> usize {
        self.rows.len()
    }

    /// Accuracy on task `task` after stage `stage`, if recorded.
    pub fn get(&self, stage: usize, task: usize) -> Option<f64> {
        self.rows.get(stage).and_then(|r| r.get(task)).copied()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn is_complete(&self) -> bool {
        !self.rows.is_empty()
            && self
                .rows
                .iter()
                .enumerate()
                .all(|(t, row)| row.len() == t + 1)
    }
}

impl Default for AccuracyMatrix {
    fn default() -> Self {
        Self::new()
    }
}

/// ACC and BWT; BWT is absent for single-task streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub bwt: Option<f64>,
}

/// `ACC = mean of the final row`; `BWT = mean over non-final tasks of
/// (final accuracy − just-after-training accuracy)`.
pub fn compute_metrics(matrix: &AccuracyMatrix) -> Result<Metrics> {
    if !matrix.is_complete() {
        return Err(Error::Domain {
            context: "compute_metrics",
            message: "accuracy matrix is incomplete".into(),
        });
    }
    let n = matrix.num_stages();
    let last = &matrix.rows()[n - 1];
    let acc = last.iter().sum::<f64>() / n as f64;
    let bwt = if n >= 2 {
        let sum: f64 = (0..n - 1)
            .map(|i| last[i] - matrix.get(i, i).expect("diagonal recorded"))
            .sum();
        Some(sum / (n - 1) as f64)
    } else {
        None
    };
    Ok(Metrics { acc, bwt })
}
