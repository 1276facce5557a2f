use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `r[i][j]`: test accuracy on task `j` right after training task `i`
/// (0-based, fractions in [0, 1]). Only the lower triangle is meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyMatrix {
    tasks: usize,
    cells: Vec<Option<f64>>,
}

impl AccuracyMatrix {
    pub fn new(tasks: usize) -> Self {
        Self {
            tasks,
            cells: vec![None; tasks * tasks],
        }
    }

    /// Builds a matrix from full lower-triangle rows (`rows[i].len() == i + 1`).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::new(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != i + 1 {
                return Err(Error::Dimension {
                    op: "accuracy row",
                    lhs: (i, row.len()),
                    rhs: (i, i + 1),
                });
            }
            for (j, v) in row.iter().enumerate() {
                m.set(i, j, *v)?;
            }
        }
        Ok(m)
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn set(&mut self, after: usize, task: usize, acc: f64) -> Result<()> {
        if task > after || after >= self.tasks {
            return Err(Error::Dimension {
                op: "accuracy index",
                lhs: (after, task),
                rhs: (self.tasks, self.tasks),
            });
        }
        self.cells[after * self.tasks + task] = Some(acc);
        Ok(())
    }

    pub fn get(&self, after: usize, task: usize) -> Option<f64> {
        if after >= self.tasks || task >= self.tasks {
            return None;
        }
        self.cells[after * self.tasks + task]
    }

    /// Filled entries of row `after` (tasks `0..=after`).
    pub fn row(&self, after: usize) -> Vec<Option<f64>> {
        (0..=after).map(|j| self.get(after, j)).collect()
    }

    pub fn is_complete(&self) -> bool {
        (0..self.tasks).all(|i| (0..=i).all(|j| self.get(i, j).is_some()))
    }

    fn require_complete(&self) -> Result<()> {
        if self.tasks == 0 || !self.is_complete() {
            return Err(Error::Consistency("accuracy matrix lower triangle is incomplete".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub acc: f64,
    /// `None` for a single task.
    pub bwt: Option<f64>,
}

/// Mean final accuracy over all tasks.
pub fn compute_acc(r: &AccuracyMatrix) -> Result<f64> {
    r.require_complete()?;
    let last = r.tasks - 1;
    Ok((0..r.tasks).map(|i| r.get(last, i).unwrap()).sum::<f64>() / r.tasks as f64)
}

/// Mean change from just-trained to final accuracy over the first `T − 1`
/// tasks. Undefined for `T < 2`.
pub fn compute_bwt(r: &AccuracyMatrix) -> Result<f64> {
    r.require_complete()?;
    if r.tasks < 2 {
        return Err(Error::Degenerate("backward transfer needs at least two tasks"));
    }
    let last = r.tasks - 1;
    Ok((0..last).map(|i| r.get(last, i).unwrap() - r.get(i, i).unwrap()).sum::<f64>() / last as f64)
}

pub fn compute_metrics(r: &AccuracyMatrix) -> Result<Metrics> {
    Ok(Metrics {
        acc: compute_acc(r)?,
        bwt: if r.tasks >= 2 { Some(compute_bwt(r)?) } else { None },
    })
}

/// Mean difference of just-trained accuracies, `(1/T) Σ_i (a[i][i] − b[i][i])`.
pub fn compute_relative_fwt(a: &AccuracyMatrix, b: &AccuracyMatrix) -> Result<f64> {
    if a.tasks != b.tasks {
        return Err(Error::Dimension {
            op: "relative forward transfer",
            lhs: (a.tasks, a.tasks),
            rhs: (b.tasks, b.tasks),
        });
    }
    if a.tasks == 0 {
        return Err(Error::Degenerate("no tasks"));
    }
    let mut sum = 0.0;
    for i in 0..a.tasks {
        let (Some(x), Some(y)) = (a.get(i, i), b.get(i, i)) else {
            return Err(Error::Consistency("accuracy matrix diagonal is incomplete".into()));
        };
        sum += x - y;
    }
    Ok(sum / a.tasks as f64)
}
