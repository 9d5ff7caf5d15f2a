use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::Split;
use crate::error::{Error, Result};

/// One epoch's metrics on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub epoch: usize,
    pub split: Split,
    /// Mean loss per example.
    pub loss: f64,
    /// Summed loss, the unnormalized objective.
    pub loss_sum: f64,
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
    pub fitb_accuracy: Option<f64>,
}

impl MetricRow {
    pub fn new(epoch: usize, split: Split, loss_sum: f64, n: usize) -> Self {
        MetricRow {
            epoch,
            split,
            loss: if n == 0 { 0.0 } else { loss_sum / n as f64 },
            loss_sum,
            accuracy: None,
            auc: None,
            fitb_accuracy: None,
        }
    }
}

/// Append-only per-epoch log; epochs increase strictly within each split.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricLog {
    rows: Vec<MetricRow>,
}

impl MetricLog {
    pub fn push(&mut self, row: MetricRow) -> Result<()> {
        if let Some(last) = self.rows.iter().rev().find(|r| r.split == row.split) {
            if row.epoch <= last.epoch {
                return Err(Error::Validation(format!(
                    "metric log epoch {} does not follow {} on split {}",
                    row.epoch,
                    last.epoch,
                    row.split.name()
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[MetricRow] {
        &self.rows
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &MetricRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn last(&self, split: Split) -> Option<&MetricRow> {
        self.split(split).last()
    }
}
