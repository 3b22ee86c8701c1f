use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{fmt_opt, MetricsReport};

pub const HISTORY_CSV_HEADER: &str = "step,epoch,split,loss,node_recall,edge_recall";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: u64,
    pub epoch: u64,
    pub split: String,
    pub loss: Option<f64>,
    pub node_recall: Option<f64>,
    pub edge_recall: Option<f64>,
}

impl HistoryRow {
    pub fn from_report(r: &MetricsReport) -> Self {
        HistoryRow {
            step: r.step,
            epoch: r.epoch,
            split: r.split.clone(),
            loss: r.loss,
            node_recall: r.obj_recall,
            edge_recall: r.rel_recall,
        }
    }
}

/// Evaluation points of a run. Each eval point adds one row per split, so
/// steps increase strictly within a split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
}

impl TrainHistory {
    pub fn push(&mut self, row: HistoryRow) -> Result<()> {
        if let Some(prev) = self.rows.iter().rev().find(|r| r.split == row.split) {
            if row.step <= prev.step {
                return Err(Error::Contract(format!(
                    "history step {} for split {} does not follow step {}",
                    row.step, row.split, prev.step
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn split(&self, name: &str) -> impl Iterator<Item = &HistoryRow> {
        let name = name.to_string();
        self.rows.iter().filter(move |r| r.split == name)
    }

    pub fn last_step(&self) -> Option<u64> {
        self.rows.last().map(|r| r.step)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{HISTORY_CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.step,
                r.epoch,
                r.split,
                fmt_opt(r.loss),
                fmt_opt(r.node_recall),
                fmt_opt(r.edge_recall)
            ));
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
