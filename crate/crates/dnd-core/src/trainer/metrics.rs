//! Per-epoch training metrics and their CSV form.

use super::{Stage, TrainError, TrainResult};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub stage: Stage,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn new() -> Self {
        MetricsLog { rows: Vec::new() }
    }

    pub fn push(&mut self, row: MetricsRow) {
        if let Some(last) = self.rows.last() {
            debug_assert!(row.epoch > last.epoch, "epoch indices must increase");
        }
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    pub fn last_train_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.train_loss)
    }

    pub fn last_val_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.val_loss)
    }

    /// Trajectory equality: every column except wall time.
    pub fn same_trajectory(&self, other: &MetricsLog) -> bool {
        self.rows.len() == other.rows.len()
            && self.rows.iter().zip(&other.rows).all(|(a, b)| {
                a.stage == b.stage
                    && a.epoch == b.epoch
                    && a.train_loss == b.train_loss
                    && a.val_loss == b.val_loss
                    && a.lr == b.lr
            })
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("stage,epoch,train_loss,val_loss,lr,wall_time_s\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.stage, r.epoch, r.train_loss, r.val_loss, r.lr, r.wall_time_s
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> TrainResult<()> {
        std::fs::write(path.as_ref(), self.to_csv_string())
            .map_err(|e| TrainError::Io(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn parse_csv(text: &str) -> TrainResult<MetricsLog> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(TrainError::Io(format!(
                    "metrics line {} has {} columns",
                    i + 1,
                    cols.len()
                )));
            }
            let stage = match cols[0] {
                "denoise" => Stage::Denoise,
                "distill-graph" => Stage::DistillGraph,
                "distill-node" => Stage::DistillNode,
                "finetune" => Stage::Finetune,
                "contrastive" => Stage::Contrastive,
                other => return Err(TrainError::Io(format!("unknown stage {other}"))),
            };
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| TrainError::Io(format!("metrics line {}: {e}", i + 1)))
            };
            rows.push(MetricsRow {
                stage,
                epoch: num(cols[1])? as usize,
                train_loss: num(cols[2])?,
                val_loss: num(cols[3])?,
                lr: num(cols[4])?,
                wall_time_s: num(cols[5])?,
            });
        }
        Ok(MetricsLog { rows })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> TrainResult<MetricsLog> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| TrainError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let mut log = MetricsLog::new();
        log.push(MetricsRow {
            stage: Stage::DistillNode,
            epoch: 1,
            train_loss: 0.5,
            val_loss: 0.6,
            lr: 1e-4,
            wall_time_s: 2.25,
        });
        log.push(MetricsRow {
            stage: Stage::DistillNode,
            epoch: 2,
            train_loss: 0.25,
            val_loss: 0.5,
            lr: 2e-4,
            wall_time_s: 2.5,
        });
        let parsed = MetricsLog::parse_csv(&log.to_csv_string()).unwrap();
        assert_eq!(parsed, log);
        assert!(parsed.same_trajectory(&log));
    }
}
