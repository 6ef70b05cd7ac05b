use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One line of a training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Iteration {
        iteration: usize,
        epoch: usize,
        l_od: f64,
        l_class: f64,
        l_bb: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        l_gan_g: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_loss: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_acc_real: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_acc_fake: Option<f64>,
    },
    Epoch {
        epoch: usize,
        val_loss: f64,
        lr: f64,
        /// Consecutive non-improving epochs after this one.
        bad_epochs: usize,
    },
    LrChange {
        epoch: usize,
        from: f64,
        to: f64,
    },
    Snapshot {
        epoch: usize,
        reason: String,
    },
    End {
        epochs: usize,
        iterations: usize,
        reason: String,
        wall_clock_s: f64,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn push(&mut self, r: LogRecord) {
        self.records.push(r);
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { records })
    }

    pub fn iterations(&self) -> impl Iterator<Item = &LogRecord> {
        self.records.iter().filter(|r| matches!(r, LogRecord::Iteration { .. }))
    }

    /// Iterations on which the discriminator was updated.
    pub fn d_update_iterations(&self) -> Vec<usize> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Iteration {
                    iteration,
                    d_loss: Some(_),
                    ..
                } => Some(*iteration),
                _ => None,
            })
            .collect()
    }

    pub fn has_adversarial_scalars(&self) -> bool {
        self.records.iter().any(|r| {
            matches!(
                r,
                LogRecord::Iteration { l_gan_g: Some(_), .. } | LogRecord::Iteration { d_loss: Some(_), .. }
            )
        })
    }

    pub fn val_losses(&self) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Epoch { val_loss, .. } => Some(*val_loss),
                _ => None,
            })
            .collect()
    }

    pub fn lr_changes(&self) -> Vec<(usize, f64, f64)> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::LrChange { epoch, from, to } => Some((*epoch, *from, *to)),
                _ => None,
            })
            .collect()
    }
}
