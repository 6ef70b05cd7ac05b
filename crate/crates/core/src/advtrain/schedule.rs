use serde::{Deserialize, Serialize};

/// Learning-rate schedule selection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// Decay on validation plateaus, terminate once decays are exhausted.
    Plateau,
    /// One decay at a fixed epoch; runs until `max_epochs`.
    TwoPhase { decay_epoch: usize },
}

/// Reduce-on-plateau state. `best` is never reset by a decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauState {
    pub patience: usize,
    pub factor: f64,
    pub max_decays: usize,
    pub best: Option<f64>,
    pub bad_epochs: usize,
    pub decays: usize,
    pub multiplier: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlateauEvent {
    None,
    Decay,
    Terminate,
}

impl PlateauState {
    /// `factor` multiplies the learning rate at each decay (0.1 divides by 10).
    pub fn new(patience: usize, factor: f64, max_decays: usize) -> Self {
        assert!(patience >= 1, "patience must be at least 1");
        Self {
            patience,
            factor,
            max_decays,
            best: None,
            bad_epochs: 0,
            decays: 0,
            multiplier: 1.0,
        }
    }

    /// Feeds one epoch's validation loss.
    pub fn observe(&mut self, loss: f64) -> PlateauEvent {
        match self.best {
            Some(b) if !(loss < b) => self.bad_epochs += 1,
            _ => {
                self.best = Some(loss);
                self.bad_epochs = 0;
                return PlateauEvent::None;
            }
        }
        if self.bad_epochs < self.patience {
            return PlateauEvent::None;
        }
        self.bad_epochs = 0;
        if self.decays == self.max_decays {
            return PlateauEvent::Terminate;
        }
        self.decays += 1;
        self.multiplier *= self.factor;
        PlateauEvent::Decay
    }
}

/// Replays the last entry of `history` into `state` and returns the current
/// learning-rate multiplier and whether training should stop.
pub fn lr_plateau_step(history: &[f64], state: &mut PlateauState) -> (f64, bool) {
    let last = *history.last().expect("history must be non-empty");
    let ev = state.observe(last);
    (state.multiplier, ev == PlateauEvent::Terminate)
}
