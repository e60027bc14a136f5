use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{AdamState, Params};
use crate::statenet::Tracker;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Saved,
    Continued,
    RolledBack,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Saved => "saved",
            Decision::Continued => "continued",
            Decision::RolledBack => "rolled_back",
        }
    }
}

/// Best snapshot so far and the stall counter.
#[derive(Debug, Clone)]
pub struct HillClimbState {
    pub best_dev_reward: f64,
    pub best: Option<Params>,
    pub evals_since_improvement: usize,
    pub rollback_count: usize,
    base_stream: u64,
}

impl HillClimbState {
    /// `base_stream` is the action-sampling stream in use before any rollback.
    pub fn new(base_stream: u64) -> Self {
        Self {
            best_dev_reward: f64::NEG_INFINITY,
            best: None,
            evals_since_improvement: 0,
            rollback_count: 0,
            base_stream,
        }
    }

    /// The live model with the best snapshot restored, if there is one.
    pub fn into_best(self, mut live: Tracker) -> Tracker {
        if let Some(p) = self.best {
            *live.params_mut() = p;
        }
        live
    }
}

/// Saves on strict improvement. After `patience` evaluations without one,
/// restores the best snapshot, clears the optimizer moments and moves
/// action sampling to a fresh stream.
pub fn hill_climb_step(
    state: &mut HillClimbState,
    model: &mut Tracker,
    adam: &mut AdamState,
    action_rng: &mut ChaCha8Rng,
    dev_reward: f64,
    patience: usize,
) -> Decision {
    if dev_reward > state.best_dev_reward {
        state.best_dev_reward = dev_reward;
        state.best = Some(model.params().clone());
        state.evals_since_improvement = 0;
        return Decision::Saved;
    }
    state.evals_since_improvement += 1;
    if state.evals_since_improvement < patience {
        return Decision::Continued;
    }
    if let Some(best) = &state.best {
        *model.params_mut() = best.clone();
    }
    adam.reset();
    state.rollback_count += 1;
    action_rng.set_stream(state.base_stream + state.rollback_count as u64);
    action_rng.set_word_pos(0);
    state.evals_since_improvement = 0;
    Decision::RolledBack
}
