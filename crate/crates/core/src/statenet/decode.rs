use crate::corpus::{BeliefState, SlotValue, TurnLabel};

use super::{SlotPrediction, TurnPrediction};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn decode_slot(s: &SlotPrediction, threshold: f64) -> Option<SlotValue> {
    (s.presence > threshold).then(|| SlotValue::new(s.slot.clone(), s.values[argmax(&s.dist)].clone()))
}

/// Slots whose presence exceeds `threshold`, each with its most likely value.
pub fn decode_turn(pred: &TurnPrediction, threshold: f64) -> TurnLabel {
    pred.slots.iter().filter_map(|s| decode_slot(s, threshold)).collect()
}

/// Folds the per-turn decodes; later turns overwrite earlier values.
pub fn decode_final_belief(preds: &[TurnPrediction], threshold: f64) -> BeliefState {
    let mut state = BeliefState::new();
    for p in preds {
        state.apply(&decode_turn(p, threshold));
    }
    state
}
