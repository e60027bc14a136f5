use crate::corpus::{BeliefState, Dialogue};
use crate::error::{Error, Result};
use crate::pg::jaccard_reward;
use crate::statenet::{decode_final_belief, decode_turn, DomainContext, PreparedDialogue, Tracker, TurnPrediction};

/// Score of one turn: the fraction of gold pairs recovered, or, for an
/// empty gold label, 1 when nothing was decoded and 0 otherwise.
pub fn turn_score(gold: &crate::corpus::TurnLabel, decoded: &crate::corpus::TurnLabel) -> f64 {
    if gold.is_empty() {
        return if decoded.is_empty() { 1.0 } else { 0.0 };
    }
    gold.intersection(decoded).count() as f64 / gold.len() as f64
}

/// Turn, joint-goal and dialogue-reward numbers for one set of predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub turn_accuracy: f64,
    pub joint_goal_accuracy: f64,
    pub reward: f64,
    pub turns: usize,
    /// Turns whose gold label is empty.
    pub empty_gold_turns: usize,
}

/// Metrics from per-dialogue predictions, aligned with `dialogues`.
pub fn score_predictions(dialogues: &[Dialogue], preds: &[Vec<TurnPrediction>], threshold: f64) -> Result<Metrics> {
    if dialogues.len() != preds.len() {
        return Err(Error::invalid("predictions do not line up with dialogues"));
    }
    let (mut turn_sum, mut joint, mut reward, mut turns, mut empty) = (0.0, 0usize, 0.0, 0usize, 0usize);
    for (d, p) in dialogues.iter().zip(preds) {
        if d.turns.len() != p.len() {
            return Err(Error::invalid(format!("dialogue {}: prediction count differs from turn count", d.id)));
        }
        let mut state = BeliefState::new();
        for (t, tp) in d.turns.iter().zip(p) {
            let decoded = decode_turn(tp, threshold);
            turn_sum += turn_score(&t.turn_label, &decoded);
            state.apply(&decoded);
            joint += usize::from(state == t.belief_state);
            turns += 1;
            empty += usize::from(t.turn_label.is_empty());
        }
        reward += jaccard_reward(&decode_final_belief(p, threshold), d.final_belief());
    }
    if turns == 0 {
        return Err(Error::invalid("no turns to score"));
    }
    Ok(Metrics {
        turn_accuracy: turn_sum / turns as f64,
        joint_goal_accuracy: joint as f64 / turns as f64,
        reward: reward / dialogues.len() as f64,
        turns,
        empty_gold_turns: empty,
    })
}

pub fn predict_prepared(model: &Tracker, ctx: &DomainContext, prepared: &[PreparedDialogue]) -> Result<Vec<Vec<TurnPrediction>>> {
    prepared.iter().map(|p| Ok(model.run(ctx, p)?.0)).collect()
}

pub fn evaluate_prepared(
    model: &Tracker,
    ctx: &DomainContext,
    dialogues: &[Dialogue],
    prepared: &[PreparedDialogue],
    threshold: f64,
) -> Result<Metrics> {
    score_predictions(dialogues, &predict_prepared(model, ctx, prepared)?, threshold)
}

pub fn evaluate(model: &Tracker, ctx: &DomainContext, dialogues: &[Dialogue], threshold: f64) -> Result<Metrics> {
    let prepared: Vec<_> = dialogues.iter().map(|d| model.prepare(d)).collect();
    evaluate_prepared(model, ctx, dialogues, &prepared, threshold)
}

/// Mean over all turns of [`turn_score`].
pub fn turn_level_accuracy(model: &Tracker, ctx: &DomainContext, dialogues: &[Dialogue], threshold: f64) -> Result<f64> {
    Ok(evaluate(model, ctx, dialogues, threshold)?.turn_accuracy)
}

/// Fraction of turns whose decoded cumulative state equals the gold state.
pub fn joint_goal_accuracy(model: &Tracker, ctx: &DomainContext, dialogues: &[Dialogue], threshold: f64) -> Result<f64> {
    Ok(evaluate(model, ctx, dialogues, threshold)?.joint_goal_accuracy)
}

/// Mean greedy-decode Jaccard reward of the final belief state.
pub fn mean_reward(model: &Tracker, ctx: &DomainContext, dialogues: &[Dialogue], threshold: f64) -> Result<f64> {
    Ok(evaluate(model, ctx, dialogues, threshold)?.reward)
}
