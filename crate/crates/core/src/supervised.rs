//! Turn-level supervised training.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, DomainData, TurnLabel};
use crate::error::{Error, Result};
use crate::eval::{evaluate_prepared, Metrics};
use crate::numerics::{adam_step, AdamState, Graph, NodeId, Tensor};
use crate::statenet::{DomainContext, PreparedDialogue, SlotNodes, Tracker, TurnPrediction, DEFAULT_THRESHOLD};

/// Probability clamp inside every logarithm.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub early_stop_patience_epochs: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 16,
            early_stop_patience_epochs: 20,
            max_epochs: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.early_stop_patience_epochs == 0 {
            return Err(Error::invalid("batch_size and early_stop_patience_epochs must be positive"));
        }
        Ok(())
    }
}

/// Index of each slot's gold value, or `None` for slots absent from `gold`.
fn gold_targets<'a>(
    slots: impl ExactSizeIterator<Item = (&'a str, &'a [String])>,
    gold: &TurnLabel,
) -> Result<Vec<Option<usize>>> {
    let slots: Vec<_> = slots.collect();
    let mut target = vec![None; slots.len()];
    for sv in gold {
        let j = slots
            .iter()
            .position(|(name, _)| *name == sv.slot)
            .ok_or_else(|| Error::invalid(format!("gold slot {} is not in the ontology", sv.slot)))?;
        let k = slots[j]
            .1
            .iter()
            .position(|v| *v == sv.value)
            .ok_or_else(|| Error::invalid(format!("gold value {} is not a candidate for {}", sv.value, sv.slot)))?;
        target[j] = Some(k);
    }
    Ok(target)
}

fn loss_from_targets(g: &mut Graph, slots: &[SlotNodes], target: &[Option<usize>]) -> Result<NodeId> {
    let mut terms = Vec::with_capacity(2 * slots.len());
    for (n, t) in slots.iter().zip(target) {
        let p = match t {
            Some(_) => n.presence,
            None => g.one_minus(n.presence),
        };
        terms.push(g.log(p, PROB_EPS));
        if let Some(k) = t {
            let pk = g.index(n.values, *k)?;
            terms.push(g.log(pk, PROB_EPS));
        }
    }
    let s = g.stack(&terms)?;
    let s = g.sum(s);
    Ok(g.scale(s, -1.0))
}

/// Presence cross-entropy for every slot plus value cross-entropy for the
/// slots in `gold`, as a graph node.
pub fn turn_loss(g: &mut Graph, ctx: &DomainContext, slots: &[SlotNodes], gold: &TurnLabel) -> Result<NodeId> {
    let target = gold_targets(ctx.slots.iter().map(|s| (s.name.as_str(), s.values.as_slice())), gold)?;
    loss_from_targets(g, slots, &target)
}

/// [`turn_loss`] evaluated on plain prediction values.
pub fn turn_loss_value(pred: &TurnPrediction, gold: &TurnLabel) -> Result<f64> {
    let target = gold_targets(pred.slots.iter().map(|s| (s.slot.as_str(), s.values.as_slice())), gold)?;
    let mut g = Graph::new();
    let nodes: Vec<SlotNodes> = pred
        .slots
        .iter()
        .map(|s| SlotNodes {
            presence: g.constant(Tensor::scalar(s.presence)),
            values: g.constant(Tensor::vector(s.dist.clone())),
        })
        .collect();
    let l = loss_from_targets(&mut g, &nodes, &target)?;
    Ok(g.scalar(l))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_jga: f64,
    pub dev_turn_acc: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: Option<usize>,
    pub steps: usize,
}

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.and_then(|e| self.epochs.iter().find(|r| r.epoch == e))
    }

    /// `epoch,train_loss,dev_jga,dev_turn_acc` rows. Wall time is kept out
    /// so that reruns produce identical tables; see [`Self::timing_csv`].
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,dev_jga,dev_turn_acc\n");
        for r in &self.epochs {
            s.push_str(&format!("{},{:.9},{:.6},{:.6}\n", r.epoch, r.train_loss, r.dev_jga, r.dev_turn_acc));
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("epoch,seconds\n");
        for r in &self.epochs {
            s.push_str(&format!("{},{:.3}\n", r.epoch, r.seconds));
        }
        s
    }
}

/// Mean turn loss of one batch and its gradient, aligned with the
/// model's parameters.
pub fn batch_gradient(
    model: &Tracker,
    ctx: &DomainContext,
    batch: &[(&Dialogue, &PreparedDialogue)],
) -> Result<(f64, Vec<Tensor>)> {
    let turns: usize = batch.iter().map(|(d, _)| d.turns.len()).sum();
    if turns == 0 {
        return Err(Error::invalid("batch has no turns"));
    }
    let mut grads = model.params().zeros_like();
    let mut total = 0.0;
    for (d, prep) in batch {
        let mut g = Graph::new();
        let out = model.forward_nodes(&mut g, ctx, prep)?;
        let mut losses = Vec::with_capacity(d.turns.len());
        for (t, slots) in d.turns.iter().zip(&out.turns) {
            losses.push(turn_loss(&mut g, ctx, slots, &t.turn_label)?);
        }
        let stacked = g.stack(&losses)?;
        let sum = g.sum(stacked);
        total += g.scalar(sum);
        g.backward(sum)?.accumulate_into(&mut grads, 1.0 / turns as f64);
    }
    Ok((total / turns as f64, grads))
}

/// Epochs of seeded minibatches over dialogues with one Adam step per
/// batch. Returns the parameters of the epoch with the best dev joint goal
/// accuracy.
pub fn train_supervised(model: &Tracker, data: &DomainData, config: &TrainConfig) -> Result<(Tracker, TrainHistory)> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::invalid("empty train split"));
    }
    if data.dev.is_empty() && config.max_epochs > 0 {
        return Err(Error::invalid("empty dev split"));
    }
    let ctx = model.domain_context(&data.ontology)?;
    let train: Vec<_> = data.train.iter().map(|d| model.prepare(d)).collect();
    let dev: Vec<_> = data.dev.iter().map(|d| model.prepare(d)).collect();

    let mut live = model.clone();
    let mut best = model.clone();
    let mut history = TrainHistory::default();
    let mut adam = AdamState::new(live.params().tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best_jga = f64::NEG_INFINITY;
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| (&data.train[i], &train[i])).collect();
            let (loss, grads) = batch_gradient(&live, &ctx, &batch)?;
            adam_step(live.params_mut().tensors_mut(), &grads, &mut adam, config.learning_rate)?;
            loss_sum += loss;
            batches += 1;
            history.steps += 1;
        }
        let m: Metrics = evaluate_prepared(&live, &ctx, &data.dev, &dev, DEFAULT_THRESHOLD)?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            dev_jga: m.joint_goal_accuracy,
            dev_turn_acc: m.turn_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        });
        if m.joint_goal_accuracy > best_jga {
            best_jga = m.joint_goal_accuracy;
            best = live.clone();
            history.best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.early_stop_patience_epochs {
                break;
            }
        }
    }
    Ok((best, history))
}

#[cfg(test)]
mod tests;
