//! Policy-gradient transfer with a dialogue-level reward.
//!
//! At the end of each dialogue the policy samples a belief state from the
//! tracker's accumulated per-slot presence and value distributions. The
//! sample is scored against the gold final state with the Jaccard index,
//! and the greedy decode of a frozen copy of the starting model supplies
//! the baseline. The update ascends
//!
//! ```text
//! mean over the batch of  log π(a|s) · (R − B) + α · H(π(·|s))
//! ```
//!
//! with `R − B` treated as a constant. Dev reward is checked every few
//! batches; improvements are snapshotted and long stalls roll the live
//! model back to the best snapshot.

mod hill;
mod sample;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BeliefState, Dialogue, DomainData};
use crate::error::{Error, Result};
use crate::eval::{evaluate_prepared, Metrics};
use crate::numerics::{adam_step, AdamState, Graph, Tensor};
use crate::statenet::{decode_final_belief, DomainContext, PreparedDialogue, Tracker};

pub use hill::{hill_climb_step, Decision, HillClimbState};
pub use sample::{log_prob_of, sample_action, ActionPolicy, SampledAction};

/// Action-sampling streams: the initial one, then one per rollback.
const ACTION_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PGConfig {
    pub batch_size: usize,
    pub eval_every_batches: usize,
    pub rollback_patience: usize,
    pub entropy_weight: f64,
    pub learning_rate: f64,
    pub max_batches: usize,
    pub presence_threshold: f64,
    /// Sample slot presence (`true`) or threshold it and sample values only.
    pub sample_presence: bool,
    pub seed: u64,
}

impl Default for PGConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            eval_every_batches: 5,
            rollback_patience: 15,
            entropy_weight: 0.01,
            learning_rate: 1e-3,
            max_batches: 2000,
            presence_threshold: 0.5,
            sample_presence: true,
            seed: 0,
        }
    }
}

impl PGConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_every_batches == 0 || self.rollback_patience == 0 {
            return Err(Error::invalid("batch_size, eval_every_batches and rollback_patience must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.entropy_weight >= 0.0 && self.entropy_weight.is_finite()) {
            return Err(Error::invalid("entropy_weight must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.presence_threshold) {
            return Err(Error::invalid("presence_threshold must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn policy(&self) -> ActionPolicy {
        if self.sample_presence {
            ActionPolicy::SamplePresence
        } else {
            ActionPolicy::Threshold(self.presence_threshold)
        }
    }
}

/// `|S_G ∩ S_P| / |S_G ∪ S_P|` over (slot, value) pairs; 1 when both are empty.
pub fn jaccard_reward(predicted: &BeliefState, gold: &BeliefState) -> f64 {
    let (p, g) = (predicted.to_set(), gold.to_set());
    let union = p.union(&g).count();
    if union == 0 {
        return 1.0;
    }
    p.intersection(&g).count() as f64 / union as f64
}

/// Reward of the greedy decode of `frozen` on one dialogue.
pub fn baseline_reward(frozen: &Tracker, ctx: &DomainContext, dialogue: &Dialogue, threshold: f64) -> Result<f64> {
    let preds = frozen.forward_dialogue(ctx, dialogue)?;
    Ok(jaccard_reward(&decode_final_belief(&preds, threshold), dialogue.final_belief()))
}

/// One dialogue of a policy-gradient batch.
#[derive(Debug, Clone, Copy)]
pub struct Episode<'a> {
    pub prepared: &'a PreparedDialogue,
    pub gold: &'a BeliefState,
    /// Subtracted from the sampled reward. Zero gives plain REINFORCE.
    pub baseline: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub mean_reward: f64,
    pub mean_advantage: f64,
    pub mean_entropy: f64,
    pub grad_norm: f64,
}

/// Gradient of the surrogate objective for one batch (ascent direction).
pub fn surrogate_gradient(
    model: &Tracker,
    ctx: &DomainContext,
    batch: &[Episode<'_>],
    entropy_weight: f64,
    policy: ActionPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Tensor>, BatchStats)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let n = batch.len() as f64;
    let mut grads = model.params().zeros_like();
    let mut stats = BatchStats::default();
    for ep in batch {
        let mut g = Graph::new();
        let out = model.forward_nodes(&mut g, ctx, ep.prepared)?;
        let action = sample_action(&mut g, ctx, &out.final_slots(), policy, rng)?;
        let reward = jaccard_reward(&action.belief, ep.gold);
        let advantage = reward - ep.baseline;
        let weighted = g.scale(action.log_prob, advantage);
        let bonus = g.scale(action.entropy, entropy_weight);
        let objective = g.add(weighted, bonus)?;
        g.backward(objective)?.accumulate_into(&mut grads, 1.0 / n);
        stats.mean_reward += reward / n;
        stats.mean_advantage += advantage / n;
        stats.mean_entropy += g.scalar(action.entropy) / n;
    }
    stats.grad_norm = grads.iter().map(|t| t.data().iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt();
    Ok((grads, stats))
}

/// One Adam ascent step on the surrogate objective.
pub fn pg_update(
    model: &mut Tracker,
    ctx: &DomainContext,
    batch: &[Episode<'_>],
    config: &PGConfig,
    adam: &mut AdamState,
    rng: &mut ChaCha8Rng,
) -> Result<BatchStats> {
    let (mut grads, stats) = surrogate_gradient(model, ctx, batch, config.entropy_weight, config.policy(), rng)?;
    for t in &mut grads {
        t.data_mut().iter_mut().for_each(|x| *x = -*x);
    }
    adam_step(model.params_mut().tensors_mut(), &grads, adam, config.learning_rate)?;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgRecord {
    pub batch: usize,
    pub mean_reward: Option<f64>,
    pub mean_advantage: Option<f64>,
    pub mean_entropy: Option<f64>,
    pub dev_reward: Option<f64>,
    pub dev_turn_acc: Option<f64>,
    pub decision: Option<Decision>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PgHistory {
    pub records: Vec<PgRecord>,
    pub rollbacks: usize,
    pub best_dev_reward: Option<f64>,
    /// Batch index of the evaluation whose snapshot was returned.
    pub best_batch: Option<usize>,
}

impl PgHistory {
    pub fn evaluations(&self) -> impl Iterator<Item = &PgRecord> {
        self.records.iter().filter(|r| r.decision.is_some())
    }

    /// `batch,mean_reward,mean_advantage,mean_entropy,dev_reward,dev_turn_acc,decision`;
    /// empty cells where a quantity was not computed for that batch.
    pub fn to_csv(&self) -> String {
        let f = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
        let mut s = String::from("batch,mean_reward,mean_advantage,mean_entropy,dev_reward,dev_turn_acc,decision\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.batch,
                f(r.mean_reward),
                f(r.mean_advantage),
                f(r.mean_entropy),
                f(r.dev_reward),
                f(r.dev_turn_acc),
                r.decision.map(|d| d.as_str()).unwrap_or_default()
            ));
        }
        s
    }
}

fn check_dialogues(ctx: &DomainContext, dialogues: &[Dialogue]) -> Result<()> {
    for d in dialogues {
        for t in &d.turns {
            for sv in t.belief_state.pairs() {
                let ok = ctx.slot_index(&sv.slot).is_some_and(|j| ctx.slots[j].values.contains(&sv.value));
                if !ok {
                    return Err(Error::invalid(format!(
                        "dialogue {} mentions {}={} outside the target ontology",
                        d.id, sv.slot, sv.value
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Fine-tunes `pretrained` on `data` with the dialogue-level reward only.
/// Returns the best dev-reward snapshot.
pub fn finetune_pg(pretrained: &Tracker, data: &DomainData, config: &PGConfig) -> Result<(Tracker, PgHistory)> {
    config.validate()?;
    let mut history = PgHistory::default();
    if config.max_batches == 0 {
        return Ok((pretrained.clone(), history));
    }
    if data.train.is_empty() || data.dev.is_empty() {
        return Err(Error::invalid("policy-gradient fine-tuning needs train and dev dialogues"));
    }
    let ctx = pretrained.domain_context(&data.ontology)?;
    check_dialogues(&ctx, &data.train)?;
    check_dialogues(&ctx, &data.dev)?;

    let frozen = pretrained;
    let mut live = pretrained.clone();
    let train: Vec<_> = data.train.iter().map(|d| live.prepare(d)).collect();
    let dev: Vec<_> = data.dev.iter().map(|d| live.prepare(d)).collect();
    let baselines: Vec<f64> = train
        .iter()
        .zip(&data.train)
        .map(|(p, d)| {
            let (preds, _) = frozen.run(&ctx, p)?;
            Ok(jaccard_reward(&decode_final_belief(&preds, config.presence_threshold), d.final_belief()))
        })
        .collect::<Result<_>>()?;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);
    let mut action_rng = ChaCha8Rng::seed_from_u64(config.seed);
    action_rng.set_stream(ACTION_STREAM);
    let mut adam = AdamState::new(live.params().tensors());
    let mut hill = HillClimbState::new(ACTION_STREAM);

    let dev_eval = |m: &Tracker| -> Result<Metrics> {
        evaluate_prepared(m, &ctx, &data.dev, &dev, config.presence_threshold)
    };
    let m = dev_eval(&live)?;
    let decision = hill_climb_step(&mut hill, &mut live, &mut adam, &mut action_rng, m.reward, config.rollback_patience);
    history.records.push(PgRecord {
        batch: 0,
        mean_reward: None,
        mean_advantage: None,
        mean_entropy: None,
        dev_reward: Some(m.reward),
        dev_turn_acc: Some(m.turn_accuracy),
        decision: Some(decision),
    });
    history.best_batch = Some(0);

    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    for b in 1..=config.max_batches {
        let mut idx = Vec::with_capacity(config.batch_size);
        while idx.len() < config.batch_size.min(train.len()) {
            if cursor == order.len() {
                order = (0..train.len()).collect();
                order.shuffle(&mut shuffle_rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let batch: Vec<Episode> = idx
            .iter()
            .map(|&i| Episode {
                prepared: &train[i],
                gold: data.train[i].final_belief(),
                baseline: baselines[i],
            })
            .collect();
        let stats = pg_update(&mut live, &ctx, &batch, config, &mut adam, &mut action_rng)?;
        let mut rec = PgRecord {
            batch: b,
            mean_reward: Some(stats.mean_reward),
            mean_advantage: Some(stats.mean_advantage),
            mean_entropy: Some(stats.mean_entropy),
            dev_reward: None,
            dev_turn_acc: None,
            decision: None,
        };
        if b % config.eval_every_batches == 0 {
            let m = dev_eval(&live)?;
            let d = hill_climb_step(&mut hill, &mut live, &mut adam, &mut action_rng, m.reward, config.rollback_patience);
            if d == Decision::Saved {
                history.best_batch = Some(b);
            }
            rec.dev_reward = Some(m.reward);
            rec.dev_turn_acc = Some(m.turn_accuracy);
            rec.decision = Some(d);
        }
        history.records.push(rec);
    }
    history.rollbacks = hill.rollback_count;
    history.best_dev_reward = Some(hill.best_dev_reward);
    let best = hill.into_best(live);
    Ok((best, history))
}
