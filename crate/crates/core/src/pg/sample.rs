use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::BeliefState;
use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId};
use crate::statenet::{DomainContext, SlotNodes};
use crate::supervised::PROB_EPS;

/// How slot presence enters the action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionPolicy {
    /// Presence is a Bernoulli draw and part of the action's probability.
    SamplePresence,
    /// Presence is decided by a threshold; only values are sampled.
    Threshold(f64),
}

#[derive(Debug, Clone)]
pub struct SampledAction {
    pub belief: BeliefState,
    /// Chosen value index per slot, `None` for absent slots.
    pub choices: Vec<Option<usize>>,
    pub log_prob: NodeId,
    pub entropy: NodeId,
}

fn draw(rng: &mut ChaCha8Rng, dist: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding left `u` past the last bucket
    dist.iter().rposition(|p| *p > 0.0).unwrap_or(dist.len() - 1)
}

/// `-Σ x ln x` over the entries of a vector node.
fn categorical_entropy(g: &mut Graph, dist: NodeId) -> Result<NodeId> {
    let l = g.log(dist, PROB_EPS);
    let xl = g.mul(dist, l)?;
    let s = g.sum(xl);
    Ok(g.scale(s, -1.0))
}

fn bernoulli_entropy(g: &mut Graph, p: NodeId) -> Result<NodeId> {
    let q = g.one_minus(p);
    let lp = g.log(p, PROB_EPS);
    let lq = g.log(q, PROB_EPS);
    let a = g.mul(p, lp)?;
    let b = g.mul(q, lq)?;
    let s = g.add(a, b)?;
    Ok(g.scale(s, -1.0))
}

fn total(g: &mut Graph, terms: &[NodeId]) -> Result<NodeId> {
    if terms.is_empty() {
        return Ok(g.constant(crate::numerics::Tensor::scalar(0.0)));
    }
    let s = g.stack(terms)?;
    Ok(g.sum(s))
}

/// Log-probability of a given action under the per-slot distributions.
pub fn log_prob_of(g: &mut Graph, slots: &[SlotNodes], choices: &[Option<usize>], policy: ActionPolicy) -> Result<NodeId> {
    if slots.len() != choices.len() {
        return Err(Error::invalid("log_prob_of: one choice per slot is required"));
    }
    let mut terms = Vec::with_capacity(2 * slots.len());
    for (n, c) in slots.iter().zip(choices) {
        if policy == ActionPolicy::SamplePresence {
            let p = match c {
                Some(_) => n.presence,
                None => g.one_minus(n.presence),
            };
            terms.push(g.log(p, PROB_EPS));
        }
        if let Some(k) = c {
            let pk = g.index(n.values, *k)?;
            terms.push(g.log(pk, PROB_EPS));
        }
    }
    total(g, &terms)
}

/// Draws a belief state slot by slot: presence, then (if present) a value.
pub fn sample_action(
    g: &mut Graph,
    ctx: &DomainContext,
    slots: &[SlotNodes],
    policy: ActionPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<SampledAction> {
    if slots.len() != ctx.slots.len() {
        return Err(Error::invalid("sample_action: slot outputs do not match the ontology"));
    }
    let mut belief = BeliefState::new();
    let mut choices = Vec::with_capacity(slots.len());
    let mut entropy = Vec::with_capacity(slots.len());
    for (n, s) in slots.iter().zip(&ctx.slots) {
        let p = g.scalar(n.presence);
        let present = match policy {
            ActionPolicy::SamplePresence => rng.random::<f64>() < p,
            ActionPolicy::Threshold(t) => p > t,
        };
        let h_cat = categorical_entropy(g, n.values)?;
        match policy {
            ActionPolicy::SamplePresence => {
                let h_b = bernoulli_entropy(g, n.presence)?;
                let weighted = g.scalar_mul(n.presence, h_cat)?;
                entropy.push(g.add(h_b, weighted)?);
            }
            ActionPolicy::Threshold(_) if present => entropy.push(h_cat),
            ActionPolicy::Threshold(_) => {}
        }
        if present {
            let k = draw(rng, g.value(n.values).data());
            belief.set(s.name.clone(), s.values[k].clone());
            choices.push(Some(k));
        } else {
            choices.push(None);
        }
    }
    let log_prob = log_prob_of(g, slots, &choices, policy)?;
    let entropy = total(g, &entropy)?;
    Ok(SampledAction {
        belief,
        choices,
        log_prob,
        entropy,
    })
}
