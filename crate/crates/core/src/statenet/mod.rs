//! The slot/value tracker.
//!
//! Per turn, user and system utterances are encoded by separate receptor
//! banks and fused into a turn vector `f`. For each slot `j`, the slot's
//! name embedding `e_j` gates the turn vector:
//!
//! ```text
//! x_j  = f ⊙ (G e_j + g)
//! p_j  = σ(τ_p · cos(P x_j + b_p, e_j) + β)
//! h'   = GRU(mean_j x_j, h)
//! q_j  = V [h'; x_j] + b_v
//! d_j  = softmax(τ_v · [cos(q_j, e_v) for each candidate value v])
//! ```
//!
//! Slots and values enter only through their embeddings, so the parameter
//! set does not depend on the ontology and a model can be run against any
//! domain.
//!
//! The tracker state also accumulates per-slot evidence across turns. The
//! presence `a_j ← p_j + (1 − p_j) a_j` is the probability that the slot
//! was mentioned in at least one turn, and the value mixture
//! `m_j ← p_j d_j + (1 − p_j) m_j` (starting uniform) weights each turn's
//! distribution by the chance that it was the last mention. Together they
//! form the dialogue-end state that policy-gradient actions are drawn from.

mod checkpoint;
mod decode;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, DomainOntology};
use crate::embeddings::{EmbeddingConfig, EmbeddingTable, NgramFeatures, ReceptorBank, ReceptorShape};
use crate::error::{Error, Result};
use crate::numerics::{gru_cell, Graph, GruNodes, NodeId, Params, Tensor};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use decode::{decode_final_belief, decode_turn, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub embedding: EmbeddingConfig,
    pub ngram_max: usize,
    pub receptors_per_ngram: usize,
    pub receptor_dim: usize,
    pub turn_dim: usize,
    pub gru_dim: usize,
    pub init_temperature: f64,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embedding: EmbeddingConfig::default(),
            ngram_max: 3,
            receptors_per_ngram: 3,
            receptor_dim: 64,
            turn_dim: 200,
            gru_dim: 200,
            init_temperature: 10.0,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Small dimensions that train in seconds on synthetic corpora.
    pub fn desk() -> Self {
        Self {
            embedding: EmbeddingConfig {
                dim: 48,
                ..EmbeddingConfig::default()
            },
            receptor_dim: 12,
            turn_dim: 64,
            gru_dim: 32,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let dims = [
            ("embedding.dim", self.embedding.dim),
            ("ngram_max", self.ngram_max),
            ("receptors_per_ngram", self.receptors_per_ngram),
            ("receptor_dim", self.receptor_dim),
            ("turn_dim", self.turn_dim),
            ("gru_dim", self.gru_dim),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(Error::invalid(format!("model config: {name} must be positive")));
            }
        }
        if !self.init_temperature.is_finite() || self.init_temperature <= 0.0 {
            return Err(Error::invalid("model config: init_temperature must be positive"));
        }
        Ok(())
    }

    fn receptor_shape(&self) -> ReceptorShape {
        ReceptorShape {
            ngram_max: self.ngram_max,
            receptors_per_ngram: self.receptors_per_ngram,
            receptor_dim: self.receptor_dim,
            input_dim: self.embedding.dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ParamIds {
    user: ReceptorBank,
    system: ReceptorBank,
    turn_w: usize,
    turn_b: usize,
    gate_w: usize,
    gate_b: usize,
    presence_w: usize,
    presence_b: usize,
    presence_temperature: usize,
    presence_bias: usize,
    gru: [usize; 9],
    value_w: usize,
    value_b: usize,
    value_temperature: usize,
}

const GRU_NAMES: [&str; 9] = ["w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"];

impl ParamIds {
    fn register(cfg: &ModelConfig, params: &mut Params) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let mut glorot = move |rows: usize, cols: usize| {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
            Tensor::matrix(rows, cols, data).expect("positive dims")
        };
        let shape = cfg.receptor_shape();
        let (e, t, h) = (cfg.embedding.dim, cfg.turn_dim, cfg.gru_dim);
        let user = ReceptorBank::register(params, "user", shape, &mut glorot);
        let system = ReceptorBank::register(params, "system", shape, &mut glorot);
        let turn_w = params.add("turn.weight", glorot(t, 2 * shape.output_dim()));
        let turn_b = params.add("turn.bias", Tensor::zeros(&[t]));
        let gate_w = params.add("gate.weight", glorot(t, e));
        let gate_b = params.add("gate.bias", Tensor::filled(&[t], 1.0));
        let presence_w = params.add("presence.weight", glorot(e, t));
        let presence_b = params.add("presence.bias", Tensor::zeros(&[e]));
        let presence_temperature = params.add("presence.temperature", Tensor::scalar(cfg.init_temperature));
        let presence_bias = params.add("presence.offset", Tensor::scalar(0.0));
        let mut gru = [0; 9];
        for (slot, name) in gru.iter_mut().zip(GRU_NAMES) {
            let t = match name.as_bytes()[0] {
                b'w' => glorot(h, t),
                b'u' => glorot(h, h),
                _ => Tensor::zeros(&[h]),
            };
            *slot = params.add(format!("gru.{name}"), t);
        }
        let value_w = params.add("value.weight", glorot(e, h + t));
        let value_b = params.add("value.bias", Tensor::zeros(&[e]));
        let value_temperature = params.add("value.temperature", Tensor::scalar(cfg.init_temperature));
        Self {
            user,
            system,
            turn_w,
            turn_b,
            gate_w,
            gate_b,
            presence_w,
            presence_b,
            presence_temperature,
            presence_bias,
            gru,
            value_w,
            value_b,
            value_temperature,
        }
    }

    fn bind(cfg: &ModelConfig, params: &Params) -> Result<Self> {
        let find = |name: &str| {
            params
                .index_of(name)
                .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))
        };
        let shape = cfg.receptor_shape();
        let mut gru = [0; 9];
        for (slot, name) in gru.iter_mut().zip(GRU_NAMES) {
            *slot = find(&format!("gru.{name}"))?;
        }
        Ok(Self {
            user: ReceptorBank::bind(params, "user", shape)?,
            system: ReceptorBank::bind(params, "system", shape)?,
            turn_w: find("turn.weight")?,
            turn_b: find("turn.bias")?,
            gate_w: find("gate.weight")?,
            gate_b: find("gate.bias")?,
            presence_w: find("presence.weight")?,
            presence_b: find("presence.bias")?,
            presence_temperature: find("presence.temperature")?,
            presence_bias: find("presence.offset")?,
            gru,
            value_w: find("value.weight")?,
            value_b: find("value.bias")?,
            value_temperature: find("value.temperature")?,
        })
    }
}

/// Graph leaves of every parameter, registered once per graph.
#[derive(Debug, Clone, Copy)]
pub struct ModelNodes {
    turn_w: NodeId,
    turn_b: NodeId,
    gate_w: NodeId,
    gate_b: NodeId,
    presence_w: NodeId,
    presence_b: NodeId,
    presence_temperature: NodeId,
    presence_bias: NodeId,
    gru: GruNodes,
    value_w: NodeId,
    value_b: NodeId,
    value_temperature: NodeId,
}

/// Embedded slot and value names of one domain.
#[derive(Debug, Clone)]
pub struct SlotContext {
    pub name: String,
    pub values: Arc<Vec<String>>,
    embedding: Tensor,
    value_embeddings: Vec<Tensor>,
}

#[derive(Debug, Clone)]
pub struct DomainContext {
    pub domain: String,
    pub slots: Vec<SlotContext>,
}

impl DomainContext {
    pub fn slot_index(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }
}

/// Constant nodes for a [`DomainContext`] inside one graph.
#[derive(Debug, Clone)]
pub struct DomainNodes {
    slots: Vec<NodeId>,
    values: Vec<Vec<NodeId>>,
}

/// Utterance n-gram features of one dialogue, computed once.
#[derive(Debug, Clone)]
pub struct PreparedDialogue {
    turns: Vec<(NgramFeatures, NgramFeatures)>,
}

impl PreparedDialogue {
    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// The first `k` turns.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            turns: self.turns[..k.min(self.turns.len())].to_vec(),
        }
    }
}

/// Recurrent state inside a graph: GRU hidden vector plus the accumulated
/// per-slot presence and value evidence.
#[derive(Debug, Clone)]
pub struct TrackerState {
    pub h: NodeId,
    pub presence: Vec<NodeId>,
    pub values: Vec<NodeId>,
    pub gru_updates: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SlotNodes {
    pub presence: NodeId,
    pub values: NodeId,
}

/// One slot's output for one turn, or for the dialogue-end state.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotPrediction {
    pub slot: String,
    pub values: Arc<Vec<String>>,
    pub presence: f64,
    pub dist: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnPrediction {
    pub slots: Vec<SlotPrediction>,
}

/// Graph nodes of a whole dialogue's forward pass.
#[derive(Debug, Clone)]
pub struct DialogueNodes {
    pub turns: Vec<Vec<SlotNodes>>,
    pub state: TrackerState,
}

impl DialogueNodes {
    /// Dialogue-end presence and value mixture per slot.
    pub fn final_slots(&self) -> Vec<SlotNodes> {
        self.state
            .presence
            .iter()
            .zip(&self.state.values)
            .map(|(&presence, &values)| SlotNodes { presence, values })
            .collect()
    }
}

fn read(g: &Graph, ctx: &DomainContext, nodes: &[SlotNodes]) -> TurnPrediction {
    TurnPrediction {
        slots: ctx
            .slots
            .iter()
            .zip(nodes)
            .map(|(s, n)| SlotPrediction {
                slot: s.name.clone(),
                values: s.values.clone(),
                presence: g.scalar(n.presence),
                dist: g.value(n.values).data().to_vec(),
            })
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: ModelConfig,
    params: Params,
    table: EmbeddingTable,
    ids: ParamIds,
}

impl Tracker {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let table = EmbeddingTable::from_config(&config.embedding)?;
        let mut params = Params::new();
        let ids = ParamIds::register(&config, &mut params);
        Ok(Self {
            config,
            params,
            table,
            ids,
        })
    }

    /// Rebuilds a tracker around previously trained parameters.
    pub fn from_parts(config: ModelConfig, params: Params) -> Result<Self> {
        config.validate()?;
        let table = EmbeddingTable::from_config(&config.embedding)?;
        let ids = ParamIds::bind(&config, &params)?;
        let fresh = Self::new(config.clone())?;
        for (name, t) in fresh.params.iter() {
            let id = params.index_of(name).expect("bound above");
            if params.get(id).shape() != t.shape() {
                return Err(Error::invalid(format!(
                    "parameter {name} has shape {:?}, config implies {:?}",
                    params.get(id).shape(),
                    t.shape()
                )));
            }
        }
        if params.len() != fresh.params.len() {
            return Err(Error::invalid("parameter set does not match the model config"));
        }
        Ok(Self {
            config,
            params,
            table,
            ids,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn embeddings(&self) -> &EmbeddingTable {
        &self.table
    }

    /// Embeds a domain's slot names and candidate values.
    pub fn domain_context(&self, ontology: &DomainOntology) -> Result<DomainContext> {
        let mut slots = Vec::with_capacity(ontology.slots.len());
        for s in &ontology.slots {
            if s.values.is_empty() {
                return Err(Error::invalid(format!("slot {} has no candidate values", s.name)));
            }
            let value_embeddings = s
                .values
                .iter()
                .map(|v| {
                    let toks: Vec<&str> = v.split_whitespace().collect();
                    Tensor::vector(self.table.embed_phrase(&toks))
                })
                .collect();
            slots.push(SlotContext {
                name: s.name.clone(),
                values: s.values.clone(),
                embedding: Tensor::vector(self.table.embed_phrase(&s.surface_tokens())),
                value_embeddings,
            });
        }
        Ok(DomainContext {
            domain: ontology.domain.clone(),
            slots,
        })
    }

    pub fn prepare(&self, dialogue: &Dialogue) -> PreparedDialogue {
        let n = self.config.ngram_max;
        PreparedDialogue {
            turns: dialogue
                .turns
                .iter()
                .map(|t| {
                    (
                        NgramFeatures::new(&self.table, &t.user_utterance, n),
                        NgramFeatures::new(&self.table, &t.system_utterance, n),
                    )
                })
                .collect(),
        }
    }

    pub fn bind_nodes(&self, g: &mut Graph) -> ModelNodes {
        let ids = &self.ids;
        let p = &self.params;
        let mut leaf = |id: usize| g.param(id, p.get(id));
        let [w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h] = ids.gru.map(&mut leaf);
        ModelNodes {
            turn_w: leaf(ids.turn_w),
            turn_b: leaf(ids.turn_b),
            gate_w: leaf(ids.gate_w),
            gate_b: leaf(ids.gate_b),
            presence_w: leaf(ids.presence_w),
            presence_b: leaf(ids.presence_b),
            presence_temperature: leaf(ids.presence_temperature),
            presence_bias: leaf(ids.presence_bias),
            gru: GruNodes {
                w_z,
                u_z,
                b_z,
                w_r,
                u_r,
                b_r,
                w_h,
                u_h,
                b_h,
            },
            value_w: leaf(ids.value_w),
            value_b: leaf(ids.value_b),
            value_temperature: leaf(ids.value_temperature),
        }
    }

    pub fn domain_nodes(&self, g: &mut Graph, ctx: &DomainContext) -> DomainNodes {
        DomainNodes {
            slots: ctx.slots.iter().map(|s| g.constant(s.embedding.clone())).collect(),
            values: ctx
                .slots
                .iter()
                .map(|s| s.value_embeddings.iter().map(|v| g.constant(v.clone())).collect())
                .collect(),
        }
    }

    /// Fresh state: zero hidden vector, no presence evidence, uniform values.
    pub fn initial_state(&self, g: &mut Graph, ctx: &DomainContext) -> TrackerState {
        let h = g.constant(Tensor::zeros(&[self.config.gru_dim]));
        let zero = g.constant(Tensor::scalar(0.0));
        let values = ctx
            .slots
            .iter()
            .map(|s| {
                let n = s.values.len();
                g.constant(Tensor::filled(&[n], 1.0 / n as f64))
            })
            .collect();
        TrackerState {
            h,
            presence: vec![zero; ctx.slots.len()],
            values,
            gru_updates: 0,
        }
    }

    /// User and system utterances through their own receptor banks, then
    /// one affine+ReLU layer.
    pub fn encode_turn(
        &self,
        g: &mut Graph,
        nodes: &ModelNodes,
        user: &NgramFeatures,
        system: &NgramFeatures,
    ) -> Result<NodeId> {
        let ru = self.ids.user.apply(g, &self.params, user)?;
        let rs = self.ids.system.apply(g, &self.params, system)?;
        let r = g.concat(&[ru, rs])?;
        let a = g.matvec(nodes.turn_w, r)?;
        let a = g.add(a, nodes.turn_b)?;
        Ok(g.relu(a))
    }

    /// Scores every slot for one turn, then advances the GRU once.
    pub fn track_turn(
        &self,
        g: &mut Graph,
        nodes: &ModelNodes,
        domain: &DomainNodes,
        state: TrackerState,
        turn: NodeId,
    ) -> Result<(Vec<SlotNodes>, TrackerState)> {
        if domain.slots.is_empty() {
            return Err(Error::invalid("track_turn: domain has no slots"));
        }
        let mut features = Vec::with_capacity(domain.slots.len());
        let mut presences = Vec::with_capacity(domain.slots.len());
        for &e in &domain.slots {
            let gate = g.matvec(nodes.gate_w, e)?;
            let gate = g.add(gate, nodes.gate_b)?;
            let x = g.mul(turn, gate)?;
            let k = g.matvec(nodes.presence_w, x)?;
            let k = g.add(k, nodes.presence_b)?;
            let c = g.cosine(k, e)?;
            let s = g.scalar_mul(nodes.presence_temperature, c)?;
            let s = g.add(s, nodes.presence_bias)?;
            presences.push(g.sigmoid(s));
            features.push(x);
        }
        let pooled = g.mean(&features)?;
        let h = gru_cell(g, pooled, state.h, &nodes.gru)?;

        let mut out = Vec::with_capacity(domain.slots.len());
        let mut acc_p = Vec::with_capacity(domain.slots.len());
        let mut acc_m = Vec::with_capacity(domain.slots.len());
        for (j, &x) in features.iter().enumerate() {
            if domain.values[j].is_empty() {
                return Err(Error::invalid("track_turn: slot with no candidate values"));
            }
            let hx = g.concat(&[h, x])?;
            let q = g.matvec(nodes.value_w, hx)?;
            let q = g.add(q, nodes.value_b)?;
            let mut scores = Vec::with_capacity(domain.values[j].len());
            for &v in &domain.values[j] {
                scores.push(g.cosine(q, v)?);
            }
            let scores = g.stack(&scores)?;
            let scores = g.scalar_mul(nodes.value_temperature, scores)?;
            let dist = g.softmax(scores)?;
            let p = presences[j];
            out.push(SlotNodes { presence: p, values: dist });

            let miss = g.one_minus(p);
            let carried = g.mul(miss, state.presence[j])?;
            acc_p.push(g.add(p, carried)?);
            let fresh = g.scalar_mul(p, dist)?;
            let kept = g.scalar_mul(miss, state.values[j])?;
            acc_m.push(g.add(fresh, kept)?);
        }
        Ok((
            out,
            TrackerState {
                h,
                presence: acc_p,
                values: acc_m,
                gru_updates: state.gru_updates + 1,
            },
        ))
    }

    /// Builds the full forward pass of one dialogue into `g`.
    pub fn forward_nodes(
        &self,
        g: &mut Graph,
        ctx: &DomainContext,
        dialogue: &PreparedDialogue,
    ) -> Result<DialogueNodes> {
        let nodes = self.bind_nodes(g);
        let domain = self.domain_nodes(g, ctx);
        let mut state = self.initial_state(g, ctx);
        let mut turns = Vec::with_capacity(dialogue.len());
        for (user, system) in &dialogue.turns {
            let f = self.encode_turn(g, &nodes, user, system)?;
            let (slots, next) = self.track_turn(g, &nodes, &domain, state, f)?;
            turns.push(slots);
            state = next;
        }
        Ok(DialogueNodes { turns, state })
    }

    /// Per-turn predictions and the dialogue-end state.
    pub fn run(&self, ctx: &DomainContext, dialogue: &PreparedDialogue) -> Result<(Vec<TurnPrediction>, TurnPrediction)> {
        let mut g = Graph::new();
        let out = self.forward_nodes(&mut g, ctx, dialogue)?;
        let turns = out.turns.iter().map(|t| read(&g, ctx, t)).collect();
        let end = read(&g, ctx, &out.final_slots());
        Ok((turns, end))
    }

    pub fn forward_dialogue(&self, ctx: &DomainContext, dialogue: &Dialogue) -> Result<Vec<TurnPrediction>> {
        Ok(self.run(ctx, &self.prepare(dialogue))?.0)
    }
}

#[cfg(test)]
mod tests;
