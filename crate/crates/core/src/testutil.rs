//! Small fixtures shared by unit tests.

use std::sync::Arc;

use crate::corpus::{BeliefState, Dialogue, DomainOntology, SlotSpec, SlotValue, Turn, TurnLabel};
use crate::statenet::ModelConfig;

pub fn tiny_config() -> ModelConfig {
    let mut cfg = ModelConfig::desk();
    cfg.embedding.dim = 8;
    cfg.receptor_dim = 3;
    cfg.turn_dim = 7;
    cfg.gru_dim = 6;
    cfg
}

pub fn ontology(slots: &[(&str, &[&str])]) -> DomainOntology {
    DomainOntology::new(
        "toy",
        slots
            .iter()
            .map(|(n, vs)| SlotSpec {
                name: n.to_string(),
                values: Arc::new(vs.iter().map(|v| v.to_string()).collect()),
            })
            .collect(),
    )
    .unwrap()
}

pub fn two_slots() -> DomainOntology {
    ontology(&[("toy-price", &["cheap", "moderate", "expensive"]), ("toy-area", &["north", "south", "centre"])])
}

pub fn label(pairs: &[(&str, &str)]) -> TurnLabel {
    pairs.iter().map(|(s, v)| SlotValue::new(*s, *v)).collect()
}

/// Turns of `(system, user, label)`; belief states are folded from labels.
pub fn labeled(id: &str, turns: &[(&str, &str, &[(&str, &str)])]) -> Dialogue {
    let words = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
    let mut state = BeliefState::new();
    Dialogue {
        id: id.into(),
        domain: "toy".into(),
        turns: turns
            .iter()
            .map(|(sys, user, l)| {
                let turn_label = label(l);
                state.apply(&turn_label);
                Turn {
                    system_utterance: words(sys),
                    user_utterance: words(user),
                    turn_label,
                    belief_state: state.clone(),
                }
            })
            .collect(),
    }
}

/// Unlabeled dialogue of `(system, user)` turns.
pub fn dialogue(turns: &[(&str, &str)]) -> Dialogue {
    let t: Vec<(&str, &str, &[(&str, &str)])> = turns.iter().map(|(s, u)| (*s, *u, &[][..])).collect();
    labeled("d0", &t)
}
