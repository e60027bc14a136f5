//! On-disk corpus schema. Field names are part of the file format.

use serde::{Deserialize, Serialize};

use super::{BeliefState, Corpus, Dialogue, Ontology, SlotValue, Turn};
use crate::error::{Error, Location, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(super) struct RawCorpus {
    ontology: Ontology,
    train: Vec<RawDialogue>,
    dev: Vec<RawDialogue>,
    test: Vec<RawDialogue>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDialogue {
    id: String,
    domain: String,
    turns: Vec<RawTurn>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTurn {
    system_utterance: Vec<String>,
    user_utterance: Vec<String>,
    turn_label: Vec<SlotValue>,
    belief_state: Vec<SlotValue>,
}

impl From<&Corpus> for RawCorpus {
    fn from(c: &Corpus) -> Self {
        let conv = |ds: &[Dialogue]| {
            ds.iter()
                .map(|d| RawDialogue {
                    id: d.id.clone(),
                    domain: d.domain.clone(),
                    turns: d
                        .turns
                        .iter()
                        .map(|t| RawTurn {
                            system_utterance: t.system_utterance.clone(),
                            user_utterance: t.user_utterance.clone(),
                            turn_label: t.turn_label.iter().cloned().collect(),
                            belief_state: t.belief_state.pairs().collect(),
                        })
                        .collect(),
                })
                .collect()
        };
        RawCorpus {
            ontology: c.ontology.clone(),
            train: conv(&c.train),
            dev: conv(&c.dev),
            test: conv(&c.test),
        }
    }
}

impl RawCorpus {
    pub(super) fn into_corpus(self) -> Result<Corpus> {
        let conv = |ds: Vec<RawDialogue>| -> Result<Vec<Dialogue>> {
            ds.into_iter().map(RawDialogue::into_dialogue).collect()
        };
        Ok(Corpus {
            ontology: self.ontology,
            train: conv(self.train)?,
            dev: conv(self.dev)?,
            test: conv(self.test)?,
        })
    }
}

impl RawDialogue {
    fn into_dialogue(self) -> Result<Dialogue> {
        let id = self.id;
        let mut turns = Vec::with_capacity(self.turns.len());
        for (t, raw) in self.turns.into_iter().enumerate() {
            let location = || Location {
                dialogue: id.clone(),
                turn: Some(t),
            };
            for sv in raw.turn_label.iter().chain(&raw.belief_state) {
                if sv.slot.is_empty() || sv.value.is_empty() {
                    return Err(Error::Schema {
                        location: location(),
                        message: "empty slot or value".into(),
                    });
                }
            }
            let label_len = raw.turn_label.len();
            let turn_label: super::TurnLabel = raw.turn_label.into_iter().collect();
            if turn_label.len() != label_len {
                return Err(Error::Schema {
                    location: location(),
                    message: "turn_label repeats a pair".into(),
                });
            }
            let belief_state = BeliefState::from_pairs(raw.belief_state).map_err(|e| Error::Schema {
                location: location(),
                message: e.to_string(),
            })?;
            turns.push(Turn {
                system_utterance: raw.system_utterance,
                user_utterance: raw.user_utterance,
                turn_label,
                belief_state,
            });
        }
        Ok(Dialogue {
            id,
            domain: self.domain,
            turns,
        })
    }
}
