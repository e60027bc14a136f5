//! Dialogue corpora: schema, validation, preprocessing and synthetic data.

mod delex;
mod file;
mod split;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Location, Result};

pub use delex::{default_patterns, delexicalize, DelexPattern, DELEX_TOKEN};
pub use split::split_corpus;
pub use synth::{generate_synthetic_corpus, SyntheticSpec};

/// A domain-qualified slot (e.g. `restaurant-pricerange`) and its value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(String, String)", into = "(String, String)")]
pub struct SlotValue {
    pub slot: String,
    pub value: String,
}

impl SlotValue {
    pub fn new(slot: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            slot: slot.into(),
            value: value.into(),
        }
    }
}

impl From<(String, String)> for SlotValue {
    fn from((slot, value): (String, String)) -> Self {
        Self { slot, value }
    }
}

impl From<SlotValue> for (String, String) {
    fn from(sv: SlotValue) -> Self {
        (sv.slot, sv.value)
    }
}

pub type TurnLabel = BTreeSet<SlotValue>;

/// Accumulated user goal: at most one value per slot.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BeliefState {
    entries: BTreeMap<String, String>,
}

impl BeliefState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a state from pairs; fails if a slot appears with two values.
    pub fn from_pairs<I: IntoIterator<Item = SlotValue>>(pairs: I) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for sv in pairs {
            if let Some(prev) = entries.insert(sv.slot.clone(), sv.value.clone()) {
                if prev != sv.value {
                    return Err(Error::invalid(format!(
                        "slot {:?} has two values ({prev:?}, {:?})",
                        sv.slot, sv.value
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    /// Sets `slot = value`, replacing any previous value.
    pub fn set(&mut self, slot: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(slot.into(), value.into());
    }

    /// Overwrites with every pair of a turn label.
    pub fn apply(&mut self, label: &TurnLabel) {
        for sv in label {
            self.set(sv.slot.clone(), sv.value.clone());
        }
    }

    pub fn get(&self, slot: &str) -> Option<&str> {
        self.entries.get(slot).map(String::as_str)
    }

    pub fn contains(&self, sv: &SlotValue) -> bool {
        self.get(&sv.slot) == Some(sv.value.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Pairs in slot order.
    pub fn pairs(&self) -> impl Iterator<Item = SlotValue> + '_ {
        self.entries.iter().map(|(s, v)| SlotValue::new(s, v))
    }

    pub fn to_set(&self) -> BTreeSet<SlotValue> {
        self.pairs().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub system_utterance: Vec<String>,
    pub user_utterance: Vec<String>,
    pub turn_label: TurnLabel,
    pub belief_state: BeliefState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dialogue {
    pub id: String,
    pub domain: String,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    /// Gold cumulative state after the last turn.
    pub fn final_belief(&self) -> &BeliefState {
        &self.turns.last().expect("dialogues have at least one turn").belief_state
    }
}

/// Domain → slot → candidate values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ontology {
    pub domains: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

impl Ontology {
    /// The slots of one domain, in name order.
    pub fn domain(&self, name: &str) -> Result<DomainOntology> {
        let slots = self
            .domains
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown domain {name:?}")))?;
        DomainOntology::new(
            name,
            slots
                .iter()
                .map(|(s, vs)| SlotSpec {
                    name: s.clone(),
                    values: Arc::new(vs.clone()),
                })
                .collect(),
        )
    }

    pub fn domain_names(&self) -> Vec<String> {
        self.domains.keys().cloned().collect()
    }

    fn validate(&self) -> Result<()> {
        for (domain, slots) in &self.domains {
            if slots.is_empty() {
                return Err(Error::invalid(format!("domain {domain:?} has no slots")));
            }
            for (slot, values) in slots {
                check_values(slot, values)?;
            }
        }
        Ok(())
    }
}

fn check_values(slot: &str, values: &[String]) -> Result<()> {
    if slot.is_empty() {
        return Err(Error::invalid("empty slot name"));
    }
    if values.is_empty() {
        return Err(Error::invalid(format!("slot {slot:?} has no candidate values")));
    }
    let mut seen = BTreeSet::new();
    for v in values {
        if v.is_empty() {
            return Err(Error::invalid(format!("slot {slot:?} has an empty value")));
        }
        if !seen.insert(v) {
            return Err(Error::invalid(format!("slot {slot:?} lists value {v:?} twice")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotSpec {
    pub name: String,
    pub values: Arc<Vec<String>>,
}

impl SlotSpec {
    /// Slot name without its domain prefix, split into words.
    pub fn surface_tokens(&self) -> Vec<String> {
        slot_surface_tokens(&self.name)
    }
}

/// `"hotel-book people"` → `["book", "people"]`.
pub fn slot_surface_tokens(slot: &str) -> Vec<String> {
    let local = slot.split_once('-').map_or(slot, |(_, rest)| rest);
    local
        .split(|c: char| c == '-' || c == '_' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// One domain's slots, the unit a tracker is run against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainOntology {
    pub domain: String,
    pub slots: Vec<SlotSpec>,
}

impl DomainOntology {
    pub fn new(domain: impl Into<String>, slots: Vec<SlotSpec>) -> Result<Self> {
        for s in &slots {
            check_values(&s.name, &s.values)?;
        }
        Ok(Self {
            domain: domain.into(),
            slots,
        })
    }

    pub fn slot(&self, name: &str) -> Option<&SlotSpec> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn slot_index(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }
}

/// Train/dev/test dialogues of a single domain together with its slots.
#[derive(Debug, Clone)]
pub struct DomainData {
    pub ontology: DomainOntology,
    pub train: Vec<Dialogue>,
    pub dev: Vec<Dialogue>,
    pub test: Vec<Dialogue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub ontology: Ontology,
    pub train: Vec<Dialogue>,
    pub dev: Vec<Dialogue>,
    pub test: Vec<Dialogue>,
}

impl Corpus {
    /// Checks every corpus invariant, reporting the first violation.
    pub fn validate(&self) -> Result<()> {
        self.ontology.validate()?;
        let mut ids = BTreeSet::new();
        for d in self.train.iter().chain(&self.dev).chain(&self.test) {
            if !ids.insert(d.id.as_str()) {
                return Err(Error::Schema {
                    location: Location {
                        dialogue: d.id.clone(),
                        turn: None,
                    },
                    message: "dialogue id appears more than once".into(),
                });
            }
            validate_dialogue(d, &self.ontology)?;
        }
        Ok(())
    }

    pub fn domain(&self, name: &str) -> Result<DomainData> {
        let ontology = self.ontology.domain(name)?;
        let pick = |ds: &[Dialogue]| ds.iter().filter(|d| d.domain == name).cloned().collect::<Vec<_>>();
        Ok(DomainData {
            ontology,
            train: pick(&self.train),
            dev: pick(&self.dev),
            test: pick(&self.test),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_corpus(path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Canonical serialization (stable key order, two-space indent).
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&file::RawCorpus::from(self))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let raw: file::RawCorpus = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        let corpus = raw.into_corpus()?;
        corpus.validate()?;
        Ok(corpus)
    }
}

/// Reads and fully validates a corpus file.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Corpus::from_json(&text, path)
}

fn validate_dialogue(d: &Dialogue, ontology: &Ontology) -> Result<()> {
    let at = |turn: Option<usize>| Location {
        dialogue: d.id.clone(),
        turn,
    };
    if d.turns.is_empty() {
        return Err(Error::Schema {
            location: at(None),
            message: "dialogue has no turns".into(),
        });
    }
    let slots = ontology.domains.get(&d.domain).ok_or_else(|| Error::OntologyMismatch {
        location: at(None),
        message: format!("unknown domain {:?}", d.domain),
    })?;
    let check_pair = |sv: &SlotValue, t: usize, what: &str| -> Result<()> {
        let values = slots.get(&sv.slot).ok_or_else(|| Error::OntologyMismatch {
            location: at(Some(t)),
            message: format!("{what} references unknown slot {:?} for domain {:?}", sv.slot, d.domain),
        })?;
        if !values.contains(&sv.value) {
            return Err(Error::OntologyMismatch {
                location: at(Some(t)),
                message: format!("{what} value {:?} is not a candidate for slot {:?}", sv.value, sv.slot),
            });
        }
        Ok(())
    };
    let mut folded = BeliefState::new();
    for (t, turn) in d.turns.iter().enumerate() {
        let mut label_slots = BTreeSet::new();
        for sv in &turn.turn_label {
            check_pair(sv, t, "turn_label")?;
            if !label_slots.insert(sv.slot.as_str()) {
                return Err(Error::Schema {
                    location: at(Some(t)),
                    message: format!("turn_label assigns slot {:?} twice", sv.slot),
                });
            }
        }
        for sv in turn.belief_state.pairs() {
            check_pair(&sv, t, "belief_state")?;
        }
        folded.apply(&turn.turn_label);
        if folded != turn.belief_state {
            return Err(Error::Consistency {
                location: at(Some(t)),
                message: format!(
                    "expected {:?}, found {:?}",
                    folded.to_set(),
                    turn.belief_state.to_set()
                ),
            });
        }
    }
    Ok(())
}

/// Lowercases, splits on whitespace, and strips punctuation from token
/// edges. The delexicalization token passes through untouched.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let lower = raw.to_lowercase();
            if lower == DELEX_TOKEN {
                return Some(lower);
            }
            let t = lower.trim_matches(|c: char| c.is_ascii_punctuation());
            (!t.is_empty()).then(|| t.to_string())
        })
        .collect()
}

/// Turn labels as belief deltas: the first label is the first state, later
/// labels are the pairs new or changed since the previous state.
/// Deletions are not representable and are dropped.
pub fn derive_turn_labels(states: &[BeliefState]) -> Vec<TurnLabel> {
    let mut labels = Vec::with_capacity(states.len());
    let mut prev = BeliefState::new();
    for s in states {
        labels.push(s.pairs().filter(|sv| !prev.contains(sv)).collect());
        prev = s.clone();
    }
    labels
}
