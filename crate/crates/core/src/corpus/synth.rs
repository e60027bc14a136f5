//! Template-based synthetic corpora with controllable cross-domain overlap.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{default_patterns, delexicalize, split_corpus, BeliefState, Corpus, Dialogue, Ontology, SlotValue, Turn, TurnLabel};
use crate::error::{Error, Result};

const DOMAIN_NAMES: [&str; 5] = ["taxi", "train", "hotel", "restaurant", "attraction"];
const FILLERS_PER_DOMAIN: usize = 10;
const SPLIT_RATIOS: (f64, f64, f64) = (0.8, 0.1, 0.1);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub domains: usize,
    pub slots_per_domain: usize,
    pub values_per_slot: usize,
    pub dialogues_per_domain: usize,
    pub turns_per_dialogue: usize,
    /// Fraction of slot names, values and filler words shared across domains.
    pub overlap: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 2 domains × 4 slots × 6 values, 250 dialogues per domain (200 train
    /// after the 80/10/10 split), 6 turns, overlap 0.6, seed 1.
    pub fn standard() -> Self {
        Self {
            domains: 2,
            slots_per_domain: 4,
            values_per_slot: 6,
            dialogues_per_domain: 250,
            turns_per_dialogue: 6,
            overlap: 0.6,
            seed: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        let counts = [
            ("domains", self.domains),
            ("slots_per_domain", self.slots_per_domain),
            ("values_per_slot", self.values_per_slot),
            ("dialogues_per_domain", self.dialogues_per_domain),
            ("turns_per_dialogue", self.turns_per_dialogue),
        ];
        for (name, n) in counts {
            if n == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if self.dialogues_per_domain < 3 {
            return Err(Error::invalid("dialogues_per_domain must be at least 3 to split"));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::invalid(format!("overlap must lie in [0, 1], got {}", self.overlap)));
        }
        Ok(())
    }
}

struct Lexicon {
    used: HashSet<String>,
}

impl Lexicon {
    fn word(&mut self, rng: &mut ChaCha8Rng) -> String {
        const CONS: &[u8] = b"bdfgklmnprstvz";
        const VOWELS: &[u8] = b"aeiou";
        loop {
            let syllables = rng.random_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(*CONS.choose(rng).unwrap() as char);
                w.push(*VOWELS.choose(rng).unwrap() as char);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words(&mut self, rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
        (0..n).map(|_| self.word(rng)).collect()
    }
}

struct DomainLexicon {
    name: String,
    slot_words: Vec<String>,
    values: Vec<Vec<String>>,
    fillers: Vec<String>,
}

impl DomainLexicon {
    fn slot_name(&self, i: usize) -> String {
        format!("{}-{}", self.name, self.slot_words[i])
    }
}

fn shared_count(overlap: f64, n: usize) -> usize {
    ((overlap * n as f64).round() as usize).min(n)
}

/// Builds a corpus whose every dialogue satisfies the schema invariants by
/// construction. Identical specs give byte-identical serializations.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut lex = Lexicon { used: HashSet::new() };

    let shared_slots = lex.words(&mut rng, spec.slots_per_domain);
    let shared_values: Vec<Vec<String>> = (0..spec.slots_per_domain)
        .map(|_| lex.words(&mut rng, spec.values_per_slot))
        .collect();
    let shared_fillers = lex.words(&mut rng, FILLERS_PER_DOMAIN);

    let n_slot_shared = shared_count(spec.overlap, spec.slots_per_domain);
    let n_value_shared = shared_count(spec.overlap, spec.values_per_slot);
    let n_filler_shared = shared_count(spec.overlap, FILLERS_PER_DOMAIN);

    let mut domains = Vec::with_capacity(spec.domains);
    for d in 0..spec.domains {
        let name = DOMAIN_NAMES
            .get(d)
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("domain{d}"));
        let slot_words = (0..spec.slots_per_domain)
            .map(|i| {
                if i < n_slot_shared {
                    shared_slots[i].clone()
                } else {
                    lex.word(&mut rng)
                }
            })
            .collect();
        let values = (0..spec.slots_per_domain)
            .map(|i| {
                (0..spec.values_per_slot)
                    .map(|k| {
                        if k < n_value_shared {
                            shared_values[i][k].clone()
                        } else {
                            lex.word(&mut rng)
                        }
                    })
                    .collect()
            })
            .collect();
        let fillers = (0..FILLERS_PER_DOMAIN)
            .map(|k| {
                if k < n_filler_shared {
                    shared_fillers[k].clone()
                } else {
                    lex.word(&mut rng)
                }
            })
            .collect();
        domains.push(DomainLexicon {
            name,
            slot_words,
            values,
            fillers,
        });
    }

    let mut ontology = Ontology::default();
    for dom in &domains {
        let slots: BTreeMap<String, Vec<String>> = (0..spec.slots_per_domain)
            .map(|i| (dom.slot_name(i), dom.values[i].clone()))
            .collect();
        ontology.domains.insert(dom.name.clone(), slots);
    }

    let patterns = default_patterns();
    let (mut train, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (d, dom) in domains.iter().enumerate() {
        let dialogues: Vec<Dialogue> = (0..spec.dialogues_per_domain)
            .map(|j| generate_dialogue(dom, j, spec, &patterns, &mut rng))
            .collect();
        let (tr, dv, te) = split_corpus(&dialogues, SPLIT_RATIOS, spec.seed.wrapping_add(d as u64))?;
        train.extend(tr);
        dev.extend(dv);
        test.extend(te);
    }
    let corpus = Corpus {
        ontology,
        train,
        dev,
        test,
    };
    corpus.validate()?;
    Ok(corpus)
}

fn generate_dialogue(
    dom: &DomainLexicon,
    index: usize,
    spec: &SyntheticSpec,
    patterns: &[super::DelexPattern],
    rng: &mut ChaCha8Rng,
) -> Dialogue {
    let n_turns = spec.turns_per_dialogue;
    let n_slots = spec.slots_per_domain;

    let mut goal: Vec<usize> = (0..n_slots).filter(|_| rng.random_bool(0.5)).collect();
    if goal.is_empty() {
        goal.push(rng.random_range(0..n_slots));
    }
    let mut labels: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_turns];
    let mut mentioned: Vec<(usize, usize, usize)> = Vec::new();
    for &slot in &goal {
        let t = rng.random_range(0..n_turns);
        let v = rng.random_range(0..spec.values_per_slot);
        labels[t].push((slot, v));
        mentioned.push((slot, v, t));
    }
    // the user sometimes changes their mind about one slot later on
    if spec.values_per_slot > 1 && rng.random_bool(0.25) {
        let (slot, v, t) = mentioned[rng.random_range(0..mentioned.len())];
        if t + 1 < n_turns {
            let t2 = rng.random_range(t + 1..n_turns);
            if labels[t2].iter().all(|(s, _)| *s != slot) {
                let mut nv = rng.random_range(0..spec.values_per_slot - 1);
                if nv >= v {
                    nv += 1;
                }
                labels[t2].push((slot, nv));
            }
        }
    }

    let filler = |rng: &mut ChaCha8Rng| dom.fillers.choose(rng).unwrap().clone();
    let mut belief = BeliefState::new();
    let mut turns = Vec::with_capacity(n_turns);
    for (t, pairs) in labels.iter_mut().enumerate() {
        pairs.shuffle(rng);
        let mut user = vec![filler(rng)];
        if pairs.is_empty() {
            for _ in 0..rng.random_range(1..=2) {
                user.push(filler(rng));
            }
        }
        for (k, &(slot, v)) in pairs.iter().enumerate() {
            if k > 0 {
                user.push(filler(rng));
            }
            user.push(dom.slot_words[slot].clone());
            user.push(dom.values[slot][v].clone());
        }
        if rng.random_bool(0.5) {
            user.push(filler(rng));
        }

        let mut system = Vec::new();
        if t > 0 {
            for _ in 0..rng.random_range(2..=3) {
                system.push(filler(rng));
            }
            if let Some(&(slot, _)) = pairs.first() {
                if rng.random_bool(0.5) {
                    system.push(dom.slot_words[slot].clone());
                }
            }
            if t + 1 == n_turns && rng.random_bool(0.5) {
                let letters: String = (0..2).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
                system.push(format!("{letters}{:05}", rng.random_range(0..100_000)));
            }
        }

        let label: TurnLabel = pairs
            .iter()
            .map(|&(s, v)| SlotValue::new(dom.slot_name(s), dom.values[s][v].clone()))
            .collect();
        belief.apply(&label);
        turns.push(Turn {
            system_utterance: delexicalize(&system, patterns),
            user_utterance: delexicalize(&user, patterns),
            turn_label: label,
            belief_state: belief.clone(),
        });
    }
    debug_assert!(turns.iter().all(|t| t.turn_label.iter().map(|s| &s.slot).collect::<BTreeSet<_>>().len() == t.turn_label.len()));
    Dialogue {
        id: format!("{}-{index:04}", dom.name),
        domain: dom.name.clone(),
        turns,
    }
}
