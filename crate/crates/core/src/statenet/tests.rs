use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::corpus::{SlotSpec, SlotValue};
use crate::testutil::{dialogue, ontology, tiny_config, two_slots};

fn turn_vector(m: &Tracker, user: &str, system: &str) -> Vec<f64> {
    let d = dialogue(&[(system, user)]);
    let prep = m.prepare(&d);
    let mut g = Graph::new();
    let nodes = m.bind_nodes(&mut g);
    let (u, s) = &prep.turns[0];
    let f = m.encode_turn(&mut g, &nodes, u, s).unwrap();
    g.value(f).data().to_vec()
}

#[test]
fn encode_turn_examples() {
    let m = Tracker::new(tiny_config()).unwrap();
    let empty = turn_vector(&m, "", "");
    assert_eq!(empty.len(), 7);
    assert!(empty.iter().all(|x| x.is_finite()));
    let a = turn_vector(&m, "i want cheap food", "what area");
    assert_eq!(a, turn_vector(&m, "i want cheap food", "what area"));
    let b = turn_vector(&m, "what area", "i want cheap food");
    assert_ne!(a, b);
}

#[test]
fn singleton_slot_has_certain_value() {
    let m = Tracker::new(tiny_config()).unwrap();
    let ctx = m.domain_context(&ontology(&[("toy-only", &["one"])])).unwrap();
    let preds = m.forward_dialogue(&ctx, &dialogue(&[("", "hello one"), ("ok", "bye")])).unwrap();
    for p in preds {
        assert_eq!(p.slots[0].dist, vec![1.0]);
    }
}

#[test]
fn identical_turns_advance_the_state() {
    let m = Tracker::new(tiny_config()).unwrap();
    let ctx = m.domain_context(&two_slots()).unwrap();
    let prep = m.prepare(&dialogue(&[("x", "cheap north"), ("x", "cheap north")]));
    let mut g = Graph::new();
    let nodes = m.bind_nodes(&mut g);
    let dn = m.domain_nodes(&mut g, &ctx);
    let s0 = m.initial_state(&mut g, &ctx);
    let (u, s) = &prep.turns[0];
    let f = m.encode_turn(&mut g, &nodes, u, s).unwrap();
    let (p1, s1) = m.track_turn(&mut g, &nodes, &dn, s0, f).unwrap();
    let h1 = g.value(s1.h).clone();
    let (p2, s2) = m.track_turn(&mut g, &nodes, &dn, s1, f).unwrap();
    assert!(!g.value(s2.h).bit_eq(&h1));
    assert_eq!(s2.gru_updates, 2);
    // presence does not read h, so it repeats; values do read it
    assert_eq!(g.scalar(p1[0].presence), g.scalar(p2[0].presence));
    assert_ne!(g.value(p1[0].values).data(), g.value(p2[0].values).data());
}

#[test]
fn gru_updates_once_per_turn_for_any_slot_count() {
    let m = Tracker::new(tiny_config()).unwrap();
    let d = dialogue(&[("", "a"), ("b", "c"), ("d", "e")]);
    for n in [1usize, 2, 5] {
        let names: Vec<String> = (0..n).map(|i| format!("toy-s{i}")).collect();
        let slots: Vec<(&str, &[&str])> = names.iter().map(|s| (s.as_str(), &["x", "y"][..])).collect();
        let ctx = m.domain_context(&ontology(&slots)).unwrap();
        let mut g = Graph::new();
        let out = m.forward_nodes(&mut g, &ctx, &m.prepare(&d)).unwrap();
        assert_eq!(out.state.gru_updates, 3);
    }
}

#[test]
fn forward_dialogue_examples() {
    let m = Tracker::new(tiny_config()).unwrap();
    let ctx = m.domain_context(&two_slots()).unwrap();
    let one = dialogue(&[("", "cheap please")]);
    assert_eq!(m.forward_dialogue(&ctx, &one).unwrap().len(), 1);
    let d = dialogue(&[("", "cheap please"), ("which area", "north"), ("ok", "thanks"), ("", "bye now")]);
    let full = m.forward_dialogue(&ctx, &d).unwrap();
    assert_eq!(full, m.forward_dialogue(&ctx, &d).unwrap());
    for k in 1..=d.turns.len() {
        let mut cut = d.clone();
        cut.turns.truncate(k);
        assert_eq!(m.forward_dialogue(&ctx, &cut).unwrap(), full[..k]);
    }
}

#[test]
fn parameters_do_not_depend_on_the_ontology() {
    let m = Tracker::new(tiny_config()).unwrap();
    let before = m.params().clone();
    let small = m.domain_context(&two_slots()).unwrap();
    let larger = m
        .domain_context(&ontology(&[
            ("toy-price", &["cheap", "moderate", "expensive", "free"]),
            ("toy-area", &["north", "south", "centre"]),
            ("toy-day", &["monday"]),
        ]))
        .unwrap();
    let d = dialogue(&[("", "cheap")]);
    m.forward_dialogue(&small, &d).unwrap();
    m.forward_dialogue(&larger, &d).unwrap();
    assert!(m.params().bit_eq(&before));
    assert_eq!(Tracker::new(tiny_config()).unwrap().params().count(), before.count());
}

#[test]
fn empty_value_list_is_rejected() {
    let m = Tracker::new(tiny_config()).unwrap();
    let o = DomainOntology {
        domain: "toy".into(),
        slots: vec![SlotSpec {
            name: "toy-x".into(),
            values: Arc::new(Vec::new()),
        }],
    };
    assert!(m.domain_context(&o).is_err());
}

#[test]
fn dialogue_end_state_is_a_proper_distribution() {
    let m = Tracker::new(tiny_config()).unwrap();
    let ctx = m.domain_context(&two_slots()).unwrap();
    let d = dialogue(&[("", "cheap"), ("area", "north"), ("", "bye")]);
    let (turns, end) = m.run(&ctx, &m.prepare(&d)).unwrap();
    for (j, s) in end.slots.iter().enumerate() {
        let miss: f64 = turns.iter().map(|t| 1.0 - t.slots[j].presence).product();
        assert!((s.presence - (1.0 - miss)).abs() < 1e-12);
        assert!((s.dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

fn pred(slot: &str, values: &[&str], presence: f64, dist: &[f64]) -> SlotPrediction {
    SlotPrediction {
        slot: slot.into(),
        values: Arc::new(values.iter().map(|v| v.to_string()).collect()),
        presence,
        dist: dist.to_vec(),
    }
}

#[test]
fn decode_turn_examples() {
    let vals = ["a", "b", "c"];
    let none = TurnPrediction {
        slots: vec![pred("s", &vals, 0.0, &[0.2, 0.3, 0.5]), pred("t", &vals, 0.0, &[1.0, 0.0, 0.0])],
    };
    assert!(decode_turn(&none, 0.5).is_empty());
    let one = TurnPrediction {
        slots: vec![pred("s", &vals, 0.9, &[0.1, 0.7, 0.2])],
    };
    assert_eq!(decode_turn(&one, 0.5), [SlotValue::new("s", "b")].into_iter().collect());
    let tie = TurnPrediction {
        slots: vec![pred("s", &["a", "b"], 0.9, &[0.5, 0.5])],
    };
    assert_eq!(decode_turn(&tie, 0.5), [SlotValue::new("s", "a")].into_iter().collect());
    let at = TurnPrediction {
        slots: vec![pred("s", &vals, 0.5, &[1.0, 0.0, 0.0])],
    };
    assert!(decode_turn(&at, 0.5).is_empty());
}

#[test]
fn decode_final_belief_examples() {
    let t = |p: f64, d: &[f64]| TurnPrediction {
        slots: vec![pred("a", &["1", "3"], p, d)],
    };
    let keep = decode_final_belief(&[t(0.9, &[1.0, 0.0]), t(0.1, &[0.0, 1.0])], 0.5);
    assert_eq!(keep.get("a"), Some("1"));
    assert_eq!(keep.len(), 1);
    let over = decode_final_belief(&[t(0.9, &[1.0, 0.0]), t(0.9, &[0.0, 1.0])], 0.5);
    assert_eq!(over.get("a"), Some("3"));
    assert_eq!(over.len(), 1);
}

fn arb_turns() -> impl Strategy<Value = Vec<Vec<(f64, Vec<f64>)>>> {
    let slot = (0.0f64..1.0, prop::collection::vec(0.0f64..1.0, 3));
    prop::collection::vec(prop::collection::vec(slot, 3), 1..6)
}

proptest! {
    #[test]
    fn final_belief_matches_scripted_fold(turns in arb_turns()) {
        let names = ["x", "y", "z"];
        let values = ["v0", "v1", "v2"];
        let preds: Vec<TurnPrediction> = turns
            .iter()
            .map(|t| TurnPrediction {
                slots: t.iter().enumerate().map(|(j, (p, d))| pred(names[j], &values, *p, d)).collect(),
            })
            .collect();
        let got = decode_final_belief(&preds, 0.5);

        let mut oracle: BTreeMap<&str, &str> = BTreeMap::new();
        for t in &turns {
            for (j, (p, d)) in t.iter().enumerate() {
                if *p > 0.5 {
                    let mut best = 0;
                    for k in 1..d.len() {
                        if d[k] > d[best] {
                            best = k;
                        }
                    }
                    oracle.insert(names[j], values[best]);
                }
            }
        }
        let got_pairs: Vec<(String, String)> = got.pairs().map(Into::into).collect();
        let want: Vec<(String, String)> = oracle.iter().map(|(s, v)| (s.to_string(), v.to_string())).collect();
        prop_assert_eq!(got_pairs, want);
        let slots: std::collections::BTreeSet<String> = got.pairs().map(|sv| sv.slot).collect();
        prop_assert_eq!(slots.len(), got.len());
    }

    #[test]
    fn predictions_are_probabilities(seed in 0u64..1000) {
        let mut cfg = tiny_config();
        cfg.init_seed = seed;
        cfg.embedding.seed = seed;
        let m = Tracker::new(cfg).unwrap();
        let ctx = m.domain_context(&two_slots()).unwrap();
        let d = dialogue(&[("", "cheap north please"), ("what", "south"), ("x y z", "")]);
        for p in m.forward_dialogue(&ctx, &d).unwrap() {
            for s in &p.slots {
                prop_assert!((0.0..=1.0).contains(&s.presence));
                prop_assert!((s.dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn loaded_model_reproduces_forward_pass() {
    let m = Tracker::new(tiny_config()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&m, &CheckpointMeta::default(), &path).unwrap();
    let (back, _) = load_checkpoint(&path).unwrap();
    let ctx = m.domain_context(&two_slots()).unwrap();
    let d = dialogue(&[("", "cheap"), ("area", "north")]);
    assert_eq!(m.forward_dialogue(&ctx, &d).unwrap(), back.forward_dialogue(&ctx, &d).unwrap());
}

#[test]
fn from_parts_rejects_mismatched_shapes() {
    let m = Tracker::new(tiny_config()).unwrap();
    let mut cfg = tiny_config();
    cfg.gru_dim = 5;
    assert!(Tracker::from_parts(cfg, m.params().clone()).is_err());
}
