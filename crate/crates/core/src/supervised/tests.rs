use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{generate_synthetic_corpus, SyntheticSpec};
use crate::eval::joint_goal_accuracy;
use crate::numerics::{finite_difference_gradient, max_relative_error};
use crate::statenet::SlotPrediction;
use crate::testutil::{label, labeled, tiny_config, two_slots};

fn slot(name: &str, values: &[&str], presence: f64, dist: &[f64]) -> SlotPrediction {
    SlotPrediction {
        slot: name.into(),
        values: Arc::new(values.iter().map(|v| v.to_string()).collect()),
        presence,
        dist: dist.to_vec(),
    }
}

#[test]
fn perfect_prediction_costs_almost_nothing() {
    let pred = TurnPrediction {
        slots: vec![slot("a", &["x", "y"], 1.0, &[0.0, 1.0]), slot("b", &["x", "y"], 0.0, &[0.5, 0.5])],
    };
    let l = turn_loss_value(&pred, &label(&[("a", "y")])).unwrap();
    assert!((0.0..=2.0 * 1e-11).contains(&l), "{l}");
}

#[test]
fn empty_gold_at_half_presence_is_n_ln2() {
    let pred = TurnPrediction {
        slots: (0..3).map(|i| slot(&format!("s{i}"), &["x", "y", "z"], 0.5, &[0.2, 0.3, 0.5])).collect(),
    };
    let l = turn_loss_value(&pred, &TurnLabel::new()).unwrap();
    assert!((l - 3.0 * 2f64.ln()).abs() < 1e-9);
}

#[test]
fn random_predictions_match_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let values = ["x", "y", "z", "w"];
    for _ in 0..200 {
        let mut slots = Vec::new();
        let mut gold = Vec::new();
        let mut want = 0.0;
        for j in 0..3 {
            let p: f64 = rng.random_range(0.0..1.0);
            let raw: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..1.0)).collect();
            let z: f64 = raw.iter().sum();
            let dist: Vec<f64> = raw.iter().map(|x| x / z).collect();
            let name = format!("s{j}");
            if rng.random_bool(0.5) {
                let k = rng.random_range(0..4);
                want -= p.max(1e-12).ln() + dist[k].max(1e-12).ln();
                gold.push((name.clone(), values[k]));
            } else {
                want -= (1.0 - p).max(1e-12).ln();
            }
            slots.push(slot(&name, &values, p, &dist));
        }
        let gold: Vec<(&str, &str)> = gold.iter().map(|(s, v)| (s.as_str(), *v)).collect();
        let got = turn_loss_value(&TurnPrediction { slots }, &label(&gold)).unwrap();
        assert!((got - want).abs() < 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn unknown_gold_value_is_rejected() {
    let pred = TurnPrediction {
        slots: vec![slot("a", &["x"], 0.5, &[1.0])],
    };
    assert!(turn_loss_value(&pred, &label(&[("a", "q")])).is_err());
    assert!(turn_loss_value(&pred, &label(&[("b", "x")])).is_err());
}

#[test]
fn turn_loss_gradient_matches_finite_differences() {
    let model = Tracker::new(tiny_config()).unwrap();
    let ctx = model.domain_context(&two_slots()).unwrap();
    let d = labeled(
        "g",
        &[
            ("", "cheap please", &[("toy-price", "cheap")]),
            ("which area", "north side", &[("toy-area", "north")]),
        ],
    );
    let prep = model.prepare(&d);
    let (_, analytic) = batch_gradient(&model, &ctx, &[(&d, &prep)]).unwrap();
    let loss = |ps: &[Tensor]| {
        let mut m = model.clone();
        m.params_mut().tensors_mut().clone_from_slice(ps);
        batch_gradient(&m, &ctx, &[(&d, &prep)]).unwrap().0
    };
    let numeric = finite_difference_gradient(loss, model.params().tensors(), 1e-5).unwrap();
    let err = max_relative_error(&analytic, &numeric);
    assert!(err <= 1e-5, "max relative error {err}");
}

fn separable() -> DomainData {
    let spec = SyntheticSpec {
        domains: 1,
        slots_per_domain: 1,
        values_per_slot: 2,
        dialogues_per_domain: 60,
        turns_per_dialogue: 2,
        overlap: 0.0,
        seed: 3,
    };
    let c = generate_synthetic_corpus(&spec).unwrap();
    let name = c.ontology.domain_names()[0].clone();
    c.domain(&name).unwrap()
}

fn small_model() -> Tracker {
    let mut cfg = crate::statenet::ModelConfig::desk();
    cfg.embedding.dim = 16;
    cfg.receptor_dim = 4;
    cfg.turn_dim = 16;
    cfg.gru_dim = 8;
    Tracker::new(cfg).unwrap()
}

#[test]
fn zero_epochs_returns_the_initial_model() {
    let data = separable();
    let m = small_model();
    let (out, hist) = train_supervised(
        &m,
        &data,
        &TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert!(out.params().bit_eq(m.params()));
    assert!(hist.epochs.is_empty());
    assert_eq!(hist.steps, 0);
}

#[test]
fn separable_corpus_is_learned_and_training_is_deterministic() {
    let data = separable();
    let m = small_model();
    let cfg = TrainConfig {
        max_epochs: 200,
        seed: 5,
        ..TrainConfig::default()
    };
    let (a, ha) = train_supervised(&m, &data, &cfg).unwrap();
    let ctx = a.domain_context(&data.ontology).unwrap();
    let jga = joint_goal_accuracy(&a, &ctx, &data.dev, 0.5).unwrap();
    assert!(jga >= 0.95, "dev joint goal accuracy {jga}");

    let best = ha.best().unwrap();
    let max = ha.epochs.iter().map(|r| r.dev_jga).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best.dev_jga, max);
    assert_eq!(jga, best.dev_jga);
    let per_epoch = data.train.len().div_ceil(16);
    assert_eq!(ha.steps, per_epoch * ha.epochs.len());
    assert!(ha.epochs.windows(2).all(|w| w[1].epoch == w[0].epoch + 1));

    let (b, hb) = train_supervised(&m, &data, &cfg).unwrap();
    assert!(a.params().bit_eq(b.params()));
    assert_eq!(ha.to_csv(), hb.to_csv());
}

#[test]
fn empty_train_split_is_rejected() {
    let mut data = separable();
    data.train.clear();
    assert!(train_supervised(&small_model(), &data, &TrainConfig::default()).is_err());
}

#[test]
fn history_tables() {
    let h = TrainHistory {
        epochs: vec![EpochRecord {
            epoch: 1,
            train_loss: 0.5,
            dev_jga: 0.25,
            dev_turn_acc: 0.75,
            seconds: 1.25,
        }],
        best_epoch: Some(1),
        steps: 4,
    };
    assert_eq!(h.to_csv(), "epoch,train_loss,dev_jga,dev_turn_acc\n1,0.500000000,0.250000,0.750000\n");
    assert_eq!(h.timing_csv(), "epoch,seconds\n1,1.250\n");
}
