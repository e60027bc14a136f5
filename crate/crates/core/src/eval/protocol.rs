use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::evaluate;
use crate::corpus::{Corpus, DomainData};
use crate::error::{Error, Result};
use crate::pg::{finetune_pg, PGConfig};
use crate::statenet::{ModelConfig, Tracker};
use crate::supervised::{train_supervised, TrainConfig};

/// Test turn accuracy before and after policy-gradient fine-tuning. On the
/// diagonal, `bl_accuracy` is the supervised in-domain accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub source: String,
    pub target: String,
    pub bl_accuracy: f64,
    pub pg_accuracy: f64,
}

impl TransferCell {
    pub fn in_domain(&self) -> bool {
        self.source == self.target
    }
}

/// Mean over all sources other than the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub target: String,
    pub bl_accuracy: f64,
    pub pg_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub domains: Vec<String>,
    pub cells: Vec<TransferCell>,
    pub averages: Vec<AverageRow>,
}

impl TransferMatrix {
    pub fn cell(&self, source: &str, target: &str) -> Option<&TransferCell> {
        self.cells.iter().find(|c| c.source == source && c.target == target)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("source,target,bl_accuracy,pg_accuracy\n");
        for c in &self.cells {
            s.push_str(&format!("{},{},{:.6},{:.6}\n", c.source, c.target, c.bl_accuracy, c.pg_accuracy));
        }
        s
    }

    pub fn averages_csv(&self) -> String {
        let mut s = String::from("target,bl_accuracy,pg_accuracy\n");
        for a in &self.averages {
            s.push_str(&format!("{},{:.6},{:.6}\n", a.target, a.bl_accuracy, a.pg_accuracy));
        }
        s
    }
}

fn test_accuracy(model: &Tracker, data: &DomainData, threshold: f64) -> Result<f64> {
    let ctx = model.domain_context(&data.ontology)?;
    Ok(evaluate(model, &ctx, &data.test, threshold)?.turn_accuracy)
}

/// Pretrains one model per domain, then scores every (source, target)
/// pair zero-shot and after policy-gradient fine-tuning on the target.
/// `seed` replaces the seeds of all three configs.
pub fn run_setup_matrix(
    corpus: &Corpus,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    pg_config: &PGConfig,
    seed: u64,
) -> Result<TransferMatrix> {
    let domains = corpus.ontology.domain_names();
    if domains.len() < 2 {
        return Err(Error::invalid("the transfer matrix needs at least two domains"));
    }
    let data: Vec<DomainData> = domains.iter().map(|d| corpus.domain(d)).collect::<Result<_>>()?;
    let model_config = ModelConfig {
        init_seed: seed,
        ..model_config.clone()
    };
    let train_config = TrainConfig {
        seed,
        ..train_config.clone()
    };
    let pg_config = PGConfig { seed, ..pg_config.clone() };
    let threshold = pg_config.presence_threshold;

    let mut cells = Vec::new();
    for source in &data {
        let init = Tracker::new(model_config.clone())?;
        let (pretrained, _) = train_supervised(&init, source, &train_config)?;
        for target in &data {
            let bl = test_accuracy(&pretrained, target, threshold)?;
            let (tuned, _) = finetune_pg(&pretrained, target, &pg_config)?;
            cells.push(TransferCell {
                source: source.ontology.domain.clone(),
                target: target.ontology.domain.clone(),
                bl_accuracy: bl,
                pg_accuracy: test_accuracy(&tuned, target, threshold)?,
            });
        }
    }
    let averages = domains
        .iter()
        .map(|t| {
            let off: Vec<&TransferCell> = cells.iter().filter(|c| &c.target == t && !c.in_domain()).collect();
            let n = off.len() as f64;
            AverageRow {
                target: t.clone(),
                bl_accuracy: off.iter().map(|c| c.bl_accuracy).sum::<f64>() / n,
                pg_accuracy: off.iter().map(|c| c.pg_accuracy).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(TransferMatrix { domains, cells, averages })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub s: usize,
    pub weak_accuracy: f64,
    pub pg_accuracy: f64,
}

impl CurvePoint {
    pub fn gain(&self) -> f64 {
        self.pg_accuracy - self.weak_accuracy
    }
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("s,weak_accuracy,pg_accuracy,gain\n");
    for p in points {
        s.push_str(&format!("{},{:.6},{:.6},{:.6}\n", p.s, p.weak_accuracy, p.pg_accuracy, p.gain()));
    }
    s
}

/// The first `s` dialogues of a seeded shuffle of the target train split.
pub fn weak_subset(data: &DomainData, s: usize, seed: u64) -> Result<DomainData> {
    if s == 0 || s > data.train.len() {
        return Err(Error::invalid(format!(
            "sample size {s} outside 1..={} for domain {}",
            data.train.len(),
            data.ontology.domain
        )));
    }
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(DomainData {
        ontology: data.ontology.clone(),
        train: order[..s].iter().map(|&i| data.train[i].clone()).collect(),
        dev: data.dev.clone(),
        test: data.test.clone(),
    })
}

/// For each size: supervised fine-tuning on that many target dialogues,
/// then policy-gradient fine-tuning on the whole target train split.
pub fn run_weak_curve(
    pretrained: &Tracker,
    target: &DomainData,
    sizes: &[usize],
    train_config: &TrainConfig,
    pg_config: &PGConfig,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    for &s in sizes {
        weak_subset(target, s, seed)?;
    }
    let threshold = pg_config.presence_threshold;
    sizes
        .iter()
        .map(|&s| {
            let subset = weak_subset(target, s, seed)?;
            let (weak, _) = train_supervised(pretrained, &subset, train_config)?;
            let (tuned, _) = finetune_pg(&weak, target, pg_config)?;
            Ok(CurvePoint {
                s,
                weak_accuracy: test_accuracy(&weak, target, threshold)?,
                pg_accuracy: test_accuracy(&tuned, target, threshold)?,
            })
        })
        .collect()
}
