use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use dst_core::corpus::{generate_synthetic_corpus, load_corpus, Corpus, DomainData, SyntheticSpec};
use dst_core::eval::{curve_csv, evaluate, run_setup_matrix, run_weak_curve, weak_subset, Metrics};
use dst_core::pg::{finetune_pg, PGConfig};
use dst_core::statenet::{load_checkpoint, save_checkpoint, CheckpointMeta, ModelConfig, Tracker};
use dst_core::supervised::{train_supervised, TrainConfig};

type CliResult<T = ()> = Result<T, Box<dyn std::error::Error>>;

#[derive(Debug, Parser)]
#[command(name = "dstrl", version, about = "Dialogue state tracking with policy-gradient domain transfer")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multi-domain corpus.
    GenCorpus {
        #[arg(long)]
        domains: usize,
        #[arg(long)]
        slots: usize,
        #[arg(long)]
        values: usize,
        #[arg(long)]
        dialogues: usize,
        #[arg(long)]
        turns: usize,
        #[arg(long)]
        overlap: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a tracker with turn-level supervision on one domain.
    Pretrain {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        domain: String,
        /// JSON with optional `model` and `train` sections.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on one domain.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        domain: String,
        #[arg(long, value_enum)]
        metric: Option<Metric>,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
    },
    /// Adapt a checkpoint to a target domain with the dialogue-level reward.
    FinetunePg {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        target_domain: String,
        /// JSON policy-gradient config.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune a checkpoint with turn labels from a few target dialogues.
    FinetuneWeak {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        target_domain: String,
        #[arg(long)]
        samples: usize,
        /// JSON supervised training config.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Zero-shot and policy-gradient accuracy for every domain pair.
    TransferMatrix {
        #[arg(long)]
        corpus: PathBuf,
        /// JSON with optional `model` and `train` sections.
        #[arg(long)]
        train_config: PathBuf,
        #[arg(long)]
        pg_config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy gain from policy gradient after weak supervision of varying size.
    WeakCurve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        target_domain: String,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        /// JSON supervised training config; defaults when omitted.
        #[arg(long)]
        train_config: Option<PathBuf>,
        /// JSON policy-gradient config; defaults when omitted.
        #[arg(long)]
        pg_config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Metric {
    TurnAcc,
    Jga,
    Reward,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Split {
    Dev,
    Test,
}

/// Model and supervised-training sections of a pretraining config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PretrainConfig {
    #[serde(default = "ModelConfig::desk")]
    model: ModelConfig,
    #[serde(default)]
    train: TrainConfig,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("parsing {}: {e}", path.display()).into())
}

fn write(path: &Path, contents: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;
    }
    std::fs::write(path, contents).map_err(|e| format!("writing {}: {e}", path.display()).into())
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

/// Table on stdout, summary on stderr.
fn report(table: &str, summary: &str) {
    print!("{table}");
    eprint!("{summary}");
}

fn domain_data(corpus: &Corpus, name: &str) -> CliResult<DomainData> {
    Ok(corpus.domain(name)?)
}

fn test_metrics(model: &Tracker, data: &DomainData, threshold: f64) -> CliResult<Metrics> {
    let ctx = model.domain_context(&data.ontology)?;
    Ok(evaluate(model, &ctx, &data.test, threshold)?)
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::GenCorpus {
            domains,
            slots,
            values,
            dialogues,
            turns,
            overlap,
            seed,
            out,
        } => gen_corpus(
            &SyntheticSpec {
                domains,
                slots_per_domain: slots,
                values_per_slot: values,
                dialogues_per_domain: dialogues,
                turns_per_dialogue: turns,
                overlap,
                seed,
            },
            &out,
        ),
        Command::Pretrain {
            corpus,
            domain,
            config,
            out,
        } => pretrain(&corpus, &domain, &config, &out),
        Command::Evaluate {
            model,
            corpus,
            domain,
            metric,
            split,
        } => evaluate_cmd(&model, &corpus, &domain, metric, split),
        Command::FinetunePg {
            model,
            corpus,
            target_domain,
            config,
            out,
        } => finetune_pg_cmd(&model, &corpus, &target_domain, &config, &out),
        Command::FinetuneWeak {
            model,
            corpus,
            target_domain,
            samples,
            config,
            out,
        } => finetune_weak(&model, &corpus, &target_domain, samples, &config, &out),
        Command::TransferMatrix {
            corpus,
            train_config,
            pg_config,
            seed,
            out,
        } => transfer_matrix(&corpus, &train_config, &pg_config, seed, &out),
        Command::WeakCurve {
            model,
            corpus,
            target_domain,
            sizes,
            out,
            train_config,
            pg_config,
            seed,
        } => weak_curve(
            &model,
            &corpus,
            &target_domain,
            &sizes,
            &out,
            train_config.as_deref(),
            pg_config.as_deref(),
            seed,
        ),
    }
}

fn gen_corpus(spec: &SyntheticSpec, out: &Path) -> CliResult {
    let corpus = generate_synthetic_corpus(spec)?;
    write(out, &corpus.to_json()?)?;
    let mut table = String::from("domain,slots,values,train,dev,test,turns,empty_label_turns\n");
    let mut summary = format!("wrote {}\n", out.display());
    for name in corpus.ontology.domain_names() {
        let d = corpus.domain(&name)?;
        let all = d.train.iter().chain(&d.dev).chain(&d.test);
        let (turns, empty) = all.fold((0, 0), |(n, e), dlg| {
            (n + dlg.turns.len(), e + dlg.turns.iter().filter(|t| t.turn_label.is_empty()).count())
        });
        let values: usize = d.ontology.slots.iter().map(|s| s.values.len()).sum();
        writeln!(
            table,
            "{name},{},{values},{},{},{},{turns},{empty}",
            d.ontology.slots.len(),
            d.train.len(),
            d.dev.len(),
            d.test.len()
        )?;
        writeln!(
            summary,
            "  {name}: {} slots, {} train / {} dev / {} test dialogues, {empty} of {turns} turns without a label",
            d.ontology.slots.len(),
            d.train.len(),
            d.dev.len(),
            d.test.len()
        )?;
    }
    report(&table, &summary);
    Ok(())
}

fn pretrain(corpus: &Path, domain: &str, config: &Path, out: &Path) -> CliResult {
    let cfg: PretrainConfig = read_json(config)?;
    let corpus = load_corpus(corpus)?;
    let data = domain_data(&corpus, domain)?;
    let started = Instant::now();
    let (model, history) = train_supervised(&Tracker::new(cfg.model.clone())?, &data, &cfg.train)?;
    let best = history.best();
    let test = test_metrics(&model, &data, 0.5)?;
    save_checkpoint(
        &model,
        &CheckpointMeta {
            domain: domain.into(),
            stage: "pretrain".into(),
            epoch: best.map(|b| b.epoch),
            dev_metric: best.map(|b| b.dev_jga),
            seed: cfg.train.seed,
            train_config: Some(serde_json::to_value(&cfg.train)?),
            pg_config: None,
        },
        out,
    )?;
    let (epoch, jga, acc) = best.map_or((0, 0.0, 0.0), |b| (b.epoch, b.dev_jga, b.dev_turn_acc));
    let table = format!(
        "domain,best_epoch,dev_jga,dev_turn_acc,test_turn_acc,test_jga\n{domain},{epoch},{jga:.6},{acc:.6},{:.6},{:.6}\n",
        test.turn_accuracy, test.joint_goal_accuracy
    );
    let summary = format!(
        "pretrained on {domain}: {} epochs, best epoch {epoch} (dev joint goal {jga:.3}, dev turn accuracy {acc:.3}); test turn accuracy {:.3}\nwrote {}\n",
        history.epochs.len(),
        test.turn_accuracy,
        out.display()
    );
    write(&sidecar(out, "history.csv"), &history.to_csv())?;
    write(&sidecar(out, "timing.csv"), &history.timing_csv())?;
    write(&sidecar(out, "summary.txt"), &summary)?;
    report(&table, &summary);
    eprintln!("elapsed {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn evaluate_cmd(model: &Path, corpus: &Path, domain: &str, metric: Option<Metric>, split: Split) -> CliResult {
    let (model, meta) = load_checkpoint(model)?;
    let corpus = load_corpus(corpus)?;
    let data = domain_data(&corpus, domain)?;
    let (name, dialogues) = match split {
        Split::Dev => ("dev", &data.dev),
        Split::Test => ("test", &data.test),
    };
    let ctx = model.domain_context(&data.ontology)?;
    let m = evaluate(&model, &ctx, dialogues, 0.5)?;
    let rows: Vec<(&str, String)> = match metric {
        Some(Metric::TurnAcc) => vec![("turn-acc", format!("{:.6}", m.turn_accuracy))],
        Some(Metric::Jga) => vec![("jga", format!("{:.6}", m.joint_goal_accuracy))],
        Some(Metric::Reward) => vec![("reward", format!("{:.6}", m.reward))],
        None => vec![
            ("turn-acc", format!("{:.6}", m.turn_accuracy)),
            ("jga", format!("{:.6}", m.joint_goal_accuracy)),
            ("reward", format!("{:.6}", m.reward)),
            ("turns", m.turns.to_string()),
            ("empty_label_turns", m.empty_gold_turns.to_string()),
        ],
    };
    let mut table = String::from("domain,split,metric,value\n");
    for (k, v) in &rows {
        writeln!(table, "{domain},{name},{k},{v}")?;
    }
    let summary = format!(
        "{} model ({}) on {domain} {name}: turn accuracy {:.3}, joint goal {:.3}, reward {:.3} over {} turns ({} without a label)\n",
        meta.stage, meta.domain, m.turn_accuracy, m.joint_goal_accuracy, m.reward, m.turns, m.empty_gold_turns
    );
    report(&table, &summary);
    Ok(())
}

fn finetune_pg_cmd(model: &Path, corpus: &Path, target: &str, config: &Path, out: &Path) -> CliResult {
    let cfg: PGConfig = read_json(config)?;
    let (pretrained, meta) = load_checkpoint(model)?;
    let corpus = load_corpus(corpus)?;
    let data = domain_data(&corpus, target)?;
    let started = Instant::now();
    let before = test_metrics(&pretrained, &data, cfg.presence_threshold)?;
    let (tuned, history) = finetune_pg(&pretrained, &data, &cfg)?;
    let after = test_metrics(&tuned, &data, cfg.presence_threshold)?;
    save_checkpoint(
        &tuned,
        &CheckpointMeta {
            domain: target.into(),
            stage: "finetune-pg".into(),
            epoch: None,
            dev_metric: history.best_dev_reward,
            seed: cfg.seed,
            train_config: meta.train_config.clone(),
            pg_config: Some(serde_json::to_value(&cfg)?),
        },
        out,
    )?;
    let initial = history.evaluations().next().and_then(|r| r.dev_reward).unwrap_or(f64::NAN);
    let best = history.best_dev_reward.unwrap_or(initial);
    let best_batch = history.best_batch.map(|b| b.to_string()).unwrap_or_default();
    let table = format!(
        "source,target,bl_accuracy,pg_accuracy,initial_dev_reward,best_dev_reward,best_batch,rollbacks\n{},{target},{:.6},{:.6},{initial:.6},{best:.6},{best_batch},{}\n",
        meta.domain, before.turn_accuracy, after.turn_accuracy, history.rollbacks
    );
    let summary = format!(
        "policy gradient {} -> {target}: test turn accuracy {:.3} -> {:.3}; dev reward {initial:.3} -> {best:.3} (best batch {best_batch}, {} rollbacks)\nwrote {}\n",
        meta.domain,
        before.turn_accuracy,
        after.turn_accuracy,
        history.rollbacks,
        out.display()
    );
    write(&sidecar(out, "history.csv"), &history.to_csv())?;
    write(&sidecar(out, "summary.txt"), &summary)?;
    report(&table, &summary);
    eprintln!("elapsed {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn finetune_weak(model: &Path, corpus: &Path, target: &str, samples: usize, config: &Path, out: &Path) -> CliResult {
    let cfg: TrainConfig = read_json(config)?;
    let (pretrained, meta) = load_checkpoint(model)?;
    let corpus = load_corpus(corpus)?;
    let data = domain_data(&corpus, target)?;
    let subset = weak_subset(&data, samples, cfg.seed)?;
    let before = test_metrics(&pretrained, &data, 0.5)?;
    let (tuned, history) = train_supervised(&pretrained, &subset, &cfg)?;
    let after = test_metrics(&tuned, &data, 0.5)?;
    let best = history.best();
    save_checkpoint(
        &tuned,
        &CheckpointMeta {
            domain: target.into(),
            stage: "finetune-weak".into(),
            epoch: best.map(|b| b.epoch),
            dev_metric: best.map(|b| b.dev_jga),
            seed: cfg.seed,
            train_config: Some(serde_json::to_value(&cfg)?),
            pg_config: None,
        },
        out,
    )?;
    let table = format!(
        "source,target,samples,before_accuracy,after_accuracy\n{},{target},{samples},{:.6},{:.6}\n",
        meta.domain, before.turn_accuracy, after.turn_accuracy
    );
    let summary = format!(
        "weak supervision {} -> {target} with {samples} dialogues: test turn accuracy {:.3} -> {:.3}\nwrote {}\n",
        meta.domain,
        before.turn_accuracy,
        after.turn_accuracy,
        out.display()
    );
    write(&sidecar(out, "history.csv"), &history.to_csv())?;
    write(&sidecar(out, "timing.csv"), &history.timing_csv())?;
    write(&sidecar(out, "summary.txt"), &summary)?;
    report(&table, &summary);
    Ok(())
}

#[derive(Serialize)]
struct MatrixReport<'a> {
    seed: u64,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    pg: &'a PGConfig,
    matrix: &'a dst_core::eval::TransferMatrix,
}

fn transfer_matrix(corpus: &Path, train_config: &Path, pg_config: &Path, seed: u64, out: &Path) -> CliResult {
    let cfg: PretrainConfig = read_json(train_config)?;
    let pg: PGConfig = read_json(pg_config)?;
    let corpus = load_corpus(corpus)?;
    let started = Instant::now();
    let m = run_setup_matrix(&corpus, &cfg.model, &cfg.train, &pg, seed)?;
    let json = serde_json::to_string_pretty(&MatrixReport {
        seed,
        model: &cfg.model,
        train: &cfg.train,
        pg: &pg,
        matrix: &m,
    })?;
    let mut summary = format!("transfer matrix, seed {seed} (rows: source, columns: target; bl -> pg)\n");
    for s in &m.domains {
        write!(summary, "  {s:>12}:")?;
        for t in &m.domains {
            let c = m.cell(s, t).ok_or("missing matrix cell")?;
            write!(summary, "  {t} {:.3} -> {:.3}", c.bl_accuracy, c.pg_accuracy)?;
        }
        summary.push('\n');
    }
    for a in &m.averages {
        writeln!(
            summary,
            "  average into {}: {:.3} -> {:.3}",
            a.target, a.bl_accuracy, a.pg_accuracy
        )?;
    }
    write(&out.join("matrix.csv"), &m.to_csv())?;
    write(&out.join("averages.csv"), &m.averages_csv())?;
    write(&out.join("matrix.json"), &json)?;
    write(&out.join("summary.txt"), &summary)?;
    write(
        &out.join("timing.csv"),
        &format!("stage,seconds\ntotal,{:.3}\n", started.elapsed().as_secs_f64()),
    )?;
    report(&m.to_csv(), &summary);
    Ok(())
}

#[derive(Serialize)]
struct CurveReport<'a> {
    seed: u64,
    source: &'a str,
    target: &'a str,
    train: &'a TrainConfig,
    pg: &'a PGConfig,
    points: &'a [dst_core::eval::CurvePoint],
}

#[allow(clippy::too_many_arguments)]
fn weak_curve(
    model: &Path,
    corpus: &Path,
    target: &str,
    sizes: &[usize],
    out: &Path,
    train_config: Option<&Path>,
    pg_config: Option<&Path>,
    seed: u64,
) -> CliResult {
    let train: TrainConfig = train_config.map(read_json).transpose()?.unwrap_or_default();
    let pg: PGConfig = pg_config.map(read_json).transpose()?.unwrap_or_default();
    let (pretrained, meta) = load_checkpoint(model)?;
    let corpus = load_corpus(corpus)?;
    let data = domain_data(&corpus, target)?;
    let started = Instant::now();
    let points = run_weak_curve(&pretrained, &data, sizes, &train, &pg, seed)?;
    let json = serde_json::to_string_pretty(&CurveReport {
        seed,
        source: &meta.domain,
        target,
        train: &train,
        pg: &pg,
        points: &points,
    })?;
    let mut summary = format!("weak supervision curve {} -> {target}, seed {seed}\n", meta.domain);
    for p in &points {
        writeln!(
            summary,
            "  s={:>3}: weak {:.3}, after policy gradient {:.3} (gain {:+.3})",
            p.s,
            p.weak_accuracy,
            p.pg_accuracy,
            p.gain()
        )?;
    }
    let table = curve_csv(&points);
    write(&out.join("curve.csv"), &table)?;
    write(&out.join("curve.json"), &json)?;
    write(&out.join("summary.txt"), &summary)?;
    write(
        &out.join("timing.csv"),
        &format!("stage,seconds\ntotal,{:.3}\n", started.elapsed().as_secs_f64()),
    )?;
    report(&table, &summary);
    Ok(())
}
