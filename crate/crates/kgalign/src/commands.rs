//! CLI plumbing: the clap surface, key=value run configuration, the run
//! manifest (command, config snapshot, input digests, timing), and one
//! function per subcommand. Every command writes exactly one manifest;
//! timestamps appear only there, so data outputs are byte-reproducible.

use crate::error::{KgError, Result};
use crate::eval::{curve_to_tsv, f1_select_threshold, pr_curve, EvalReport};
use crate::features::init_features;
use crate::forward::score_pairs;
use crate::gnn::{ModelConfig, ModelParams};
use crate::kg::{AlignmentDataset, AlignmentPair, KGPair, KnowledgeGraph, RelationPartition};
use crate::synthetic::{generate_pair, measure_inconsistency, SynthConfig};
use crate::training::{
    ablation_run, grad_check, lr_search, split_dataset, train, TrainConfig, Variant,
};
use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "kgalign", version, about = "Entity alignment over paired knowledge graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic paired knowledge graph with alignment labels
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train an alignment model on a generated data directory
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// model variant: full, no_partition, no_mask, no_aggregation,
        /// profiling_only
        #[arg(long)]
        ablation: Option<String>,
        /// search the learning rate instead of using the configured one
        #[arg(long = "lr-search")]
        lr_search: bool,
        /// override the partition attention hyper-parameter
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Evaluate a checkpoint on the held-out split of a data directory
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        ablation: Option<String>,
        /// also write the full precision-recall curve
        #[arg(long = "emit-curve")]
        emit_curve: bool,
    },
    /// Train and evaluate every model variant on shared splits
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Measure the attribute-inconsistency statistics of a data directory
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check analytic gradients against finite differences on a small fixture
    Gradcheck {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parsed run configuration covering generation and training.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub train: TrainConfig,
    /// number of consecutive seeds the ablation command runs
    pub ablation_seeds: u64,
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        RunConfig {
            synth: SynthConfig::defaults(seed),
            train: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            ablation_seeds: 3,
        }
    }

    /// Parses `key=value` lines; `#` starts a comment.
    pub fn parse(text: &str, seed: u64) -> Result<Self> {
        let mut cfg = RunConfig::with_seed(seed);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| KgError::Config(format!(
                "line {}: expected key=value, got `{line}`",
                lineno + 1
            )))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                KgError::Config(format!("line {}: bad {what} `{value}` for key {key}", lineno + 1))
            };
            match key {
                "n_target_entities" => {
                    let n: usize = value.parse().map_err(|_| bad("count"))?;
                    // re-derive size-coupled defaults, then keep overrides
                    let prev = cfg.synth.clone();
                    cfg.synth = SynthConfig::for_size(n, prev.seed);
                    cfg.synth.aligned_fraction = prev.aligned_fraction;
                    cfg.synth.pos_inconsistency_rate = prev.pos_inconsistency_rate;
                    cfg.synth.confusable_negative_rate = prev.confusable_negative_rate;
                    cfg.synth.drop_artifact_prob = prev.drop_artifact_prob;
                    cfg.synth.negatives_per_entity = prev.negatives_per_entity;
                }
                "aligned_fraction" => {
                    cfg.synth.aligned_fraction = value.parse().map_err(|_| bad("rate"))?
                }
                "pos_inconsistency_rate" => {
                    cfg.synth.pos_inconsistency_rate = value.parse().map_err(|_| bad("rate"))?
                }
                "confusable_negative_rate" => {
                    cfg.synth.confusable_negative_rate = value.parse().map_err(|_| bad("rate"))?
                }
                "drop_artifact_prob" => {
                    cfg.synth.drop_artifact_prob = value.parse().map_err(|_| bad("rate"))?
                }
                "negatives_per_entity" => {
                    cfg.synth.negatives_per_entity = value.parse().map_err(|_| bad("count"))?
                }
                "vocab_size" => {
                    let v: usize = value.parse().map_err(|_| bad("count"))?;
                    cfg.synth.vocab_sizes = vec![v; cfg.synth.vocab_sizes.len()];
                }
                "lr" => cfg.train.lr = value.parse().map_err(|_| bad("rate"))?,
                "epochs" => cfg.train.epochs = value.parse().map_err(|_| bad("count"))?,
                "batch_size" => cfg.train.batch_size = value.parse().map_err(|_| bad("count"))?,
                "patience" => cfg.train.patience = value.parse().map_err(|_| bad("count"))?,
                "test_fraction" => {
                    cfg.train.test_fraction = value.parse().map_err(|_| bad("rate"))?
                }
                "cv_folds" => cfg.train.cv_folds = value.parse().map_err(|_| bad("count"))?,
                "feature_dim" => {
                    cfg.train.model.feature_dim = value.parse().map_err(|_| bad("count"))?
                }
                "model_dim" => {
                    cfg.train.model.model_dim = value.parse().map_err(|_| bad("count"))?
                }
                "epsilon" => cfg.train.model.epsilon = value.parse().map_err(|_| bad("rate"))?,
                "strict_mean_denominator" => {
                    cfg.train.model.strict_mean_denominator =
                        value.parse().map_err(|_| bad("boolean"))?
                }
                "ablation_seeds" => {
                    cfg.ablation_seeds = value.parse().map_err(|_| bad("count"))?
                }
                other => {
                    return Err(KgError::Config(format!(
                        "line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, seed: u64) -> Result<Self> {
        match path {
            None => Ok(RunConfig::with_seed(seed)),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| KgError::io(p.display().to_string(), e))?;
                RunConfig::parse(&text, seed)
            }
        }
    }

    /// Deterministic key=value snapshot for the manifest.
    pub fn snapshot(&self) -> String {
        format!(
            "aligned_fraction={}\nbatch_size={}\nconfusable_negative_rate={}\ncv_folds={}\n\
             drop_artifact_prob={}\nepochs={}\nepsilon={}\nfeature_dim={}\nlr={}\n\
             model_dim={}\nn_target_entities={}\nnegatives_per_entity={}\npatience={}\n\
             pos_inconsistency_rate={}\nseed={}\nstrict_mean_denominator={}\n\
             test_fraction={}\nvocab_size={}\n",
            self.synth.aligned_fraction,
            self.train.batch_size,
            self.synth.confusable_negative_rate,
            self.train.cv_folds,
            self.synth.drop_artifact_prob,
            self.train.epochs,
            self.train.model.epsilon,
            self.train.model.feature_dim,
            self.train.lr,
            self.train.model.model_dim,
            self.synth.n_target_entities,
            self.synth.negatives_per_entity,
            self.train.patience,
            self.synth.pos_inconsistency_rate,
            self.train.seed,
            self.train.model.strict_mean_denominator,
            self.train.test_fraction,
            self.synth.vocab_sizes[0],
        )
    }
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| KgError::io(path.display().to_string(), e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| KgError::io(path.display().to_string(), e))
}

/// Per-run provenance record. Written once per command; this is the only
/// output that contains timing, so everything else is byte-reproducible.
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config_snapshot: String,
    pub inputs: Vec<(String, String)>,
    pub outputs: Vec<String>,
    pub extra: Vec<(String, String)>,
    started: Instant,
    started_unix_ms: u128,
}

impl RunManifest {
    pub fn start(command: &str, seed: u64, config: &RunConfig) -> Self {
        RunManifest {
            command: command.to_string(),
            seed,
            config_snapshot: config.snapshot(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            extra: Vec::new(),
            started: Instant::now(),
            started_unix_ms: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .push((path.display().to_string(), sha256_hex(path)?));
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.extra.push((key.to_string(), value.to_string()));
    }

    pub fn finish(mut self, dir: &Path) -> Result<()> {
        let wall_ms = self.started.elapsed().as_millis();
        let mut out = String::new();
        out.push_str(&format!("command\t{}\n", self.command));
        out.push_str(&format!("seed\t{}\n", self.seed));
        out.push_str(&format!("started_unix_ms\t{}\n", self.started_unix_ms));
        out.push_str(&format!("wall_ms\t{wall_ms}\n"));
        for (k, v) in &self.extra {
            out.push_str(&format!("{k}\t{v}\n"));
        }
        for (path, digest) in &self.inputs {
            out.push_str(&format!("input\t{path}\tsha256={digest}\n"));
        }
        self.outputs.sort();
        for path in &self.outputs {
            out.push_str(&format!("output\t{path}\n"));
        }
        for line in self.config_snapshot.lines() {
            out.push_str(&format!("config\t{line}\n"));
        }
        write_file(&dir.join("manifest.tsv"), &out)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| KgError::io(dir.display().to_string(), e))
}

/// Loads the data-directory layout written by the synth command.
pub fn load_data_dir(dir: &Path) -> Result<(KGPair, AlignmentDataset)> {
    let schema = RelationPartition::load(&dir.join("schema.txt"))?;
    let source = KnowledgeGraph::load(
        &dir.join("source_nodes.tsv"),
        &dir.join("source_triples.tsv"),
        schema.clone(),
    )?;
    let target = KnowledgeGraph::load(
        &dir.join("target_nodes.tsv"),
        &dir.join("target_triples.tsv"),
        schema,
    )?;
    let pair = KGPair::new(source, target)?;
    let dataset = AlignmentDataset::load(&dir.join("pairs.tsv"), &pair)?;
    Ok((pair, dataset))
}

pub fn cmd_synth(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let cfg = RunConfig::load(config, seed.unwrap_or(0))?;
    let mut synth = cfg.synth.clone();
    if let Some(s) = seed {
        synth.seed = s;
    }
    ensure_dir(out)?;
    let mut manifest = RunManifest::start("synth", synth.seed, &cfg);
    if let Some(p) = config {
        manifest.input(p)?;
    }
    let (pair, dataset, truth) = generate_pair(&synth)?;
    let measured = measure_inconsistency(&pair, &dataset);
    let stats = format!(
        "n_positive\t{}\nn_negative\t{}\ntruth_positive_inconsistent\t{:.6}\n\
         truth_negative_confusable\t{:.6}\nmeasured_positive_inconsistent\t{:.6}\n\
         measured_negative_confusable\t{:.6}\n",
        truth.n_positive,
        truth.n_negative,
        truth.stats().positive_inconsistent,
        truth.stats().negative_confusable,
        measured.positive_inconsistent,
        measured.negative_confusable,
    );
    let files = [
        ("source_nodes.tsv", pair.source.write_nodes()),
        ("source_triples.tsv", pair.source.write_triples()),
        ("target_nodes.tsv", pair.target.write_nodes()),
        ("target_triples.tsv", pair.target.write_triples()),
        ("pairs.tsv", dataset.write(&pair)),
        ("stats.tsv", stats),
        ("schema.txt", pair.schema().to_config_string()),
    ];
    for (name, content) in files {
        write_file(&out.join(name), &content)?;
        manifest.outputs.push(name.to_string());
    }
    manifest.finish(out)
}

fn train_log_text(
    outcome: &crate::training::TrainOutcome,
    variant: Variant,
    lr: f64,
) -> String {
    let mut log = String::from("epoch\ttrain_loss\tval_f1\tthreshold\n");
    // the per-epoch threshold is not retained; the selected one is below
    for e in &outcome.history {
        log.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t-\n",
            e.epoch, e.train_loss, e.val_f1
        ));
    }
    log.push_str(&format!("variant\t{}\n", variant.name()));
    log.push_str(&format!("lr\t{lr}\n"));
    log.push_str(&format!("best_epoch\t{}\n", outcome.best_epoch));
    log.push_str(&format!("best_val_f1\t{:.6}\n", outcome.val_f1));
    log.push_str(&format!("selected_threshold\t{:.6}\n", outcome.threshold));
    log.push_str(&format!("loss_clamp_events\t{}\n", outcome.clamp_events));
    log
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    data: &Path,
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    ablation: Option<&str>,
    do_lr_search: bool,
    epsilon: Option<f64>,
) -> Result<()> {
    let mut cfg = RunConfig::load(config, seed.unwrap_or(0))?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(e) = epsilon {
        cfg.train.model.epsilon = e;
    }
    let variant = match ablation {
        Some(name) => Variant::from_name(name)?,
        None => Variant::Full,
    };
    ensure_dir(out)?;
    let mut manifest = RunManifest::start("train", cfg.train.seed, &cfg);
    if let Some(p) = config {
        manifest.input(p)?;
    }
    for name in [
        "schema.txt",
        "source_nodes.tsv",
        "source_triples.tsv",
        "target_nodes.tsv",
        "target_triples.tsv",
        "pairs.tsv",
    ] {
        manifest.input(&data.join(name))?;
    }
    let (pair, dataset) = load_data_dir(data)?;
    let dim = cfg.train.model.feature_dim;
    let feats_src = init_features(&pair.source, dim, cfg.train.seed);
    let feats_tgt = init_features(&pair.target, dim, cfg.train.seed);
    let split = split_dataset(&dataset, cfg.train.test_fraction, cfg.train.cv_folds, cfg.train.seed)?;
    if do_lr_search {
        let chosen = lr_search(
            |lr| {
                let mut probe_cfg = cfg.train.clone();
                probe_cfg.lr = lr;
                let outcome = train(
                    &pair, &feats_src, &feats_tgt, &split.train, &split.val, &probe_cfg, variant,
                )?;
                Ok(outcome.val_f1)
            },
            0.001,
            0.1,
            0.002,
        )?;
        cfg.train.lr = chosen;
        manifest.note("lr_search_selected", chosen);
    }
    let started = Instant::now();
    let outcome = train(
        &pair, &feats_src, &feats_tgt, &split.train, &split.val, &cfg.train, variant,
    )?;
    let n_batches: usize = outcome.history.len()
        * split.train.len().div_ceil(cfg.train.batch_size.max(1));
    manifest.note(
        "per_batch_ms",
        format!(
            "{:.3}",
            started.elapsed().as_millis() as f64 / n_batches.max(1) as f64
        ),
    );
    manifest.note("variant", variant.name());
    outcome.params.save(&out.join("model.ckpt"))?;
    write_file(
        &out.join("train_log.tsv"),
        &train_log_text(&outcome, variant, cfg.train.lr),
    )?;
    manifest.outputs.push("model.ckpt".to_string());
    manifest.outputs.push("train_log.tsv".to_string());
    manifest.finish(out)
}

pub fn cmd_eval(
    data: &Path,
    checkpoint: &Path,
    out: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    ablation: Option<&str>,
    emit_curve: bool,
) -> Result<()> {
    let mut cfg = RunConfig::load(config, seed.unwrap_or(0))?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let variant = match ablation {
        Some(name) => Variant::from_name(name)?,
        None => Variant::Full,
    };
    ensure_dir(out)?;
    let mut manifest = RunManifest::start("eval", cfg.train.seed, &cfg);
    manifest.input(checkpoint)?;
    let (pair, dataset) = load_data_dir(data)?;
    let params = ModelParams::load(checkpoint, pair.schema())?;
    let dim = params.config.feature_dim;
    let feats_src = init_features(&pair.source, dim, cfg.train.seed);
    let feats_tgt = init_features(&pair.target, dim, cfg.train.seed);
    let split = split_dataset(&dataset, cfg.train.test_fraction, cfg.train.cv_folds, cfg.train.seed)?;
    let opts = variant.options(
        params.config.epsilon,
        params.config.strict_mean_denominator,
    );
    let effective;
    let scoring_pair = if variant == Variant::ProfilingOnly {
        effective = crate::training::profiling_projection(&pair)?;
        &effective
    } else {
        &pair
    };
    let score = |set: &[AlignmentPair]| -> Result<(Vec<f64>, Vec<bool>)> {
        let s = score_pairs(scoring_pair, &feats_src, &feats_tgt, &params, &opts, set)?;
        let l = set.iter().map(|p| p.positive).collect();
        Ok((s, l))
    };
    let (val_scores, val_labels) = score(&split.val)?;
    let (threshold, val_f1) = f1_select_threshold(&val_scores, &val_labels)?;
    let (test_scores, test_labels) = score(&split.test)?;
    let report = EvalReport::compute(&test_scores, &test_labels, threshold)?;
    let text = format!(
        "val_f1\t{val_f1:.6}\nthreshold\t{threshold:.6}\n{}",
        report.to_text()
    );
    write_file(&out.join("eval_report.tsv"), &text)?;
    manifest.outputs.push("eval_report.tsv".to_string());
    manifest.note("variant", variant.name());
    if emit_curve {
        let curve = pr_curve(&test_scores, &test_labels)?;
        write_file(&out.join("pr_curve.tsv"), &curve_to_tsv(&curve))?;
        manifest.outputs.push("pr_curve.tsv".to_string());
    }
    manifest.finish(out)
}

pub fn cmd_ablate(
    data: &Path,
    config: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = RunConfig::load(config, seed.unwrap_or(0))?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    ensure_dir(out)?;
    let mut manifest = RunManifest::start("ablate", cfg.train.seed, &cfg);
    let (pair, dataset) = load_data_dir(data)?;
    let dim = cfg.train.model.feature_dim;
    let feats_src = init_features(&pair.source, dim, cfg.train.seed);
    let feats_tgt = init_features(&pair.target, dim, cfg.train.seed);
    let seeds: Vec<u64> = (0..cfg.ablation_seeds)
        .map(|i| cfg.train.seed.wrapping_add(i))
        .collect();
    let results = ablation_run(
        &pair,
        &feats_src,
        &feats_tgt,
        &dataset,
        &cfg.train,
        &Variant::all(),
        &seeds,
    )?;
    let mut table =
        String::from("variant\tseed\tval_f1\ttest_macro_f1\ttest_p_at_r95\ttest_prauc\n");
    for r in &results {
        table.push_str(&format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
            r.variant,
            r.seed,
            r.val_f1,
            r.test_report.macro_f1,
            r.test_report.precision_at_recall95,
            r.test_report.prauc
        ));
    }
    for v in Variant::all() {
        if let Some(mean) = crate::training::mean_macro_f1(&results, v) {
            table.push_str(&format!("mean\t{}\t{:.6}\n", v.name(), mean));
        }
    }
    write_file(&out.join("ablation.tsv"), &table)?;
    manifest.outputs.push("ablation.tsv".to_string());
    manifest.finish(out)
}

pub fn cmd_stats(data: &Path, out: Option<&Path>) -> Result<()> {
    let (pair, dataset) = load_data_dir(data)?;
    let stats = measure_inconsistency(&pair, &dataset);
    let text = format!(
        "measured_positive_inconsistent\t{:.6}\nmeasured_negative_confusable\t{:.6}\n",
        stats.positive_inconsistent, stats.negative_confusable
    );
    print!("{text}");
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let cfg = RunConfig::with_seed(0);
        let mut manifest = RunManifest::start("stats", 0, &cfg);
        write_file(&dir.join("stats_measured.tsv"), &text)?;
        manifest.outputs.push("stats_measured.tsv".to_string());
        manifest.finish(dir)?;
    }
    Ok(())
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub fn cmd_gradcheck(seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let seed = seed.unwrap_or(0);
    let mut synth = SynthConfig::for_size(24, seed);
    synth.negatives_per_entity = 3;
    let (pair, dataset, _) = generate_pair(&synth)?;
    let model = ModelConfig {
        feature_dim: 6,
        model_dim: 3,
        epsilon: 0.3,
        strict_mean_denominator: false,
    };
    let feats_src = init_features(&pair.source, model.feature_dim, seed);
    let feats_tgt = init_features(&pair.target, model.feature_dim, seed);
    let types = crate::training::node_types(&pair);
    let params = ModelParams::init(pair.schema(), &types, model, seed)?;
    let batch: Vec<AlignmentPair> = dataset.pairs.iter().take(8).copied().collect();
    let report = grad_check(
        &pair,
        &feats_src,
        &feats_tgt,
        &params,
        &batch,
        Variant::Full,
        1e-5,
    )?;
    let mut text = String::from("tensor\tmax_rel_err\n");
    for (name, err) in &report.per_tensor {
        text.push_str(&format!("{name}\t{err:.3e}\n"));
    }
    text.push_str(&format!(
        "worst\t{}\t{:.3e}\n",
        report.worst_tensor, report.worst_rel_err
    ));
    print!("{text}");
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_file(&dir.join("gradcheck.tsv"), &text)?;
    }
    if report.worst_rel_err >= GRADCHECK_TOLERANCE {
        return Err(KgError::Divergence(format!(
            "gradient check failed: {} has relative error {:.3e}",
            report.worst_tensor, report.worst_rel_err
        )));
    }
    println!("gradient check passed (worst {:.3e})", report.worst_rel_err);
    Ok(())
}

/// Dispatches a parsed CLI invocation; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Synth { config, out, seed } => cmd_synth(config.as_deref(), out, *seed),
        Command::Train {
            data,
            config,
            out,
            seed,
            ablation,
            lr_search,
            epsilon,
        } => cmd_train(
            data,
            config.as_deref(),
            out,
            *seed,
            ablation.as_deref(),
            *lr_search,
            *epsilon,
        ),
        Command::Eval {
            data,
            checkpoint,
            out,
            config,
            seed,
            ablation,
            emit_curve,
        } => cmd_eval(
            data,
            checkpoint,
            out,
            config.as_deref(),
            *seed,
            ablation.as_deref(),
            *emit_curve,
        ),
        Command::Ablate {
            data,
            config,
            out,
            seed,
        } => cmd_ablate(data, config.as_deref(), out, *seed),
        Command::Stats { data, out } => cmd_stats(data, out.as_deref()),
        Command::Gradcheck { seed, out } => cmd_gradcheck(*seed, out.as_deref()),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
