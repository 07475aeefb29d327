//! Deterministic generator of paired knowledge graphs with alignment labels
//! whose attribute-inconsistency statistics hit configured targets, plus the
//! statistics measurer.
//!
//! The generator works by exact counting rather than by coin flips: a fixed
//! number of aligned copies is perturbed in just over half of the attribute
//! types, and a fixed number of confusable source entities is synthesized so
//! that the confusable share of the sampled negative pairs lands on the
//! configured rate. Artifact tokens are fixed-width, so two distinct tokens
//! never match under the substring rule.

use crate::error::{KgError, Result};
use crate::kg::{
    AlignmentDataset, AlignmentPair, KGPair, KnowledgeGraph, NodeId, NodeKind, RelationPartition,
};
use crate::training::negative_sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ENTITY_TYPE: &str = "vulnerability";

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub n_target_entities: usize,
    /// share of target entities that get an aligned source copy
    pub aligned_fraction: f64,
    /// vocabulary size per schema relation, in schema order
    pub vocab_sizes: Vec<usize>,
    /// share of positive pairs made inconsistent in more than half of the
    /// attribute types
    pub pos_inconsistency_rate: f64,
    /// share of sampled negative pairs differing in at most a quarter of the
    /// attribute types
    pub confusable_negative_rate: f64,
    /// chance that an entity lacks a given non-anchor attribute type
    pub drop_artifact_prob: f64,
    /// negatives sampled per source entity
    pub negatives_per_entity: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// Defaults mirroring the measured corpus statistics at the given size.
    /// Vocabularies scale with `n` so the expected candidate-set size stays
    /// constant across sizes.
    pub fn for_size(n: usize, seed: u64) -> Self {
        let schema = RelationPartition::default_schema();
        let vocab = (n / 4).max(2);
        SynthConfig {
            n_target_entities: n,
            aligned_fraction: 0.8,
            vocab_sizes: vec![vocab; schema.len()],
            pos_inconsistency_rate: 0.56,
            confusable_negative_rate: 0.0404,
            drop_artifact_prob: 0.1,
            negatives_per_entity: 10,
            seed,
        }
    }

    pub fn defaults(seed: u64) -> Self {
        SynthConfig::for_size(500, seed)
    }

    pub fn validate(&self, schema: &RelationPartition) -> Result<()> {
        if self.n_target_entities == 0 {
            return Err(KgError::Generation("n_target_entities must be > 0".into()));
        }
        if !(self.aligned_fraction > 0.0 && self.aligned_fraction <= 1.0) {
            return Err(KgError::Generation(format!(
                "aligned_fraction {} outside (0, 1]",
                self.aligned_fraction
            )));
        }
        for (name, rate) in [
            ("pos_inconsistency_rate", self.pos_inconsistency_rate),
            ("confusable_negative_rate", self.confusable_negative_rate),
            ("drop_artifact_prob", self.drop_artifact_prob),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(KgError::Generation(format!("{name} {rate} outside [0, 1]")));
            }
        }
        if self.vocab_sizes.len() != schema.len() {
            return Err(KgError::Generation(format!(
                "{} vocabulary sizes for {} relations",
                self.vocab_sizes.len(),
                schema.len()
            )));
        }
        if self.vocab_sizes.iter().any(|&v| v < 2) {
            return Err(KgError::Generation(
                "every vocabulary needs at least 2 tokens".into(),
            ));
        }
        if self.negatives_per_entity == 0 {
            return Err(KgError::Generation("negatives_per_entity must be > 0".into()));
        }
        if self.n_target_entities < self.negatives_per_entity + 1 {
            return Err(KgError::Generation(format!(
                "{} target entities cannot supply {} negatives per source",
                self.n_target_entities, self.negatives_per_entity
            )));
        }
        let k = self.negatives_per_entity as f64;
        if self.confusable_negative_rate * k >= 1.0 {
            return Err(KgError::Generation(format!(
                "confusable_negative_rate {} infeasible with {} negatives per entity",
                self.confusable_negative_rate, self.negatives_per_entity
            )));
        }
        Ok(())
    }
}

/// The two corpus-level fractions: positive pairs inconsistent in more than
/// half of the attribute types, and negative pairs differing in at most a
/// quarter of them.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct InconsistencyStats {
    pub positive_inconsistent: f64,
    pub negative_confusable: f64,
}

/// The generator's own bookkeeping, usable as an oracle for the measurer.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub n_positive: usize,
    pub n_negative: usize,
    /// positives perturbed past the half-of-types threshold
    pub perturbed_sources: Vec<NodeId>,
    /// forced (confusable source, template target) negative pairs
    pub confusable_pairs: Vec<(NodeId, NodeId)>,
}

impl GroundTruth {
    pub fn stats(&self) -> InconsistencyStats {
        InconsistencyStats {
            positive_inconsistent: self.perturbed_sources.len() as f64
                / self.n_positive.max(1) as f64,
            negative_confusable: self.confusable_pairs.len() as f64
                / self.n_negative.max(1) as f64,
        }
    }
}

/// Two normalized attribute values match when they are equal or one is a
/// substring of the other.
pub fn attr_match(a: &str, b: &str) -> bool {
    a == b || a.contains(b) || b.contains(a)
}

fn token_text(rel: usize, idx: usize) -> String {
    format!("a{rel:02}x{idx:04}")
}

fn literal_type(schema: &RelationPartition, rel: usize) -> String {
    schema
        .name(rel)
        .strip_prefix("has")
        .unwrap_or(schema.name(rel))
        .to_lowercase()
}

/// relation index that is never dropped, so every entity has at least one
/// profiling artifact and a non-empty candidate set
const ANCHOR_REL: usize = 1; // hasVendor in the default schema

type Artifacts = Vec<Option<usize>>;

fn build_graph(
    schema: &RelationPartition,
    names: &[String],
    artifacts: &[Artifacts],
) -> Result<KnowledgeGraph> {
    let mut b = KnowledgeGraph::builder(schema.clone());
    for name in names {
        b.add_node(name, ENTITY_TYPE, NodeKind::Entity, None)?;
    }
    for (name, arts) in names.iter().zip(artifacts) {
        for (r, art) in arts.iter().enumerate() {
            if let Some(idx) = art {
                let text = token_text(r, *idx);
                let lit_type = literal_type(schema, r);
                b.add_node(&text, &lit_type, NodeKind::Literal, Some(&text))?;
                b.add_triple(name, schema.name(r), &text)?;
            }
        }
    }
    b.build()
}

fn replacement_token(rng: &mut ChaCha8Rng, current: usize, vocab: usize) -> usize {
    (current + 1 + rng.gen_range(0..vocab - 1)) % vocab
}

/// Generates a paired KG, its labeled alignment dataset (positives plus the
/// sampled negatives), and the generator's ground-truth bookkeeping.
/// Deterministic in `config.seed`.
pub fn generate_pair(config: &SynthConfig) -> Result<(KGPair, AlignmentDataset, GroundTruth)> {
    let schema = RelationPartition::default_schema();
    config.validate(&schema)?;
    let n_rel = schema.len();
    let n = config.n_target_entities;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // target-side artifacts
    let mut target_arts: Vec<Artifacts> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut arts: Artifacts = Vec::with_capacity(n_rel);
        for r in 0..n_rel {
            let keep = r == ANCHOR_REL || rng.gen::<f64>() >= config.drop_artifact_prob;
            arts.push(keep.then(|| rng.gen_range(0..config.vocab_sizes[r])));
        }
        target_arts.push(arts);
    }

    // aligned copies
    let n_aligned = ((config.aligned_fraction * n as f64).round() as usize).clamp(1, n);
    let mut source_arts: Vec<Artifacts> = target_arts[..n_aligned].to_vec();

    // perturb an exact count of copies in just over half of the types
    let n_inconsistent = (config.pos_inconsistency_rate * n_aligned as f64).round() as usize;
    let types_to_break = n_rel / 2 + 1;
    let mut aligned_idx: Vec<usize> = (0..n_aligned).collect();
    aligned_idx.shuffle(&mut rng);
    let perturbed_idx: Vec<usize> = aligned_idx[..n_inconsistent].to_vec();
    for &i in &perturbed_idx {
        let mut rels: Vec<usize> = (0..n_rel).collect();
        rels.shuffle(&mut rng);
        for &r in rels.iter().take(types_to_break) {
            source_arts[i][r] = Some(match source_arts[i][r] {
                // replace with a guaranteed different token
                Some(tok) => replacement_token(&mut rng, tok, config.vocab_sizes[r]),
                // one-sided value: inconsistent by the missing-side rule
                None => rng.gen_range(0..config.vocab_sizes[r]),
            });
        }
    }

    // confusable source entities: near-copies of a template target, differing
    // in exactly one profiling artifact. Solve the count so that forced
    // confusable pairs are the configured share of all sampled negatives:
    // c = rate * k * (n_aligned + c)  =>  c = rate*k*n_aligned / (1 - rate*k)
    let rate_k = config.confusable_negative_rate * config.negatives_per_entity as f64;
    let n_confusable = (rate_k * n_aligned as f64 / (1.0 - rate_k)).round() as usize;
    let mut confusable_templates: Vec<usize> = Vec::with_capacity(n_confusable);
    for _ in 0..n_confusable {
        let template = rng.gen_range(0..n);
        let mut arts = target_arts[template].clone();
        let profiling_present: Vec<usize> = (0..n_rel)
            .filter(|&r| schema.is_profiling(r) && arts[r].is_some())
            .collect();
        // the anchor relation is profiling and never dropped
        let r = profiling_present[rng.gen_range(0..profiling_present.len())];
        let tok = arts[r].unwrap();
        arts[r] = Some(replacement_token(&mut rng, tok, config.vocab_sizes[r]));
        source_arts.push(arts);
        confusable_templates.push(template);
    }

    let target_names: Vec<String> = (0..n).map(|i| format!("t{i:05}")).collect();
    let source_names: Vec<String> = (0..source_arts.len())
        .map(|i| {
            if i < n_aligned {
                format!("s{i:05}")
            } else {
                format!("sc{:05}", i - n_aligned)
            }
        })
        .collect();
    let source = build_graph(&schema, &source_names, &source_arts)?;
    let target = build_graph(&schema, &target_names, &target_arts)?;
    let pair = KGPair::new(source, target)?;

    let positives: Vec<AlignmentPair> = (0..n_aligned)
        .map(|i| AlignmentPair {
            src: pair.source.lookup(&source_names[i]).unwrap(),
            tgt: pair.target.lookup(&target_names[i]).unwrap(),
            positive: true,
        })
        .collect();

    let mut dataset = negative_sample(
        &pair,
        &positives,
        ENTITY_TYPE,
        config.negatives_per_entity,
        config.seed.wrapping_add(0x6e65),
    )?;

    // force the confusable pairs into the sampled negatives
    let mut confusable_pairs = Vec::with_capacity(n_confusable);
    for (ci, &template) in confusable_templates.iter().enumerate() {
        let src = pair
            .source
            .lookup(&source_names[n_aligned + ci])
            .unwrap();
        let tgt = pair.target.lookup(&target_names[template]).unwrap();
        confusable_pairs.push((src, tgt));
        let mut slot = None;
        let mut already = false;
        for (pi, p) in dataset.pairs.iter().enumerate() {
            if p.positive || p.src != src {
                continue;
            }
            if p.tgt == tgt {
                already = true;
                break;
            }
            if slot.is_none() {
                slot = Some(pi);
            }
        }
        if !already {
            let pi = slot.expect("every source entity has sampled negatives");
            dataset.pairs[pi].tgt = tgt;
        }
    }

    let n_negative = dataset.pairs.iter().filter(|p| !p.positive).count();
    let truth = GroundTruth {
        n_positive: n_aligned,
        n_negative,
        perturbed_sources: perturbed_idx
            .iter()
            .map(|&i| pair.source.lookup(&source_names[i]).unwrap())
            .collect(),
        confusable_pairs,
    };
    Ok((pair, dataset, truth))
}

fn values_of(kg: &KnowledgeGraph, e: NodeId, rel: usize) -> Vec<&str> {
    kg.neighbors(e, rel)
        .into_iter()
        .filter_map(|j| kg.literal_text(j))
        .collect()
}

/// Number of attribute types on which the two entities are inconsistent:
/// a type with values on exactly one side, or with values on both sides and
/// no cross match, counts; a type absent from both sides does not.
pub fn inconsistent_types(pair: &KGPair, src: NodeId, tgt: NodeId) -> usize {
    let n_rel = pair.schema().len();
    let mut count = 0;
    for r in 0..n_rel {
        let vs = values_of(&pair.source, src, r);
        let vt = values_of(&pair.target, tgt, r);
        match (vs.is_empty(), vt.is_empty()) {
            (true, true) => {}
            (true, false) | (false, true) => count += 1,
            (false, false) => {
                let matched = vs.iter().any(|a| vt.iter().any(|b| attr_match(a, b)));
                if !matched {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Measures the two corpus statistics over the labeled pairs: the fraction
/// of positives inconsistent in more than half of the attribute types, and
/// the fraction of negatives differing in at most a quarter of them.
pub fn measure_inconsistency(pair: &KGPair, dataset: &AlignmentDataset) -> InconsistencyStats {
    let n_rel = pair.schema().len() as f64;
    let (mut pos, mut pos_inc, mut neg, mut neg_conf) = (0usize, 0usize, 0usize, 0usize);
    for p in &dataset.pairs {
        let diff = inconsistent_types(pair, p.src, p.tgt) as f64;
        if p.positive {
            pos += 1;
            if diff > n_rel / 2.0 {
                pos_inc += 1;
            }
        } else {
            neg += 1;
            if diff <= n_rel / 4.0 {
                neg_conf += 1;
            }
        }
    }
    InconsistencyStats {
        positive_inconsistent: pos_inc as f64 / pos.max(1) as f64,
        negative_confusable: neg_conf as f64 / neg.max(1) as f64,
    }
}
