use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::linking::{link_pair, LinkOutcome, LinkingConfig};
use super::metrics::LinkMetrics;
use super::typing::{finetune_typing, FinetuneConfig, Split};
use crate::corpus::LinkingPair;
use crate::encoder::{EncoderConfig, ModelParams};
use crate::error::Result;
use crate::geo::GeoEntity;
use crate::linearizer::{build_sentences, ContextRule, LinearizerConfig, Vocab};
use crate::pretrain::{train, TrainConfig};
use crate::spatial_index::{CellScheme, SpatialIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub neighbors: usize,
    pub micro_f1: f64,
}

/// Typing micro-F1 with contexts capped at each neighbour count.
#[allow(clippy::too_many_arguments)]
pub fn length_ablation(
    entities: &[GeoEntity],
    classes: &[String],
    rule: ContextRule,
    counts: &[usize],
    split: &Split,
    init: &ModelParams,
    enc: &EncoderConfig,
    vocab: &Vocab,
    lin: &LinearizerConfig,
    ft: &FinetuneConfig,
) -> Result<Vec<LengthRow>> {
    let reach = match rule {
        ContextRule::Radius(r) => r,
        ContextRule::Knn(_) => lin.dsep * lin.z,
    };
    let index = SpatialIndex::build(entities, CellScheme::geohash_for_radius(reach))?;
    let label_ids: BTreeMap<String, usize> = classes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    counts
        .iter()
        .map(|&n| {
            let capped = LinearizerConfig { max_neighbors: Some(n), ..*lin };
            let sentences = build_sentences(&index, rule, vocab, &capped, Some(&label_ids))?;
            let out = finetune_typing(init, enc, &sentences, classes, split, ft)?;
            Ok(LengthRow { neighbors: n, micro_f1: out.report.micro_f1 })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialAblation {
    pub with_spatial: LinkMetrics,
    pub without_spatial: LinkMetrics,
}

/// Pretrains two models that differ only in the spatial embedding summand
/// and links the pair with each.
#[allow(clippy::too_many_arguments)]
pub fn spatial_embedding_ablation(
    pair: &LinkingPair,
    corpus: &[crate::linearizer::PseudoSentence],
    init_seed: u64,
    enc: &EncoderConfig,
    train_cfg: &TrainConfig,
    vocab: &Vocab,
    lin: &LinearizerConfig,
    link_cfg: &LinkingConfig,
) -> Result<(SpatialAblation, LinkOutcome, LinkOutcome)> {
    let run = |spatial: bool| -> Result<LinkOutcome> {
        let e = EncoderConfig { spatial_embedding: spatial, ..enc.clone() };
        let mut p = ModelParams::init(&e, init_seed);
        train(&mut p, &e, corpus, train_cfg, &mut |_, _| Ok(()))?;
        link_pair(pair, &p, &e, vocab, lin, link_cfg)
    };
    let with = run(true)?;
    let without = run(false)?;
    Ok((
        SpatialAblation { with_spatial: with.metrics.clone(), without_spatial: without.metrics.clone() },
        with,
        without,
    ))
}
