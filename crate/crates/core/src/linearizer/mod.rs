//! Pseudo-sentence construction.
//!
//! A pivot and its distance-sorted neighbours become
//! `[CLS] pivot [SEP] n1 [SEP] ... nk [SEP]`. Every token of an entity carries
//! that entity's normalized offset from the pivot; pivot tokens carry (0, 0)
//! and the special tokens carry the separator sentinel on both axes.

pub mod vocab;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{dist, normalized_offset, GeoEntity};
use crate::spatial_index::SpatialIndex;

pub use vocab::{detokenize, pre_tokenize, tokenize, train_vocab, Vocab};
use vocab::{CLS, SEP};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearizerConfig {
    /// Normalization factor applied to coordinate differences.
    pub z: f64,
    /// Offset assigned to [CLS] and [SEP]; must exceed every neighbour offset.
    pub dsep: f64,
    pub max_seq_len: usize,
    /// Upper bound on neighbours placed in the sentence.
    pub max_neighbors: Option<usize>,
}

impl Default for LinearizerConfig {
    fn default() -> Self {
        LinearizerConfig {
            z: 0.0001,
            dsep: 20.0,
            max_seq_len: 128,
            max_neighbors: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub entity_id: String,
}

impl EntitySpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoSentence {
    pub token_ids: Vec<u32>,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub entity_spans: Vec<EntitySpan>,
    pub pivot_span_index: usize,
    pub label: Option<usize>,
}

impl PseudoSentence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn pivot_span(&self) -> &EntitySpan {
        &self.entity_spans[self.pivot_span_index]
    }

    /// Sequence positions `0..len`.
    pub fn positions(&self) -> std::ops::Range<usize> {
        0..self.token_ids.len()
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    /// Space-separated token strings, for inspection.
    pub fn render(&self, vocab: &Vocab) -> String {
        self.token_ids
            .iter()
            .map(|&t| vocab.token(t).unwrap_or("[UNK]"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn build_pseudo_sentence(
    pivot: &GeoEntity,
    neighbors: &[&GeoEntity],
    vocab: &Vocab,
    cfg: &LinearizerConfig,
) -> Result<PseudoSentence> {
    if !(cfg.z > 0.0) {
        return Err(Error::Config(format!("z must be positive, got {}", cfg.z)));
    }
    if !cfg.dsep.is_finite() {
        return Err(Error::Config(format!("dsep must be finite, got {}", cfg.dsep)));
    }
    pivot.loc.validate()?;
    if neighbors
        .windows(2)
        .any(|w| dist(pivot.loc, w[0].loc) > dist(pivot.loc, w[1].loc))
    {
        return Err(Error::Argument(format!(
            "neighbours of `{}` must be sorted by ascending distance",
            pivot.id
        )));
    }

    let pivot_tokens = tokenize(&pivot.name, vocab);
    if pivot_tokens.is_empty() {
        return Err(Error::Input(format!("pivot `{}` tokenizes to nothing", pivot.id)));
    }
    if pivot_tokens.len() + 2 > cfg.max_seq_len {
        return Err(Error::Config(format!(
            "max_seq_len {} cannot hold pivot `{}` ({} tokens plus [CLS]/[SEP])",
            cfg.max_seq_len,
            pivot.id,
            pivot_tokens.len()
        )));
    }

    let mut s = PseudoSentence {
        token_ids: vec![CLS],
        dx: vec![cfg.dsep],
        dy: vec![cfg.dsep],
        entity_spans: Vec::new(),
        pivot_span_index: 0,
        label: None,
    };
    push_entity(&mut s, &pivot.id, &pivot_tokens, 0.0, 0.0, cfg.dsep);

    let cap = cfg.max_neighbors.unwrap_or(usize::MAX);
    for n in neighbors.iter().take(cap) {
        let toks = tokenize(&n.name, vocab);
        if toks.is_empty() {
            continue;
        }
        // whole trailing entities are dropped; nothing is split
        if s.len() + toks.len() + 1 > cfg.max_seq_len {
            break;
        }
        let off = normalized_offset(pivot.loc, n.loc, cfg.z)?;
        if !(off.max_abs() < cfg.dsep) {
            return Err(Error::Config(format!(
                "dsep {} does not exceed offset ({}, {}) of neighbour `{}`",
                cfg.dsep, off.dx, off.dy, n.id
            )));
        }
        push_entity(&mut s, &n.id, &toks, off.dx, off.dy, cfg.dsep);
    }
    Ok(s)
}

/// How a pivot's spatial context is selected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextRule {
    /// Every entity strictly closer than the radius.
    Radius(f64),
    /// The k nearest entities, limited to those whose offset fits under dsep.
    Knn(usize),
}

/// Builds one pseudo-sentence per entity of `index`, in index order.
///
/// `labels` maps an entity's label to a class id; entities whose label is
/// missing from the map get no class.
pub fn build_sentences(
    index: &SpatialIndex,
    rule: ContextRule,
    vocab: &Vocab,
    cfg: &LinearizerConfig,
    labels: Option<&BTreeMap<String, usize>>,
) -> Result<Vec<PseudoSentence>> {
    index
        .entities()
        .iter()
        .map(|pivot| {
            let neighbours = context_of(index, pivot, rule, cfg)?;
            let mut s = build_pseudo_sentence(pivot, &neighbours, vocab, cfg)?;
            if let (Some(map), Some(l)) = (labels, &pivot.label) {
                s.label = map.get(l).copied();
            }
            Ok(s)
        })
        .collect()
}

/// Neighbours of `pivot` under `rule`, nearest first.
pub fn context_of<'a>(
    index: &'a SpatialIndex,
    pivot: &GeoEntity,
    rule: ContextRule,
    cfg: &LinearizerConfig,
) -> Result<Vec<&'a GeoEntity>> {
    match rule {
        ContextRule::Radius(r) => index.query_radius(pivot, r),
        ContextRule::Knn(k) => {
            let reach = cfg.dsep * cfg.z;
            let mut v = index.query_knn(pivot, k)?;
            v.retain(|n| dist(pivot.loc, n.loc) < reach);
            Ok(v)
        }
    }
}

fn push_entity(s: &mut PseudoSentence, id: &str, toks: &[u32], dx: f64, dy: f64, dsep: f64) {
    let start = s.token_ids.len();
    s.token_ids.extend_from_slice(toks);
    s.dx.extend(std::iter::repeat_n(dx, toks.len()));
    s.dy.extend(std::iter::repeat_n(dy, toks.len()));
    s.entity_spans.push(EntitySpan {
        start,
        end: start + toks.len(),
        entity_id: id.to_owned(),
    });
    s.token_ids.push(SEP);
    s.dx.push(dsep);
    s.dy.push(dsep);
}
