use std::collections::{BTreeMap, HashMap};

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::metrics::{rank_metrics, LinkMetrics};
use crate::corpus::LinkingPair;
use crate::encoder::{embed_pivots, EncoderConfig, ModelParams};
use crate::error::{Error, Result};
use crate::geo::GeoEntity;
use crate::linearizer::{build_sentences, ContextRule, LinearizerConfig, Vocab};
use crate::spatial_index::{CellScheme, SpatialIndex};

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        a.dot(b) / (na * nb)
    }
}

/// Candidate indices by descending similarity, ties by ascending id.
pub fn rank_candidates(query: &Array1<f64>, candidates: &[Array1<f64>], ids: &[String]) -> Vec<usize> {
    let sims: Vec<f64> = candidates.iter().map(|c| cosine(query, c)).collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then_with(|| ids[a].cmp(&ids[b])));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkOutcome {
    /// Query id, rank of its true candidate, and the top candidates.
    pub rows: Vec<LinkRow>,
    pub metrics: LinkMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRow {
    pub query: String,
    pub truth: String,
    pub rank: usize,
    pub top: Vec<String>,
}

/// Ranks every query against all candidates and scores the true matches.
pub fn link(
    queries: &[Array1<f64>],
    query_ids: &[String],
    candidates: &[Array1<f64>],
    candidate_ids: &[String],
    truth: &BTreeMap<String, String>,
    ks: &[usize],
) -> Result<LinkOutcome> {
    if queries.len() != query_ids.len() || candidates.len() != candidate_ids.len() {
        return Err(Error::Input("embedding and id counts differ".into()));
    }
    let dim = queries.first().map(Array1::len);
    if let Some(bad) = queries.iter().chain(candidates).find(|e| Some(e.len()) != dim) {
        return Err(Error::Input(format!(
            "embedding dimension mismatch: {} vs {}",
            bad.len(),
            dim.unwrap_or(0)
        )));
    }
    let pos: HashMap<&str, usize> = candidate_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let top_n = ks.iter().copied().max().unwrap_or(1);
    let mut rows = Vec::with_capacity(queries.len());
    for (q, qid) in queries.iter().zip(query_ids) {
        let t = truth
            .get(qid)
            .ok_or_else(|| Error::Input(format!("query `{qid}` has no truth entry")))?;
        let ti = *pos
            .get(t.as_str())
            .ok_or_else(|| Error::Input(format!("truth candidate `{t}` for `{qid}` is not a candidate")))?;
        let order = rank_candidates(q, candidates, candidate_ids);
        let rank = order.iter().position(|&c| c == ti).expect("truth is ranked") + 1;
        rows.push(LinkRow {
            query: qid.clone(),
            truth: t.clone(),
            rank,
            top: order.iter().take(top_n).map(|&c| candidate_ids[c].clone()).collect(),
        });
    }
    let ranks: Vec<usize> = rows.iter().map(|r| r.rank).collect();
    Ok(LinkOutcome { metrics: rank_metrics(&ranks, ks)?, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkingConfig {
    /// Neighbours per query context.
    pub query_k: usize,
    /// Candidate context radius, in candidate units.
    pub candidate_radius: f64,
    pub ks: Vec<usize>,
}

impl Default for LinkingConfig {
    fn default() -> Self {
        LinkingConfig { query_k: 20, candidate_radius: 0.0015, ks: vec![1, 5, 10] }
    }
}

/// Pivot embeddings of every entity under `rule`, in input order.
pub fn embed_entities(
    entities: &[GeoEntity],
    scheme: CellScheme,
    rule: ContextRule,
    params: &ModelParams,
    enc: &EncoderConfig,
    vocab: &Vocab,
    lin: &LinearizerConfig,
) -> Result<Vec<Array1<f64>>> {
    let index = SpatialIndex::build(entities, scheme)?;
    let sentences = build_sentences(&index, rule, vocab, lin, None)?;
    embed_pivots(&sentences, params, enc)
}

/// Links the pixel-space queries of `pair` against its candidates.
///
/// Query contexts use the k-NN rule in pixel units (`z` scaled by the pixel
/// scale); candidate contexts use the radius rule.
pub fn link_pair(
    pair: &LinkingPair,
    params: &ModelParams,
    enc: &EncoderConfig,
    vocab: &Vocab,
    lin: &LinearizerConfig,
    cfg: &LinkingConfig,
) -> Result<LinkOutcome> {
    let qlin = LinearizerConfig { z: lin.z * pair.pixel_scale, ..*lin };
    let q = embed_entities(
        &pair.queries,
        CellScheme::grid_for_radius(qlin.z * qlin.dsep),
        ContextRule::Knn(cfg.query_k),
        params,
        enc,
        vocab,
        &qlin,
    )?;
    let c = embed_entities(
        &pair.candidates,
        CellScheme::geohash_for_radius(cfg.candidate_radius),
        ContextRule::Radius(cfg.candidate_radius),
        params,
        enc,
        vocab,
        lin,
    )?;
    let qids: Vec<String> = pair.queries.iter().map(|e| e.id.clone()).collect();
    let cids: Vec<String> = pair.candidates.iter().map(|e| e.id.clone()).collect();
    link(&q, &qids, &c, &cids, &pair.truth, &cfg.ks)
}
