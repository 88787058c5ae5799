use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linking::link;
use super::metrics::{mean_link_metrics, LinkMetrics};
use crate::corpus::simulate_omission;
use crate::encoder::{embed_pivots, EncoderConfig, ModelParams};
use crate::error::{Error, Result};
use crate::geo::GeoEntity;
use crate::linearizer::{build_pseudo_sentence, context_of, ContextRule, LinearizerConfig, Vocab};
use crate::spatial_index::{CellScheme, SpatialIndex};

pub const METRIC_LABEL: &str = "self-linking MRR (proxy for representation similarity)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OmissionConfig {
    pub rates: Vec<f64>,
    pub radius: f64,
    pub ks: Vec<usize>,
    pub seed: u64,
}

impl Default for OmissionConfig {
    fn default() -> Self {
        OmissionConfig {
            rates: (0..10).map(|i| i as f64 / 10.0).collect(),
            radius: 0.0015,
            ks: vec![1, 5, 10],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmissionCurve {
    pub metric: String,
    pub rates: Vec<f64>,
    pub points: Vec<LinkMetrics>,
    /// Rate at the elbow of the MRR curve, if it bends at all.
    pub elbow: Option<f64>,
}

impl OmissionCurve {
    pub fn mrr(&self) -> Vec<f64> {
        self.points.iter().map(|m| m.mrr).collect()
    }
}

/// Index of the point farthest below/above the chord joining the first and
/// last points, after scaling both axes to [0, 1].
pub fn find_elbow(xs: &[f64], ys: &[f64]) -> Option<usize> {
    if xs.len() < 3 || xs.len() != ys.len() {
        return None;
    }
    let (x0, x1) = (xs[0], xs[xs.len() - 1]);
    let ymin = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let ymax = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if x1 == x0 || ymax == ymin {
        return None;
    }
    let nx = |x: f64| (x - x0) / (x1 - x0);
    let ny = |y: f64| (y - ymin) / (ymax - ymin);
    let (ay, by) = (ny(ys[0]), ny(ys[ys.len() - 1]));
    let mut best = (0.0, None);
    for i in 1..xs.len() - 1 {
        let chord = ay + (by - ay) * nx(xs[i]);
        let d = (ny(ys[i]) - chord).abs();
        if d > best.0 {
            best = (d, Some(i));
        }
    }
    best.1
}

/// Re-embeds every pivot after dropping a fraction of its neighbours and
/// links the result back against the unmodified pivots.
pub fn omission_experiment(
    entities: &[GeoEntity],
    params: &ModelParams,
    enc: &EncoderConfig,
    vocab: &Vocab,
    lin: &LinearizerConfig,
    cfg: &OmissionConfig,
) -> Result<OmissionCurve> {
    if cfg.rates.first() != Some(&0.0) || cfg.rates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("omission rates must ascend strictly from 0".into()));
    }
    let index = SpatialIndex::build(entities, CellScheme::geohash_for_radius(cfg.radius))?;
    let rule = ContextRule::Radius(cfg.radius);
    let contexts: Vec<Vec<GeoEntity>> = index
        .entities()
        .iter()
        .map(|p| Ok(context_of(&index, p, rule, lin)?.into_iter().cloned().collect()))
        .collect::<Result<_>>()?;
    let pivots = index.entities();
    let ids: Vec<String> = pivots.iter().map(|e| e.id.clone()).collect();
    let truth = ids.iter().map(|i| (i.clone(), i.clone())).collect();

    let sentences_for = |kept: &[Vec<GeoEntity>]| -> Result<Vec<_>> {
        pivots
            .iter()
            .zip(kept)
            .map(|(p, ctx)| {
                let refs: Vec<&GeoEntity> = ctx.iter().collect();
                build_pseudo_sentence(p, &refs, vocab, lin)
            })
            .collect()
    };
    let original = embed_pivots(&sentences_for(&contexts)?, params, enc)?;

    let mut points = Vec::with_capacity(cfg.rates.len());
    for (k, &rate) in cfg.rates.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(k as u64);
        let kept: Vec<Vec<GeoEntity>> = pivots
            .iter()
            .zip(&contexts)
            .map(|(p, ctx)| simulate_omission(ctx, p, rate, &mut rng))
            .collect::<Result<_>>()?;
        let omitted = if rate == 0.0 {
            original.clone()
        } else {
            embed_pivots(&sentences_for(&kept)?, params, enc)?
        };
        points.push(link(&omitted, &ids, &original, &ids, &truth, &cfg.ks)?.metrics);
    }
    let mrr: Vec<f64> = points.iter().map(|m| m.mrr).collect();
    let elbow = find_elbow(&cfg.rates, &mrr).map(|i| cfg.rates[i]);
    Ok(OmissionCurve { metric: METRIC_LABEL.into(), rates: cfg.rates.clone(), points, elbow })
}

/// Averages curves measured at the same rates and recomputes the elbow.
pub fn mean_curve(curves: &[OmissionCurve]) -> Result<OmissionCurve> {
    let first = curves.first().ok_or_else(|| Error::Input("no curves to average".into()))?;
    let points = (0..first.rates.len())
        .map(|i| mean_link_metrics(&curves.iter().map(|c| c.points[i].clone()).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let mrr: Vec<f64> = points.iter().map(|m| m.mrr).collect();
    let elbow = find_elbow(&first.rates, &mrr).map(|i| first.rates[i]);
    Ok(OmissionCurve { metric: first.metric.clone(), rates: first.rates.clone(), points, elbow })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elbow_of_a_knee() {
        let xs = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
        let ys = [1.0, 0.98, 0.96, 0.5, 0.45, 0.4];
        assert_eq!(find_elbow(&xs, &ys), Some(2));
        assert_eq!(find_elbow(&xs, &[1.0; 6]), None);
    }

    #[test]
    fn rates_must_start_at_zero() {
        let enc = EncoderConfig { vocab_size: 8, hidden: 4, layers: 1, heads: 1, ffn: 4, max_seq_len: 8, ..Default::default() };
        let p = ModelParams::init(&enc, 0);
        let v = Vocab::from_list(&["a"]).unwrap();
        let cfg = OmissionConfig { rates: vec![0.1, 0.2], ..Default::default() };
        assert!(omission_experiment(&[], &p, &enc, &v, &LinearizerConfig::default(), &cfg).is_err());
    }
}
