use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linearizer::vocab::{CLS, MASK, PAD, SEP};
use crate::linearizer::PseudoSentence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Mlm,
    Mep,
}

impl Objective {
    pub fn as_str(&self) -> &'static str {
        match self {
            Objective::Mlm => "mlm",
            Objective::Mep => "mep",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedInstance {
    pub input_ids: Vec<u32>,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    /// Positions whose original token must be predicted, ascending.
    pub positions: Vec<usize>,
    pub targets: Vec<u32>,
    pub objective: Objective,
    /// Entity spans masked by MEP (indices into the sentence's spans).
    pub masked_spans: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskingConfig {
    pub rate: f64,
    /// BERT-style 80/10/10 corruption instead of always writing [MASK].
    pub corruption: bool,
    /// Never pick the pivot entity for MEP.
    pub mep_exclude_pivot: bool,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            rate: 0.15,
            corruption: false,
            mep_exclude_pivot: false,
        }
    }
}

fn maskable(t: u32) -> bool {
    t != CLS && t != SEP && t != PAD
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate < 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("mask rate must be in (0, 1), got {rate}")))
    }
}

fn corrupt<R: Rng + ?Sized>(ids: &mut [u32], positions: &[usize], cfg: &MaskingConfig, vocab_size: usize, rng: &mut R) {
    for &p in positions {
        if !cfg.corruption {
            ids[p] = MASK;
            continue;
        }
        let u: f64 = rng.random();
        if u < 0.8 {
            ids[p] = MASK;
        } else if u < 0.9 {
            // random non-special token
            ids[p] = rng.random_range(5..vocab_size.max(6) as u32);
        }
    }
}

/// Masks each maskable token independently with probability `cfg.rate`.
///
/// Returns `Ok(None)` (skip) when the sentence has no maskable token. An
/// instance may come back with no masked positions; trainers drop those.
pub fn mask_mlm<R: Rng + ?Sized>(
    ps: &PseudoSentence,
    cfg: &MaskingConfig,
    vocab_size: usize,
    rng: &mut R,
) -> Result<Option<MaskedInstance>> {
    check_rate(cfg.rate)?;
    if !ps.token_ids.iter().any(|&t| maskable(t)) {
        return Ok(None);
    }
    let mut positions = Vec::new();
    for (i, &t) in ps.token_ids.iter().enumerate() {
        if maskable(t) && rng.random::<f64>() < cfg.rate {
            positions.push(i);
        }
    }
    let targets = positions.iter().map(|&p| ps.token_ids[p]).collect();
    let mut input_ids = ps.token_ids.clone();
    corrupt(&mut input_ids, &positions, cfg, vocab_size, rng);
    Ok(Some(MaskedInstance {
        input_ids,
        dx: ps.dx.clone(),
        dy: ps.dy.clone(),
        positions,
        targets,
        objective: Objective::Mlm,
        masked_spans: Vec::new(),
    }))
}

/// Masks whole entity names until at least `cfg.rate` of the maskable tokens
/// are covered; at least one entity is always masked.
///
/// Returns `Ok(None)` (skip) for sentences with fewer than two entities.
pub fn mask_mep<R: Rng + ?Sized>(
    ps: &PseudoSentence,
    cfg: &MaskingConfig,
    vocab_size: usize,
    rng: &mut R,
) -> Result<Option<MaskedInstance>> {
    check_rate(cfg.rate)?;
    if ps.entity_spans.len() < 2 {
        return Ok(None);
    }
    let n_maskable = ps.token_ids.iter().filter(|&&t| maskable(t)).count();
    let mut order: Vec<usize> = (0..ps.entity_spans.len())
        .filter(|&i| !(cfg.mep_exclude_pivot && i == ps.pivot_span_index))
        .collect();
    order.shuffle(rng);
    let budget = cfg.rate * n_maskable as f64;
    let mut chosen = Vec::new();
    let mut covered = 0usize;
    for i in order {
        chosen.push(i);
        covered += ps.entity_spans[i].len();
        if covered as f64 >= budget {
            break;
        }
    }
    chosen.sort_unstable();
    let mut positions: Vec<usize> = chosen
        .iter()
        .flat_map(|&i| ps.entity_spans[i].start..ps.entity_spans[i].end)
        .collect();
    positions.sort_unstable();
    let targets = positions.iter().map(|&p| ps.token_ids[p]).collect();
    let mut input_ids = ps.token_ids.clone();
    corrupt(&mut input_ids, &positions, cfg, vocab_size, rng);
    Ok(Some(MaskedInstance {
        input_ids,
        dx: ps.dx.clone(),
        dy: ps.dy.clone(),
        positions,
        targets,
        objective: Objective::Mep,
        masked_spans: chosen,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearizer::EntitySpan;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sentence(span_lens: &[usize]) -> PseudoSentence {
        let mut ids = vec![CLS];
        let mut spans = Vec::new();
        let mut next = 10u32;
        for (k, &n) in span_lens.iter().enumerate() {
            let start = ids.len();
            for _ in 0..n {
                ids.push(next);
                next += 1;
            }
            spans.push(EntitySpan { start, end: ids.len(), entity_id: format!("e{k}") });
            ids.push(SEP);
        }
        let l = ids.len();
        PseudoSentence {
            token_ids: ids,
            dx: vec![1.0; l],
            dy: vec![2.0; l],
            entity_spans: spans,
            pivot_span_index: 0,
            label: None,
        }
    }

    #[test]
    fn mlm_never_masks_specials_and_keeps_offsets() {
        let ps = sentence(&[3, 2, 4, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = MaskingConfig { rate: 0.5, ..Default::default() };
        for _ in 0..500 {
            let m = mask_mlm(&ps, &cfg, 100, &mut rng).unwrap().unwrap();
            for &p in &m.positions {
                assert!(maskable(ps.token_ids[p]));
                assert_eq!(m.input_ids[p], MASK);
            }
            assert_eq!(m.input_ids[0], CLS);
            assert_eq!(m.dx, ps.dx);
            assert_eq!(m.dy, ps.dy);
        }
    }

    #[test]
    fn mlm_is_seeded() {
        let ps = sentence(&[3, 2, 4, 1]);
        let cfg = MaskingConfig::default();
        let a = mask_mlm(&ps, &cfg, 100, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = mask_mlm(&ps, &cfg, 100, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn skip_signals_and_rate_checks() {
        let only_specials = PseudoSentence {
            token_ids: vec![CLS, SEP],
            dx: vec![20.0; 2],
            dy: vec![20.0; 2],
            entity_spans: vec![],
            pivot_span_index: 0,
            label: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = MaskingConfig::default();
        assert!(mask_mlm(&only_specials, &cfg, 100, &mut rng).unwrap().is_none());
        assert!(mask_mep(&sentence(&[3]), &cfg, 100, &mut rng).unwrap().is_none());
        let bad = MaskingConfig { rate: 1.0, ..cfg };
        assert!(mask_mlm(&sentence(&[2]), &bad, 100, &mut rng).is_err());
    }

    #[test]
    fn mep_two_entities_masks_exactly_one() {
        let ps = sentence(&[2, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m = mask_mep(&ps, &MaskingConfig::default(), 100, &mut rng).unwrap().unwrap();
            assert_eq!(m.masked_spans.len(), 1);
            let span = &ps.entity_spans[m.masked_spans[0]];
            assert_eq!(m.positions, (span.start..span.end).collect::<Vec<_>>());
        }
    }

    #[test]
    fn mep_can_exclude_pivot() {
        let ps = sentence(&[2, 3, 1]);
        let cfg = MaskingConfig { mep_exclude_pivot: true, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let m = mask_mep(&ps, &cfg, 100, &mut rng).unwrap().unwrap();
            assert!(!m.masked_spans.contains(&0));
        }
    }

    #[test]
    fn corruption_mix() {
        let ps = sentence(&[50, 50]);
        let cfg = MaskingConfig { rate: 0.5, corruption: true, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut masked, mut total) = (0, 0);
        for _ in 0..200 {
            let m = mask_mlm(&ps, &cfg, 1000, &mut rng).unwrap().unwrap();
            total += m.positions.len();
            masked += m.positions.iter().filter(|&&p| m.input_ids[p] == MASK).count();
        }
        let frac = masked as f64 / total as f64;
        assert!((frac - 0.8).abs() < 0.03, "{frac}");
    }
}
