use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct F1Report {
    pub per_class: BTreeMap<String, f64>,
    pub support: BTreeMap<String, usize>,
    pub micro_f1: f64,
}

/// Per-class F1 (0 when precision + recall is 0) and micro-F1.
pub fn f1_metrics(preds: &[usize], golds: &[usize], classes: &[String]) -> Result<F1Report> {
    if preds.is_empty() {
        return Err(Error::Input("no predictions to score".into()));
    }
    if preds.len() != golds.len() {
        return Err(Error::Input(format!("{} predictions for {} gold labels", preds.len(), golds.len())));
    }
    let n = classes.len();
    if let Some(bad) = preds.iter().chain(golds).find(|&&c| c >= n) {
        return Err(Error::Input(format!("class id {bad} outside {n} classes")));
    }
    let (mut tp, mut fp, mut fn_) = (vec![0usize; n], vec![0usize; n], vec![0usize; n]);
    for (&p, &g) in preds.iter().zip(golds) {
        if p == g {
            tp[g] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    let mut per_class = BTreeMap::new();
    let mut support = BTreeMap::new();
    for c in 0..n {
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        let f1 = if tp[c] == 0 { 0.0 } else { 2.0 * tp[c] as f64 / denom as f64 };
        per_class.insert(classes[c].clone(), f1);
        support.insert(classes[c].clone(), tp[c] + fn_[c]);
    }
    let (stp, sfp, sfn): (usize, usize, usize) = (tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    let micro_f1 = 2.0 * stp as f64 / (2 * stp + sfp + sfn) as f64;
    Ok(F1Report { per_class, support, micro_f1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkMetrics {
    pub n_queries: usize,
    pub mrr: f64,
    pub recall: BTreeMap<usize, f64>,
}

/// MRR and recall@K from 1-based ranks of the true candidates.
pub fn rank_metrics(ranks: &[usize], ks: &[usize]) -> Result<LinkMetrics> {
    if ranks.is_empty() {
        return Err(Error::Input("no ranks to score".into()));
    }
    if ranks.contains(&0) {
        return Err(Error::Input("ranks are 1-based".into()));
    }
    let n = ranks.len() as f64;
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    let recall = ks
        .iter()
        .map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
        .collect();
    Ok(LinkMetrics { n_queries: ranks.len(), mrr, recall })
}

/// Element-wise mean of several metric sets with the same K list.
pub fn mean_link_metrics(all: &[LinkMetrics]) -> Result<LinkMetrics> {
    let first = all.first().ok_or_else(|| Error::Input("nothing to average".into()))?;
    let n = all.len() as f64;
    let mut recall = BTreeMap::new();
    for k in first.recall.keys() {
        let s: f64 = all.iter().map(|m| m.recall.get(k).copied().unwrap_or(0.0)).sum();
        recall.insert(*k, s / n);
    }
    Ok(LinkMetrics {
        n_queries: all.iter().map(|m| m.n_queries).sum(),
        mrr: all.iter().map(|m| m.mrr).sum::<f64>() / n,
        recall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfect() {
        let r = f1_metrics(&[0, 1, 2, 1], &[0, 1, 2, 1], &names(3)).unwrap();
        assert!(r.per_class.values().all(|&f| f == 1.0));
        assert_eq!(r.micro_f1, 1.0);
    }

    #[test]
    fn hand_confusion() {
        let r = f1_metrics(&[0, 0, 1], &[0, 1, 1], &names(2)).unwrap();
        assert!((r.per_class["c0"] - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.per_class["c1"] - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.micro_f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_is_zero() {
        let r = f1_metrics(&[0, 1], &[0, 1], &names(3)).unwrap();
        assert_eq!(r.per_class["c2"], 0.0);
        assert_eq!(r.support["c2"], 0);
        assert_eq!(r.micro_f1, 1.0);
    }

    #[test]
    fn errors() {
        assert!(f1_metrics(&[], &[], &names(2)).is_err());
        assert!(f1_metrics(&[0], &[0, 1], &names(2)).is_err());
        assert!(f1_metrics(&[5], &[0], &names(2)).is_err());
        assert!(rank_metrics(&[], &[1]).is_err());
    }

    #[test]
    fn hand_ranks() {
        let m = rank_metrics(&[1, 2, 4], &[1, 5, 10]).unwrap();
        assert!((m.mrr - 1.75 / 3.0).abs() < 1e-15);
        assert!((m.recall[&1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.recall[&5], 1.0);
    }

    proptest! {
        #[test]
        fn micro_is_accuracy(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)) {
            let (p, g): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let r = f1_metrics(&p, &g, &names(4)).unwrap();
            let acc = p.iter().zip(&g).filter(|(a, b)| a == b).count() as f64 / p.len() as f64;
            prop_assert!((r.micro_f1 - acc).abs() < 1e-12);
        }

        #[test]
        fn recall_monotone_and_mrr_bounded(ranks in prop::collection::vec(1usize..50, 1..40)) {
            let m = rank_metrics(&ranks, &[1, 2, 5, 10, 20]).unwrap();
            let r: Vec<f64> = m.recall.values().copied().collect();
            prop_assert!(r.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(m.mrr >= m.recall[&1] && m.mrr <= 1.0);
        }
    }
}
