use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{f1_metrics, F1Report};
use crate::encoder::{forward_ids, pool_pivot, typing_logits, EncoderConfig, ModelParams};
use crate::error::{Error, Result};
use crate::linearizer::PseudoSentence;
use crate::pretrain::{adamw_step, typing_batch_loss, AdamWConfig, OptimizerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub train_frac: f64,
    pub optimizer: AdamWConfig,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            epochs: 15,
            batch_size: 12,
            seed: 0,
            train_frac: 0.8,
            optimizer: AdamWConfig { lr: 1e-3, ..Default::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n`; the first `round(frac * n)` go to training.
pub fn split_indices(n: usize, frac: f64, seed: u64) -> Result<Split> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::Argument(format!("train fraction must be in (0, 1), got {frac}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (frac * n as f64).round() as usize;
    let test = idx.split_off(cut);
    Ok(Split { train: idx, test })
}

/// Argmax class of each sentence under the typing head, no dropout.
pub fn predict_typing(params: &ModelParams, enc: &EncoderConfig, sentences: &[PseudoSentence]) -> Result<Vec<usize>> {
    sentences
        .par_iter()
        .map(|ps| {
            let c = forward_ids::<ChaCha8Rng>(&ps.token_ids, &ps.dx, &ps.dy, params, enc, None)?;
            let pooled = pool_pivot(c.hidden.view(), ps.pivot_span())?;
            Ok(argmax(typing_logits(params, &pooled)?.iter().copied()))
        })
        .collect()
}

fn argmax(xs: impl Iterator<Item = f64>) -> usize {
    xs.enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b })
        .0
}

#[derive(Debug, Clone)]
pub struct TypingOutcome {
    pub params: ModelParams,
    pub config: EncoderConfig,
    pub report: F1Report,
    pub predictions: Vec<usize>,
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
}

fn labels_of(sentences: &[PseudoSentence], idx: &[usize], n_classes: usize) -> Result<Vec<usize>> {
    idx.iter()
        .map(|&i| {
            let l = sentences[i]
                .label
                .ok_or_else(|| Error::Input(format!("sentence {i} has no label")))?;
            if l >= n_classes {
                return Err(Error::Config(format!("label {l} outside the {n_classes}-class head")));
            }
            Ok(l)
        })
        .collect()
}

/// Fine-tunes encoder and a fresh softmax head on the training split, then
/// scores the test split. Only pivot labels are used.
pub fn finetune_typing(
    init: &ModelParams,
    enc: &EncoderConfig,
    sentences: &[PseudoSentence],
    classes: &[String],
    split: &Split,
    cfg: &FinetuneConfig,
) -> Result<TypingOutcome> {
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::Input("typing needs non-empty train and test splits".into()));
    }
    let n_classes = classes.len();
    labels_of(sentences, &split.train, n_classes)?;
    let golds = labels_of(sentences, &split.test, n_classes)?;
    let enc = EncoderConfig { n_classes, ..enc.clone() };
    let mut params = init.clone();
    params.reset_typing_head(n_classes, enc.init_std, cfg.seed);
    let mut opt = OptimizerState::new(&params, cfg.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xf1e7);
    let mut order = split.train.clone();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<PseudoSentence> = chunk.iter().map(|&i| sentences[i].clone()).collect();
            let seeds: Vec<u64> = (0..batch.len()).map(|_| rng.next_u64()).collect();
            let bl = typing_batch_loss(&params, &enc, &batch, Some(&seeds), true)?;
            if !bl.loss.is_finite() {
                return Err(Error::Numeric { layer: enc.layers, detail: "non-finite typing loss".into() });
            }
            adamw_step(&mut params, bl.grads.as_ref().expect("grads"), &mut opt)?;
            params.round_to_f32();
            total += bl.loss;
            batches += 1;
        }
        epoch_loss.push(total / batches as f64);
    }
    let test: Vec<PseudoSentence> = split.test.iter().map(|&i| sentences[i].clone()).collect();
    let predictions = predict_typing(&params, &enc, &test)?;
    let report = f1_metrics(&predictions, &golds, classes)?;
    Ok(TypingOutcome { params, config: enc, report, predictions, epoch_loss })
}

/// Multinomial naive Bayes over the pivot's own subtokens (add-one smoothing).
#[derive(Debug, Clone)]
pub struct NameBaseline {
    log_prior: Vec<f64>,
    log_lik: Vec<BTreeMap<u32, f64>>,
    log_unseen: Vec<f64>,
}

fn pivot_tokens(ps: &PseudoSentence) -> &[u32] {
    let s = ps.pivot_span();
    &ps.token_ids[s.start..s.end]
}

impl NameBaseline {
    pub fn fit(sentences: &[PseudoSentence], idx: &[usize], n_classes: usize) -> Result<Self> {
        let labels = labels_of(sentences, idx, n_classes)?;
        let mut docs = vec![0usize; n_classes];
        let mut counts = vec![BTreeMap::<u32, usize>::new(); n_classes];
        let mut vocab = std::collections::BTreeSet::new();
        for (&i, &l) in idx.iter().zip(&labels) {
            docs[l] += 1;
            for &t in pivot_tokens(&sentences[i]) {
                *counts[l].entry(t).or_default() += 1;
                vocab.insert(t);
            }
        }
        let v = vocab.len() as f64 + 1.0;
        let n = idx.len() as f64;
        let mut log_lik = Vec::with_capacity(n_classes);
        let mut log_unseen = Vec::with_capacity(n_classes);
        for c in &counts {
            let total = c.values().sum::<usize>() as f64 + v;
            log_lik.push(c.iter().map(|(&t, &k)| (t, ((k as f64 + 1.0) / total).ln())).collect());
            log_unseen.push((1.0 / total).ln());
        }
        let log_prior = docs.iter().map(|&d| ((d as f64 + 1.0) / (n + n_classes as f64)).ln()).collect();
        Ok(NameBaseline { log_prior, log_lik, log_unseen })
    }

    pub fn predict(&self, ps: &PseudoSentence) -> usize {
        argmax((0..self.log_prior.len()).map(|c| {
            self.log_prior[c]
                + pivot_tokens(ps)
                    .iter()
                    .map(|t| self.log_lik[c].get(t).copied().unwrap_or(self.log_unseen[c]))
                    .sum::<f64>()
        }))
    }
}

/// Trains the name-only baseline on the training split and scores the test split.
pub fn name_baseline(sentences: &[PseudoSentence], classes: &[String], split: &Split) -> Result<F1Report> {
    let nb = NameBaseline::fit(sentences, &split.train, classes.len())?;
    let golds = labels_of(sentences, &split.test, classes.len())?;
    let preds: Vec<usize> = split.test.iter().map(|&i| nb.predict(&sentences[i])).collect();
    f1_metrics(&preds, &golds, classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearizer::vocab::{CLS, SEP};
    use crate::linearizer::EntitySpan;

    fn labelled(tok: u32, label: usize) -> PseudoSentence {
        PseudoSentence {
            token_ids: vec![CLS, tok, SEP],
            dx: vec![20.0, 0.0, 20.0],
            dy: vec![20.0, 0.0, 20.0],
            entity_spans: vec![EntitySpan { start: 1, end: 2, entity_id: "x".into() }],
            pivot_span_index: 0,
            label: Some(label),
        }
    }

    #[test]
    fn split_is_seeded_partition() {
        let s = split_indices(10, 0.8, 4).unwrap();
        assert_eq!(s.train.len(), 8);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(s, split_indices(10, 0.8, 4).unwrap());
        assert!(split_indices(10, 1.0, 4).is_err());
    }

    #[test]
    fn baseline_learns_token_class_map() {
        let s: Vec<PseudoSentence> = (0..40).map(|i| labelled(5 + (i % 2) as u32, i % 2)).collect();
        let classes = vec!["a".to_string(), "b".to_string()];
        let split = split_indices(40, 0.5, 1).unwrap();
        assert_eq!(name_baseline(&s, &classes, &split).unwrap().micro_f1, 1.0);
    }

    #[test]
    fn finetune_separable_and_label_mismatch() {
        let enc = EncoderConfig { vocab_size: 10, hidden: 8, layers: 1, heads: 2, ffn: 16, max_seq_len: 4, dropout: 0.0, ..Default::default() };
        let p = ModelParams::init(&enc, 1);
        let s: Vec<PseudoSentence> = (0..40).map(|i| labelled(5 + (i % 2) as u32, i % 2)).collect();
        let classes = vec!["a".to_string(), "b".to_string()];
        let split = split_indices(40, 0.8, 2).unwrap();
        let cfg = FinetuneConfig { epochs: 15, batch_size: 8, optimizer: AdamWConfig { lr: 1e-2, ..Default::default() }, ..Default::default() };
        let out = finetune_typing(&p, &enc, &s, &classes, &split, &cfg).unwrap();
        assert_eq!(out.report.micro_f1, 1.0);
        assert!(out.epoch_loss.last().unwrap() < &out.epoch_loss[0]);
        let bad: Vec<PseudoSentence> = (0..40).map(|i| labelled(5, 2 + i % 2)).collect();
        assert!(matches!(finetune_typing(&p, &enc, &bad, &classes, &split, &cfg), Err(Error::Config(_))));
    }
}
