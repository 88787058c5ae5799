use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::masking::MaskedInstance;
use crate::encoder::{
    backward, forward_ids, mlm_backward, mlm_logits, pool_pivot, pool_pivot_backward, typing_backward,
    typing_logits, EncoderConfig, ModelParams,
};
use crate::error::{Error, Result};
use crate::linearizer::PseudoSentence;

fn log_softmax_row(row: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.mapv(|v| v - lse)
}

/// Mean over rows of `-log softmax(logits)[target]`.
pub fn masked_ce_loss(logits: &Array2<f64>, targets: &[u32]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::Input("cross-entropy needs at least one masked position".into()));
    }
    if logits.nrows() != targets.len() {
        return Err(Error::Input(format!(
            "{} logit rows for {} targets",
            logits.nrows(),
            targets.len()
        )));
    }
    let total: f64 = logits
        .axis_iter(Axis(0))
        .zip(targets)
        .map(|(row, &t)| -log_softmax_row(row)[t as usize])
        .sum();
    Ok(total / targets.len() as f64)
}

/// Summed loss over rows and `d(sum loss)/d logits`, scaled by `weight`.
fn ce_with_grad(logits: &Array2<f64>, targets: &[usize], weight: f64) -> (f64, Array2<f64>, usize) {
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    let mut correct = 0;
    for ((row, mut g), &t) in logits.axis_iter(Axis(0)).zip(grad.axis_iter_mut(Axis(0))).zip(targets) {
        let lp = log_softmax_row(row);
        loss -= lp[t];
        let argmax = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
            .0;
        correct += usize::from(argmax == t);
        g.assign(&lp.mapv(f64::exp));
        g[t] -= 1.0;
        g *= weight;
    }
    (loss, grad, correct)
}

/// Loss of a batch plus optional gradients.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    /// Mean loss over all predicted positions (or examples).
    pub loss: f64,
    pub n_targets: usize,
    pub n_correct: usize,
    pub grads: Option<ModelParams>,
}

/// Per-example dropout seeds; `None` disables dropout.
pub type DropoutSeeds<'a> = Option<&'a [u64]>;

fn reduce(parts: Vec<(f64, usize, Option<ModelParams>)>, n_targets: usize, params: &ModelParams, want_grads: bool) -> BatchLoss {
    // fixed summation order keeps results independent of thread count
    let mut loss = 0.0;
    let mut correct = 0;
    let mut grads = want_grads.then(|| params.zeros_like());
    for (l, c, g) in parts {
        loss += l;
        correct += c;
        if let (Some(acc), Some(g)) = (grads.as_mut(), g) {
            acc.add_assign(&g);
        }
    }
    BatchLoss {
        loss: loss / n_targets.max(1) as f64,
        n_targets,
        n_correct: correct,
        grads,
    }
}

/// Masked-token loss over a batch of masked instances.
pub fn masked_batch_loss(
    params: &ModelParams,
    cfg: &EncoderConfig,
    batch: &[MaskedInstance],
    dropout: DropoutSeeds<'_>,
    want_grads: bool,
) -> Result<BatchLoss> {
    let n_targets: usize = batch.iter().map(|m| m.positions.len()).sum();
    if n_targets == 0 {
        return Err(Error::Input("batch has no masked positions".into()));
    }
    let weight = 1.0 / n_targets as f64;
    let parts: Vec<(f64, usize, Option<ModelParams>)> = batch
        .par_iter()
        .enumerate()
        .filter(|(_, m)| !m.positions.is_empty())
        .map(|(i, m)| {
            let mut rng = dropout.map(|s| ChaCha8Rng::seed_from_u64(s[i]));
            let cache = forward_ids(&m.input_ids, &m.dx, &m.dy, params, cfg, rng.as_mut())?;
            let h = cache.hidden.select(Axis(0), &m.positions);
            let logits = mlm_logits(params, &h);
            let targets: Vec<usize> = m.targets.iter().map(|&t| t as usize).collect();
            let (loss, dlogits, correct) = ce_with_grad(&logits, &targets, weight);
            if !loss.is_finite() {
                return Err(Error::Numeric { layer: cfg.layers, detail: "non-finite masked-token loss".into() });
            }
            let grads = if want_grads {
                let mut g = params.zeros_like();
                let dh = mlm_backward(params, &h, &dlogits, &mut g);
                let mut dhidden = Array2::zeros(cache.hidden.raw_dim());
                for (r, &p) in m.positions.iter().enumerate() {
                    dhidden.row_mut(p).scaled_add(1.0, &dh.row(r));
                }
                backward(params, cfg, &cache, &dhidden, &mut g);
                Some(g)
            } else {
                None
            };
            Ok((loss, correct, grads))
        })
        .collect::<Result<_>>()?;
    Ok(reduce(parts, n_targets, params, want_grads))
}

/// Cross-entropy of the typing head on pooled pivot embeddings.
pub fn typing_batch_loss(
    params: &ModelParams,
    cfg: &EncoderConfig,
    batch: &[PseudoSentence],
    dropout: DropoutSeeds<'_>,
    want_grads: bool,
) -> Result<BatchLoss> {
    if batch.is_empty() {
        return Err(Error::Input("empty typing batch".into()));
    }
    let n_classes = params.typing_w.as_ref().map(|w| w.ncols()).unwrap_or(0);
    let weight = 1.0 / batch.len() as f64;
    let parts: Vec<(f64, usize, Option<ModelParams>)> = batch
        .par_iter()
        .enumerate()
        .map(|(i, ps)| {
            let label = ps
                .label
                .ok_or_else(|| Error::Input("typing example without a label".into()))?;
            if label >= n_classes {
                return Err(Error::Config(format!(
                    "label {label} outside a typing head of {n_classes} classes"
                )));
            }
            let mut rng = dropout.map(|s| ChaCha8Rng::seed_from_u64(s[i]));
            let cache = forward_ids(&ps.token_ids, &ps.dx, &ps.dy, params, cfg, rng.as_mut())?;
            let pooled = pool_pivot(cache.hidden.view(), ps.pivot_span())?;
            let logits = typing_logits(params, &pooled)?.insert_axis(Axis(0));
            let (loss, dlogits, correct) = ce_with_grad(&logits, &[label], weight);
            let grads = if want_grads {
                let mut g = params.zeros_like();
                let dpooled = typing_backward(params, &pooled, &dlogits.row(0).to_owned(), &mut g);
                let mut dhidden = Array2::zeros(cache.hidden.raw_dim());
                pool_pivot_backward(&dpooled, ps.pivot_span(), &mut dhidden);
                backward(params, cfg, &cache, &dhidden, &mut g);
                Some(g)
            } else {
                None
            };
            Ok((loss, correct, grads))
        })
        .collect::<Result<_>>()?;
    Ok(reduce(parts, batch.len(), params, want_grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_v() {
        let logits = Array2::zeros((3, 7));
        let l = masked_ce_loss(&logits, &[0, 3, 6]).unwrap();
        assert!((l - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_softmax() {
        let logits = Array2::from_shape_vec((1, 4), vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        let l = masked_ce_loss(&logits, &[0]).unwrap();
        let e2 = 2f64.exp();
        assert!((l - -(e2 / (e2 + 3.0)).ln()).abs() < 1e-12);
        assert!((l - 0.340753).abs() < 1e-6);
    }

    #[test]
    fn margin_drives_loss_to_zero() {
        let mut prev = f64::INFINITY;
        for margin in [1.0, 5.0, 20.0, 50.0] {
            let logits = Array2::from_shape_vec((1, 3), vec![margin, 0.0, 0.0]).unwrap();
            let l = masked_ce_loss(&logits, &[0]).unwrap();
            assert!(l < prev);
            prev = l;
        }
        assert!(prev < 1e-20);
    }

    #[test]
    fn empty_targets_rejected() {
        assert!(masked_ce_loss(&Array2::zeros((0, 4)), &[]).is_err());
    }
}
