//! Transformer encoder over pseudo-sentences.
//!
//! Input row `t` is the sum of a learned token embedding, a learned sequence
//! position embedding, and two fixed sinusoidal embeddings of the token's
//! normalized x and y offsets. The stack is post-LN (attention, add & norm,
//! GELU feed-forward, add & norm). Gradients are computed analytically.

pub mod checkpoint;
mod layers;
mod params;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linearizer::vocab::PAD;
use crate::linearizer::{EntitySpan, PseudoSentence};

use layers::{layer_backward, layer_forward, LayerCache};
pub use params::{LayerParams, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    /// Embedding width; even so sine/cosine components pair up.
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_seq_len: usize,
    pub dropout: f64,
    pub sinusoid_base: f64,
    /// Reuse the token embedding table as the masked-token output projection.
    pub tie_mlm_head: bool,
    /// Add the spatial coordinate embeddings to the input sum.
    pub spatial_embedding: bool,
    /// Size of the typing head; 0 means no head.
    pub n_classes: usize,
    pub init_std: f64,
    pub embed_init_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 2000,
            hidden: 64,
            layers: 2,
            heads: 4,
            ffn: 256,
            max_seq_len: 128,
            dropout: 0.1,
            sinusoid_base: 10_000.0,
            tie_mlm_head: true,
            spatial_embedding: true,
            n_classes: 0,
            init_std: 0.02,
            embed_init_std: 0.125,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("encoder: {m}")));
        if self.hidden == 0 || !self.hidden.is_multiple_of(2) {
            return bad(format!("hidden size must be even and positive, got {}", self.hidden));
        }
        if self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return bad(format!("{} heads do not divide hidden size {}", self.heads, self.hidden));
        }
        if self.vocab_size < 6 || self.max_seq_len < 3 || self.ffn == 0 {
            return bad("vocab_size >= 6, max_seq_len >= 3 and ffn > 0 are required".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.sinusoid_base > 0.0) {
            return bad("sinusoid base must be positive".into());
        }
        Ok(())
    }
}

/// Continuous sinusoidal embedding of a real-valued offset.
///
/// Component `2j` is `sin(d / base^(2j/m))` and component `2j+1` is
/// `cos(d / base^(2j/m))`.
pub fn spatial_coord_embedding(dist: f64, m_dim: usize, base: f64) -> Array1<f64> {
    let mut out = Array1::zeros(m_dim);
    add_spatial(dist, base, out.as_slice_mut().expect("contiguous"));
    out
}

fn add_spatial(dist: f64, base: f64, row: &mut [f64]) {
    let m = row.len();
    for j in 0..m / 2 {
        let arg = dist / base.powf((2 * j) as f64 / m as f64);
        let (s, c) = arg.sin_cos();
        row[2 * j] += s;
        row[2 * j + 1] += c;
    }
}

fn check_ids(ids: &[u32], cfg: &EncoderConfig) -> Result<()> {
    if ids.len() > cfg.max_seq_len {
        return Err(Error::CorruptInput(format!(
            "sequence length {} exceeds max_seq_len {}",
            ids.len(),
            cfg.max_seq_len
        )));
    }
    if let Some(&bad) = ids.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(Error::CorruptInput(format!(
            "token id {bad} outside vocabulary of size {}",
            cfg.vocab_size
        )));
    }
    Ok(())
}

fn embed_ids(ids: &[u32], dx: &[f64], dy: &[f64], params: &ModelParams, cfg: &EncoderConfig) -> Result<Array2<f64>> {
    check_ids(ids, cfg)?;
    if dx.len() != ids.len() || dy.len() != ids.len() {
        return Err(Error::CorruptInput("offset arrays do not match token count".into()));
    }
    let mut x = Array2::zeros((ids.len(), cfg.hidden));
    for (t, mut row) in x.rows_mut().into_iter().enumerate() {
        row.assign(&params.tok_emb.row(ids[t] as usize));
        row += &params.pos_emb.row(t);
        if cfg.spatial_embedding {
            let r = row.as_slice_mut().expect("row-major");
            add_spatial(dx[t], cfg.sinusoid_base, r);
            add_spatial(dy[t], cfg.sinusoid_base, r);
        }
    }
    Ok(x)
}

/// Input matrix `[L × M]` for one pseudo-sentence.
pub fn embed(ps: &PseudoSentence, params: &ModelParams, cfg: &EncoderConfig) -> Result<Array2<f64>> {
    embed_ids(&ps.token_ids, &ps.dx, &ps.dy, params, cfg)
}

/// Activations of one sequence, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct SequenceCache {
    ids: Vec<u32>,
    layers: Vec<LayerCache>,
    pub hidden: Array2<f64>,
}

fn check_finite(x: &Array2<f64>, layer: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric {
            layer,
            detail: "non-finite activation (layer 0 is the embedding sum)".into(),
        })
    }
}

/// Runs the encoder on raw ids and offsets. `key_valid[j] == false` hides
/// position `j` from attention. Dropout is applied only when `rng` is given.
pub fn forward_ids<R: rand::RngCore + ?Sized>(
    ids: &[u32],
    dx: &[f64],
    dy: &[f64],
    params: &ModelParams,
    cfg: &EncoderConfig,
    mut rng: Option<&mut R>,
) -> Result<SequenceCache> {
    let key_valid: Vec<bool> = ids.iter().map(|&t| t != PAD).collect();
    let mut x = embed_ids(ids, dx, dy, params, cfg)?;
    check_finite(&x, 0)?;
    let mut caches = Vec::with_capacity(params.layers.len());
    for (i, lp) in params.layers.iter().enumerate() {
        let (out, cache) = layer_forward(lp, &x, &key_valid, cfg.heads, cfg.dropout, rng.as_deref_mut());
        check_finite(&out, i + 1)?;
        caches.push(cache);
        x = out;
    }
    Ok(SequenceCache {
        ids: ids.to_vec(),
        layers: caches,
        hidden: x,
    })
}

/// Final hidden states for a batch, padded with [PAD] to a common length.
#[derive(Debug, Clone)]
pub struct BatchOutput {
    /// One `[L × M]` matrix per example.
    pub hidden: Vec<Array2<f64>>,
    /// Unpadded length of each example.
    pub lengths: Vec<usize>,
    /// Per-example caches, kept only in training mode.
    pub caches: Option<Vec<SequenceCache>>,
}

pub fn forward<R: rand::RngCore + ?Sized>(
    batch: &[PseudoSentence],
    params: &ModelParams,
    cfg: &EncoderConfig,
    train_mode: bool,
    mut rng: Option<&mut R>,
) -> Result<BatchOutput> {
    let l = batch.iter().map(PseudoSentence::len).max().unwrap_or(0);
    let mut hidden = Vec::with_capacity(batch.len());
    let mut caches = Vec::new();
    for ps in batch {
        let pad = l - ps.len();
        let ids: Vec<u32> = ps.token_ids.iter().copied().chain(std::iter::repeat_n(PAD, pad)).collect();
        let dx: Vec<f64> = ps.dx.iter().copied().chain(std::iter::repeat_n(0.0, pad)).collect();
        let dy: Vec<f64> = ps.dy.iter().copied().chain(std::iter::repeat_n(0.0, pad)).collect();
        let drop_rng = if train_mode { rng.as_deref_mut() } else { None };
        let c = forward_ids(&ids, &dx, &dy, params, cfg, drop_rng)?;
        hidden.push(c.hidden.clone());
        if train_mode {
            caches.push(c);
        }
    }
    Ok(BatchOutput {
        hidden,
        lengths: batch.iter().map(PseudoSentence::len).collect(),
        caches: train_mode.then_some(caches),
    })
}

/// Mean of the hidden rows covered by `span`.
pub fn pool_pivot(hidden: ArrayView2<'_, f64>, span: &EntitySpan) -> Result<Array1<f64>> {
    if span.is_empty() || span.end > hidden.nrows() {
        return Err(Error::Input(format!(
            "pivot span {}..{} is empty or outside {} rows",
            span.start,
            span.end,
            hidden.nrows()
        )));
    }
    Ok(hidden
        .slice(ndarray::s![span.start..span.end, ..])
        .mean_axis(Axis(0))
        .expect("non-empty span"))
}

/// Spreads a pooled-vector gradient evenly over the span rows.
pub fn pool_pivot_backward(dpooled: &Array1<f64>, span: &EntitySpan, dhidden: &mut Array2<f64>) {
    let w = 1.0 / span.len() as f64;
    for t in span.start..span.end {
        dhidden.row_mut(t).scaled_add(w, dpooled);
    }
}

/// Back-propagates `dhidden` (same shape as `cache.hidden`) into `grads`.
pub fn backward(
    params: &ModelParams,
    cfg: &EncoderConfig,
    cache: &SequenceCache,
    dhidden: &Array2<f64>,
    grads: &mut ModelParams,
) {
    assert_eq!(dhidden.dim(), cache.hidden.dim(), "gradient shape mismatch");
    let mut d = dhidden.clone();
    for (i, lc) in cache.layers.iter().enumerate().rev() {
        d = layer_backward(&params.layers[i], lc, &d, cfg.heads, &mut grads.layers[i]);
    }
    for (t, row) in d.rows().into_iter().enumerate() {
        if cache.ids[t] == PAD {
            continue;
        }
        grads.tok_emb.row_mut(cache.ids[t] as usize).scaled_add(1.0, &row);
        grads.pos_emb.row_mut(t).scaled_add(1.0, &row);
    }
}

/// Vocabulary logits `[n × V]` for hidden rows `[n × M]`.
pub fn mlm_logits(params: &ModelParams, h: &Array2<f64>) -> Array2<f64> {
    let logits = match &params.mlm_w {
        Some(w) => h.dot(w),
        None => h.dot(&params.tok_emb.t()),
    };
    logits + &params.mlm_bias
}

/// Returns d(hidden rows); accumulates output-projection gradients.
pub fn mlm_backward(params: &ModelParams, h: &Array2<f64>, dlogits: &Array2<f64>, grads: &mut ModelParams) -> Array2<f64> {
    grads.mlm_bias += &dlogits.sum_axis(Axis(0));
    match (&params.mlm_w, &mut grads.mlm_w) {
        (Some(w), Some(gw)) => {
            *gw += &h.t().dot(dlogits);
            dlogits.dot(&w.t())
        }
        _ => {
            grads.tok_emb += &dlogits.t().dot(h);
            dlogits.dot(&params.tok_emb)
        }
    }
}

pub fn typing_logits(params: &ModelParams, pooled: &Array1<f64>) -> Result<Array1<f64>> {
    match (&params.typing_w, &params.typing_b) {
        (Some(w), Some(b)) => Ok(pooled.dot(w) + b),
        _ => Err(Error::Config("model has no typing head".into())),
    }
}

pub fn typing_backward(params: &ModelParams, pooled: &Array1<f64>, dlogits: &Array1<f64>, grads: &mut ModelParams) -> Array1<f64> {
    let w = params.typing_w.as_ref().expect("typing head");
    let gw = grads.typing_w.as_mut().expect("typing head grads");
    let gb = grads.typing_b.as_mut().expect("typing head grads");
    let outer = pooled
        .view()
        .insert_axis(Axis(1))
        .dot(&dlogits.view().insert_axis(Axis(0)));
    *gw += &outer;
    *gb += dlogits;
    w.dot(dlogits)
}

/// Pooled pivot embedding of each sentence, in inference mode.
pub fn embed_pivots(sentences: &[PseudoSentence], params: &ModelParams, cfg: &EncoderConfig) -> Result<Vec<Array1<f64>>> {
    use rayon::prelude::*;
    sentences
        .par_iter()
        .map(|ps| {
            let c = forward_ids::<rand_chacha::ChaCha8Rng>(&ps.token_ids, &ps.dx, &ps.dy, params, cfg, None)?;
            pool_pivot(c.hidden.view(), ps.pivot_span())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearizer::vocab::{CLS, SEP};
    use proptest::prelude::*;

    fn tiny_cfg() -> EncoderConfig {
        EncoderConfig {
            vocab_size: 20,
            hidden: 8,
            layers: 2,
            heads: 2,
            ffn: 16,
            max_seq_len: 16,
            dropout: 0.0,
            ..Default::default()
        }
    }

    fn sentence() -> PseudoSentence {
        PseudoSentence {
            token_ids: vec![CLS, 7, 8, SEP, 9, SEP],
            dx: vec![20.0, 0.0, 0.0, 20.0, 3.5, 20.0],
            dy: vec![20.0, 0.0, 0.0, 20.0, -1.25, 20.0],
            entity_spans: vec![
                EntitySpan { start: 1, end: 3, entity_id: "p".into() },
                EntitySpan { start: 4, end: 5, entity_id: "n".into() },
            ],
            pivot_span_index: 0,
            label: None,
        }
    }

    #[test]
    fn sinusoid_values() {
        assert_eq!(spatial_coord_embedding(0.0, 4, 10_000.0).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        let e = spatial_coord_embedding(1.0, 2, 10_000.0);
        assert!((e[0] - 0.841_471).abs() < 1e-6 && (e[1] - 0.540_302).abs() < 1e-6);
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig { hidden: 7, ..tiny_cfg() }.validate().is_err());
        assert!(EncoderConfig { heads: 3, ..tiny_cfg() }.validate().is_err());
        assert!(tiny_cfg().validate().is_ok());
    }

    #[test]
    fn embed_is_additive() {
        let cfg = tiny_cfg();
        let mut p = ModelParams::init(&cfg, 1);
        p.tok_emb.fill(0.0);
        p.pos_emb.fill(0.0);
        let ps = sentence();
        let x = embed(&ps, &p, &cfg).unwrap();
        for t in 0..ps.len() {
            let want = spatial_coord_embedding(ps.dx[t], 8, 1e4) + spatial_coord_embedding(ps.dy[t], 8, 1e4);
            assert_eq!(x.row(t), want);
        }
        // same entity: spatial parts identical
        let p2 = ModelParams::init(&cfg, 1);
        let x = embed(&ps, &p2, &cfg).unwrap();
        let spatial = |t: usize| &x.row(t) - &p2.tok_emb.row(ps.token_ids[t] as usize) - p2.pos_emb.row(t);
        assert!((&spatial(1) - &spatial(2)).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn separator_spatial_terms() {
        let cfg = tiny_cfg();
        let mut p = ModelParams::init(&cfg, 1);
        p.tok_emb.fill(0.0);
        p.pos_emb.fill(0.0);
        let x = embed(&sentence(), &p, &cfg).unwrap();
        let want = spatial_coord_embedding(20.0, 8, 1e4) * 2.0;
        for t in [0, 3, 5] {
            assert!((&x.row(t) - &want).iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn ablated_embedding_ignores_offsets() {
        let cfg = EncoderConfig { spatial_embedding: false, ..tiny_cfg() };
        let p = ModelParams::init(&cfg, 1);
        let a = sentence();
        let mut b = a.clone();
        b.dx.iter_mut().for_each(|v| *v = 0.0);
        b.dy.iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(embed(&a, &p, &cfg).unwrap(), embed(&b, &p, &cfg).unwrap());
    }

    #[test]
    fn out_of_range_id_is_corrupt_input() {
        let cfg = tiny_cfg();
        let p = ModelParams::init(&cfg, 1);
        let mut ps = sentence();
        ps.token_ids[1] = 99;
        assert!(matches!(embed(&ps, &p, &cfg), Err(Error::CorruptInput(_))));
    }

    #[test]
    fn zero_layers_is_identity() {
        let cfg = EncoderConfig { layers: 0, ..tiny_cfg() };
        let p = ModelParams::init(&cfg, 3);
        let ps = sentence();
        let out = forward::<rand_chacha::ChaCha8Rng>(std::slice::from_ref(&ps), &p, &cfg, false, None).unwrap();
        assert_eq!(out.hidden[0], embed(&ps, &p, &cfg).unwrap());
    }

    #[test]
    fn padding_and_batch_order_do_not_leak() {
        let cfg = tiny_cfg();
        let p = ModelParams::init(&cfg, 5);
        let short = sentence();
        let mut long = sentence();
        long.token_ids.extend([10, 11, SEP]);
        long.dx.extend([1.0, 1.0, 20.0]);
        long.dy.extend([2.0, 2.0, 20.0]);
        let alone = forward::<rand_chacha::ChaCha8Rng>(std::slice::from_ref(&short), &p, &cfg, false, None).unwrap();
        let batched = forward::<rand_chacha::ChaCha8Rng>(&[short.clone(), long.clone()], &p, &cfg, false, None).unwrap();
        assert_eq!(batched.hidden[0].nrows(), long.len());
        for t in 0..short.len() {
            for j in 0..cfg.hidden {
                assert!((alone.hidden[0][[t, j]] - batched.hidden[0][[t, j]]).abs() < 1e-6);
            }
        }
        let swapped = forward::<rand_chacha::ChaCha8Rng>(&[long, short], &p, &cfg, false, None).unwrap();
        assert_eq!(swapped.hidden[1], batched.hidden[0]);
        assert_eq!(swapped.hidden[0], batched.hidden[1]);
    }

    #[test]
    fn inference_is_deterministic() {
        let cfg = EncoderConfig { dropout: 0.1, ..tiny_cfg() };
        let p = ModelParams::init(&cfg, 9);
        let a = forward::<rand_chacha::ChaCha8Rng>(&[sentence()], &p, &cfg, false, None).unwrap();
        let b = forward::<rand_chacha::ChaCha8Rng>(&[sentence()], &p, &cfg, false, None).unwrap();
        assert_eq!(a.hidden, b.hidden);
    }

    #[test]
    fn non_finite_activation_reports_layer() {
        let cfg = tiny_cfg();
        let mut p = ModelParams::init(&cfg, 1);
        p.layers[1].w1[[0, 0]] = f64::NAN;
        match forward::<rand_chacha::ChaCha8Rng>(&[sentence()], &p, &cfg, false, None) {
            Err(Error::Numeric { layer, .. }) => assert_eq!(layer, 2),
            other => panic!("expected numeric failure, got {other:?}"),
        }
    }

    #[test]
    fn pooling() {
        let h = Array2::from_shape_vec((3, 4), vec![1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0, 0.0, 9.0, 9.0, 9.0, 9.0]).unwrap();
        let one = EntitySpan { start: 2, end: 3, entity_id: "x".into() };
        assert_eq!(pool_pivot(h.view(), &one).unwrap().to_vec(), vec![9.0; 4]);
        let two = EntitySpan { start: 0, end: 2, entity_id: "x".into() };
        assert_eq!(pool_pivot(h.view(), &two).unwrap().to_vec(), vec![2.0, 2.0, 2.0, 2.0]);
        let empty = EntitySpan { start: 1, end: 1, entity_id: "x".into() };
        assert!(pool_pivot(h.view(), &empty).is_err());

        let mut d = Array2::zeros((3, 4));
        pool_pivot_backward(&Array1::from_elem(4, 1.0), &two, &mut d);
        assert_eq!(d.row(0).to_vec(), vec![0.5; 4]);
        assert_eq!(d.row(2).to_vec(), vec![0.0; 4]);
    }

    #[test]
    fn zero_loss_gives_zero_gradients() {
        let cfg = tiny_cfg();
        let p = ModelParams::init(&cfg, 2);
        let ps = sentence();
        let c = forward_ids::<rand_chacha::ChaCha8Rng>(&ps.token_ids, &ps.dx, &ps.dy, &p, &cfg, None).unwrap();
        let mut g = p.zeros_like();
        backward(&p, &cfg, &c, &Array2::zeros(c.hidden.raw_dim()), &mut g);
        assert!(g.tensors().iter().all(|(_, t)| t.iter().all(|v| *v == 0.0)));
    }

    proptest! {
        #[test]
        fn sinusoid_parity(d in -1e3..1e3f64) {
            let pos = spatial_coord_embedding(d, 16, 1e4);
            let neg = spatial_coord_embedding(-d, 16, 1e4);
            for j in 0..8 {
                prop_assert!((neg[2 * j] + pos[2 * j]).abs() <= 1e-12);
                prop_assert!((neg[2 * j + 1] - pos[2 * j + 1]).abs() <= 1e-12);
            }
        }
    }
}
