//! Central finite differences against the analytic backward pass.

use geoctx::encoder::{EncoderConfig, ModelParams};
use geoctx::linearizer::vocab::{CLS, MASK, PAD, SEP};
use geoctx::linearizer::{EntitySpan, PseudoSentence};
use geoctx::pretrain::{masked_batch_loss, typing_batch_loss, MaskedInstance, Objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-4;
/// Denominator floor for the relative error of near-zero gradients.
pub const FLOOR: f64 = 1e-6;

pub struct Fixture {
    pub cfg: EncoderConfig,
    pub params: ModelParams,
    pub masked: Vec<MaskedInstance>,
    pub typed: Vec<PseudoSentence>,
    pub dropout: Option<Vec<u64>>,
}

fn random_sentence(rng: &mut ChaCha8Rng, vocab: u32, n_entities: usize) -> PseudoSentence {
    let mut ids = vec![CLS];
    let mut dx = vec![20.0];
    let mut dy = vec![20.0];
    let mut spans = Vec::new();
    for e in 0..n_entities {
        let len = rng.random_range(1..=3);
        let (ox, oy) = if e == 0 {
            (0.0, 0.0)
        } else {
            (rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0))
        };
        let start = ids.len();
        for _ in 0..len {
            ids.push(rng.random_range(5..vocab));
            dx.push(ox);
            dy.push(oy);
        }
        spans.push(EntitySpan { start, end: ids.len(), entity_id: format!("e{e}") });
        ids.push(SEP);
        dx.push(20.0);
        dy.push(20.0);
    }
    PseudoSentence { token_ids: ids, dx, dy, entity_spans: spans, pivot_span_index: 0, label: None }
}

/// A 2-layer, 16-wide, 64-token model with both heads. Odd seeds untie the
/// output projection and switch dropout on with fixed per-instance seeds.
pub fn fixture(seed: u64) -> Fixture {
    let odd = seed % 2 == 1;
    let cfg = EncoderConfig {
        vocab_size: 64,
        hidden: 16,
        layers: 2,
        heads: 2,
        ffn: 32,
        max_seq_len: 16,
        dropout: if odd { 0.1 } else { 0.0 },
        tie_mlm_head: !odd,
        n_classes: 3,
        ..Default::default()
    };
    let params = ModelParams::init(&cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let mut masked = Vec::new();
    for k in 0..3 {
        let ps = random_sentence(&mut rng, 64, 2 + k % 2);
        let mut input_ids = ps.token_ids.clone();
        let positions: Vec<usize> = vec![1, ps.entity_spans[1].start];
        let targets = positions.iter().map(|&p| ps.token_ids[p]).collect();
        for &p in &positions {
            input_ids[p] = MASK;
        }
        let (mut dx, mut dy) = (ps.dx.clone(), ps.dy.clone());
        // one instance carries padding that must stay invisible
        if k == 2 {
            input_ids.extend([PAD, PAD]);
            dx.extend([0.0, 0.0]);
            dy.extend([0.0, 0.0]);
        }
        masked.push(MaskedInstance {
            input_ids,
            dx,
            dy,
            positions,
            targets,
            objective: Objective::Mlm,
            masked_spans: vec![],
        });
    }
    let typed = (0..3)
        .map(|k| {
            let mut ps = random_sentence(&mut rng, 64, 2 + k % 2);
            ps.label = Some(k % 3);
            ps
        })
        .collect();
    let dropout = odd.then(|| (0..3).map(|i| 77 * seed + i).collect());
    Fixture { cfg, params, masked, typed, dropout }
}

pub fn total_loss(f: &Fixture, p: &ModelParams) -> f64 {
    let d = f.dropout.as_deref();
    masked_batch_loss(p, &f.cfg, &f.masked, d, false).unwrap().loss
        + typing_batch_loss(p, &f.cfg, &f.typed, d, false).unwrap().loss
}

pub struct GradReport {
    pub max_rel: f64,
    pub worst: String,
    pub checked: usize,
}

/// Checks every scalar parameter. Relative error is
/// `|a - n| / max(|a|, |n|, FLOOR)`.
pub fn check(seed: u64) -> GradReport {
    let f = fixture(seed);
    let d = f.dropout.as_deref();
    let mut grads = masked_batch_loss(&f.params, &f.cfg, &f.masked, d, true).unwrap().grads.unwrap();
    grads.add_assign(&typing_batch_loss(&f.params, &f.cfg, &f.typed, d, true).unwrap().grads.unwrap());

    let analytic: Vec<(String, Vec<f64>)> =
        grads.tensors().into_iter().map(|(n, t)| (n, t.iter().copied().collect())).collect();
    let mut p = f.params.clone();
    let mut report = GradReport { max_rel: 0.0, worst: String::new(), checked: 0 };
    for (ti, (name, a)) in analytic.iter().enumerate() {
        for (i, &ag) in a.iter().enumerate() {
            let orig = f.params.tensors()[ti].1.iter().nth(i).copied().unwrap();
            set(&mut p, ti, i, orig + EPS);
            let up = total_loss(&f, &p);
            set(&mut p, ti, i, orig - EPS);
            let down = total_loss(&f, &p);
            set(&mut p, ti, i, orig);
            let num = (up - down) / (2.0 * EPS);
            let rel = (ag - num).abs() / ag.abs().max(num.abs()).max(FLOOR);
            if rel > report.max_rel {
                report.max_rel = rel;
                report.worst = format!("{name}[{i}] analytic {ag:e} numeric {num:e}");
            }
            report.checked += 1;
        }
    }
    report
}

fn set(p: &mut ModelParams, ti: usize, i: usize, v: f64) {
    let mut ts = p.tensors_mut();
    *ts[ti].1.iter_mut().nth(i).unwrap() = v;
}
