use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adamw::{adamw_step, AdamWConfig, OptimizerState};
use super::loss::masked_batch_loss;
use super::masking::{mask_mep, mask_mlm, MaskedInstance, MaskingConfig, Objective};
use crate::encoder::{EncoderConfig, ModelParams};
use crate::error::{Error, Result};
use crate::linearizer::PseudoSentence;

/// Which objectives the trainer draws batches for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveMix {
    /// Alternate MLM and MEP batches.
    Both,
    Mlm,
    Mep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub objectives: ObjectiveMix,
    pub masking: MaskingConfig,
    pub optimizer: AdamWConfig,
    /// Save a checkpoint every this many steps; 0 saves only at the end.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 300,
            batch_size: 12,
            seed: 0,
            objectives: ObjectiveMix::Both,
            masking: MaskingConfig::default(),
            optimizer: AdamWConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn objective_for(&self, step: usize) -> Objective {
        match self.objectives {
            ObjectiveMix::Mlm => Objective::Mlm,
            ObjectiveMix::Mep => Objective::Mep,
            ObjectiveMix::Both if step.is_multiple_of(2) => Objective::Mlm,
            ObjectiveMix::Both => Objective::Mep,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub objective: Objective,
    pub loss: f64,
    pub n_targets: usize,
    pub n_correct: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainSummary {
    pub log: Vec<StepRecord>,
    /// Sentences with nothing maskable under MLM.
    pub skipped_mlm: usize,
    /// Sentences with fewer than two entities, drawn for MEP.
    pub skipped_mep: usize,
    /// MLM draws that happened to mask nothing.
    pub empty_mlm: usize,
    pub checkpoints: Vec<usize>,
}

/// Endless seeded walk over the corpus, reshuffled every epoch.
struct Stream {
    order: Vec<usize>,
    pos: usize,
}

impl Stream {
    fn next(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

pub fn mask_one<R: rand::Rng + ?Sized>(
    ps: &PseudoSentence,
    objective: Objective,
    cfg: &MaskingConfig,
    vocab_size: usize,
    rng: &mut R,
) -> Result<Option<MaskedInstance>> {
    match objective {
        Objective::Mlm => mask_mlm(ps, cfg, vocab_size, rng),
        Objective::Mep => mask_mep(ps, cfg, vocab_size, rng),
    }
}

/// Masks every sentence once with a fixed seed, dropping skips and MLM draws
/// that masked nothing. Used for held-out loss measurements.
pub fn mask_corpus(
    sentences: &[PseudoSentence],
    objective: Objective,
    cfg: &MaskingConfig,
    vocab_size: usize,
    seed: u64,
) -> Result<Vec<MaskedInstance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for ps in sentences {
        if let Some(m) = mask_one(ps, objective, cfg, vocab_size, &mut rng)? {
            if !m.positions.is_empty() {
                out.push(m);
            }
        }
    }
    Ok(out)
}

/// Runs `cfg.steps` optimizer steps on `params`.
///
/// `on_checkpoint(step, params)` is called every `checkpoint_every` steps and
/// after the last one. A non-finite loss aborts before the update, so the
/// last saved checkpoint stays valid.
pub fn train(
    params: &mut ModelParams,
    enc: &EncoderConfig,
    sentences: &[PseudoSentence],
    cfg: &TrainConfig,
    on_checkpoint: &mut dyn FnMut(usize, &ModelParams) -> Result<()>,
) -> Result<TrainSummary> {
    if sentences.is_empty() {
        return Err(Error::Input("pretraining corpus is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    order.shuffle(&mut rng);
    let mut stream = Stream { order, pos: 0 };
    let mut opt = OptimizerState::new(params, cfg.optimizer);
    let mut summary = TrainSummary::default();

    for step in 0..cfg.steps {
        let objective = cfg.objective_for(step);
        let mut batch = Vec::with_capacity(cfg.batch_size);
        let mut misses = 0;
        while batch.len() < cfg.batch_size {
            let ps = &sentences[stream.next(&mut rng)];
            match mask_one(ps, objective, &cfg.masking, enc.vocab_size, &mut rng)? {
                None => {
                    misses += 1;
                    match objective {
                        Objective::Mlm => summary.skipped_mlm += 1,
                        Objective::Mep => summary.skipped_mep += 1,
                    }
                }
                Some(m) if m.positions.is_empty() => {
                    misses += 1;
                    summary.empty_mlm += 1;
                }
                Some(m) => {
                    misses = 0;
                    batch.push(m);
                }
            }
            if misses > 4 * sentences.len() + 100 {
                return Err(Error::Input(format!(
                    "no sentence in the corpus yields a {} instance",
                    objective.as_str()
                )));
            }
        }
        let seeds: Vec<u64> = (0..batch.len()).map(|_| rng.next_u64()).collect();
        let bl = masked_batch_loss(params, enc, &batch, Some(&seeds), true)?;
        if !bl.loss.is_finite() {
            return Err(Error::Numeric {
                layer: enc.layers,
                detail: format!("non-finite loss at step {step}"),
            });
        }
        let grads = bl.grads.expect("gradients requested");
        adamw_step(params, &grads, &mut opt)?;
        params.round_to_f32();
        summary.log.push(StepRecord {
            step,
            objective,
            loss: bl.loss,
            n_targets: bl.n_targets,
            n_correct: bl.n_correct,
        });
        let done = step + 1;
        if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) || done == cfg.steps {
            on_checkpoint(done, params)?;
            summary.checkpoints.push(done);
        }
    }
    Ok(summary)
}

/// `step,objective,loss` rows.
pub fn loss_log_csv(log: &[StepRecord]) -> String {
    let mut s = String::from("step,objective,loss\n");
    for r in log {
        let _ = writeln!(s, "{},{},{}", r.step, r.objective.as_str(), r.loss);
    }
    s
}

pub fn write_loss_log(path: &Path, log: &[StepRecord]) -> Result<()> {
    std::fs::write(path, loss_log_csv(log)).map_err(|e| Error::io(path, e))
}
