//! Pretrain a small encoder with alternating MLM/MEP batches, then checkpoint it.
//!
//! cargo run --release --example pretrain

use geoctx::corpus::{generate_patch_world, SyntheticWorldSpec};
use geoctx::encoder::{checkpoint, EncoderConfig, ModelParams};
use geoctx::linearizer::{build_sentences, train_vocab, ContextRule, LinearizerConfig};
use geoctx::pretrain::{train, AdamWConfig, TrainConfig};
use geoctx::spatial_index::{CellScheme, SpatialIndex};

fn main() -> geoctx::Result<()> {
    let world = generate_patch_world(&SyntheticWorldSpec { n_entities: 48, cluster_size: 6, ..Default::default() })?;
    let names: Vec<&str> = world.iter().map(|e| e.name.as_str()).collect();
    let vocab = train_vocab(&names, 300)?;
    let index = SpatialIndex::build(&world, CellScheme::geohash_for_radius(0.0015))?;
    let lin = LinearizerConfig { max_seq_len: 64, ..Default::default() };
    let sentences = build_sentences(&index, ContextRule::Radius(0.0015), &vocab, &lin, None)?;

    let enc = EncoderConfig { vocab_size: vocab.len(), max_seq_len: 64, dropout: 0.0, ..Default::default() };
    let mut params = ModelParams::init(&enc, 1);
    println!("{} sentences, {} parameters", sentences.len(), params.num_params());
    let cfg = TrainConfig { steps: 200, optimizer: AdamWConfig { lr: 2e-3, ..Default::default() }, ..Default::default() };
    let summary = train(&mut params, &enc, &sentences, &cfg, &mut |_, _| Ok(()))?;
    for r in summary.log.iter().step_by(25) {
        println!("step {:>4} {:?} loss {:.3} acc {:.2}", r.step, r.objective, r.loss, r.n_correct as f64 / r.n_targets as f64);
    }

    let dir = std::env::temp_dir().join("geoctx-example-checkpoint");
    checkpoint::save(&dir, &params, &enc, &vocab.hash(), cfg.steps as u64)?;
    let back = checkpoint::load_for_vocab(&dir, &vocab)?;
    println!("checkpoint at {} restores step {}", dir.display(), back.step);
    Ok(())
}
