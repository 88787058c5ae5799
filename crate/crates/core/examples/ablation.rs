//! Context-length and spatial-embedding ablations.
//!
//! cargo run --release --example ablation

use geoctx::corpus::{class_names, generate_linking_pair, generate_typing_world, SyntheticWorldSpec};
use geoctx::encoder::{EncoderConfig, ModelParams};
use geoctx::linearizer::{build_sentences, train_vocab, ContextRule, LinearizerConfig};
use geoctx::pretrain::{train, TrainConfig};
use geoctx::spatial_index::{CellScheme, SpatialIndex};
use geoctx::tasks::{length_ablation, spatial_embedding_ablation, split_indices, FinetuneConfig, LinkingConfig};

fn main() -> geoctx::Result<()> {
    let lin = LinearizerConfig { max_seq_len: 64, ..Default::default() };

    let spec = SyntheticWorldSpec::default();
    let world = generate_typing_world(&spec)?;
    let names: Vec<&str> = world.iter().map(|e| e.name.as_str()).collect();
    let vocab = train_vocab(&names, 400)?;
    let enc = EncoderConfig { vocab_size: vocab.len(), max_seq_len: 64, ..Default::default() };
    let index = SpatialIndex::build(&world, CellScheme::geohash_for_radius(0.0015))?;
    let corpus = build_sentences(&index, ContextRule::Radius(0.0015), &vocab, &lin, None)?;
    let mut init = ModelParams::init(&enc, 0);
    train(&mut init, &enc, &corpus, &TrainConfig::default(), &mut |_, _| Ok(()))?;
    let split = split_indices(world.len(), 0.8, 0)?;
    let rows = length_ablation(
        &world,
        &class_names(spec.n_classes),
        ContextRule::Radius(0.0015),
        &[0, 1, 2, 4, 8],
        &split,
        &init,
        &enc,
        &vocab,
        &lin,
        &FinetuneConfig::default(),
    )?;
    println!("neighbors  micro-F1");
    for r in &rows {
        println!("{:>9}  {:.3}", r.neighbors, r.micro_f1);
    }

    let pair = generate_linking_pair(&SyntheticWorldSpec { n_entities: 80, distractors: 3, jitter: 0.00003, ..Default::default() })?;
    let names: Vec<&str> = pair.candidates.iter().map(|e| e.name.as_str()).collect();
    let vocab = train_vocab(&names, 400)?;
    let enc = EncoderConfig { vocab_size: vocab.len(), max_seq_len: 64, ..Default::default() };
    let index = SpatialIndex::build(&pair.candidates, CellScheme::geohash_for_radius(0.0015))?;
    let corpus = build_sentences(&index, ContextRule::Radius(0.0015), &vocab, &lin, None)?;
    let (ab, _, _) = spatial_embedding_ablation(
        &pair,
        &corpus,
        0,
        &enc,
        &TrainConfig { steps: 60, ..Default::default() },
        &vocab,
        &lin,
        &LinkingConfig::default(),
    )?;
    println!("\nlinking MRR with spatial embeddings {:.3}, without {:.3}", ab.with_spatial.mrr, ab.without_spatial.mrr);
    Ok(())
}
