//! Fine-tune for entity typing and compare with a name-only baseline.
//!
//! cargo run --release --example typing

use std::collections::BTreeMap;

use geoctx::corpus::{class_names, generate_typing_world, SyntheticWorldSpec};
use geoctx::encoder::{EncoderConfig, ModelParams};
use geoctx::linearizer::{build_sentences, train_vocab, ContextRule, LinearizerConfig};
use geoctx::pretrain::{train, TrainConfig};
use geoctx::spatial_index::{CellScheme, SpatialIndex};
use geoctx::tasks::{finetune_typing, name_baseline, split_indices, FinetuneConfig};

fn main() -> geoctx::Result<()> {
    let spec = SyntheticWorldSpec::default();
    let world = generate_typing_world(&spec)?;
    let classes = class_names(spec.n_classes);
    let labels: BTreeMap<String, usize> = classes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    let names: Vec<&str> = world.iter().map(|e| e.name.as_str()).collect();
    let vocab = train_vocab(&names, 400)?;
    let index = SpatialIndex::build(&world, CellScheme::geohash_for_radius(0.0015))?;
    let lin = LinearizerConfig { max_seq_len: 64, ..Default::default() };
    let sentences = build_sentences(&index, ContextRule::Radius(0.0015), &vocab, &lin, Some(&labels))?;

    let enc = EncoderConfig { vocab_size: vocab.len(), max_seq_len: 64, ..Default::default() };
    let mut params = ModelParams::init(&enc, 0);
    train(&mut params, &enc, &sentences, &TrainConfig::default(), &mut |_, _| Ok(()))?;

    let split = split_indices(sentences.len(), 0.8, 0)?;
    let model = finetune_typing(&params, &enc, &sentences, &classes, &split, &FinetuneConfig::default())?;
    let base = name_baseline(&sentences, &classes, &split)?;
    println!("{:<16} {:>8} {:>8}", "class", "context", "name");
    for c in &classes {
        println!("{c:<16} {:>8.3} {:>8.3}", model.report.per_class[c], base.per_class[c]);
    }
    println!("{:<16} {:>8.3} {:>8.3}", "micro-F1", model.report.micro_f1, base.micro_f1);
    Ok(())
}
