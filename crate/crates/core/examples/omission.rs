//! How linking degrades as neighbors go missing.
//!
//! cargo run --release --example omission

use geoctx::corpus::{generate_linking_pair, SyntheticWorldSpec};
use geoctx::encoder::{EncoderConfig, ModelParams};
use geoctx::linearizer::{train_vocab, LinearizerConfig};
use geoctx::tasks::{omission_experiment, OmissionConfig};

fn main() -> geoctx::Result<()> {
    let world = generate_linking_pair(&SyntheticWorldSpec { n_entities: 80, distractors: 3, ..Default::default() })?.candidates;
    let names: Vec<&str> = world.iter().map(|e| e.name.as_str()).collect();
    let vocab = train_vocab(&names, 400)?;
    let enc = EncoderConfig { vocab_size: vocab.len(), max_seq_len: 64, ..Default::default() };
    let lin = LinearizerConfig { max_seq_len: 64, ..Default::default() };
    let params = ModelParams::init(&enc, 0);

    let curve = omission_experiment(&world, &params, &enc, &vocab, &lin, &OmissionConfig::default())?;
    println!("{}", curve.metric);
    for (rate, m) in curve.rates.iter().zip(&curve.points) {
        println!("omit {rate:.1}  MRR {:.3}  {}", m.mrr, "#".repeat((m.mrr * 40.0) as usize));
    }
    println!("elbow: {:?}", curve.elbow);
    Ok(())
}
