//! Link pixel-space queries to map candidates by embedding similarity.
//!
//! cargo run --release --example linking

use geoctx::corpus::{generate_linking_pair, SyntheticWorldSpec};
use geoctx::encoder::{EncoderConfig, ModelParams};
use geoctx::linearizer::{train_vocab, LinearizerConfig};
use geoctx::tasks::{link_pair, LinkingConfig};

fn main() -> geoctx::Result<()> {
    let pair = generate_linking_pair(&SyntheticWorldSpec { n_entities: 80, distractors: 3, ..Default::default() })?;
    println!("{} queries, {} candidates, pixel scale {}", pair.queries.len(), pair.candidates.len(), pair.pixel_scale);
    let names: Vec<&str> = pair.candidates.iter().map(|e| e.name.as_str()).collect();
    let vocab = train_vocab(&names, 400)?;
    let enc = EncoderConfig { vocab_size: vocab.len(), max_seq_len: 64, ..Default::default() };
    let lin = LinearizerConfig { max_seq_len: 64, ..Default::default() };

    // even an untrained encoder separates same-name candidates by their neighborhoods
    let params = ModelParams::init(&enc, 0);
    let out = link_pair(&pair, &params, &enc, &vocab, &lin, &LinkingConfig::default())?;
    println!("MRR {:.3}", out.metrics.mrr);
    for (k, r) in &out.metrics.recall {
        println!("R@{k:<2} {r:.3}");
    }
    for row in out.rows.iter().take(3) {
        println!("{} -> truth {} at rank {}, top {:?}", row.query, row.truth, row.rank, &row.top[..3.min(row.top.len())]);
    }
    Ok(())
}
