//! Build a vocabulary and turn neighborhoods into pseudo-sentences.
//!
//! cargo run --example linearize

use geoctx::corpus::{generate_typing_world, SyntheticWorldSpec};
use geoctx::linearizer::{build_sentences, tokenize, train_vocab, ContextRule, LinearizerConfig};
use geoctx::spatial_index::{CellScheme, SpatialIndex};

fn main() -> geoctx::Result<()> {
    let world = generate_typing_world(&SyntheticWorldSpec { n_entities: 120, ..Default::default() })?;
    let names: Vec<&str> = world.iter().map(|e| e.name.as_str()).collect();
    let vocab = train_vocab(&names, 300)?;
    println!("vocab: {} tokens, hash {}", vocab.len(), &vocab.hash()[..12]);
    let ids = tokenize(&world[3].name, &vocab);
    let pieces: Vec<&str> = ids.iter().map(|&i| vocab.token(i).unwrap_or("?")).collect();
    println!("{:?} -> {:?}", world[3].name, pieces);

    let index = SpatialIndex::build(&world, CellScheme::geohash_for_radius(0.0015))?;
    let cfg = LinearizerConfig { max_seq_len: 48, ..Default::default() };
    for rule in [ContextRule::Radius(0.0015), ContextRule::Knn(3)] {
        let sentences = build_sentences(&index, rule, &vocab, &cfg, None)?;
        let s = &sentences[0];
        println!("\n{rule:?}: {} sentences, first has {} tokens and {} entities", sentences.len(), s.len(), s.entity_spans.len());
        println!("  {}", s.render(&vocab));
        // per-token offsets from the pivot, in units of z
        let offsets: Vec<String> = s.dx.iter().zip(&s.dy).take(8).map(|(x, y)| format!("({x:.1},{y:.1})")).collect();
        println!("  offsets {}", offsets.join(" "));
    }
    Ok(())
}
