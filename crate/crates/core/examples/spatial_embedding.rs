//! The sinusoidal coordinate embedding.
//!
//! cargo run --example spatial_embedding

use geoctx::encoder::spatial_coord_embedding;

fn main() {
    let (m, base) = (16, 10_000.0);
    for d in [0.0, 1.0, -1.0, 20.0] {
        let e = spatial_coord_embedding(d, m, base);
        let head: Vec<String> = e.iter().take(6).map(|v| format!("{v:+.4}")).collect();
        println!("E({d:>5}) = [{} ...]", head.join(", "));
    }
    // nearby distances give nearby vectors
    let a = spatial_coord_embedding(3.0, m, base);
    for step in [0.01, 0.1, 1.0, 10.0] {
        let b = spatial_coord_embedding(3.0 + step, m, base);
        let gap = (&a - &b).mapv(|v| v * v).sum().sqrt();
        println!("|E(3) - E(3 + {step})| = {gap:.5}");
    }
}
