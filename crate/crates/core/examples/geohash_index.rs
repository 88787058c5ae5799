//! Encode a point, inspect its cell, and query a spatial index.
//!
//! cargo run --example geohash_index

use geoctx::corpus::{generate_typing_world, SyntheticWorldSpec};
use geoctx::geo::euclidean_distance;
use geoctx::spatial_index::{geohash_encode, nine_grid, CellScheme, SpatialIndex};

fn main() -> geoctx::Result<()> {
    let (lat, lon) = (44.0508, -94.4183);
    let code = geohash_encode(lat, lon, 12)?;
    println!("geohash({lat}, {lon}) = {code}");
    for len in [5, 7, 9] {
        let cell = code.prefix(len);
        let b = cell.bounds();
        println!("  {:<9} {:.6} x {:.6} deg, contains point: {}", cell.as_str(), b.width(), b.height(), b.contains(lat, lon));
    }
    let ring: Vec<String> = nine_grid(&code.prefix(6)).iter().map(|c| c.as_str().to_string()).collect();
    println!("nine-grid around {}: {}", code.prefix(6), ring.join(" "));

    let world = generate_typing_world(&SyntheticWorldSpec { n_entities: 200, ..Default::default() })?;
    let radius = 0.0015;
    for scheme in [CellScheme::geohash_for_radius(radius), CellScheme::grid_for_radius(radius)] {
        let index = SpatialIndex::build(&world, scheme)?;
        let pivot = &world[0];
        let near = index.query_radius(pivot, radius)?;
        let knn = index.query_knn(pivot, 3)?;
        println!("\n{scheme:?}: {} buckets", index.bucket_count());
        println!("  within {radius} of {:?}: {} entities", pivot.name, near.len());
        for e in knn {
            println!("  knn  {:<8} {:<28} d={:.5}", e.id, e.name, euclidean_distance(e.loc, pivot.loc)?);
        }
    }
    Ok(())
}
