//! Reference implementations that share no code with the library.

use geoctx::{GeoEntity, Location};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALPHABET: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";

/// `x` as `m * 2^-s` with integer `m` and `s >= 0`.
fn dyadic(x: f64) -> (i128, u32) {
    if x == 0.0 {
        return (0, 0);
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { -1 } else { 1 };
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = (bits & ((1u64 << 52) - 1)) as i128;
    let (mant, e) = if exp == 0 { (frac, -1074) } else { (frac | (1 << 52), exp - 1075) };
    if e >= 0 {
        (sign * (mant << e), 0)
    } else {
        (sign * mant, (-e) as u32)
    }
}

/// `floor((x - lo) / (hi - lo) * 2^bits)` computed exactly, clamped.
fn bin_index(x: f64, lo: i128, span: i128, bits: u32) -> u128 {
    let (m, s) = dyadic(x);
    assert!(s + bits < 120, "coordinate too fine for the oracle");
    let num = (m - (lo << s)) << bits;
    let den = span << s;
    let idx = num.div_euclid(den);
    idx.clamp(0, (1i128 << bits) - 1) as u128
}

/// Geohash by exact integer quantization and bit interleaving, longitude first.
pub fn geohash_oracle(lat: f64, lon: f64, len: usize) -> String {
    let total = 5 * len as u32;
    let lon_bits = total.div_ceil(2);
    let lat_bits = total / 2;
    let xi = bin_index(lon, -180, 360, lon_bits);
    let yi = bin_index(lat, -90, 180, lat_bits);
    let mut out = String::new();
    let (mut xb, mut yb) = (lon_bits, lat_bits);
    let mut acc = 0usize;
    for k in 0..total {
        let bit = if k % 2 == 0 {
            xb -= 1;
            (xi >> xb) & 1
        } else {
            yb -= 1;
            (yi >> yb) & 1
        };
        acc = (acc << 1) | bit as usize;
        if k % 5 == 4 {
            out.push(ALPHABET[acc] as char);
            acc = 0;
        }
    }
    out
}

/// (min_lat, max_lat, min_lon, max_lon) of a geohash, by reverse interleaving.
pub fn geohash_bounds_oracle(code: &str) -> (f64, f64, f64, f64) {
    let (mut lat, mut lon) = ((-90.0, 90.0), (-180.0, 180.0));
    let mut even = true;
    for c in code.bytes() {
        let v = ALPHABET.iter().position(|&a| a == c).expect("geohash char");
        for b in (0..5).rev() {
            let r = if even { &mut lon } else { &mut lat };
            let mid = (r.0 + r.1) / 2.0;
            if (v >> b) & 1 == 1 {
                r.0 = mid;
            } else {
                r.1 = mid;
            }
            even = !even;
        }
    }
    (lat.0, lat.1, lon.0, lon.1)
}

fn d(a: &GeoEntity, b: &GeoEntity) -> f64 {
    ((a.loc.x - b.loc.x).powi(2) + (a.loc.y - b.loc.y).powi(2)).sqrt()
}

fn sorted_scan<'a>(all: &'a [GeoEntity], pivot: &GeoEntity) -> Vec<(f64, &'a str)> {
    let mut v: Vec<(f64, &str)> = all
        .iter()
        .filter(|e| e.id != pivot.id)
        .map(|e| (d(pivot, e), e.id.as_str()))
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
    v
}

/// Ids strictly within `r` of the pivot, nearest first, ties by id.
pub fn scan_radius(all: &[GeoEntity], pivot: &GeoEntity, r: f64) -> Vec<String> {
    sorted_scan(all, pivot)
        .into_iter()
        .take_while(|(dist, _)| *dist < r)
        .map(|(_, id)| id.to_string())
        .collect()
}

pub fn scan_knn(all: &[GeoEntity], pivot: &GeoEntity, k: usize) -> Vec<String> {
    sorted_scan(all, pivot).into_iter().take(k).map(|(_, id)| id.to_string()).collect()
}

/// Up to `n` entities with unique ids in a small lon/lat box; about 5% share
/// a location with an earlier entity.
pub fn random_world(seed: u64, n: usize) -> Vec<GeoEntity> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<GeoEntity> = Vec::with_capacity(n);
    for i in 0..n {
        // some entities share a location so distance ties occur
        let loc = if i > 0 && rng.random::<f64>() < 0.05 {
            out[rng.random_range(0..i)].loc
        } else {
            Location { x: rng.random_range(-93.31..-93.25), y: rng.random_range(44.89..44.95) }
        };
        out.push(GeoEntity::new(format!("e{:05}", rng.random_range(0..100_000) * 10 + i % 10), format!("n{i}"), loc));
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out.dedup_by(|a, b| a.id == b.id);
    out
}
