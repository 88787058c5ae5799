//! Base-32 geohash (interleaved binary subdivision, longitude bit first).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ALPHABET: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";
pub const MAX_LENGTH: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GeohashCell(String);

impl GeohashCell {
    pub fn parse(code: &str) -> Result<Self> {
        if code.is_empty() || code.len() > MAX_LENGTH {
            return Err(Error::Input(format!(
                "geohash `{code}` must have length 1..={MAX_LENGTH}"
            )));
        }
        if let Some(c) = code.bytes().find(|b| char_value(*b).is_none()) {
            return Err(Error::Input(format!(
                "geohash `{code}` contains `{}` outside the base-32 alphabet",
                c as char
            )));
        }
        Ok(GeohashCell(code.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Truncate to a coarser cell. `len` is clamped to `1..=self.len()`.
    pub fn prefix(&self, len: usize) -> GeohashCell {
        GeohashCell(self.0[..len.clamp(1, self.0.len())].to_owned())
    }

    pub fn bounds(&self) -> CellBounds {
        cell_bounds(self)
    }
}

impl fmt::Display for GeohashCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for GeohashCell {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        GeohashCell::parse(&s)
    }
}

impl From<GeohashCell> for String {
    fn from(c: GeohashCell) -> String {
        c.0
    }
}

fn char_value(b: u8) -> Option<u8> {
    ALPHABET.iter().position(|&a| a == b).map(|p| p as u8)
}

/// Latitude/longitude extent of a cell, half-open on the max side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellBounds {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl CellBounds {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        // the top/right world edges belong to the last cell
        let lat_ok = lat >= self.min_lat && (lat < self.max_lat || (self.max_lat == 90.0 && lat == 90.0));
        let lon_ok =
            lon >= self.min_lon && (lon < self.max_lon || (self.max_lon == 180.0 && lon == 180.0));
        lat_ok && lon_ok
    }

    pub fn width(&self) -> f64 {
        self.max_lon - self.min_lon
    }

    pub fn height(&self) -> f64 {
        self.max_lat - self.min_lat
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.min_lat + self.max_lat) / 2.0,
            (self.min_lon + self.max_lon) / 2.0,
        )
    }
}

/// Cell (width in degrees longitude, height in degrees latitude) at a precision.
pub fn cell_size(length: usize) -> (f64, f64) {
    let bits = 5 * length as i32;
    let lon_bits = (bits + 1) / 2;
    let lat_bits = bits / 2;
    (360.0 / 2f64.powi(lon_bits), 180.0 / 2f64.powi(lat_bits))
}

pub fn geohash_encode(lat: f64, lon: f64, length: usize) -> Result<GeohashCell> {
    if !(1..=MAX_LENGTH).contains(&length) {
        return Err(Error::Argument(format!(
            "geohash length must be in 1..={MAX_LENGTH}, got {length}"
        )));
    }
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(Error::InvalidLocation(format!(
            "lat={lat}, lon={lon} outside the geographic range"
        )));
    }
    let (mut lat_lo, mut lat_hi) = (-90.0f64, 90.0f64);
    let (mut lon_lo, mut lon_hi) = (-180.0f64, 180.0f64);
    let mut code = String::with_capacity(length);
    let mut even = true;
    for _ in 0..length {
        let mut idx = 0u8;
        for _ in 0..5 {
            idx <<= 1;
            if even {
                let mid = (lon_lo + lon_hi) / 2.0;
                if lon >= mid {
                    idx |= 1;
                    lon_lo = mid;
                } else {
                    lon_hi = mid;
                }
            } else {
                let mid = (lat_lo + lat_hi) / 2.0;
                if lat >= mid {
                    idx |= 1;
                    lat_lo = mid;
                } else {
                    lat_hi = mid;
                }
            }
            even = !even;
        }
        code.push(ALPHABET[idx as usize] as char);
    }
    Ok(GeohashCell(code))
}

pub fn cell_bounds(cell: &GeohashCell) -> CellBounds {
    let (mut lat_lo, mut lat_hi) = (-90.0f64, 90.0f64);
    let (mut lon_lo, mut lon_hi) = (-180.0f64, 180.0f64);
    let mut even = true;
    for b in cell.0.bytes() {
        let v = char_value(b).expect("validated geohash");
        for shift in (0..5).rev() {
            let bit = (v >> shift) & 1 == 1;
            if even {
                let mid = (lon_lo + lon_hi) / 2.0;
                if bit {
                    lon_lo = mid;
                } else {
                    lon_hi = mid;
                }
            } else {
                let mid = (lat_lo + lat_hi) / 2.0;
                if bit {
                    lat_lo = mid;
                } else {
                    lat_hi = mid;
                }
            }
            even = !even;
        }
    }
    CellBounds {
        min_lat: lat_lo,
        max_lat: lat_hi,
        min_lon: lon_lo,
        max_lon: lon_hi,
    }
}

/// The adjacent cells (N, S, E, W and diagonals) at the same precision.
///
/// Longitude wraps at the antimeridian. Rows beyond a pole do not exist, so
/// cells touching ±90° latitude have fewer than eight neighbours.
pub fn geohash_neighbors(cell: &GeohashCell) -> Vec<GeohashCell> {
    let b = cell.bounds();
    let (lat, lon) = b.center();
    let (w, h) = (b.width(), b.height());
    let mut out: Vec<GeohashCell> = Vec::with_capacity(8);
    for dlat in [-1i32, 0, 1] {
        for dlon in [-1i32, 0, 1] {
            if dlat == 0 && dlon == 0 {
                continue;
            }
            let nlat = lat + dlat as f64 * h;
            if !(-90.0..=90.0).contains(&nlat) {
                continue;
            }
            let mut nlon = lon + dlon as f64 * w;
            if nlon >= 180.0 {
                nlon -= 360.0;
            } else if nlon < -180.0 {
                nlon += 360.0;
            }
            let n = geohash_encode(nlat, nlon, cell.len()).expect("in-range neighbour centre");
            if &n != cell && !out.contains(&n) {
                out.push(n);
            }
        }
    }
    out
}

/// The cell itself plus its neighbours: the "nearest nine" search block.
pub fn nine_grid(cell: &GeohashCell) -> Vec<GeohashCell> {
    let mut cells = geohash_neighbors(cell);
    cells.push(cell.clone());
    cells.sort();
    cells
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn origin_is_s() {
        assert_eq!(geohash_encode(0.0, 0.0, 1).unwrap().as_str(), "s");
    }

    #[test]
    fn madelia_prefix() {
        let full = geohash_encode(44.0508, -94.4183, 20).unwrap();
        let six = geohash_encode(44.0508, -94.4183, 6).unwrap();
        assert_eq!(&full.as_str()[..6], six.as_str());
        assert_eq!(six.as_str(), "9zufe7");
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(matches!(geohash_encode(91.0, 0.0, 5), Err(Error::InvalidLocation(_))));
        assert!(matches!(geohash_encode(0.0, -180.5, 5), Err(Error::InvalidLocation(_))));
        assert!(geohash_encode(0.0, 0.0, 0).is_err());
        assert!(geohash_encode(0.0, 0.0, 21).is_err());
    }

    #[test]
    fn parse_validates_alphabet() {
        assert!(GeohashCell::parse("9zufe7").is_ok());
        assert!(GeohashCell::parse("9zufa7").is_err()); // 'a' is excluded
        assert!(GeohashCell::parse("").is_err());
        assert!(GeohashCell::parse(&"0".repeat(21)).is_err());
    }

    #[test]
    fn interior_cell_has_eight_symmetric_neighbours() {
        let c = geohash_encode(44.0508, -94.4183, 6).unwrap();
        let ns = geohash_neighbors(&c);
        assert_eq!(ns.len(), 8);
        for n in &ns {
            assert!(geohash_neighbors(n).contains(&c), "{n} does not see {c}");
        }
    }

    #[test]
    fn polar_row_has_fewer_neighbours() {
        let c = geohash_encode(89.99, 10.0, 2).unwrap();
        assert_eq!(geohash_neighbors(&c).len(), 5);
    }

    #[test]
    fn known_neighbours() {
        // standard reference values for cell "u4pruyd"
        let c = GeohashCell::parse("u4pruyd").unwrap();
        let mut got: Vec<String> = geohash_neighbors(&c).into_iter().map(String::from).collect();
        got.sort();
        let mut want = vec![
            "u4pruyf", "u4pruyc", "u4pruy9", "u4pruy6", "u4pruye", "u4pruy3", "u4pruyg", "u4pruy7",
        ];
        want.sort();
        // N=f, NE=g, E=e, SE=7, S=6, SW=3, W=9, NW=c
        assert_eq!(got, want);
    }

    proptest! {
        #[test]
        fn prefix_property(lat in -90.0..=90.0f64, lon in -180.0..=180.0f64, k in 1usize..20) {
            let a = geohash_encode(lat, lon, k).unwrap();
            let b = geohash_encode(lat, lon, k + 1).unwrap();
            prop_assert!(b.as_str().starts_with(a.as_str()));
        }

        #[test]
        fn bounds_contain_point(lat in -90.0..=90.0f64, lon in -180.0..=180.0f64, k in 1usize..=20) {
            let c = geohash_encode(lat, lon, k).unwrap();
            prop_assert!(c.bounds().contains(lat, lon), "{} {:?}", c, c.bounds());
        }

        #[test]
        fn neighbour_symmetry(lat in -80.0..80.0f64, lon in -179.0..179.0f64, k in 2usize..10) {
            let c = geohash_encode(lat, lon, k).unwrap();
            let ns = geohash_neighbors(&c);
            prop_assert_eq!(ns.len(), 8);
            for n in &ns {
                prop_assert!(geohash_neighbors(n).contains(&c));
            }
        }
    }
}
