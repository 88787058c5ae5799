//! Bucketed spatial index for building spatial contexts.
//!
//! Geographic datasets are bucketed by geohash; pixel-space datasets use a
//! uniform square grid with the same nine-cell pruning contract. Both answer
//! radius and k-nearest queries with results identical to a linear scan:
//! ascending distance, ties broken by entity id.

pub mod geohash;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geo::{dist, GeoEntity};

pub use geohash::{
    cell_bounds, cell_size, geohash_encode, geohash_neighbors, nine_grid, CellBounds, GeohashCell,
};

/// How entity locations are bucketed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellScheme {
    /// `x` is longitude and `y` latitude, both in degrees.
    Geohash { precision: usize },
    /// Square cells of the given side length in dataset units.
    Grid { cell: f64 },
}

impl CellScheme {
    /// Finest geohash precision whose cells are at least `radius` wide and tall.
    pub fn geohash_for_radius(radius: f64) -> CellScheme {
        let precision = (1..=geohash::MAX_LENGTH)
            .take_while(|&p| {
                let (w, h) = cell_size(p);
                w.min(h) >= radius
            })
            .last()
            .unwrap_or(1);
        CellScheme::Geohash { precision }
    }

    pub fn grid_for_radius(radius: f64) -> CellScheme {
        CellScheme::Grid { cell: radius }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum CellKey {
    Hash(String),
    Grid(i64, i64),
}

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    scheme: CellScheme,
    entities: Vec<GeoEntity>,
    by_id: HashMap<String, usize>,
    buckets: BTreeMap<CellKey, Vec<usize>>,
}

impl SpatialIndex {
    pub fn build(entities: &[GeoEntity], scheme: CellScheme) -> Result<Self> {
        match scheme {
            CellScheme::Geohash { precision } if !(1..=geohash::MAX_LENGTH).contains(&precision) => {
                return Err(Error::Config(format!("geohash precision {precision} out of range")));
            }
            CellScheme::Grid { cell } if !(cell > 0.0 && cell.is_finite()) => {
                return Err(Error::Config(format!("grid cell size must be positive, got {cell}")));
            }
            _ => {}
        }
        let mut by_id = HashMap::with_capacity(entities.len());
        let mut buckets: BTreeMap<CellKey, Vec<usize>> = BTreeMap::new();
        for (i, e) in entities.iter().enumerate() {
            e.loc.validate()?;
            if by_id.insert(e.id.clone(), i).is_some() {
                return Err(Error::DuplicateEntity(e.id.clone()));
            }
            let key = key_for(scheme, e.loc.x, e.loc.y)?;
            buckets.entry(key).or_default().push(i);
        }
        Ok(SpatialIndex {
            scheme,
            entities: entities.to_vec(),
            by_id,
            buckets,
        })
    }

    pub fn scheme(&self) -> CellScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn entities(&self) -> &[GeoEntity] {
        &self.entities
    }

    pub fn get(&self, id: &str) -> Option<&GeoEntity> {
        self.by_id.get(id).map(|&i| &self.entities[i])
    }

    /// Ids stored under a geohash code (geohash scheme only).
    pub fn bucket(&self, code: &str) -> Vec<&str> {
        self.buckets
            .get(&CellKey::Hash(code.to_owned()))
            .map(|v| v.iter().map(|&i| self.entities[i].id.as_str()).collect())
            .unwrap_or_default()
    }

    /// Geohash code (or `i,j` grid key) under which an entity is stored.
    pub fn cell_of(&self, id: &str) -> Option<String> {
        let e = self.get(id)?;
        key_for(self.scheme, e.loc.x, e.loc.y).ok().map(|k| match k {
            CellKey::Hash(s) => s,
            CellKey::Grid(i, j) => format!("{i},{j}"),
        })
    }

    /// Entities strictly closer than `radius`, nearest first, pivot excluded.
    pub fn query_radius(&self, pivot: &GeoEntity, radius: f64) -> Result<Vec<&GeoEntity>> {
        pivot.loc.validate()?;
        if radius.is_nan() || radius < 0.0 {
            return Err(Error::Argument(format!("radius must be non-negative, got {radius}")));
        }
        let candidates = self.candidates_within(pivot, radius)?;
        let mut hits: Vec<(f64, usize)> = candidates
            .into_iter()
            .filter(|&i| self.entities[i].id != pivot.id)
            .map(|i| (dist(pivot.loc, self.entities[i].loc), i))
            .filter(|(d, _)| *d < radius)
            .collect();
        self.sort_hits(&mut hits);
        Ok(hits.into_iter().map(|(_, i)| &self.entities[i]).collect())
    }

    /// The `k` nearest entities (pivot excluded), nearest first.
    pub fn query_knn(&self, pivot: &GeoEntity, k: usize) -> Result<Vec<&GeoEntity>> {
        pivot.loc.validate()?;
        if k == 0 {
            return Err(Error::Argument("k must be at least 1".into()));
        }
        let mut level = 0usize;
        loop {
            let (candidates, covered) = self.ring(pivot, level)?;
            let exhaustive = covered.is_infinite();
            let mut hits: Vec<(f64, usize)> = candidates
                .into_iter()
                .filter(|&i| self.entities[i].id != pivot.id)
                .map(|i| (dist(pivot.loc, self.entities[i].loc), i))
                .collect();
            self.sort_hits(&mut hits);
            // Anything outside the searched block is at least `covered` away,
            // so a strictly closer k-th hit cannot be displaced.
            if exhaustive || (hits.len() >= k && hits[k - 1].0 < covered) {
                hits.truncate(k);
                return Ok(hits.into_iter().map(|(_, i)| &self.entities[i]).collect());
            }
            level += 1;
        }
    }

    fn sort_hits(&self, hits: &mut [(f64, usize)]) {
        hits.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| self.entities[a.1].id.cmp(&self.entities[b.1].id))
        });
    }

    /// Entity indices from a block guaranteed to contain every point closer
    /// than `radius` to the pivot.
    fn candidates_within(&self, pivot: &GeoEntity, radius: f64) -> Result<Vec<usize>> {
        let mut level = 0usize;
        loop {
            let (candidates, covered) = self.ring(pivot, level)?;
            if radius <= covered {
                return Ok(candidates);
            }
            level += 1;
        }
    }

    /// Search block at expansion `level` and the distance it is guaranteed
    /// to cover around the pivot (infinite once the whole index is scanned).
    fn ring(&self, pivot: &GeoEntity, level: usize) -> Result<(Vec<usize>, f64)> {
        match self.scheme {
            CellScheme::Geohash { precision } => {
                if level >= precision {
                    return Ok(((0..self.entities.len()).collect(), f64::INFINITY));
                }
                let p = precision - level;
                let center = geohash_encode(pivot.loc.y, pivot.loc.x, p)?;
                let (w, h) = cell_size(p);
                let mut out = Vec::new();
                for cell in nine_grid(&center) {
                    out.extend(self.prefix_scan(cell.as_str()));
                }
                Ok((out, w.min(h)))
            }
            CellScheme::Grid { cell } => {
                let r = 1i64 << level.min(40);
                let (ci, cj) = grid_cell(pivot.loc.x, pivot.loc.y, cell);
                let cells_in_block = (2 * r + 1) as u128 * (2 * r + 1) as u128;
                if cells_in_block >= self.buckets.len() as u128 * 4 || level >= 40 {
                    // cheaper to scan every bucket than to probe an enormous block
                    let mut out = Vec::new();
                    let mut all_inside = true;
                    for (key, ids) in &self.buckets {
                        if let CellKey::Grid(i, j) = key {
                            if (i - ci).abs() <= r && (j - cj).abs() <= r {
                                out.extend(ids);
                            } else {
                                all_inside = false;
                            }
                        }
                    }
                    if all_inside {
                        return Ok((out, f64::INFINITY));
                    }
                    return Ok((out, r as f64 * cell));
                }
                let mut out = Vec::new();
                for i in ci - r..=ci + r {
                    for j in cj - r..=cj + r {
                        if let Some(ids) = self.buckets.get(&CellKey::Grid(i, j)) {
                            out.extend(ids);
                        }
                    }
                }
                Ok((out, r as f64 * cell))
            }
        }
    }

    fn prefix_scan<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = usize> + 'a {
        self.buckets
            .range(CellKey::Hash(prefix.to_owned())..)
            .take_while(move |(k, _)| matches!(k, CellKey::Hash(s) if s.starts_with(prefix)))
            .flat_map(|(_, ids)| ids.iter().copied())
    }

    /// Sorted `(cell, id)` rows describing the bucket assignment.
    pub fn table(&self) -> Vec<(String, String)> {
        let mut rows: Vec<(String, String)> = self
            .entities
            .iter()
            .map(|e| (self.cell_of(&e.id).expect("indexed"), e.id.clone()))
            .collect();
        rows.sort();
        rows
    }

    /// Writes the bucket table as a line-oriented text file.
    ///
    /// Line 1 is a header `#geoctx-index v1 <scheme>` where scheme is
    /// `geohash <precision>` or `grid <cell>`; every following line is
    /// `<cell>\t<entity id>`, sorted by cell then id.
    pub fn write_table(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        match self.scheme {
            CellScheme::Geohash { precision } => writeln!(buf, "#geoctx-index v1 geohash {precision}"),
            CellScheme::Grid { cell } => writeln!(buf, "#geoctx-index v1 grid {cell:?}"),
        }
        .expect("write to vec");
        for (cell, id) in self.table() {
            writeln!(buf, "{cell}\t{id}").expect("write to vec");
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Rebuilds an index from entities and checks it against a cached table.
    pub fn from_table(entities: &[GeoEntity], path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema = |detail: String| Error::Schema {
            path: path.to_owned(),
            detail,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| schema("empty file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let scheme = match parts.as_slice() {
            ["#geoctx-index", "v1", "geohash", p] => CellScheme::Geohash {
                precision: p.parse().map_err(|_| schema(format!("bad precision `{p}`")))?,
            },
            ["#geoctx-index", "v1", "grid", c] => CellScheme::Grid {
                cell: c.parse().map_err(|_| schema(format!("bad cell size `{c}`")))?,
            },
            _ => return Err(schema(format!("unrecognised header `{header}`"))),
        };
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let (cell, id) = line
                .split_once('\t')
                .ok_or_else(|| schema(format!("line {} is not `cell<TAB>id`", n + 2)))?;
            rows.push((cell.to_owned(), id.to_owned()));
        }
        let index = SpatialIndex::build(entities, scheme)?;
        if index.table() != rows {
            return Err(schema("cached table does not match the entities".into()));
        }
        Ok(index)
    }
}

fn grid_cell(x: f64, y: f64, cell: f64) -> (i64, i64) {
    ((x / cell).floor() as i64, (y / cell).floor() as i64)
}

fn key_for(scheme: CellScheme, x: f64, y: f64) -> Result<CellKey> {
    Ok(match scheme {
        CellScheme::Geohash { precision } => CellKey::Hash(geohash_encode(y, x, precision)?.into()),
        CellScheme::Grid { cell } => {
            let (i, j) = grid_cell(x, y, cell);
            CellKey::Grid(i, j)
        }
    })
}

/// Linear-scan reference used by tests and small inputs.
pub fn brute_force_radius<'a>(entities: &'a [GeoEntity], pivot: &GeoEntity, radius: f64) -> Vec<&'a GeoEntity> {
    let mut v: Vec<(f64, &GeoEntity)> = entities
        .iter()
        .filter(|e| e.id != pivot.id)
        .map(|e| (dist(pivot.loc, e.loc), e))
        .filter(|(d, _)| *d < radius)
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
    v.into_iter().map(|(_, e)| e).collect()
}
