//! Entity record ingestion, cleaning and synthetic world generation.

mod synth;
pub mod words;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GeoEntity, Location};

pub use synth::{
    class_names, generate_linking_pair, generate_patch_world, generate_typing_world, LinkingPair, Region,
    SyntheticWorldSpec,
};

/// An uncleaned input row. Unknown keys are kept in `extra`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub x: Option<f64>,
    #[serde(default)]
    pub y: Option<f64>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// Drops unusable records and assigns fresh sequential ids (`e000000`, ...).
///
/// A record is dropped when it lacks a name or either coordinate, has a
/// non-finite coordinate, or its name has no alphanumeric character.
pub fn clean(records: &[RawRecord]) -> Vec<GeoEntity> {
    records
        .iter()
        .filter_map(|r| {
            let name = r.name.as_deref()?.trim();
            if !name.chars().any(char::is_alphanumeric) {
                return None;
            }
            let loc = Location::new(r.x?, r.y?).ok()?;
            Some((name.to_owned(), loc, r.label.clone()))
        })
        .enumerate()
        .map(|(i, (name, loc, label))| GeoEntity {
            id: format!("e{i:06}"),
            name,
            loc,
            label,
        })
        .collect()
}

pub fn read_records(path: &Path) -> Result<Vec<RawRecord>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_csv(path),
        Some("jsonl") | Some("json") => read_jsonl(path),
        _ => Err(Error::Input(format!(
            "{}: expected a .jsonl or .csv corpus",
            path.display()
        ))),
    }
}

fn read_jsonl(path: &Path) -> Result<Vec<RawRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            serde_json::from_str(line).map_err(|e| Error::Schema {
                path: path.to_owned(),
                detail: format!("line {}: {e}", n + 1),
            })
        })
        .collect()
}

fn read_csv(path: &Path) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Schema {
        path: path.to_owned(),
        detail: e.to_string(),
    })?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema {
            path: path.to_owned(),
            detail: e.to_string(),
        })?
        .clone();
    let mut out = Vec::new();
    for (n, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::Schema {
            path: path.to_owned(),
            detail: format!("row {}: {e}", n + 1),
        })?;
        let mut rec = RawRecord::default();
        for (key, value) in headers.iter().zip(row.iter()) {
            let value = value.trim();
            match key {
                "name" => rec.name = Some(value.to_owned()).filter(|v| !v.is_empty()),
                "x" => rec.x = value.parse().ok(),
                "y" => rec.y = value.parse().ok(),
                "label" => rec.label = Some(value.to_owned()).filter(|v| !v.is_empty()),
                other => {
                    rec.extra
                        .insert(other.to_owned(), serde_json::Value::String(value.to_owned()));
                }
            }
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct EntityRow {
    id: String,
    name: String,
    x: f64,
    y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

/// Writes entities as JSON lines with keys `id, name, x, y[, label]`.
pub fn write_entities(path: &Path, entities: &[GeoEntity]) -> Result<()> {
    let mut buf = Vec::new();
    for e in entities {
        let row = EntityRow {
            id: e.id.clone(),
            name: e.name.clone(),
            x: e.loc.x,
            y: e.loc.y,
            label: e.label.clone(),
        };
        serde_json::to_writer(&mut buf, &row).expect("serialize entity");
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_entities(path: &Path) -> Result<Vec<GeoEntity>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: EntityRow = serde_json::from_str(line).map_err(|e| Error::Schema {
            path: path.to_owned(),
            detail: format!("line {}: {e}", n + 1),
        })?;
        let e = GeoEntity {
            id: row.id,
            name: row.name,
            loc: Location { x: row.x, y: row.y },
            label: row.label,
        };
        e.validate().map_err(|err| Error::Schema {
            path: path.to_owned(),
            detail: format!("line {}: {err}", n + 1),
        })?;
        out.push(e);
    }
    Ok(out)
}

/// Writes a `query<TAB>candidate` table, one pair per line.
pub fn write_truth(path: &Path, truth: &BTreeMap<String, String>) -> Result<()> {
    let mut buf = Vec::new();
    for (q, c) in truth {
        writeln!(buf, "{q}\t{c}").expect("write to vec");
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_truth(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| {
            l.split_once('\t')
                .map(|(q, c)| (q.to_owned(), c.to_owned()))
                .ok_or_else(|| Error::Schema {
                    path: path.to_owned(),
                    detail: format!("line {} is not `query<TAB>candidate`", n + 1),
                })
        })
        .collect()
}

/// Randomly removes `floor(rate * n)` of the pivot's `n` neighbours.
///
/// `entities` is the pivot's neighbourhood; the pivot itself (matched by id)
/// is never removed. Survivors keep their input order.
pub fn simulate_omission<R: Rng + ?Sized>(
    entities: &[GeoEntity],
    pivot: &GeoEntity,
    rate: f64,
    rng: &mut R,
) -> Result<Vec<GeoEntity>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Argument(format!("omission rate must be in [0, 1], got {rate}")));
    }
    let neighbours: Vec<usize> = (0..entities.len())
        .filter(|&i| entities[i].id != pivot.id)
        .collect();
    let n_remove = (rate * neighbours.len() as f64).floor() as usize;
    let mut drop = vec![false; entities.len()];
    for k in sample(rng, neighbours.len(), n_remove) {
        drop[neighbours[k]] = true;
    }
    Ok(entities
        .iter()
        .zip(drop)
        .filter(|(_, d)| !d)
        .map(|(e, _)| e.clone())
        .collect())
}
