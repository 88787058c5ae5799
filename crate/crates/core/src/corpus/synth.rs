//! Seeded synthetic worlds standing in for large crowd-sourced corpora.
//!
//! * Typing worlds: clusters of same-class entities. An entity's own name
//!   carries a class word only with probability `name_signal`, so the label
//!   is weakly predictable from the name but reliably predictable from the
//!   names around it.
//! * Patch worlds: small groups of uniquely named entities.
//! * Linking pairs: a patch world plus rotated copies of every patch (same
//!   names, same pairwise distances, different bearings), and a query map
//!   holding the original patches re-expressed in pixel coordinates.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::words::{CLASS_MOTIFS, PREFIXES, SUFFIXES};
use crate::error::{Error, Result};
use crate::geo::{GeoEntity, Location};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Region {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticWorldSpec {
    pub seed: u64,
    pub n_entities: usize,
    pub region: Region,
    pub n_classes: usize,
    /// Entities per cluster (typing) or per patch (linking).
    pub cluster_size: usize,
    /// Co-occurrence radius of a cluster, in dataset units.
    pub cluster_radius: f64,
    /// Probability that an entity's own name contains a class word.
    pub name_signal: f64,
    /// Number of place-like first words drawn from the bundled list.
    pub vocab_size: usize,
    /// Std-dev of query location noise, in source units.
    pub jitter: f64,
    /// Rotated duplicate-name copies per patch.
    pub distractors: usize,
    /// Source unit to pixel multiplier for the query map.
    pub pixel_scale: f64,
}

impl Default for SyntheticWorldSpec {
    fn default() -> Self {
        SyntheticWorldSpec {
            seed: 0,
            n_entities: 400,
            region: Region {
                min_x: -93.30,
                min_y: 44.90,
                max_x: -93.26,
                max_y: 44.94,
            },
            n_classes: 4,
            cluster_size: 8,
            cluster_radius: 0.0008,
            name_signal: 0.3,
            vocab_size: PREFIXES.len(),
            jitter: 0.0,
            distractors: 0,
            pixel_scale: 10_000.0,
        }
    }
}

impl SyntheticWorldSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synthetic world: {m}")));
        if self.n_classes < 2 {
            return bad(format!("n_classes must be at least 2, got {}", self.n_classes));
        }
        if self.n_classes > CLASS_MOTIFS.len() {
            return bad(format!(
                "at most {} classes are bundled, got {}",
                CLASS_MOTIFS.len(),
                self.n_classes
            ));
        }
        if self.n_entities < self.n_classes {
            return bad(format!(
                "n_entities ({}) is smaller than n_classes ({})",
                self.n_entities, self.n_classes
            ));
        }
        if self.cluster_size == 0 {
            return bad("cluster_size must be positive".into());
        }
        if !(self.jitter >= 0.0) {
            return bad(format!("jitter must be non-negative, got {}", self.jitter));
        }
        if !(0.0..=1.0).contains(&self.name_signal) {
            return bad(format!("name_signal must be in [0, 1], got {}", self.name_signal));
        }
        if !(1..=PREFIXES.len()).contains(&self.vocab_size) {
            return bad(format!("vocab_size must be in 1..={}", PREFIXES.len()));
        }
        if !(self.cluster_radius > 0.0) || !(self.pixel_scale > 0.0) {
            return bad("cluster_radius and pixel_scale must be positive".into());
        }
        if !(self.region.width() > 0.0 && self.region.height() > 0.0) {
            return bad("region must have positive extent".into());
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Grid slot centres for `n` well-separated clusters inside the region.
    fn slots(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Location>> {
        let r = &self.region;
        let cols = ((n as f64 * r.width() / r.height()).sqrt().ceil() as usize).max(1);
        let rows = n.div_ceil(cols);
        let spacing = (r.width() / cols as f64).min(r.height() / rows as f64);
        let slack = spacing - 2.0 * self.cluster_radius;
        if slack <= 0.0 {
            return Err(Error::Config(format!(
                "synthetic world: {n} clusters of radius {} do not fit in the region",
                self.cluster_radius
            )));
        }
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let (i, j) = (k % cols, k / cols);
            let jx = rng.random_range(-0.25..=0.25) * slack;
            let jy = rng.random_range(-0.25..=0.25) * slack;
            out.push(Location {
                x: r.min_x + (i as f64 + 0.5) * spacing + jx,
                y: r.min_y + (j as f64 + 0.5) * spacing + jy,
            });
        }
        Ok(out)
    }

    fn point_in_disk(&self, centre: Location, rng: &mut ChaCha8Rng) -> Location {
        let rho = self.cluster_radius * rng.random::<f64>().sqrt();
        let theta = rng.random::<f64>() * TAU;
        Location {
            x: centre.x + rho * theta.cos(),
            y: centre.y + rho * theta.sin(),
        }
    }
}

/// Labelled typing world; every entity carries the class of its cluster.
pub fn generate_typing_world(spec: &SyntheticWorldSpec) -> Result<Vec<GeoEntity>> {
    spec.validate()?;
    let mut rng = spec.rng();
    let n_clusters = spec.n_entities.div_ceil(spec.cluster_size);
    let centres = spec.slots(n_clusters, &mut rng)?;
    let mut classes: Vec<usize> = (0..n_clusters).map(|c| c % spec.n_classes).collect();
    classes.shuffle(&mut rng);

    let prefixes = &PREFIXES[..spec.vocab_size];
    let mut out = Vec::with_capacity(spec.n_entities);
    for (k, centre) in centres.iter().enumerate() {
        let (class_name, motif) = CLASS_MOTIFS[classes[k]];
        let size = spec.cluster_size.min(spec.n_entities - out.len());
        for _ in 0..size {
            let first = prefixes[rng.random_range(0..prefixes.len())];
            let second = if rng.random::<f64>() < spec.name_signal {
                motif[rng.random_range(0..motif.len())]
            } else {
                SUFFIXES[rng.random_range(0..SUFFIXES.len())]
            };
            let loc = spec.point_in_disk(*centre, &mut rng);
            out.push(
                GeoEntity::new(format!("t{:06}", out.len()), format!("{first} {second}"), loc)
                    .with_label(class_name),
            );
        }
    }
    Ok(out)
}

/// Class names used by typing worlds with `n_classes` classes, in id order.
pub fn class_names(n_classes: usize) -> Vec<String> {
    CLASS_MOTIFS[..n_classes.min(CLASS_MOTIFS.len())]
        .iter()
        .map(|(n, _)| (*n).to_owned())
        .collect()
}

struct Patch {
    centre: Location,
    members: Vec<(String, Location)>,
}

fn unique_names(spec: &SyntheticWorldSpec, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<String>> {
    let seconds: Vec<&str> = SUFFIXES
        .iter()
        .copied()
        .chain(CLASS_MOTIFS.iter().flat_map(|(_, w)| w.iter().copied()))
        .collect();
    let prefixes = &PREFIXES[..spec.vocab_size];
    let space = prefixes.len() * seconds.len();
    if n > space {
        return Err(Error::Config(format!(
            "synthetic world: {n} unique names requested but only {space} are available"
        )));
    }
    Ok(rand::seq::index::sample(rng, space, n)
        .into_iter()
        .map(|k| format!("{} {}", prefixes[k / seconds.len()], seconds[k % seconds.len()]))
        .collect())
}

fn patches(spec: &SyntheticWorldSpec, rng: &mut ChaCha8Rng, extra_slots: usize) -> Result<(Vec<Patch>, Vec<Location>)> {
    let n_patches = spec.n_entities.div_ceil(spec.cluster_size);
    let slots = spec.slots(n_patches * (1 + extra_slots), rng)?;
    let mut order: Vec<usize> = (0..slots.len()).collect();
    order.shuffle(rng);
    let names = unique_names(spec, spec.n_entities, rng)?;
    let mut names = names.into_iter();
    let mut out = Vec::with_capacity(n_patches);
    let mut placed = 0;
    for p in 0..n_patches {
        let centre = slots[order[p]];
        let size = spec.cluster_size.min(spec.n_entities - placed);
        let members = (0..size)
            .map(|_| (names.next().expect("enough names"), spec.point_in_disk(centre, rng)))
            .collect();
        placed += size;
        out.push(Patch { centre, members });
    }
    let spare = order[n_patches..].iter().map(|&k| slots[k]).collect();
    Ok((out, spare))
}

/// Uniquely named entities grouped in patches; ids `w000000`, ... in patch order.
pub fn generate_patch_world(spec: &SyntheticWorldSpec) -> Result<Vec<GeoEntity>> {
    spec.validate()?;
    let mut rng = spec.rng();
    let (patches, _) = patches(spec, &mut rng, 0)?;
    Ok(patches
        .into_iter()
        .flat_map(|p| p.members)
        .enumerate()
        .map(|(i, (name, loc))| GeoEntity::new(format!("w{i:06}"), name, loc))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkingPair {
    /// Original patches re-expressed in pixel coordinates.
    pub queries: Vec<GeoEntity>,
    /// Original patches plus their rotated duplicate-name copies.
    pub candidates: Vec<GeoEntity>,
    /// Query id to the candidate it was derived from.
    pub truth: BTreeMap<String, String>,
    /// Pixels per source unit; query normalization factors scale by this.
    pub pixel_scale: f64,
}

pub fn generate_linking_pair(spec: &SyntheticWorldSpec) -> Result<LinkingPair> {
    spec.validate()?;
    let mut rng = spec.rng();
    let (patches, spare) = patches(spec, &mut rng, spec.distractors)?;

    // (name, candidate location, query location if this is an original)
    let mut rows: Vec<(String, Location, Option<Location>)> = Vec::new();
    let noise = Normal::new(0.0, spec.jitter.max(f64::MIN_POSITIVE)).expect("valid std-dev");
    let origin = (spec.region.min_x, spec.region.min_y);
    let mut spare = spare.into_iter();
    for patch in &patches {
        for (name, loc) in &patch.members {
            let (nx, ny) = if spec.jitter > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            let q = Location {
                x: (loc.x - origin.0 + nx) * spec.pixel_scale,
                y: (loc.y - origin.1 + ny) * spec.pixel_scale,
            };
            rows.push((name.clone(), *loc, Some(q)));
        }
        for d in 1..=spec.distractors {
            let slot = spare.next().expect("one spare slot per distractor");
            let (s, c) = (TAU * d as f64 / (spec.distractors + 1) as f64).sin_cos();
            for (name, loc) in &patch.members {
                let (rx, ry) = (loc.x - patch.centre.x, loc.y - patch.centre.y);
                let moved = Location {
                    x: slot.x + c * rx - s * ry,
                    y: slot.y + s * rx + c * ry,
                };
                rows.push((name.clone(), moved, None));
            }
        }
    }

    let mut cand_order: Vec<usize> = (0..rows.len()).collect();
    cand_order.shuffle(&mut rng);
    let mut cand_id = vec![String::new(); rows.len()];
    let mut candidates = Vec::with_capacity(rows.len());
    for (rank, &r) in cand_order.iter().enumerate() {
        cand_id[r] = format!("c{rank:06}");
        candidates.push(GeoEntity::new(cand_id[r].clone(), rows[r].0.clone(), rows[r].1));
    }

    let mut originals: Vec<usize> = (0..rows.len()).filter(|&r| rows[r].2.is_some()).collect();
    originals.shuffle(&mut rng);
    let mut queries = Vec::with_capacity(originals.len());
    let mut truth = BTreeMap::new();
    for (rank, &r) in originals.iter().enumerate() {
        let qid = format!("q{rank:06}");
        queries.push(GeoEntity::new(qid.clone(), rows[r].0.clone(), rows[r].2.unwrap()));
        truth.insert(qid, cand_id[r].clone());
    }
    Ok(LinkingPair {
        queries,
        candidates,
        truth,
        pixel_scale: spec.pixel_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeSet, HashMap};

    #[test]
    fn typing_world_is_deterministic_and_balanced() {
        let spec = SyntheticWorldSpec {
            n_entities: 100,
            n_classes: 2,
            cluster_size: 10,
            ..Default::default()
        };
        let a = generate_typing_world(&spec).unwrap();
        assert_eq!(a, generate_typing_world(&spec).unwrap());
        assert_eq!(a.len(), 100);
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for e in &a {
            *counts.entry(e.label.as_deref().unwrap()).or_default() += 1;
        }
        assert_eq!(counts.len(), 2);
        for c in counts.values() {
            assert!((*c as i64 - 50).abs() <= 10, "{counts:?}");
        }
    }

    #[test]
    fn degenerate_specs_rejected() {
        let few = SyntheticWorldSpec {
            n_entities: 3,
            n_classes: 4,
            ..Default::default()
        };
        assert!(matches!(generate_typing_world(&few), Err(Error::Config(_))));
        let one_class = SyntheticWorldSpec {
            n_classes: 1,
            ..Default::default()
        };
        assert!(generate_typing_world(&one_class).is_err());
        let neg = SyntheticWorldSpec {
            jitter: -1.0,
            ..Default::default()
        };
        assert!(generate_linking_pair(&neg).is_err());
    }

    #[test]
    fn identity_linking_without_jitter() {
        let spec = SyntheticWorldSpec {
            n_entities: 60,
            cluster_size: 6,
            ..Default::default()
        };
        let pair = generate_linking_pair(&spec).unwrap();
        assert_eq!(pair, generate_linking_pair(&spec).unwrap());
        assert_eq!(pair.queries.len(), 60);
        assert_eq!(pair.candidates.len(), 60);
        let cands: HashMap<&str, &GeoEntity> =
            pair.candidates.iter().map(|c| (c.id.as_str(), c)).collect();
        for q in &pair.queries {
            let c = cands[pair.truth[&q.id].as_str()];
            assert_eq!(q.name, c.name);
            let back_x = q.loc.x / spec.pixel_scale + spec.region.min_x;
            let back_y = q.loc.y / spec.pixel_scale + spec.region.min_y;
            assert!((back_x - c.loc.x).abs() < 1e-12 && (back_y - c.loc.y).abs() < 1e-12);
        }
    }

    #[test]
    fn distractors_share_names_and_distances() {
        let spec = SyntheticWorldSpec {
            n_entities: 40,
            cluster_size: 5,
            distractors: 3,
            jitter: 0.00002,
            ..Default::default()
        };
        let pair = generate_linking_pair(&spec).unwrap();
        assert_eq!(pair.candidates.len(), 160);
        let truth_targets: BTreeSet<&String> = pair.truth.values().collect();
        assert_eq!(truth_targets.len(), pair.truth.len(), "truth must be injective");
        let mut by_name: HashMap<&str, usize> = HashMap::new();
        for c in &pair.candidates {
            *by_name.entry(&c.name).or_default() += 1;
        }
        assert!(by_name.values().all(|&n| n == 4));
    }
}
