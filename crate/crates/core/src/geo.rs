//! Geo-entities, locations and planar offset arithmetic.
//!
//! Coordinates are kept in raw dataset units (degrees for geographic data,
//! pixels for scanned maps). Which one applies is dataset metadata and is not
//! encoded in the types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    /// Builds a location, rejecting NaN and infinite components.
    pub fn new(x: f64, y: f64) -> Result<Self> {
        let loc = Location { x, y };
        loc.validate()?;
        Ok(loc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_finite() && self.y.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidLocation(format!("({}, {})", self.x, self.y)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoEntity {
    pub id: String,
    pub name: String,
    pub loc: Location,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl GeoEntity {
    pub fn new(id: impl Into<String>, name: impl Into<String>, loc: Location) -> Self {
        GeoEntity {
            id: id.into(),
            name: name.into(),
            loc,
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::Input(format!("entity `{}` has an empty name", self.id)));
        }
        self.loc.validate()
    }
}

/// Signed per-axis offset from a pivot, divided by the normalization factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedOffset {
    pub dx: f64,
    pub dy: f64,
}

impl NormalizedOffset {
    pub const ZERO: NormalizedOffset = NormalizedOffset { dx: 0.0, dy: 0.0 };

    pub fn norm(&self) -> f64 {
        self.dx.hypot(self.dy)
    }

    /// Largest absolute component; the quantity the separator sentinel must exceed.
    pub fn max_abs(&self) -> f64 {
        self.dx.abs().max(self.dy.abs())
    }
}

pub fn euclidean_distance(a: Location, b: Location) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    Ok((a.x - b.x).hypot(a.y - b.y))
}

/// Unchecked distance for hot loops over already-validated entities.
#[inline]
pub(crate) fn dist(a: Location, b: Location) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

pub fn normalized_offset(pivot: Location, neighbor: Location, z: f64) -> Result<NormalizedOffset> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Config(format!(
            "normalization factor must be positive and finite, got {z}"
        )));
    }
    pivot.validate()?;
    neighbor.validate()?;
    Ok(NormalizedOffset {
        dx: (neighbor.x - pivot.x) / z,
        dy: (neighbor.y - pivot.y) / z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn loc(x: f64, y: f64) -> Location {
        Location::new(x, y).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(euclidean_distance(loc(0.0, 0.0), loc(0.0, 0.0)).unwrap(), 0.0);
        assert_eq!(euclidean_distance(loc(0.0, 0.0), loc(3.0, 4.0)).unwrap(), 5.0);
        assert_eq!(euclidean_distance(loc(1.5, -2.0), loc(-1.5, 2.0)).unwrap(), 5.0);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Location::new(f64::NAN, 0.0).is_err());
        let bad = Location { x: 0.0, y: f64::INFINITY };
        assert!(matches!(
            euclidean_distance(bad, loc(0.0, 0.0)),
            Err(Error::InvalidLocation(_))
        ));
    }

    #[test]
    fn offset_examples() {
        let z = 0.0001;
        let o = normalized_offset(loc(10.0, 20.0), loc(10.0, 20.0), z).unwrap();
        assert_eq!(o, NormalizedOffset::ZERO);

        let o = normalized_offset(loc(10.0, 20.0), loc(10.001, 20.002), z).unwrap();
        assert!((o.dx - 10.0).abs() < 1e-9 && (o.dy - 20.0).abs() < 1e-9, "{o:?}");

        let o = normalized_offset(loc(0.0, 0.0), loc(-0.0005, 0.0), z).unwrap();
        assert!((o.dx + 5.0).abs() < 1e-12 && o.dy == 0.0);
    }

    #[test]
    fn offset_requires_positive_z() {
        for z in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                normalized_offset(loc(0.0, 0.0), loc(1.0, 1.0), z),
                Err(Error::Config(_))
            ));
        }
    }

    proptest! {
        #[test]
        fn distance_symmetric(ax in -1e3..1e3f64, ay in -1e3..1e3f64, bx in -1e3..1e3f64, by in -1e3..1e3f64) {
            let (a, b) = (loc(ax, ay), loc(bx, by));
            let d1 = euclidean_distance(a, b).unwrap();
            let d2 = euclidean_distance(b, a).unwrap();
            prop_assert_eq!(d1, d2);
            prop_assert!(d1 >= 0.0);
            prop_assert_eq!(d1 == 0.0, a == b);
        }

        #[test]
        fn offset_antisymmetric_and_scaled(ax in -180.0..180.0f64, ay in -90.0..90.0f64,
                                           bx in -180.0..180.0f64, by in -90.0..90.0f64,
                                           z in 1e-5..10.0f64) {
            let (a, b) = (loc(ax, ay), loc(bx, by));
            let ab = normalized_offset(a, b, z).unwrap();
            let ba = normalized_offset(b, a, z).unwrap();
            prop_assert_eq!(ab.dx, -ba.dx);
            prop_assert_eq!(ab.dy, -ba.dy);
            let d = euclidean_distance(a, b).unwrap();
            let scaled = ab.norm() * z;
            prop_assert!((scaled - d).abs() <= 1e-9 * d.max(f64::MIN_POSITIVE));
        }
    }
}
