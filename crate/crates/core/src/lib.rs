//! Spatially contextualized representations for named geographic entities.
// negated float comparisons are deliberate: they reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geo;
pub mod spatial_index;

pub use error::{Error, Result};
pub use geo::{euclidean_distance, normalized_offset, GeoEntity, Location, NormalizedOffset};
pub mod corpus;
pub mod linearizer;
pub mod encoder;
pub mod pretrain;
pub mod tasks;
pub mod cli;
