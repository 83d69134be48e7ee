//! Mission planning, map alignment and multi-robot coordination for aerial
//! documentation of building interiors.
//!
//! The pipeline runs `alignment` → `planner` → `trajectory` → `formation`
//! → `sim`; `mission` holds the technique catalog that drives dwell times
//! and request validation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod alignment;
pub mod formation;
pub mod geom;
pub mod mission;
pub mod planner;
pub mod scene;
pub mod sim;
pub mod trajectory;

/// Version stamped into every JSON document this crate reads or writes.
pub const FORMAT_VERSION: u32 = 1;
