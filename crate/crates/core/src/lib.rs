// NaN-aware comparisons such as `!(x > 0.0)` are written deliberately.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cleaning;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod optim;
pub mod panel;
pub mod pipeline;
pub mod selection;
pub mod sarimax;
mod serde_util;

pub use error::{Error, Result};
