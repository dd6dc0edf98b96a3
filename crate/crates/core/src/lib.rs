// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod asymptotics;
pub mod error;
pub mod mechanisms;
pub mod numerics;
pub mod shuffle_index;

pub use error::{Error, Result};
pub use mechanisms::{Cdf, LocalRandomizer, ParDistribution, ReferenceDistribution, SamplingLaw};
pub use shuffle_index::ShuffleIndices;
