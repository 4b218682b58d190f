//! Echo state networks whose reservoir weights are evolved in a compressed
//! DCT coefficient space.

pub mod codec;
pub mod error;
pub mod esn;
pub mod evo;
pub mod experiment;
pub mod layout;
pub mod metrics;
pub mod timeseries;

pub use codec::Chromosome;
pub use error::{Error, Result};
pub use esn::{EsnConfig, EsnModel};
pub use layout::{ReservoirLayout, SparseReservoir};
pub use timeseries::TimeSeries;
