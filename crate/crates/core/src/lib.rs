pub mod bound;
pub mod capacity;
pub mod channel;
pub mod error;
pub mod gen;
pub mod hull;
pub mod io;
mod newton;
pub mod prob;
pub mod select;
pub mod sweep;

pub use channel::{validate_channel, Channel, InputSubset};
pub use error::{Error, Result};
pub use prob::{DivergenceValue, Distribution};
