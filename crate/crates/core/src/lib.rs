pub mod arrays;
pub mod channel;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod harness;
pub mod protocol;
pub mod ris;

pub use error::{Error, Result};
