pub mod domain;
pub mod error;
pub mod instancegen;
pub mod kernelsearch;
pub mod lp;
pub mod measures;
pub mod mip;
pub mod routegen;
pub mod scenred;

pub use error::{Error, Result};
