pub mod cli;
pub mod error;
pub mod em;
pub mod ghd;
pub mod gig;
pub mod glasso;
pub mod select;
pub mod simgen;
pub mod special;

pub use error::{Error, Result};
