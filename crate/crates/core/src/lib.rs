pub mod assignment;
pub mod binio;
pub mod cli;
pub mod error;
pub mod evalmesh;
pub mod geom;
pub mod kdtree;
pub mod model;
pub mod pipeline;
pub mod seeds;
pub mod skeleton;
pub mod synthdata;
pub mod training;

pub use error::{HipError, Result};
