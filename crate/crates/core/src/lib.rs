pub mod config;
pub mod control;
pub mod dataset;
pub mod error;
pub mod esn;
pub mod experiment;
pub mod fprc;
pub mod fuzzy;
pub mod plant;
pub mod signals;
pub mod training;

pub use error::{Error, Result};
