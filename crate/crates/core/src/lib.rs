pub mod absolute;
pub mod cones;
pub mod conic;
pub mod ellipsoidal;
pub mod error;
pub mod linalg;
pub mod market;
mod model;
pub mod mvo;
pub mod scenarios;
mod serde_util;
pub mod synthetic;
pub mod uncertainty;

pub use error::{Error, Result};
