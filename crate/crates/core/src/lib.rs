//! Simulation, wind retrieval, dark-spot detection and context-binned
//! evaluation for oil slicks on C-band SAR imagery.

pub mod detect;
pub mod error;
pub mod evaluate;
pub mod gmf;
pub mod par;
pub mod pipeline;
pub mod raster;
pub mod seed;
pub mod simulate;
pub mod wind;

pub use error::{Error, ErrorClass, Result};
