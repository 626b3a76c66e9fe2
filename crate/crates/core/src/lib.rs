//! Passive-infrared sensor tower simulation, chirplet feature extraction and
//! two-stage SVM intruder classification.

pub mod chirplet;
pub mod classifier;
pub mod config;
pub mod dataset;
pub mod error;
pub mod features;
pub mod geom;
pub mod mesh;
pub mod optics;
pub mod radiometry;
pub mod raster;
pub mod rng;
pub mod scene;
pub mod trajectory;

pub use error::{Error, Result};
pub use mesh::Label;
