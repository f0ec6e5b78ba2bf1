//! Layered synthetic optical-flow data generation.
//!
//! A sample is a stack of textured layers. Each layer gets an alpha mask and
//! a bilinear grid warp; frame 2 and the ground-truth flow come from warping
//! every layer and compositing back to front. Motion blur and fog touch only
//! the images. [`search`] tunes the rendering hyperparameters with CMA-ES
//! against a pluggable evaluator.

pub mod augment;
pub mod effects;
pub mod error;
pub mod filter;
pub mod hyper;
pub mod io;
pub mod masks;
pub mod motion;
pub mod par;
pub mod raster;
pub mod rng;
pub mod scene;
pub mod search;
pub mod stats;

pub use error::{Error, Result};
pub use hyper::{Config, HyperParams, SearchSpace};
pub use raster::{AlphaMask, FlowField, Image, Raster};
pub use rng::SeedPath;
pub use scene::{AppearancePool, RenderedSample};
