//! Event-based synthetic aperture imaging at desk scale: simulate events from
//! an occluded planar scene under linear camera motion, refocus them onto the
//! target depth plane, and reconstruct the occluded target with plain
//! accumulation, frame-based shift-and-average, or a trainable hybrid
//! spiking-encoder / convolutional-decoder network, plus the image-quality
//! metrics to compare them.
//!
//! All floating-point computation is generic over [`float::Real`]
//! (`f32`/`f64`); event data stays integer-typed. The usual instantiations
//! have aliases at the crate root: simulation and metrics in `f64`, the
//! network in `f32` to match its on-disk checkpoint precision.

pub mod camera;
pub mod config;
pub mod error;
pub mod event;
pub mod float;
pub mod framing;
pub mod image;
pub mod metrics;
pub mod network;
pub mod reconstruction;
pub mod refocus;
pub mod simulator;

pub use error::{Error, Result};
pub use float::Real;

/// Default scalar for geometry, simulation, and metrics.
pub type Sim = f64;
/// Default scalar for the network; matches checkpoint storage.
pub type Net = f32;

pub type Image32 = image::Image<f32>;
pub type Image64 = image::Image<f64>;
pub type CameraModel64 = camera::CameraModel<f64>;
pub type Trajectory64 = camera::Trajectory<f64>;
pub type SceneSpec64 = simulator::SceneSpec<f64>;
pub type HybridNetwork32 = network::HybridNetwork<f32>;
pub type HybridNetwork64 = network::HybridNetwork<f64>;
