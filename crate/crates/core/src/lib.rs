//! Synthesis of mmWave multipath observations, order-of-reflection
//! classification with a bagged CART ensemble, and UE positioning from
//! single-bounce reflections.

pub mod channel;
pub mod classifier;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod positioning;
pub mod raytracer;
pub mod rng;
pub mod scenes;

pub use error::{Error, Result};
