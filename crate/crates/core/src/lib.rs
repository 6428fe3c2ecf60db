//! Classification-by-components networks with closed-form robustness
//! certificates.
//!
//! The crate is `no_std` (with `alloc`). It provides the distance geometry
//! ([`geometry`]), models with CBC, original-CBC, RBF, normalized-RBF and
//! GLVQ heads ([`model`]), losses ([`objectives`]), certified bounds
//! ([`certification`]), training ([`training`]) and evaluation
//! ([`evaluation`]).

#![no_std]

extern crate alloc;

pub mod certification;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod math;
pub mod model;
pub mod objectives;
pub mod rng;
pub mod training;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use geometry::DistanceKind;
pub use model::{Head, HeadKind, Model, TemperatureMode};
pub use objectives::LossKind;
pub use training::TrainConfig;
