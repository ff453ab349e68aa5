//! Gradient-boosted decision trees, adversarial attacks against them, and a
//! defense built on the inversion/flip symmetry group.
//!
//! Everything numeric is generic over [`Scalar`] (`f64` or `f32`); the
//! aliases below fix the scalar to `f64`, with `*32` variants for `f32`.

pub mod attack;
pub mod data;
pub mod defense;
pub mod error;
pub mod gbdt;
pub mod harness;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type NormalizationSpec = data::NormalizationSpec<f64>;
pub type NormalizationSpec32 = data::NormalizationSpec<f32>;
pub type Ensemble = gbdt::Ensemble<f64>;
pub type Ensemble32 = gbdt::Ensemble<f32>;
pub type Tree = gbdt::Tree<f64>;
pub type Tree32 = gbdt::Tree<f32>;
pub type DefendedClassifier = defense::DefendedClassifier<f64>;
pub type DefendedClassifier32 = defense::DefendedClassifier<f32>;
pub type AttackResult = attack::AttackResult<f64>;
