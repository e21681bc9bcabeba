//! Cross-domain sequential recommendation with explicit bias modeling.
//!
//! The crate pre-trains a content-grounded sequential recommender on several
//! source domains while factoring out two confounders: a per-domain latent
//! vector (cross-domain bias) and a popularity embedding derived from
//! normalized interaction counts (in-domain bias). Removing those terms at
//! inference time yields causally debiased zero-shot recommendation in unseen
//! domains; fine-tuning re-estimates them for a target domain.
//!
//! Modules follow the pipeline: [`corpus`] (data and synthetic benchmark),
//! [`embedding`] (item content vectors), [`popularity`] (interval counts and
//! popularity factors), [`model`] (parameters, encoders, training objective),
//! [`training`] (pre-training and fine-tuning loops), [`inference`] (scoring
//! and ranking), [`evaluation`] (metrics, baselines, reports).

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod mat;
pub mod model;
pub mod popularity;
pub mod training;

pub use error::{Error, Result};
