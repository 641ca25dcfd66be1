//! Multi-aspect ESG sentiment stacking.
//!
//! Base-model class probabilities for the Environmental, Social and
//! Governance aspects are turned into clipped log-probability meta-features
//! and combined by multi-task meta-MLPs, either in one stage over all
//! families (tower A) or per family first and then across families
//! (tower B). The crate also carries the stratified three-stage training
//! protocol, the evaluation metrics, annotator agreement and per-year
//! sentiment timelines.

#![allow(clippy::needless_range_loop)]

pub mod data;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod metafeatures;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod stratify;
pub mod synthetic;
pub mod timeline;

pub use error::{Error, Result};
