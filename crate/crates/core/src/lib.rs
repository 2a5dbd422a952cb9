//! Keypoint-trajectory analysis of dyadic cattle interactions: tracking,
//! pose stabilization, proximity gating, trajectory features, SVM
//! classification and social network construction.

pub mod config;
pub mod domain;
pub mod dyad;
pub mod error;
pub mod evalkit;
pub mod features;
pub mod io;
pub mod par;
pub mod pipeline;
pub mod posestream;
pub mod socialnet;
pub mod svm;
pub mod synthlab;
pub mod tracker;

pub use error::{Error, Result};
