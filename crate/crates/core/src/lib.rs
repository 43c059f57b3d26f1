//! Relational refinement of per-message spam scores.
//!
//! An independent logistic-regression classifier scores each message from its
//! own features. Those scores are then refined with the relational structure
//! of the network (shared users, texts, links, hashtags) in three ways:
//!
//! * [`stacking`]: stacked graphical learning with pseudo-relational features;
//! * [`mrf`]: a hub-structured binary Markov random field, solved with loopy
//!   belief propagation;
//! * [`hlmrf`]: a hinge-loss Markov random field with convex MAP inference and
//!   learned rule weights.
//!
//! [`evaluation`] runs the chronological multi-subset protocol and
//! [`synthetic`] generates datasets with planted spam campaigns.

pub mod classifier;
pub mod data_model;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod hlmrf;
pub mod mrf;
pub mod pipeline;
pub mod stacking;
pub mod synthetic;

pub use error::{EggsError, Result};
