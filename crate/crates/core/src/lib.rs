//! Contextual Bradley-Terry-Luce rankings with bootstrap confidence
//! intervals for utility differences and confidence sets for ranks.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod cli;
pub mod error;
pub mod estimation;
pub mod io;
pub mod model;
pub mod rank_sets;
pub mod rng;
pub mod simlab;
pub mod uncertainty;

pub use error::{Error, Result};
