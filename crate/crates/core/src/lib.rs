//! Worst-case analysis and robust construction of long-only bond portfolios.
#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons reject NaN inputs

pub mod analysis;
pub mod checks;
pub mod cli;
pub mod conic;
pub mod construction;
pub mod error;
pub mod instruments;
pub mod io;
pub mod uncertainty;

pub use error::{Error, Result};
