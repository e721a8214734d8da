// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod container;
pub mod data;
pub mod dep;
pub mod error;
pub mod lp;
pub mod monotone;
pub mod morphonet;
pub mod optim;
pub mod pruning;
pub mod tropical;

pub use error::{Error, Result};
