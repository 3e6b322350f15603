//! Layered optimal control via ADMM.
//!
//! An optimal control problem is rewritten with a redundant reference
//! trajectory `r = Cx` and solved by ADMM. The iterations split into a
//! trajectory-generation layer ([`traj_opt`]), a feedback-control layer
//! ([`tracking_lqr`] for linear systems, [`ilqr`] otherwise) and a dual update
//! coordinating the two ([`admm`]).

pub mod admm;
pub mod bench;
pub mod dynamics;
pub mod error;
pub mod ilqr;
pub mod oracle;
pub mod tracking_lqr;
pub mod traj_opt;

pub use error::{Error, Result};

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
