//! Joint user association, adapter-split and radio/compute resource allocation
//! for collaborative adapter fine-tuning over mobile edge servers.
//!
//! The crate maximizes the service-cost ratio (total service score over the
//! weighted delay-plus-energy cost) with a Dinkelbach outer loop wrapped
//! around two alternating blocks:
//!
//! * association and split ratio, through a homogenized semidefinite
//!   relaxation, Hungarian rounding and an exact split-ratio LP;
//! * bandwidth, powers and GPU speeds, through a quadratic fractional
//!   programming surrogate solved by a log-barrier Newton method.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! tool and wall-clock timing live in the `scr-tools` companion crate.

#![no_std]
#![allow(clippy::too_many_arguments)]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod association;
pub mod dashf;
pub mod error;
mod linalg;
mod math;
pub mod matrix;
pub mod model;
pub mod oracle;
pub mod resources;
pub mod scenario;
pub mod sdpsolver;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::{Allocation, CostBreakdown, Resources, Scenario, ServerProfile, UserProfile};
