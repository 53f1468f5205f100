//! Certified minimum-weight design of 2D frames under compliance constraints.
//!
//! The pipeline assembles polynomial stiffness matrices ([`fem`]), finds a
//! feasible design by uniform scaling ([`bounds`]), builds moment relaxations of
//! the scaled problem ([`relax`]), solves them with a primal-dual interior-point
//! method ([`sdp`]) and turns each relaxation into a lower bound, a feasible
//! upper bound and an optimality gap ([`certify`]).

pub mod error;
pub mod analysis;
pub mod bounds;
pub mod certify;
pub mod fem;
pub mod linalg;
pub mod poly;
pub mod relax;
pub mod sdp;

pub use error::{Error, Result};
