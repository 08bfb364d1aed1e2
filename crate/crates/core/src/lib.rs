//! Anisotropic Hastings–Levitov growth.
//!
//! Clusters are built by composing rotated slit maps ([`cluster`]); their
//! scaling limits are Loewner chains driven by the attachment law
//! ([`loewner`]); the harmonic-measure flow on the cluster boundary and its
//! deterministic and Gaussian limits live in [`flow`].

pub mod cluster;
pub mod conformal;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod io;
pub mod loewner;
pub mod measures;
pub mod par;
pub mod quad;
pub mod rng;
pub mod stats;
pub mod trajectory;

pub use conformal::{circle_point, lcap_of_slit, slit_of_lcap, Complex, SlitParticle};
pub use error::{Error, Result};
pub use par::Exec;
pub use trajectory::Trajectory;
