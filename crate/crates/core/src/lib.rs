//! Contraction-based Luenberger observers for nonlinear systems.
//!
//! The crate computes matrix measures (logarithmic norms) for the one-,
//! two- and infinity-norms, certifies that the observer Jacobian
//! `df/dx + L dg/dx` has a uniformly bounded measure over a box domain, and
//! simulates the system-observer interconnection to check the resulting
//! exponential error bound `|x(t) - xhat(t)| <= exp(c t) |x(0) - xhat(0)|`.
//!
//! The [`traffic`] module provides a compartmental freeway model whose
//! Jacobians are Metzler, which makes the one-norm measure a column sum.

pub mod cli;
pub mod error;
pub mod norms;
pub mod observer;
pub mod sim;
pub mod system;
pub mod traffic;

pub use error::{Error, Result};
pub use norms::{Matrix, NormKind, Vector};
pub use observer::{CertificateReport, CertifyOptions, ObserverGain};
pub use sim::Trajectory;
pub use system::{BranchSelection, FieldEvaluation, StateBox, SystemModel};
pub use traffic::{TrafficScenario, TrafficSystem};
