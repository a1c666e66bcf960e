//! Numerical laboratory for cluster coagulation-fragmentation kinetics seen as
//! entropic gradient flows.
//!
//! The library has three legs:
//!
//! * the truncated Becker-Doring system in flux form and in Onsager gradient
//!   form, with its free energy, dissipation, action, and the curve functional
//!   that certifies solutions ([`bd`]),
//! * the nonlocal LSW coarsening equation solved by a weighted particle
//!   method, with the matching macroscopic functionals ([`lsw`]),
//! * the scale-parameter pipeline connecting the two: empirical-measure
//!   projection, rescaled energies split at a cutoff, monomer-excess and
//!   moment-ratio diagnostics, and quasistationarity bounds ([`rescale`]).
//!
//! [`rates`] holds the rate family, partition coefficients and equilibria that
//! everything is built on; [`network`] generalizes the microscopic system to
//! reversible mass-action reaction networks; [`experiments`] packages
//! reproducible scenarios behind a flat config file.

// `!(x > 0.0)` style guards are used on purpose: the negated comparison
// also rejects NaN inputs, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bd;
pub mod error;
pub mod experiments;
pub mod integrate;
pub mod lsw;
pub mod network;
pub mod numerics;
pub mod rates;
pub mod rescale;

pub use bd::{ClusterState, CovectorField, CurveRecord, FluxVector};
pub use error::CoreError;
pub use lsw::{Dictionary, LswCurveRecord, LswParams, ParticleEnsemble};
pub use rates::{AsymptoticConstants, EquilibriumTable, RateParams};
pub use rescale::{EnergySplit, RescaleParams};
