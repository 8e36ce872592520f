//! Aggregate operational-loss modelling with a two-state Markovian arrival
//! process for loss occurrences and double-Pareto-Lognormal severities.
//!
//! The crate is organized bottom-up:
//!
//! * [`map2`]: the MAP₂ itself (validation, canonical forms, stationary
//!   objects, inter-loss law, likelihood, simulation);
//! * [`counting`]: the law and moments of the number of losses in a window;
//! * [`persistence`]: short/long gap transition probabilities and spells;
//! * [`estimation`]: moments matching and maximum likelihood fitting;
//! * [`severity`]: the dPlN severity law;
//! * [`aggregate`]: Monte Carlo of annual losses and risk measures;
//! * [`io`]: trace ingestion and report formats.
//!
//! Monte Carlo loops, the VtM sweep and the likelihood multistart run on
//! rayon when the default `parallel` feature is on. [`Execution::Sequential`]
//! forces a single thread; results are identical either way because every
//! chunk of work draws from its own seeded stream.

// `!(x > 0.0)` is used on purpose so that NaN is rejected with the other bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregate;
pub mod counting;
pub mod error;
pub mod estimation;
pub mod exec;
pub mod io;
pub mod linalg;
pub mod map2;
pub mod persistence;
pub mod reference;
pub mod severity;
pub mod stats;

pub use counting::{CountingDist, CountingProcess, PoissonProcess};
pub use error::{Error, Result};
pub use exec::Execution;
pub use linalg::{expm2, Mat2, Vec2};
pub use map2::{CanonicalForm, CanonicalMap2, Map2, PhaseType2, StationaryObjects};
pub use severity::{ConstantSeverity, DplnParams, Severity};
