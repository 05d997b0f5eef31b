//! Numerical laboratory for Benjamin–Ono solitons moving through slowly
//! varying potentials.

pub mod error;
pub mod evolution;
pub mod experiment;
pub mod grid;
pub mod modulation;
pub mod operators;
pub mod potential;
pub mod scaling;
pub mod soliton;
pub mod spectral;
pub mod trajectories;
pub mod virial;

pub use error::{Error, Result};
pub use grid::{Field, Grid, LocalizerSpec};
pub use modulation::{Decomposition, Regime};
pub use evolution::{EvolutionState, InvariantReport};
pub use operators::OperatorSpec;
pub use potential::{PotentialShape, PotentialSpec};
pub use soliton::{ClosedFormTable, EigenSign, SolitonParams};
pub use trajectories::{TrajectoryKind, TrajectoryState};
