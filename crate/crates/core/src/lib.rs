//! Equilibria of the networked competitive bivirus SIS model.
//!
//! The crate enumerates every equilibrium of a model in the region
//! `x1, x2 >= 0, x1 + x2 <= 1`, classifies each by the spectrum of its
//! Jacobian, and checks the atlas against the index-counting identity and
//! the Morse inequalities of the even-dimensional sphere. A Runge–Kutta
//! integrator corroborates stability labels by sampling basins.

pub mod counting;
pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod model;
pub mod singlevirus;
pub mod spectral;

pub use counting::{count_report, BoundaryConfiguration, CountReport, MorseVector};
pub use dynamics::{
    basin_sample, integrate, integrate_single, BasinSample, IntegratorOptions, Terminal, Trajectory,
};
pub use equilibria::{
    classify, enumerate_all, Equilibrium, EquilibriumAtlas, EquilibriumClass, Provenance,
    SearchBudget,
};
pub use error::{Error, Result};
pub use model::{validate, BivirusModel, State, ValidationReport, Virus, VirusParams};
pub use spectral::{Spectrum, SquareMatrix};
