//! Metastable structure of multi-well potentials, Kramers rates, Laplace
//! asymptotics, weighted capacities and the reaction-diffusion limit of the
//! time-rescaled Kramers-Smoluchowski equation.

pub mod asymptotics;
pub mod cli;
pub mod diffusion;
pub mod elliptic;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod landscape;
pub mod linalg;
pub mod rates;

pub use error::{Error, Result};
