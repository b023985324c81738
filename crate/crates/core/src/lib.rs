//! Hyperbolic-relaxation phase-field tumor-growth solver with Moreau-Yosida
//! regularized potentials, together with the studies that check its
//! convergence and stability behaviour.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod grid;
pub mod model;
pub mod norms;
pub mod potentials;
pub mod stepper;

pub use grid::{Field, Grid};
pub use potentials::{PotentialKind, SplitPotential, YosidaParams};
