//! Eighth-order state-space model, its simulation, and the dominant-pole
//! stability margin.

pub mod eigen;
pub mod fit;
pub mod model;

pub use eigen::{eigenvalues, EigenError, Spectrum};
pub use fit::{dominant_pole, fit_stability_surface, FitError, FitWeighting, Lattice, StabilityFit};
pub use model::{assemble, simulate, Activation, DeviceParams, SimError, StateSpaceModel, StateTrajectory, SwitchedModel};
