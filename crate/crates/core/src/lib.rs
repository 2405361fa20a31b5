//! Minimal frequency-regulation reserve sizing and allocation for a virtual
//! power plant.

pub mod alloc;
pub mod freq;
pub mod linalg;
pub mod lp;
pub mod reserve;
pub mod scenario;
pub mod statespace;
