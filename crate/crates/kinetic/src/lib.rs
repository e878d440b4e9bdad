//! Simulation and measurement toolkit for N-particle Boltzmann collision
//! jump processes and their mean-field limit.
//!
//! The crate is organised around five layers:
//!
//! - [`model`]: collision kinematics, kernels (Grad Maxwell molecules,
//!   truncated true Maxwell molecules, hard spheres) and particle states;
//! - [`kac`]: the event-driven N-particle jump process with exponential
//!   clocks and reproducible replica ensembles;
//! - [`limit`]: Fourier-spectral solvers for the limit equation
//!   (Bobylev form), moment ODEs, Maxwellian equilibria and a large-N
//!   particle oracle for hard spheres;
//! - [`metrics`], [`entropy`]: Wasserstein distances, Fourier and negative
//!   Sobolev norms, relative entropy, Fisher information, entropy
//!   production and nearest-neighbour entropy estimates;
//! - [`sampling`], [`chaos`]: initial-data constructions (tensorized,
//!   sphere-conditioned, uniform-on-sphere) and the experiment drivers for
//!   chaos, relaxation and law-of-large-numbers measurements.
//!
//! All randomness flows through explicitly derived [`streams`], so every
//! ensemble is reproducible bit-for-bit regardless of thread scheduling.
//! With the default `parallel` feature replicas and grid loops run on
//! rayon; disabling it yields a fully sequential build with identical
//! results.

pub mod chaos;
pub mod entropy;
pub mod error;
pub mod kac;
pub mod limit;
pub mod metrics;
pub mod model;
pub mod quad;
pub mod sampling;
pub mod streams;

pub use error::KineticError;
pub type Result<T> = std::result::Result<T, KineticError>;

/// Executes `map` over `0..n`, in parallel when the `parallel` feature is
/// enabled. Output order is by index either way.
pub fn map_indexed<T, F>(n: usize, map: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(map).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(map).collect()
    }
}

/// Sequential counterpart of [`map_indexed`], always available. Used by the
/// benchmark suite to compare against the data-parallel path.
pub fn map_indexed_seq<T, F>(n: usize, map: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(map).collect()
}
