//! Growth-coagulation solver for kernels singular at small volumes.
//!
//! The equation `∂_t c + ∂_v(g c) = Q(c)` is solved on a geometric size grid
//! by truncating the kernel to `(1/n, n)²`, rewriting the problem in mild form
//! along growth characteristics and iterating a shifted Picard map on short
//! time windows whose length is set by the kernel's supremum.

pub mod cli;
pub mod coag;
pub mod config;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod growth;
pub mod kernels;
pub mod output;
pub mod solver;

pub use coag::{PairTable, QnRate};
pub use error::{Error, Result};
pub use grid::{weighted_norm, DensityState, InitialData, SizeGrid};
pub use growth::{FlowResult, GrowthFamily, GrowthField};
pub use kernels::{KernelFamily, KernelSpec, TruncatedKernel};
pub use solver::{window_length, Solution, Solver, SolverConfig, Trajectory};
