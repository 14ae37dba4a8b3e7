//! Wannier-Stark resonances of tilted bichromatic lattices: complex-absorbing-
//! potential eigensolver, exceptional-point search and continuation, parameter
//! loops, and self-consistent mean-field resonances.

pub mod braid;
pub mod config;
pub mod eigen;
pub mod ep;
pub mod error;
pub mod gpe;
pub mod io;
pub mod lattice;
pub mod resonance;
pub mod selftest;
pub mod simplex;

pub use braid::{run_loop, LoopSpec, LoopTrace, Permutation};
pub use config::{load_config, parse_config, RunConfig};
pub use ep::{find_ep, scan_gap_plane, trace_ep_curve, Coordinate, EPCandidate, EPCurve, EpConfig, ScanAxis};
pub use error::{Error, Result};
pub use gpe::{classify_crossing, crossing_scan, solve_nonlinear, CrossingReport, CrossingType, NonlinearConfig, NonlinearResonance};
pub use io::RunManifest;
pub use lattice::{build_hamiltonian, cap_profile, potential_value, GridSpec, HamiltonianMatrix, KineticScheme, LatticeParams};
pub use resonance::{solve_resonances, Resonance, ResonanceSolver, SolverConfig, SpectrumSlice};
