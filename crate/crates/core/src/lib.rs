//! Wave-packet scattering from one-dimensional potential steps.
//!
//! Plane-wave reflection and transmission probabilities are computed in
//! closed form ([`stationary`]) and checked against what actually happens to
//! a wide wave packet evolved under the time-dependent Schrödinger equation
//! ([`packet`], [`evolve`], [`measure`]). [`harness`] ties the pieces into
//! reproducible runs, sweeps and convergence studies.

pub mod error;
pub mod evolve;
pub mod harness;
pub mod measure;
pub mod packet;
pub mod stationary;

mod fourier;

pub use error::{Edge, Error, ErrorCategory, Result};
pub use packet::{build_packet, effective_width, GridSpec, PacketShape, PacketSpec, WaveState};
pub use stationary::{PotentialProfile, ProbabilityPair, ScatteringAmplitudes, UnitSystem};
pub use evolve::{PropagatorConfig, Scheme, StopCriterion, TimingInfo, Trajectory};
pub use measure::{Region, ScatteringResult};
pub use harness::{run, RunConfig, Scenario, SweepAxis, SweepSpec, Table, TableRow};
