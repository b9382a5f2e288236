//! Pulsed dynamics of a spin-1 coupled to a spin-1/2 under stochastic field noise.
//!
//! The spin-1 is reduced to its `{0, -1}` manifold; states live in the
//! four-level product space with the spin-1/2. Protocols are pulse programs
//! propagated along sampled fluctuator trajectories and averaged.

pub mod analysis;
pub mod engine;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod protocol;

pub use analysis::{
    coherence_amplitude, coherence_trace, enhancement_ratio, fit_stretched_exponential, slope_frequency, temperature_shift,
    AnalysisError, FitResult,
};
pub use engine::{
    propagate, run, run_ensemble, EnsembleResult, sweep, EngineError, Experiment, InitialState, Protocol,
    SimConfig, SweepPoint, SweepVariable, TimeTrace,
};
pub use linalg::{Basis, ComplexMatrix, DensityMatrix, Unitary};
pub use model::DyadParams;
pub use noise::{ElectricNoiseConfig, FluctuatorConfig, NoiseTrajectory};
pub use protocol::{Axis, PulseElement, PulseProgram, Target};
