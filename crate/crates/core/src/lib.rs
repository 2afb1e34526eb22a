//! Numerical laboratory for J₀-holomorphic strips in `T*L` with adiabatic
//! Lagrangian boundary conditions, and their convergence to (broken) Morse
//! gradient flow lines.

pub mod adiabatic_lab;
pub mod artifacts;
pub mod config;
pub mod estimates;
pub mod geometry;
pub mod morse_flow;
pub mod strip_solver;

pub use adiabatic_lab::{CompareMode, ConvergenceRow, ConvergenceTable, SweepConfig};
pub use geometry::{CotangentVec, CriticalPoint, MetricChart, MorseData, Pt};
pub use morse_flow::FlowPath;
pub use strip_solver::{AdiabaticData, EndCondition, Formulation, SolveReport, StripField, StripProblem};
