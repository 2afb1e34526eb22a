//! Shared benchmark setups.

use adia_core::strip_solver::{AdiabaticData, EndCondition, Formulation, StripProblem};
use adia_core::{MetricChart, MorseData, Pt};

/// Flat d = 1, amplitude 0.1, starting at x₋ = 0.2.
pub fn flat_problem(eps: f64, r: f64, ns: usize, nt: usize, formulation: Formulation, end: EndCondition) -> StripProblem {
    let chart = MetricChart::flat(1).expect("flat chart");
    let f = MorseData::cosine_wells(1, &[0.1], &[1.0], &[0.0]).expect("cosine wells");
    let bc = AdiabaticData::new(Pt::zeros(), f, eps).expect("boundary data");
    StripProblem { chart, bc, r, ns, nt, end, formulation }
}
