//! Fixtures shared by the benchmarks.

use bhdimer::fockspace::default_displacement;
use bhdimer::semiclassical::SemiclassicalSolution;
use bhdimer::DimerParams;

/// Reference hopping and detuning with the given interaction and rescaled drive.
pub fn reference(u: f64, uf: f64) -> DimerParams {
    DimerParams::from_rescaled(2.5, -1.5, 1.0, u, uf).expect("valid reference parameters")
}

pub fn displacement(params: &DimerParams) -> SemiclassicalSolution {
    default_displacement(params).expect("mean-field solution")
}
