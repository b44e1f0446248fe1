//! Self-test: grid search for the toy minimizer and gradient checks.

use lrdrop::gradcheck::{check_random_mlps, check_toy_gradient, GradCheckReport};
use lrdrop::testfn::{verify_reference_optimum, Domain, GridReport, DEFAULT_SUCCESS_RADIUS};
use lrdrop::Rng;

use crate::error::Result;

pub const GRADIENT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub toy: GradCheckReport,
    pub mlp: GradCheckReport,
    pub grid: GridReport,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.toy.max_relative_error <= GRADIENT_TOLERANCE
            && self.mlp.max_relative_error <= GRADIENT_TOLERANCE
            && self.grid.distance_to_reference <= DEFAULT_SUCCESS_RADIUS
    }
}

/// 1000 toy-gradient points (2000 partials), 40 random 2-4-3 networks
/// (1080 entries, half with a fixed dropout mask) and a 2000 x 2000 grid.
pub fn verify() -> Result<VerifyReport> {
    let toy = check_toy_gradient(Domain::TOY, 1000, 1e-6, &mut Rng::new(1));
    let mlp = check_random_mlps(&[2, 4, 3], 40, 3, 0.8, 1e-5, &mut Rng::new(2))?;
    Ok(VerifyReport {
        toy,
        mlp,
        grid: verify_reference_optimum(),
    })
}
