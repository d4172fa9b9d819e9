//! Geometric side of the trace formula: relative periods, their clean
//! fixed-point sets, densities and leading coefficients.

mod checks;
mod density;
mod flow;
mod periods;

pub use checks::{
    cleanness_check, return_map, saturation_check, saturation_check_with, CleannessReport,
    SaturationReport, FIXED_SPACE_THRESHOLD,
};
pub use density::{fixed_point_density, leading_coefficient, DensityData};
pub use flow::{
    flow, flow_displacement, flow_unwrapped, rk4_deviation, rk4_trajectory, FlowState, Integrator,
};
pub use periods::{find_relative_periods, RelativePeriodComponent};

use thiserror::Error;

use crate::maslov::MaslovError;
use crate::model::ModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometricError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Maslov(#[from] MaslovError),
    #[error("covector has no transverse part")]
    ZeroCovector,
    #[error("integration step must be positive, got {0}")]
    InvalidStep(f64),
    #[error(
        "component at t = {t} is not clean: fixed space has dimension {found}, expected {expected}"
    )]
    NotClean {
        t: f64,
        found: usize,
        expected: usize,
    },
    #[error("fixed-point density is singular on the complement (|det| = {0:.3e})")]
    SingularComplement(f64),
    #[error("torus quadrature did not converge (last relative change {0:.3e})")]
    QuadratureNotConverged(f64),
    #[error("operation undefined for the t = 0 component")]
    ZeroPeriod,
}
