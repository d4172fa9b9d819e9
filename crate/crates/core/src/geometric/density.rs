//! Fixed-point densities and leading coefficients.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::checks::{return_map, FIXED_SPACE_THRESHOLD};
use super::{GeometricError, RelativePeriodComponent};
use crate::model::{FlatFoliatedModel, GroupoidKernel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityData {
    /// Pointwise density factor `|det B|^{−1/2} / |P_K dσ_P|`, constant on
    /// the component.
    pub factor: f64,
    /// `|det B|` of the form induced on the complement of the fixed space.
    pub complement_det: f64,
    /// Integral of the density over the component.
    pub mass: f64,
}

/// Canonical density on the fixed set of the linearized return map `M`.
///
/// With `K = ker(I − M)` and `C = K^⊥`, the bilinear form
/// `B(c₁, c₂) = ω((I − M)c₁, c₂)` on `C` is nondegenerate for a clean fixed
/// set and contributes `|det B|^{−1/2}`. Dividing by `dσ_P` restricts to the
/// cosphere bundle; the base point ranges over the whole torus.
pub fn fixed_point_density(
    model: &FlatFoliatedModel,
    component: &RelativePeriodComponent,
) -> Result<DensityData, GeometricError> {
    if component.is_diagonal() {
        return Err(GeometricError::ZeroPeriod);
    }
    let q = model.q();
    let eta = &component.transverse_direction;
    let m = return_map(component.t, eta);
    let defect = DMatrix::identity(2 * q, 2 * q) - &m;
    let svd = defect.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut kernel = Vec::new();
    let mut complement = Vec::new();
    for k in 0..2 * q {
        let row = v_t.row(k).transpose();
        if svd.singular_values[k] < FIXED_SPACE_THRESHOLD {
            kernel.push(row);
        } else {
            complement.push(row);
        }
    }
    // symplectic form ω((a, b), (c, d)) = a·d − b·c
    let omega = |u: &DVector<f64>, w: &DVector<f64>| -> f64 {
        (0..q).map(|i| u[i] * w[q + i] - u[q + i] * w[i]).sum()
    };
    let c = complement.len();
    let b = DMatrix::from_fn(c, c, |i, j| {
        omega(&(&defect * &complement[i]), &complement[j])
    });
    let complement_det = if c == 0 { 1.0 } else { b.determinant().abs() };
    if !(complement_det > FIXED_SPACE_THRESHOLD) {
        return Err(GeometricError::SingularComplement(complement_det));
    }
    // dσ_P at the unit covector is the radial direction (0, η̂)
    let norm = eta.iter().map(|a| a * a).sum::<f64>().sqrt();
    let radial = DVector::from_fn(2 * q, |j, _| if j >= q { eta[j - q] / norm } else { 0.0 });
    let radial_in_kernel = kernel
        .iter()
        .map(|k| k.dot(&radial).powi(2))
        .sum::<f64>()
        .sqrt();
    if !(radial_in_kernel > FIXED_SPACE_THRESHOLD) {
        return Err(GeometricError::SingularComplement(radial_in_kernel));
    }
    let factor = complement_det.powf(-0.5) / radial_in_kernel;
    Ok(DensityData {
        factor,
        complement_det,
        mass: factor * model.volume(),
    })
}

const QUADRATURE_REL_TOL: f64 = 1e-6;
const MAX_QUADRATURE_POINTS: usize = 1 << 22;

/// Tensor-product trapezoid rule for a periodic function on `[0,1)ⁿ`,
/// halving the step until two successive values agree.
fn torus_average<F: Fn(&[f64]) -> f64>(n: usize, f: F, scale: f64) -> Result<f64, GeometricError> {
    let mut points = 4usize;
    let mut previous: Option<f64> = None;
    loop {
        let total = points.pow(n as u32);
        let mut acc = crate::numerics::CompensatedSum::new();
        let mut x = vec![0.0; n];
        for idx in 0..total {
            let mut r = idx;
            for xk in x.iter_mut() {
                *xk = (r % points) as f64 / points as f64;
                r /= points;
            }
            acc.add(f(&x));
        }
        let value = acc.value() / total as f64;
        if let Some(prev) = previous {
            let change = (value - prev).abs();
            if change <= QUADRATURE_REL_TOL * value.abs() + 1e-14 * scale {
                return Ok(value);
            }
            if (2 * points).pow(n as u32) > MAX_QUADRATURE_POINTS {
                return Err(GeometricError::QuadratureNotConverged(
                    change / value.abs().max(1e-300),
                ));
            }
        }
        previous = Some(value);
        points *= 2;
    }
}

/// `α_{j,0} = ∫ φ(x)·ψ(w)·e^{i t (c·ξ̂)/2} dμ` over the component.
pub fn leading_coefficient(
    model: &FlatFoliatedModel,
    kernel: &GroupoidKernel,
    component: &RelativePeriodComponent,
) -> Result<Complex64, GeometricError> {
    if component.is_diagonal() {
        return Err(GeometricError::ZeroPeriod);
    }
    let density = fixed_point_density(model, component)?;
    let mut total = 0.0;
    for term in kernel.terms() {
        let psi = term.profile.value(component.shift_norm);
        if psi == 0.0 {
            continue;
        }
        let scale = term
            .weight
            .terms()
            .iter()
            .map(|(_, c)| c.norm())
            .sum::<f64>();
        let mean = torus_average(model.n(), |x| term.weight.eval(x), scale)?;
        total += mean * psi;
    }
    // ∫ σ_sub(P) along the orbit; constant for constant coefficients
    let c_xi: f64 = model
        .drift()
        .iter()
        .zip(&component.direction)
        .map(|(c, x)| c * x)
        .sum();
    let phase = component.t * c_xi / (2.0 * model.norm_dual(&component.direction));
    Ok(Complex64::from_polar(total * density.mass, phase))
}
