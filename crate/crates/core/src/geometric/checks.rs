//! Saturation and cleanness of relative fixed-point components.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::flow::{flow_unwrapped, Integrator};
use super::RelativePeriodComponent;
use crate::model::{holonomy_transport, ConormalVector, FlatFoliatedModel};
use crate::numerics::torus_distance;

/// Singular values of `I − M` below this count toward the fixed space.
pub const FIXED_SPACE_THRESHOLD: f64 = 1e-8;
const SATURATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationReport {
    pub saturated: bool,
    pub max_residual: f64,
    pub samples: usize,
}

/// Residual of `f_{−t} dh*_γ(ν) = ν` for the witness with shift `w`.
fn fixed_point_residual(
    model: &FlatFoliatedModel,
    component: &RelativePeriodComponent,
    nu: &ConormalVector,
) -> f64 {
    let gamma = match model.holonomy(nu.x(), &component.shift) {
        Ok(g) => g,
        Err(_) => return f64::INFINITY,
    };
    let moved = match holonomy_transport(&gamma, nu) {
        Ok(m) => m,
        Err(_) => return f64::INFINITY,
    };
    let (x, xi) = match flow_unwrapped(
        model,
        moved.x(),
        moved.xi(),
        -component.t,
        Integrator::Exact,
    ) {
        Ok(r) => r,
        Err(_) => return f64::INFINITY,
    };
    if component.is_diagonal() {
        return torus_distance(&x, nu.x());
    }
    let dxi = xi
        .iter()
        .zip(nu.xi())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    torus_distance(&x, nu.x()) + dxi
}

fn sample_on_component<R: Rng + ?Sized>(
    model: &FlatFoliatedModel,
    component: &RelativePeriodComponent,
    rng: &mut R,
) -> ConormalVector {
    let x = model.random_point(rng);
    let scale = rng.gen_range(0.5..4.0);
    let xi: Vec<f64> = component.direction.iter().map(|a| scale * a).collect();
    model
        .conormal(&x, &xi)
        .expect("component direction is conormal")
}

/// Checks that leafwise transport keeps sampled points of the component
/// inside the set described by `membership` and relatively fixed.
pub fn saturation_check_with<R, F>(
    model: &FlatFoliatedModel,
    component: &RelativePeriodComponent,
    membership: F,
    sample_count: usize,
    rng: &mut R,
) -> SaturationReport
where
    R: Rng + ?Sized,
    F: Fn(&ConormalVector) -> bool,
{
    let mut worst = 0.0f64;
    let mut saturated = true;
    let mut taken = 0;
    let mut attempts = 0;
    while taken < sample_count.max(1) && attempts < 100 * sample_count.max(1) {
        attempts += 1;
        let nu = sample_on_component(model, component, rng);
        if !membership(&nu) {
            continue;
        }
        taken += 1;
        let shift = model.random_leaf_shift(rng, 3.0);
        let gamma = model.holonomy(nu.x(), &shift).expect("leafwise shift");
        let moved = holonomy_transport(&gamma, &nu).expect("matching base point");
        // The conjugated witness γ₁⁻¹γγ₁ has the same shift in a flat model.
        let r = fixed_point_residual(model, component, &moved);
        worst = worst.max(r);
        if !membership(&moved) || !(r < SATURATION_TOL) {
            saturated = false;
        }
    }
    SaturationReport {
        saturated: saturated && taken > 0,
        max_residual: worst,
        samples: taken,
    }
}

/// Saturation of the component itself (points with covector along `ξ̂`).
pub fn saturation_check<R: Rng + ?Sized>(
    model: &FlatFoliatedModel,
    component: &RelativePeriodComponent,
    sample_count: usize,
    rng: &mut R,
) -> SaturationReport {
    let direction = component.direction.clone();
    let member = |nu: &ConormalVector| {
        let norm = model.norm_dual(nu.xi());
        nu.xi()
            .iter()
            .zip(&direction)
            .all(|(a, b)| (a / norm - b).abs() < 1e-12)
            && fixed_point_residual(model, component, nu) < SATURATION_TOL
    };
    saturation_check_with(model, component, member, sample_count, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleannessReport {
    /// Dimension of `ker(I − M)` on the transverse symplectic space.
    pub dim_found: usize,
    /// Tangent dimension of the relative fixed-point set in the same space.
    pub dim_expected: usize,
    /// `|(I − M)τ|` over an orthonormal tangent basis of the component.
    pub max_defect: f64,
    /// Dimension of the component on the cosphere bundle.
    pub component_dim: usize,
    pub clean: bool,
}

/// Hessian of `η ↦ |η|` in orthonormal transverse coordinates.
fn symbol_hessian(eta: &[f64]) -> DMatrix<f64> {
    let q = eta.len();
    let norm = eta.iter().map(|a| a * a).sum::<f64>().sqrt();
    DMatrix::from_fn(q, q, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        (delta - eta[i] * eta[j] / (norm * norm)) / norm
    })
}

/// Linearized return map `dH ∘ df_t` on `(δy, δη)`:
/// `(δy, δη) ↦ (δy + t·Hess p(η) δη, δη)`.
pub fn return_map(t: f64, eta: &[f64]) -> DMatrix<f64> {
    let q = eta.len();
    let mut m = DMatrix::identity(2 * q, 2 * q);
    m.view_mut((0, q), (q, q))
        .copy_from(&(symbol_hessian(eta) * t));
    m
}

/// `∇p` in transverse coordinates, computed through the model's symbol.
fn transverse_gradient(model: &FlatFoliatedModel, eta: &[f64]) -> Vec<f64> {
    let xi = model.covector_from_transverse(eta);
    model.transverse_vector_coords(&model.symbol_gradient(&xi))
}

/// Kernel basis of `η ↦ t·∇p(η)` at `eta`, by central differences.
fn gradient_kernel(model: &FlatFoliatedModel, t: f64, eta: &[f64]) -> Vec<DVector<f64>> {
    let q = eta.len();
    let h = 1e-6;
    let jac = DMatrix::from_fn(q, q, |i, j| {
        let mut plus = eta.to_vec();
        let mut minus = eta.to_vec();
        plus[j] += h;
        minus[j] -= h;
        t * (transverse_gradient(model, &plus)[i] - transverse_gradient(model, &minus)[i])
            / (2.0 * h)
    });
    let svd = jac.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let scale = 1.0 + t.abs();
    (0..q)
        .filter(|k| svd.singular_values[*k] < 1e-6 * scale)
        .map(|k| v_t.row(k).transpose())
        .collect()
}

/// Null space of a square matrix by singular-value thresholding.
fn null_space(a: &DMatrix<f64>, threshold: f64) -> Vec<DVector<f64>> {
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    (0..svd.singular_values.len())
        .filter(|k| svd.singular_values[*k] < threshold)
        .map(|k| v_t.row(k).transpose())
        .collect()
}

/// Compares the fixed space of the linearized return map with the tangent
/// space of the component at sampled points.
pub fn cleanness_check<R: Rng + ?Sized>(
    model: &FlatFoliatedModel,
    component: &RelativePeriodComponent,
    sample_count: usize,
    rng: &mut R,
) -> CleannessReport {
    let q = model.q();
    let mut dim_found = 0;
    let mut dim_expected = 0;
    let mut max_defect = 0.0f64;
    let mut clean = true;
    for k in 0..sample_count.max(1) {
        let nu = sample_on_component(model, component, rng);
        let eta = model.transverse_coords(nu.xi());
        let m = return_map(component.t, &eta);
        let defect_map = DMatrix::identity(2 * q, 2 * q) - &m;
        let found = null_space(&defect_map, FIXED_SPACE_THRESHOLD).len();
        // every δy is tangent (x is free); δη must keep t·∇p fixed
        let eta_kernel = gradient_kernel(model, component.t, &eta);
        let expected = q + eta_kernel.len();
        let mut tangent: Vec<DVector<f64>> = (0..q)
            .map(|i| DVector::from_fn(2 * q, |j, _| if j == i { 1.0 } else { 0.0 }))
            .collect();
        for v in &eta_kernel {
            tangent.push(DVector::from_fn(
                2 * q,
                |j, _| if j >= q { v[j - q] } else { 0.0 },
            ));
        }
        for tau in &tangent {
            max_defect = max_defect.max((&defect_map * tau).norm());
        }
        if k == 0 {
            dim_found = found;
            dim_expected = expected;
        }
        if found != expected || found != dim_found || expected != dim_expected {
            clean = false;
        }
    }
    if max_defect > 1e-6 {
        clean = false;
    }
    CleannessReport {
        dim_found,
        dim_expected,
        max_defect,
        component_dim: model.p() + dim_found - 1,
        clean,
    }
}

#[cfg(test)]
mod tests {
    use super::super::RelativePeriodComponent;
    use super::*;
    use crate::model::presets::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn product_component_is_saturated_and_clean() {
        let m = product_2d([0.0, 0.0]);
        let c = RelativePeriodComponent::from_lattice(&m, &[0, 1], true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = saturation_check(&m, &c, 50, &mut rng);
        assert!(s.saturated && s.max_residual < 1e-10);
        let r = cleanness_check(&m, &c, 5, &mut rng);
        assert_eq!((r.dim_found, r.dim_expected, r.component_dim), (2, 2, 2));
        assert!(r.clean);
    }

    #[test]
    fn q2_fixed_space_has_dimension_three() {
        let m = circle_in_t3();
        let c = RelativePeriodComponent::from_lattice(&m, &[0, 1, 0], true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = cleanness_check(&m, &c, 5, &mut rng);
        assert_eq!((r.dim_found, r.dim_expected, r.component_dim), (3, 3, 3));
        assert!(r.clean);
        // explicit rank of I − M
        let eta = [0.0, 1.0];
        let defect = DMatrix::identity(4, 4) - return_map(1.0, &eta);
        assert_eq!(defect.rank(1e-12), 1);
    }

    #[test]
    fn diagonal_is_saturated() {
        let m = kronecker(golden_slope());
        let c = RelativePeriodComponent::diagonal(&m, &[-golden_slope(), 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(saturation_check(&m, &c, 20, &mut rng).saturated);
    }

    #[test]
    fn half_torus_set_is_not_saturated() {
        let m = kronecker(golden_slope());
        let c = RelativePeriodComponent::from_lattice(&m, &[0, 1], true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let half = |nu: &ConormalVector| nu.x()[0] < 0.5;
        assert!(!saturation_check_with(&m, &c, half, 50, &mut rng).saturated);
    }
}
