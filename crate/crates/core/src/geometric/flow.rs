//! Transverse bicharacteristic flow on the conormal bundle.

use super::GeometricError;
use crate::model::{ConormalVector, FlatFoliatedModel};
use crate::numerics::wrap_unit;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integrator {
    Exact,
    Rk4 { step: f64 },
}

/// A point of the flow together with the elapsed time.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub nu: ConormalVector,
    pub t: f64,
}

/// Hamilton vector field of `p̃(x, ξ) = |ξ_H|_{g*}`: `(∂_ξ p̃, −∂_x p̃)`.
fn hamilton_field(model: &FlatFoliatedModel, xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (model.symbol_gradient(xi), vec![0.0; xi.len()])
}

fn rk4_step(model: &FlatFoliatedModel, x: &mut [f64], xi: &mut [f64], h: f64) {
    let n = x.len();
    let shifted = |base: &[f64], d: &[f64], a: f64| -> Vec<f64> {
        base.iter().zip(d).map(|(b, d)| b + a * d).collect()
    };
    let (k1x, k1p) = hamilton_field(model, xi);
    let (k2x, k2p) = hamilton_field(model, &shifted(xi, &k1p, 0.5 * h));
    let (k3x, k3p) = hamilton_field(model, &shifted(xi, &k2p, 0.5 * h));
    let (k4x, k4p) = hamilton_field(model, &shifted(xi, &k3p, h));
    for i in 0..n {
        x[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
        xi[i] += h / 6.0 * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i]);
    }
}

/// Flow displacement `t·∇_ξ p̃(ξ)` of the base point, without reduction mod Zⁿ.
pub fn flow_displacement(
    model: &FlatFoliatedModel,
    xi: &[f64],
    t: f64,
) -> Result<Vec<f64>, GeometricError> {
    if !(model.symbol_extension(xi) > 0.0) {
        return Err(GeometricError::ZeroCovector);
    }
    Ok(model.symbol_gradient(xi).iter().map(|g| t * g).collect())
}

/// `f_t(ν)`.
pub fn flow(
    model: &FlatFoliatedModel,
    nu: &ConormalVector,
    t: f64,
    integrator: Integrator,
) -> Result<ConormalVector, GeometricError> {
    let (x, xi) = flow_unwrapped(model, nu.x(), nu.xi(), t, integrator)?;
    Ok(model.conormal(&x, &xi)?)
}

/// Flow on the universal cover; the base point is not reduced mod Zⁿ.
pub fn flow_unwrapped(
    model: &FlatFoliatedModel,
    x: &[f64],
    xi: &[f64],
    t: f64,
    integrator: Integrator,
) -> Result<(Vec<f64>, Vec<f64>), GeometricError> {
    if !(model.symbol_extension(xi) > 0.0) {
        return Err(GeometricError::ZeroCovector);
    }
    match integrator {
        Integrator::Exact => {
            let d = flow_displacement(model, xi, t)?;
            Ok((x.iter().zip(&d).map(|(a, b)| a + b).collect(), xi.to_vec()))
        }
        Integrator::Rk4 { step } => {
            if !(step > 0.0) {
                return Err(GeometricError::InvalidStep(step));
            }
            let mut x = x.to_vec();
            let mut xi = xi.to_vec();
            let steps = (t.abs() / step).ceil().max(1.0) as usize;
            let h = t / steps as f64;
            for _ in 0..steps {
                rk4_step(model, &mut x, &mut xi, h);
            }
            Ok((x, xi))
        }
    }
}

/// RK4 trajectory sampled at every step, as flow states.
pub fn rk4_trajectory(
    model: &FlatFoliatedModel,
    nu: &ConormalVector,
    t: f64,
    step: f64,
) -> Result<Vec<FlowState>, GeometricError> {
    if !(step > 0.0) {
        return Err(GeometricError::InvalidStep(step));
    }
    if !(model.symbol_extension(nu.xi()) > 0.0) {
        return Err(GeometricError::ZeroCovector);
    }
    let steps = (t.abs() / step).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let mut x = nu.x().to_vec();
    let mut xi = nu.xi().to_vec();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(FlowState {
        nu: nu.clone(),
        t: 0.0,
    });
    for k in 1..=steps {
        rk4_step(model, &mut x, &mut xi, h);
        let wrapped: Vec<f64> = x.iter().map(|a| wrap_unit(*a)).collect();
        out.push(FlowState {
            nu: model.conormal(&wrapped, &xi)?,
            t: h * k as f64,
        });
    }
    Ok(out)
}

/// Largest torus distance between RK4 and exact flow over `[0, t]`.
pub fn rk4_deviation(
    model: &FlatFoliatedModel,
    nu: &ConormalVector,
    t: f64,
    step: f64,
) -> Result<f64, GeometricError> {
    let mut worst = 0.0f64;
    for state in rk4_trajectory(model, nu, t, step)? {
        let exact = flow(model, nu, state.t, Integrator::Exact)?;
        let dx = crate::numerics::torus_distance(exact.x(), state.nu.x());
        let dxi = exact
            .xi()
            .iter()
            .zip(state.nu.xi())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(dx).max(dxi);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets::*;
    use crate::numerics::torus_distance;

    #[test]
    fn zero_time_is_identity() {
        let m = kronecker(golden_slope());
        let nu = m.conormal(&[0.2, 0.9], &[-golden_slope(), 1.0]).unwrap();
        assert_eq!(flow(&m, &nu, 0.0, Integrator::Exact).unwrap(), nu);
    }

    #[test]
    fn product_flow_has_unit_period() {
        let m = product_2d([0.0, 0.0]);
        let nu = m.conormal(&[0.25, 0.5], &[0.0, 1.0]).unwrap();
        let (x, _) = flow_unwrapped(&m, nu.x(), nu.xi(), 1.0, Integrator::Exact).unwrap();
        assert!((x[1] - 1.5).abs() < 1e-15 && x[0] == 0.25);
        let back = flow(&m, &nu, 1.0, Integrator::Exact).unwrap();
        assert!(torus_distance(back.x(), nu.x()) < 1e-15);
    }

    #[test]
    fn rk4_tracks_exact_flow() {
        let m = kronecker(golden_slope());
        let nu = m
            .conormal(&[0.1, 0.3], &[-2.0 * golden_slope(), 2.0])
            .unwrap();
        assert!(rk4_deviation(&m, &nu, 10.0, 1e-3).unwrap() < 1e-8);
        assert!(matches!(
            flow(&m, &nu, 1.0, Integrator::Rk4 { step: 0.0 }),
            Err(GeometricError::InvalidStep(_))
        ));
    }
}
