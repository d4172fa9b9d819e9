//! Enumeration of relative periods.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{cleanness_check, fixed_point_density, leading_coefficient, GeometricError};
use crate::maslov::maslov_index;
use crate::model::{FlatFoliatedModel, GroupoidKernel};

/// One connected component of the relative fixed-point set on the cosphere
/// bundle: all `(x, ξ̂)` with `x` free on the torus, a fixed unit covector
/// and the leafwise witness `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativePeriodComponent {
    pub t: f64,
    /// Lattice vector with `t·∇p(ξ̂) + w = v`.
    pub v: Vec<i64>,
    /// Unit conormal covector `ξ̂`.
    pub direction: Vec<f64>,
    /// `ξ̂` in the orthonormal transverse frame.
    pub transverse_direction: Vec<f64>,
    /// Leafwise displacement `w = Π_V v`.
    pub shift: Vec<f64>,
    pub shift_norm: f64,
    pub dim: usize,
    pub maslov: i32,
    pub alpha0: Complex64,
    pub density_mass: f64,
}

impl RelativePeriodComponent {
    /// Bare component for lattice vector `v` and sign of `t`, without the
    /// derived quantities.
    pub fn from_lattice(
        model: &FlatFoliatedModel,
        v: &[i64],
        positive: bool,
    ) -> Result<Self, GeometricError> {
        let vf: Vec<f64> = v.iter().map(|k| *k as f64).collect();
        let v_h = model.project_transverse(&vf);
        let shift = model.project_leaf(&vf);
        let length = model.norm_g(&v_h);
        if !(length > 1e-12) {
            return Err(GeometricError::ZeroCovector);
        }
        let sign = if positive { 1.0 } else { -1.0 };
        let gv = model.metric() * DVector::from_column_slice(&v_h);
        let direction: Vec<f64> = gv.iter().map(|a| sign * a / length).collect();
        Ok(Self {
            t: sign * length,
            v: v.to_vec(),
            transverse_direction: model.transverse_coords(&direction),
            direction,
            shift_norm: model.norm_g(&shift),
            shift,
            dim: 0,
            maslov: 0,
            alpha0: Complex64::new(0.0, 0.0),
            density_mass: 0.0,
        })
    }

    /// The `t = 0` component (the diagonal), kept for checks only.
    pub fn diagonal(model: &FlatFoliatedModel, direction: &[f64]) -> Self {
        let norm = model.norm_dual(direction);
        let direction: Vec<f64> = direction.iter().map(|a| a / norm).collect();
        Self {
            t: 0.0,
            v: vec![0; model.n()],
            transverse_direction: model.transverse_coords(&direction),
            direction,
            shift: vec![0.0; model.n()],
            shift_norm: 0.0,
            dim: model.n(),
            maslov: 0,
            alpha0: Complex64::new(0.0, 0.0),
            density_mass: 0.0,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.t == 0.0
    }

    /// Fills in dimension, Maslov index, density and leading coefficient.
    pub fn complete(
        mut self,
        model: &FlatFoliatedModel,
        kernel: &GroupoidKernel,
    ) -> Result<Self, GeometricError> {
        let seed = self.v.iter().fold(0x5eed_u64, |h, k| {
            h.wrapping_mul(1_000_003).wrapping_add(*k as u64)
        }) ^ self.t.to_bits();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clean = cleanness_check(model, &self, 5, &mut rng);
        if !clean.clean {
            return Err(GeometricError::NotClean {
                t: self.t,
                found: clean.dim_found,
                expected: clean.dim_expected,
            });
        }
        self.dim = clean.component_dim;
        self.maslov = maslov_index(model, &self, 5, &mut rng)?.sigma;
        self.density_mass = fixed_point_density(model, &self)?.mass;
        self.alpha0 = leading_coefficient(model, kernel, &self)?;
        Ok(self)
    }
}

/// All components with `0 < |t| ≤ t_max` whose witness lies inside the
/// kernel support, sorted by `(|t|, −t, v)`.
pub fn find_relative_periods(
    model: &FlatFoliatedModel,
    kernel: &GroupoidKernel,
    t_max: f64,
) -> Result<Vec<RelativePeriodComponent>, GeometricError> {
    let support = kernel.support_radius();
    if kernel.is_empty() || !(t_max > 0.0) || support <= 0.0 {
        return Ok(Vec::new());
    }
    let n = model.n();
    // |v_k| ≤ |dx_k|_{g*} |v|_g and |v|_g² = |v_H|² + |w|².
    let radius = (t_max * t_max + support * support).sqrt();
    let bounds: Vec<i64> = (0..n)
        .map(|k| (radius * model.dual_metric()[(k, k)].sqrt()).floor() as i64 + 1)
        .collect();
    let mut v: Vec<i64> = bounds.iter().map(|b| -b).collect();
    let mut found = Vec::new();
    loop {
        if v.iter().any(|k| *k != 0) {
            let vf: Vec<f64> = v.iter().map(|k| *k as f64).collect();
            let length = model.norm_g(&model.project_transverse(&vf));
            let w = model.norm_g(&model.project_leaf(&vf));
            if length > 1e-12 && length <= t_max && w < support {
                for positive in [true, false] {
                    found.push(
                        RelativePeriodComponent::from_lattice(model, &v, positive)?
                            .complete(model, kernel)?,
                    );
                }
            }
        }
        let mut k = n;
        loop {
            if k == 0 {
                found.sort_by(|a, b| {
                    a.t.abs()
                        .total_cmp(&b.t.abs())
                        .then(b.t.total_cmp(&a.t))
                        .then(a.v.cmp(&b.v))
                });
                return Ok(found);
            }
            k -= 1;
            if v[k] < bounds[k] {
                v[k] += 1;
                for j in k + 1..n {
                    v[j] = -bounds[j];
                }
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets::*;

    #[test]
    fn product_periods_are_integers() {
        let m = product_2d([0.0, 0.0]);
        let k = GroupoidKernel::unit_bump(&m, 0.5).unwrap();
        let comps = find_relative_periods(&m, &k, 2.5).unwrap();
        let ts: Vec<f64> = comps.iter().map(|c| c.t).collect();
        assert_eq!(ts, vec![1.0, 1.0, -1.0, -1.0, 2.0, 2.0, -2.0, -2.0]);
        for c in &comps {
            assert_eq!(c.v[0], 0);
            assert_eq!(c.shift_norm, 0.0);
            assert_eq!(c.dim, 2);
            assert_eq!(c.maslov, 0);
        }
    }

    #[test]
    fn kronecker_shortest_period() {
        let a = golden_slope();
        let m = kronecker(a);
        let k = GroupoidKernel::unit_bump(&m, 2.0).unwrap();
        let comps = find_relative_periods(&m, &k, 1.0).unwrap();
        let r = (1.0 + a * a).sqrt();
        let c = comps
            .iter()
            .find(|c| c.v == vec![0, 1] && c.t > 0.0)
            .expect("v = (0,1)");
        assert!((c.t - 1.0 / r).abs() < 1e-14);
        assert!((c.shift_norm - a / r).abs() < 1e-14);
        assert!((c.shift_norm - 0.526).abs() < 1e-3);
    }

    #[test]
    fn short_window_is_empty() {
        let m = product_2d([0.0, 0.0]);
        let k = GroupoidKernel::unit_bump(&m, 0.5).unwrap();
        assert!(find_relative_periods(&m, &k, 0.9).unwrap().is_empty());
        assert!(find_relative_periods(&m, &GroupoidKernel::empty(), 5.0)
            .unwrap()
            .is_empty());
    }
}
