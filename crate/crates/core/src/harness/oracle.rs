//! Brute-force reference computations, sharing as little code as possible
//! with the production paths.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::HarnessError;
use crate::geometric::RelativePeriodComponent;
use crate::model::{FlatFoliatedModel, GroupoidKernel};
use crate::spectral::GaussianProbe;

/// A relative period found by the grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePeriod {
    /// Signed period; the sign selects `±` the transverse direction.
    pub t: f64,
    /// Lattice point hit by `|t|·u + w`.
    pub lattice: Vec<i64>,
    pub shift_norm: f64,
    pub defect: f64,
}

/// Grid start for Newton refinement: `(defect, t, w, angle)`.
type Candidate = (f64, f64, Vec<f64>, f64);
/// Orthonormal frames recomputed from scratch by Gram–Schmidt in `g`.
struct Frames {
    metric: DMatrix<f64>,
    leaf: Vec<DVector<f64>>,
    transverse: Vec<DVector<f64>>,
}

fn frames(model: &FlatFoliatedModel) -> Frames {
    let g = model.metric().clone();
    let n = model.n();
    let dot = |a: &DVector<f64>, b: &DVector<f64>| a.dot(&(&g * b));
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut candidates: Vec<DVector<f64>> = model
        .leaf_basis()
        .iter()
        .map(|v| DVector::from_column_slice(v))
        .collect();
    candidates.extend((0..n).map(|k| DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 })));
    for mut v in candidates {
        for b in &basis {
            v -= b * dot(b, &v);
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 && basis.len() < n {
            basis.push(v / norm);
        }
    }
    let transverse = basis.split_off(model.p());
    Frames {
        metric: g,
        leaf: basis,
        transverse,
    }
}

/// Searches the `(t, u, w)` parameter space on a grid of spacing `step` for
/// near-solutions of `t·u + w ∈ ℤⁿ` with `u` a unit transverse vector,
/// `0 < t ≤ t_max` and `|w| < support`, then polishes each candidate with
/// Newton's method on the square system.
///
/// Supports codimension one and two.
pub fn brute_force_periods(
    model: &FlatFoliatedModel,
    support: f64,
    t_max: f64,
    step: f64,
) -> Result<Vec<OraclePeriod>, HarnessError> {
    let (p, q, n) = (model.p(), model.q(), model.n());
    if q > 2 {
        return Err(HarnessError::Oracle(format!(
            "grid oracle supports codimension ≤ 2, got {q}"
        )));
    }
    let f = frames(model);
    let g = &f.metric;
    let angles: Vec<f64> = if q == 1 {
        vec![0.0, PI]
    } else {
        let count = (2.0 * PI * t_max / step).ceil() as usize;
        (0..count)
            .map(|i| 2.0 * PI * i as f64 / count as f64)
            .collect()
    };
    let direction = |theta: f64| -> (DVector<f64>, DVector<f64>) {
        if q == 1 {
            (&f.transverse[0] * theta.cos(), DVector::zeros(n))
        } else {
            (
                &f.transverse[0] * theta.cos() + &f.transverse[1] * theta.sin(),
                &f.transverse[1] * theta.cos() - &f.transverse[0] * theta.sin(),
            )
        }
    };
    let t_count = (t_max / step).ceil() as usize;
    let s_count = (2.0 * support / step).ceil() as usize + 1;
    let threshold = step * (n as f64).sqrt() * (1.0 + t_max * q.saturating_sub(1) as f64);
    // candidates keyed by (lattice point, angle bucket) keep the best start
    let mut best: BTreeMap<(Vec<i64>, i64), Candidate> = BTreeMap::new();
    let mut s = vec![0usize; p];
    for &theta in &angles {
        let (u, _) = direction(theta);
        for ti in 1..=t_count {
            let t = ti as f64 * step;
            let base = &u * t;
            s.iter_mut().for_each(|v| *v = 0);
            loop {
                let coeffs: Vec<f64> = s.iter().map(|k| -support + *k as f64 * step).collect();
                let mut x = base.clone();
                for (e, c) in f.leaf.iter().zip(&coeffs) {
                    x += e * *c;
                }
                let k: Vec<i64> = x.iter().map(|v| v.round() as i64).collect();
                let r = DVector::from_fn(n, |i, _| x[i] - k[i] as f64);
                let defect = r.dot(&(g * &r)).sqrt();
                if defect < threshold && k.iter().any(|v| *v != 0) {
                    let bucket = if q == 1 { (theta > 1.0) as i64 } else { 0 };
                    let entry =
                        best.entry((k, bucket))
                            .or_insert((f64::INFINITY, 0.0, Vec::new(), 0.0));
                    if defect < entry.0 {
                        *entry = (defect, t, coeffs.clone(), theta);
                    }
                }
                let mut j = 0;
                while j < p {
                    s[j] += 1;
                    if s[j] < s_count {
                        break;
                    }
                    s[j] = 0;
                    j += 1;
                }
                if j == p {
                    break;
                }
            }
        }
    }

    let mut out = Vec::new();
    for ((k, _), (_, t0, w0, theta0)) in best {
        let target = DVector::from_fn(n, |i, _| k[i] as f64);
        let (mut t, mut w, mut theta) = (t0, w0, theta0);
        for _ in 0..50 {
            let (u, du) = direction(theta);
            let mut x = &u * t;
            for (e, c) in f.leaf.iter().zip(&w) {
                x += e * *c;
            }
            let r = &x - &target;
            if r.amax() < 1e-15 {
                break;
            }
            // unknowns (t, w, θ) for q = 2; (t, w) for q = 1
            let mut jac = DMatrix::zeros(n, n);
            jac.set_column(0, &u);
            for (i, e) in f.leaf.iter().enumerate() {
                jac.set_column(1 + i, e);
            }
            if q == 2 {
                jac.set_column(1 + p, &(&du * t));
            }
            let Some(delta) = jac.lu().solve(&r) else {
                break;
            };
            t -= delta[0];
            for i in 0..p {
                w[i] -= delta[1 + i];
            }
            if q == 2 {
                theta -= delta[1 + p];
            }
        }
        let (u, _) = direction(theta);
        let mut x = &u * t;
        let mut wv = DVector::zeros(n);
        for (e, c) in f.leaf.iter().zip(&w) {
            wv += e * *c;
        }
        x += &wv;
        let r = &x - &target;
        let defect = r.dot(&(g * &r)).sqrt();
        let shift_norm = wv.dot(&(g * &wv)).sqrt();
        if defect < 1e-10 && t > 0.0 && t <= t_max && shift_norm < support {
            // sign of the period: u along +h (q = 1), always + for q = 2
            let sign = if q == 1 && u.dot(&(g * &f.transverse[0])) < 0.0 {
                -1.0
            } else {
                1.0
            };
            out.push(OraclePeriod {
                t: sign * t,
                lattice: k,
                shift_norm,
                defect,
            });
        }
    }
    out.sort_by(|a, b| {
        a.t.abs()
            .total_cmp(&b.t.abs())
            .then(a.lattice.cmp(&b.lattice))
    });
    Ok(out)
}

/// Worst mismatch between enumerated components and the grid oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodAgreement {
    pub matched: usize,
    pub unmatched_components: Vec<Vec<i64>>,
    pub unmatched_oracle: Vec<Vec<i64>>,
    pub max_t_error: f64,
    pub max_shift_error: f64,
}

impl PeriodAgreement {
    pub fn pass(&self, tol: f64) -> bool {
        self.unmatched_components.is_empty()
            && self.unmatched_oracle.is_empty()
            && self.max_t_error <= tol
            && self.max_shift_error <= tol
    }
}

/// Matches components with positive `t` against oracle periods by lattice
/// point (components with `t < 0` are the `−ξ̂` copies of the same points).
pub fn compare_periods(
    components: &[RelativePeriodComponent],
    oracle: &[OraclePeriod],
    q: usize,
) -> PeriodAgreement {
    let mut report = PeriodAgreement {
        matched: 0,
        unmatched_components: Vec::new(),
        unmatched_oracle: Vec::new(),
        max_t_error: 0.0,
        max_shift_error: 0.0,
    };
    let positive: Vec<&RelativePeriodComponent> = components.iter().filter(|c| c.t > 0.0).collect();
    let mut used = vec![false; oracle.len()];
    for c in &positive {
        let hit = oracle
            .iter()
            .enumerate()
            .find(|(i, o)| !used[*i] && o.lattice == c.v);
        match hit {
            Some((i, o)) => {
                used[i] = true;
                report.matched += 1;
                // in codimension one the oracle's sign is that of the
                // transverse component of v, which is irrelevant here
                let t = if q == 1 { o.t.abs() } else { o.t };
                report.max_t_error = report.max_t_error.max((t - c.t).abs());
                report.max_shift_error = report
                    .max_shift_error
                    .max((o.shift_norm - c.shift_norm).abs());
            }
            None => report.unmatched_components.push(c.v.clone()),
        }
    }
    for (o, u) in oracle.iter().zip(&used) {
        if !u {
            report.unmatched_oracle.push(o.lattice.clone());
        }
    }
    report
}

/// `θ(f) = Σ_m ĸ(m) f̂(λ_m)` over a full box of lattice vectors, with the
/// leaf/transverse split computed through `Π_V = L(LᵀgL)⁻¹Lᵀg` and no probe
/// window. Lines are kept under the same truncation `λ ≤ Λ`, `|ζ| ≤ Ω` as
/// the enumerator.
pub fn naive_spectral_sum(
    model: &FlatFoliatedModel,
    kernel: &GroupoidKernel,
    cutoff: f64,
    leaf_cutoff: f64,
    probe: &GaussianProbe,
) -> Complex64 {
    let n = model.n();
    let g = model.metric();
    let g_inv = g.clone().try_inverse().expect("metric is SPD");
    let l = DMatrix::from_fn(n, model.p(), |i, j| model.leaf_basis()[j][i]);
    let leaf_gram_inv = (l.transpose() * g * &l)
        .try_inverse()
        .expect("leaf basis has full rank");
    // ζ² = ξᵀ L (LᵀgL)⁻¹ Lᵀ ξ, the squared norm of ξ restricted to V
    let leaf_form = &l * leaf_gram_inv * l.transpose();
    let c = model.drift();
    let c_norm = c.dot(&(g * c)).sqrt();
    let r2 = cutoff * cutoff + leaf_cutoff * leaf_cutoff;
    let radius = 0.5 * (c_norm + (c_norm * c_norm + 4.0 * r2).sqrt());
    let bounds: Vec<i64> = (0..n)
        .map(|k| (radius * g[(k, k)].sqrt() / (2.0 * PI)).ceil() as i64)
        .collect();

    let mut m: Vec<i64> = bounds.iter().map(|b| -b).collect();
    let (mut sum, mut carry) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    loop {
        let xi = DVector::from_fn(n, |i, _| 2.0 * PI * m[i] as f64);
        let zeta2 = xi.dot(&(&leaf_form * &xi)).max(0.0);
        let eta2 = (xi.dot(&(&g_inv * &xi)) - zeta2).max(0.0);
        let lambda2 = 1.0 + eta2 + c.dot(&xi);
        if lambda2 >= 0.0 && lambda2 <= cutoff * cutoff && zeta2 <= leaf_cutoff * leaf_cutoff {
            let d = lambda2.sqrt() - probe.s;
            let fhat = (2.0 * PI).sqrt()
                * probe.eps
                * Complex64::from_polar((-0.5 * probe.eps * probe.eps * d * d).exp(), probe.t0 * d);
            let term = fhat * kernel.spectral_weight(zeta2.sqrt());
            // Neumaier summation
            let t = sum + term;
            for (part, (a, b)) in [
                (&mut carry.re, (sum.re, term.re)),
                (&mut carry.im, (sum.im, term.im)),
            ] {
                let s = a + b;
                *part += if a.abs() >= b.abs() {
                    (a - s) + b
                } else {
                    (b - s) + a
                };
            }
            sum = t;
        }
        let mut k = n;
        loop {
            if k == 0 {
                return sum + carry;
            }
            k -= 1;
            if m[k] < bounds[k] {
                m[k] += 1;
                for j in k + 1..n {
                    m[j] = -bounds[j];
                }
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometric::find_relative_periods;
    use crate::model::presets::*;
    use crate::spectral::{enumerate_for_kernel, smoothed_trace};

    #[test]
    fn grid_oracle_matches_enumeration_on_product() {
        let m = product_2d([0.0, 0.0]);
        let k = GroupoidKernel::unit_bump(&m, 1.5).unwrap();
        let comps = find_relative_periods(&m, &k, 2.5).unwrap();
        let oracle = brute_force_periods(&m, 1.5, 2.5, 5e-3).unwrap();
        let agreement = compare_periods(&comps, &oracle, 1);
        assert!(agreement.pass(1e-12), "{agreement:?}");
        assert_eq!(agreement.matched, 12);
    }

    #[test]
    fn grid_oracle_in_codimension_two() {
        let m = circle_in_t3();
        let k = GroupoidKernel::unit_bump(&m, 0.9).unwrap();
        let comps = find_relative_periods(&m, &k, 1.5).unwrap();
        let oracle = brute_force_periods(&m, 0.9, 1.5, 1e-2).unwrap();
        let agreement = compare_periods(&comps, &oracle, 2);
        assert!(agreement.pass(1e-10), "{agreement:?}");
        assert_eq!(agreement.matched, 8);
    }

    #[test]
    fn naive_sum_matches_windowed_sum() {
        let m = kronecker(golden_slope());
        let k = GroupoidKernel::unit_bump(&m, 2.0).unwrap();
        let spec = enumerate_for_kernel(&m, &k, 150.0, 5_000_000).unwrap();
        let w = spec.weights(&k);
        let probe = GaussianProbe::new(0.8509, 0.1, 60.0);
        let fast = smoothed_trace(&spec, &w, 1, &probe).unwrap().value;
        let slow = naive_spectral_sum(&m, &k, 150.0, spec.leaf_cutoff(), &probe);
        assert!(
            (fast - slow).norm() < 1e-10 * slow.norm(),
            "{fast} vs {slow}"
        );
    }
}
