//! Spectrum of `P = √A` and the regularized trace `θ_k`.
//!
//! `A` is diagonal on plane waves, so `P e_m = λ_m e_m` with
//! `λ_m = √(1 + |η|² + 2π c·m)` where `η` are the transverse coordinates of
//! `ξ = 2πm`. Every eigenvalue has infinite multiplicity (the leaf
//! frequency is free), but the spectral weights `ψ̂(ζ)` decay in the leaf
//! frequency `ζ`, so the enumeration is truncated at `|ζ| ≤ Ω` as well as at
//! `λ ≤ Λ`.

mod probe;
mod scan;

pub use probe::{
    amplitude_probe, probe_window, smoothed_trace, GaussianProbe, ProbeOptions, TraceProbeResult,
    TraceValue, WINDOW_SIGMAS,
};
pub use scan::{singularity_scan, ScanOptions, ScanPeak, ScanResult};

use nalgebra::DVector;
use num_complex::Complex64;
use std::collections::HashMap;
use std::f64::consts::PI;
use thiserror::Error;

use crate::model::{FlatFoliatedModel, GroupoidKernel};
use crate::numerics::{unit_ball_volume, CompensatedSum};

/// Default budget on the number of stored lines.
pub const DEFAULT_MAX_LINES: usize = 15_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("cutoff Λ = {0} must exceed 1")]
    CutoffTooLow(f64),
    #[error("leaf-frequency cutoff must be positive and finite, got {0}")]
    InvalidLeafCutoff(f64),
    #[error("enumeration would produce about {projected} lines, over the budget of {budget}")]
    BudgetExceeded { projected: usize, budget: usize },
    #[error("cutoff Λ = {cutoff} too small for s = {s}, ε = {eps}: tail bound {tail:.3e} exceeds 1% of the partial sum {partial:.3e}")]
    TailTooLarge {
        cutoff: f64,
        s: f64,
        eps: f64,
        tail: f64,
        partial: f64,
    },
    #[error("probe width ε must be positive, got {0}")]
    InvalidWidth(f64),
    #[error("frequency ladder must be strictly increasing with at least 4 entries")]
    InvalidLadder,
    #[error("scan grid step {step} exceeds ε/4 = {limit}")]
    GridTooCoarse { step: f64, limit: f64 },
    #[error("invalid scan range [{0}, {1}]")]
    InvalidRange(f64, f64),
}

/// One eigenfunction `e_m` of `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLine {
    pub m: Vec<i64>,
    pub lambda: f64,
    /// `ζ_i = ξ(e_i)` for the orthonormal leaf frame.
    pub leaf_freq: Vec<f64>,
    /// `2π Π_H m` expressed as a covector, i.e. the `H`-part of `ξ`.
    pub trans_freq: Vec<f64>,
}

/// Eigenvalue of `P` on `e_m`, if `A` is positive there.
pub fn eigenvalue(model: &FlatFoliatedModel, m: &[i64]) -> f64 {
    model.operator_eigenvalue(m).sqrt()
}

/// Enumerated spectrum stored as flat arrays.
#[derive(Debug, Clone)]
pub struct Spectrum {
    n: usize,
    cutoff: f64,
    leaf_cutoff: f64,
    lattice: Vec<i32>,
    lambda: Vec<f64>,
    leaf_norm: Vec<f64>,
    /// Indices sorted by `(λ, index)`.
    by_lambda: Vec<u32>,
    leaf_frame_t: Vec<Vec<f64>>,
    transverse_dual: Vec<Vec<f64>>,
}

/// Upper bound on `|η|` over lines with `λ ≤ Λ`, using `|c·ξ| ≤ |c|_g |η|`.
fn transverse_radius(model: &FlatFoliatedModel, cutoff: f64) -> f64 {
    let c = model.norm_g(model.drift().as_slice());
    0.5 * c + (cutoff * cutoff - 1.0 + 0.25 * c * c).max(0.0).sqrt()
}

/// Projected number of lattice points with `|η| ≤ ρ_H` and `|ζ| ≤ Ω`.
pub fn projected_line_count(model: &FlatFoliatedModel, cutoff: f64, leaf_cutoff: f64) -> f64 {
    let rho = transverse_radius(model, cutoff);
    let (p, q) = (model.p(), model.q());
    unit_ball_volume(q)
        * rho.powi(q as i32)
        * unit_ball_volume(p)
        * leaf_cutoff.powi(p as i32)
        * model.volume()
        / (2.0 * PI).powi(model.n() as i32)
}

/// All lattice vectors with `λ_m ≤ Λ` and leaf frequency `|ζ| ≤ Ω`, in
/// lexicographic order of `m`.
pub fn enumerate_spectrum(
    model: &FlatFoliatedModel,
    cutoff: f64,
    leaf_cutoff: f64,
    max_lines: usize,
) -> Result<Spectrum, SpectralError> {
    if !(cutoff > 1.0) || !cutoff.is_finite() {
        return Err(SpectralError::CutoffTooLow(cutoff));
    }
    if !(leaf_cutoff > 0.0) || !leaf_cutoff.is_finite() {
        return Err(SpectralError::InvalidLeafCutoff(leaf_cutoff));
    }
    let projected = projected_line_count(model, cutoff, leaf_cutoff);
    if projected > max_lines as f64 {
        return Err(SpectralError::BudgetExceeded {
            projected: projected as usize,
            budget: max_lines,
        });
    }

    let n = model.n();
    let rho = transverse_radius(model, cutoff);
    let radius = (rho * rho + leaf_cutoff * leaf_cutoff).sqrt();
    let g = model.metric();
    let bounds: Vec<i64> = (0..n)
        .map(|k| (radius * g[(k, k)].sqrt() / (2.0 * PI)).floor() as i64)
        .collect();

    // Quadratic forms of the two constraints in m: |η|² = mᵀ Q_H m, |ζ|² = mᵀ Q_V m.
    let scale = 4.0 * PI * PI;
    let q_h = model.transverse_dual() * scale;
    let q_v = (model.dual_metric() - model.transverse_dual()) * scale;
    let drift: Vec<f64> = model.drift().iter().map(|c| 2.0 * PI * c).collect();
    let a_h = q_h[(n - 1, n - 1)];
    let a_v = q_v[(n - 1, n - 1)];

    let mut lattice = Vec::with_capacity((projected * 1.1) as usize * n + 16);
    let mut lambda = Vec::with_capacity((projected * 1.1) as usize + 16);
    let mut leaf_norm = Vec::with_capacity((projected * 1.1) as usize + 16);
    let mut prefix = vec![0i64; n - 1];
    for k in 0..n - 1 {
        prefix[k] = -bounds[k];
    }
    let cut_sq = cutoff * cutoff;
    let leaf_sq = leaf_cutoff * leaf_cutoff;
    let rho_sq = rho * rho;
    loop {
        // The last coordinate solves two quadratic inequalities a x² + 2 b x + c ≤ r².
        let pf: Vec<f64> = prefix.iter().map(|v| *v as f64).collect();
        let (b_h, c_h) = partial_form(&q_h, &pf);
        let (b_v, c_v) = partial_form(&q_v, &pf);
        let interval = quadratic_interval(a_h, b_h, c_h, rho_sq)
            .zip(quadratic_interval(a_v, b_v, c_v, leaf_sq))
            .map(|((l1, h1), (l2, h2))| (l1.max(l2), h1.min(h2)));
        if let Some((lo, hi)) = interval {
            let lo = (lo.ceil() as i64).max(-bounds[n - 1]);
            let hi = (hi.floor() as i64).min(bounds[n - 1]);
            for last in lo..=hi {
                let x = last as f64;
                let eta_sq = a_h * x * x + 2.0 * b_h * x + c_h;
                let zeta_sq = a_v * x * x + 2.0 * b_v * x + c_v;
                let drift_term: f64 =
                    pf.iter().zip(&drift).map(|(m, c)| m * c).sum::<f64>() + x * drift[n - 1];
                let a = 1.0 + eta_sq.max(0.0) + drift_term;
                if a <= cut_sq && zeta_sq <= leaf_sq && a > 0.0 {
                    lattice.extend(prefix.iter().map(|v| *v as i32));
                    lattice.push(last as i32);
                    lambda.push(a.sqrt());
                    leaf_norm.push(zeta_sq.max(0.0).sqrt());
                }
            }
        }
        // odometer over the leading coordinates
        let mut k = n - 1;
        loop {
            if k == 0 {
                return Ok(finish(
                    model,
                    cutoff,
                    leaf_cutoff,
                    lattice,
                    lambda,
                    leaf_norm,
                ));
            }
            k -= 1;
            if prefix[k] < bounds[k] {
                prefix[k] += 1;
                for j in k + 1..n - 1 {
                    prefix[j] = -bounds[j];
                }
                break;
            }
        }
    }
}

fn partial_form(q: &nalgebra::DMatrix<f64>, prefix: &[f64]) -> (f64, f64) {
    let last = prefix.len();
    let mut b = 0.0;
    let mut c = 0.0;
    for i in 0..last {
        b += q[(last, i)] * prefix[i];
        for j in 0..last {
            c += q[(i, j)] * prefix[i] * prefix[j];
        }
    }
    (b, c)
}

/// Solutions of `a x² + 2 b x + c ≤ r²`, widened by a small margin.
fn quadratic_interval(a: f64, b: f64, c: f64, r_sq: f64) -> Option<(f64, f64)> {
    let margin = 1e-9 * (1.0 + r_sq);
    if a <= 1e-14 * (1.0 + b.abs()) {
        if b.abs() <= 1e-14 {
            return if c <= r_sq + margin {
                Some((f64::NEG_INFINITY, f64::INFINITY))
            } else {
                None
            };
        }
        let x = (r_sq + margin - c) / (2.0 * b);
        return Some(if b > 0.0 {
            (f64::NEG_INFINITY, x)
        } else {
            (x, f64::INFINITY)
        });
    }
    let disc = b * b - a * (c - r_sq - margin);
    if disc < 0.0 {
        return None;
    }
    let root = disc.sqrt();
    let centre = -b / a;
    let lo = centre - root / a;
    let hi = centre + root / a;
    Some((lo - 1e-9, hi + 1e-9))
}

fn finish(
    model: &FlatFoliatedModel,
    cutoff: f64,
    leaf_cutoff: f64,
    lattice: Vec<i32>,
    lambda: Vec<f64>,
    leaf_norm: Vec<f64>,
) -> Spectrum {
    let mut by_lambda: Vec<u32> = (0..lambda.len() as u32).collect();
    by_lambda.sort_by(|a, b| {
        lambda[*a as usize]
            .total_cmp(&lambda[*b as usize])
            .then(a.cmp(b))
    });
    let n = model.n();
    let leaf_frame_t = (0..model.p())
        .map(|j| model.leaf_frame().column(j).iter().copied().collect())
        .collect();
    let transverse_dual = (0..n)
        .map(|i| (0..n).map(|j| model.transverse_dual()[(i, j)]).collect())
        .collect();
    Spectrum {
        n,
        cutoff,
        leaf_cutoff,
        lattice,
        lambda,
        leaf_norm,
        by_lambda,
        leaf_frame_t,
        transverse_dual,
    }
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn leaf_cutoff(&self) -> f64 {
        self.leaf_cutoff
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lattice_vector(&self, i: usize) -> &[i32] {
        &self.lattice[i * self.n..(i + 1) * self.n]
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambda
    }

    pub fn leaf_norms(&self) -> &[f64] {
        &self.leaf_norm
    }

    /// Line indices in increasing order of `λ`.
    pub fn lambda_order(&self) -> &[u32] {
        &self.by_lambda
    }

    /// Materializes line `i`.
    pub fn line(&self, i: usize) -> SpectralLine {
        let m: Vec<i64> = self.lattice_vector(i).iter().map(|v| *v as i64).collect();
        let xi: Vec<f64> = m.iter().map(|v| 2.0 * PI * *v as f64).collect();
        let leaf_freq = self
            .leaf_frame_t
            .iter()
            .map(|e| e.iter().zip(&xi).map(|(a, b)| a * b).sum())
            .collect();
        let xi_v = DVector::from_column_slice(&xi);
        let trans_freq = self
            .transverse_dual
            .iter()
            .map(|row| row.iter().zip(xi_v.iter()).map(|(a, b)| a * b).sum::<f64>())
            .collect::<Vec<f64>>();
        SpectralLine {
            m,
            lambda: self.lambda[i],
            leaf_freq,
            trans_freq,
        }
    }

    /// Index of the line with lattice vector `m`, if enumerated.
    pub fn find(&self, m: &[i64]) -> Option<usize> {
        (0..self.len()).find(|i| {
            self.lattice_vector(*i)
                .iter()
                .zip(m)
                .all(|(a, b)| *a as i64 == *b)
        })
    }

    /// Spectral weights `⟨R(k)e_m, e_m⟩` for every line, cached per distinct
    /// leaf frequency.
    pub fn weights(&self, kernel: &GroupoidKernel) -> Vec<f64> {
        let mut cache: HashMap<u64, f64> = HashMap::new();
        self.leaf_norm
            .iter()
            .map(|z| {
                *cache
                    .entry(z.to_bits())
                    .or_insert_with(|| kernel.spectral_weight(*z))
            })
            .collect()
    }

    /// Sum of `|weight|` over lines with `λ ∈ [lo, hi]`.
    pub fn weight_mass(&self, weights: &[f64], lo: f64, hi: f64) -> f64 {
        let start = self
            .by_lambda
            .partition_point(|i| self.lambda[*i as usize] < lo);
        let mut acc = CompensatedSum::new();
        for i in &self.by_lambda[start..] {
            let l = self.lambda[*i as usize];
            if l > hi {
                break;
            }
            acc.add(weights[*i as usize].abs());
        }
        acc.value()
    }

    /// Position range in [`Self::lambda_order`] covering `λ ∈ [lo, hi]`.
    pub fn lambda_range(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let start = self
            .by_lambda
            .partition_point(|i| self.lambda[*i as usize] < lo);
        let end = self
            .by_lambda
            .partition_point(|i| self.lambda[*i as usize] <= hi);
        start..end.max(start)
    }
}

/// Enumerates the spectrum with the leaf cutoff taken from the kernel.
pub fn enumerate_for_kernel(
    model: &FlatFoliatedModel,
    kernel: &GroupoidKernel,
    cutoff: f64,
    max_lines: usize,
) -> Result<Spectrum, SpectralError> {
    let leaf_cutoff = if kernel.is_empty() {
        1.0
    } else {
        kernel.fourier_cutoff()
    };
    enumerate_spectrum(model, cutoff, leaf_cutoff, max_lines)
}

/// Matrix element `⟨R(k)e_m, e_m⟩ = Σ φ̂(0)·ψ̂(ζ(m))`.
pub fn spectral_weight(model: &FlatFoliatedModel, kernel: &GroupoidKernel, m: &[i64]) -> Complex64 {
    let xi: Vec<f64> = m.iter().map(|v| 2.0 * PI * *v as f64).collect();
    let zeta = model
        .leaf_coords(&xi)
        .iter()
        .map(|z| z * z)
        .sum::<f64>()
        .sqrt();
    Complex64::new(kernel.spectral_weight(zeta), 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets::*;
    use crate::model::{build_model, BumpProfile, KernelTerm, TrigPolynomial};

    /// Dense Fourier-collocation matrix of `A` on an `N`-point grid per axis,
    /// applied to plane waves; its eigenvalues on trigonometric polynomials
    /// of degree < N/2 are exact.
    fn collocation_eigenvalues(model: &FlatFoliatedModel, modes: i64) -> Vec<f64> {
        use nalgebra::DMatrix;
        assert_eq!(model.n(), 2);
        let npts = (2 * modes + 1) as usize;
        let h = 1.0 / npts as f64;
        // first-derivative collocation matrix for odd N
        let d1 = DMatrix::from_fn(npts, npts, |j, k| {
            if j == k {
                0.0
            } else {
                let diff = j as f64 - k as f64;
                let sign = if (j + k) % 2 == 0 { 1.0 } else { -1.0 };
                PI * sign / (PI * diff * h).sin()
            }
        });
        let id = DMatrix::<f64>::identity(npts, npts);
        let dx = d1.kronecker(&id);
        let dy = id.kronecker(&d1);
        let grads = [dx, dy];
        let size = npts * npts;
        let gh = model.transverse_dual();
        let mut a = DMatrix::<f64>::identity(size, size);
        for i in 0..2 {
            for j in 0..2 {
                a -= &grads[i] * &grads[j] * gh[(i, j)];
            }
        }
        // c·D with D = -i∇ is not real; keep c = 0 here.
        let mut ev: Vec<f64> = a.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    #[test]
    fn product_spectrum_low_lines() {
        let m = product_2d([0.0, 0.0]);
        let s = enumerate_spectrum(&m, 10.0, 40.0, 1_000_000).unwrap();
        let mut ls: Vec<f64> = s.lambdas().to_vec();
        ls.sort_by(f64::total_cmp);
        ls.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        assert_eq!(ls.len(), 2);
        assert!((ls[0] - 1.0).abs() < 1e-15);
        assert!((ls[1] - (1.0 + 4.0 * PI * PI).sqrt()).abs() < 1e-12);
        assert!((ls[1] - 6.36).abs() < 0.01);
        // every |m₁| ≤ 40/2π on each of the m₂ ∈ {-1,0,1} rows
        assert_eq!(s.len(), 3 * 13);
    }

    #[test]
    fn matches_collocation_diagonalization() {
        let m = build_model(
            2,
            1,
            &[vec![1.0, 0.3]],
            &[vec![1.0, 0.2], vec![0.2, 1.5]],
            &[0.0, 0.0],
        )
        .unwrap();
        let modes = 8;
        let dense = collocation_eigenvalues(&m, modes);
        let mut direct: Vec<f64> = Vec::new();
        for a in -modes..=modes {
            for b in -modes..=modes {
                direct.push(m.operator_eigenvalue(&[a, b]));
            }
        }
        direct.sort_by(f64::total_cmp);
        for (x, y) in dense.iter().zip(&direct) {
            assert!((x - y).abs() <= 1e-9 * y.abs(), "{x} vs {y}");
        }
    }

    #[test]
    fn enumeration_is_complete_against_box_scan() {
        let m = build_model(
            3,
            1,
            &[vec![1.0, 0.4, -0.2]],
            &[
                vec![1.2, 0.1, 0.0],
                vec![0.1, 0.9, 0.05],
                vec![0.0, 0.05, 1.1],
            ],
            &[0.0, 0.0, 0.0],
        )
        .unwrap();
        let (cut, leaf) = (30.0, 25.0);
        let s = enumerate_spectrum(&m, cut, leaf, 10_000_000).unwrap();
        let mut expected = Vec::new();
        for a in -12i64..=12 {
            for b in -12i64..=12 {
                for c in -12i64..=12 {
                    let xi = [
                        2.0 * PI * a as f64,
                        2.0 * PI * b as f64,
                        2.0 * PI * c as f64,
                    ];
                    let z = m.leaf_coords(&xi)[0].abs();
                    if eigenvalue(&m, &[a, b, c]) <= cut && z <= leaf {
                        expected.push(vec![a, b, c]);
                    }
                }
            }
        }
        let got: Vec<Vec<i64>> = (0..s.len())
            .map(|i| s.lattice_vector(i).iter().map(|v| *v as i64).collect())
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn kronecker_lambda_depends_on_transverse_projection() {
        let a = golden_slope();
        let m = kronecker(a);
        let s = enumerate_spectrum(&m, 50.0, 30.0, 1_000_000).unwrap();
        for i in 0..s.len() {
            let line = s.line(i);
            let eta = 2.0 * PI * (line.m[1] as f64 - a * line.m[0] as f64) / (1.0 + a * a).sqrt();
            assert!((line.lambda - (1.0 + eta * eta).sqrt()).abs() < 1e-12 * line.lambda);
            let zeta = 2.0 * PI * (line.m[0] as f64 + a * line.m[1] as f64) / (1.0 + a * a).sqrt();
            assert!((line.leaf_freq[0] - zeta).abs() < 1e-10);
            // transverse covector is orthogonal to the leaf
            assert!((line.trans_freq[0] + a * line.trans_freq[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_drift_spectrum_is_symmetric() {
        let m = kronecker(golden_slope());
        let s = enumerate_spectrum(&m, 40.0, 30.0, 1_000_000).unwrap();
        for i in 0..s.len() {
            let neg: Vec<i64> = s.lattice_vector(i).iter().map(|v| -(*v as i64)).collect();
            let j = s.find(&neg).expect("parity partner");
            assert_eq!(s.lambdas()[i], s.lambdas()[j]);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let m = product_2d([0.0, 0.0]);
        let err = enumerate_spectrum(&m, 1e5, 1e4, 1000).unwrap_err();
        assert!(matches!(err, SpectralError::BudgetExceeded { .. }));
        assert!(matches!(
            enumerate_spectrum(&m, 0.5, 1.0, 10),
            Err(SpectralError::CutoffTooLow(_))
        ));
    }

    #[test]
    fn weight_examples() {
        let m = product_2d([0.0, 0.0]);
        let k = GroupoidKernel::unit_bump(&m, 2.0).unwrap();
        assert!((spectral_weight(&m, &k, &[0, 3]).re - 1.0).abs() < 1e-12);
        let b = BumpProfile::new(2.0, 1).unwrap();
        assert_eq!(
            spectral_weight(&m, &k, &[5, 1]).re,
            b.fourier(2.0 * PI * 5.0)
        );
        let phi = TrigPolynomial::new(
            2,
            vec![
                (vec![1, 0], Complex64::new(1.0, 0.0)),
                (vec![-1, 0], Complex64::new(1.0, 0.0)),
            ],
        )
        .unwrap();
        let off = GroupoidKernel::new(
            &m,
            vec![KernelTerm {
                weight: phi,
                profile: b,
            }],
        )
        .unwrap();
        assert_eq!(spectral_weight(&m, &off, &[0, 0]).norm(), 0.0);
    }
}
