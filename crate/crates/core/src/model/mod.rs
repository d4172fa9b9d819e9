//! Linear foliations of flat tori.
//!
//! The manifold is `M = Rⁿ/Zⁿ` with a constant metric `g` and a linear leaf
//! subspace `V ⊂ Rⁿ` of dimension `p`. The horizontal bundle `H` is the
//! g-orthogonal complement of `V`. Constant metrics are automatically
//! bundle-like and the Bott connection on the conormal bundle is flat and
//! trivial, so every object in the trace formula has a closed form.
//!
//! Conventions used throughout the crate:
//!
//! * plane waves are `e_m(x) = exp(2πi m·x)` for `m ∈ Zⁿ`; the covector of
//!   `e_m` is `ξ = 2πm`;
//! * leafwise half-densities are trivialized by the Riemannian ones, so
//!   kernels and symbols are plain scalar functions;
//! * the operator is `A = I + Δ_H + c·D_H` with `D = -i∇`, whose symbol on
//!   `e_m` is `1 + |ξ_H|²_{g*} + c·ξ`.

mod kernel;

pub use kernel::{
    kernel_eval, BumpProfile, GroupoidKernel, KernelTerm, TrigPolynomial, NEGLIGIBLE_FOURIER,
};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::f64::consts::PI;
use thiserror::Error;

use crate::numerics::{torus_distance, wrap_unit};

/// Relative tolerance for the conormal condition `⟨ξ, v⟩ = 0`.
pub const CONORMAL_TOL: f64 = 1e-10;
/// Tolerance for `c ⊥_g V`.
pub const DRIFT_TRANSVERSE_TOL: f64 = 1e-12;
/// Tolerance for base-point and leafwise-shift checks.
pub const GEOMETRIC_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("leaf basis has numerical rank {rank}, expected {expected}")]
    RankDeficientLeafBasis { rank: usize, expected: usize },
    #[error("metric is not symmetric positive definite: {0}")]
    MetricNotSpd(String),
    #[error("drift is not g-orthogonal to the leaves (residual {0:.3e})")]
    DriftNotTransverse(f64),
    #[error("drift norm |c|_g = {0} must be < 1 for positivity of A")]
    DriftTooLarge(f64),
    #[error("covector is not conormal: relative leaf component {0:.3e}")]
    NotConormal(f64),
    #[error("covector is zero")]
    ZeroCovector,
    #[error("shift is not leafwise: residual {0:.3e}")]
    ShiftNotLeafwise(f64),
    #[error("base point mismatch: |π(ν) - r(γ)| = {0:.3e}")]
    BasePointMismatch(f64),
    #[error("invalid kernel: {0}")]
    Kernel(String),
}

/// A linear foliation of the flat torus together with the coefficients of
/// `A = I + Δ_H + c·D_H`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatFoliatedModel {
    n: usize,
    p: usize,
    leaf_basis: Vec<Vec<f64>>,
    metric: DMatrix<f64>,
    dual_metric: DMatrix<f64>,
    drift: DVector<f64>,
    /// n×p, g-orthonormal basis of V.
    leaf_frame: DMatrix<f64>,
    /// n×q, g-orthonormal basis of H, positively oriented after the leaf frame.
    transverse_frame: DMatrix<f64>,
    proj_leaf: DMatrix<f64>,
    proj_transverse: DMatrix<f64>,
    /// Dual metric of the horizontal part, `Σ h_i h_iᵀ`.
    transverse_dual: DMatrix<f64>,
    volume: f64,
}

/// Validates the inputs and precomputes frames and projectors.
pub fn build_model(
    n: usize,
    p: usize,
    leaf_basis: &[Vec<f64>],
    metric: &[Vec<f64>],
    drift: &[f64],
) -> Result<FlatFoliatedModel, ModelError> {
    if n < 2 {
        return Err(ModelError::Dimension(format!(
            "torus dimension n = {n} must be ≥ 2"
        )));
    }
    if p == 0 || p >= n {
        return Err(ModelError::Dimension(format!(
            "leaf dimension p = {p} must satisfy 1 ≤ p < n = {n}"
        )));
    }
    if leaf_basis.len() != p || leaf_basis.iter().any(|v| v.len() != n) {
        return Err(ModelError::Dimension(format!(
            "leaf basis must be {p} vectors of length {n}"
        )));
    }
    if metric.len() != n || metric.iter().any(|r| r.len() != n) {
        return Err(ModelError::Dimension(format!("metric must be {n}×{n}")));
    }
    if drift.len() != n {
        return Err(ModelError::Dimension(format!("drift must have length {n}")));
    }
    if leaf_basis
        .iter()
        .flatten()
        .chain(metric.iter().flatten())
        .chain(drift)
        .any(|x| !x.is_finite())
    {
        return Err(ModelError::Dimension("non-finite input".into()));
    }

    let g = DMatrix::from_fn(n, n, |i, j| metric[i][j]);
    let scale = g.amax();
    let asym = (&g - g.transpose()).amax();
    if asym > 1e-12 * scale.max(1.0) {
        return Err(ModelError::MetricNotSpd(format!("asymmetry {asym:.3e}")));
    }
    let g = (&g + g.transpose()) * 0.5;
    let eig = g.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig <= 0.0 {
        return Err(ModelError::MetricNotSpd(format!(
            "smallest eigenvalue {min_eig:.3e}"
        )));
    }
    let dual_metric = g
        .clone()
        .try_inverse()
        .ok_or_else(|| ModelError::MetricNotSpd("singular".into()))?;

    let basis = DMatrix::from_fn(n, p, |i, j| leaf_basis[j][i]);
    let sv = basis.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let rank = sv.iter().filter(|s| **s > 1e-10 * smax).count();
    if smax == 0.0 || rank < p {
        return Err(ModelError::RankDeficientLeafBasis { rank, expected: p });
    }

    let inner = |a: &DVector<f64>, b: &DVector<f64>| a.dot(&(&g * b));
    let mut frame: Vec<DVector<f64>> = Vec::with_capacity(n);
    for j in 0..p {
        let mut u = basis.column(j).into_owned();
        for _ in 0..2 {
            for f in &frame {
                u -= f * inner(f, &u);
            }
        }
        let norm = inner(&u, &u).sqrt();
        frame.push(u / norm);
    }
    let mut transverse: Vec<DVector<f64>> = Vec::with_capacity(n - p);
    for k in 0..n {
        if transverse.len() == n - p {
            break;
        }
        let mut u = DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 });
        for _ in 0..2 {
            for f in frame.iter().chain(transverse.iter()) {
                u -= f * inner(f, &u);
            }
        }
        let norm = inner(&u, &u).sqrt();
        if norm > 1e-6 {
            transverse.push(u / norm);
        }
    }
    let leaf_frame = DMatrix::from_columns(&frame);
    let mut transverse_frame = DMatrix::from_columns(&transverse);
    let mut full = DMatrix::zeros(n, n);
    full.view_mut((0, 0), (n, p)).copy_from(&leaf_frame);
    full.view_mut((0, p), (n, n - p))
        .copy_from(&transverse_frame);
    if full.determinant() < 0.0 {
        let mut last = transverse_frame.column_mut(n - p - 1);
        last.neg_mut();
    }

    let proj_leaf = &leaf_frame * leaf_frame.transpose() * &g;
    let proj_transverse = &transverse_frame * transverse_frame.transpose() * &g;
    let transverse_dual = &transverse_frame * transverse_frame.transpose();

    let c = DVector::from_column_slice(drift);
    let c_norm = inner(&c, &c).sqrt();
    let residual = (0..p)
        .map(|j| inner(&c, &leaf_frame.column(j).into_owned()).abs())
        .fold(0.0, f64::max);
    if residual > DRIFT_TRANSVERSE_TOL {
        return Err(ModelError::DriftNotTransverse(residual));
    }
    if c_norm >= 1.0 {
        return Err(ModelError::DriftTooLarge(c_norm));
    }

    let volume = g.determinant().sqrt();
    Ok(FlatFoliatedModel {
        n,
        p,
        leaf_basis: leaf_basis.to_vec(),
        metric: g,
        dual_metric,
        drift: c,
        leaf_frame,
        transverse_frame,
        proj_leaf,
        proj_transverse,
        transverse_dual,
        volume,
    })
}

impl FlatFoliatedModel {
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> usize {
        self.p
    }
    /// Codimension of the foliation.
    pub fn q(&self) -> usize {
        self.n - self.p
    }
    pub fn leaf_basis(&self) -> &[Vec<f64>] {
        &self.leaf_basis
    }
    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }
    pub fn dual_metric(&self) -> &DMatrix<f64> {
        &self.dual_metric
    }
    pub fn drift(&self) -> &DVector<f64> {
        &self.drift
    }
    pub fn leaf_frame(&self) -> &DMatrix<f64> {
        &self.leaf_frame
    }
    pub fn transverse_frame(&self) -> &DMatrix<f64> {
        &self.transverse_frame
    }
    /// g-orthogonal projector onto V.
    pub fn proj_leaf(&self) -> &DMatrix<f64> {
        &self.proj_leaf
    }
    /// g-orthogonal projector onto H.
    pub fn proj_transverse(&self) -> &DMatrix<f64> {
        &self.proj_transverse
    }
    pub fn transverse_dual(&self) -> &DMatrix<f64> {
        &self.transverse_dual
    }
    /// Riemannian volume of the torus, `√det g`.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn has_drift(&self) -> bool {
        self.drift.iter().any(|c| *c != 0.0)
    }

    pub fn norm_g(&self, v: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        v.dot(&(&self.metric * &v)).sqrt()
    }

    pub fn norm_dual(&self, xi: &[f64]) -> f64 {
        let v = DVector::from_column_slice(xi);
        v.dot(&(&self.dual_metric * &v)).sqrt()
    }

    /// Components `ξ(e_i)` of a covector along the orthonormal leaf frame.
    pub fn leaf_coords(&self, xi: &[f64]) -> Vec<f64> {
        frame_coords(&self.leaf_frame, xi)
    }

    /// Components `ξ(h_i)` along the orthonormal transverse frame; for a
    /// conormal covector these are Darboux coordinates with `|η| = |ξ|_{g*}`.
    pub fn transverse_coords(&self, xi: &[f64]) -> Vec<f64> {
        frame_coords(&self.transverse_frame, xi)
    }

    /// Leaf-frame coordinates of a tangent vector `w ∈ V`.
    pub fn leaf_vector_coords(&self, w: &[f64]) -> Vec<f64> {
        let w = DVector::from_column_slice(w);
        let gw = &self.metric * w;
        (0..self.p)
            .map(|j| self.leaf_frame.column(j).dot(&gw))
            .collect()
    }

    /// Transverse-frame coordinates of a tangent vector.
    pub fn transverse_vector_coords(&self, v: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(v);
        let gv = &self.metric * v;
        (0..self.q())
            .map(|j| self.transverse_frame.column(j).dot(&gv))
            .collect()
    }

    /// Conormal covector with transverse coordinates `eta`.
    pub fn covector_from_transverse(&self, eta: &[f64]) -> Vec<f64> {
        let h = DVector::from_column_slice(eta);
        let v = &self.transverse_frame * h;
        (&self.metric * v).iter().copied().collect()
    }

    pub fn project_leaf(&self, v: &[f64]) -> Vec<f64> {
        (&self.proj_leaf * DVector::from_column_slice(v))
            .iter()
            .copied()
            .collect()
    }

    pub fn project_transverse(&self, v: &[f64]) -> Vec<f64> {
        (&self.proj_transverse * DVector::from_column_slice(v))
            .iter()
            .copied()
            .collect()
    }

    /// Extension `p̃(x, ξ) = |ξ_H|_{g*}` of the transverse symbol of `√A`
    /// to all of `T*M`; it agrees with `σ_P` on the conormal bundle.
    pub fn symbol_extension(&self, xi: &[f64]) -> f64 {
        let xi = DVector::from_column_slice(xi);
        xi.dot(&(&self.transverse_dual * &xi)).max(0.0).sqrt()
    }

    /// `∇_ξ p̃ = G_H* ξ / |ξ_H|`.
    pub fn symbol_gradient(&self, xi: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(xi);
        let gx = &self.transverse_dual * &v;
        let norm = v.dot(&gx).max(0.0).sqrt();
        gx.iter().map(|a| a / norm).collect()
    }

    /// Builds a validated conormal vector; `x` is wrapped into `[0,1)ⁿ`.
    pub fn conormal(&self, x: &[f64], xi: &[f64]) -> Result<ConormalVector, ModelError> {
        if x.len() != self.n || xi.len() != self.n {
            return Err(ModelError::Dimension(format!(
                "conormal vector needs length-{} x and ξ",
                self.n
            )));
        }
        let norm: f64 = xi.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(ModelError::ZeroCovector);
        }
        for v in &self.leaf_basis {
            let vn: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            let pairing: f64 = xi.iter().zip(v).map(|(a, b)| a * b).sum();
            let rel = pairing.abs() / (norm * vn);
            if rel >= CONORMAL_TOL {
                return Err(ModelError::NotConormal(rel));
            }
        }
        Ok(ConormalVector {
            x: x.iter().map(|a| wrap_unit(*a)).collect(),
            xi: xi.to_vec(),
        })
    }

    /// Builds a groupoid element `γ` with `r(γ) = target` and leafwise shift `w`.
    pub fn holonomy(&self, target: &[f64], shift: &[f64]) -> Result<HolonomyElement, ModelError> {
        if target.len() != self.n || shift.len() != self.n {
            return Err(ModelError::Dimension(format!(
                "holonomy element needs length-{} vectors",
                self.n
            )));
        }
        let projected = self.project_leaf(shift);
        let residual = shift
            .iter()
            .zip(&projected)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual > GEOMETRIC_TOL * (1.0 + self.norm_g(shift)) {
            return Err(ModelError::ShiftNotLeafwise(residual));
        }
        Ok(HolonomyElement {
            target: target.iter().map(|a| wrap_unit(*a)).collect(),
            shift: shift.to_vec(),
        })
    }

    /// Transverse principal symbol `σ_P(ν) = |ξ|_{g*}`.
    pub fn transverse_symbol(&self, nu: &ConormalVector) -> f64 {
        self.norm_dual(&nu.xi)
    }

    /// Restriction of the subprincipal symbol of `P = √A` to the conormal
    /// bundle: `(c·ξ) / (2 σ_P(ν))`.
    pub fn subprincipal_p(&self, nu: &ConormalVector) -> f64 {
        let c_xi: f64 = self.drift.iter().zip(&nu.xi).map(|(a, b)| a * b).sum();
        c_xi / (2.0 * self.transverse_symbol(nu))
    }

    /// Symbol of `A` on the plane wave `e_m`.
    pub fn operator_eigenvalue(&self, m: &[i64]) -> f64 {
        let xi: Vec<f64> = m.iter().map(|k| 2.0 * PI * *k as f64).collect();
        let eta = self.transverse_coords(&xi);
        let c_xi: f64 = self.drift.iter().zip(&xi).map(|(a, b)| a * b).sum();
        1.0 + eta.iter().map(|a| a * a).sum::<f64>() + c_xi
    }

    /// A uniformly random point of the torus.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.n).map(|_| rng.gen::<f64>()).collect()
    }

    /// A random nonzero conormal vector.
    pub fn random_conormal<R: Rng + ?Sized>(&self, rng: &mut R) -> ConormalVector {
        let x = self.random_point(rng);
        loop {
            let eta: Vec<f64> = (0..self.q()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if eta.iter().map(|a| a * a).sum::<f64>() > 1e-4 {
                let xi = self.covector_from_transverse(&eta);
                return ConormalVector { x, xi };
            }
        }
    }

    /// A random leafwise shift with leaf-frame coordinates in `[-radius, radius]ᵖ`.
    pub fn random_leaf_shift<R: Rng + ?Sized>(&self, rng: &mut R, radius: f64) -> Vec<f64> {
        let s = DVector::from_fn(self.p, |_, _| rng.gen_range(-radius..radius));
        (&self.leaf_frame * s).iter().copied().collect()
    }
}

fn frame_coords(frame: &DMatrix<f64>, xi: &[f64]) -> Vec<f64> {
    (0..frame.ncols())
        .map(|j| frame.column(j).iter().zip(xi).map(|(a, b)| a * b).sum())
        .collect()
}

/// A point `ν = (x, ξ)` of `Ñ*F`: `ξ ≠ 0` annihilates the leaf directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConormalVector {
    x: Vec<f64>,
    xi: Vec<f64>,
}

impl ConormalVector {
    /// Base point `π(ν)` in `[0,1)ⁿ`.
    pub fn x(&self) -> &[f64] {
        &self.x
    }
    pub fn xi(&self) -> &[f64] {
        &self.xi
    }
}

/// Element `γ` of the holonomy groupoid of a linear foliation.
///
/// Holonomy is trivial, so `γ` is determined by its target `r(γ)` and the
/// leafwise displacement `w ∈ V`; the source is `s(γ) = r(γ) - w mod Zⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HolonomyElement {
    target: Vec<f64>,
    shift: Vec<f64>,
}

impl HolonomyElement {
    pub fn target(&self) -> &[f64] {
        &self.target
    }
    pub fn shift(&self) -> &[f64] {
        &self.shift
    }
    pub fn source(&self) -> Vec<f64> {
        self.target
            .iter()
            .zip(&self.shift)
            .map(|(x, w)| wrap_unit(x - w))
            .collect()
    }

    /// Unit element at `x`.
    pub fn unit(x: &[f64]) -> Self {
        Self {
            target: x.iter().map(|a| wrap_unit(*a)).collect(),
            shift: vec![0.0; x.len()],
        }
    }

    pub fn inverse(&self) -> Self {
        Self {
            target: self.source(),
            shift: self.shift.iter().map(|w| -w).collect(),
        }
    }

    /// `self ∘ first`: follow `first`, then `self`. Requires `r(first) = s(self)`.
    pub fn compose(&self, first: &HolonomyElement) -> Result<HolonomyElement, ModelError> {
        let gap = torus_distance(first.target(), &self.source());
        if gap > GEOMETRIC_TOL {
            return Err(ModelError::BasePointMismatch(gap));
        }
        Ok(Self {
            target: self.target.clone(),
            shift: self
                .shift
                .iter()
                .zip(&first.shift)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }
}

/// Codifferential of the holonomy map, `dh*_γ : N*_{r(γ)}F → N*_{s(γ)}F`.
///
/// The Bott connection is trivial on linear foliations, so the covector is
/// carried over unchanged to the source point.
pub fn holonomy_transport(
    gamma: &HolonomyElement,
    nu: &ConormalVector,
) -> Result<ConormalVector, ModelError> {
    let gap = torus_distance(&nu.x, &gamma.target);
    if gap > GEOMETRIC_TOL {
        return Err(ModelError::BasePointMismatch(gap));
    }
    Ok(ConormalVector {
        x: gamma.source(),
        xi: nu.xi.clone(),
    })
}

/// Maximum of `|d p(ν)(X)|` over sampled conormal vectors and leafwise
/// directions `X` (base displacement along a leaf vector, no covector
/// variation), for an arbitrary symbol `p(x, ξ)`.
///
/// Derivatives are central differences with step `1e-5`.
pub fn holonomy_invariance_residual<R, F>(
    model: &FlatFoliatedModel,
    symbol: F,
    sample_count: usize,
    rng: &mut R,
) -> f64
where
    R: Rng + ?Sized,
    F: Fn(&[f64], &[f64]) -> f64,
{
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..sample_count.max(1) {
        let nu = model.random_conormal(rng);
        for j in 0..model.p() {
            let dir: Vec<f64> = model.leaf_frame().column(j).iter().copied().collect();
            let plus: Vec<f64> = nu.x.iter().zip(&dir).map(|(x, d)| x + h * d).collect();
            let minus: Vec<f64> = nu.x.iter().zip(&dir).map(|(x, d)| x - h * d).collect();
            let d = (symbol(&plus, &nu.xi) - symbol(&minus, &nu.xi)) / (2.0 * h);
            worst = worst.max(d.abs());
        }
    }
    worst
}

/// Holonomy-invariance residual of the model's own transverse symbol.
pub fn verify_holonomy_invariance<R: Rng + ?Sized>(
    model: &FlatFoliatedModel,
    sample_count: usize,
    rng: &mut R,
) -> f64 {
    holonomy_invariance_residual(
        model,
        |_x, xi| model.symbol_extension(xi),
        sample_count,
        rng,
    )
}

/// Convenience constructors for the standard test models.
pub mod presets {
    use super::*;

    /// Golden-ratio slope `(√5 − 1)/2`.
    pub fn golden_slope() -> f64 {
        (5f64.sqrt() - 1.0) / 2.0
    }

    /// Product foliation of `T¹ × T¹` by horizontal circles.
    pub fn product_2d(drift: [f64; 2]) -> FlatFoliatedModel {
        build_model(
            2,
            1,
            &[vec![1.0, 0.0]],
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &drift,
        )
        .expect("product model is valid")
    }

    /// Kronecker foliation of `T²` with leaf direction `(1, α)`.
    pub fn kronecker(alpha: f64) -> FlatFoliatedModel {
        build_model(
            2,
            1,
            &[vec![1.0, alpha]],
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[0.0, 0.0],
        )
        .expect("Kronecker model is valid")
    }

    /// Circle leaves along `x₁` in the flat `T³`.
    pub fn circle_in_t3() -> FlatFoliatedModel {
        let g = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        build_model(3, 1, &[vec![1.0, 0.0, 0.0]], &g, &[0.0; 3]).expect("T³ model is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    #[test]
    fn product_model_frames() {
        let m = product_2d([0.0, 0.0]);
        assert_eq!((m.n(), m.p(), m.q()), (2, 1, 1));
        assert_eq!(m.transverse_coords(&[0.0, 3.0]), vec![3.0]);
        assert!((m.volume() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kronecker_transverse_direction_is_oriented() {
        let a = golden_slope();
        let m = kronecker(a);
        let r = (1.0 + a * a).sqrt();
        let h: Vec<f64> = m.transverse_frame().column(0).iter().copied().collect();
        assert!((h[0] + a / r).abs() < 1e-14 && (h[1] - 1.0 / r).abs() < 1e-14);
    }

    #[test]
    fn validation_errors_are_distinct() {
        let g = identity(2);
        assert!(matches!(
            build_model(2, 1, &[vec![0.0, 0.0]], &g, &[0.0, 0.0]),
            Err(ModelError::RankDeficientLeafBasis { .. })
        ));
        assert!(matches!(
            build_model(
                3,
                2,
                &[vec![1.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]],
                &identity(3),
                &[0.0; 3]
            ),
            Err(ModelError::RankDeficientLeafBasis {
                rank: 1,
                expected: 2
            })
        ));
        assert!(matches!(
            build_model(
                2,
                1,
                &[vec![1.0, 0.0]],
                &[vec![1.0, 0.0], vec![0.0, -1.0]],
                &[0.0, 0.0]
            ),
            Err(ModelError::MetricNotSpd(_))
        ));
        assert!(matches!(
            build_model(
                2,
                1,
                &[vec![1.0, 0.0]],
                &[vec![1.0, 0.5], vec![0.0, 1.0]],
                &[0.0, 0.0]
            ),
            Err(ModelError::MetricNotSpd(_))
        ));
        assert!(matches!(
            build_model(2, 1, &[vec![1.0, 0.0]], &g, &[0.1, 0.1]),
            Err(ModelError::DriftNotTransverse(_))
        ));
        assert!(matches!(
            build_model(2, 1, &[vec![1.0, 0.0]], &g, &[0.0, 1.5]),
            Err(ModelError::DriftTooLarge(_))
        ));
        assert!(matches!(
            build_model(2, 2, &[vec![1.0, 0.0], vec![0.0, 1.0]], &g, &[0.0, 0.0]),
            Err(ModelError::Dimension(_))
        ));
    }

    #[test]
    fn drift_model_is_positive_on_lattice() {
        let m = product_2d([0.0, 0.1]);
        for m1 in -30i64..=30 {
            for m2 in -1000i64..=1000 {
                assert!(m.operator_eigenvalue(&[m1, m2]) > 0.0);
            }
        }
    }

    #[test]
    fn transverse_symbol_examples() {
        let m = product_2d([0.0, 0.0]);
        let nu = m.conormal(&[0.2, 0.3], &[0.0, 1.0]).unwrap();
        assert_eq!(m.transverse_symbol(&nu), 1.0);
        let nu3 = m.conormal(&[0.2, 0.3], &[0.0, 3.0]).unwrap();
        assert_eq!(m.transverse_symbol(&nu3), 3.0);
        let aniso = build_model(
            2,
            1,
            &[vec![1.0, 0.0]],
            &[vec![1.0, 0.0], vec![0.0, 4.0]],
            &[0.0, 0.0],
        )
        .unwrap();
        let nu = aniso.conormal(&[0.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((aniso.transverse_symbol(&nu) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn subprincipal_examples() {
        let flat = product_2d([0.0, 0.0]);
        let nu = flat.conormal(&[0.1, 0.1], &[0.0, 2.0]).unwrap();
        assert_eq!(flat.subprincipal_p(&nu), 0.0);
        let drift = product_2d([0.0, 0.1]);
        let nu = drift.conormal(&[0.1, 0.1], &[0.0, 1.0]).unwrap();
        assert!((drift.subprincipal_p(&nu) - 0.05).abs() < 1e-15);
        let scaled = drift.conormal(&[0.1, 0.1], &[0.0, 7.5]).unwrap();
        assert!((drift.subprincipal_p(&scaled) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn conormal_rejects_leaf_component() {
        let m = kronecker(golden_slope());
        assert!(matches!(
            m.conormal(&[0.0, 0.0], &[1.0, 0.0]),
            Err(ModelError::NotConormal(_))
        ));
        assert!(matches!(
            m.conormal(&[0.0, 0.0], &[0.0, 0.0]),
            Err(ModelError::ZeroCovector)
        ));
        assert!(m.conormal(&[0.0, 0.0], &[-golden_slope(), 1.0]).is_ok());
    }

    #[test]
    fn transport_examples() {
        let a = golden_slope();
        let m = kronecker(a);
        let x = [0.3, 0.7];
        let nu = m.conormal(&x, &[-a, 1.0]).unwrap();
        let unit = HolonomyElement::unit(&x);
        assert_eq!(holonomy_transport(&unit, &nu).unwrap(), nu);

        let r = (1.0 + a * a).sqrt();
        let w = [2.0 / r, 2.0 * a / r];
        let gamma = m.holonomy(&x, &w).unwrap();
        let moved = holonomy_transport(&gamma, &nu).unwrap();
        let expected = [wrap_unit(0.3 - w[0]), wrap_unit(0.7 - w[1])];
        assert!(torus_distance(moved.x(), &expected) < 1e-15);
        assert_eq!(moved.xi(), nu.xi());

        let bad = m.holonomy(&[0.5, 0.5], &w).unwrap();
        assert!(matches!(
            holonomy_transport(&bad, &nu),
            Err(ModelError::BasePointMismatch(_))
        ));
        assert!(matches!(
            m.holonomy(&x, &[1.0, 0.0]),
            Err(ModelError::ShiftNotLeafwise(_))
        ));
    }

    #[test]
    fn transport_is_functorial() {
        let m = kronecker(golden_slope());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let nu = m.random_conormal(&mut rng);
            let g2 = m
                .holonomy(nu.x(), &m.random_leaf_shift(&mut rng, 3.0))
                .unwrap();
            let g1 = m
                .holonomy(&g2.source(), &m.random_leaf_shift(&mut rng, 3.0))
                .unwrap();
            let composed = g2.compose(&g1).unwrap();
            let direct = holonomy_transport(&composed, &nu).unwrap();
            let stepwise = holonomy_transport(&g1, &holonomy_transport(&g2, &nu).unwrap()).unwrap();
            assert!(torus_distance(direct.x(), stepwise.x()) < 1e-12);
            assert!(
                torus_distance(
                    composed.compose(&composed.inverse()).unwrap().shift(),
                    &[0.0, 0.0]
                ) < 1e-15
            );
            assert_eq!(m.transverse_symbol(&direct), m.transverse_symbol(&nu));
        }
    }

    #[test]
    fn holonomy_invariance_holds_and_negative_control_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [product_2d([0.0, 0.0]), kronecker(golden_slope())] {
            assert!(verify_holonomy_invariance(&m, 100, &mut rng) < 1e-12);
        }
        let m = product_2d([0.0, 0.0]);
        let broken =
            |x: &[f64], xi: &[f64]| (1.0 + 0.1 * (2.0 * PI * x[0]).sin()) * m.symbol_extension(xi);
        assert!(holonomy_invariance_residual(&m, broken, 100, &mut rng) > 1e-2);
    }
}
