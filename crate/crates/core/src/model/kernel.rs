//! Separable groupoid kernels `k(γ) = Σ φ(r(γ))·ψ(w)`.

use num_complex::Complex64;
use std::f64::consts::PI;

use super::{FlatFoliatedModel, HolonomyElement, ModelError};
use crate::numerics::{integrate_adaptive, unit_sphere_area};

/// Half-nodes of the finest trapezoid level for `ψ̂`.
const FINE_NODES: usize = 1024;
/// Relative size below which `ψ̂` is treated as negligible.
pub const NEGLIGIBLE_FOURIER: f64 = 1e-14;
/// Target relative accuracy of `ψ̂`.
const FOURIER_REL_TOL: f64 = 1e-8;
/// Absolute floor (relative to `ψ̂(0)`) for the accuracy target.
const FOURIER_ABS_FLOOR: f64 = 1e-13;

/// Standard bump `b(r) = exp(1/(r² − 1))` on `[0, 1)`.
fn standard_bump(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        (1.0 / (r * r - 1.0)).exp()
    }
}

/// Radial bump of support radius `S` on `Rᵖ`, scaled to unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpProfile {
    support: f64,
    dim: usize,
    scale: f64,
    /// Projected profile `Pψ(kS/N)`, `k = 0..=N`; its cosine transform is `ψ̂`.
    projected: Vec<f64>,
    cutoff: f64,
}

impl BumpProfile {
    pub fn new(support: f64, dim: usize) -> Result<Self, ModelError> {
        if !(support.is_finite() && support > 0.0) {
            return Err(ModelError::Kernel(format!(
                "support radius must be positive and finite, got {support}"
            )));
        }
        if dim == 0 {
            return Err(ModelError::Kernel("leaf dimension must be ≥ 1".into()));
        }
        let radial = integrate_adaptive(
            |r| standard_bump(r) * r.powi(dim as i32 - 1),
            0.0,
            1.0,
            1e-17,
            1e-15,
            8,
        );
        let mass = if dim == 1 {
            2.0 * radial.value
        } else {
            unit_sphere_area(dim) * radial.value
        };
        let scale = 1.0 / (mass * support.powi(dim as i32));
        let mut profile = Self {
            support,
            dim,
            scale,
            projected: Vec::new(),
            cutoff: 0.0,
        };
        profile.projected = (0..=FINE_NODES)
            .map(|k| profile.projected_value(support * k as f64 / FINE_NODES as f64))
            .collect();
        profile.cutoff = profile.scan_cutoff(NEGLIGIBLE_FOURIER);
        Ok(profile)
    }

    pub fn support(&self) -> f64 {
        self.support
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `ψ` at leafwise distance `r`.
    pub fn value(&self, r: f64) -> f64 {
        self.scale * standard_bump(r / self.support)
    }

    /// Marginal of `ψ` along one axis: `∫_{R^{p-1}} ψ(u, ρ) dρ`.
    pub fn projected_value(&self, u: f64) -> f64 {
        let u = u.abs();
        if u >= self.support {
            return 0.0;
        }
        if self.dim == 1 {
            return self.value(u);
        }
        let top = (self.support * self.support - u * u).sqrt();
        let power = self.dim as i32 - 2;
        let q = integrate_adaptive(
            |rho| self.value((u * u + rho * rho).sqrt()) * rho.powi(power),
            0.0,
            top,
            1e-16 * self.scale * top,
            1e-13,
            4,
        );
        unit_sphere_area(self.dim - 1) * q.value
    }

    /// Leaf frequency beyond which `|ψ̂| ≤ 10⁻¹⁴ ψ̂(0)`.
    pub fn fourier_cutoff(&self) -> f64 {
        self.cutoff
    }

    fn trapezoid(&self, zeta: f64, level: u32) -> f64 {
        let stride = 1usize << level;
        let h = self.support / FINE_NODES as f64 * stride as f64;
        let mut acc = 0.5 * self.projected[0];
        let mut k = stride;
        let mut j = 1.0;
        while k < FINE_NODES {
            acc += self.projected[k] * (zeta * h * j).cos();
            k += stride;
            j += 1.0;
        }
        2.0 * h * acc
    }

    fn alias_frequency(&self, level: u32) -> f64 {
        2.0 * PI * FINE_NODES as f64 / (self.support * (1u64 << level) as f64)
    }

    fn scan_cutoff(&self, rel_tol: f64) -> f64 {
        let top = 2500.0 / self.support;
        let step = 0.25 / self.support;
        let threshold = rel_tol * self.trapezoid(0.0, 0);
        let mut zeta = top;
        while zeta > 0.0 {
            if self.trapezoid(zeta, 0).abs() > threshold {
                return zeta + 4.0 * step;
            }
            zeta -= step;
        }
        0.0
    }

    /// Fourier transform `ψ̂(ζ) = ∫ ψ(s) e^{-iζ·s} ds` at `|ζ| = zeta`.
    ///
    /// Trapezoid sums of the projected profile converge geometrically; the
    /// coarsest level whose aliasing frequency clears the decay cutoff is
    /// checked against the next finer one, with adaptive quadrature as a
    /// fallback.
    pub fn fourier(&self, zeta: f64) -> f64 {
        let zeta = zeta.abs();
        let mut level = 0u32;
        while level < 8 && self.alias_frequency(level + 1) - zeta >= self.cutoff {
            level += 1;
        }
        let coarse = self.trapezoid(zeta, level);
        if level == 0 {
            return coarse;
        }
        let fine = self.trapezoid(zeta, level - 1);
        let tol = FOURIER_REL_TOL * fine.abs() + FOURIER_ABS_FLOOR * self.projected_peak();
        if (fine - coarse).abs() <= tol {
            fine
        } else {
            self.fourier_reference(zeta)
        }
    }

    fn projected_peak(&self) -> f64 {
        self.projected[0] * self.support
    }

    /// Independent adaptive-quadrature evaluation of `ψ̂`.
    pub fn fourier_reference(&self, zeta: f64) -> f64 {
        let panels = 8 + (zeta * self.support / PI).ceil() as usize;
        let q = integrate_adaptive(
            |u| 2.0 * self.projected_value(u) * (zeta * u).cos(),
            0.0,
            self.support,
            1e-18,
            1e-12,
            panels,
        );
        q.value
    }
}

/// Real trigonometric polynomial `φ(x) = Σ c_m e^{2πi m·x}` with Hermitian
/// coefficients `c_{-m} = conj(c_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolynomial {
    terms: Vec<(Vec<i64>, Complex64)>,
}

impl TrigPolynomial {
    pub fn new(n: usize, terms: Vec<(Vec<i64>, Complex64)>) -> Result<Self, ModelError> {
        let mut merged: Vec<(Vec<i64>, Complex64)> = Vec::new();
        for (m, c) in terms {
            if m.len() != n {
                return Err(ModelError::Kernel(format!(
                    "frequency {m:?} must have length {n}"
                )));
            }
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(ModelError::Kernel("non-finite coefficient".into()));
            }
            match merged.iter_mut().find(|(k, _)| *k == m) {
                Some(entry) => entry.1 += c,
                None => merged.push((m, c)),
            }
        }
        let scale = merged
            .iter()
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max)
            .max(1.0);
        for (m, c) in &merged {
            let neg: Vec<i64> = m.iter().map(|k| -k).collect();
            let partner = merged
                .iter()
                .find(|(k, _)| *k == neg)
                .map(|e| e.1)
                .unwrap_or_default();
            if (partner - c.conj()).norm() > 1e-12 * scale {
                return Err(ModelError::Kernel(format!(
                    "coefficients are not Hermitian at frequency {m:?}"
                )));
            }
        }
        merged.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Self { terms: merged })
    }

    /// The constant function `value`.
    pub fn constant(n: usize, value: f64) -> Self {
        Self {
            terms: vec![(vec![0; n], Complex64::new(value, 0.0))],
        }
    }

    pub fn terms(&self) -> &[(Vec<i64>, Complex64)] {
        &self.terms
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                let phase: f64 =
                    m.iter().zip(x).map(|(k, x)| *k as f64 * x).sum::<f64>() * 2.0 * PI;
                c.re * phase.cos() - c.im * phase.sin()
            })
            .sum()
    }

    /// Mean value `φ̂(0)`.
    pub fn mean(&self) -> f64 {
        self.terms
            .iter()
            .find(|(m, _)| m.iter().all(|k| *k == 0))
            .map(|(_, c)| c.re)
            .unwrap_or(0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), c * factor))
                .collect(),
        }
    }
}

/// One separable term `φ ⊗ ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTerm {
    pub weight: TrigPolynomial,
    pub profile: BumpProfile,
}

/// Finite sum of separable kernels on the holonomy groupoid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupoidKernel {
    terms: Vec<KernelTerm>,
}

impl GroupoidKernel {
    pub fn new(model: &FlatFoliatedModel, terms: Vec<KernelTerm>) -> Result<Self, ModelError> {
        for t in &terms {
            if t.profile.dim() != model.p() {
                return Err(ModelError::Kernel(format!(
                    "profile dimension {} does not match leaf dimension {}",
                    t.profile.dim(),
                    model.p()
                )));
            }
            if t.weight.terms().iter().any(|(m, _)| m.len() != model.n()) {
                return Err(ModelError::Kernel(
                    "weight frequencies do not match the torus dimension".into(),
                ));
            }
        }
        Ok(Self { terms })
    }

    /// `φ ≡ 1` times the unit-mass bump of radius `support`.
    pub fn unit_bump(model: &FlatFoliatedModel, support: f64) -> Result<Self, ModelError> {
        let profile = BumpProfile::new(support, model.p())?;
        Self::new(
            model,
            vec![KernelTerm {
                weight: TrigPolynomial::constant(model.n(), 1.0),
                profile,
            }],
        )
    }

    /// The zero kernel.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn terms(&self) -> &[KernelTerm] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.weight.terms().iter().all(|(_, c)| c.norm() == 0.0))
    }

    /// Largest support radius among the terms.
    pub fn support_radius(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.profile.support())
            .fold(0.0, f64::max)
    }

    /// Leaf frequency beyond which every term's `ψ̂` is negligible.
    pub fn fourier_cutoff(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.profile.fourier_cutoff())
            .fold(0.0, f64::max)
    }

    /// `ψ` part at leafwise distance `r`, summed with each term's `φ̂(0)`.
    pub fn leafwise_mean_profile(&self, r: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.weight.mean() * t.profile.value(r))
            .sum()
    }

    /// Diagonal matrix element `⟨R(k)e_m, e_m⟩ = Σ φ̂(0)·ψ̂(ζ)` at leaf
    /// frequency magnitude `zeta`.
    pub fn spectral_weight(&self, zeta: f64) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.weight.mean() != 0.0)
            .map(|t| t.weight.mean() * t.profile.fourier(zeta))
            .sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| KernelTerm {
                    weight: t.weight.scaled(factor),
                    profile: t.profile.clone(),
                })
                .collect(),
        }
    }

    /// Kernel with the terms of both summands.
    pub fn sum(&self, other: &GroupoidKernel) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .chain(other.terms.iter())
                .cloned()
                .collect(),
        }
    }
}

/// `k(γ) = Σ φ(r(γ))·ψ(|w|_g)`.
pub fn kernel_eval(
    model: &FlatFoliatedModel,
    kernel: &GroupoidKernel,
    gamma: &HolonomyElement,
) -> f64 {
    let r = model.norm_g(gamma.shift());
    kernel
        .terms
        .iter()
        .map(|t| {
            let psi = t.profile.value(r);
            if psi == 0.0 {
                0.0
            } else {
                t.weight.eval(gamma.target()) * psi
            }
        })
        .sum()
}
