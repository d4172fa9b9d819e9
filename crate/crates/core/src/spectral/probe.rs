//! Gaussian probes of the regularized trace.

use num_complex::Complex64;
use std::f64::consts::PI;

use super::{SpectralError, Spectrum};
use crate::model::NEGLIGIBLE_FOURIER;
use crate::numerics::{
    integrate_adaptive, weighted_line_fit, wrap_angle, CompensatedComplexSum, CompensatedSum,
};

/// Half-width of the summation window in units of `1/ε`.
pub const WINDOW_SIGMAS: f64 = 9.5;

/// `f(t) = exp(−(t−t₀)²/2ε²)·exp(−ist)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianProbe {
    pub t0: f64,
    pub eps: f64,
    pub s: f64,
}

impl GaussianProbe {
    pub fn new(t0: f64, eps: f64, s: f64) -> Self {
        Self { t0, eps, s }
    }

    /// `f̂(λ) = ∫ f(t) e^{itλ} dt = √(2π) ε e^{−ε²(λ−s)²/2} e^{it₀(λ−s)}`.
    pub fn transform(&self, lambda: f64) -> Complex64 {
        let d = lambda - self.s;
        let envelope = (2.0 * PI).sqrt() * self.eps * (-0.5 * self.eps * self.eps * d * d).exp();
        Complex64::from_polar(envelope, self.t0 * d)
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        let d = (t - self.t0) / self.eps;
        Complex64::from_polar((-0.5 * d * d).exp(), -self.s * t)
    }
}

/// `λ`-window `[s − Kε⁻¹, s + Kε⁻¹]` outside which a probe is negligible.
pub fn probe_window(eps: f64, s: f64) -> (f64, f64) {
    (s - WINDOW_SIGMAS / eps, s + WINDOW_SIGMAS / eps)
}

/// A value of `θ_k(f)` with its truncation estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceValue {
    pub value: Complex64,
    /// Estimate of the neglected part: lines beyond `Λ`, lines outside the
    /// probe window, and lines beyond the leaf cutoff.
    pub tail_bound: f64,
    /// `Σ |ĸ(m) f̂(λ_m)|` over the summed lines.
    pub partial_l1: f64,
}

/// Weighted density of lines per unit `λ` at the cutoff, from the Weyl-type
/// growth `N(λ) ∝ λ^q` of the weighted counting function.
fn edge_density(spectrum: &Spectrum, weights: &[f64], q: usize) -> f64 {
    let total: f64 = weights.iter().map(|w| w.abs()).sum();
    q as f64 * total / spectrum.cutoff()
}

fn beyond_cutoff_estimate(
    spectrum: &Spectrum,
    density: f64,
    q: usize,
    probe: &GaussianProbe,
) -> f64 {
    if density == 0.0 {
        return 0.0;
    }
    let cut = spectrum.cutoff();
    let eps = probe.eps;
    let start = cut.max(probe.s - 40.0 / eps);
    let end = cut.max(probe.s) + 40.0 / eps;
    let gauss = |l: f64| {
        let d = eps * (l - probe.s);
        density * (l / cut).powi(q as i32 - 1) * (2.0 * PI).sqrt() * eps * (-0.5 * d * d).exp()
    };
    let body = integrate_adaptive(gauss, start, end, 1e-300, 1e-6, 16).value;
    // the skipped piece [Λ, start) is bounded by the Gaussian at `start`
    let skipped = if start > cut {
        gauss(start) * (start - cut)
    } else {
        0.0
    };
    body + skipped
}

fn trace_with_density(
    spectrum: &Spectrum,
    weights: &[f64],
    q: usize,
    probe: &GaussianProbe,
    density: f64,
) -> Result<TraceValue, SpectralError> {
    if !(probe.eps > 0.0) {
        return Err(SpectralError::InvalidWidth(probe.eps));
    }
    let (lo, hi) = probe_window(probe.eps, probe.s);
    let mut sum = CompensatedComplexSum::new();
    let mut l1 = CompensatedSum::new();
    let order = spectrum.lambda_order();
    let lambdas = spectrum.lambdas();
    for pos in spectrum.lambda_range(lo, hi) {
        let i = order[pos] as usize;
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let term = probe.transform(lambdas[i]) * w;
        l1.add(term.norm());
        sum.add(term);
    }
    let partial = l1.value();
    let total_mass: f64 = weights.iter().map(|w| w.abs()).sum();
    let window =
        (2.0 * PI).sqrt() * probe.eps * (-0.5 * WINDOW_SIGMAS * WINDOW_SIGMAS).exp() * total_mass;
    let beyond = beyond_cutoff_estimate(spectrum, density, q, probe);
    let leaf = NEGLIGIBLE_FOURIER * partial;
    let tail = beyond + window + leaf;
    if tail > 0.01 * partial && tail > 0.0 {
        return Err(SpectralError::TailTooLarge {
            cutoff: spectrum.cutoff(),
            s: probe.s,
            eps: probe.eps,
            tail,
            partial,
        });
    }
    Ok(TraceValue {
        value: sum.value(),
        tail_bound: tail,
        partial_l1: partial,
    })
}

/// `θ_k(f) = Σ_m ĸ(m) f̂(λ_m)` for a Gaussian probe, summed over the probe
/// window in increasing `λ` with compensated summation.
///
/// `q` is the codimension, used to extrapolate the line density beyond `Λ`.
pub fn smoothed_trace(
    spectrum: &Spectrum,
    weights: &[f64],
    q: usize,
    probe: &GaussianProbe,
) -> Result<TraceValue, SpectralError> {
    trace_with_density(
        spectrum,
        weights,
        q,
        probe,
        edge_density(spectrum, weights, q),
    )
}

/// Options for [`amplitude_probe`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    /// Exponent used to normalize the fitted `α₀`; the fitted exponent
    /// rounded to a half-integer when `None`.
    pub exponent: Option<f64>,
    /// RMS residual of the log-log fit above which the ladder is flagged.
    pub residual_threshold: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            exponent: None,
            residual_threshold: 0.05,
        }
    }
}

/// Amplitude samples along a frequency ladder and the fitted asymptotics.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceProbeResult {
    pub t0: f64,
    pub eps: f64,
    pub s_ladder: Vec<f64>,
    /// `θ_k(f_{t₀,s})`.
    pub amplitudes: Vec<Complex64>,
    /// `θ_k(f_{t₀,s})·e^{ist₀}`, the slowly varying part.
    pub demodulated: Vec<Complex64>,
    pub tail_bounds: Vec<f64>,
    pub fitted_exponent: f64,
    /// Argument of the fitted leading coefficient, in `(−π, π]`.
    pub fitted_phase: f64,
    /// Mean of `A(s)/(s/2π)^e` over the top half of the ladder.
    pub fitted_alpha0: Complex64,
    pub exponent_residual: f64,
    /// Largest deviation of `arg A(s)` from the fitted phase on the top half.
    pub phase_spread: f64,
    /// Relative spread of `|A(s)|/(s/2π)^e` on the top half.
    pub magnitude_spread: f64,
    pub noisy: bool,
}

/// Probes `θ_k` at `t₀` along `s_ladder` and fits `|A(s)| ∝ s^e` with
/// weights `∝ s` on the top half of the ladder.
pub fn amplitude_probe(
    spectrum: &Spectrum,
    weights: &[f64],
    q: usize,
    t0: f64,
    s_ladder: &[f64],
    eps: f64,
    options: ProbeOptions,
) -> Result<TraceProbeResult, SpectralError> {
    if s_ladder.len() < 4 || s_ladder.windows(2).any(|w| !(w[1] > w[0])) || s_ladder[0] <= 0.0 {
        return Err(SpectralError::InvalidLadder);
    }
    let density = edge_density(spectrum, weights, q);
    let mut amplitudes = Vec::with_capacity(s_ladder.len());
    let mut tails = Vec::with_capacity(s_ladder.len());
    for &s in s_ladder {
        let v = trace_with_density(
            spectrum,
            weights,
            q,
            &GaussianProbe::new(t0, eps, s),
            density,
        )?;
        amplitudes.push(v.value);
        tails.push(v.tail_bound);
    }
    let demodulated: Vec<Complex64> = amplitudes
        .iter()
        .zip(s_ladder)
        .map(|(a, s)| a * Complex64::from_polar(1.0, s * t0))
        .collect();

    let top = s_ladder.len() / 2;
    let xs: Vec<f64> = s_ladder[top..].iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = demodulated[top..]
        .iter()
        .map(|a| a.norm().max(f64::MIN_POSITIVE).ln())
        .collect();
    let ws: Vec<f64> = s_ladder[top..].to_vec();
    let (slope, _, residual) = weighted_line_fit(&xs, &ys, &ws);
    let exponent = options.exponent.unwrap_or((2.0 * slope).round() / 2.0);

    let mut mean = CompensatedComplexSum::new();
    for (a, s) in demodulated[top..].iter().zip(&s_ladder[top..]) {
        mean.add(a / (s / (2.0 * PI)).powf(exponent));
    }
    let alpha0 = mean.value() / (s_ladder.len() - top) as f64;
    let phase = alpha0.arg();
    let mut phase_spread = 0.0f64;
    let mut mag_spread = 0.0f64;
    for (a, s) in demodulated[top..].iter().zip(&s_ladder[top..]) {
        let normalized = a / (s / (2.0 * PI)).powf(exponent);
        phase_spread = phase_spread.max(wrap_angle(normalized.arg() - phase).abs());
        if alpha0.norm() > 0.0 {
            mag_spread = mag_spread.max((normalized.norm() / alpha0.norm() - 1.0).abs());
        }
    }
    Ok(TraceProbeResult {
        t0,
        eps,
        s_ladder: s_ladder.to_vec(),
        amplitudes,
        demodulated,
        tail_bounds: tails,
        fitted_exponent: slope,
        fitted_phase: phase,
        fitted_alpha0: alpha0,
        exponent_residual: residual,
        phase_spread,
        magnitude_spread: mag_spread,
        noisy: !(residual <= options.residual_threshold),
    })
}
