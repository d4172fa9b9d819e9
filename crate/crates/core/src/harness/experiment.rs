//! End-to-end comparison of the spectral and geometric sides.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::geometric::{find_relative_periods, RelativePeriodComponent};
use crate::model::{FlatFoliatedModel, GroupoidKernel};
use crate::numerics::{weighted_line_fit, wrap_angle};
use crate::spectral::{
    amplitude_probe, enumerate_for_kernel, singularity_scan, smoothed_trace, GaussianProbe,
    ProbeOptions, ScanOptions, ScanResult, Spectrum, TraceProbeResult,
};

/// Components closer than this in `t` are reported as one period.
const PERIOD_MERGE: f64 = 1e-9;

/// Predicted exponent `(d_j − p − 1)/2` of a component.
pub fn predicted_exponent(model: &FlatFoliatedModel, component: &RelativePeriodComponent) -> f64 {
    (component.dim as f64 - model.p() as f64 - 1.0) / 2.0
}

/// `α₀·i^{−σ}·e^{−iπe/2}`: the leading coefficient rotated by the Maslov
/// factor and the phase of `(2πi)^{−e}`, normalized like the probe's
/// `A(s)/(s/2π)^e`.
pub fn predicted_amplitude(
    model: &FlatFoliatedModel,
    component: &RelativePeriodComponent,
) -> Complex64 {
    let e = predicted_exponent(model, component);
    component.alpha0 * Complex64::from_polar(1.0, -PI / 2.0 * (e + component.maslov as f64))
}

/// Components sharing one period `t > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodGroup {
    pub t: f64,
    pub components: Vec<RelativePeriodComponent>,
    /// Largest predicted exponent in the group.
    pub exponent: f64,
    /// Sum of [`predicted_amplitude`] over the components with that exponent.
    pub amplitude: Complex64,
}

/// Groups positive-period components by `t` and sums their predictions.
pub fn group_periods(
    model: &FlatFoliatedModel,
    components: &[RelativePeriodComponent],
) -> Vec<PeriodGroup> {
    let mut groups: Vec<PeriodGroup> = Vec::new();
    for c in components.iter().filter(|c| c.t > 0.0) {
        match groups.last_mut() {
            Some(g) if (g.t - c.t).abs() <= PERIOD_MERGE => g.components.push(c.clone()),
            _ => groups.push(PeriodGroup {
                t: c.t,
                components: vec![c.clone()],
                exponent: 0.0,
                amplitude: Complex64::new(0.0, 0.0),
            }),
        }
    }
    for g in &mut groups {
        g.exponent = g
            .components
            .iter()
            .map(|c| predicted_exponent(model, c))
            .fold(f64::MIN, f64::max);
        g.amplitude = g
            .components
            .iter()
            .filter(|c| predicted_exponent(model, c) == g.exponent)
            .map(|c| predicted_amplitude(model, c))
            .sum();
    }
    groups.sort_by(|a, b| a.t.total_cmp(&b.t));
    groups
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRow {
    pub t_predicted: f64,
    pub components: usize,
    pub t_detected: Option<f64>,
    pub delta_t: Option<f64>,
    pub exponent_predicted: f64,
    pub exponent_fitted: f64,
    pub sigma_predicted: i32,
    pub phase_predicted: f64,
    pub phase_fitted: f64,
    pub alpha_predicted: Complex64,
    pub alpha_fitted: Complex64,
    /// `|α₀|_fitted / |α₀|_predicted`.
    pub ratio: f64,
    /// Predicted scan amplitude exceeds the noise floor.
    pub visible: bool,
    pub detected_pass: bool,
    pub exponent_pass: bool,
    pub phase_pass: bool,
    pub amplitude_pass: bool,
}

impl PeriodRow {
    pub fn pass(&self) -> bool {
        (self.detected_pass || !self.visible)
            && self.exponent_pass
            && self.phase_pass
            && self.amplitude_pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecaySample {
    pub t: f64,
    /// Distance to the nearest period, in units of `ε`.
    pub distance: f64,
    pub slope: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub name: String,
    pub line_count: usize,
    pub components: Vec<RelativePeriodComponent>,
    pub rows: Vec<PeriodRow>,
    pub scan: ScanResult,
    /// Detected peaks with no predicted period within tolerance.
    pub spurious_peaks: Vec<f64>,
    pub decay: Vec<DecaySample>,
    pub probes: Vec<TraceProbeResult>,
    pub warnings: Vec<String>,
}

impl ComparisonReport {
    pub fn no_spurious_pass(&self) -> bool {
        self.spurious_peaks.is_empty()
    }

    pub fn decay_pass(&self) -> bool {
        self.decay.iter().all(|d| d.pass)
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(PeriodRow::pass) && self.no_spurious_pass() && self.decay_pass()
    }
}

/// Model, kernel and spectrum of a configuration.
pub struct Prepared {
    pub model: FlatFoliatedModel,
    pub kernel: GroupoidKernel,
    pub spectrum: Spectrum,
    pub weights: Vec<f64>,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    config.validate()?;
    let model = config.build_model()?;
    let kernel = config.build_kernel(&model)?;
    let spectrum = enumerate_for_kernel(
        &model,
        &kernel,
        config.spectral.cutoff,
        config.spectral.max_lines,
    )
    .map_err(|e| HarnessError::stage("spectrum", e))?;
    let weights = spectrum.weights(&kernel);
    Ok(Prepared {
        model,
        kernel,
        spectrum,
        weights,
    })
}

/// Every period of `components` together with `t = 0`.
fn all_periods(components: &[RelativePeriodComponent]) -> Vec<f64> {
    let mut ts: Vec<f64> = components.iter().map(|c| c.t).collect();
    ts.push(0.0);
    ts
}

fn nearest(values: &[f64], t: f64) -> Option<f64> {
    values
        .iter()
        .copied()
        .min_by(|a, b| (a - t).abs().total_cmp(&(b - t).abs()))
}

/// Runs the geometric prediction, the scan, the amplitude probes and the
/// off-period decay check.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ComparisonReport, HarnessError> {
    let prepared = prepare(config)?;
    run_prepared(config, &prepared)
}

pub fn run_prepared(
    config: &ExperimentConfig,
    prepared: &Prepared,
) -> Result<ComparisonReport, HarnessError> {
    let Prepared {
        model,
        kernel,
        spectrum,
        weights,
    } = prepared;
    let tol = &config.tolerances;
    let sp = &config.spectral;
    // periods just outside the window still shape the probes near its ends
    let margin = 10.0 * sp.eps.max(config.decay_eps()) + tol.period;
    let reach = config.scan.t_max.abs().max(config.scan.t_min.abs()) + margin;
    let components = find_relative_periods(model, kernel, reach)
        .map_err(|e| HarnessError::stage("periods", e))?;
    let scan = singularity_scan(
        spectrum,
        weights,
        &ScanOptions::new(config.scan.t_min, config.scan.t_max, sp.eps, sp.scan_s),
    )
    .map_err(|e| HarnessError::stage("scan", e))?;

    let groups: Vec<PeriodGroup> = group_periods(model, &components)
        .into_iter()
        .filter(|g| g.t >= config.scan.t_min && g.t <= config.scan.t_max)
        .collect();
    let peak_times: Vec<f64> = scan.peaks.iter().map(|p| p.t).collect();
    let mut rows = Vec::with_capacity(groups.len());
    let mut probes = Vec::with_capacity(groups.len());
    for g in &groups {
        let probe = amplitude_probe(
            spectrum,
            weights,
            model.q(),
            g.t,
            &sp.s_ladder,
            sp.eps,
            ProbeOptions {
                exponent: Some(g.exponent),
                ..ProbeOptions::default()
            },
        )
        .map_err(|e| HarnessError::stage("probe", e))?;
        let detected = nearest(&peak_times, g.t).filter(|t| (t - g.t).abs() <= tol.period);
        let delta = detected.map(|t| (t - g.t).abs());
        let predicted_scan = g.amplitude.norm() * (sp.scan_s / (2.0 * PI)).powf(g.exponent);
        let phase_predicted = g.amplitude.arg();
        let ratio = probe.fitted_alpha0.norm() / g.amplitude.norm();
        rows.push(PeriodRow {
            t_predicted: g.t,
            components: g.components.len(),
            t_detected: detected,
            delta_t: delta,
            exponent_predicted: g.exponent,
            exponent_fitted: probe.fitted_exponent,
            sigma_predicted: g.components[0].maslov,
            phase_predicted,
            phase_fitted: probe.fitted_phase,
            alpha_predicted: g.amplitude,
            alpha_fitted: probe.fitted_alpha0,
            ratio,
            visible: predicted_scan > scan.noise_floor,
            detected_pass: detected.is_some(),
            exponent_pass: (probe.fitted_exponent - g.exponent).abs() <= tol.exponent,
            phase_pass: wrap_angle(probe.fitted_phase - phase_predicted)
                .abs()
                .to_degrees()
                <= tol.phase_deg,
            amplitude_pass: (ratio - 1.0).abs() <= tol.amplitude_ratio,
        });
        probes.push(probe);
    }

    let periods = all_periods(&components);
    let spurious_peaks: Vec<f64> = peak_times
        .iter()
        .copied()
        .filter(|t| nearest(&periods, *t).is_none_or(|p| (p - t).abs() > tol.period))
        .collect();

    let decay = decay_check(config, prepared, &periods)?;
    Ok(ComparisonReport {
        name: config.name.clone(),
        line_count: spectrum.len(),
        components,
        rows,
        scan,
        spurious_peaks,
        decay,
        probes,
        warnings: config.warnings(),
    })
}

/// Log-log slope of `|θ(f_{t,s})|` over a geometric ladder in `s`.
pub fn decay_slope(
    prepared: &Prepared,
    t: f64,
    eps: f64,
    s_min: f64,
    s_max: f64,
    points: usize,
) -> Result<f64, HarnessError> {
    let mut xs = Vec::with_capacity(points);
    let mut ys = Vec::with_capacity(points);
    for i in 0..points {
        let s = s_min * (s_max / s_min).powf(i as f64 / (points - 1) as f64);
        let v = smoothed_trace(
            &prepared.spectrum,
            &prepared.weights,
            prepared.model.q(),
            &GaussianProbe::new(t, eps, s),
        )
        .map_err(|e| HarnessError::stage("decay", e))?;
        xs.push(s.ln());
        ys.push(v.value.norm().max(f64::MIN_POSITIVE).ln());
    }
    Ok(weighted_line_fit(&xs, &ys, &vec![1.0; points]).0)
}

/// Random probe times in the scan window at least `min_distance·ε` from
/// every period, drawn from the configured seed.
pub fn off_period_times(config: &ExperimentConfig, periods: &[f64]) -> Vec<f64> {
    let d = &config.decay;
    let gap = d.min_distance * config.decay_eps();
    let lo = config.scan.t_min.max(0.0);
    let hi = config.scan.t_max;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(d.samples);
    let mut attempts = 0;
    while out.len() < d.samples && attempts < 100_000 {
        attempts += 1;
        let t = rng.gen_range(lo..hi);
        if periods.iter().all(|p| (p - t).abs() >= gap) {
            out.push(t);
        }
    }
    out
}

fn decay_check(
    config: &ExperimentConfig,
    prepared: &Prepared,
    periods: &[f64],
) -> Result<Vec<DecaySample>, HarnessError> {
    let d = &config.decay;
    if d.samples == 0 {
        return Ok(Vec::new());
    }
    let times = off_period_times(config, periods);
    if times.len() < d.samples {
        return Err(HarnessError::Config(format!(
            "only {} of {} off-period times fit in the scan window",
            times.len(),
            d.samples
        )));
    }
    let eps = config.decay_eps();
    times
        .into_iter()
        .map(|t| {
            let slope = decay_slope(prepared, t, eps, d.s_min, d.s_max, d.ladder_points)?;
            let distance = periods
                .iter()
                .map(|p| (p - t).abs())
                .fold(f64::INFINITY, f64::min)
                / eps;
            Ok(DecaySample {
                t,
                distance,
                slope,
                pass: slope < config.tolerances.decay_slope,
            })
        })
        .collect()
}
