//! Detection of singular times of `θ_k` by scanning the probe centre.

use num_complex::Complex64;
use rayon::prelude::*;

use super::probe::{probe_window, GaussianProbe};
use super::{SpectralError, Spectrum};
use crate::numerics::CompensatedComplexSum;

/// Options for [`singularity_scan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub t_min: f64,
    pub t_max: f64,
    pub eps: f64,
    pub s: f64,
    /// Grid step; must not exceed `ε/4`.
    pub step: f64,
    /// Multiple of the median grid value used as the noise floor.
    pub median_factor: f64,
    /// Floor relative to the largest grid value.
    pub relative_floor: f64,
}

impl ScanOptions {
    pub fn new(t_min: f64, t_max: f64, eps: f64, s: f64) -> Self {
        Self {
            t_min,
            t_max,
            eps,
            s,
            step: eps / 4.0,
            median_factor: 10.0,
            relative_floor: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPeak {
    /// Peak location refined by a parabola through `log|θ|`.
    pub t: f64,
    /// Grid value at the discrete maximum.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub grid: Vec<(f64, f64)>,
    pub noise_floor: f64,
    pub peaks: Vec<ScanPeak>,
}

/// Evaluates `|θ_k(f_{t,s})|` on a uniform grid and reports the local maxima
/// above the noise floor `max(median_factor·median, relative_floor·max)`.
pub fn singularity_scan(
    spectrum: &Spectrum,
    weights: &[f64],
    options: &ScanOptions,
) -> Result<ScanResult, SpectralError> {
    let ScanOptions {
        t_min,
        t_max,
        eps,
        s,
        step,
        ..
    } = *options;
    if !(eps > 0.0) {
        return Err(SpectralError::InvalidWidth(eps));
    }
    if !(t_max > t_min) || !t_min.is_finite() || !t_max.is_finite() {
        return Err(SpectralError::InvalidRange(t_min, t_max));
    }
    if !(step > 0.0) || step > eps / 4.0 * (1.0 + 1e-12) {
        return Err(SpectralError::GridTooCoarse {
            step,
            limit: eps / 4.0,
        });
    }

    // The probe centre only enters through e^{it(λ−s)}, so the Gaussian
    // factors are computed once.
    let (lo, hi) = probe_window(eps, s);
    let order = spectrum.lambda_order();
    let lambdas = spectrum.lambdas();
    let reference = GaussianProbe::new(0.0, eps, s);
    let terms: Vec<(f64, f64)> = spectrum
        .lambda_range(lo, hi)
        .filter_map(|pos| {
            let i = order[pos] as usize;
            let w = weights[i];
            (w != 0.0).then(|| (lambdas[i] - s, w * reference.transform(lambdas[i]).re))
        })
        .collect();

    let count = ((t_max - t_min) / step).floor() as usize + 1;
    let grid: Vec<(f64, f64)> = (0..count)
        .into_par_iter()
        .map(|j| {
            let t = t_min + step * j as f64;
            let mut acc = CompensatedComplexSum::new();
            for (d, a) in &terms {
                acc.add(Complex64::from_polar(*a, t * d));
            }
            (t, acc.value().norm())
        })
        .collect();

    let mut sorted: Vec<f64> = grid.iter().map(|g| g.1).collect();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.is_empty() {
        0.0
    } else {
        sorted[sorted.len() / 2]
    };
    let max = sorted.last().copied().unwrap_or(0.0);
    let floor = (options.median_factor * median).max(options.relative_floor * max);

    let mut peaks = Vec::new();
    for j in 1..grid.len().saturating_sub(1) {
        let (a, b, c) = (grid[j - 1].1, grid[j].1, grid[j + 1].1);
        if b > floor && b > a && b >= c {
            let (la, lb, lc) = (
                a.max(f64::MIN_POSITIVE).ln(),
                b.ln(),
                c.max(f64::MIN_POSITIVE).ln(),
            );
            let denom = la - 2.0 * lb + lc;
            let shift = if denom < 0.0 {
                0.5 * (la - lc) / denom
            } else {
                0.0
            };
            peaks.push(ScanPeak {
                t: grid[j].0 + shift.clamp(-0.5, 0.5) * step,
                amplitude: b,
            });
        }
    }
    Ok(ScanResult {
        grid,
        noise_floor: floor,
        peaks,
    })
}

#[cfg(test)]
mod tests {
    use super::super::enumerate_for_kernel;
    use super::*;
    use crate::model::presets::*;
    use crate::model::GroupoidKernel;

    #[test]
    fn product_model_peaks_at_integers() {
        let m = product_2d([0.0, 0.0]);
        let k = GroupoidKernel::unit_bump(&m, 0.5).unwrap();
        let spec = enumerate_for_kernel(&m, &k, 600.0, 5_000_000).unwrap();
        let w = spec.weights(&k);
        let r = singularity_scan(&spec, &w, &ScanOptions::new(-0.5, 2.5, 0.05, 300.0)).unwrap();
        let ts: Vec<f64> = r.peaks.iter().map(|p| p.t).collect();
        assert_eq!(ts.len(), 3, "{ts:?}");
        for (t, want) in ts.iter().zip([0.0, 1.0, 2.0]) {
            assert!((t - want).abs() < 2e-3, "{t}");
        }
    }

    #[test]
    fn empty_kernel_has_no_peaks() {
        let m = product_2d([0.0, 0.0]);
        let k = GroupoidKernel::empty();
        let spec = enumerate_for_kernel(&m, &k, 200.0, 5_000_000).unwrap();
        let w = spec.weights(&k);
        let r = singularity_scan(&spec, &w, &ScanOptions::new(0.1, 2.0, 0.05, 100.0)).unwrap();
        assert!(r.peaks.is_empty());
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let m = product_2d([0.0, 0.0]);
        let k = GroupoidKernel::unit_bump(&m, 0.5).unwrap();
        let spec = enumerate_for_kernel(&m, &k, 100.0, 5_000_000).unwrap();
        let w = spec.weights(&k);
        let mut o = ScanOptions::new(0.0, 1.0, 0.05, 50.0);
        o.step = 0.05;
        assert!(matches!(
            singularity_scan(&spec, &w, &o),
            Err(SpectralError::GridTooCoarse { .. })
        ));
    }
}
