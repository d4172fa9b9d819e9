//! Experiment configuration in TOML.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::HarnessError;
use crate::model::{
    build_model, BumpProfile, FlatFoliatedModel, GroupoidKernel, KernelTerm, TrigPolynomial,
};
use crate::spectral::WINDOW_SIGMAS;

/// Schema version understood by this build.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub model: ModelSpec,
    pub kernel: KernelSpec,
    pub spectral: SpectralSpec,
    pub scan: ScanSpec,
    #[serde(default)]
    pub decay: DecaySpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub n: usize,
    pub p: usize,
    pub leaf_basis: Vec<Vec<f64>>,
    pub metric: Vec<Vec<f64>>,
    pub drift: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default)]
    pub terms: Vec<KernelTermSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTermSpec {
    /// Support radius of the leafwise bump.
    pub support: f64,
    /// Fourier coefficients of the torus weight; `φ ≡ 1` when empty.
    #[serde(default)]
    pub weight: Vec<FourierCoefficient>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierCoefficient {
    pub m: Vec<i64>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSpec {
    /// Eigenvalue cutoff `Λ`.
    pub cutoff: f64,
    /// Probe width `ε`.
    pub eps: f64,
    /// Frequencies used by the amplitude probes.
    pub s_ladder: Vec<f64>,
    /// Frequency of the singularity scan.
    pub scan_s: f64,
    #[serde(default = "default_max_lines")]
    pub max_lines: usize,
}

fn default_max_lines() -> usize {
    crate::spectral::DEFAULT_MAX_LINES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub t_min: f64,
    pub t_max: f64,
}

/// Off-period decay check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySpec {
    /// Number of random probe times; zero disables the check.
    pub samples: usize,
    /// Minimum distance to any period, in units of `ε`.
    pub min_distance: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub ladder_points: usize,
    /// Probe width of the check; the spectral `eps` when absent.
    #[serde(default)]
    pub eps: Option<f64>,
}

impl Default for DecaySpec {
    fn default() -> Self {
        Self {
            samples: 0,
            min_distance: 5.0,
            s_min: 50.0,
            s_max: 500.0,
            ladder_points: 10,
            eps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default)]
    pub overwrite: bool,
}

/// Pass thresholds of the comparison report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub period: f64,
    pub exponent: f64,
    pub phase_deg: f64,
    pub amplitude_ratio: f64,
    /// Off-period amplitudes must decay with a log-log slope below this.
    pub decay_slope: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            period: 2e-3,
            exponent: 0.05,
            phase_deg: 2.0,
            amplitude_ratio: 0.05,
            decay_slope: -5.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.version != CONFIG_VERSION {
            return Err(HarnessError::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let t = &self.tolerances;
        for (name, value) in [
            ("period", t.period),
            ("exponent", t.exponent),
            ("phase_deg", t.phase_deg),
            ("amplitude_ratio", t.amplitude_ratio),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(HarnessError::Config(format!(
                    "tolerance {name} must be positive, got {value}"
                )));
            }
        }
        if !t.decay_slope.is_finite() {
            return Err(HarnessError::Config("decay_slope must be finite".into()));
        }
        if !(self.spectral.eps > 0.0) {
            return Err(HarnessError::Config(format!(
                "eps must be positive, got {}",
                self.spectral.eps
            )));
        }
        if !(self.scan.t_max > self.scan.t_min) {
            return Err(HarnessError::Config(format!(
                "empty scan window [{}, {}]",
                self.scan.t_min, self.scan.t_max
            )));
        }
        if self.decay.samples > 0
            && (!(self.decay.s_min > 0.0)
                || !(self.decay.s_max > self.decay.s_min)
                || self.decay.ladder_points < 2
                || !(self.decay_eps() > 0.0))
        {
            return Err(HarnessError::Config("invalid decay ladder".into()));
        }
        Ok(())
    }

    pub fn decay_eps(&self) -> f64 {
        self.decay.eps.unwrap_or(self.spectral.eps)
    }

    /// Non-fatal inconsistencies between the scan window and the cutoff.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let s = &self.spectral;
        let reach = WINDOW_SIGMAS / s.eps;
        let mut top = s.s_ladder.iter().copied().fold(s.scan_s, f64::max) + reach;
        if self.decay.samples > 0 {
            top = top.max(self.decay.s_max + WINDOW_SIGMAS / self.decay_eps());
        }
        if top > s.cutoff {
            out.push(format!(
                "probe window reaches λ = {top:.1} beyond the cutoff Λ = {}; tail estimates may reject the probe",
                s.cutoff
            ));
        }
        // Periods closer than the resolution 2π/s cannot be separated.
        if s.scan_s * s.eps < 4.0 {
            out.push(format!(
                "scan frequency s = {} gives fewer than 4 oscillations per probe width",
                s.scan_s
            ));
        }
        if self.scan.t_min < 0.0 {
            out.push("negative times are scanned but not probed".into());
        }
        out
    }

    pub fn build_model(&self) -> Result<FlatFoliatedModel, HarnessError> {
        let m = &self.model;
        Ok(build_model(m.n, m.p, &m.leaf_basis, &m.metric, &m.drift)?)
    }

    pub fn build_kernel(&self, model: &FlatFoliatedModel) -> Result<GroupoidKernel, HarnessError> {
        let mut terms = Vec::with_capacity(self.kernel.terms.len());
        for spec in &self.kernel.terms {
            let weight = if spec.weight.is_empty() {
                TrigPolynomial::constant(model.n(), 1.0)
            } else {
                TrigPolynomial::new(
                    model.n(),
                    spec.weight
                        .iter()
                        .map(|c| (c.m.clone(), Complex64::new(c.re, c.im)))
                        .collect(),
                )?
            };
            terms.push(KernelTerm {
                weight,
                profile: BumpProfile::new(spec.support, model.p())?,
            });
        }
        Ok(GroupoidKernel::new(model, terms)?)
    }
}

/// Ready-made configurations for the standard models.
pub mod presets {
    use super::*;
    use crate::model::presets::golden_slope;

    fn identity(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    fn ladder(lo: f64, hi: f64, count: usize) -> Vec<f64> {
        (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect()
    }

    /// Kronecker foliation with golden slope, `φ ≡ 1`, support 2.
    pub fn kronecker() -> ExperimentConfig {
        ExperimentConfig {
            version: CONFIG_VERSION,
            name: "kronecker".into(),
            model: ModelSpec {
                n: 2,
                p: 1,
                leaf_basis: vec![vec![1.0, golden_slope()]],
                metric: identity(2),
                drift: vec![0.0, 0.0],
            },
            kernel: KernelSpec {
                terms: vec![KernelTermSpec {
                    support: 2.0,
                    weight: Vec::new(),
                }],
            },
            spectral: SpectralSpec {
                cutoff: 2600.0,
                eps: 0.01,
                s_ladder: ladder(600.0, 1600.0, 8),
                scan_s: 1500.0,
                max_lines: default_max_lines(),
            },
            scan: ScanSpec {
                t_min: 0.1,
                t_max: 3.02,
            },
            decay: DecaySpec {
                samples: 10,
                eps: Some(0.02),
                ..DecaySpec::default()
            },
            output: OutputSpec::default(),
            tolerances: Tolerances::default(),
            seed: 1,
        }
    }

    /// Horizontal circles on `T¹ × T¹` with drift `c`.
    pub fn product(drift: [f64; 2]) -> ExperimentConfig {
        ExperimentConfig {
            version: CONFIG_VERSION,
            name: "product".into(),
            model: ModelSpec {
                n: 2,
                p: 1,
                leaf_basis: vec![vec![1.0, 0.0]],
                metric: identity(2),
                drift: drift.to_vec(),
            },
            kernel: KernelSpec {
                terms: vec![KernelTermSpec {
                    support: 1.5,
                    weight: Vec::new(),
                }],
            },
            spectral: SpectralSpec {
                cutoff: 800.0,
                eps: 0.05,
                s_ladder: ladder(150.0, 500.0, 8),
                scan_s: 500.0,
                max_lines: default_max_lines(),
            },
            scan: ScanSpec {
                t_min: 0.5,
                t_max: 2.5,
            },
            decay: DecaySpec::default(),
            output: OutputSpec::default(),
            tolerances: Tolerances::default(),
            seed: 1,
        }
    }

    /// Circle leaves along the first axis of `T³`.
    pub fn circle_in_t3() -> ExperimentConfig {
        ExperimentConfig {
            version: CONFIG_VERSION,
            name: "circle-in-t3".into(),
            model: ModelSpec {
                n: 3,
                p: 1,
                leaf_basis: vec![vec![1.0, 0.0, 0.0]],
                metric: identity(3),
                drift: vec![0.0; 3],
            },
            kernel: KernelSpec {
                terms: vec![KernelTermSpec {
                    support: 0.9,
                    weight: Vec::new(),
                }],
            },
            spectral: SpectralSpec {
                cutoff: 300.0,
                eps: 0.1,
                s_ladder: ladder(60.0, 200.0, 8),
                scan_s: 200.0,
                max_lines: default_max_lines(),
            },
            scan: ScanSpec {
                t_min: 0.5,
                t_max: 1.2,
            },
            decay: DecaySpec::default(),
            output: OutputSpec::default(),
            tolerances: Tolerances::default(),
            seed: 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        for config in [
            presets::kronecker(),
            presets::product([0.0, 0.1]),
            presets::circle_in_t3(),
        ] {
            let text = config.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), config);
        }
    }

    #[test]
    fn defaults_fill_optional_sections() {
        let text = r#"
            version = 1
            [model]
            n = 2
            p = 1
            leaf_basis = [[1.0, 0.0]]
            metric = [[1.0, 0.0], [0.0, 1.0]]
            drift = [0.0, 0.0]
            [kernel]
            terms = [{ support = 1.0 }]
            [spectral]
            cutoff = 100.0
            eps = 0.1
            s_ladder = [20.0, 30.0, 40.0, 50.0]
            scan_s = 50.0
            [scan]
            t_min = 0.5
            t_max = 2.0
        "#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.tolerances, Tolerances::default());
        assert_eq!(c.decay.samples, 0);
        let m = c.build_model().unwrap();
        assert_eq!(c.build_kernel(&m).unwrap().terms().len(), 1);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = presets::product([0.0, 0.0]);
        c.tolerances.phase_deg = 0.0;
        assert!(matches!(c.validate(), Err(HarnessError::Config(_))));
        let mut c = presets::product([0.0, 0.0]);
        c.version = 7;
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_toml("version = 1\nbogus = 3").is_err());
    }

    #[test]
    fn warns_when_window_exceeds_cutoff() {
        let mut c = presets::product([0.0, 0.0]);
        assert!(c.warnings().is_empty());
        c.spectral.cutoff = 400.0;
        assert_eq!(c.warnings().len(), 1);
    }
}
