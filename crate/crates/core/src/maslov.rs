//! Maslov factors `σ = sgn R + 2κ` of relative-period components.
//!
//! Transverse coordinates are `(y, η) ∈ R^q × R^q`, the orthonormal
//! transverse frame and its dual. The generating function of the flow
//! solves `∂_t χ = p(∂_y χ)` with `χ(0, y, η) = y·η`; for the
//! `x`-independent symbols of flat models it is `y·η + t·p(η)`.
//!
//! The relative fixed-point condition reads `f_{−t} dh*_γ(ν) = ν`, so the
//! matrix `R` is assembled from the generating function at time `−t`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::geometric::RelativePeriodComponent;
use crate::model::FlatFoliatedModel;

/// Relative threshold for zero eigenvalues of `R`.
pub const ZERO_EIGENVALUE_THRESHOLD: f64 = 1e-8;
/// Eigenvalues within this multiple of the threshold are flagged.
pub const MARGINAL_FACTOR: f64 = 10.0;
/// Minimum number of τ-steps when tracking the Lagrangian curve.
pub const MIN_CROSSING_STEPS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaslovError {
    #[error("covector η is zero")]
    ZeroCovector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("R is not symmetric (asymmetry {0:.3e})")]
    Asymmetric(f64),
    #[error("finite-difference Hessian failed the Richardson check (discrepancy {0:.3e})")]
    FiniteDifference(f64),
    #[error("Maslov index differs between samples: {0:?}")]
    SampleDisagreement(Vec<i32>),
    #[error("signature is numerically marginal (smallest |eigenvalue| {0:.3e})")]
    Marginal(f64),
    #[error("Lagrangian crossing within 1e-6 of a grid point at τ = {0}")]
    AmbiguousCrossing(f64),
    #[error("Maslov index undefined for the t = 0 component")]
    ZeroPeriod,
}

/// Solution of the Cauchy problem for the generating function of `f_t` in a
/// linear transverse chart where `p(η) = √(ηᵀ G η)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratingFunction {
    pub t: f64,
    /// Dual metric of the chart; the identity in the orthonormal chart.
    pub chart_dual: DMatrix<f64>,
}

/// Generating function in the orthonormal transverse chart.
pub fn solve_generating_function(model: &FlatFoliatedModel, t: f64) -> GeneratingFunction {
    GeneratingFunction {
        t,
        chart_dual: DMatrix::identity(model.q(), model.q()),
    }
}

/// Generating function in the chart `y' = A y` (so `η' = A⁻ᵀ η`).
pub fn solve_generating_function_in_chart(
    model: &FlatFoliatedModel,
    t: f64,
    chart: &DMatrix<f64>,
) -> Result<GeneratingFunction, MaslovError> {
    let q = model.q();
    if chart.nrows() != q || chart.ncols() != q {
        return Err(MaslovError::Dimension {
            expected: q,
            got: chart.nrows(),
        });
    }
    // p'(η') = |Aᵀ η'|
    Ok(GeneratingFunction {
        t,
        chart_dual: chart * chart.transpose(),
    })
}

impl GeneratingFunction {
    pub fn q(&self) -> usize {
        self.chart_dual.nrows()
    }

    /// Transverse principal symbol in this chart.
    pub fn symbol(&self, eta: &[f64]) -> f64 {
        let e = DVector::from_column_slice(eta);
        e.dot(&(&self.chart_dual * &e)).max(0.0).sqrt()
    }

    fn symbol_gradient(&self, eta: &[f64]) -> DVector<f64> {
        let e = DVector::from_column_slice(eta);
        let ge = &self.chart_dual * &e;
        let p = e.dot(&ge).sqrt();
        ge / p
    }

    fn symbol_hessian(&self, eta: &[f64]) -> DMatrix<f64> {
        let e = DVector::from_column_slice(eta);
        let ge = &self.chart_dual * &e;
        let p = e.dot(&ge).sqrt();
        (&self.chart_dual - &ge * ge.transpose() / (p * p)) / p
    }

    fn check(&self, y: &[f64], eta: &[f64]) -> Result<(), MaslovError> {
        let q = self.q();
        if y.len() != q || eta.len() != q {
            return Err(MaslovError::Dimension {
                expected: q,
                got: eta.len(),
            });
        }
        if !(self.symbol(eta) > 0.0) {
            return Err(MaslovError::ZeroCovector);
        }
        Ok(())
    }

    /// `χ(t, y, η) = y·η + t·p(η)`.
    pub fn value(&self, y: &[f64], eta: &[f64]) -> Result<f64, MaslovError> {
        self.check(y, eta)?;
        Ok(self.value_at(self.t, y, eta))
    }

    fn value_at(&self, t: f64, y: &[f64], eta: &[f64]) -> f64 {
        y.iter().zip(eta).map(|(a, b)| a * b).sum::<f64>() + t * self.symbol(eta)
    }

    /// `(∂_y χ, ∂_η χ)`.
    pub fn gradient(&self, y: &[f64], eta: &[f64]) -> Result<(Vec<f64>, Vec<f64>), MaslovError> {
        self.check(y, eta)?;
        let g = self.symbol_gradient(eta);
        Ok((
            eta.to_vec(),
            y.iter()
                .zip(g.iter())
                .map(|(a, b)| a + self.t * b)
                .collect(),
        ))
    }

    /// `(χ_yy, χ_yη, χ_ηη)`, analytically.
    pub fn hessian(&self, y: &[f64], eta: &[f64]) -> Result<[DMatrix<f64>; 3], MaslovError> {
        self.check(y, eta)?;
        let q = self.q();
        Ok([
            DMatrix::zeros(q, q),
            DMatrix::identity(q, q),
            self.symbol_hessian(eta) * self.t,
        ])
    }

    /// Residual `|∂_t χ − p(∂_y χ)|` with the time derivative by central
    /// differences.
    pub fn cauchy_residual(&self, y: &[f64], eta: &[f64]) -> Result<f64, MaslovError> {
        self.check(y, eta)?;
        let h = 1e-4;
        let dt =
            (self.value_at(self.t + h, y, eta) - self.value_at(self.t - h, y, eta)) / (2.0 * h);
        let (dy, _) = self.gradient(y, eta)?;
        Ok((dt - self.symbol(&dy)).abs())
    }

    /// `χ(t, y, η)` by the method of characteristics: along
    /// `ẏ = −∇p(η)`, `η̇ = 0`, `χ̇ = p(η) − η·∇p(η)`, integrated with RK4 and
    /// a shooting correction on the initial point.
    pub fn value_by_characteristics(
        &self,
        y: &[f64],
        eta: &[f64],
        steps: usize,
    ) -> Result<f64, MaslovError> {
        self.check(y, eta)?;
        let q = self.q();
        let steps = steps.max(1);
        let h = self.t / steps as f64;
        let rhs = |_y: &[f64], e: &[f64]| -> (Vec<f64>, f64) {
            let g = self.symbol_gradient(e);
            let dchi = self.symbol(e) - e.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>();
            (g.iter().map(|v| -v).collect(), dchi)
        };
        let integrate = |y0: &[f64]| -> (Vec<f64>, f64) {
            let mut yc = y0.to_vec();
            let mut chi: f64 = y0.iter().zip(eta).map(|(a, b)| a * b).sum();
            for _ in 0..steps {
                let (k1, c1) = rhs(&yc, eta);
                let y2: Vec<f64> = (0..q).map(|i| yc[i] + 0.5 * h * k1[i]).collect();
                let (k2, c2) = rhs(&y2, eta);
                let y3: Vec<f64> = (0..q).map(|i| yc[i] + 0.5 * h * k2[i]).collect();
                let (k3, c3) = rhs(&y3, eta);
                let y4: Vec<f64> = (0..q).map(|i| yc[i] + h * k3[i]).collect();
                let (k4, c4) = rhs(&y4, eta);
                for i in 0..q {
                    yc[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                chi += h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4);
            }
            (yc, chi)
        };
        let mut y0 = y.to_vec();
        for _ in 0..20 {
            let (end, _) = integrate(&y0);
            let miss: Vec<f64> = (0..q).map(|i| y[i] - end[i]).collect();
            if miss
                .iter()
                .all(|m| m.abs() < 1e-15 * (1.0 + y[i_max(y)].abs()))
            {
                break;
            }
            for i in 0..q {
                y0[i] += miss[i];
            }
        }
        Ok(integrate(&y0).1)
    }
}

fn i_max(v: &[f64]) -> usize {
    (0..v.len())
        .max_by(|a, b| v[*a].abs().total_cmp(&v[*b].abs()))
        .unwrap_or(0)
}

/// `[[χ_yy, χ_yη, −I], [χ_ηy, χ_ηη, 0], [−I, 0, 0]]`.
pub fn assemble_r(
    gen_fn: &GeneratingFunction,
    y: &[f64],
    eta: &[f64],
) -> Result<DMatrix<f64>, MaslovError> {
    let [yy, yeta, etaeta] = gen_fn.hessian(y, eta)?;
    Ok(block_matrix(&yy, &yeta, &etaeta))
}

fn block_matrix(yy: &DMatrix<f64>, yeta: &DMatrix<f64>, etaeta: &DMatrix<f64>) -> DMatrix<f64> {
    let q = yy.nrows();
    let mut r = DMatrix::zeros(3 * q, 3 * q);
    let id = DMatrix::<f64>::identity(q, q);
    r.view_mut((0, 0), (q, q)).copy_from(yy);
    r.view_mut((0, q), (q, q)).copy_from(yeta);
    r.view_mut((q, 0), (q, q)).copy_from(&yeta.transpose());
    r.view_mut((q, q), (q, q)).copy_from(etaeta);
    r.view_mut((0, 2 * q), (q, q)).copy_from(&(-&id));
    r.view_mut((2 * q, 0), (q, q)).copy_from(&(-&id));
    r
}

/// `R` with second derivatives of `χ` by central differences (step `1e-5`),
/// checked against a Richardson extrapolation with step `2·10⁻⁵`.
pub fn assemble_r_finite_difference(
    gen_fn: &GeneratingFunction,
    y: &[f64],
    eta: &[f64],
) -> Result<DMatrix<f64>, MaslovError> {
    gen_fn.check(y, eta)?;
    let q = gen_fn.q();
    let z: Vec<f64> = y.iter().chain(eta).copied().collect();
    let f = |z: &[f64]| gen_fn.value_at(gen_fn.t, &z[..q], &z[q..]);
    let hessian = |h: f64| {
        DMatrix::from_fn(2 * q, 2 * q, |i, j| {
            let at = |di: f64, dj: f64| {
                let mut w = z.clone();
                w[i] += di;
                w[j] += dj;
                f(&w)
            };
            (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h)
        })
    };
    let fine = hessian(1e-5);
    let coarse = hessian(2e-5);
    let richardson = (&fine * 4.0 - &coarse) / 3.0;
    let scale = 1.0 + richardson.amax();
    let gap = (&richardson - &fine).amax();
    if gap > 1e-3 * scale {
        return Err(MaslovError::FiniteDifference(gap));
    }
    let yy = fine.view((0, 0), (q, q)).into_owned();
    let yeta = fine.view((0, q), (q, q)).into_owned();
    let etaeta = fine.view((q, q), (q, q)).into_owned();
    let r = block_matrix(&yy, &yeta, &etaeta);
    let asym = (&r - r.transpose()).amax();
    if asym > 1e-8 {
        return Err(MaslovError::Asymmetric(asym));
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Signature {
    pub signature: i32,
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
    /// Some eigenvalue lies within `MARGINAL_FACTOR` of the zero threshold.
    pub marginal: bool,
}

/// Number of positive minus negative eigenvalues, zeros below
/// `10⁻⁸·‖R‖`.
pub fn signature(r: &DMatrix<f64>) -> Result<Signature, MaslovError> {
    let asym = (r - r.transpose()).amax();
    let norm = r.norm();
    if asym > 1e-12 * norm.max(1.0) {
        return Err(MaslovError::Asymmetric(asym));
    }
    let sym = (r + r.transpose()) * 0.5;
    let eig = sym.symmetric_eigen().eigenvalues;
    let threshold = ZERO_EIGENVALUE_THRESHOLD * norm;
    let mut s = Signature {
        signature: 0,
        positive: 0,
        negative: 0,
        zero: 0,
        marginal: false,
    };
    for e in eig.iter() {
        if e.abs() <= threshold {
            s.zero += 1;
        } else {
            if e.abs() <= MARGINAL_FACTOR * threshold {
                s.marginal = true;
            }
            if *e > 0.0 {
                s.positive += 1;
            } else {
                s.negative += 1;
            }
        }
    }
    s.signature = s.positive as i32 - s.negative as i32;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntersectionCount {
    /// Regularized count: interior crossings plus half the endpoint ones.
    pub kappa: i32,
    pub interior: i32,
    /// Signed endpoint contacts (each worth one half in `kappa`).
    pub endpoint: i32,
    pub steps: usize,
}

/// Frame of `L(τ) = (df_τ)⁻¹(vertical)`: `(δy, δη) = (−τ·Hess p·u, u)`.
fn lagrangian_frame(tau: f64, eta: &[f64], hessian: &DMatrix<f64>) -> DMatrix<f64> {
    let q = eta.len();
    let mut frame = DMatrix::zeros(2 * q, q);
    frame
        .view_mut((0, 0), (q, q))
        .copy_from(&(hessian * (-tau)));
    frame
        .view_mut((q, 0), (q, q))
        .copy_from(&DMatrix::identity(q, q));
    frame
}

/// Intersection number of the curve `τ ↦ L(τ)`, `τ ∈ [0, t]`, with the
/// horizontal subspace `{δη = 0}`, counted through sign changes of the
/// determinant of the frame's `η`-block.
pub fn intersection_number(
    model: &FlatFoliatedModel,
    component: &RelativePeriodComponent,
) -> Result<IntersectionCount, MaslovError> {
    let eta = &component.transverse_direction;
    if eta.len() != model.q() {
        return Err(MaslovError::Dimension {
            expected: model.q(),
            got: eta.len(),
        });
    }
    let gf = solve_generating_function(model, component.t);
    let hessian = gf.symbol_hessian(eta);
    let t = component.t;
    let steps = MIN_CROSSING_STEPS.max((t.abs() * 1000.0).ceil() as usize);
    let q = eta.len();
    let det_at = |tau: f64| {
        lagrangian_frame(tau, eta, &hessian)
            .view((q, 0), (q, q))
            .determinant()
    };
    let tol = 1e-12;
    let mut interior = 0;
    let mut endpoint = 0;
    let mut previous = det_at(0.0);
    if previous.abs() < tol {
        endpoint += 1;
    }
    for k in 1..=steps {
        let tau = t * k as f64 / steps as f64;
        let current = det_at(tau);
        if k == steps && current.abs() < tol {
            endpoint += 1;
        } else if previous.abs() >= tol
            && current.abs() >= tol
            && previous.signum() != current.signum()
        {
            // bisect to make sure the crossing is resolved away from grid points
            let (mut lo, mut hi) = (t * (k - 1) as f64 / steps as f64, tau);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if det_at(mid).signum() == previous.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let grid = t / steps as f64;
            let offset = ((lo - t * (k - 1) as f64 / steps as f64) / grid).abs();
            if offset < 1e-6 || (1.0 - offset) < 1e-6 {
                return Err(MaslovError::AmbiguousCrossing(lo));
            }
            interior += if current > previous { 1 } else { -1 };
        }
        previous = current;
    }
    Ok(IntersectionCount {
        kappa: interior + endpoint / 2,
        interior,
        endpoint,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaslovData {
    pub r_matrix: DMatrix<f64>,
    pub signature: i32,
    pub kappa: i32,
    pub sigma: i32,
    pub samples: usize,
}

/// `σ = sgn R + 2κ`, evaluated at `sample_count ≥ 5` points of the component.
pub fn maslov_index<R: Rng + ?Sized>(
    model: &FlatFoliatedModel,
    component: &RelativePeriodComponent,
    sample_count: usize,
    rng: &mut R,
) -> Result<MaslovData, MaslovError> {
    if component.is_diagonal() {
        return Err(MaslovError::ZeroPeriod);
    }
    let q = model.q();
    let kappa = intersection_number(model, component)?.kappa;
    let gf = solve_generating_function(model, -component.t);
    let mut values = Vec::new();
    let mut first = None;
    for _ in 0..sample_count.max(5) {
        let y: Vec<f64> = (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scale = rng.gen_range(0.5..4.0);
        let eta: Vec<f64> = component
            .transverse_direction
            .iter()
            .map(|a| scale * a)
            .collect();
        let r = assemble_r(&gf, &y, &eta)?;
        let sig = signature(&r)?;
        if sig.marginal {
            return Err(MaslovError::Marginal(ZERO_EIGENVALUE_THRESHOLD * r.norm()));
        }
        values.push(sig.signature + 2 * kappa);
        first.get_or_insert(r);
    }
    if values.iter().any(|v| *v != values[0]) {
        return Err(MaslovError::SampleDisagreement(values));
    }
    let r_matrix = first.expect("at least one sample");
    let sig = signature(&r_matrix)?.signature;
    Ok(MaslovData {
        r_matrix,
        signature: sig,
        kappa,
        sigma: values[0],
        samples: values.len(),
    })
}
