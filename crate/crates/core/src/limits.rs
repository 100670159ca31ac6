//! Covariance matrices of the normalized functionals `X_{r,a}(t)` and their
//! large-`r` limits.
//!
//! The processes are zero-mean Gaussian, so convergence of finite-dimensional
//! distributions is the same as convergence of covariance matrices over the
//! chosen times. Everything below is a statement about those matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::fmt17;
use crate::error::{Error, Result};
use crate::quad::{
    integrate_singular_with_breaks, integrate_tail, IntegralResult, QuadratureSpec, SingularPoint,
};
use crate::specfun::unit_sphere_area;
use crate::spectral::CyclicalSpectralDensity;
use crate::weights::WeightKernel;

pub const DEFAULT_TIMES: [f64; 3] = [0.25, 0.5, 1.0];

/// Stated once in every report.
pub const GAUSSIAN_REDUCTION: &str = "zero-mean Gaussian: fdd convergence is equivalent to \
     convergence of the covariance matrices over the sampled times";

/// Panel half-width around `a`, in units of `1 / (r min t)`.
const CONCENTRATION_WINDOW: f64 = 10.0;

/// Smallest eigenvalue still accepted as positive semidefinite.
pub const PSD_TOLERANCE: f64 = -1e-8;

/// `X_{r,a}(t) = c r^{alpha/2} ...`-type functional at centre `a = kernel.a()`.
#[derive(Debug, Clone)]
pub struct NormalizedFunctionalSpec {
    pub density: CyclicalSpectralDensity,
    pub kernel: WeightKernel,
    /// 1-based singularity index when `a = a_j`; `None` selects unit constants.
    pub j: Option<usize>,
    pub alpha: f64,
    pub times: Vec<f64>,
}

impl NormalizedFunctionalSpec {
    /// Centred at the singular frequency `a_j` with `alpha = alpha_j`.
    pub fn at_singularity(
        density: CyclicalSpectralDensity,
        kernel: WeightKernel,
        j: usize,
        times: Vec<f64>,
    ) -> Result<Self> {
        let sing = *density
            .singularities()
            .get(j.wrapping_sub(1))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "singularity index must be in 1..={}, got {j}",
                    density.singularities().len()
                ))
            })?;
        let kernel = if kernel.a() == sing.a {
            kernel
        } else {
            kernel.recentred(sing.a)?
        };
        let s = Self {
            density,
            kernel,
            j: Some(j),
            alpha: sing.alpha,
            times,
        };
        s.validate()?;
        Ok(s)
    }

    /// Unit constants and a free exponent, centred wherever the kernel is.
    pub fn unit_constants(
        density: CyclicalSpectralDensity,
        kernel: WeightKernel,
        alpha: f64,
        times: Vec<f64>,
    ) -> Result<Self> {
        let s = Self {
            density,
            kernel,
            j: None,
            alpha,
            times,
        };
        s.validate()?;
        Ok(s)
    }

    /// Same spec with a different normalization exponent.
    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.alpha = alpha;
        self.validate()?;
        Ok(self)
    }

    pub fn a(&self) -> f64 {
        self.kernel.a()
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel.n() != self.density.n() {
            return Err(Error::invalid(format!(
                "kernel dimension {} differs from density dimension {}",
                self.kernel.n(),
                self.density.n()
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.times.is_empty()
            || self.times.iter().any(|t| !(0.0..=1.0).contains(t))
            || self.times.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(Error::invalid(
                "times must be non-empty, strictly increasing and inside [0, 1]",
            ));
        }
        if let Some(j) = self.j {
            let a_j = self.density.singularities()[j - 1].a;
            if self.kernel.a() != a_j {
                return Err(Error::invalid(format!(
                    "kernel centre {} is not the singular frequency a_{j} = {a_j}",
                    self.kernel.a()
                )));
            }
        }
        Ok(())
    }

    /// `V_a / (2 h(a))`, or 1 under unit constants.
    pub fn prefactor(&self) -> Result<f64> {
        match self.j {
            Some(j) => Ok(v_constant(&self.density, j)? / (2.0 * self.density.h(self.a()))),
            None => Ok(1.0),
        }
    }
}

/// `V_{a_j} = a_j^{1 - alpha0} prod_{i != j} |a_j - a_i|^{1 - alpha_i}`.
pub fn v_constant(d: &CyclicalSpectralDensity, j: usize) -> Result<f64> {
    let sing = d.singularities();
    if j == 0 {
        return Err(Error::invalid(
            "V is only defined at singular frequencies a_j with j >= 1",
        ));
    }
    if j > sing.len() {
        return Err(Error::invalid(format!(
            "singularity index must be in 1..={}, got {j}",
            sing.len()
        )));
    }
    let a_j = sing[j - 1].a;
    let mut v = a_j.powf(1.0 - d.alpha0());
    for (i, s) in sing.iter().enumerate() {
        if i + 1 != j {
            v *= (a_j - s.a).abs().powf(1.0 - s.alpha);
        }
    }
    Ok(v)
}

/// Covariance matrix over `times`; `r = None` marks the limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrixResult {
    pub r: Option<f64>,
    pub times: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
    pub error_estimates: Vec<Vec<f64>>,
    pub min_eigenvalue: f64,
}

impl CovarianceMatrixResult {
    fn assemble(r: Option<f64>, times: &[f64], entries: Vec<IntegralResult>) -> Self {
        let m = times.len();
        let mut matrix = vec![vec![0.0; m]; m];
        let mut error_estimates = vec![vec![0.0; m]; m];
        let mut it = entries.into_iter();
        for p in 0..m {
            for q in p..m {
                let e = it.next().expect("one entry per pair");
                matrix[p][q] = e.value;
                matrix[q][p] = e.value;
                error_estimates[p][q] = e.error_estimate;
                error_estimates[q][p] = e.error_estimate;
            }
        }
        let min_eigenvalue = smallest_eigenvalue(&matrix);
        Self {
            r,
            times: times.to_vec(),
            matrix,
            error_estimates,
            min_eigenvalue,
        }
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue >= PSD_TOLERANCE
    }

    pub fn is_symmetric(&self) -> bool {
        let m = &self.matrix;
        (0..m.len()).all(|p| (0..m.len()).all(|q| m[p][q] == m[q][p]))
    }

    /// Largest entrywise `|A - B|`.
    pub fn max_abs_deviation(&self, other: &Self) -> f64 {
        self.matrix
            .iter()
            .flatten()
            .zip(other.matrix.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.matrix
            .iter()
            .flatten()
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }
}

pub fn smallest_eigenvalue(matrix: &[Vec<f64>]) -> f64 {
    let m = matrix.len();
    if m == 0 {
        return 0.0;
    }
    let a = DMatrix::from_fn(m, m, |i, j| matrix[i][j]);
    SymmetricEigen::new(a)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|p| (p..m).map(move |q| (p, q))).collect()
}

fn zero() -> IntegralResult {
    IntegralResult {
        value: 0.0,
        error_estimate: 0.0,
        subdivisions_used: 0,
        converged: true,
    }
}

/// `Cov(X_{r,a}(t_p), X_{r,a}(t_q)) = c (r t_p)^n (r t_q)^n / r^{2n - alpha}
///  int g(r t_p (rho - a)) g(r t_q (rho - a)) dPhi(rho)`.
pub fn finite_r_cov(
    spec: &NormalizedFunctionalSpec,
    r: f64,
    quad: &QuadratureSpec,
) -> Result<CovarianceMatrixResult> {
    spec.validate()?;
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::domain(
            "finite_r_cov",
            format!("need finite r > 0, got {r}"),
        ));
    }
    let n = spec.density.n() as i32;
    let a = spec.a();
    let kern = &spec.kernel;
    let c = spec.prefactor()?;
    let times = &spec.times;
    let entries = pairs(times.len())
        .into_par_iter()
        .map(|(p, q)| {
            let (tp, tq) = (times[p], times[q]);
            if tp == 0.0 || tq == 0.0 {
                return Ok(zero());
            }
            let t_min = tp.min(tq);
            let t_max = tp.max(tq);
            let mut breaks = vec![];
            for w in [0.5, 1.0, 2.0, CONCENTRATION_WINDOW] {
                let d = w / (r * t_min);
                breaks.extend([a - d, a + d]);
            }
            for s in kern.breakpoints() {
                for t in [tp, tq] {
                    breaks.extend([a - s / (r * t), a + s / (r * t)]);
                }
            }
            breaks.retain(|&b| b > 0.0);
            let upper = a + kern.support() / (r * t_max);
            let omega = kern.frequency() * r * (tp + tq);
            let gg = |rho: f64| kern.g(r * tp * (rho - a)) * kern.g(r * tq * (rho - a));
            // One panel per period over the whole support, each of which
            // may need a few bisections at large r.
            let periods = omega * upper.min(spec.density.support_end()) / std::f64::consts::TAU;
            let mut budget = quad.clone();
            budget.max_subdivisions = budget
                .max_subdivisions
                .max(8 * (periods as usize + breaks.len()));
            let mut res = spec.density.integrate(gg, upper, omega, &breaks, &budget)?;
            let scale = c * (tp * tq).powi(n) * r.powf(spec.alpha);
            res.value *= scale;
            res.error_estimate *= scale;
            res.require(format!("finite-r covariance at r = {r}, t = ({tp}, {tq})"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CovarianceMatrixResult::assemble(Some(r), times, entries))
}

/// `Cov(X_a(t_p), X_a(t_q)) = (t_p t_q)^n omega_n int_0^inf rho^{alpha-1}
///  g(rho t_p) g(rho t_q) d rho`.
pub fn limit_cov(
    spec: &NormalizedFunctionalSpec,
    quad: &QuadratureSpec,
) -> Result<CovarianceMatrixResult> {
    spec.validate()?;
    let alpha = spec.alpha;
    if alpha >= 1.0 {
        return Err(Error::invalid("the limit covariance needs alpha < 1"));
    }
    let n = spec.density.n();
    let omega_n = unit_sphere_area(n);
    let kern = &spec.kernel;
    let times = &spec.times;
    let base = quad.clone().with_singular_points(vec![SingularPoint {
        location: 0.0,
        exponent: alpha - 1.0,
    }]);
    let entries = pairs(times.len())
        .into_par_iter()
        .map(|(p, q)| {
            let (tp, tq) = (times[p], times[q]);
            if tp == 0.0 || tq == 0.0 {
                return Ok(zero());
            }
            let f = |rho: f64| rho.powf(alpha - 1.0) * kern.g(rho * tp) * kern.g(rho * tq);
            let support = kern.support();
            let mut res = if support.is_finite() {
                let breaks: Vec<f64> = kern
                    .breakpoints()
                    .iter()
                    .flat_map(|&s| [s / tp, s / tq])
                    .collect();
                integrate_singular_with_breaks(f, 0.0, support / tp.max(tq), &breaks, &base)?
            } else {
                let w = kern.frequency();
                integrate_tail(f, 0.0, &[w * (tp + tq), w * (tp - tq).abs()], &base)?
            };
            let scale = (tp * tq).powi(n as i32) * omega_n;
            res.value *= scale;
            res.error_estimate *= scale;
            res.require(format!("limit covariance at t = ({tp}, {tq})"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CovarianceMatrixResult::assemble(None, times, entries))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Theorem1Verdict {
    Converged,
    /// Decreasing, but not yet below the threshold.
    Converging,
    /// Deviations stagnate or grow: the exponent does not match the density.
    NormalizationMismatch,
}

impl Theorem1Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Theorem1Verdict::Converged => "CONVERGED",
            Theorem1Verdict::Converging => "CONVERGING",
            Theorem1Verdict::NormalizationMismatch => "NORMALIZATION MISMATCH",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub note: String,
    pub a: f64,
    pub j: usize,
    pub alpha: f64,
    pub density_alpha: f64,
    pub times: Vec<f64>,
    pub ladder: Vec<f64>,
    pub deltas: Vec<f64>,
    pub relative_deltas: Vec<f64>,
    /// `Delta(r_{m+1}) / Delta(r_m)`.
    pub ratios: Vec<f64>,
    /// `finite_r_cov / limit_cov` at the largest time, per rung.
    pub kappa: Vec<f64>,
    pub kappa_stable: bool,
    pub decreasing: bool,
    pub threshold: f64,
    pub verdict: Theorem1Verdict,
    pub passed: bool,
    pub all_psd: bool,
    pub limit: CovarianceMatrixResult,
    pub finite: Vec<CovarianceMatrixResult>,
}

impl Theorem1Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,delta,relative_delta,kappa\n");
        for i in 0..self.ladder.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt17(self.ladder[i]),
                fmt17(self.deltas[i]),
                fmt17(self.relative_deltas[i]),
                fmt17(self.kappa[i])
            ));
        }
        out
    }
}

/// Ratios above this count as stagnation.
const STAGNATION_RATIO: f64 = 0.9;
pub const KAPPA_STABILITY: f64 = 0.02;

fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.len() < 2
        || ladder.iter().any(|r| !(*r > 0.0 && r.is_finite()))
        || ladder.windows(2).any(|w| !(w[0] < w[1]))
    {
        return Err(Error::invalid(
            "the r ladder needs at least two increasing positive radii",
        ));
    }
    Ok(())
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Deviations between the finite-`r` and limit matrices along a ladder.
///
/// `relative_threshold` bounds the final deviation relative to the largest
/// limit entry for a `CONVERGED` verdict.
pub fn theorem1_diagnostic(
    spec: &NormalizedFunctionalSpec,
    ladder: &[f64],
    relative_threshold: f64,
    quad: &QuadratureSpec,
) -> Result<Theorem1Report> {
    let j = spec
        .j
        .ok_or_else(|| Error::invalid("the spec must be centred at a singular frequency"))?;
    check_ladder(ladder)?;
    let limit = limit_cov(spec, quad)?;
    let finite = ladder
        .iter()
        .map(|&r| finite_r_cov(spec, r, quad))
        .collect::<Result<Vec<_>>>()?;
    let scale = limit.max_abs_entry();
    let deltas: Vec<f64> = finite.iter().map(|m| m.max_abs_deviation(&limit)).collect();
    let relative_deltas: Vec<f64> = deltas.iter().map(|d| d / scale).collect();
    let ratios: Vec<f64> = deltas.windows(2).map(|w| w[1] / w[0]).collect();
    let last = spec.times.len() - 1;
    let kappa: Vec<f64> = finite
        .iter()
        .map(|m| m.matrix[last][last] / limit.matrix[last][last])
        .collect();
    let k = kappa.len();
    let kappa_stable = (kappa[k - 1] / kappa[k - 2] - 1.0).abs() <= KAPPA_STABILITY;
    let decreasing = strictly_decreasing(&deltas);
    let verdict = if !decreasing || ratios.last().is_some_and(|&q| q > STAGNATION_RATIO) {
        Theorem1Verdict::NormalizationMismatch
    } else if relative_deltas[k - 1] <= relative_threshold {
        Theorem1Verdict::Converged
    } else {
        Theorem1Verdict::Converging
    };
    let all_psd = limit.is_psd() && finite.iter().all(|m| m.is_psd());
    Ok(Theorem1Report {
        note: GAUSSIAN_REDUCTION.to_string(),
        a: spec.a(),
        j,
        alpha: spec.alpha,
        density_alpha: spec.density.singularities()[j - 1].alpha,
        times: spec.times.clone(),
        ladder: ladder.to_vec(),
        deltas,
        relative_deltas,
        ratios,
        kappa,
        kappa_stable,
        decreasing,
        threshold: relative_threshold,
        verdict,
        passed: verdict == Theorem1Verdict::Converged && all_psd,
        all_psd,
        limit,
        finite,
    })
}

/// Normalized variance `Cov(X_{r,a}(t), X_{r,a}(t))` with unit constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceLadder {
    pub a: f64,
    pub alpha: f64,
    pub t: f64,
    pub ladder: Vec<f64>,
    pub variances: Vec<f64>,
    pub error_estimates: Vec<f64>,
    pub decreasing: bool,
    pub final_over_initial: f64,
}

impl VarianceLadder {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,variance,error\n");
        for i in 0..self.ladder.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt17(self.ladder[i]),
                fmt17(self.variances[i]),
                fmt17(self.error_estimates[i])
            ));
        }
        out
    }
}

pub fn variance_ladder(
    density: &CyclicalSpectralDensity,
    kernel: &WeightKernel,
    alpha: f64,
    t: f64,
    ladder: &[f64],
    quad: &QuadratureSpec,
) -> Result<VarianceLadder> {
    check_ladder(ladder)?;
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::invalid(format!("t must be in (0, 1], got {t}")));
    }
    let spec =
        NormalizedFunctionalSpec::unit_constants(density.clone(), kernel.clone(), alpha, vec![t])?;
    let mats = ladder
        .iter()
        .map(|&r| finite_r_cov(&spec, r, quad))
        .collect::<Result<Vec<_>>>()?;
    let variances: Vec<f64> = mats.iter().map(|m| m.matrix[0][0]).collect();
    let error_estimates = mats.iter().map(|m| m.error_estimates[0][0]).collect();
    Ok(VarianceLadder {
        a: kernel.a(),
        alpha,
        t,
        ladder: ladder.to_vec(),
        decreasing: strictly_decreasing(&variances),
        final_over_initial: variances[variances.len() - 1] / variances[0],
        variances,
        error_estimates,
    })
}

/// Required drop of the variance over the ladder.
pub const DEGENERATION_RATIO: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub note: String,
    pub ladder: VarianceLadder,
    pub degenerates: bool,
    pub passed: bool,
}

/// Variance of the unit-constant functional away from every singular
/// frequency; it should vanish as `r` grows.
pub fn theorem2_diagnostic(
    density: &CyclicalSpectralDensity,
    kernel: &WeightKernel,
    alpha: f64,
    t: f64,
    ladder: &[f64],
    quad: &QuadratureSpec,
) -> Result<Theorem2Report> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!(
            "alpha must be strictly inside (0, 1), got {alpha}"
        )));
    }
    let a = kernel.a();
    if !(a > 0.0) {
        return Err(Error::invalid("the centre frequency must be positive"));
    }
    if let Some(j) = density.singularity_index(a) {
        return Err(Error::invalid(format!(
            "a = {a} coincides with a singular frequency (a_{j}); the degenerate regime needs a away from every a_i"
        )));
    }
    let ladder = variance_ladder(density, kernel, alpha, t, ladder, quad)?;
    let degenerates = ladder.decreasing && ladder.final_over_initial < DEGENERATION_RATIO;
    Ok(Theorem2Report {
        note: GAUSSIAN_REDUCTION.to_string(),
        degenerates,
        passed: degenerates,
        ladder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{Builtin, Profile, Singularity};
    use crate::weights::bessel_kernel;

    fn reference() -> CyclicalSpectralDensity {
        CyclicalSpectralDensity::new(
            3,
            0.5,
            vec![Singularity { a: 1.0, alpha: 0.5 }],
            Profile::builtin(Builtin::Constant {
                value: 1.0,
                support: 2.0,
            }),
        )
        .unwrap()
    }

    #[test]
    fn v_constant_examples() {
        let d = CyclicalSpectralDensity::new(
            3,
            0.5,
            vec![
                Singularity { a: 1.0, alpha: 0.5 },
                Singularity {
                    a: 3.0,
                    alpha: 0.25,
                },
            ],
            Profile::builtin(Builtin::Constant {
                value: 1.0,
                support: 4.0,
            }),
        )
        .unwrap();
        assert!((v_constant(&d, 1).unwrap() - 2f64.powf(0.75)).abs() < 1e-12);
        assert!((v_constant(&d, 2).unwrap() - 3f64.sqrt() * 2f64.powf(0.5)).abs() < 1e-12);
        assert!((v_constant(&reference(), 1).unwrap() - 1.0).abs() < 1e-15);
        assert!(v_constant(&d, 0).is_err());
    }

    #[test]
    fn limit_diagonal_scaling() {
        let spec = NormalizedFunctionalSpec::at_singularity(
            reference(),
            bessel_kernel(3, 1.0).unwrap(),
            1,
            vec![0.5, 1.0],
        )
        .unwrap();
        let m = limit_cov(&spec, &QuadratureSpec::default()).unwrap();
        let ratio = m.matrix[1][1] / m.matrix[0][0];
        assert!((ratio / 2f64.powf(5.5) - 1.0).abs() < 1e-6, "{ratio}");
        assert!(m.is_psd() && m.is_symmetric());
    }

    #[test]
    fn zero_time_rows_vanish() {
        let spec = NormalizedFunctionalSpec::at_singularity(
            reference(),
            bessel_kernel(3, 1.0).unwrap(),
            1,
            vec![0.0, 1.0],
        )
        .unwrap();
        let m = finite_r_cov(&spec, 10.0, &QuadratureSpec::default()).unwrap();
        assert_eq!(m.matrix[0], vec![0.0, 0.0]);
        assert!(m.matrix[1][1] > 0.0);
    }

    #[test]
    fn theorem2_guards() {
        let d = reference();
        let k = bessel_kernel(3, 0.5).unwrap();
        let q = QuadratureSpec::default();
        assert!(theorem2_diagnostic(&d, &k, 1.0, 1.0, &[10.0, 100.0], &q).is_err());
        let at = bessel_kernel(3, 1.0).unwrap();
        assert!(theorem2_diagnostic(&d, &at, 0.5, 1.0, &[10.0, 100.0], &q).is_err());
    }
}
