//! Random-phase harmonic superposition
//! `xi(x) = sqrt(2 sigma^2 / M) sum_m cos(<l_m, x> + U_m)`, with `|l_m|` drawn
//! from the normalized spectral measure, directions uniform on the sphere and
//! phases uniform on `[0, 2 pi)`.
//!
//! The second moments are exact for every `M`; Gaussianity holds as `M` grows.
//! Replicate `k` of seed `s` always uses ChaCha stream `k` of seed `s`, so
//! results do not depend on the thread count.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{covariance_bn, fmt17};
use crate::error::{Error, Result};
use crate::limits::NormalizedFunctionalSpec;
use crate::quad::{integrate_nodes, Node, QuadratureSpec};
use crate::spectral::CyclicalSpectralDensity;
use crate::weights::invert_to_weight;

/// Cells per smooth stretch of the radial axis.
const CELLS_PER_SEGMENT: usize = 1024;
/// Grading exponent of the mesh towards singular points.
const GRADING: i32 = 3;

/// Inverse CDF of `Phi / sigma^2` on a graded mesh.
///
/// Inside a cell touching a singular point the measure behaves like
/// `|rho - c|^{e+1}` and is inverted as such; elsewhere it is linear.
#[derive(Debug, Clone)]
pub struct RadialCdf {
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
    /// `(left, right)` exponents of the weight at each cell end, if singular.
    ends: Vec<(Option<f64>, Option<f64>)>,
    total: f64,
}

impl RadialCdf {
    pub fn new(d: &CyclicalSpectralDensity, spec: &QuadratureSpec) -> Result<Self> {
        let qs = d.quadrature_spec(spec);
        let end = d.support_end();
        let exponent = |x: f64| {
            qs.singular_points
                .iter()
                .find(|p| p.location == x)
                .map(|p| p.exponent)
        };
        let mut cuts = vec![0.0, end];
        cuts.extend(d.singularities().iter().map(|s| s.a).filter(|&a| a < end));
        cuts.extend(
            d.profile()
                .breakpoints()
                .into_iter()
                .filter(|&b| b > 0.0 && b < end),
        );
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let mut nodes = vec![0.0];
        for w in cuts.windows(2) {
            let (c0, c1) = (w[0], w[1]);
            let len = c1 - c0;
            let (gl, gr) = (exponent(c0).is_some(), exponent(c1).is_some());
            let k = CELLS_PER_SEGMENT;
            for i in 1..=k {
                let s = i as f64 / k as f64;
                let u = match (gl, gr) {
                    (true, false) => s.powi(GRADING),
                    (false, true) => 1.0 - (1.0 - s).powi(GRADING),
                    (true, true) if s <= 0.5 => 0.5 * (2.0 * s).powi(GRADING),
                    (true, true) => 1.0 - 0.5 * (2.0 * (1.0 - s)).powi(GRADING),
                    (false, false) => s,
                };
                nodes.push(if i == k { c1 } else { c0 + len * u });
            }
        }
        let ends: Vec<_> = nodes
            .windows(2)
            .map(|w| (exponent(w[0]), exponent(w[1])))
            .collect();
        let masses = nodes
            .par_windows(2)
            .map(|w| {
                integrate_nodes(|n: Node| d.radial_weight(n), w[0], w[1], &[], &qs)?
                    .require(format!("spectral mass on [{}, {}]", w[0], w[1]))
                    .map(|r| r.value.max(0.0))
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut cumulative = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for m in &masses {
            acc += m;
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::invalid("spectral measure has no mass"));
        }
        Ok(Self {
            nodes,
            cumulative,
            ends,
            total: acc,
        })
    }

    /// Total mass `sigma^2`.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// `Phi(rho) / sigma^2` at a mesh node or, between nodes, by the same
    /// interpolation the sampler inverts.
    pub fn cdf(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        if rho >= self.nodes[self.nodes.len() - 1] {
            return 1.0;
        }
        let k = self.nodes.partition_point(|&x| x <= rho) - 1;
        let (x0, x1) = (self.nodes[k], self.nodes[k + 1]);
        let frac = match self.ends[k] {
            (Some(e), _) => ((rho - x0) / (x1 - x0)).powf(e + 1.0),
            (None, Some(e)) => 1.0 - ((x1 - rho) / (x1 - x0)).powf(e + 1.0),
            (None, None) => (rho - x0) / (x1 - x0),
        };
        (self.cumulative[k] + frac * (self.cumulative[k + 1] - self.cumulative[k])) / self.total
    }

    /// Radius with `Phi(rho) / sigma^2 = u`.
    pub fn quantile(&self, u: f64) -> f64 {
        let target = u.clamp(0.0, 1.0) * self.total;
        let k =
            (self.cumulative.partition_point(|&c| c <= target)).clamp(1, self.nodes.len() - 1) - 1;
        let (c0, c1) = (self.cumulative[k], self.cumulative[k + 1]);
        let (x0, x1) = (self.nodes[k], self.nodes[k + 1]);
        let frac = if c1 > c0 {
            ((target - c0) / (c1 - c0)).clamp(0.0, 1.0)
        } else {
            0.5
        };
        match self.ends[k] {
            (Some(e), _) => x0 + (x1 - x0) * frac.powf(1.0 / (e + 1.0)),
            (None, Some(e)) => x1 - (x1 - x0) * (1.0 - frac).powf(1.0 / (e + 1.0)),
            (None, None) => x0 + (x1 - x0) * frac,
        }
    }
}

/// One draw of the superposition.
#[derive(Debug, Clone)]
pub struct Realization {
    n: usize,
    amplitude: f64,
    /// `M x n`, row-major.
    frequencies: Vec<f64>,
    phases: Vec<f64>,
}

impl Realization {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        let s: f64 = self
            .frequencies
            .chunks_exact(self.n)
            .zip(&self.phases)
            .map(|(l, u)| (l.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + u).cos())
            .sum();
        self.amplitude * s
    }

    /// `int xi(x) w(|x|) dx` for an even weight in one dimension, by the
    /// midpoint rule on the symmetric grid `x_j = (j + 1/2) h`, `j >= 0`.
    fn integrate_even_weight_1d(&self, weights: &[f64], h: f64) -> f64 {
        let s: f64 = self
            .frequencies
            .iter()
            .zip(&self.phases)
            .map(|(l, u)| {
                let c: f64 = weights
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w * (l * (j as f64 + 0.5) * h).cos())
                    .sum();
                2.0 * u.cos() * c
            })
            .sum();
        self.amplitude * h * s
    }
}

/// Field values at a set of sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRealization {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

impl FieldRealization {
    /// One coordinate column per dimension, then the value.
    pub fn to_csv(&self) -> String {
        let n = self.points.first().map_or(1, |p| p.len());
        let mut out = String::new();
        let cols: Vec<String> = if n == 1 {
            vec!["x".into()]
        } else {
            (1..=n).map(|i| format!("x{i}")).collect()
        };
        out.push_str(&cols.join(","));
        out.push_str(",value\n");
        for (p, v) in self.points.iter().zip(&self.values) {
            for c in p {
                out.push_str(&fmt17(*c));
                out.push(',');
            }
            out.push_str(&fmt17(*v));
            out.push('\n');
        }
        out
    }
}

impl Realization {
    pub fn field(&self, points: &[Vec<f64>]) -> Result<FieldRealization> {
        if points.iter().any(|p| p.len() != self.n) {
            return Err(Error::invalid(format!(
                "evaluation sites must have {} coordinates",
                self.n
            )));
        }
        Ok(FieldRealization {
            points: points.to_vec(),
            values: points.iter().map(|p| self.evaluate(p)).collect(),
        })
    }

    pub fn frequencies(&self) -> impl Iterator<Item = &[f64]> {
        self.frequencies.chunks_exact(self.n)
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }
}

pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

#[derive(Debug, Clone)]
pub struct HarmonicFieldSampler {
    n: usize,
    components: usize,
    cdf: RadialCdf,
}

impl HarmonicFieldSampler {
    pub fn new(
        d: &CyclicalSpectralDensity,
        components: usize,
        spec: &QuadratureSpec,
    ) -> Result<Self> {
        if components == 0 {
            return Err(Error::invalid(
                "the superposition needs at least one component",
            ));
        }
        Ok(Self {
            n: d.n(),
            components,
            cdf: RadialCdf::new(d, spec)?,
        })
    }

    pub fn variance(&self) -> f64 {
        self.cdf.total()
    }

    pub fn cdf(&self) -> &RadialCdf {
        &self.cdf
    }

    pub fn draw(&self, rng: &mut impl Rng) -> Realization {
        let n = self.n;
        let mut frequencies = Vec::with_capacity(self.components * n);
        let mut phases = Vec::with_capacity(self.components);
        let mut dir = vec![0.0; n];
        for _ in 0..self.components {
            let rho = self.cdf.quantile(rng.random::<f64>());
            if n == 1 {
                dir[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
            } else {
                loop {
                    for v in dir.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 1e-12 {
                        dir.iter_mut().for_each(|v| *v /= norm);
                        break;
                    }
                }
            }
            frequencies.extend(dir.iter().map(|v| rho * v));
            phases.push(rng.random::<f64>() * TAU);
        }
        Realization {
            n,
            amplitude: (2.0 * self.variance() / self.components as f64).sqrt(),
            frequencies,
            phases,
        }
    }

    pub fn realization(&self, seed: u64, replicate: u64) -> Realization {
        self.draw(&mut replicate_rng(seed, replicate))
    }
}

/// Mean and delete-one jackknife standard error.
pub fn jackknife_mean(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let total: f64 = values.iter().sum();
    let mean = total / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let loo: Vec<f64> = values
        .iter()
        .map(|v| (total - v) / (n - 1) as f64)
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / n as f64;
    let var = loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>() * (n - 1) as f64 / n as f64;
    (mean, var.sqrt())
}

/// Sample skewness and excess kurtosis.
pub fn skewness_kurtosis(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m = |k: i32| values.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let m2 = m(2);
    (m(3) / m2.powf(1.5), m(4) / (m2 * m2) - 3.0)
}

/// Marginal normality from sample skewness and excess kurtosis, each judged
/// against its large-sample standard error `sqrt(6/N)`, `sqrt(24/N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityCheck {
    pub samples: usize,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub skewness_se: f64,
    pub kurtosis_se: f64,
    pub max_se: f64,
    pub passed: bool,
}

impl NormalityCheck {
    pub fn new(values: &[f64], max_se: f64) -> Self {
        let n = values.len() as f64;
        let (skewness, excess_kurtosis) = skewness_kurtosis(values);
        let skewness_se = (6.0 / n).sqrt();
        let kurtosis_se = (24.0 / n).sqrt();
        Self {
            samples: values.len(),
            skewness,
            excess_kurtosis,
            skewness_se,
            kurtosis_se,
            max_se,
            passed: skewness.abs() <= max_se * skewness_se
                && excess_kurtosis.abs() <= max_se * kurtosis_se,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCovariance {
    pub lags: Vec<f64>,
    pub estimates: Vec<f64>,
    pub stderr: Vec<f64>,
    pub reference: Vec<f64>,
    /// `|estimate - reference| / stderr`.
    pub z_scores: Vec<f64>,
    pub replicates: usize,
    pub components: usize,
    /// Of `xi(0)` across replicates.
    pub normality: NormalityCheck,
}

impl EmpiricalCovariance {
    pub fn within(&self, z: f64) -> bool {
        self.z_scores.iter().all(|&s| s <= z)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lag,estimate,stderr,reference\n");
        for i in 0..self.lags.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt17(self.lags[i]),
                fmt17(self.estimates[i]),
                fmt17(self.stderr[i]),
                fmt17(self.reference[i])
            ));
        }
        out
    }
}

/// Standard errors allowed by the marginal normality check.
pub const NORMALITY_SE: f64 = 3.0;

/// `E[xi(0) xi(h e_1)]` over independent replicates, against the quadrature
/// covariance `B_n(h)`.
pub fn empirical_cov(
    d: &CyclicalSpectralDensity,
    lags: &[f64],
    components: usize,
    replicates: usize,
    seed: u64,
    spec: &QuadratureSpec,
) -> Result<EmpiricalCovariance> {
    if replicates < 100 {
        return Err(Error::invalid("need at least 100 replicates"));
    }
    if lags.iter().any(|h| !(*h >= 0.0) || !h.is_finite()) {
        return Err(Error::invalid("lags must be finite and >= 0"));
    }
    let sampler = HarmonicFieldSampler::new(d, components, spec)?;
    let n = d.n();
    let origin = vec![0.0; n];
    let rows: Vec<(f64, Vec<f64>)> = (0..replicates as u64)
        .into_par_iter()
        .map(|k| {
            let z = sampler.realization(seed, k);
            let x0 = z.evaluate(&origin);
            let products = lags
                .iter()
                .map(|&h| {
                    let mut x = vec![0.0; n];
                    x[0] = h;
                    x0 * z.evaluate(&x)
                })
                .collect();
            (x0, products)
        })
        .collect();
    let mut estimates = Vec::with_capacity(lags.len());
    let mut stderr = Vec::with_capacity(lags.len());
    for i in 0..lags.len() {
        let col: Vec<f64> = rows.iter().map(|(_, p)| p[i]).collect();
        let (m, s) = jackknife_mean(&col);
        estimates.push(m);
        stderr.push(s);
    }
    let reference = lags
        .par_iter()
        .map(|&h| {
            if h == 0.0 {
                Ok(sampler.variance())
            } else {
                covariance_bn(d, h, spec).map(|r| r.value)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let z_scores = estimates
        .iter()
        .zip(&reference)
        .zip(&stderr)
        .map(|((e, r), s)| (e - r).abs() / s)
        .collect();
    let values: Vec<f64> = rows.iter().map(|(x, _)| *x).collect();
    let normality = NormalityCheck::new(&values, NORMALITY_SE);
    Ok(EmpiricalCovariance {
        lags: lags.to_vec(),
        estimates,
        stderr,
        reference,
        z_scores,
        replicates,
        components,
        normality,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McFunctional {
    pub r: f64,
    pub t: f64,
    pub variance: f64,
    pub stderr: f64,
    pub replicates: usize,
    pub components: usize,
    pub spacing: f64,
    pub extent: f64,
}

/// Midpoint grid `x_j = +-(j + 1/2) h` on `[-extent, extent]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialGrid {
    pub extent: f64,
    pub spacing: f64,
}

impl SpatialGrid {
    /// Coarsest admissible spacing for a weight at `(a, r)`.
    pub fn max_spacing(a: f64, r: f64) -> f64 {
        PI / (5.0 * (a * r + r))
    }

    /// `extent = 10 r t` at the coarsest admissible spacing.
    pub fn default_for(a: f64, r: f64, t: f64) -> Self {
        Self {
            extent: 10.0 * r * t,
            spacing: Self::max_spacing(a, r),
        }
    }
}

/// Monte Carlo variance of the normalized functional `X_{r,a}(t)` in one
/// dimension, `c r^{alpha/2 - n} int xi(x) f_{a, r t}(x) dx`, by the midpoint
/// rule on the spatial grid.
#[allow(clippy::too_many_arguments)]
pub fn mc_functional(
    spec: &NormalizedFunctionalSpec,
    r: f64,
    t: f64,
    components: usize,
    replicates: usize,
    seed: u64,
    grid: Option<SpatialGrid>,
    quad: &QuadratureSpec,
) -> Result<McFunctional> {
    spec.validate()?;
    if spec.density.n() != 1 {
        return Err(Error::invalid(
            "the space-domain functional is only simulated in one dimension",
        ));
    }
    if !(r > 0.0) || !(t > 0.0 && t <= 1.0) {
        return Err(Error::invalid("need r > 0 and t in (0, 1]"));
    }
    if replicates < 2 {
        return Err(Error::invalid("need at least two replicates"));
    }
    let rt = r * t;
    let grid = grid.unwrap_or_else(|| SpatialGrid::default_for(spec.a(), r, t));
    let h_max = SpatialGrid::max_spacing(spec.a(), r);
    if !(grid.spacing > 0.0 && grid.spacing <= h_max * (1.0 + 1e-12)) {
        return Err(Error::invalid(format!(
            "spatial spacing {} is too coarse for a = {}, r = {r}; need <= {h_max}",
            grid.spacing,
            spec.a()
        )));
    }
    if !(grid.extent > 0.0 && grid.extent.is_finite()) {
        return Err(Error::invalid("spatial extent must be positive"));
    }
    let extent = grid.extent;
    let half = (extent / grid.spacing).ceil() as usize;
    let h = extent / half as f64;
    // Near |x| = r t the beat frequency of the inversion integrand goes to
    // zero and its tail converges slowly; the Monte Carlo error is orders of
    // magnitude above 1e-6 anyway.
    let mut weight_quad = quad.clone();
    weight_quad.rel_tol = weight_quad.rel_tol.max(1e-6);
    weight_quad.abs_tol = weight_quad.abs_tol.max(1e-9);
    let weights = (0..half)
        .into_par_iter()
        .map(|j| {
            invert_to_weight(&spec.kernel, rt, (j as f64 + 0.5) * h, &weight_quad).map(|v| v.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let norm = (spec.prefactor()? * r.powf(spec.alpha - 2.0)).sqrt();
    let sampler = HarmonicFieldSampler::new(&spec.density, components, quad)?;
    let squares: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|k| {
            let z = sampler.realization(seed, k);
            (norm * z.integrate_even_weight_1d(&weights, h)).powi(2)
        })
        .collect();
    let (variance, stderr) = jackknife_mean(&squares);
    Ok(McFunctional {
        r,
        t,
        variance,
        stderr,
        replicates,
        components,
        spacing: h,
        extent,
    })
}
