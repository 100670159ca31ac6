//! Weight kernels `g_a` and their space-domain weights `f_{a,r}`.
//!
//! Fourier convention: `F[f](l) = int e^{i <l, x>} f(x) dx` with no
//! prefactor. The pair is normalised so that `F[f_{a,r}](l) = r^n g(r(|l| - a))`;
//! for `a = 0` and the Bessel kernel, `f_{0,r}` is the indicator of the ball of
//! radius `r`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate_singular_with_breaks, integrate_tail, IntegralResult, QuadratureSpec};
use crate::specfun::{unit_ball_volume, BesselOrder};
use crate::spectral::{oscillation_breaks, MAX_DIMENSION};

/// Serializable kernel description used in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `(2 pi)^{n/2} J_{n/2}(s) / s^{n/2}`
    Bessel { n: usize, a: f64 },
    /// Linear interpolation of `g` on `|s|`, zero beyond the last node.
    Table {
        n: usize,
        a: f64,
        s: Vec<f64>,
        g: Vec<f64>,
    },
}

impl KernelSpec {
    pub fn build(&self) -> Result<WeightKernel> {
        match self {
            KernelSpec::Bessel { n, a } => bessel_kernel(*n, *a),
            KernelSpec::Table { n, a, s, g } => WeightKernel::table(*n, *a, s.clone(), g.clone()),
        }
    }
}

#[derive(Clone)]
enum Shape {
    Bessel(BesselOrder),
    Table {
        s: Vec<f64>,
        g: Vec<f64>,
    },
    Custom {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        frequency: f64,
    },
}

/// An even frequency profile centred at `a`.
#[derive(Clone)]
pub struct WeightKernel {
    n: usize,
    a: f64,
    shape: Shape,
    factor: f64,
    decay_constant: Option<f64>,
}

impl fmt::Debug for WeightKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = match &self.shape {
            Shape::Bessel(o) => format!("bessel({:?})", o),
            Shape::Table { s, .. } => format!("table({} nodes)", s.len()),
            Shape::Custom { name, .. } => format!("custom({name})"),
        };
        f.debug_struct("WeightKernel")
            .field("n", &self.n)
            .field("a", &self.a)
            .field("shape", &shape)
            .field("factor", &self.factor)
            .field("decay_constant", &self.decay_constant)
            .finish()
    }
}

fn check_dims(n: usize, a: f64) -> Result<()> {
    if n == 0 || n > MAX_DIMENSION {
        return Err(Error::invalid(format!(
            "kernel dimension must be in 1..={MAX_DIMENSION}, got {n}"
        )));
    }
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::invalid(format!(
            "kernel centre a must be >= 0, got {a}"
        )));
    }
    Ok(())
}

/// The Bessel kernel, whose `a = 0` weight is the ball indicator.
pub fn bessel_kernel(n: usize, a: f64) -> Result<WeightKernel> {
    check_dims(n, a)?;
    Ok(WeightKernel {
        n,
        a,
        shape: Shape::Bessel(BesselOrder::ball(n)?),
        factor: 1.0,
        decay_constant: None,
    })
}

impl WeightKernel {
    pub fn table(n: usize, a: f64, s: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        check_dims(n, a)?;
        if s.len() < 2 || s.len() != g.len() {
            return Err(Error::invalid(
                "table kernel needs at least two (s, g) pairs of equal length",
            ));
        }
        if s[0] != 0.0 || s.windows(2).any(|w| !(w[0] < w[1])) || !s[s.len() - 1].is_finite() {
            return Err(Error::invalid(
                "table kernel nodes must start at s = 0 and increase strictly",
            ));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("table kernel values must be finite"));
        }
        Ok(Self {
            n,
            a,
            shape: Shape::Table { s, g },
            factor: 1.0,
            decay_constant: None,
        })
    }

    /// A kernel from a closure. `frequency` is the angular frequency at which
    /// `g(s)` oscillates for large `s` (zero if it does not).
    pub fn custom(
        n: usize,
        a: f64,
        name: impl Into<String>,
        frequency: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_dims(n, a)?;
        Ok(Self {
            n,
            a,
            shape: Shape::Custom {
                name: name.into(),
                f: Arc::new(f),
                frequency,
            },
            factor: 1.0,
            decay_constant: None,
        })
    }

    /// The same profile times `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut k = self.clone();
        k.factor *= c;
        k.decay_constant = k.decay_constant.map(|v| v * c * c);
        k
    }

    /// The same profile centred at a different frequency.
    pub fn recentred(&self, a: f64) -> Result<Self> {
        check_dims(self.n, a)?;
        let mut k = self.clone();
        k.a = a;
        Ok(k)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn decay_constant(&self) -> Option<f64> {
        self.decay_constant
    }

    pub fn is_bessel(&self) -> bool {
        matches!(self.shape, Shape::Bessel(_))
    }

    /// `g(s)`.
    pub fn g(&self, s: f64) -> f64 {
        self.factor * self.raw(s)
    }

    fn raw(&self, s: f64) -> f64 {
        match &self.shape {
            Shape::Bessel(order) => (2.0 * PI).powf(self.n as f64 / 2.0) * order.j_scaled(s),
            Shape::Table { s: xs, g } => {
                let s = s.abs();
                if s > xs[xs.len() - 1] {
                    return 0.0;
                }
                let i = xs.partition_point(|&x| x <= s).clamp(1, xs.len() - 1);
                let w = (s - xs[i - 1]) / (xs[i] - xs[i - 1]);
                g[i - 1] + w * (g[i] - g[i - 1])
            }
            Shape::Custom { f, .. } => f(s),
        }
    }

    /// Largest `|s|` where `g` may be non-zero (infinite for unbounded support).
    pub fn support(&self) -> f64 {
        match &self.shape {
            Shape::Table { s, .. } => s[s.len() - 1],
            _ => f64::INFINITY,
        }
    }

    /// Angular frequency of `g`'s oscillation in `s`.
    pub fn frequency(&self) -> f64 {
        match &self.shape {
            Shape::Bessel(_) => 1.0,
            Shape::Table { .. } => 0.0,
            Shape::Custom { frequency, .. } => *frequency,
        }
    }

    /// Breakpoints of `g` in `s >= 0`.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Table { s, .. } => s.clone(),
            _ => Vec::new(),
        }
    }

    /// Attaches a certified decay constant, see [`certify`].
    pub fn certified(mut self, s_max: f64, grid_size: usize) -> Result<Self> {
        self.decay_constant = Some(certify(&self, s_max, grid_size)?);
        Ok(self)
    }
}

/// `C = max s g(s)^2` on a logarithmic grid up to `s_max`.
///
/// Rejects the kernel when the running maximum still grows by more than 1%
/// over the last decade of the grid.
pub fn certify(kern: &WeightKernel, s_max: f64, grid_size: usize) -> Result<f64> {
    if !(s_max >= 1e3) || grid_size < 100 {
        return Err(Error::invalid(
            "certification needs s_max >= 1e3 and at least 100 grid points",
        ));
    }
    let s_min = 1e-4;
    let ratio = (s_max / s_min).ln();
    let mut before_last_decade = 0.0f64;
    let mut running = 0.0f64;
    for k in 0..grid_size {
        let s = s_min * (ratio * k as f64 / (grid_size - 1) as f64).exp();
        let v = s * kern.g(s).powi(2);
        if !v.is_finite() {
            return Err(Error::InadmissibleKernel(format!(
                "g is not finite at s = {s}"
            )));
        }
        running = running.max(v);
        if s <= s_max / 10.0 {
            before_last_decade = running;
        }
    }
    if running > 1.01 * before_last_decade {
        return Err(Error::InadmissibleKernel(format!(
            "s g(s)^2 keeps growing: max {before_last_decade:e} up to s = {:e}, {running:e} up to s = {s_max:e}",
            s_max / 10.0
        )));
    }
    Ok(running)
}

/// Outcome of the admissibility checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub even: bool,
    pub decay_constant: Option<f64>,
    pub l2_norm_squared: Option<f64>,
    pub max_abs_on_unit_interval: f64,
    pub violations: Vec<String>,
    /// Integrability of `f` itself is not checked; it is assumed for kernels
    /// that pass the checks on `g`.
    pub weight_integrability_assumed: bool,
}

impl AdmissibilityReport {
    pub fn admissible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evenness, decay, square integrability and non-triviality of `g`.
pub fn admissibility(kern: &WeightKernel, spec: &QuadratureSpec) -> AdmissibilityReport {
    admissibility_with(kern, 1e4, 2000, spec)
}

/// [`admissibility`] with explicit certification grid.
pub fn admissibility_with(
    kern: &WeightKernel,
    s_max: f64,
    grid_size: usize,
    spec: &QuadratureSpec,
) -> AdmissibilityReport {
    let mut violations = Vec::new();

    let even = (0..=400).all(|k| {
        let s = 0.05 * k as f64;
        let (p, m) = (kern.g(s), kern.g(-s));
        (p - m).abs() <= 1e-12 * p.abs().max(1.0)
    });
    if !even {
        violations.push("evenness: g(s) != g(-s)".to_string());
    }

    let decay_constant = match certify(kern, s_max, grid_size) {
        Ok(c) => Some(c),
        Err(e) => {
            violations.push(format!("decay bound s g(s)^2 <= C: {e}"));
            None
        }
    };

    let g2 = |s: f64| kern.g(s).powi(2);
    let support = kern.support();
    let l2 = if support.is_finite() {
        integrate_singular_with_breaks(g2, 0.0, support, &kern.breakpoints(), spec)
    } else {
        let w = 2.0 * kern.frequency();
        integrate_tail(g2, 0.0, &[0.0, w], spec)
    };
    let l2_norm_squared = match l2 {
        Ok(res) if res.converged && res.value.is_finite() => Some(2.0 * res.value),
        Ok(res) => {
            violations.push(format!(
                "square integrability: int g^2 not certified finite (estimate {:e}, error {:e})",
                2.0 * res.value,
                2.0 * res.error_estimate
            ));
            None
        }
        Err(e) => {
            violations.push(format!("square integrability: {e}"));
            None
        }
    };

    let max_abs_on_unit_interval = (0..=1000)
        .map(|k| kern.g(k as f64 / 1000.0).abs())
        .fold(0.0, f64::max);
    if !(max_abs_on_unit_interval > 1e-12) {
        violations.push("non-trivial: g vanishes on [0, 1]".to_string());
    }

    AdmissibilityReport {
        even,
        decay_constant,
        l2_norm_squared,
        max_abs_on_unit_interval,
        violations,
        weight_integrability_assumed: true,
    }
}

/// `f_{a,r}(|x|) = r^n (2 pi)^{-n/2} int_0^inf mu^{n-1} g(r(mu - a))
///  J_{n/2-1}(|x| mu) / (|x| mu)^{n/2-1} d mu`.
pub fn invert_to_weight(
    kern: &WeightKernel,
    r: f64,
    x_abs: f64,
    spec: &QuadratureSpec,
) -> Result<IntegralResult> {
    if !(r > 0.0) || !r.is_finite() || !(x_abs >= 0.0) || !x_abs.is_finite() {
        return Err(Error::domain(
            "invert_to_weight",
            format!("need r > 0 and |x| >= 0, got r = {r}, |x| = {x_abs}"),
        ));
    }
    let n = kern.n;
    let order = BesselOrder::sphere(n)?;
    let pre = r.powi(n as i32) * (2.0 * PI).powf(-(n as f64) / 2.0);
    let integrand = |mu: f64| {
        let g = kern.g(r * (mu - kern.a));
        if g == 0.0 {
            return 0.0;
        }
        mu.powi(n as i32 - 1) * g * order.j_scaled(x_abs * mu)
    };
    // Values of f near zero (outside a ball, say) are only resolvable to an
    // absolute accuracy tied to the size of f, which is of order g(0).
    let scale = kern.g(0.0).abs();
    let mut inner = spec.clone();
    if scale > 0.0 {
        inner.abs_tol = inner.abs_tol.max(spec.rel_tol * scale / pre);
    }
    let support = kern.support();
    let mut res = if support.is_finite() {
        let lo = (kern.a - support / r).max(0.0);
        let hi = kern.a + support / r;
        let mut breaks: Vec<f64> = kern
            .breakpoints()
            .iter()
            .flat_map(|&s| [kern.a - s / r, kern.a + s / r])
            .collect();
        breaks.extend(oscillation_breaks(lo, hi, x_abs));
        integrate_singular_with_breaks(integrand, lo, hi, &breaks, &inner)?
    } else {
        let w = kern.frequency() * r;
        integrate_tail(integrand, 0.0, &[w + x_abs, (w - x_abs).abs()], &inner)?
    };
    res.value *= pre;
    res.error_estimate *= pre;
    res.require(format!("weight f_(a={}, r={r})(|x| = {x_abs})", kern.a))
}

/// `f_{a,r}` tabulated on a radial grid; linear in between, zero beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterializedWeight {
    pub r: f64,
    pub x: Vec<f64>,
    pub f: Vec<f64>,
}

impl MaterializedWeight {
    pub fn eval(&self, x_abs: f64) -> f64 {
        let x = x_abs.abs();
        let xs = &self.x;
        if x > xs[xs.len() - 1] || x < xs[0] {
            return 0.0;
        }
        let i = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
        let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
        self.f[i - 1] + w * (self.f[i] - self.f[i - 1])
    }
}

/// Radial grid on `[0, extent r]` that contains `r` itself as a node.
pub fn default_grid(r: f64, extent: f64, points_per_radius: usize) -> Vec<f64> {
    let total = (extent * points_per_radius as f64).ceil() as usize;
    (0..=total)
        .map(|k| r * k as f64 / points_per_radius as f64)
        .collect()
}

/// Evaluates `f_{a,r}` on `grid` (in parallel, order preserved).
pub fn materialize(
    kern: &WeightKernel,
    r: f64,
    grid: &[f64],
    spec: &QuadratureSpec,
) -> Result<MaterializedWeight> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[0] < w[1])) || grid[0] < 0.0 {
        return Err(Error::invalid(
            "weight grid must be increasing and start at >= 0",
        ));
    }
    let f = grid
        .par_iter()
        .map(|&x| invert_to_weight(kern, r, x, spec).map(|v| v.value))
        .collect::<Result<Vec<f64>>>()?;
    Ok(MaterializedWeight {
        r,
        x: grid.to_vec(),
        f,
    })
}

/// Forward radial transform of `r^{-n} f` at `|l| = lambda_abs`; for an
/// admissible pair this reproduces `g(r(lambda - a))`.
pub fn forward_check(
    kern: &WeightKernel,
    weight: &MaterializedWeight,
    lambda_abs: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let n = kern.n;
    let r = weight.r;
    let order = BesselOrder::sphere(n)?;
    let hi = weight.x[weight.x.len() - 1];
    let lo = weight.x[0];
    let integrand =
        |rho: f64| rho.powi(n as i32 - 1) * order.j_scaled(lambda_abs * rho) * weight.eval(rho);
    let res = integrate_singular_with_breaks(integrand, lo, hi, &weight.x, spec)?
        .require(format!("forward transform at lambda = {lambda_abs}"))?;
    Ok(r.powi(-(n as i32)) * (2.0 * PI).powf(n as f64 / 2.0) * res.value)
}

/// Forward transform of the materialized weight against `g` at a set of
/// offsets `s`, i.e. at `|l| = a + s / r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roundtrip {
    pub r: f64,
    pub offsets: Vec<f64>,
    pub expected: Vec<f64>,
    pub recovered: Vec<f64>,
    pub max_abs_error: f64,
}

/// Materializes `f_{a,r}` on `[0, extent r]` and transforms it back.
///
/// The piecewise-linear interpolant has to cover the essential support of
/// `f`, so this is only meaningful for weights that decay fast or, like the
/// ball indicator, vanish past some radius.
pub fn roundtrip(
    kern: &WeightKernel,
    r: f64,
    offsets: &[f64],
    extent: f64,
    points_per_radius: usize,
    spec: &QuadratureSpec,
) -> Result<Roundtrip> {
    let weight = materialize(kern, r, &default_grid(r, extent, points_per_radius), spec)?;
    let recovered = offsets
        .par_iter()
        .map(|&s| forward_check(kern, &weight, (kern.a + s / r).abs(), spec))
        .collect::<Result<Vec<f64>>>()?;
    let expected: Vec<f64> = offsets
        .iter()
        .map(|&s| kern.g(r * ((kern.a + s / r).abs() - kern.a)))
        .collect();
    let max_abs_error = expected
        .iter()
        .zip(&recovered)
        .map(|(e, v)| (e - v).abs())
        .fold(0.0, f64::max);
    Ok(Roundtrip {
        r,
        offsets: offsets.to_vec(),
        expected,
        recovered,
        max_abs_error,
    })
}

/// Value of the Bessel kernel at zero, `pi^{n/2} / Gamma(n/2 + 1)`.
pub fn bessel_kernel_at_zero(n: usize) -> f64 {
    unit_ball_volume(n)
}
