//! Adaptive quadrature for radial integrals.
//!
//! Finite intervals use a globally adaptive Gauss-Kronrod (10, 21) rule.
//! Declared algebraic singularities `|x - c|^e`, `-1 < e < 0`, are made
//! interval endpoints and removed with the substitution `x = c +/- t^p`,
//! `p = 1 / (1 + e)`, which turns the integrand into a bounded function of `t`.
//!
//! Integrands are evaluated at a [`Node`], which carries the offset from the
//! nearest singular point separately from the absolute abscissa. Close to an
//! interior singularity the offset is far more accurate than `x - c`.
//!
//! Semi-infinite oscillatory integrals are split into cells and the partial
//! sums are extrapolated with both the Wynn epsilon algorithm and the Levin
//! u transform; the estimate with the smaller apparent error wins.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::BesselOrder;

/// An algebraic singularity `|x - location|^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularPoint {
    pub location: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    pub singular_points: Vec<SingularPoint>,
    pub oscillation_period_hint: Option<f64>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_subdivisions: 2000,
            singular_points: Vec::new(),
            oscillation_period_hint: None,
        }
    }
}

impl QuadratureSpec {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }

    pub fn with_singular_points(mut self, points: Vec<SingularPoint>) -> Self {
        self.singular_points = points;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::invalid("quadrature tolerances must be positive"));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::invalid("max_subdivisions must be at least 1"));
        }
        for w in self.singular_points.windows(2) {
            if !(w[0].location < w[1].location) {
                return Err(Error::invalid(
                    "singular points must be strictly increasing in location",
                ));
            }
        }
        for p in &self.singular_points {
            if !p.location.is_finite() || !(p.exponent > -1.0 && p.exponent < 0.0) {
                return Err(Error::invalid(format!(
                    "singular point {:?} must be finite with exponent in (-1, 0)",
                    p
                )));
            }
        }
        if let Some(h) = self.oscillation_period_hint {
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::invalid("oscillation_period_hint must be > 0"));
            }
        }
        Ok(())
    }

    /// Target absolute error for an integral whose value is `value`.
    pub fn tolerance(&self, value: f64) -> f64 {
        (self.rel_tol * value.abs()).max(self.abs_tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralResult {
    pub value: f64,
    pub error_estimate: f64,
    pub subdivisions_used: usize,
    pub converged: bool,
}

impl IntegralResult {
    /// Turns a non-converged result into an error.
    pub fn require(self, context: impl Into<String>) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                context: context.into(),
                value: self.value,
                error: self.error_estimate,
                subdivisions: self.subdivisions_used,
            })
        }
    }
}

/// Evaluation point handed to integrands.
///
/// `x == anchor + offset` up to rounding, but `offset` is exact to working
/// precision even when `x` is within a few ulps of `anchor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub x: f64,
    pub anchor: f64,
    pub offset: f64,
}

impl Node {
    pub fn at(x: f64) -> Self {
        Self {
            x,
            anchor: x,
            offset: 0.0,
        }
    }

    /// `|x - p|`, using the exact offset when `p` is the anchor.
    pub fn distance_to(&self, p: f64) -> f64 {
        if p == self.anchor {
            self.offset.abs()
        } else {
            (self.x - p).abs()
        }
    }
}

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_9,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_352,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];

/// One Gauss-Kronrod 21 panel with the QUADPACK error heuristic.
fn gk21(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut resk = fc * WGK[10];
    let mut resg = 0.0;
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * resk;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (value, err)
}

#[derive(Debug, Clone, Copy)]
enum Map {
    Linear {
        anchor: f64,
    },
    /// `x = c + t^p`
    Left {
        c: f64,
        p: f64,
    },
    /// `x = c - t^p`
    Right {
        c: f64,
        p: f64,
    },
}

impl Map {
    #[inline]
    fn eval(&self, f: &impl Fn(Node) -> f64, t: f64) -> f64 {
        match *self {
            Map::Linear { anchor } => f(Node {
                x: t,
                anchor,
                offset: t - anchor,
            }),
            Map::Left { c, p } => {
                let u = t.powf(p);
                let jac = p * t.powf(p - 1.0);
                if jac == 0.0 {
                    return 0.0;
                }
                f(Node {
                    x: c + u,
                    anchor: c,
                    offset: u,
                }) * jac
            }
            Map::Right { c, p } => {
                let u = t.powf(p);
                let jac = p * t.powf(p - 1.0);
                if jac == 0.0 {
                    return 0.0;
                }
                f(Node {
                    x: c - u,
                    anchor: c,
                    offset: -u,
                }) * jac
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    map: usize,
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

struct ByError {
    error: f64,
    seq: usize,
    idx: usize,
}

impl PartialEq for ByError {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for ByError {}
impl PartialOrd for ByError {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ByError {
    fn cmp(&self, other: &Self) -> Ordering {
        // Largest error first; earlier panels win ties so runs are reproducible.
        let e = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
        e(self.error)
            .total_cmp(&e(other.error))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn exponent_at(spec: &QuadratureSpec, x: f64) -> Option<f64> {
    spec.singular_points
        .iter()
        .find(|p| p.location == x)
        .map(|p| p.exponent)
}

/// `int_lo^hi f`, with the declared singular points of `spec` handled by
/// splitting and substitution.
pub fn integrate_singular(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    spec: &QuadratureSpec,
) -> Result<IntegralResult> {
    integrate_nodes(|n: Node| f(n.x), lo, hi, &[], spec)
}

/// Like [`integrate_singular`] with extra breakpoints where the integrand is
/// merely non-smooth (kinks, jumps, fast oscillation boundaries).
pub fn integrate_singular_with_breaks(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<IntegralResult> {
    integrate_nodes(|n: Node| f(n.x), lo, hi, breaks, spec)
}

/// The general entry point: the integrand sees a [`Node`].
pub fn integrate_nodes(
    f: impl Fn(Node) -> f64,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<IntegralResult> {
    spec.validate()?;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!(
            "integration limits must be finite with lo < hi, got [{lo}, {hi}]"
        )));
    }

    let mut cuts = vec![lo, hi];
    cuts.extend(
        spec.singular_points
            .iter()
            .map(|p| p.location)
            .chain(breaks.iter().copied())
            .filter(|&x| x > lo && x < hi),
    );
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    // A break a few ulps off a singular point would leave an unmapped sliver
    // next to the singularity; such breaks are dropped.
    let near = |x: f64, y: f64| (x - y).abs() <= 1e-10 * x.abs().max(y.abs()).max(1.0);
    cuts.retain(|&c| {
        c == lo
            || c == hi
            || spec
                .singular_points
                .iter()
                .all(|p| p.location == c || !near(p.location, c))
    });

    let mut maps = Vec::new();
    let mut panels = Vec::new();
    let mut push = |map: Map, t_lo: f64, t_hi: f64, maps: &mut Vec<Map>| {
        maps.push(map);
        panels.push((maps.len() - 1, t_lo, t_hi));
    };
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let left = exponent_at(spec, a);
        let right = exponent_at(spec, b);
        match (left, right) {
            (None, None) => push(Map::Linear { anchor: a }, a, b, &mut maps),
            (Some(e), None) => {
                let p = 1.0 / (1.0 + e);
                push(Map::Left { c: a, p }, 0.0, (b - a).powf(1.0 / p), &mut maps);
            }
            (None, Some(e)) => {
                let p = 1.0 / (1.0 + e);
                push(
                    Map::Right { c: b, p },
                    0.0,
                    (b - a).powf(1.0 / p),
                    &mut maps,
                );
            }
            (Some(el), Some(er)) => {
                let m = 0.5 * (a + b);
                let half = 0.5 * (b - a);
                let pl = 1.0 / (1.0 + el);
                let pr = 1.0 / (1.0 + er);
                push(
                    Map::Left { c: a, p: pl },
                    0.0,
                    half.powf(1.0 / pl),
                    &mut maps,
                );
                push(
                    Map::Right { c: b, p: pr },
                    0.0,
                    (b - m).powf(1.0 / pr),
                    &mut maps,
                );
            }
        }
    }

    let rule = |map: usize, a: f64, b: f64| {
        let m = maps[map];
        gk21(&|t| m.eval(&f, t), a, b)
    };

    let mut store: Vec<Panel> = Vec::with_capacity(panels.len() + 2 * spec.max_subdivisions);
    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    for (map, a, b) in panels {
        let (value, error) = rule(map, a, b);
        store.push(Panel {
            map,
            lo: a,
            hi: b,
            value,
            error,
        });
        heap.push(ByError {
            error,
            seq,
            idx: store.len() - 1,
        });
        seq += 1;
    }
    let mut live = vec![true; store.len()];

    let totals = |store: &[Panel], live: &[bool]| {
        store
            .iter()
            .zip(live)
            .filter(|(_, &l)| l)
            .fold((0.0, 0.0), |(v, e), (p, _)| (v + p.value, e + p.error))
    };

    let mut subdivisions = 0;
    let (mut value, mut error) = totals(&store, &live);
    while !(error <= spec.tolerance(value)) && subdivisions < spec.max_subdivisions {
        let Some(top) = heap.pop() else { break };
        let p = store[top.idx];
        let mid = 0.5 * (p.lo + p.hi);
        if !(mid > p.lo && mid < p.hi) || (p.hi - p.lo) <= 4.0 * f64::EPSILON * p.hi.abs() {
            // Cannot be refined further; keep its contribution as is.
            continue;
        }
        live[top.idx] = false;
        for (a, b) in [(p.lo, mid), (mid, p.hi)] {
            let (v, e) = rule(p.map, a, b);
            store.push(Panel {
                map: p.map,
                lo: a,
                hi: b,
                value: v,
                error: e,
            });
            live.push(true);
            heap.push(ByError {
                error: e,
                seq,
                idx: store.len() - 1,
            });
            seq += 1;
        }
        subdivisions += 1;
        if subdivisions % 64 == 0 {
            (value, error) = totals(&store, &live);
        } else {
            value += store[store.len() - 1].value + store[store.len() - 2].value - p.value;
            error += store[store.len() - 1].error + store[store.len() - 2].error - p.error;
        }
    }
    let (value, error) = totals(&store, &live);
    Ok(IntegralResult {
        value,
        error_estimate: error,
        subdivisions_used: subdivisions,
        converged: value.is_finite() && error <= spec.tolerance(value),
    })
}

/// Oscillatory factor of a semi-infinite integrand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OscillatoryKernel {
    Sin { omega: f64 },
    Cos { omega: f64 },
    BesselJ { order: BesselOrder, omega: f64 },
}

impl OscillatoryKernel {
    pub fn omega(&self) -> f64 {
        match *self {
            OscillatoryKernel::Sin { omega }
            | OscillatoryKernel::Cos { omega }
            | OscillatoryKernel::BesselJ { omega, .. } => omega,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            OscillatoryKernel::Sin { omega } => (omega * x).sin(),
            OscillatoryKernel::Cos { omega } => (omega * x).cos(),
            OscillatoryKernel::BesselJ { order, omega } => order.j((omega * x).abs()),
        }
    }

    /// Approximate `k`-th positive zero of the kernel, `k >= 1`.
    fn zero(&self, k: usize) -> f64 {
        let k = k as f64;
        match *self {
            OscillatoryKernel::Sin { omega } => k * PI / omega,
            OscillatoryKernel::Cos { omega } => (k - 0.5) * PI / omega,
            OscillatoryKernel::BesselJ { order, omega } => {
                // McMahon's expansion; only the spacing matters for the cells.
                let nu = order.nu();
                let beta = (k + 0.5 * nu - 0.25) * PI;
                let mu = 4.0 * nu * nu;
                (beta - (mu - 1.0) / (8.0 * beta)).max(0.5 * PI * k) / omega
            }
        }
    }
}

/// `int_lo^inf f(x) K(x) dx` for an oscillatory kernel `K`.
///
/// When `spec.oscillation_period_hint` is set the envelope `f` is itself
/// taken to oscillate with that period and the product is handled by
/// [`integrate_tail`] with the sum and difference frequencies.
pub fn integrate_oscillatory(
    f: impl Fn(f64) -> f64,
    kernel: OscillatoryKernel,
    lo: f64,
    spec: &QuadratureSpec,
) -> Result<IntegralResult> {
    spec.validate()?;
    let omega = kernel.omega();
    if !(omega > 0.0) || !omega.is_finite() || !lo.is_finite() || lo < 0.0 {
        return Err(Error::invalid(
            "oscillatory kernel needs omega > 0 and a finite lower limit >= 0",
        ));
    }
    let integrand = |x: f64| f(x) * kernel.eval(x);
    if let Some(period) = spec.oscillation_period_hint {
        let we = 2.0 * PI / period;
        return integrate_tail(integrand, lo, &[omega + we, (omega - we).abs()], spec);
    }
    let start = spec
        .singular_points
        .last()
        .map_or(lo, |p| p.location.max(lo));
    let mut k = 1;
    while kernel.zero(k) <= start {
        k += 1;
    }
    let head_end = kernel.zero(k);
    let cells = (k..).map(|j| (kernel.zero(j), kernel.zero(j + 1)));
    run_tail(&integrand, lo, head_end, cells, None, spec)
}

/// `int_lo^inf f` where `f` is a sum of components oscillating with the given
/// angular frequencies, each with an algebraically decaying amplitude.
///
/// A zero frequency stands for a non-oscillating, algebraically decaying
/// component.
pub fn integrate_tail(
    f: impl Fn(f64) -> f64,
    lo: f64,
    frequencies: &[f64],
    spec: &QuadratureSpec,
) -> Result<IntegralResult> {
    spec.validate()?;
    if !lo.is_finite() {
        return Err(Error::invalid("lower limit must be finite"));
    }
    if frequencies.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("frequencies must be finite and >= 0"));
    }
    let w_max = frequencies.iter().copied().fold(0.0, f64::max);
    let start = spec
        .singular_points
        .last()
        .map_or(lo, |p| p.location.max(lo));

    if w_max == 0.0 {
        // Pure algebraic tail: geometrically growing cells.
        let scale = start.abs().max(1.0);
        let head_end = start + scale;
        let cells = (0..).map(move |j: i32| {
            let a = start + scale * 2f64.powi(j);
            (a, start + scale * 2f64.powi(j + 1))
        });
        return run_tail(&f, lo, head_end, cells, None, spec);
    }

    let nonzero: Vec<f64> = frequencies
        .iter()
        .copied()
        .filter(|&w| w > 1e-3 * w_max)
        .collect();
    let has_zero = nonzero.len() < frequencies.len();
    let w_min = nonzero.iter().copied().fold(f64::INFINITY, f64::min);
    let step = if has_zero {
        2.0 * PI / w_min
    } else {
        cell_length(&nonzero, w_min)
    };
    let head_end = start + step;
    let cells = (0..).map(move |j| {
        let a = head_end + j as f64 * step;
        (a, a + step)
    });
    run_tail(&f, lo, head_end, cells, Some(PI / w_max), spec)
}

/// Chooses a cell length `theta / w_min` with `theta` in `[0.75 pi, 1.25 pi]`
/// that keeps every component's phase advance per cell away from a multiple
/// of `2 pi`, so that no component looks stationary to the extrapolation.
fn cell_length(frequencies: &[f64], w_min: f64) -> f64 {
    let mut best = (f64::NEG_INFINITY, PI / w_min);
    for i in 0..=40 {
        let theta = PI * (0.75 + 0.5 * i as f64 / 40.0);
        let step = theta / w_min;
        let worst = frequencies
            .iter()
            .map(|w| {
                let phase = (w * step).rem_euclid(2.0 * PI);
                phase.min(2.0 * PI - phase)
            })
            .fold(f64::INFINITY, f64::min);
        // Prefer theta near pi when the separations tie.
        let score = worst - 1e-9 * (theta - PI).abs();
        if score > best.0 {
            best = (score, step);
        }
    }
    best.1
}

const MAX_CELLS: usize = 4000;
const MAX_BREAKS: usize = 20000;

/// Interior points splitting `[a, b]` into pieces no longer than `panel`.
fn uniform_breaks(a: f64, b: f64, panel: Option<f64>) -> Vec<f64> {
    let Some(len) = panel else {
        return Vec::new();
    };
    let n = (((b - a) / len).ceil() as usize).clamp(1, MAX_BREAKS);
    (1..n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}
const LEVIN_ORDER: usize = 20;
const WYNN_WINDOW: usize = 30;

fn run_tail(
    f: &impl Fn(f64) -> f64,
    lo: f64,
    head_end: f64,
    cells: impl Iterator<Item = (f64, f64)>,
    panel: Option<f64>,
    spec: &QuadratureSpec,
) -> Result<IntegralResult> {
    let head = if head_end > lo {
        let breaks = uniform_breaks(lo, head_end, panel);
        integrate_nodes(|n: Node| f(n.x), lo, head_end, &breaks, spec)?
    } else {
        IntegralResult {
            value: 0.0,
            error_estimate: 0.0,
            subdivisions_used: 0,
            converged: true,
        }
    };

    let cell_spec = QuadratureSpec {
        rel_tol: 0.1 * spec.rel_tol,
        abs_tol: spec.abs_tol,
        max_subdivisions: spec.max_subdivisions,
        singular_points: Vec::new(),
        oscillation_period_hint: None,
    };

    let mut terms: Vec<f64> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut cell_error = 0.0;
    let mut subdivisions = head.subdivisions_used;
    let mut all_converged = head.converged;
    let mut previous: [Option<f64>; 2] = [None, None];
    let mut passes = [0usize; 2];
    let mut best = (f64::NAN, f64::INFINITY);
    let mut direct_quiet = 0;

    for (a, b) in cells.take(MAX_CELLS) {
        let breaks = uniform_breaks(a, b, panel);
        let mut cs = cell_spec.clone();
        cs.abs_tol = 1e-3 * spec.tolerance(head.value + sums.last().copied().unwrap_or(0.0));
        let c = integrate_nodes(|n: Node| f(n.x), a, b, &breaks, &cs)?;
        subdivisions += c.subdivisions_used;
        all_converged &= c.converged;
        cell_error += c.error_estimate;
        terms.push(c.value);
        let s = sums.last().copied().unwrap_or(0.0) + c.value;
        sums.push(s);

        let tol = spec.tolerance(head.value + s);
        if c.value.abs() <= 1e-3 * tol {
            direct_quiet += 1;
        } else {
            direct_quiet = 0;
        }
        if direct_quiet >= 3 {
            best = (s, 0.0);
            passes = [2, 2];
            break;
        }
        if sums.len() < 4 {
            continue;
        }
        let estimates = [wynn_epsilon(&sums), levin_u(&terms, &sums)];
        let mut done = false;
        for (m, est) in estimates.into_iter().enumerate() {
            let Some(est) = est.filter(|v| v.is_finite()) else {
                passes[m] = 0;
                previous[m] = None;
                continue;
            };
            if let Some(prev) = previous[m] {
                let diff = (est - prev).abs();
                if diff <= 0.5 * tol {
                    passes[m] += 1;
                } else {
                    passes[m] = 0;
                }
                if diff < best.1 || (passes[m] >= 2 && !done) {
                    best = (est, diff);
                }
                if passes[m] >= 2 {
                    done = true;
                }
            }
            previous[m] = Some(est);
        }
        if done {
            break;
        }
    }

    let (tail, extrapolation_error) = if best.0.is_nan() {
        (sums.last().copied().unwrap_or(0.0), f64::INFINITY)
    } else {
        best
    };
    let value = head.value + tail;
    let error_estimate = head.error_estimate + cell_error + extrapolation_error;
    Ok(IntegralResult {
        value,
        error_estimate,
        subdivisions_used: subdivisions,
        converged: all_converged
            && passes.iter().any(|&p| p >= 2)
            && !(panel.is_none() && growing(&terms))
            && error_estimate <= spec.tolerance(value),
    })
}

// Extrapolation happily produces an antilimit for a divergent series, so an
// algebraic tail whose cell contributions do not shrink is never reported
// converged. Oscillatory cells are exempt: beats modulate their size.
fn growing(terms: &[f64]) -> bool {
    if terms.len() < 4 {
        return false;
    }
    let k = (terms.len() / 4).max(2);
    let mean = |t: &[f64]| t.iter().map(|v| v.abs()).sum::<f64>() / t.len() as f64;
    mean(&terms[terms.len() - k..]) > mean(&terms[..k])
}

/// Highest even column of the epsilon table built on the latest partial sums.
fn wynn_epsilon(sums: &[f64]) -> Option<f64> {
    let s = &sums[sums.len().saturating_sub(WYNN_WINDOW)..];
    let n = s.len();
    if n < 3 {
        return None;
    }
    let mut prev = vec![0.0; n + 1];
    let mut cur = s.to_vec();
    let mut best = s[n - 1];
    for k in 1..n {
        let mut next = Vec::with_capacity(n - k);
        for j in 0..n - k {
            let d = cur[j + 1] - cur[j];
            if d == 0.0 {
                return Some(best);
            }
            next.push(prev[j + 1] + 1.0 / d);
        }
        if k % 2 == 0 {
            let v = next[n - k - 1];
            if !v.is_finite() {
                break;
            }
            best = v;
        }
        prev = cur;
        cur = next;
    }
    Some(best)
}

/// Levin u transform (beta = 1) on the latest `LEVIN_ORDER + 1` partial sums.
fn levin_u(terms: &[f64], sums: &[f64]) -> Option<f64> {
    let len = sums.len();
    let k = (len - 1).min(LEVIN_ORDER);
    let n = len - 1 - k;
    let beta = 1.0;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut binom = 1.0;
    for j in 0..=k {
        let idx = n + j;
        let w = (beta + idx as f64) * terms[idx];
        if w == 0.0 || !w.is_finite() {
            return None;
        }
        let ratio = ((beta + idx as f64) / (beta + (n + k) as f64)).powi(k as i32 - 1);
        let c = if j % 2 == 0 { binom } else { -binom } * ratio / w;
        num += c * sums[idx];
        den += c;
        binom = binom * (k - j) as f64 / (j + 1) as f64;
    }
    if den == 0.0 {
        None
    } else {
        Some(num / den)
    }
}
