//! Cyclical long-range dependent spectral densities
//!
//! `phi(rho) = h(rho) / rho^(n - alpha0) * prod_i |rho - a_i|^(alpha_i - 1)`
//!
//! with the spectral measure `dPhi = omega_n rho^(n-1) phi(rho) d rho`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate_nodes, IntegralResult, Node, QuadratureSpec, SingularPoint};
use crate::specfun::unit_sphere_area;

/// Largest supported dimension (limited by the Bessel orders in `specfun`).
pub const MAX_DIMENSION: usize = 4;

/// Cut-off for profiles with an exponentially decaying tail, in units of the
/// decay scale. `exp(-45)` is below any tolerance used here.
const EXP_TAIL_SCALES: f64 = 45.0;

fn one() -> f64 {
    1.0
}

/// Closed-form profiles for `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Builtin {
    /// `value` on `[0, support]`.
    Constant { value: f64, support: f64 },
    /// `(2 + cos rho)` on `[0, a]`.
    Example1 {
        #[serde(default = "one")]
        a: f64,
    },
    /// `(1 + sin rho)` on `[0, a]`.
    Example2 {
        #[serde(default = "one")]
        a: f64,
    },
    /// `2 (2 + cos rho)` on `[0, 1]`, `(1 + sin rho)` on `(1, 2]`.
    Example3,
    /// `value * exp(-rho / scale)`; integrable tail, truncated numerically.
    ExpDecay { value: f64, scale: f64 },
}

/// The bounded factor `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Builtin(Builtin),
    /// Piecewise-linear interpolation of `(rho, h)` pairs, zero past the last node.
    Table {
        rho: Vec<f64>,
        h: Vec<f64>,
    },
    Scaled {
        factor: f64,
        profile: Box<Profile>,
    },
}

impl Profile {
    pub fn builtin(b: Builtin) -> Self {
        Profile::Builtin(b)
    }

    pub fn eval(&self, rho: f64) -> f64 {
        match self {
            Profile::Builtin(b) => match *b {
                Builtin::Constant { value, support } => {
                    if rho <= support {
                        value
                    } else {
                        0.0
                    }
                }
                Builtin::Example1 { a } => {
                    if rho <= a {
                        2.0 + rho.cos()
                    } else {
                        0.0
                    }
                }
                Builtin::Example2 { a } => {
                    if rho <= a {
                        1.0 + rho.sin()
                    } else {
                        0.0
                    }
                }
                Builtin::Example3 => {
                    if rho <= 1.0 {
                        2.0 * (2.0 + rho.cos())
                    } else if rho <= 2.0 {
                        1.0 + rho.sin()
                    } else {
                        0.0
                    }
                }
                Builtin::ExpDecay { value, scale } => value * (-rho / scale).exp(),
            },
            Profile::Table { rho: xs, h } => {
                if rho < xs[0] || rho > xs[xs.len() - 1] {
                    return 0.0;
                }
                let i = xs.partition_point(|&x| x <= rho).clamp(1, xs.len() - 1);
                let (x0, x1) = (xs[i - 1], xs[i]);
                let w = (rho - x0) / (x1 - x0);
                h[i - 1] + w * (h[i] - h[i - 1])
            }
            Profile::Scaled { factor, profile } => factor * profile.eval(rho),
        }
    }

    /// Points where `h` is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Profile::Builtin(b) => match *b {
                Builtin::Constant { support, .. } => vec![support],
                Builtin::Example1 { a } | Builtin::Example2 { a } => vec![a],
                Builtin::Example3 => vec![1.0, 2.0],
                Builtin::ExpDecay { .. } => Vec::new(),
            },
            Profile::Table { rho, .. } => rho.clone(),
            Profile::Scaled { profile, .. } => profile.breakpoints(),
        }
    }

    /// Right end of the (effective) support.
    pub fn support_end(&self) -> f64 {
        match self {
            Profile::Builtin(b) => match *b {
                Builtin::Constant { support, .. } => support,
                Builtin::Example1 { a } | Builtin::Example2 { a } => a,
                Builtin::Example3 => 2.0,
                Builtin::ExpDecay { scale, .. } => EXP_TAIL_SCALES * scale,
            },
            Profile::Table { rho, .. } => rho[rho.len() - 1],
            Profile::Scaled { profile, .. } => profile.support_end(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "profile {what} must be finite and > 0, got {v}"
                )))
            }
        };
        match self {
            Profile::Builtin(b) => match *b {
                Builtin::Constant { value, support } => {
                    positive(value, "value")?;
                    positive(support, "support")
                }
                Builtin::Example1 { a } | Builtin::Example2 { a } => positive(a, "a"),
                Builtin::Example3 => Ok(()),
                Builtin::ExpDecay { value, scale } => {
                    positive(value, "value")?;
                    positive(scale, "scale")
                }
            },
            Profile::Table { rho, h } => {
                if rho.len() < 2 || rho.len() != h.len() {
                    return Err(Error::invalid(
                        "table profile needs at least two (rho, h) pairs of equal length",
                    ));
                }
                if rho[0] != 0.0 {
                    return Err(Error::invalid("table profile must start at rho = 0"));
                }
                if rho.windows(2).any(|w| !(w[0] < w[1])) || !rho[rho.len() - 1].is_finite() {
                    return Err(Error::invalid(
                        "table rho values must be strictly increasing",
                    ));
                }
                if h.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::invalid("table h values must be finite and >= 0"));
                }
                Ok(())
            }
            Profile::Scaled { factor, profile } => {
                positive(*factor, "scale factor")?;
                profile.validate()
            }
        }
    }

    fn to_expr(&self) -> String {
        match self {
            Profile::Builtin(b) => match *b {
                Builtin::Constant { value, support } => format!("constant({value:?},{support:?})"),
                Builtin::Example1 { a } => format!("example1({a:?})"),
                Builtin::Example2 { a } => format!("example2({a:?})"),
                Builtin::Example3 => "example3".to_string(),
                Builtin::ExpDecay { value, scale } => format!("exp_decay({value:?},{scale:?})"),
            },
            Profile::Table { rho, h } => {
                let list = |v: &[f64]| {
                    let mut s = String::from("[");
                    for (i, x) in v.iter().enumerate() {
                        if i > 0 {
                            s.push(',');
                        }
                        let _ = write!(s, "{x:?}");
                    }
                    s.push(']');
                    s
                };
                format!("table({},{})", list(rho), list(h))
            }
            Profile::Scaled { factor, profile } => {
                format!("scaled({factor:?},{})", profile.to_expr())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Singularity {
    pub a: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDensity {
    n: usize,
    alpha0: f64,
    #[serde(default)]
    singularities: Vec<Singularity>,
    h: Profile,
}

/// A validated density. Deserialisation runs the same validation as
/// [`CyclicalSpectralDensity::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDensity", into = "RawDensity")]
pub struct CyclicalSpectralDensity {
    n: usize,
    alpha0: f64,
    singularities: Vec<Singularity>,
    h: Profile,
}

impl TryFrom<RawDensity> for CyclicalSpectralDensity {
    type Error = Error;
    fn try_from(raw: RawDensity) -> Result<Self> {
        Self::new(raw.n, raw.alpha0, raw.singularities, raw.h)
    }
}

impl From<CyclicalSpectralDensity> for RawDensity {
    fn from(d: CyclicalSpectralDensity) -> Self {
        RawDensity {
            n: d.n,
            alpha0: d.alpha0,
            singularities: d.singularities,
            h: d.h,
        }
    }
}

/// Which singular frequencies make the density unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrdClassification {
    pub at_zero: bool,
    pub cyclical: Vec<f64>,
}

impl LrdClassification {
    pub fn is_lrd(&self) -> bool {
        self.at_zero || !self.cyclical.is_empty()
    }
}

impl std::fmt::Display for LrdClassification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        if self.at_zero {
            parts.push("LRD at 0".to_string());
        }
        if !self.cyclical.is_empty() {
            let freqs: Vec<String> = self.cyclical.iter().map(|a| format!("{a}")).collect();
            parts.push(format!("cyclical LRD at {}", freqs.join(", ")));
        }
        if parts.is_empty() {
            write!(f, "short-range")
        } else {
            write!(f, "{}", parts.join("; "))
        }
    }
}

/// `Phi(u)` for one `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralFunctionValue {
    pub u: f64,
    pub phi_of_u: f64,
}

impl CyclicalSpectralDensity {
    pub fn new(n: usize, alpha0: f64, singularities: Vec<Singularity>, h: Profile) -> Result<Self> {
        if n == 0 || n > MAX_DIMENSION {
            return Err(Error::invalid(format!(
                "dimension must be in 1..={MAX_DIMENSION}, got {n}"
            )));
        }
        if !(alpha0 > 0.0 && alpha0 < n as f64) {
            return Err(Error::invalid(format!(
                "alpha0 must lie in (0, {n}), got {alpha0}"
            )));
        }
        for (i, s) in singularities.iter().enumerate() {
            if !(s.a > 0.0 && s.a.is_finite()) {
                return Err(Error::invalid(format!(
                    "singular frequency a_{} must be finite and > 0, got {}",
                    i + 1,
                    s.a
                )));
            }
            if !(s.alpha > 0.0 && s.alpha < 1.0) {
                return Err(Error::invalid(format!(
                    "alpha_{} must lie in (0, 1), got {}",
                    i + 1,
                    s.alpha
                )));
            }
        }
        if singularities.windows(2).any(|w| !(w[0].a < w[1].a)) {
            return Err(Error::invalid(
                "singular frequencies must be strictly increasing",
            ));
        }
        h.validate()?;
        let breaks = h.breakpoints();
        for (i, at) in std::iter::once(0.0)
            .chain(singularities.iter().map(|s| s.a))
            .enumerate()
        {
            let v = h.eval(at);
            if !(v > 0.0) {
                return Err(Error::invalid(format!(
                    "h must be non-zero at the singular frequency a_{i} = {at} (got {v})"
                )));
            }
            if at > 0.0 && breaks.contains(&at) {
                return Err(Error::invalid(format!(
                    "h must be continuous near the singular frequency a_{i} = {at}"
                )));
            }
        }
        let d = Self {
            n,
            alpha0,
            singularities,
            h,
        };
        d.spectral_mass(&QuadratureSpec::default()).map_err(|e| {
            Error::invalid(format!("spectral mass could not be certified finite: {e}"))
        })?;
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn singularities(&self) -> &[Singularity] {
        &self.singularities
    }

    pub fn profile(&self) -> &Profile {
        &self.h
    }

    pub fn h(&self, rho: f64) -> f64 {
        self.h.eval(rho)
    }

    /// The same density with `h` replaced by `c h`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let h = Profile::Scaled {
            factor: c,
            profile: Box::new(self.h.clone()),
        };
        Self::new(self.n, self.alpha0, self.singularities.clone(), h)
    }

    /// Index `j >= 1` of a singular frequency equal to `a`.
    pub fn singularity_index(&self, a: f64) -> Option<usize> {
        self.singularities
            .iter()
            .position(|s| s.a == a)
            .map(|i| i + 1)
    }

    pub fn support_end(&self) -> f64 {
        self.h.support_end()
    }

    /// `phi(rho)` for `rho > 0` away from the singular frequencies.
    pub fn eval_phi(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::domain(
                "eval_phi",
                format!("rho must be > 0, got {rho}"),
            ));
        }
        if self.singularities.iter().any(|s| s.a == rho) {
            return Err(Error::domain(
                "eval_phi",
                format!("rho = {rho} is a singular frequency"),
            ));
        }
        let mut v = self.h.eval(rho) / rho.powf(self.n as f64 - self.alpha0);
        for s in &self.singularities {
            v *= (rho - s.a).abs().powf(s.alpha - 1.0);
        }
        Ok(v)
    }

    /// Density of `dPhi` with respect to `d rho`:
    /// `omega_n h(rho) rho^(alpha0 - 1) prod |rho - a_i|^(alpha_i - 1)`.
    pub fn radial_weight(&self, node: Node) -> f64 {
        let rho = node.x;
        let h = self.h.eval(rho);
        if h == 0.0 {
            return 0.0;
        }
        let mut v = unit_sphere_area(self.n) * h * node.distance_to(0.0).powf(self.alpha0 - 1.0);
        for s in &self.singularities {
            v *= node.distance_to(s.a).powf(s.alpha - 1.0);
        }
        v
    }

    /// `spec` with the singular structure of `dPhi` declared.
    pub fn quadrature_spec(&self, base: &QuadratureSpec) -> QuadratureSpec {
        let mut points = Vec::new();
        if self.alpha0 < 1.0 {
            points.push(SingularPoint {
                location: 0.0,
                exponent: self.alpha0 - 1.0,
            });
        }
        points.extend(self.singularities.iter().map(|s| SingularPoint {
            location: s.a,
            exponent: s.alpha - 1.0,
        }));
        let mut spec = base.clone();
        spec.singular_points = points;
        spec
    }

    /// `int_0^upper kernel(rho) dPhi(rho)`, truncated to the support of `h`.
    ///
    /// `omega` is the fastest angular frequency of `kernel` in `rho`; the
    /// range is pre-split so that each panel spans about one period.
    pub fn integrate(
        &self,
        kernel: impl Fn(f64) -> f64,
        upper: f64,
        omega: f64,
        extra_breaks: &[f64],
        spec: &QuadratureSpec,
    ) -> Result<IntegralResult> {
        let hi = upper.min(self.support_end());
        if !(hi > 0.0) {
            return Ok(IntegralResult {
                value: 0.0,
                error_estimate: 0.0,
                subdivisions_used: 0,
                converged: true,
            });
        }
        let mut breaks = self.h.breakpoints();
        breaks.extend_from_slice(extra_breaks);
        breaks.extend(oscillation_breaks(0.0, hi, omega));
        let spec = self.quadrature_spec(spec);
        integrate_nodes(
            |node: Node| {
                let w = self.radial_weight(node);
                if w == 0.0 {
                    0.0
                } else {
                    kernel(node.x) * w
                }
            },
            0.0,
            hi,
            &breaks,
            &spec,
        )
    }

    /// `sigma^2 = Phi(infinity)`.
    pub fn spectral_mass(&self, spec: &QuadratureSpec) -> Result<f64> {
        Ok(self
            .integrate(|_| 1.0, f64::INFINITY, 0.0, &[], spec)?
            .require("spectral mass")?
            .value)
    }

    /// `Phi(u) = omega_n int_0^u rho^(n-1) phi(rho) d rho`.
    pub fn spectral_function(
        &self,
        u: f64,
        spec: &QuadratureSpec,
    ) -> Result<SpectralFunctionValue> {
        if !(u >= 0.0) {
            return Err(Error::domain(
                "eval_Phi",
                format!("u must be >= 0, got {u}"),
            ));
        }
        let value = if u == 0.0 {
            0.0
        } else {
            self.integrate(|_| 1.0, u, 0.0, &[], spec)?
                .require(format!("Phi({u})"))?
                .value
        };
        Ok(SpectralFunctionValue { u, phi_of_u: value })
    }

    /// Where the density is unbounded. `h(0) != 0` and `h(a_i) != 0` are
    /// enforced at construction, so every singular frequency counts.
    pub fn lrd_diagnostic(&self) -> LrdClassification {
        LrdClassification {
            at_zero: self.alpha0 < self.n as f64 && self.h.eval(0.0) != 0.0,
            cyclical: self
                .singularities
                .iter()
                .filter(|s| self.h.eval(s.a) != 0.0)
                .map(|s| s.a)
                .collect(),
        }
    }

    /// Canonical `gen(...)` expression accepted by [`from_name`].
    pub fn to_name(&self) -> String {
        let sing: Vec<String> = self
            .singularities
            .iter()
            .map(|s| format!("({:?},{:?})", s.a, s.alpha))
            .collect();
        format!(
            "gen({},{:?},[{}],{})",
            self.n,
            self.alpha0,
            sing.join(","),
            self.h.to_expr()
        )
    }
}

/// Interior points spaced one period `2 pi / omega` apart on `(lo, hi)`.
pub fn oscillation_breaks(lo: f64, hi: f64, omega: f64) -> Vec<f64> {
    if !(omega > 0.0) {
        return Vec::new();
    }
    let period = 2.0 * PI / omega;
    let count = ((hi - lo) / period).floor().min(50_000.0) as usize;
    let step = (hi - lo) / (count + 1) as f64;
    (1..=count).map(|i| lo + step * i as f64).collect()
}

pub fn example1(a: f64) -> Result<CyclicalSpectralDensity> {
    CyclicalSpectralDensity::new(
        3,
        2.0,
        Vec::new(),
        Profile::Builtin(Builtin::Example1 { a }),
    )
}

pub fn example2(a: f64) -> Result<CyclicalSpectralDensity> {
    CyclicalSpectralDensity::new(
        3,
        2.0,
        Vec::new(),
        Profile::Builtin(Builtin::Example2 { a }),
    )
}

pub fn example3() -> Result<CyclicalSpectralDensity> {
    CyclicalSpectralDensity::new(3, 2.0, Vec::new(), Profile::Builtin(Builtin::Example3))
}

/// Names understood by [`from_name`], with a one-line description each.
pub fn registry() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "example1(a)",
            "n=3, alpha0=2, h=(2+cos rho) on [0,a]; a defaults to 1",
        ),
        (
            "example2(a)",
            "n=3, alpha0=2, h=(1+sin rho) on [0,a]; a defaults to 1",
        ),
        (
            "example3",
            "n=3, alpha0=2, h=2(2+cos rho) on [0,1], (1+sin rho) on (1,2]",
        ),
        (
            "gen(n,alpha0,[(a,alpha),...],h)",
            "generic density; h is constant(v,support), example1(a), example2(a), example3, \
             exp_decay(v,scale), table([rho..],[h..]) or scaled(c,h)",
        ),
    ]
}

/// Builds a density from a registry expression such as `example1(1)` or
/// `gen(3,0.5,[(1,0.5)],constant(1,2))`.
pub fn from_name(name: &str) -> Result<CyclicalSpectralDensity> {
    let mut p = Parser::new(name);
    let expr = p.expr()?;
    p.end()?;
    match expr {
        Expr::Call(f, args) if f == "example1" || f == "example2" => {
            let a = match args.as_slice() {
                [] => 1.0,
                [Expr::Num(a)] => *a,
                _ => return Err(Error::invalid(format!("{f} takes one number"))),
            };
            if f == "example1" {
                example1(a)
            } else {
                example2(a)
            }
        }
        Expr::Call(f, args) if f == "example3" && args.is_empty() => example3(),
        Expr::Call(f, args) if f == "gen" => {
            let [Expr::Num(n), Expr::Num(alpha0), Expr::List(sing), h] = args.as_slice() else {
                return Err(Error::invalid(
                    "gen expects (n, alpha0, [(a, alpha), ...], h)",
                ));
            };
            if n.fract() != 0.0 || *n < 1.0 {
                return Err(Error::invalid("gen: n must be a positive integer"));
            }
            let mut singularities = Vec::new();
            for s in sing {
                match s {
                    Expr::List(pair) | Expr::Call(_, pair) if pair.len() == 2 => {
                        if let [Expr::Num(a), Expr::Num(alpha)] = pair.as_slice() {
                            singularities.push(Singularity {
                                a: *a,
                                alpha: *alpha,
                            });
                            continue;
                        }
                        return Err(Error::invalid("gen: singularities are (a, alpha) pairs"));
                    }
                    _ => return Err(Error::invalid("gen: singularities are (a, alpha) pairs")),
                }
            }
            CyclicalSpectralDensity::new(*n as usize, *alpha0, singularities, profile_from_expr(h)?)
        }
        Expr::Call(f, _) => Err(Error::UnknownName(f)),
        _ => Err(Error::UnknownName(name.to_string())),
    }
}

fn profile_from_expr(e: &Expr) -> Result<Profile> {
    let nums = |args: &[Expr], k: usize, what: &str| -> Result<Vec<f64>> {
        let v: Vec<f64> = args
            .iter()
            .filter_map(|a| if let Expr::Num(x) = a { Some(*x) } else { None })
            .collect();
        if v.len() == k && args.len() == k {
            Ok(v)
        } else {
            Err(Error::invalid(format!("{what} takes {k} number(s)")))
        }
    };
    let list = |e: &Expr| -> Result<Vec<f64>> {
        match e {
            Expr::List(items) => items
                .iter()
                .map(|i| match i {
                    Expr::Num(x) => Ok(*x),
                    _ => Err(Error::invalid("table entries must be numbers")),
                })
                .collect(),
            _ => Err(Error::invalid("table expects two lists")),
        }
    };
    let Expr::Call(f, args) = e else {
        return Err(Error::invalid("h must be a profile expression"));
    };
    let b = match f.as_str() {
        "constant" => {
            let v = nums(args, 2, "constant")?;
            Builtin::Constant {
                value: v[0],
                support: v[1],
            }
        }
        "example1" => Builtin::Example1 {
            a: nums(args, 1, "example1")?[0],
        },
        "example2" => Builtin::Example2 {
            a: nums(args, 1, "example2")?[0],
        },
        "example3" if args.is_empty() => Builtin::Example3,
        "exp_decay" => {
            let v = nums(args, 2, "exp_decay")?;
            Builtin::ExpDecay {
                value: v[0],
                scale: v[1],
            }
        }
        "table" if args.len() == 2 => {
            return Ok(Profile::Table {
                rho: list(&args[0])?,
                h: list(&args[1])?,
            })
        }
        "scaled" if args.len() == 2 => {
            let Expr::Num(c) = args[0] else {
                return Err(Error::invalid("scaled(c, h) needs a numeric factor"));
            };
            return Ok(Profile::Scaled {
                factor: c,
                profile: Box::new(profile_from_expr(&args[1])?),
            });
        }
        other => return Err(Error::UnknownName(other.to_string())),
    };
    Ok(Profile::Builtin(b))
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Num(f64),
    List(Vec<Expr>),
    Call(String, Vec<Expr>),
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn err(&self, what: &str) -> Error {
        Error::invalid(format!("{what} at offset {} in `{}`", self.pos, self.src))
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn end(&mut self) -> Result<()> {
        if self.peek().is_some() {
            Err(self.err("trailing input"))
        } else {
            Ok(())
        }
    }

    fn seq(&mut self, close: char) -> Result<Vec<Expr>> {
        let mut items = Vec::new();
        if self.eat(close) {
            return Ok(items);
        }
        loop {
            items.push(self.expr()?);
            if self.eat(close) {
                return Ok(items);
            }
            if !self.eat(',') {
                return Err(self.err("expected ','"));
            }
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        match self.peek() {
            Some('[') => {
                self.pos += 1;
                Ok(Expr::List(self.seq(']')?))
            }
            Some('(') => {
                self.pos += 1;
                Ok(Expr::List(self.seq(')')?))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.src[self.pos..]
                    .starts_with(|c: char| c.is_ascii_alphanumeric() || c == '_')
                {
                    self.pos += 1;
                }
                let ident = self.src[start..self.pos].to_string();
                let args = if self.eat('(') {
                    self.seq(')')?
                } else {
                    Vec::new()
                };
                Ok(Expr::Call(ident, args))
            }
            Some(_) => {
                let start = self.pos;
                while self.src[self.pos..]
                    .starts_with(|c: char| c.is_ascii_digit() || "+-.eE".contains(c))
                {
                    self.pos += 1;
                }
                self.src[start..self.pos]
                    .parse()
                    .map(Expr::Num)
                    .map_err(|_| self.err("expected a number"))
            }
            None => Err(self.err("unexpected end of input")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> CyclicalSpectralDensity {
        from_name("gen(3,0.5,[(1,0.5)],constant(1,2))").unwrap()
    }

    #[test]
    fn pointwise_values() {
        let d = example1(1.0).unwrap();
        assert_eq!(d.eval_phi(PI / 2.0).unwrap(), 0.0);
        let v = d.eval_phi(0.5).unwrap();
        assert!((v - 2.0 * (2.0 + 0.5f64.cos())).abs() < 1e-14);
        let d = from_name("gen(3,2,[(1,0.5)],constant(1,2))").unwrap();
        assert!((d.eval_phi(0.5).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-14);
        assert!(d.eval_phi(1.0).is_err());
        assert!(d.eval_phi(0.0).is_err());
    }

    #[test]
    fn example_masses() {
        let spec = QuadratureSpec::default();
        let m1 = example1(1.0).unwrap().spectral_mass(&spec).unwrap();
        let want1 = 4.0 * PI * (1f64.cos() + 1f64.sin());
        assert!((m1 - want1).abs() < 1e-10 * want1);
        let m2 = example2(1.0).unwrap().spectral_mass(&spec).unwrap();
        let want2 = 4.0 * PI * (0.5 + 1f64.sin() - 1f64.cos());
        assert!((m2 - want2).abs() < 1e-10 * want2);
        let half = example1(1.0)
            .unwrap()
            .spectral_function(0.5, &spec)
            .unwrap();
        let want = 4.0 * PI * (0.25 + 0.5 * 0.5f64.sin() + 0.5f64.cos() - 1.0);
        assert!((half.phi_of_u - want).abs() < 1e-10 * want);
    }

    #[test]
    fn construction_errors() {
        let h = || {
            Profile::Builtin(Builtin::Constant {
                value: 1.0,
                support: 2.0,
            })
        };
        let s = |a, alpha| Singularity { a, alpha };
        assert!(CyclicalSpectralDensity::new(0, 0.5, vec![], h()).is_err());
        assert!(CyclicalSpectralDensity::new(3, 3.0, vec![], h()).is_err());
        assert!(CyclicalSpectralDensity::new(3, 0.0, vec![], h()).is_err());
        assert!(CyclicalSpectralDensity::new(3, 1.0, vec![s(1.0, 1.0)], h()).is_err());
        assert!(CyclicalSpectralDensity::new(3, 1.0, vec![s(1.0, 0.0)], h()).is_err());
        assert!(CyclicalSpectralDensity::new(3, 1.0, vec![s(1.0, 0.5), s(1.0, 0.5)], h()).is_err());
        // h vanishes at the singular frequency
        assert!(CyclicalSpectralDensity::new(3, 1.0, vec![s(3.0, 0.5)], h()).is_err());
        // h jumps at the singular frequency
        assert!(CyclicalSpectralDensity::new(3, 1.0, vec![s(2.0, 0.5)], h()).is_err());
        assert!(matches!(from_name("example9"), Err(Error::UnknownName(_))));
    }

    #[test]
    fn lrd_classification() {
        let c = example1(1.0).unwrap().lrd_diagnostic();
        assert!(c.at_zero && c.cyclical.is_empty());
        let c = reference().lrd_diagnostic();
        assert_eq!(c.cyclical, vec![1.0]);
        assert_eq!(c.to_string(), "LRD at 0; cyclical LRD at 1");
    }

    #[test]
    fn names_round_trip() {
        for name in [
            "gen(3,0.5,[(1,0.5)],constant(1,2))",
            "gen(2,1.25,[(0.5,0.3),(1.5,0.7)],exp_decay(2,0.5))",
            "gen(1,0.5,[],table([0,1,2],[1,0.5,0]))",
            "gen(3,2,[],scaled(3,example3))",
        ] {
            let d = from_name(name).unwrap();
            let again = from_name(&d.to_name()).unwrap();
            assert_eq!(d, again, "{name}");
        }
        let d = from_name("example1").unwrap();
        assert_eq!(d, example1(1.0).unwrap());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let d = reference();
        let json = serde_json::to_string(&d).unwrap();
        let back: CyclicalSpectralDensity = serde_json::from_str(&json).unwrap();
        assert_eq!(d, back);
        let doc = r#"{"n":3,"alpha0":2,"h":{"kind":"builtin","name":"example1","a":1}}"#;
        let d: CyclicalSpectralDensity = serde_json::from_str(doc).unwrap();
        assert_eq!(d, example1(1.0).unwrap());
        let bad = r#"{"n":3,"alpha0":4,"h":{"kind":"builtin","name":"example3"}}"#;
        assert!(serde_json::from_str::<CyclicalSpectralDensity>(bad).is_err());
        let unknown = r#"{"n":3,"alpha0":2,"h":{"kind":"builtin","name":"example3"},"x":1}"#;
        assert!(serde_json::from_str::<CyclicalSpectralDensity>(unknown).is_err());
        let unknown = r#"{"n":3,"alpha0":2,"h":{"kind":"builtin","name":"example1","b":1}}"#;
        assert!(serde_json::from_str::<CyclicalSpectralDensity>(unknown).is_err());
    }

    #[test]
    fn table_interpolates() {
        let p = Profile::Table {
            rho: vec![0.0, 1.0, 3.0],
            h: vec![1.0, 3.0, 1.0],
        };
        assert_eq!(p.eval(0.5), 2.0);
        assert_eq!(p.eval(2.0), 2.0);
        assert_eq!(p.eval(3.0), 1.0);
        assert_eq!(p.eval(3.5), 0.0);
    }
}
