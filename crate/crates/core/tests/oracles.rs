//! Values checked against references computed without the library's own
//! special functions or quadrature.

use std::f64::consts::PI;

use cyclofield_core::covariance::{functional_bn, CovarianceCurve};
use cyclofield_core::quad::{
    integrate_oscillatory, integrate_singular, integrate_tail, OscillatoryKernel,
};
use cyclofield_core::specfun::{bessel_j, cosint, gamma_fn, sinint, EULER_GAMMA};
use cyclofield_core::spectral::{example1, example2, from_name};
use cyclofield_core::{BesselOrder, Functional, QuadratureSpec, SingularPoint};

/// Composite Simpson with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * k as f64);
    }
    s * h / 3.0
}

#[test]
fn half_integer_bessel_closed_forms() {
    for k in 0..200 {
        let x = 0.01 * 1.05f64.powi(k);
        let c = (2.0 / (PI * x)).sqrt();
        let j12 = c * x.sin();
        let j32 = c * (x.sin() / x - x.cos());
        assert!(
            (bessel_j(0.5, x).unwrap() - j12).abs() < 1e-12,
            "J_1/2({x})"
        );
        assert!(
            (bessel_j(1.5, x).unwrap() - j32).abs() < 1e-12,
            "J_3/2({x})"
        );
    }
}

#[test]
fn sine_and_cosine_integrals_at_one() {
    let si = simpson(|t| if t == 0.0 { 1.0 } else { t.sin() / t }, 0.0, 1.0, 2000);
    let ci = EULER_GAMMA
        + simpson(
            |t| if t == 0.0 { 0.0 } else { (t.cos() - 1.0) / t },
            0.0,
            1.0,
            2000,
        );
    assert!((sinint(1.0).unwrap() - si).abs() < 1e-10);
    assert!((cosint(1.0).unwrap() - ci).abs() < 1e-10);
    assert!((si - 0.946_083_070_367_183).abs() < 1e-12);
    assert!((ci - 0.337_403_922_900_968).abs() < 1e-12);
}

#[test]
fn gamma_matches_statrs_and_recurrence() {
    for k in 1..300 {
        let x = 0.05 * k as f64;
        let g = gamma_fn(x).unwrap();
        let reference = statrs::function::gamma::gamma(x);
        assert!(((g - reference) / reference).abs() < 1e-12, "Gamma({x})");
        let g1 = gamma_fn(x + 1.0).unwrap();
        assert!(((g1 - x * g) / g1).abs() < 1e-12);
    }
}

#[test]
fn singular_worked_examples() {
    let spec = QuadratureSpec::default().with_singular_points(vec![SingularPoint {
        location: 0.0,
        exponent: -0.5,
    }]);
    let v = integrate_singular(|x| x.powf(-0.5), 0.0, 1.0, &spec).unwrap();
    assert!((v.value - 2.0).abs() < 1e-10);

    let spec = QuadratureSpec::default().with_singular_points(vec![SingularPoint {
        location: 0.5,
        exponent: -0.5,
    }]);
    let v = integrate_singular(|x| (x - 0.5).abs().powf(-0.5), 0.0, 1.0, &spec).unwrap();
    assert!((v.value - 2.0 * 2f64.sqrt()).abs() < 1e-10);

    // pi from the left half (a beta integral), 2 ln(1 + sqrt 2) from the right.
    let spec = QuadratureSpec::default().with_singular_points(vec![
        SingularPoint {
            location: 0.0,
            exponent: -0.5,
        },
        SingularPoint {
            location: 0.5,
            exponent: -0.5,
        },
    ]);
    let v = integrate_singular(
        |x| x.powf(-0.5) * (x - 0.5).abs().powf(-0.5),
        0.0,
        1.0,
        &spec,
    )
    .unwrap();
    assert!(v.converged);
    assert!(
        (v.value - (PI + 2.0 * 1f64.asinh())).abs() < 1e-9,
        "{}",
        v.value
    );
}

#[test]
fn tighter_tolerance_refines_gradually() {
    let spec = |tol: f64| {
        QuadratureSpec::with_tolerances(tol, 1e-15).with_singular_points(vec![
            SingularPoint {
                location: 0.0,
                exponent: -0.5,
            },
            SingularPoint {
                location: 0.5,
                exponent: -0.5,
            },
        ])
    };
    let f = |x: f64| x.powf(-0.5) * (x - 0.5).abs().powf(-0.5) * (1.0 + x.cos());
    let coarse = integrate_singular(f, 0.0, 1.0, &spec(1e-6)).unwrap();
    let fine = integrate_singular(f, 0.0, 1.0, &spec(5e-7)).unwrap();
    assert!(fine.subdivisions_used <= 2 * coarse.subdivisions_used.max(1));
}

#[test]
fn sinc_and_bessel_tails() {
    let spec = QuadratureSpec::default();
    let v = integrate_oscillatory(
        |x| if x == 0.0 { 1.0 } else { 1.0 / x },
        OscillatoryKernel::Sin { omega: 1.0 },
        0.0,
        &spec,
    )
    .unwrap();
    assert!((v.value - PI / 2.0).abs() < 1e-8);

    // J_0(x) = (1/pi) int_0^pi cos(x sin th) d th, and int_0^inf cos(kx)/(1+x^2) dx
    // = (pi/2) e^{-k}, so the integral is (1/2) int_0^pi e^{-sin th} d th.
    let oracle = 0.5 * simpson(|th| (-th.sin()).exp(), 0.0, PI, 20_000);
    let v = integrate_oscillatory(
        |x| 1.0 / (1.0 + x * x),
        OscillatoryKernel::BesselJ {
            order: BesselOrder::from_f64(0.0).unwrap(),
            omega: 1.0,
        },
        0.0,
        &spec,
    )
    .unwrap();
    assert!((v.value - oracle).abs() < 1e-8, "{} vs {oracle}", v.value);

    // J_{1/2}(x)^2 / x = (2 / pi) sin^2 x / x^2, whose integral is 1.
    let j = BesselOrder::from_f64(0.5).unwrap();
    let v = integrate_tail(
        |x| {
            if x == 0.0 {
                2.0 / PI
            } else {
                j.j(x).powi(2) / x
            }
        },
        0.0,
        &[2.0, 0.0],
        &spec,
    )
    .unwrap();
    assert!((v.value - 1.0).abs() < 1e-8, "{}", v.value);
}

#[test]
fn splitting_is_additive() {
    let spec = QuadratureSpec::default().with_singular_points(vec![SingularPoint {
        location: 0.0,
        exponent: -0.5,
    }]);
    let f = |x: f64| x.powf(-0.5) * (3.0 * x).cos();
    let whole = integrate_singular(f, 0.0, 2.0, &spec).unwrap();
    let left = integrate_singular(f, 0.0, 0.7, &spec).unwrap();
    let right = integrate_singular(f, 0.7, 2.0, &QuadratureSpec::default()).unwrap();
    let tol = whole.error_estimate + left.error_estimate + right.error_estimate + 1e-12;
    assert!((whole.value - left.value - right.value).abs() <= tol);
}

#[test]
fn example_masses() {
    let spec = QuadratureSpec::default();
    let m1 = example1(1.0).unwrap().spectral_mass(&spec).unwrap();
    let e1 = 4.0 * PI * (1f64.cos() + 1f64.sin());
    assert!(((m1 - e1) / e1).abs() < 1e-8);
    let m2 = example2(1.0).unwrap().spectral_mass(&spec).unwrap();
    let e2 = 4.0 * PI * (0.5 + 1f64.sin() - 1f64.cos());
    assert!(((m2 - e2) / e2).abs() < 1e-8);
    let half = example1(1.0)
        .unwrap()
        .spectral_function(0.5, &spec)
        .unwrap()
        .phi_of_u;
    // int_0^u l (2 + cos l) dl = u^2 + u sin u + cos u - 1
    let eh = 4.0 * PI * (0.25 + 0.5 * 0.5f64.sin() + 0.5f64.cos() - 1.0);
    assert!(((half - eh) / eh).abs() < 1e-8, "{half} vs {eh}");
}

#[test]
fn ball_functional_regular_variation() {
    let d = example1(1.0).unwrap();
    let spec = QuadratureSpec::default();
    let b = |r: f64| functional_bn(&d, r, &spec).unwrap().value;
    let ratio = b(100.0) / b(50.0);
    assert!((ratio / 16.0 - 1.0).abs() < 0.02, "{ratio}");
}

#[test]
fn example3_is_a_sum_of_branches() {
    // 2 x example1 on [0, 1], plus example2's h restricted to (1, 2].
    let spec = QuadratureSpec::default();
    let whole = from_name("example3").unwrap();
    let radii = [0.3, 1.0, 2.5, 7.0];
    let b3 = CovarianceCurve::compute(Functional::Covariance, &whole, &radii, &spec).unwrap();
    let first = example1(1.0).unwrap();
    let c1 = CovarianceCurve::compute(Functional::Covariance, &first, &radii, &spec).unwrap();
    let both = example2(2.0).unwrap();
    let inner = example2(1.0).unwrap();
    let c2 = CovarianceCurve::compute(Functional::Covariance, &both, &radii, &spec).unwrap();
    let c2i = CovarianceCurve::compute(Functional::Covariance, &inner, &radii, &spec).unwrap();
    for i in 0..radii.len() {
        let expected = 2.0 * c1.values[i] + c2.values[i] - c2i.values[i];
        assert!((b3.values[i] - expected).abs() < 1e-7 * (1.0 + expected.abs()));
    }
}
