use cyclofield_core::covariance::functional_bn;
use cyclofield_core::limits::{finite_r_cov, limit_cov, PSD_TOLERANCE};
use cyclofield_core::quad::integrate_singular;
use cyclofield_core::sim::{jackknife_mean, mc_functional, replicate_rng};
use cyclofield_core::specfun::{bessel_j, sinint};
use cyclofield_core::spectral::{example1, from_name};
use cyclofield_core::weights::bessel_kernel;
use cyclofield_core::{
    CyclicalSpectralDensity, HarmonicFieldSampler, NormalizedFunctionalSpec, QuadratureSpec,
    SingularPoint, WeightKernel,
};
use proptest::prelude::*;

fn reference_density() -> CyclicalSpectralDensity {
    from_name("gen(3,0.5,[(1,0.5)],constant(1,2))").unwrap()
}

fn line_density() -> CyclicalSpectralDensity {
    from_name("gen(1,0.5,[(1,0.5)],constant(1,2))").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bessel_three_term_recurrence(twice in 1i32..4, x in 0.1f64..50.0) {
        let nu = twice as f64 / 2.0;
        let lhs = bessel_j(nu - 1.0, x).unwrap() + bessel_j(nu + 1.0, x).unwrap();
        let rhs = 2.0 * nu / x * bessel_j(nu, x).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn sine_integral_monotone_up_to_pi(x in 0.0f64..std::f64::consts::PI, dx in 0.0f64..0.5) {
        let y = (x + dx).min(std::f64::consts::PI);
        prop_assert!(sinint(x).unwrap() <= sinint(y).unwrap() + 1e-15);
    }

    #[test]
    fn split_anywhere(cut in 0.01f64..1.99, w in 0.5f64..8.0) {
        let spec = QuadratureSpec::default().with_singular_points(vec![SingularPoint {
            location: 0.0,
            exponent: -0.5,
        }]);
        let f = |x: f64| x.powf(-0.5) * (w * x).cos();
        let whole = integrate_singular(f, 0.0, 2.0, &spec).unwrap();
        let left = integrate_singular(f, 0.0, cut, &spec).unwrap();
        let right = integrate_singular(f, cut, 2.0, &QuadratureSpec::default()).unwrap();
        let tol = whole.error_estimate + left.error_estimate + right.error_estimate + 1e-11;
        prop_assert!((whole.value - left.value - right.value).abs() <= tol);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn profile_scaling_is_linear(c in 0.1f64..10.0, u in 0.05f64..1.5) {
        let spec = QuadratureSpec::default();
        let d = example1(1.0).unwrap();
        let s = d.scaled(c).unwrap();
        let m = d.spectral_mass(&spec).unwrap();
        prop_assert!((s.spectral_mass(&spec).unwrap() / (c * m) - 1.0).abs() < 1e-12);
        let p = d.spectral_function(u, &spec).unwrap().phi_of_u;
        prop_assert!((s.spectral_function(u, &spec).unwrap().phi_of_u / (c * p) - 1.0).abs() < 1e-12);
        prop_assert!((s.eval_phi(u).unwrap() - c * d.eval_phi(u).unwrap()).abs() < 1e-12 * c * d.eval_phi(u).unwrap().abs().max(1.0));
    }

    #[test]
    fn spectral_function_monotone(mut us in prop::collection::vec(0.0f64..2.5, 2..8)) {
        us.sort_by(f64::total_cmp);
        let spec = QuadratureSpec::default();
        let d = reference_density();
        let vals: Vec<f64> = us.iter().map(|&u| d.spectral_function(u, &spec).unwrap().phi_of_u).collect();
        prop_assert!(vals.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn ball_functional_nonnegative(r in 0.1f64..60.0) {
        let spec = QuadratureSpec::default();
        for name in ["example1(1)", "example2(1)", "example3"] {
            let d = from_name(name).unwrap();
            prop_assert!(functional_bn(&d, r, &spec).unwrap().value >= -1e-10);
        }
    }

    #[test]
    fn kernel_scaling(c in -5.0f64..5.0, s in -40.0f64..40.0) {
        let k = bessel_kernel(3, 1.0).unwrap();
        prop_assert!((k.scaled(c).g(s) - c * k.g(s)).abs() < 1e-14 * (1.0 + k.g(s).abs()));
        prop_assert_eq!(k.g(s), k.g(-s));
    }

    #[test]
    fn limit_is_self_similar(c in 0.1f64..1.0) {
        let quad = QuadratureSpec::default();
        let base = NormalizedFunctionalSpec::at_singularity(
            reference_density(),
            bessel_kernel(3, 1.0).unwrap(),
            1,
            vec![0.25, 0.5, 1.0],
        )
        .unwrap();
        let mut scaled = base.clone();
        scaled.times = base.times.iter().map(|t| c * t).collect();
        let m = limit_cov(&base, &quad).unwrap();
        let ms = limit_cov(&scaled, &quad).unwrap();
        let factor = c.powf(2.0 * 3.0 - base.alpha);
        for p in 0..3 {
            for q in 0..3 {
                let want = factor * m.matrix[p][q];
                prop_assert!((ms.matrix[p][q] - want).abs() <= 1e-6 * want.abs().max(1e-300));
            }
        }
        prop_assert!(m.min_eigenvalue >= PSD_TOLERANCE);
    }

    #[test]
    fn finite_covariances_are_psd(r in 5.0f64..300.0, t0 in 0.05f64..0.5, t1 in 0.5f64..1.0) {
        let spec = NormalizedFunctionalSpec::at_singularity(
            reference_density(),
            bessel_kernel(3, 1.0).unwrap(),
            1,
            vec![t0, t1],
        )
        .unwrap();
        let m = finite_r_cov(&spec, r, &QuadratureSpec::default()).unwrap();
        prop_assert!(m.is_symmetric());
        prop_assert!(m.min_eigenvalue >= PSD_TOLERANCE);
    }
}

/// Radial law of Example 1: `F(l) = (l^2 + l sin l + cos l - 1) / (sin 1 + cos 1)`.
#[test]
fn radial_draws_follow_the_spectral_law() {
    let d = example1(1.0).unwrap();
    let sampler = HarmonicFieldSampler::new(&d, 1, &QuadratureSpec::default()).unwrap();
    let mut rng = replicate_rng(11, 0);
    let mut draws: Vec<f64> = (0..100_000)
        .map(|_| sampler.cdf().quantile(rand::Rng::random::<f64>(&mut rng)))
        .collect();
    draws.sort_by(f64::total_cmp);
    let law = |l: f64| (l * l + l * l.sin() + l.cos() - 1.0) / (1f64.sin() + 1f64.cos());
    let n = draws.len() as f64;
    let ks = draws
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let f = law(l);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.01, "KS distance {ks}");
}

#[test]
fn field_is_centred_with_the_spectral_variance() {
    let d = example1(1.0).unwrap();
    let spec = QuadratureSpec::default();
    let mass = d.spectral_mass(&spec).unwrap();
    for m in [1, 64] {
        let sampler = HarmonicFieldSampler::new(&d, m, &spec).unwrap();
        assert!((sampler.variance() / mass - 1.0).abs() < 1e-8);
        let values: Vec<f64> = (0..4000)
            .map(|k| sampler.realization(5, k).evaluate(&[0.2, -0.1, 0.4]))
            .collect();
        let (mean, se) = jackknife_mean(&values);
        assert!(mean.abs() < 4.0 * se, "M = {m}: mean {mean} +- {se}");
        let squares: Vec<f64> = values.iter().map(|v| v * v).collect();
        let (var, se) = jackknife_mean(&squares);
        assert!(
            (var - mass).abs() < 4.0 * se,
            "M = {m}: variance {var} +- {se}"
        );
    }
}

#[test]
fn jackknife_error_shrinks_like_root_n() {
    let d = example1(1.0).unwrap();
    let sampler = HarmonicFieldSampler::new(&d, 8, &QuadratureSpec::default()).unwrap();
    let values: Vec<f64> = (0..16_000)
        .map(|k| sampler.realization(9, k).evaluate(&[0.0, 0.0, 0.0]).powi(2))
        .collect();
    let (_, small) = jackknife_mean(&values[..4000]);
    let (_, large) = jackknife_mean(&values);
    let ratio = small / large;
    assert!((ratio - 2.0).abs() < 0.3, "{ratio}");
}

#[test]
fn functional_is_quadratic_in_the_weight() {
    let quad = QuadratureSpec::default();
    let kernel = bessel_kernel(1, 1.0).unwrap();
    let spec =
        NormalizedFunctionalSpec::at_singularity(line_density(), kernel.clone(), 1, vec![1.0])
            .unwrap();
    let mut doubled = spec.clone();
    doubled.kernel = kernel.scaled(2.0);
    let base = mc_functional(&spec, 5.0, 1.0, 8, 200, 3, None, &quad).unwrap();
    let twice = mc_functional(&doubled, 5.0, 1.0, 8, 200, 3, None, &quad).unwrap();
    assert!((twice.variance / base.variance - 4.0).abs() < 1e-9);

    let mut null = spec.clone();
    null.kernel = WeightKernel::custom(1, 1.0, "zero", 0.0, |_| 0.0).unwrap();
    let zero = mc_functional(&null, 5.0, 1.0, 8, 200, 3, None, &quad).unwrap();
    assert_eq!(zero.variance, 0.0);
}
