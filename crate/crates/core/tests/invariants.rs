//! Property tests of the scheme's structural guarantees on randomized
//! parameters and states: flux identification, the entropy-production
//! identity, conservation, margin optimality, entropy convexity, and
//! tolerance self-convergence of the stiff integrator.

use entrodiff::coeffs::{
    admissibility_k, lambda4_optimal, lambda_general, nonneg_margin, poly_spec,
    verify_flux_identification,
};
use entrodiff::diagnostics::{decay_rate, l2_error, mass};
use entrodiff::integrator::integrate;
use entrodiff::scheme1d::{entropy_production_closed_form, entropy_production_direct, rhs};
use entrodiff::scheme2d::{entropy_production_2d, entropy_production_direct_2d, rhs_2d};
use entrodiff::{
    AverageRule, EntropySpec, Method, ModelParams, Scheme1DSystem, Scheme2DConfig, SchemeConfig,
    SchemeVariant, SolverConfig, TorusGrid,
};
use proptest::prelude::*;

/// Parameter box for the coefficient machinery, excluding the thin strips
/// around alpha = 1 and the vanishing lambda-system denominator where the
/// general closed form degenerates.
fn params() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.0..3.0f64, 0.0..4.0f64, -3.0..1.0f64, -1.0..2.0f64).prop_filter(
        "away from the degenerate denominators",
        |&(alpha, beta, _, _)| (alpha - 1.0).abs() >= 0.05 && (beta - 2.0 * alpha + 3.0).abs() >= 0.05,
    )
}

fn positive_state(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.1..3.0f64, n)
}

fn variants() -> impl Strategy<Value = SchemeVariant> {
    prop_oneof![Just(SchemeVariant::Central), Just(SchemeVariant::Noncentral)]
}

fn averages() -> impl Strategy<Value = AverageRule> {
    prop_oneof![
        Just(AverageRule::Identity),
        Just(AverageRule::ArithmeticNbr),
        Just(AverageRule::Geometric),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The lambda system reproduces the model flux for any admissible-free
    /// parameter choice and any lambda4.
    #[test]
    fn flux_identification_closes((alpha, beta, a, b) in params(), lambda4 in -5.0..5.0f64) {
        let entropy = EntropySpec::new(alpha).unwrap();
        let model = ModelParams::new(a, b, beta).unwrap();
        let lambdas = lambda_general(entropy, model, lambda4).unwrap();
        let residual = verify_flux_identification(entropy, model, lambdas);
        prop_assert!(residual <= 1e-10, "residual {residual:e}");
    }

    /// Entropy production computed through the chain rule (direct) matches
    /// the closed form for every variant, average, and lambda4.
    #[test]
    fn production_identity_holds(
        (alpha, beta, a, b) in params(),
        lambda4 in -3.0..3.0f64,
        u in positive_state(32),
        variant in variants(),
        average in averages(),
    ) {
        let grid = TorusGrid::unit_1d(32).unwrap();
        let entropy = EntropySpec::new(alpha).unwrap();
        let model = ModelParams::new(a, b, beta).unwrap();
        let lambdas = lambda_general(entropy, model, lambda4).unwrap();
        let scheme = SchemeConfig::new(entropy, model, lambdas, variant, average).unwrap();
        let closed = entropy_production_closed_form(&u, &scheme, &grid).unwrap();
        let direct = entropy_production_direct(&u, &scheme, &grid).unwrap();
        let scale = closed.abs().max(direct.abs()).max(1.0);
        prop_assert!((closed - direct).abs() <= 1e-9 * scale,
            "closed {closed:e} vs direct {direct:e}");
    }

    /// The discrete flux form telescopes: the rhs carries zero total mass.
    #[test]
    fn rhs_conserves_mass(
        (alpha, beta, a, b) in params(),
        u in positive_state(40),
        variant in variants(),
    ) {
        let grid = TorusGrid::unit_1d(40).unwrap();
        let entropy = EntropySpec::new(alpha).unwrap();
        let model = ModelParams::new(a, b, beta).unwrap();
        let scheme = SchemeConfig::with_optimal_lambda4(entropy, model, variant,
            AverageRule::Identity).unwrap();
        let du = rhs(&u, &scheme, &grid).unwrap();
        let drift: f64 = du.iter().sum::<f64>() * grid.h();
        let scale: f64 = du.iter().map(|x| x.abs()).sum::<f64>() * grid.h();
        prop_assert!(drift.abs() <= 1e-11 * scale.max(1.0), "drift {drift:e} vs {scale:e}");
    }

    /// No +-0.1 move of lambda4 away from the closed-form optimum improves
    /// the nonnegativity margin.
    #[test]
    fn lambda4_optimum_is_locally_maximal((alpha, beta, a, b) in params()) {
        let entropy = EntropySpec::new(alpha).unwrap();
        let model = ModelParams::new(a, b, beta).unwrap();
        let best = lambda4_optimal(entropy, model);
        let margin_at = |l4: f64| {
            nonneg_margin(poly_spec(entropy, lambda_general(entropy, model, l4).unwrap()))
        };
        let here = margin_at(best);
        prop_assert!(margin_at(best + 0.1) <= here + 1e-9);
        prop_assert!(margin_at(best - 0.1) <= here + 1e-9);
        // and the optimal margin has the sign of the admissibility function
        let k = admissibility_k(alpha, model);
        prop_assert!((here >= -1e-12) == (k >= -1e-9), "margin {here:e} vs K {k:e}");
    }

    /// The 2D production identity holds for any exponent, not only the
    /// dissipative beta = 2.
    #[test]
    fn production_identity_holds_2d(
        beta in 0.0..4.0f64,
        u in positive_state(12 * 8),
        average in averages(),
    ) {
        let grid = TorusGrid::new(&[12, 8], 1.0 / 12.0).unwrap();
        let scheme = Scheme2DConfig::new(beta, average).unwrap();
        let closed = entropy_production_2d(&u, &scheme, &grid).unwrap();
        let direct = entropy_production_direct_2d(&u, &scheme, &grid).unwrap();
        let scale = closed.abs().max(direct.abs()).max(1.0);
        prop_assert!((closed - direct).abs() <= 1e-9 * scale,
            "closed {closed:e} vs direct {direct:e}");
    }

    /// The 2D rhs is conservative as well.
    #[test]
    fn rhs_conserves_mass_2d(beta in 0.0..4.0f64, u in positive_state(10 * 10)) {
        let grid = TorusGrid::new(&[10, 10], 0.1).unwrap();
        let scheme = Scheme2DConfig::new(beta, AverageRule::Identity).unwrap();
        let du = rhs_2d(&u, &scheme, &grid).unwrap();
        let vol = grid.cell_volume();
        let drift: f64 = du.iter().sum::<f64>() * vol;
        let scale: f64 = du.iter().map(|x| x.abs()).sum::<f64>() * vol;
        prop_assert!(drift.abs() <= 1e-11 * scale.max(1.0), "drift {drift:e}");
    }

    /// Each entropy density is midpoint convex on the positive axis.
    #[test]
    fn entropy_densities_are_midpoint_convex(x in 0.01..5.0f64, y in 0.01..5.0f64) {
        for alpha in [0.0, 0.5, 1.0, 2.0] {
            let s = EntropySpec::new(alpha).unwrap();
            let mid = s.density(0.5 * (x + y));
            let avg = 0.5 * (s.density(x) + s.density(y));
            prop_assert!(mid <= avg + 1e-12 * avg.abs().max(1.0),
                "alpha {alpha}: s(mid) {mid} > avg {avg}");
        }
    }

    /// The decay-rate fit recovers a planted exponential rate.
    #[test]
    fn decay_rate_recovers_planted_exponent(
        rate in 1.0..100.0f64,
        datum in -2.0..2.0f64,
        amplitude in 0.1..10.0f64,
    ) {
        let times: Vec<f64> = (0..40).map(|k| 1e-3 * k as f64 / rate).collect();
        let values: Vec<f64> =
            times.iter().map(|&t| datum + amplitude * (-rate * t).exp()).collect();
        let fitted = decay_rate(&times, &values, datum).unwrap();
        prop_assert!((fitted - rate).abs() <= 1e-6 * rate, "fitted {fitted} vs {rate}");
    }
}

/// Tightening the step tolerances drives the final state toward a limit:
/// errors against a much tighter reference run shrink monotonically.
#[test]
fn integrator_self_converges_under_tolerance_refinement() {
    let n = 32;
    let grid = TorusGrid::unit_1d(n).unwrap();
    let entropy = EntropySpec::new(0.0).unwrap();
    let model = ModelParams::thin_film(2.0).unwrap();
    let scheme = SchemeConfig::with_optimal_lambda4(
        entropy,
        model,
        SchemeVariant::Central,
        AverageRule::Identity,
    )
    .unwrap();
    let u0: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
        .collect();
    let system = Scheme1DSystem { config: &scheme, grid: &grid };
    let t_end = 1e-4;

    let solve = |rtol: f64| {
        let config = SolverConfig {
            method: Method::Bdf2,
            rtol,
            atol: rtol * 1e-2,
            ..SolverConfig::default()
        };
        integrate(&system, &u0, 0.0, t_end, &config, &[], None).expect("run completes").u
    };

    let reference = solve(1e-11);
    let errors: Vec<f64> = [1e-4, 1e-6, 1e-8]
        .iter()
        .map(|&rtol| l2_error(&solve(rtol), &reference, &grid).unwrap())
        .collect();
    assert!(
        errors[0] > errors[1] && errors[1] > errors[2],
        "errors must shrink with the tolerance: {errors:?}"
    );
    assert!(errors[2] < 1e-7, "tightest run still {:.3e} away", errors[2]);
    // and mass is conserved independently of tolerance
    let m0 = mass(&u0, &grid);
    assert!((mass(&reference, &grid) - m0).abs() <= 1e-10 * m0.abs());
}
