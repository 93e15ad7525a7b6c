use brw_occupation::numerics::{integrate, Tolerance};
use brw_occupation::walk::{gaussian_density, norming, CovMatrix, InitialLaw, WalkAnalytics, WalkKernel};
use brw_occupation::Error;
use proptest::prelude::*;

/// e^{-t} I_n(t) by its power series, evaluated in log space.
fn bessel_weight(n: u32, t: f64) -> f64 {
    let mut sum = 0.0;
    let mut m = 0u32;
    loop {
        let ln = -t + (2 * m + n) as f64 * (t / 2.0).ln() - ln_fact(m) - ln_fact(m + n);
        let term = ln.exp();
        sum += term;
        if m as f64 > t && term < 1e-20 * sum {
            return sum;
        }
        m += 1;
    }
}

fn ln_fact(n: u32) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

fn srw(dim: usize) -> WalkAnalytics {
    WalkAnalytics::new(WalkKernel::simple(dim)).unwrap()
}

#[test]
fn one_dimensional_walk_matches_bessel_series() {
    let w = srw(1);
    for &t in &[0.1, 1.0, 3.7, 12.0, 25.0] {
        for n in 0..4u32 {
            let a = w.transition_probability(t, &[n as i64], 1e-14).unwrap();
            let exact = bessel_weight(n, t);
            assert!((a.value - exact).abs() < 1e-13, "t={t} n={n}: {} vs {exact}", a.value);
        }
    }
}

#[test]
fn srw_z3_return_probability_is_bessel_cubed() {
    let w = srw(3);
    for &t in &[0.5, 2.0, 9.0] {
        let a = w.return_probability(t, 1e-14).unwrap();
        let exact = bessel_weight(0, t / 3.0).powi(3);
        assert!((a - exact).abs() < 1e-13);
    }
}

/// exp(t(P - I)) on the 9^3 torus by nalgebra's Pade exponential.
#[test]
fn srw_z3_matches_torus_matrix_exponential() {
    let side = 9usize;
    let n = side.pow(3);
    let idx = |x: [usize; 3]| (x[0] * side + x[1]) * side + x[2];
    let mut gen = nalgebra::DMatrix::<f64>::zeros(n, n);
    for a in 0..side {
        for b in 0..side {
            for c in 0..side {
                let i = idx([a, b, c]);
                gen[(i, i)] = -1.0;
                for axis in 0..3 {
                    for s in [1, side - 1] {
                        let mut y = [a, b, c];
                        y[axis] = (y[axis] + s) % side;
                        gen[(i, idx(y))] += 1.0 / 6.0;
                    }
                }
            }
        }
    }
    let e = gen.exp();
    let w = srw(3);
    let a00 = w.return_probability(1.0, 1e-14).unwrap();
    assert!((a00 - e[(0, 0)]).abs() < 1e-10, "{a00} vs {}", e[(0, 0)]);
    let a1 = w.transition_probability(1.0, &[1, 2, 0], 1e-14).unwrap().value;
    assert!((a1 - e[(0, idx([1, 2, 0]))]).abs() < 1e-10);
}

#[test]
fn dense_and_factorized_engines_agree() {
    let fact = srw(3);
    let dense = WalkAnalytics::without_factorization(WalkKernel::simple(3), 1 << 22).unwrap();
    assert!(fact.is_factorized());
    assert!(!dense.is_factorized());
    for &t in &[0.3, 1.0, 4.0] {
        for x in [[0, 0, 0], [1, 0, 0], [2, -1, 1]] {
            let a = fact.transition_probability(t, &x, 1e-14).unwrap().value;
            let b = dense.transition_probability(t, &x, 1e-14).unwrap().value;
            assert!((a - b).abs() < 1e-13, "t={t} x={x:?}");
        }
    }
}

#[test]
fn chapman_kolmogorov_at_the_origin() {
    let w = srw(3);
    for &(s, t) in &[(0.5, 0.5), (1.0, 2.5), (3.0, 4.0)] {
        let ps = w.transition_distribution(s, 1e-14).unwrap();
        let pt = w.transition_distribution(t, 1e-14).unwrap();
        // a_t(y, 0) = a_t(0, -y) = a_t(0, y) by symmetry.
        let conv: f64 = ps.iter_nonzero().map(|(y, v)| v * pt.get(&y)).sum();
        let direct = w.return_probability(s + t, 1e-14).unwrap();
        assert!((conv - direct).abs() < 1e-12, "s={s} t={t}: {conv} vs {direct}");
    }
}

#[test]
fn srw_z3_green_function_matches_watson_integral() {
    let g = srw(3).green_values(&[0, 0, 0], 0.0, 64.0, 1e-7).unwrap();
    assert!((g.value - 1.516_386_059_151_978).abs() < 1e-7, "{g:?}");
    assert!(g.error <= 1e-7);
}

/// Expected visits to 0 of the discrete-time walk: sum over n of
/// P(S_2n = 0) = C(2n,n) sum_k C(n,k)^2 C(2k,k) / 36^n, with the tail
/// A n^{-3/2} (1 + b/n) matched at the last term.
#[test]
fn srw_z3_green_function_matches_discrete_time_sum() {
    let m = 3000usize;
    let mut lf = vec![0.0f64; 2 * m + 1];
    for k in 1..lf.len() {
        lf[k] = lf[k - 1] + (k as f64).ln();
    }
    let ln_c = |n: usize, k: usize| lf[n] - lf[k] - lf[n - k];
    let p = |n: usize| -> f64 {
        let outer = ln_c(2 * n, n) - n as f64 * 36f64.ln();
        (0..=n).map(|k| (outer + 2.0 * ln_c(n, k) + ln_c(2 * k, k)).exp()).sum()
    };
    let head: f64 = (0..=m).map(p).sum();
    let a = 2.0 * (3.0 / (4.0 * std::f64::consts::PI)).powf(1.5);
    let mf = m as f64;
    let b = (p(m) / (a * mf.powf(-1.5)) - 1.0) * mf;
    // sum_{n > m} f(n) ~ int_{m + 1/2}^inf f.
    let x = mf + 0.5;
    let tail = a * (2.0 / x.sqrt() + b * 2.0 / (3.0 * x.powf(1.5)));
    let oracle = head + tail;
    let g = srw(3).green_values(&[0, 0, 0], 0.0, 64.0, 1e-8).unwrap();
    assert!((g.value - oracle).abs() <= g.error + 1e-8, "{g:?} vs {oracle}");
}

#[test]
fn recurrent_dimensions_have_no_green_function() {
    for d in [1, 2] {
        let err = srw(d).green_values(&vec![0; d], 0.0, 10.0, 1e-6).unwrap_err();
        assert_eq!(err, Error::RecurrentCase { dim: d });
        assert!(srw(d).green_values(&vec![0; d], 0.5, 10.0, 1e-8).is_ok());
    }
}

#[test]
fn resolvent_is_bounded_and_decreasing() {
    let w = srw(3);
    let mut prev = f64::INFINITY;
    for &lambda in &[0.05, 0.2, 1.0, 4.0] {
        let g = w.green_values(&[0, 0, 0], lambda, 8.0, 1e-9).unwrap();
        assert!(g.value <= 1.0 / lambda);
        assert!(g.value < prev);
        prev = g.value;
    }
    // Off-diagonal values are smaller than the diagonal one.
    let g0 = w.green_values(&[0, 0, 0], 0.1, 8.0, 1e-9).unwrap().value;
    let g1 = w.green_values(&[1, 0, 0], 0.1, 8.0, 1e-9).unwrap().value;
    assert!(g1 < g0);
}

#[test]
fn return_probability_approaches_local_clt() {
    let w = srw(3);
    let t = 1000.0;
    let a = w.return_probability(t, 1e-15).unwrap();
    let p = w.gaussian_approx(t, &[0.0, 0.0, 0.0]);
    assert!((a / p - 1.0).abs() < 1e-2);
}

/// sum_x u_t(x)^2 = int_0^t int_0^t a_{r+s}(0,0) dr ds, with the right side
/// as a nested double quadrature.
#[test]
fn killed_green_field_norm_identity() {
    let w = srw(3);
    let t = 2.0;
    let field = w.killed_green_field(t, 1e-13).unwrap();
    let lhs = field.sum_squares();
    let rhs = integrate(
        |r| {
            Ok(integrate(|s| w.return_probability(r + s, 1e-15), 0.0, t, Tolerance::absolute(1e-13))?
                .value)
        },
        0.0,
        t,
        Tolerance::absolute(1e-11),
    )
    .unwrap()
    .value;
    assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    // Total mass of u_t is t.
    assert!((field.sum() - t).abs() < 1e-11);
    let origin = w.killed_green(&[0, 0, 0], t, 1e-12).unwrap().value;
    assert!((field.get(&[0, 0, 0]) - origin).abs() < 1e-11);
}

#[test]
fn norming_values() {
    assert!((norming(3, 16.0).unwrap() - 8.0).abs() < 1e-12);
    let e2 = std::f64::consts::E * std::f64::consts::E;
    assert!((norming(4, e2).unwrap() - (2.0 * e2).sqrt()).abs() < 1e-12);
    assert!((norming(5, 9.0).unwrap() - 3.0).abs() < 1e-12);
    assert!((norming(7, 4.0).unwrap() - 2.0).abs() < 1e-12);
    assert!(matches!(norming(4, 1.0), Err(Error::DomainError(_))));
    assert!(matches!(norming(4, 0.5), Err(Error::DomainError(_))));
    assert!(matches!(norming(3, 0.0), Err(Error::DomainError(_))));
    assert_eq!(norming(2, 5.0), Err(Error::UnsupportedDimension(2)));
}

/// Clan second moment against its defining double integrals, evaluated as
/// nested quadrature.
#[test]
fn clan_contribution_matches_nested_quadrature() {
    let w = srw(3);
    let t = 3.0;
    let a = |z: f64| w.return_probability(z, 1e-15);
    // Poisson start: (1/2) int_0^t int_0^t a_{r+s}(0,0) ds dr.
    let poisson = w.clan_contribution(t, InitialLaw::Poisson, 1e-10).unwrap().value;
    let nested = 0.5
        * integrate(
            |r| Ok(integrate(|s| a(r + s), 0.0, t, Tolerance::absolute(1e-13))?.value),
            0.0,
            t,
            Tolerance::absolute(1e-11),
        )
        .unwrap()
        .value;
    assert!((poisson - nested).abs() < 1e-8, "{poisson} vs {nested}");

    // Equilibrium: (1/2) int_0^t ds int_s^inf a_z dz, outer and inner quadratures.
    let eq = w.clan_contribution(t, InitialLaw::Equilibrium, 1e-6).unwrap().value;
    let g = w.green_values(&[0, 0, 0], 0.0, 64.0, 1e-7).unwrap().value;
    let nested_eq = 0.5
        * integrate(
            |s| Ok(g - integrate(|z| a(z), 0.0, s, Tolerance::absolute(1e-13))?.value),
            0.0,
            t,
            Tolerance::absolute(1e-10),
        )
        .unwrap()
        .value;
    assert!((eq - nested_eq).abs() < 1e-6, "{eq} vs {nested_eq}");
}

#[test]
fn time_zero_is_a_point_mass() {
    let w = srw(3);
    assert_eq!(w.transition_probability(0.0, &[0, 0, 0], 1e-12).unwrap().value, 1.0);
    assert_eq!(w.transition_probability(0.0, &[1, 0, 0], 1e-12).unwrap().value, 0.0);
    assert_eq!(w.killed_green(&[0, 0, 0], 0.0, 1e-12).unwrap().value, 0.0);
}

#[test]
fn rows_are_stochastic_up_to_the_tolerance() {
    let tol = 1e-11;
    for &t in &[0.5, 3.0, 10.0] {
        let total = srw(3).transition_distribution(t, tol).unwrap().sum();
        assert!(total <= 1.0 + 1e-14 && total >= 1.0 - tol, "t={t}: {total}");
    }
}

#[test]
fn gaussian_density_plug_in_and_scaling() {
    let id = CovMatrix::identity(3);
    let p = gaussian_density(&id, 1.0, &[0.0; 3]);
    assert!((p - (2.0 * std::f64::consts::PI).powf(-1.5)).abs() < 1e-15);
    let x = [1.0, 0.0, 0.0];
    let lhs = gaussian_density(&id, 4.0, &[2.0, 0.0, 0.0]);
    assert!((lhs - gaussian_density(&id, 1.0, &x) / 8.0).abs() < 1e-16);
}

#[test]
fn local_clt_improves_from_100_to_400_in_d3_and_d5() {
    for d in [3, 5] {
        let w = srw(d);
        let dev = |t: f64| {
            let a = w.return_probability(t, 1e-16).unwrap();
            (a / w.gaussian_approx(t, &vec![0.0; d]) - 1.0).abs()
        };
        let (d100, d400) = (dev(100.0), dev(400.0));
        assert!(d400 < d100, "d={d}: {d100} vs {d400}");
        assert!(d400 < 0.05);
    }
}

#[test]
fn resolvent_bounds_and_monotonicity() {
    let w = srw(3);
    for &lambda in &[0.1, 1.0, 10.0] {
        let g = w.green_values(&[0, 0, 0], lambda, 8.0, 1e-9).unwrap();
        assert!(g.value <= 1.0 / lambda && g.value > 0.0);
    }
    let g: Vec<f64> = [0.0, 0.5, 1.0]
        .iter()
        .map(|&l| w.green_values(&[0, 0, 0], l, 16.0, 1e-9).unwrap().value)
        .collect();
    assert!(g[0] > g[1] && g[1] > g[2]);
}

/// g_1(0,0) against the Laplace transform of a_.(0,0) by plain quadrature.
#[test]
fn resolvent_matches_its_definition() {
    let w = srw(3);
    let g = w.green_values(&[0, 0, 0], 1.0, 8.0, 1e-10).unwrap();
    let direct = integrate(
        |t| Ok((-t).exp() * w.return_probability(t, 1e-15)?),
        0.0,
        60.0,
        Tolerance::absolute(1e-12),
    )
    .unwrap();
    assert!((g.value - direct.value).abs() <= g.error + direct.error + 1e-12, "{g:?} vs {direct:?}");
}

#[test]
fn killed_green_is_nondecreasing() {
    let w = srw(3);
    let u: Vec<f64> = [0.0, 1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|&t| w.killed_green(&[0, 0, 0], t, 1e-10).unwrap().value)
        .collect();
    assert_eq!(u[0], 0.0);
    assert!(u.windows(2).all(|p| p[0] < p[1]), "{u:?}");
    // u_t(0,0) <= g(0,0).
    assert!(u[4] < 1.5164);
}

#[test]
fn natural_log_in_the_d4_norming() {
    let e = std::f64::consts::E;
    assert!((norming(4, e).unwrap() - e.sqrt()).abs() < 1e-12);
}

#[test]
fn clan_growth_by_dimension() {
    let c = |d: usize, t: f64| srw(d).clan_contribution(t, InitialLaw::Poisson, 1e-6).unwrap().value;
    assert!(c(3, 1e-4) < 1e-7);
    let r3 = c(3, 100.0) / c(3, 25.0);
    assert!((r3 - 2.0).abs() < 0.2, "d=3 ratio {r3}");
    let r5 = c(5, 100.0) / c(5, 50.0);
    assert!(r5 < 1.1, "d=5 ratio {r5}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transition_probabilities_are_symmetric_and_bounded(
        t in 0.0f64..20.0,
        x in prop::collection::vec(-4i64..=4, 3),
    ) {
        let w = srw(3);
        let a = w.transition_probability(t, &x, 1e-13).unwrap().value;
        let neg: Vec<i64> = x.iter().map(|c| -c).collect();
        let b = w.transition_probability(t, &neg, 1e-13).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - b).abs() < 1e-15);
        let origin = w.return_probability(t, 1e-13).unwrap();
        prop_assert!(a <= origin + 1e-13);
    }

    #[test]
    fn distributions_conserve_mass(t in 0.0f64..6.0, d in 1usize..=3) {
        let f = srw(d).transition_distribution(t, 1e-12).unwrap();
        prop_assert!((f.sum() - 1.0).abs() < 2e-12);
    }

    #[test]
    fn return_probability_decreases_in_time(s in 0.0f64..30.0, h in 0.01f64..10.0) {
        let w = srw(3);
        let a = w.return_probability(s, 1e-14).unwrap();
        let b = w.return_probability(s + h, 1e-14).unwrap();
        prop_assert!(b < a + 1e-14);
    }
}
