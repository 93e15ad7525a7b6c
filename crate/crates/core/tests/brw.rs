use brw_occupation::brw::{
    estimate_sigma_eq, init_equilibrium, init_poisson, moment_formula_cov, run, BranchingRate, Configuration,
    EventKind, InitSpec, MomentInputs, SimParams, Simulator,
};
use brw_occupation::rng::stream;
use brw_occupation::walk::{InitialLaw, WalkAnalytics, WalkKernel};
use brw_occupation::Error;
use proptest::prelude::*;

fn params(rho: f64, horizon: f64) -> SimParams {
    SimParams::new(WalkKernel::simple(3), BranchingRate::independent(rho).unwrap(), 1.0, horizon).unwrap()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for i in 1..panels {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn empty_poisson_field_at_zero_intensity() {
    let mut p = params(1.0, 1.0);
    p.theta = 0.0;
    let c = init_poisson(&p, &mut stream(1, 0)).unwrap();
    assert_eq!(c.total(), 0);
    let (traj, counters) = run(&p, &c, &mut stream(1, 1)).unwrap();
    assert_eq!(traj.events, 0);
    assert_eq!(traj.occupation_integral(1.0).unwrap(), 0.0);
    assert_eq!(counters.births_at_origin, 0);
}

#[test]
fn poisson_field_total_has_mean_theta_volume() {
    let mut p = params(1.0, 1.0);
    p.torus_side = 31;
    let v = 31f64.powi(3);
    let draws: Vec<f64> = (0..100).map(|i| init_poisson(&p, &mut stream(2, i)).unwrap().total() as f64 / v).collect();
    let (m, se) = mean_se(&draws);
    assert!((m - 1.0).abs() < 3.0 * se, "{m} +- {se}");
}

#[test]
fn poisson_field_is_translation_invariant() {
    let p = params(1.0, 0.1);
    let x = [2, -1, 1];
    let (mut at0, mut atx) = (Vec::new(), Vec::new());
    for i in 0..10_000 {
        let c = init_poisson(&p, &mut stream(3, i)).unwrap();
        at0.push(c.get(&[0, 0, 0]) as f64);
        atx.push(c.get(&x) as f64);
    }
    let (m0, s0) = mean_se(&at0);
    let (mx, sx) = mean_se(&atx);
    assert!((m0 - mx).abs() < 3.0 * (s0 * s0 + sx * sx).sqrt());
    assert!((m0 - 1.0).abs() < 3.0 * s0);
}

#[test]
fn zero_burn_in_reproduces_the_poisson_field() {
    let mut p = params(1.0, 1.0);
    p.init = InitSpec::Burnin { t_burn: Some(0.0) };
    let a = init_equilibrium(&p, &mut stream(4, 7)).unwrap();
    let b = init_poisson(&p, &mut stream(4, 7)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn equilibrium_needs_a_transient_walk() {
    let mut p = SimParams::new(WalkKernel::simple(2), BranchingRate::independent(1.0).unwrap(), 1.0, 1.0).unwrap();
    p.init = InitSpec::Burnin { t_burn: Some(1.0) };
    assert!(matches!(init_equilibrium(&p, &mut stream(0, 0)), Err(Error::InvalidParams(_))));
}

/// After burn-in the mean stays at theta and the origin variance exceeds it,
/// matching the Poisson-start moment formula at the burn-in time.
#[test]
fn burn_in_preserves_mean_and_clumps() {
    let t_burn = 4.0;
    let mut p = params(1.0, 0.0);
    p.init = InitSpec::Burnin { t_burn: Some(t_burn) };
    p.fit_torus().unwrap();
    let origin: Vec<f64> = (0..10_000)
        .map(|i| init_equilibrium(&p, &mut stream(5, i)).unwrap().get(&[0, 0, 0]) as f64)
        .collect();
    let (m, se) = mean_se(&origin);
    assert!((m - 1.0).abs() < 3.0 * se, "mean {m} +- {se}");
    let n = origin.len() as f64;
    let sq: Vec<f64> = origin.iter().map(|x| (x - m).powi(2)).collect();
    let (var, var_se) = mean_se(&sq);
    let var = var * n / (n - 1.0);
    assert!(var > 1.0 - 3.0 * var_se, "var {var}");
    let walk = WalkAnalytics::new(WalkKernel::simple(3)).unwrap();
    let inputs = MomentInputs::independent(1.0, 1.0).unwrap();
    let exact = moment_formula_cov(&walk, t_burn, t_burn, &[0, 0, 0], &[0, 0, 0], InitialLaw::Poisson, &inputs, 1e-9)
        .unwrap()
        .value;
    assert!(exact > 1.3);
    assert!((var - exact).abs() < 3.0 * var_se, "var {var} +- {var_se} vs {exact}");
}

#[test]
fn total_population_is_a_martingale() {
    let rate = BranchingRate::tabulated(vec![0.0, 0.01], None).unwrap();
    let p = SimParams::new(WalkKernel::simple(3), rate, 1.0, 2.0).unwrap();
    let mut sim = Simulator::new(p).unwrap();
    let diffs: Vec<f64> = (0..10_000)
        .map(|i| {
            let mut rng = stream(6, i);
            sim.seed_poisson(&mut rng);
            let traj = sim.run(&mut rng).unwrap();
            traj.final_total as f64 - traj.initial_total as f64
        })
        .collect();
    let (m, se) = mean_se(&diffs);
    assert!(se > 0.0 && m.abs() < 3.0 * se, "{m} +- {se}");
}

#[test]
fn first_event_is_a_branch_with_probability_rho_over_one_plus_rho() {
    let p = params(1.0, 1.0);
    let mut c = Configuration::empty(p.torus().unwrap());
    c.set(&[0, 0, 0], 1);
    let mut sim = Simulator::new(p).unwrap();
    let (mut branch, mut any) = (0u32, 0u32);
    for i in 0..100_000 {
        sim.load(&c).unwrap();
        let traj = sim.run(&mut stream(7, i)).unwrap();
        match traj.first_event {
            Some(EventKind::Birth | EventKind::Death) => {
                branch += 1;
                any += 1;
            }
            Some(EventKind::Jump) => any += 1,
            None => {}
        }
    }
    let f = branch as f64 / any as f64;
    let se = (0.25 / any as f64).sqrt();
    assert!((f - 0.5).abs() < 3.0 * se, "{f}");
}

/// Compensated births at the origin, the occupation mean and the intensity
/// from one Poisson-start ensemble.
#[test]
fn compensator_and_occupation_mean() {
    let mut p = params(1.0, 2.0);
    p.record_grid = vec![1.0, 2.0];
    let mut sim = Simulator::new(p.clone()).unwrap();
    let (mut comp, mut occ, mut count) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..100_000 {
        let mut rng = stream(8, i);
        sim.seed_poisson(&mut rng);
        let traj = sim.run(&mut rng).unwrap();
        let c = traj.counters(2.0, Some(&p.rate)).unwrap();
        comp.push(c.births_at_origin as f64 - 0.5 * c.integrated_sigma_at_origin);
        let i1 = traj.occupation_integral(1.0).unwrap();
        let i2 = traj.occupation_integral(2.0).unwrap();
        let both = traj.occupation_integrals(&[1.0, 2.0]).unwrap();
        assert_eq!(both, vec![i1, i2]);
        assert!((c.integrated_count_at_origin - i2).abs() < 1e-12);
        occ.push(i2);
        count.push(traj.origin_count(2.0).unwrap() as f64);
    }
    let (m, se) = mean_se(&comp);
    assert!(m.abs() < 3.0 * se, "compensator {m} +- {se}");
    let (m, se) = mean_se(&occ);
    assert!((m - 2.0).abs() < 3.0 * se, "occupation {m} +- {se}");
    let (m, se) = mean_se(&count);
    assert!((m - 1.0).abs() < 3.0 * se, "intensity {m} +- {se}");
}

#[test]
fn occupation_is_additive() {
    let mut p = params(1.0, 3.0);
    p.record_grid = vec![0.7, 3.0];
    let c = init_poisson(&p, &mut stream(9, 0)).unwrap();
    let (traj, _) = run(&p, &c, &mut stream(9, 1)).unwrap();
    let (a, b) = (traj.occupation_integral(0.7).unwrap(), traj.occupation_integral(3.0).unwrap());
    let mid = traj.occupation_integral(1.9).unwrap();
    assert_eq!(a + (b - a), b);
    assert!(a <= mid && mid <= b);
}

#[test]
fn identical_seeds_give_identical_trajectories() {
    let mut p = params(1.0, 3.0);
    p.record_grid = vec![1.0, 3.0];
    let c = init_poisson(&p, &mut stream(10, 0)).unwrap();
    let (t1, c1) = run(&p, &c, &mut stream(10, 1)).unwrap();
    let (t2, c2) = run(&p, &c, &mut stream(10, 1)).unwrap();
    assert_eq!(t1, t2);
    assert_eq!(c1, c2);
    let (t3, _) = run(&p, &c, &mut stream(10, 2)).unwrap();
    assert_ne!(t1, t3);
}

#[test]
fn sigma_eq_estimates() {
    let mut p = params(1.0, 1.0);
    p.seed = 11;
    let short = estimate_sigma_eq(&p, 4.0, 1.0, 400, 1).unwrap();
    assert!((short.mean - 1.0).abs() < 3.0 * short.se, "{short:?}");
    let long = estimate_sigma_eq(&p, 4.0, 4.0, 400, 1).unwrap();
    assert!(long.se < short.se, "{} vs {}", long.se, short.se);

    p.rate = BranchingRate::tabulated(vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0], Some(0.0)).unwrap();
    let tab = estimate_sigma_eq(&p, 4.0, 1.0, 400, 1).unwrap();
    assert!(tab.mean <= p.rate.linear_bound() * p.theta + 3.0 * tab.se);
    assert!(tab.mean > 0.5);
}

#[test]
fn moment_formula_examples() {
    let walk = WalkAnalytics::new(WalkKernel::simple(3)).unwrap();
    let inputs = MomentInputs::independent(1.0, 1.0).unwrap();
    let o = [0, 0, 0];
    let cov = |u: f64, v: f64, init| moment_formula_cov(&walk, u, v, &o, &o, init, &inputs, 1e-10).unwrap().value;
    assert!((cov(0.0, 0.0, InitialLaw::Poisson) - 1.0).abs() < 1e-12);

    let g = walk.green_at_origin(1e-10).unwrap().value;
    let eq = cov(2.0, 2.0, InitialLaw::Equilibrium);
    assert!((eq - (1.0 + 0.5 * g)).abs() < 1e-8);
    assert!((eq - 1.758).abs() < 1e-3);

    // theta + (rho theta / 2) u_2(0,0), with u_2 by composite Simpson.
    let u2 = simpson(|s| walk.return_probability(s, 1e-15).unwrap(), 0.0, 2.0, 2000);
    assert!((cov(1.0, 1.0, InitialLaw::Poisson) - (1.0 + 0.5 * u2)).abs() < 1e-9);

    // Arguments are symmetric in (u, v).
    assert_eq!(cov(1.0, 2.5, InitialLaw::Poisson), cov(2.5, 1.0, InitialLaw::Poisson));
}

#[test]
fn poisson_start_covariance_is_below_equilibrium() {
    let walk = WalkAnalytics::new(WalkKernel::simple(3)).unwrap();
    let inputs = MomentInputs::independent(1.0, 1.0).unwrap();
    for &(u, v) in &[(0.5, 0.5), (1.0, 2.0), (3.0, 3.5), (10.0, 10.0)] {
        for y in [[0, 0, 0], [1, 1, 0]] {
            let p = moment_formula_cov(&walk, u, v, &[0, 0, 0], &y, InitialLaw::Poisson, &inputs, 1e-9).unwrap();
            let e = moment_formula_cov(&walk, u, v, &[0, 0, 0], &y, InitialLaw::Equilibrium, &inputs, 1e-9).unwrap();
            assert!(p.value <= e.value + p.error + e.error, "({u},{v}) {y:?}");
        }
    }
}

#[test]
fn state_dependent_moments_need_sigma_inputs() {
    let walk = WalkAnalytics::new(WalkKernel::simple(3)).unwrap();
    let rate = BranchingRate::tabulated(vec![0.0, 1.0, 1.5], None).unwrap();
    let inputs = MomentInputs::new(1.0, rate).unwrap();
    let o = [0, 0, 0];
    assert_eq!(
        moment_formula_cov(&walk, 1.0, 1.0, &o, &o, InitialLaw::Poisson, &inputs, 1e-8),
        Err(Error::MissingSigmaCurve)
    );
    assert_eq!(
        moment_formula_cov(&walk, 1.0, 1.0, &o, &o, InitialLaw::Equilibrium, &inputs, 1e-8),
        Err(Error::MissingSigmaEq)
    );
}

/// Doubling the torus leaves the origin occupation mean unchanged within
/// three standard errors of the difference.
#[test]
fn torus_size_stability() {
    let mut means = Vec::new();
    let base = params(1.0, 2.0);
    for side in [base.torus_side, 2 * base.torus_side + 1] {
        let mut p = base.clone();
        p.torus_side = side;
        let mut sim = Simulator::new(p).unwrap();
        let occ: Vec<f64> = (0..10_000)
            .map(|i| {
                let mut rng = stream(12, i);
                sim.seed_poisson(&mut rng);
                sim.run(&mut rng).unwrap().occupation_integral(2.0).unwrap()
            })
            .collect();
        means.push(mean_se(&occ));
    }
    let ((a, sa), (b, sb)) = (means[0], means[1]);
    assert!((a - b).abs() < 3.0 * (sa * sa + sb * sb).sqrt(), "{a} vs {b}");
}

#[test]
fn params_validation() {
    let mut p = params(1.0, 2.0);
    assert!(p.validate().is_ok());
    p.torus_side -= 2;
    assert!(matches!(p.validate(), Err(Error::InvalidParams(_))));
    let mut p = params(1.0, 2.0);
    p.record_grid = vec![1.0, 0.5];
    assert!(p.validate().is_err());
    let mut p = params(1.0, 2.0);
    p.theta = f64::NAN;
    assert!(p.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tabulated_rates_respect_their_bounds(
        table in prop::collection::vec(0.0f64..4.0, 1..8),
        slope in 0.0f64..2.0,
        k in 0u32..40,
    ) {
        let mut values = vec![0.0];
        values.extend(table.iter().map(|v| v + 0.01));
        let r = BranchingRate::tabulated(values, Some(slope)).unwrap();
        let (c1, c2) = (r.lipschitz(), r.linear_bound());
        prop_assert!((r.sigma(k + 1) - r.sigma(k)).abs() <= c1 + 1e-12);
        prop_assert!(r.sigma(k) <= c2 * k as f64 + 1e-12);
        prop_assert_eq!(r.sigma(0), 0.0);
    }

    #[test]
    fn short_runs_are_reproducible(seed in 0u64..1000) {
        let p = params(0.7, 0.5);
        let c = init_poisson(&p, &mut stream(seed, 0)).unwrap();
        let (a, ca) = run(&p, &c, &mut stream(seed, 1)).unwrap();
        let (b, cb) = run(&p, &c, &mut stream(seed, 1)).unwrap();
        prop_assert_eq!(a.final_total, b.final_total);
        prop_assert_eq!(ca, cb);
        prop_assert!(ca.integrated_count_at_origin >= 0.0);
    }
}
