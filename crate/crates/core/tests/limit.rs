use std::f64::consts::PI;

use brw_occupation::limit::{
    gram_matrix, limit_coefficient, min_eigenvalue, representation_discrepancy, sample_paths,
    subfbm_representation_check, LimitCovariance, LimitModel, RateDescriptor, JITTER_CAP,
};
use brw_occupation::numerics::{integrate_breaks, Tolerance};
use brw_occupation::occupation::sample_moments;
use brw_occupation::rng::stream;
use brw_occupation::walk::{CovMatrix, InitialLaw, WalkAnalytics, WalkKernel};
use brw_occupation::Error;
use proptest::prelude::*;

fn q(d: usize) -> CovMatrix {
    WalkKernel::simple(d).covariance().unwrap()
}

fn independent() -> RateDescriptor {
    RateDescriptor::Independent { rho: 1.0 }
}

#[test]
fn d3_coefficients_for_srw() {
    let k = 2f64.sqrt() / (3.0 * PI.powf(1.5)) * 27f64.sqrt();
    let eq = limit_coefficient(3, 1.0, independent(), InitialLaw::Equilibrium, &q(3), None).unwrap();
    assert!(matches!(eq.model, LimitModel::Fbm34 { .. }));
    assert!((eq.coefficient() - k).abs() < 1e-14);
    let po = limit_coefficient(3, 1.0, independent(), InitialLaw::Poisson, &q(3), None).unwrap();
    assert!(matches!(po.model, LimitModel::SubFbm34 { .. }));
    assert!((po.coefficient() - 2.0 * k).abs() < 1e-14);
    assert!((po.cov(1.0, 1.0) - 0.515371).abs() < 1e-6);
    let prov = eq.provenance.unwrap();
    assert!((prov.det_q - 1.0 / 27.0).abs() < 1e-16);
    assert_eq!(prov.sigma_eq, 1.0);
}

#[test]
fn coefficient_vanishes_with_the_intensity() {
    let small = limit_coefficient(3, 1e-9, independent(), InitialLaw::Equilibrium, &q(3), None).unwrap();
    assert!(small.coefficient() < 1e-9);
    let d4 = limit_coefficient(4, 1e-9, independent(), InitialLaw::Poisson, &q(4), None).unwrap();
    assert!(d4.coefficient() < 1e-9);
}

#[test]
fn d4_coefficient_is_the_gaussian_constant() {
    let b = limit_coefficient(4, 2.0, independent(), InitialLaw::Poisson, &q(4), None).unwrap();
    let expected = (2.0 * PI).powi(-2) * 16.0 * 2.0;
    assert!((b.coefficient() - expected).abs() < 1e-14);
    assert_eq!(b.scaling_index(), 1.0);
}

/// d = 5: D against an independent evaluation of both walk integrals with a
/// doubled cutoff and an explicit local-CLT tail.
#[test]
fn d5_coefficient_against_independent_quadrature() {
    let walk = WalkAnalytics::new(WalkKernel::simple(5)).unwrap();
    let integrals = walk.walk_integrals(1e-8).unwrap();
    let lim = limit_coefficient(5, 1.0, independent(), InitialLaw::Poisson, walk.cov(), Some(&integrals)).unwrap();

    let cut = 800.0;
    let g = walk.green_values(&[0; 5], 0.0, cut, 1e-9).unwrap();
    let mut f = |u: f64| Ok(u * walk.return_probability(u, 1e-16)?);
    let breaks = [0.0, 1.0, 4.0, 16.0, 64.0, 256.0, cut];
    let head = integrate_breaks(&mut f, &breaks, Tolerance::absolute(1e-10)).unwrap();
    // int_cut^inf u (2 pi u)^{-5/2} (det Q)^{-1/2} du = 2 c / sqrt(cut).
    let c = (2.0 * PI).powf(-2.5) / walk.cov().det().sqrt();
    let m1 = head.value + 2.0 * c / cut.sqrt();
    let oracle = 2.0 * g.value + m1;
    let bound = 2.0 * integrals.green.error + integrals.first_moment.error + 2.0 * g.error + 1e-3 * m1;
    assert!((lim.coefficient() - oracle).abs() <= bound, "{} vs {oracle} (bound {bound})", lim.coefficient());
}

#[test]
fn unsupported_and_invalid_inputs() {
    assert_eq!(
        limit_coefficient(2, 1.0, independent(), InitialLaw::Poisson, &q(2), None).unwrap_err(),
        Error::UnsupportedDimension(2)
    );
    assert!(limit_coefficient(5, 1.0, independent(), InitialLaw::Poisson, &q(5), None).is_err());
    assert!(limit_coefficient(3, 1.0, independent(), InitialLaw::Poisson, &q(4), None).is_err());
    assert!(limit_coefficient(3, 0.0, independent(), InitialLaw::Poisson, &q(3), None).is_err());
}

#[test]
fn covariance_examples() {
    let k = 0.8;
    let t: f64 = 2.5;
    let sub = LimitCovariance::subfbm34(k);
    assert!((sub.cov(t, t) - k * (2.0 - 2f64.sqrt()) * t.powf(1.5)).abs() < 1e-13);
    let fbm = LimitCovariance::fbm34(k);
    assert!((fbm.cov(t, t) - 2.0 * k * t.powf(1.5)).abs() < 1e-13);
    assert_eq!(LimitCovariance::bm(1.7).cov(2.0, 3.0), 2.0 * 1.7);
}

#[test]
#[should_panic]
fn negative_times_panic() {
    LimitCovariance::fbm34(1.0).cov(-1.0, 1.0);
}

#[test]
fn representation_identity() {
    assert!(subfbm_representation_check(&[1.0]) <= 1e-12);
    assert!(subfbm_representation_check(&[0.5, 1.0, 2.0, 4.0]) <= 1e-12);
    assert!(representation_discrepancy(&[0.5, 1.0, 2.0, 4.0], 1.0, 1.4) > 1e-3);
}

fn empirical_check(model: &LimitCovariance, grid: &[f64], seed: u64) {
    let sampled = sample_paths(model, grid, 100_000, &mut stream(seed, 0)).unwrap();
    assert_eq!(sampled.jitter, 0.0);
    let m = sample_moments(&sampled.paths).unwrap();
    for i in 0..grid.len() {
        for j in 0..grid.len() {
            let z = (m.cov[i][j] - model.cov(grid[i], grid[j])) / m.cov_se[i][j];
            assert!(z.abs() <= 3.0, "({i},{j}) z = {z}");
        }
        let kurt = m.standardized_fourth[i].unwrap();
        assert!((2.9..=3.1).contains(&kurt), "kurtosis {kurt}");
    }
}

#[test]
fn sampler_matches_the_covariance() {
    empirical_check(&LimitCovariance::fbm34(1.0), &[1.0, 2.0], 31);
    empirical_check(&LimitCovariance::subfbm34(0.5), &[1.5], 32);
}

#[test]
fn bm_increments_are_uncorrelated() {
    let grid = [1.0, 2.0, 3.0];
    let sampled = sample_paths(&LimitCovariance::bm(2.0), &grid, 100_000, &mut stream(33, 0)).unwrap();
    let inc: Vec<Vec<f64>> = sampled.paths.iter().map(|p| vec![p[0], p[1] - p[0], p[2] - p[1]]).collect();
    let m = sample_moments(&inc).unwrap();
    for i in 0..3 {
        for j in 0..i {
            assert!((m.cov[i][j] / m.cov_se[i][j]).abs() <= 3.0);
        }
        assert!(((m.cov[i][i] - 2.0) / m.cov_se[i][i]).abs() <= 3.0);
    }
}

#[test]
fn non_psd_gram_is_rejected() {
    let err = sample_paths(&LimitCovariance::fbm34(-1.0), &[1.0, 2.0], 10, &mut stream(0, 0)).unwrap_err();
    assert!(matches!(err, Error::NotPsd { cap, .. } if cap == JITTER_CAP));
    assert!(sample_paths(&LimitCovariance::bm(1.0), &[2.0, 1.0], 10, &mut stream(0, 0)).is_err());
}

#[test]
fn serde_round_trip() {
    let lim = limit_coefficient(3, 1.0, independent(), InitialLaw::Poisson, &q(3), None).unwrap();
    let back: LimitCovariance = serde_json::from_str(&serde_json::to_string(&lim).unwrap()).unwrap();
    assert_eq!(back, lim);
}

fn models() -> impl Strategy<Value = LimitCovariance> {
    (0.01f64..5.0, 0usize..3).prop_map(|(c, kind)| match kind {
        0 => LimitCovariance::fbm34(c),
        1 => LimitCovariance::subfbm34(c),
        _ => LimitCovariance::bm(c),
    })
}

proptest! {
    #[test]
    fn covariance_is_symmetric(model in models(), s in 0.0f64..10.0, t in 0.0f64..10.0) {
        prop_assert_eq!(model.cov(s, t), model.cov(t, s));
    }

    #[test]
    fn covariance_is_self_similar(model in models(), s in 0.0f64..10.0, t in 0.0f64..10.0, a in 0.1f64..10.0) {
        let lhs = model.cov(a * s, a * t);
        let rhs = a.powf(model.scaling_index()) * model.cov(s, t);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn gram_is_psd_on_random_grids(model in models(), mut pts in prop::collection::vec(0.01f64..10.0, 6)) {
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let scale = gram_matrix(&model, &pts).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(min_eigenvalue(&model, &pts) >= -1e-10 * scale.max(1.0));
    }
}
