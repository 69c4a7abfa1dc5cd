//! Integration checks of the audit procedures on small instances.

use oraclepriv::audit::{
    continuous_privacy_audit, dual_norm_complexity, gaussian_complexity_estimate, laplace_shift_ratio, norm_comparison_check,
    norm_comparison_slack, psi_coupling_test, psi_map, rrspm_privacy_audit, rrspm_worst_instance, worst_case_neighbor, NeighborPair, RrspmMechanism, Verdict,
};
use oraclepriv::dists::BaseDist;
use oraclepriv::learners::{ftrl_fbar, RrspmNoise};
use oraclepriv::mech::{calibrate_gamma, perturb_with_noise, sample_laplace, sample_noise, NoiseSpec, PrivacyBudget};
use oraclepriv::oracle::{LossKind, SolverOptions};
use oraclepriv::seed;
use oraclepriv::{anchor_augment, empirical_distance, evaluate_on, FeaturePoint, FunctionClassDesc, LabeledDataset, Predictor, PublicSample, Task};
use proptest::prelude::*;
use rand::Rng;

fn scalar_data(xs: &[(f64, f64)]) -> LabeledDataset {
    LabeledDataset::new(xs.iter().map(|&(x, y)| (FeaturePoint::scalar(x), y)).collect(), Task::Classification).unwrap()
}

fn random_2d<R: Rng>(rng: &mut R) -> FeaturePoint {
    FeaturePoint::new(vec![rng.random(), rng.random()]).unwrap()
}

#[test]
fn psi_coupling_threshold_random_pairs() {
    let class = FunctionClassDesc::threshold1d();
    for s in 0..10u64 {
        let mut rng = seed::stream(s);
        let d = scalar_data(&(0..5).map(|_| (rng.random::<f64>(), f64::from(u8::from(rng.random::<bool>())))).collect::<Vec<_>>());
        let public = PublicSample::from_scalars(&[rng.random(), rng.random()]).unwrap();
        let ytilde = [rng.random::<bool>(), rng.random::<bool>()];
        let cands: Vec<_> = [0.0, 0.33, 0.66, 1.0]
            .iter()
            .flat_map(|&x| [(FeaturePoint::scalar(x), 0.0), (FeaturePoint::scalar(x), 1.0)])
            .collect();
        let worst = worst_case_neighbor(&d, &public, &class, &cands).unwrap();
        let random = NeighborPair::swap(&d, rng.random_range(0..5), FeaturePoint::scalar(rng.random()), 1.0 - d.points()[0].1).unwrap();
        for pair in [worst, random] {
            let r = psi_coupling_test(&pair, &public, &ytilde, &class, 1.0, 2000, s).unwrap();
            assert_eq!(r.verdict, Verdict::Pass, "seed {s}: {} violations", r.estimate);
        }
    }
}

#[test]
fn psi_coupling_halfspace_plane() {
    let class = FunctionClassDesc::halfspace(2).unwrap();
    for s in 0..5u64 {
        let mut rng = seed::stream(100 + s);
        let d = LabeledDataset::new(
            (0..6).map(|_| (random_2d(&mut rng), f64::from(u8::from(rng.random::<bool>())))).collect(),
            Task::Classification,
        )
        .unwrap();
        let public = PublicSample::new((0..3).map(|_| random_2d(&mut rng)).collect()).unwrap();
        let ytilde: Vec<bool> = (0..3).map(|_| rng.random()).collect();
        let cands: Vec<_> = (0..4).map(|_| (random_2d(&mut rng), f64::from(u8::from(rng.random::<bool>())))).collect();
        let pair = worst_case_neighbor(&d, &public, &class, &cands).unwrap();
        let r = psi_coupling_test(&pair, &public, &ytilde, &class, 0.5, 2000, s).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "seed {s}: {} violations", r.estimate);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn laplace_shift_ratio_is_at_most_e_epsilon(
        seed_val in any::<u64>(),
        m in 1usize..10,
        eps in 0.05f64..4.0,
        bits in any::<u32>(),
    ) {
        let scale = 2.0 * m as f64 / eps;
        let mut rng = seed::stream(seed_val);
        let xi: Vec<f64> = (0..m).map(|_| sample_laplace(scale, &mut rng)).collect();
        let labeling: Vec<bool> = (0..m).map(|i| bits >> i & 1 == 1).collect();
        let ytilde: Vec<bool> = (0..m).map(|i| bits >> (i + 10) & 1 == 1).collect();
        let shifted = psi_map(&xi, &labeling, &ytilde).unwrap();
        let r = laplace_shift_ratio(&xi, &shifted, scale).unwrap();
        prop_assert!(r <= eps.exp() * (1.0 + 1e-12));
        prop_assert!(r >= (-eps).exp() * (1.0 - 1e-12));
    }
}

fn rrspm_instance() -> (LabeledDataset, PublicSample, Vec<bool>) {
    let d = scalar_data(&[(0.1, 0.0), (0.3, 0.0), (0.45, 1.0), (0.7, 1.0), (0.9, 1.0)]);
    let public = PublicSample::from_scalars(&[0.2, 0.5, 0.8]).unwrap();
    (d, public, vec![false, true, true])
}

#[test]
fn rrspm_frequencies_sum_to_one_and_small_epsilon_passes() {
    let (d, public, ytilde) = rrspm_instance();
    let class = FunctionClassDesc::threshold1d();
    let cands = vec![(FeaturePoint::scalar(0.0), 1.0), (FeaturePoint::scalar(1.0), 0.0), (FeaturePoint::scalar(0.6), 0.0)];
    let pair = worst_case_neighbor(&d, &public, &class, &cands).unwrap();
    let budget = PrivacyBudget::pure(0.1).unwrap();
    let mech = RrspmMechanism { noise: RrspmNoise::Laplace, calibration: budget };
    let (report, freqs) = rrspm_privacy_audit(&pair, &public, &ytilde, &class, &mech, &budget, 1_000_000, 200, 1).unwrap();
    assert_eq!(freqs.counts_d.iter().sum::<u64>(), freqs.trials);
    assert_eq!(freqs.counts_dprime.iter().sum::<u64>(), freqs.trials);
    assert_eq!(freqs.labelings.len(), 4);
    assert_eq!(report.verdict, Verdict::Pass, "{report:?}");
}

#[test]
fn rrspm_identical_pair_ratio_interval_contains_one() {
    let (d, public, ytilde) = rrspm_instance();
    let class = FunctionClassDesc::threshold1d();
    let budget = PrivacyBudget::pure(1.0).unwrap();
    let mech = RrspmMechanism { noise: RrspmNoise::Laplace, calibration: budget };
    let (report, _) = rrspm_privacy_audit(&NeighborPair::degenerate(d), &public, &ytilde, &class, &mech, &PrivacyBudget::pure(1e-6).unwrap(), 20_000, 200, 2).unwrap();
    assert!(report.ci_low <= 1.0 && 1.0 <= report.ci_high, "{report:?}");
}

#[test]
fn rrspm_pilot_worst_case_is_a_neighbor_and_still_private() {
    // All-negative data leaves room for the largest cost swings between labelings.
    let d = scalar_data(&[(0.5, 0.0), (0.5, 0.0), (0.5, 0.0), (0.9, 0.0)]);
    let public = PublicSample::from_scalars(&[0.3, 0.7]).unwrap();
    let class = FunctionClassDesc::threshold1d();
    let budget = PrivacyBudget::pure(1.0).unwrap();
    let mech = RrspmMechanism { noise: RrspmNoise::Laplace, calibration: budget };
    let cands: Vec<_> = (0..=10).flat_map(|i| [(FeaturePoint::scalar(i as f64 / 10.0), 0.0), (FeaturePoint::scalar(i as f64 / 10.0), 1.0)]).collect();
    let (pair, ytilde) = rrspm_worst_instance(&d, &public, &class, &cands, &mech, &budget, 20_000, 20, 5).unwrap();
    assert_eq!(ytilde.len(), 2);
    assert_eq!(pair.d, d);
    let differing = pair.d.points().iter().zip(pair.dprime.points()).filter(|(a, b)| a != b).count();
    assert_eq!(differing, 1);
    let (r, _) = rrspm_privacy_audit(&pair, &public, &ytilde, &class, &mech, &budget, 200_000, 200, 6).unwrap();
    assert_eq!(r.verdict, Verdict::Pass, "{r:?}");

    let wide = PublicSample::from_scalars(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]).unwrap();
    assert!(rrspm_worst_instance(&d, &wide, &class, &cands, &mech, &budget, 10, 1, 5).is_err());
}

#[test]
fn linear_ball_complexity_agrees_with_dual_norm() {
    let mut rng = seed::stream(4);
    let public = anchor_augment(
        &PublicSample::new(
            (0..10)
                .map(|_| {
                    let p = [rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7)];
                    FeaturePoint::new(p.to_vec()).unwrap()
                })
                .collect(),
        )
        .unwrap(),
        0.3,
    )
    .unwrap();
    let class = FunctionClassDesc::linear_ball(2).unwrap();
    let a = gaussian_complexity_estimate(&class, &public, 300, 9, &SolverOptions::default()).unwrap();
    let b = dual_norm_complexity(&public, 300, 9).unwrap();
    // Same paths, so the estimates differ only by solver error.
    assert!((a.estimate - b.estimate).abs() <= 2e-6, "{a:?} {b:?}");
    assert!(a.ci_low <= b.ci_high && b.ci_low <= a.ci_high);
    assert_eq!(a.verdict, Verdict::Pass);
}

#[test]
fn norm_comparison_slack_decreases_and_check_passes() {
    let mut last = f64::INFINITY;
    for m in [4, 16, 64, 256] {
        let s = norm_comparison_slack(1.5, m, 0.05);
        assert!(s < last);
        last = s;
    }
    let class = FunctionClassDesc::threshold1d();
    let mut freq = Vec::new();
    for m in [8, 32] {
        let r = norm_comparison_check(&class, &BaseDist::UniformInterval, m, 200, 0.05, 3, &SolverOptions::default()).unwrap();
        assert_ne!(r.verdict, Verdict::Fail, "{r:?}");
        freq.push(r.estimate);
    }
    assert!(freq[1] <= freq[0] + 0.05, "{freq:?}");
}

fn ftrl_pair() -> (NeighborPair, PublicSample) {
    let mut rng = seed::stream(21);
    let mut pt = || loop {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        if x[0] * x[0] + x[1] * x[1] <= 1.0 {
            break FeaturePoint::new(x.to_vec()).unwrap();
        }
    };
    let d = LabeledDataset::new((0..25).map(|i| (pt(), if i % 2 == 0 { 0.5 } else { -0.5 })).collect(), Task::Regression).unwrap();
    let public = PublicSample::new(vec![pt(), pt()]).unwrap();
    let pair = NeighborPair::swap(&d, 0, FeaturePoint::new(vec![0.9, 0.0]).unwrap(), -1.0).unwrap();
    (pair, public)
}

#[test]
fn continuous_audit_of_huge_noise_contains_zero() {
    let (pair, public) = ftrl_pair();
    let class = FunctionClassDesc::linear_ball(2).unwrap();
    let opts = SolverOptions::default();
    let fd = ftrl_fbar(&pair.d, &public, &class, LossKind::Squared, 4.0, &opts).unwrap().0;
    let fdp = ftrl_fbar(&pair.dprime, &public, &class, LossKind::Squared, 4.0, &opts).unwrap().0;
    let learner = |gamma: f64| {
        let (fd, fdp, public, class, pair) = (&fd, &fdp, &public, &class, &pair);
        move |d: &LabeledDataset, s: u64| {
            let f = if d == &pair.d { fd } else { fdp };
            let z = sample_noise(NoiseSpec::GaussianStd, 2, &mut seed::stream(s))?;
            Ok(perturb_with_noise(f, &z, gamma, public, class, &SolverOptions::default())?.fhat_public_values)
        }
    };
    let budget = PrivacyBudget::new(1.0, 1e-3).unwrap();
    let r = continuous_privacy_audit(learner(1e3), &pair, 8, 4000, &budget, 100, 5).unwrap();
    assert!(r.ci_low <= 0.0 && 0.0 <= r.ci_high, "{r:?}");
    let same = NeighborPair::degenerate(pair.d.clone());
    let r = continuous_privacy_audit(learner(0.3), &same, 8, 4000, &budget, 100, 6).unwrap();
    assert!(r.ci_low <= 0.0 && 0.0 <= r.ci_high, "{r:?}");
}

#[test]
fn continuous_audit_of_calibrated_ftrl_stays_below_epsilon() {
    let (pair, public) = ftrl_pair();
    let class = FunctionClassDesc::linear_ball(2).unwrap();
    let opts = SolverOptions::default();
    let eta = 4.0;
    let fd = ftrl_fbar(&pair.d, &public, &class, LossKind::Squared, eta, &opts).unwrap().0;
    let fdp = ftrl_fbar(&pair.dprime, &public, &class, LossKind::Squared, eta, &opts).unwrap().0;
    let rho = 2.0 / (eta * 25.0f64).sqrt();
    let actual = empirical_distance(&evaluate_on(&fd, public.points()).unwrap(), &evaluate_on(&fdp, public.points()).unwrap()).unwrap();
    assert!(actual <= rho);
    let budget = PrivacyBudget::new(1.0, 1e-3).unwrap();
    let gamma = calibrate_gamma(2, rho, budget.epsilon, budget.delta, NoiseSpec::GaussianStd).unwrap();
    let learner = |d: &LabeledDataset, s: u64| {
        let f = if d == &pair.d { &fd } else { &fdp };
        let z = sample_noise(NoiseSpec::GaussianStd, 2, &mut seed::stream(s))?;
        Ok(perturb_with_noise(f, &z, gamma, &public, &class, &SolverOptions::default())?.fhat_public_values)
    };
    let r = continuous_privacy_audit(learner, &pair, 4, 20_000, &budget, 500, 7).unwrap();
    assert!(r.ci_high <= budget.epsilon, "{r:?}");
}

#[test]
fn gaussian_perturbation_of_thresholds_at_calibrated_gamma() {
    // Two thresholds that differ on one of four public points.
    let public = PublicSample::from_scalars(&[0.1, 0.4, 0.6, 0.9]).unwrap();
    let class = FunctionClassDesc::threshold1d();
    let f = Predictor::threshold(0.5);
    let g = Predictor::threshold(0.3);
    let rho = empirical_distance(&evaluate_on(&f, public.points()).unwrap(), &evaluate_on(&g, public.points()).unwrap()).unwrap();
    let budget = PrivacyBudget::new(1.0, 1e-2).unwrap();
    let gamma = calibrate_gamma(4, rho, budget.epsilon, budget.delta, NoiseSpec::GaussianStd).unwrap();
    let d = scalar_data(&[(0.2, 0.0)]);
    let pair = NeighborPair::swap(&d, 0, FeaturePoint::scalar(0.8), 1.0).unwrap();
    let learner = |data: &LabeledDataset, s: u64| {
        let fb = if data == &pair.d { &f } else { &g };
        let z = sample_noise(NoiseSpec::GaussianStd, 4, &mut seed::stream(s))?;
        Ok(perturb_with_noise(fb, &z, gamma, &public, &class, &SolverOptions::default())?.fhat_public_values)
    };
    let r = continuous_privacy_audit(learner, &pair, 2, 1_000_000, &budget, 1000, 8).unwrap();
    assert!(r.ci_high <= budget.epsilon, "{r:?}");
}
