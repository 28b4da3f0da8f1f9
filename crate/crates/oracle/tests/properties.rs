use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sketchrec_oracle::generators::{
    feasible_system, gaussian, perturbed_projector, planted_spectrum, projector_difference, random_orthonormal,
    rotated_projector,
};
use sketchrec_oracle::{
    check_bound_transfer, check_near_projector, check_system_solution, ell, exact_svd, nearest_a_sigma_eta,
    BoundTransfer,
};

fn spectrum(rng: &mut ChaCha8Rng, r: usize) -> Vec<f64> {
    let mut s: Vec<f64> = (0..r).map(|_| rng.random_range(0.1..5.0)).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn checked(result: BoundTransfer) -> Option<(f64, f64)> {
    match result {
        BoundTransfer::Checked { lhs, rhs, .. } => Some((lhs, rhs)),
        BoundTransfer::Skipped(_) => None,
    }
}

#[test]
fn rotation_sweep_transfers() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = planted_spectrum(12, 10, &[4.0, 3.0, 2.5, 1.0, 0.5], &mut rng);
    let svd = exact_svd(&a);
    let k = 3;
    let (sk2, sk12) = (svd.sigma[k - 1].powi(2), svd.sigma[k].powi(2));
    for step in 0..=20 {
        let theta = step as f64 * std::f64::consts::FRAC_PI_2 / 20.0;
        let pi = rotated_projector(&svd, k, theta);
        let deficit = svd.sigma[..k].iter().map(|s| s * s).sum::<f64>() - (&a * &pi).norm_squared();
        assert!((deficit - theta.sin().powi(2) * (sk2 - sk12)).abs() < 1e-9);
        let eps = deficit / sk2 + 1e-12;
        if eps > 1.0 {
            continue;
        }
        for eta in [eps.max(0.05), 0.5, 1.0] {
            if eta < eps {
                continue;
            }
            let (lhs, rhs) = checked(check_bound_transfer(&a, &pi, eps, eta).unwrap()).expect("premise holds");
            assert!(lhs <= rhs, "theta {theta}: {lhs} > {rhs}");
        }
    }
}

#[test]
fn premise_failure_is_skipped() {
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.0]));
    let svd = exact_svd(&a);
    let wrong = rotated_projector(&svd, 1, std::f64::consts::FRAC_PI_2);
    assert_eq!(check_bound_transfer(&a, &wrong, 0.01, 0.5).unwrap().holds(), None);
    assert_eq!(check_bound_transfer(&a, &svd.top_projector(1), 0.6, 0.5).unwrap().holds(), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_and_sorts(m in 1usize..30, n in 1usize..30, seed in any::<u64>()) {
        let a = gaussian(m, n, &mut ChaCha8Rng::seed_from_u64(seed));
        let svd = exact_svd(&a);
        prop_assert!((svd.reconstruct() - &a).norm() <= 1e-8);
        prop_assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
    }

    /// The fitted member is at least as close as any other projector member.
    #[test]
    fn family_fit_beats_other_members(seed in any::<u64>(), eta in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(4..16);
        let s = spectrum(&mut rng, n.min(8));
        let a = planted_spectrum(n + 2, n, &s, &mut rng);
        let m = &a + gaussian(n + 2, n, &mut rng) * rng.random_range(0.0..1.0);
        let sigma = rng.random_range(0.2..4.0);
        let fit = nearest_a_sigma_eta(&a, sigma, eta, &m).unwrap();
        prop_assert!(((&a * &fit.projector) - &fit.witness).norm() < 1e-9);

        let svd = exact_svd(&a);
        let hi = ell(&svd.sigma, sigma * (1.0 + eta));
        let mid = ell(&svd.sigma, sigma * (1.0 - eta)) - hi;
        let vh = svd.v.columns(0, hi);
        let base = &vh * vh.transpose();
        let mut members = vec![base.clone()];
        if mid > 0 {
            let vm = svd.v.columns(hi, mid).clone_owned();
            members.push(&base + &vm * vm.transpose());
            for _ in 0..5 {
                let q = random_orthonormal(mid, rng.random_range(1..=mid), &mut rng);
                let basis = &vm * q;
                members.push(&base + &basis * basis.transpose());
            }
        }
        for p in members {
            prop_assert!(fit.distance <= (&m - &a * p).norm() + 1e-9);
        }
    }

    #[test]
    fn near_projector_bound_on_symmetric_inputs(seed in any::<u64>(), n in 1usize..20, scale in 0.0f64..1.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gaussian(n, n, &mut rng);
        let r = check_near_projector(&((&g + g.transpose()) * scale)).unwrap();
        prop_assert!(r.holds(), "{} > {}", r.distance, r.bound);
        prop_assert!((r.projector.clone() * &r.projector - &r.projector).norm() < 1e-9);
    }

    #[test]
    fn near_projector_bound_on_projector_differences(seed in any::<u64>(), n in 2usize..16) {
        let d = projector_difference(n, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(check_near_projector(&d).unwrap().holds());
    }

    #[test]
    fn perturbed_projectors_transfer(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(4..20);
        let r = rng.random_range(2..=n.min(7));
        let a = planted_spectrum(n + 3, n, &spectrum(&mut rng, r), &mut rng);
        let svd = exact_svd(&a);
        let k = rng.random_range(1..r);
        let pi = perturbed_projector(&svd, k, rng.random_range(0.0..0.2), &mut rng);
        let sk2 = svd.sigma[k - 1].powi(2);
        let deficit = svd.sigma[..k].iter().map(|s| s * s).sum::<f64>() - (&a * &pi).norm_squared();
        let eps = (deficit / sk2).max(0.0) + 1e-12;
        prop_assume!(eps <= 1.0);
        let eta = rng.random_range(eps..=1.0);
        if let Some((lhs, rhs)) = checked(check_bound_transfer(&a, &pi, eps, eta).unwrap()) {
            prop_assert!(lhs <= rhs);
        }
    }

    #[test]
    fn feasible_systems_satisfy_all_four(seed in any::<u64>()) {
        let (sigma, a, k, eps, eta) = feasible_system(&mut ChaCha8Rng::seed_from_u64(seed));
        for q in check_system_solution(&sigma, &a, k, eps, eta).unwrap() {
            prop_assert!(q.holds(), "{} > {}", q.lhs, q.rhs);
        }
    }
}
