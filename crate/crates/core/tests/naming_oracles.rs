use emcom::naming::{Fault, Learning};
use emcom::prob::tv_distance;
use emcom::verify::{
    check_detailed_balance, check_stationary, compose, cycle_kernel, exchange_kernel,
    exchange_target, object_sign_posterior, perception_exchange_kernel, perception_site_kernels,
    random_frozen_instance, FrozenInstance,
};

fn instance(seed: u64, m: usize, c: usize) -> FrozenInstance {
    random_frozen_instance(seed, m, c, 3, 3, 2).unwrap()
}

#[test]
fn frozen_exchange_kernels_are_mh() {
    for seed in 0..12 {
        let inst = instance(seed, 2 + (seed as usize % 3), 2 + (seed as usize % 2));
        let state = inst.state(Learning::Frozen, Fault::None).unwrap();
        for d in 0..3 {
            let target = exchange_target(&state, 0, 1, d).unwrap();
            for (sp, li) in [(0, 1), (1, 0)] {
                let k = exchange_kernel(&state, sp, li, d).unwrap();
                assert!(check_detailed_balance(&k, &target).unwrap() < 1e-10);
            }
            let cycle = cycle_kernel(&state, 0, 1, d).unwrap();
            let check = check_stationary(&cycle, &target).unwrap();
            assert!(check.tv_to_target < 1e-10, "{check:?}");
            assert!(check.method_gap < 1e-10);
        }
    }
}

#[test]
fn perception_inclusive_kernel_targets_the_sign_posterior() {
    for seed in 0..6 {
        let inst = instance(100 + seed, 3, 2);
        let state = inst.state(Learning::Frozen, Fault::None).unwrap();
        for d in 0..3 {
            let post = object_sign_posterior(&inst.dataset, &inst.models, &inst.prior, d).unwrap();
            let k = perception_exchange_kernel(&state, 0, 1, d).unwrap();
            let check = check_stationary(&k, &post).unwrap();
            assert!(check.tv_to_target < 1e-10, "{check:?}");
        }
    }
}

#[test]
fn live_counts_leave_the_object_out() {
    for seed in 0..4 {
        let inst = instance(200 + seed, 2, 2);
        let state = inst.state(Learning::Gibbs, Fault::None).unwrap();
        let target = exchange_target(&state, 0, 1, 1).unwrap();
        let k = exchange_kernel(&state, 0, 1, 1).unwrap();
        assert!(check_detailed_balance(&k, &target).unwrap() < 1e-10);

        let (sites, target) = perception_site_kernels(&state, 0).unwrap();
        for s in &sites {
            assert!(check_detailed_balance(s, &target).unwrap() < 1e-10);
        }
        let sweep = compose(&sites).unwrap();
        assert!(check_stationary(&sweep, &target).unwrap().tv_to_target < 1e-10);
    }
}

#[test]
fn seeded_faults_are_detected() {
    let inst = instance(7, 3, 2);

    let sq = inst.state(Learning::Frozen, Fault::SquaredAcceptance).unwrap();
    let target = exchange_target(&sq, 0, 1, 0).unwrap();
    let k = exchange_kernel(&sq, 0, 1, 0).unwrap();
    assert!(check_detailed_balance(&k, &target).unwrap() > 1e-3);

    let uni = inst.state(Learning::Frozen, Fault::UniformProposal).unwrap();
    let target = exchange_target(&uni, 0, 1, 0).unwrap();
    let k = cycle_kernel(&uni, 0, 1, 0).unwrap();
    let fixed = check_stationary(&k, &target).unwrap();
    assert!(tv_distance(&fixed.power, &target.probs()) > 1e-3);

    let loo = inst.state(Learning::Gibbs, Fault::NoLeaveOneOut).unwrap();
    let (sites, target) = perception_site_kernels(&loo, 0).unwrap();
    let worst = sites
        .iter()
        .map(|s| check_detailed_balance(s, &target).unwrap())
        .fold(0.0, f64::max);
    assert!(worst > 1e-3, "{worst}");
}
