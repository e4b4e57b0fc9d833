use mlos_core::tuner::{sample_params, tune, SearchSpace, TrialParams};
use proptest::prelude::*;

fn bumpy(p: &TrialParams) -> f64 {
    let x = (p.delta * 7.3).sin().abs() * 0.5;
    let y = ((p.tau as f64) / 37.0).cos().abs() * 0.3;
    let z = 0.2 / p.alpha as f64;
    x + y + z
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn best_objective_grows_with_budget(seed in any::<u64>(), b1 in 1usize..60, extra in 0usize..60) {
        let space = SearchSpace::openmax(54);
        let small = tune(|p| Ok::<_, String>(bumpy(p)), &space, b1, seed).unwrap();
        let large = tune(|p| Ok::<_, String>(bumpy(p)), &space, b1 + extra, seed).unwrap();
        prop_assert!(large.best.objective >= small.best.objective);
        prop_assert_eq!(&large.trials[..b1], &small.trials[..]);
    }

    #[test]
    fn samples_stay_in_space(seed in any::<u64>(), n in 1usize..80, hi_tau in 5usize..300, n_classes in 1usize..100) {
        let space = SearchSpace { tau: (5, hi_tau), ..SearchSpace::openmax(n_classes) };
        for p in sample_params(&space, n, seed) {
            prop_assert!(space.contains(&p), "{p:?}");
        }
        let res = tune(|p| Ok::<_, String>(bumpy(p)), &space, n, seed).unwrap();
        prop_assert!(space.contains(&res.best.params));
    }
}
