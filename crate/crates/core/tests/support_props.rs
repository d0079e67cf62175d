mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `(N, K, M)` small enough for the brute-force oracle.
fn small_dims() -> impl Strategy<Value = (usize, usize, u32)> {
    (1usize..=3, 1usize..=3, 1u32..=2).prop_filter("brute-force state space", |&(n, k, m)| {
        (m as u64 + 1).pow((n * k) as u32) <= 4096
    })
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn homogeneous((n, k, m) in small_dims(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = random_model(&mut r, n, k, m);
        let a = random_direction(&mut r, n);
        prop_assert_eq!(check_homogeneity(&model, &a), Ok(()));
    }

    #[test]
    fn subadditive((n, k, m) in small_dims(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = random_model(&mut r, n, k, m);
        let a = random_direction(&mut r, n);
        let b = random_direction(&mut r, n);
        prop_assert_eq!(check_subadditivity(&model, &a, &b), Ok(()));
    }

    #[test]
    fn monotone((n, k, m) in small_dims(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = random_model(&mut r, n, k, m);
        let a = random_direction(&mut r, n);
        let bump = random_direction(&mut r, n);
        prop_assert_eq!(check_monotonicity(&model, &a, &bump), Ok(()));
    }

    #[test]
    fn vertex_attains_support((n, k, m) in small_dims(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = random_model(&mut r, n, k, m);
        let a = random_direction(&mut r, n);
        prop_assert_eq!(check_vertex_consistency(&model, &a), Ok(()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matches_brute_force((n, k, m) in small_dims(), seed in any::<u64>()) {
        let model = random_model(&mut rng(seed), n, k, m);
        prop_assert_eq!(check_oracle_equivalence(&model), Ok(()));
    }

    #[test]
    fn onoff_closed_form(n in 1usize..=4, k in 1usize..=4, seed in any::<u64>()) {
        let model = random_bernoulli(&mut rng(seed), n, k);
        prop_assert_eq!(check_onoff(&model), Ok(()));
    }

    #[test]
    fn relabelling_queues_permutes_region(
        (n, k, m) in small_dims(),
        seed in any::<u64>(),
        shuffle in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let model = random_model(&mut rng(seed), n, k, m);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng(shuffle));
        prop_assert_eq!(check_permutation_invariance(&model, &perm), Ok(()));
    }

    #[test]
    fn columns_assemble_joint((n, k, m) in small_dims(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = if m == 1 && seed % 2 == 0 {
            random_bernoulli(&mut r, n, k)
        } else {
            random_factored(&mut r, n, k, m)
        };
        prop_assert_eq!(check_factorization(&model), Ok(()));
    }
}
