use lowrank::dynamics::end_to_end;
use lowrank::expand::{expand_fc, ExpansionMode, ExpansionSpec};
use lowrank::gram::{build_gram, feature_gram_rank, GramKind};
use lowrank::montecarlo::{empirical_cdf, savitzky_golay};
use lowrank::netsim::balanced_factors;
use lowrank::rng::rng_from_seed;
use lowrank::spectral::{effective_rank, matrix_effective_rank, singular_values, stable_rank, threshold_rank};
use lowrank::DenseMatrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    DenseMatrix::random_normal(rows, cols, 1.0, &mut rng_from_seed(seed))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn rank_measures_ignore_scale(rows in 1usize..12, cols in 1usize..12, seed in any::<u64>(), log_c in -6.0f64..6.0) {
        let a = matrix(rows, cols, seed);
        let c = 10f64.powf(log_c);
        let (s, t) = (singular_values(&a).unwrap(), singular_values(&a.scale(c)).unwrap());
        prop_assert!((effective_rank(&s).unwrap() - effective_rank(&t).unwrap()).abs() < 1e-10);
        prop_assert!((stable_rank(&s).unwrap() - stable_rank(&t).unwrap()).abs() < 1e-9);
        prop_assert_eq!(threshold_rank(&s, 0.1).unwrap(), threshold_rank(&t, 0.1).unwrap());
    }

    #[test]
    fn effective_rank_is_bounded_by_log_min_dimension(rows in 1usize..12, cols in 1usize..12, seed in any::<u64>()) {
        let e = matrix_effective_rank(&matrix(rows, cols, seed)).unwrap();
        prop_assert!(e >= -1e-12 && e <= (rows.min(cols) as f64).ln() + 1e-12);
    }

    #[test]
    fn product_threshold_rank_at_most_factor_ranks(n in 2usize..10, k in 1usize..6, seed in any::<u64>()) {
        let k = k.min(n);
        let a = matrix(n, k, seed).matmul(&matrix(k, n, seed ^ 1)).unwrap();
        let b = matrix(n, n, seed ^ 2);
        let rank = |m: &DenseMatrix| threshold_rank(&singular_values(m).unwrap(), 1e-9).unwrap();
        prop_assert!(rank(&a.matmul(&b).unwrap()) <= rank(&a).min(rank(&b)));
        prop_assert!(rank(&b.matmul(&a).unwrap()) <= rank(&a).min(rank(&b)));
    }

    #[test]
    fn empirical_cdf_is_monotone(samples in prop::collection::vec(-50.0f64..50.0, 2..200)) {
        prop_assume!(samples.iter().any(|x| *x != samples[0]));
        let mut s = samples.clone();
        s.sort_by(f64::total_cmp);
        let cdf = empirical_cdf(&s).unwrap();
        prop_assert!(cdf.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
        prop_assert!(cdf.iter().all(|p| (0.0..=1.0).contains(&p.1)));
        prop_assert!((cdf.last().unwrap().1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cosine_gram_ignores_feature_scaling(dim in 2usize..8, n in 2usize..10, seed in any::<u64>(), log_c in -3.0f64..3.0) {
        let f = matrix(dim, n, seed);
        let c = 10f64.powf(log_c);
        let a = feature_gram_rank(&f, GramKind::Cosine).unwrap();
        let b = feature_gram_rank(&f.scale(c), GramKind::Cosine).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn cosine_gram_is_symmetric_with_unit_diagonal(dim in 1usize..8, n in 2usize..10, seed in any::<u64>()) {
        let g = build_gram(&matrix(dim, n, seed), GramKind::Cosine).unwrap();
        let k = g.k();
        for i in 0..n {
            prop_assert!((k.row(i)[i] - 1.0).abs() < 1e-12);
            for j in 0..n {
                prop_assert_eq!(k.row(i)[j], k.row(j)[i]);
                prop_assert!(k.row(i)[j].abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn exact_expansion_round_trips(m in 1usize..10, n in 1usize..10, d in 1usize..5, seed in any::<u64>()) {
        let w = matrix(m, n, seed);
        let spec = ExpansionSpec::new(d, m.max(n), ExpansionMode::ExactBalanced).unwrap();
        let f = expand_fc(&w, &spec, seed).unwrap();
        prop_assert_eq!(f.depth(), d);
        let mut gap = end_to_end(&f);
        gap.axpy(-1.0, &w);
        prop_assert!(gap.frobenius_norm() <= 1e-10 * w.frobenius_norm());
    }

    #[test]
    fn balanced_factors_multiply_back(n in 1usize..8, d in 1usize..5, seed in any::<u64>()) {
        let w = matrix(n, n, seed);
        let fs = balanced_factors(&w, d).unwrap();
        let mut prod = fs[0].clone();
        for f in &fs[1..] {
            prod = f.matmul(&prod).unwrap();
        }
        prod.axpy(-1.0, &w);
        prop_assert!(prod.frobenius_norm() <= 1e-10 * w.frobenius_norm());
    }

    #[test]
    fn savitzky_golay_keeps_low_degree_polynomials(
        coeffs in prop::collection::vec(-3.0f64..3.0, 1..4),
        half in 2usize..6,
        len in 12usize..40,
    ) {
        let window = 2 * half + 1;
        prop_assume!(window <= len);
        let order = (coeffs.len() - 1).max(2).min(window - 1);
        let ys: Vec<f64> = (0..len)
            .map(|i| {
                let x = i as f64 / len as f64;
                coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
            })
            .collect();
        let s = savitzky_golay(&ys, window, order).unwrap();
        for (a, b) in s.iter().zip(&ys) {
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }
}
