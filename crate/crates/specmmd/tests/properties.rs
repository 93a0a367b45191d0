//! Property tests for the structural invariants that hold for any input.

use ndarray::Array2;
use proptest::prelude::*;
use specmmd::kernel::{gram, median_heuristic, pairwise_sq_dists, KernelSpec, TwoSample};
use specmmd::resample::{p_value, CalibMethod, CalibrationDraws};
use specmmd::spectral::top_eigenpairs;
use specmmd::statistic::truncated_unbiased;

fn finite_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    proptest::collection::vec(-50.0f64..50.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).expect("shape"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pairwise_distances_match_loop_oracle(
        z in (2usize..9, 1usize..5).prop_flat_map(|(n, d)| finite_matrix(n, d))
    ) {
        let d = pairwise_sq_dists(z.view()).unwrap();
        let n = z.nrows();
        for i in 0..n {
            prop_assert_eq!(d[[i, i]], 0.0);
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..z.ncols() {
                    let diff = z[[i, k]] - z[[j, k]];
                    acc += diff * diff;
                }
                prop_assert!((d[[i, j]] - acc).abs() < 1e-8);
                prop_assert!((d[[i, j]] - d[[j, i]]).abs() == 0.0);
            }
        }
    }

    #[test]
    fn median_heuristic_invariant_under_row_shuffle(
        z in finite_matrix(7, 2),
        order in Just(()).prop_perturb(|_, mut rng| {
            let mut idx: Vec<usize> = (0..7).collect();
            for i in (1..7).rev() {
                let j = (rng.next_u64() % (i as u64 + 1)) as usize;
                idx.swap(i, j);
            }
            idx
        })
    ) {
        let base = median_heuristic(z.view());
        let mut shuffled = Array2::zeros((7, 2));
        for (dst, &src) in order.iter().enumerate() {
            shuffled.row_mut(dst).assign(&z.row(src));
        }
        let permuted = median_heuristic(shuffled.view());
        match (base, permuted) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0)),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "divergent outcomes: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn p_value_bounds_and_monotonicity(
        mut draws in proptest::collection::vec(-10.0f64..10.0, 1..200),
        obs_a in -12.0f64..12.0,
        obs_b in -12.0f64..12.0,
    ) {
        draws.sort_unstable_by(f64::total_cmp);
        let b = draws.len();
        let cal = CalibrationDraws { method: CalibMethod::Mb1, draws };
        let pa = p_value(obs_a, &cal).unwrap();
        let pb = p_value(obs_b, &cal).unwrap();
        prop_assert!(pa >= 1.0 / (b as f64 + 1.0) && pa <= 1.0);
        if obs_a <= obs_b {
            prop_assert!(pa >= pb);
        }
    }

    #[test]
    fn statistic_invariant_under_within_block_reordering(
        x in finite_matrix(5, 2),
        y in finite_matrix(4, 2),
        swap in (0usize..5, 0usize..5),
    ) {
        let sample = match TwoSample::new(x.clone(), y.clone()) {
            Ok(s) => s,
            Err(_) => return Ok(()),
        };
        let spec = KernelSpec::new(1.0).unwrap();
        let k = match gram(&sample, &spec) { Ok(k) => k, Err(_) => return Ok(()) };
        let basis = match top_eigenpairs(&k, 2) { Ok(b) => b, Err(_) => return Ok(()) };
        let t = truncated_unbiased(&basis, &sample).unwrap();

        let mut x2 = x.clone();
        if swap.0 != swap.1 {
            let row_a = x.row(swap.0).to_owned();
            let row_b = x.row(swap.1).to_owned();
            x2.row_mut(swap.0).assign(&row_b);
            x2.row_mut(swap.1).assign(&row_a);
        }
        let sample2 = TwoSample::new(x2, y).unwrap();
        let k2 = match gram(&sample2, &spec) { Ok(k) => k, Err(_) => return Ok(()) };
        let basis2 = match top_eigenpairs(&k2, 2) { Ok(b) => b, Err(_) => return Ok(()) };
        let t2 = truncated_unbiased(&basis2, &sample2).unwrap();
        prop_assert!((t - t2).abs() <= 1e-10 * (1.0 + t.abs()), "{t} vs {t2}");
    }
}
