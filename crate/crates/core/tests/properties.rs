use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spot_core::design::{lhd_with_rng, make_lhd, make_uniform, DesignControl};
use spot_core::optim::{optim_lhd, optim_local_bounded, LhdSearchControl, LocalSearchControl};
use spot_core::rsm::{fit_rsm, RsmControl};
use spot_core::spot::{ocba_allocate, ocba_targets, ConfigStats, EvalArchive};
use spot_core::surrogates::{
    fit_forest, fit_kriging, fit_stack, kernel_value, ForestControl, KrigingControl, StackControl, Surrogate, ThetaSearch,
};
use spot_core::{ParamSpace, VarType};

fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

fn bounds(d: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop::collection::vec((-50.0..50.0f64, 0.1..20.0f64), d).prop_map(|v| {
        let lower: Vec<f64> = v.iter().map(|p| p.0).collect();
        let upper: Vec<f64> = v.iter().map(|p| p.0 + p.1).collect();
        (lower, upper)
    })
}

fn var_type() -> impl Strategy<Value = VarType> {
    prop_oneof![Just(VarType::Numeric), Just(VarType::Integer), Just(VarType::Factor)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lhd_has_one_point_per_stratum(seed in any::<u64>(), n in 1usize..25, (lower, upper) in bounds(3), retries in 1usize..5) {
        let space = ParamSpace::numeric(lower.clone(), upper.clone()).unwrap();
        let control = DesignControl { size: n, retries, replicates: 1, seed };
        let out = lhd_with_rng(None, &space, &control, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(out.candidate_scores.len(), retries);
        for c in 0..3 {
            let mut seen = vec![false; n];
            for r in 0..n {
                let u = (out.raw[(r, c)] - lower[c]) / (upper[c] - lower[c]);
                let k = ((u * n as f64).floor() as usize).min(n - 1);
                prop_assert!(!seen[k]);
                seen[k] = true;
            }
        }
        let best = out.candidate_scores[out.best_index];
        prop_assert!(out.candidate_scores.iter().all(|s| *s <= best));
    }

    #[test]
    fn designs_respect_bounds_types_and_replicates(
        seed in any::<u64>(),
        n in 1usize..15,
        reps in 1usize..4,
        types in prop::collection::vec(var_type(), 1..5),
        lhd in any::<bool>(),
    ) {
        let d = types.len();
        let lower: Vec<f64> = (0..d).map(|i| -(i as f64) - 1.0).collect();
        let upper: Vec<f64> = (0..d).map(|i| 2.0 * i as f64 + 3.0).collect();
        let space = ParamSpace::new(lower.clone(), upper.clone(), types.clone()).unwrap();
        let control = DesignControl { size: n, retries: 3, replicates: reps, seed };
        let x = if lhd { make_lhd(None, &space, &control).unwrap() } else { make_uniform(None, &space, &control).unwrap() };
        prop_assert_eq!(x.shape(), (n * reps, d));
        for r in 0..x.nrows() {
            let row: Vec<f64> = x.row(r).iter().copied().collect();
            prop_assert!(space.contains(&row));
            for c in 0..d {
                if types[c].is_discrete() {
                    prop_assert_eq!(row[c].fract(), 0.0);
                }
                prop_assert_eq!(x[(r, c)], x[(r - r % reps, c)]);
            }
        }
        let again = if lhd { make_lhd(None, &space, &control).unwrap() } else { make_uniform(None, &space, &control).unwrap() };
        prop_assert_eq!(x, again);
    }

    #[test]
    fn kernel_is_symmetric_and_bounded(
        a in prop::collection::vec(-1.0..1.0f64, 3),
        b in prop::collection::vec(-1.0..1.0f64, 3),
        theta in prop::collection::vec(1e-4..1e2f64, 3),
        p in prop::collection::vec(0.5..2.0f64, 3),
        types in prop::collection::vec(var_type(), 3),
    ) {
        let k_ab = kernel_value(&a, &b, &theta, &p, &types).unwrap();
        let k_ba = kernel_value(&b, &a, &theta, &p, &types).unwrap();
        prop_assert_eq!(k_ab, k_ba);
        prop_assert!(k_ab > 0.0 && k_ab <= 1.0);
        prop_assert_eq!(kernel_value(&a, &a, &theta, &p, &types).unwrap(), 1.0);
    }

    #[test]
    fn ocba_allocations_sum_to_the_budget(
        raw in prop::collection::vec((-10.0..10.0f64, 0.0..5.0f64, 1usize..6), 2..6),
        budget in 0usize..120,
    ) {
        let stats: Vec<ConfigStats> = raw.iter().map(|&(mean, variance, count)| ConfigStats { mean, variance, count }).collect();
        let alloc = ocba_allocate(&stats, budget).unwrap();
        prop_assert_eq!(alloc.len(), stats.len());
        prop_assert_eq!(alloc.iter().sum::<usize>(), budget);
        let targets = ocba_targets(&stats, budget).unwrap();
        prop_assert_eq!(targets.iter().sum::<usize>(), budget);
    }

    #[test]
    fn archive_tracks_best_and_replicates(rows in prop::collection::vec((0u8..4, -5.0..5.0f64), 1..30)) {
        let mut a = EvalArchive::new();
        for (i, (x, y)) in rows.iter().enumerate() {
            a.push(vec![*x as f64], *y, Some(i as u64));
        }
        let trace = a.best_trace();
        prop_assert_eq!(trace.len(), rows.len());
        prop_assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        let b = a.best_index().unwrap();
        prop_assert_eq!(a.values()[b], *trace.last().unwrap());
        for (i, rep) in a.replicates().iter().enumerate() {
            let earlier = rows[..i].iter().filter(|r| r.0 == rows[i].0).count();
            prop_assert_eq!(*rep, earlier + 1);
        }
        let copy = EvalArchive::from_parts(&a.x_matrix(), &a.y_vector(), Some(a.seeds().to_vec())).unwrap();
        prop_assert_eq!(copy, a.clone());
        let total: usize = a.groups().iter().map(|g| g.1.len()).sum();
        prop_assert_eq!(total, a.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimizers_stay_inside_the_box(seed in any::<u64>(), (lower, upper) in bounds(2), evals in 1usize..60, center in prop::collection::vec(-60.0..60.0f64, 2)) {
        let fun = |x: &DMatrix<f64>| DVector::from_fn(x.nrows(), |r, _| (0..2).map(|c| (x[(r, c)] - center[c]).powi(2)).sum());
        let lhd = optim_lhd(None, &fun, &lower, &upper, &LhdSearchControl { fun_evals: evals, retries: 1, seed }).unwrap();
        let local = optim_local_bounded(None, &fun, &lower, &upper, &LocalSearchControl { fun_evals: evals, ..LocalSearchControl::default() }).unwrap();
        for res in [&lhd, &local] {
            prop_assert!(res.count <= evals);
            prop_assert_eq!(res.x.nrows(), res.count);
            for r in 0..res.x.nrows() {
                for c in 0..2 {
                    prop_assert!(res.x[(r, c)] >= lower[c] && res.x[(r, c)] <= upper[c]);
                }
            }
            prop_assert_eq!(res.ybest, res.y.min());
        }
        prop_assert!(local.ybest <= fun(&DMatrix::from_fn(1, 2, |_, c| 0.5 * (lower[c] + upper[c])))[0]);
    }

    #[test]
    fn rsm_geometry(seed in any::<u64>(), (lower, upper) in bounds(2), r in 0.05..2.0f64) {
        let x = random_matrix(15, 2, 0.0, 1.0, seed);
        let x = DMatrix::from_fn(15, 2, |i, c| lower[c] + x[(i, c)] * (upper[c] - lower[c]));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let coef: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y = DVector::from_fn(15, |i, _| {
            let (a, b) = (x[(i, 0)], x[(i, 1)]);
            coef[0] + coef[1] * a + coef[2] * b + coef[3] * a * b + coef[4] * a * a + coef[5] * b * b
        });
        let fit = fit_rsm(&x, &y, &RsmControl::default()).unwrap();
        for i in 0..15 {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let back = fit.decode(&fit.encode(&row));
            for c in 0..2 {
                prop_assert!((back[c] - row[c]).abs() <= 1e-9 * (1.0 + row[c].abs()));
            }
        }
        let pred = fit.predict_mean(&x).unwrap();
        prop_assert!((pred - &y).amax() <= 1e-6 * (1.0 + y.amax()));

        let z = fit.ridge_point(r).unwrap();
        prop_assert!((z.norm() - r).abs() < 1e-9);
        let h = 1e-6;
        let g = fit.gradient_coded(&z);
        for k in 0..2 {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[k] += h;
            zm[k] -= h;
            let fd = (fit.value_coded(&zp) - fit.value_coded(&zm)) / (2.0 * h);
            prop_assert!((fd - g[k]).abs() <= 1e-4 * (1.0 + g[k].abs()));
        }
        // ridge point beats random points on the same sphere
        for _ in 0..20 {
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let w = DVector::from_vec(vec![r * phi.cos(), r * phi.sin()]);
            prop_assert!(fit.value_coded(&z) <= fit.value_coded(&w) + 1e-9 * (1.0 + fit.value_coded(&w).abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn forest_predictions_stay_within_the_training_range(seed in any::<u64>(), n in 2usize..30, bootstrap in any::<bool>()) {
        let x = random_matrix(n, 2, -3.0, 3.0, seed);
        let y = DVector::from_fn(n, |i, _| (x[(i, 0)] * 2.0).sin() + x[(i, 1)]);
        let control = ForestControl { ntree: 40, seed, bootstrap, ..ForestControl::default() };
        let fit = fit_forest(&x, &y, &control).unwrap();
        let probe = random_matrix(50, 2, -5.0, 5.0, seed ^ 1);
        let p = fit.predict_mean(&probe).unwrap();
        prop_assert!(p.iter().all(|v| *v >= y.min() - 1e-12 && *v <= y.max() + 1e-12));
        prop_assert_eq!(fit_forest(&x, &y, &control).unwrap().predict_mean(&probe).unwrap(), p);
    }

    #[test]
    fn interpolating_kriging_reproduces_its_data(seed in any::<u64>()) {
        let x = random_matrix(8, 2, 0.0, 1.0, seed);
        let y = DVector::from_fn(8, |i, _| (3.0 * x[(i, 0)]).sin() + x[(i, 1)].powi(2));
        let control = KrigingControl { use_lambda: false, alg_theta: ThetaSearch::LocalBounded, budget: Some(60), seed, ..KrigingControl::default() };
        let fit = fit_kriging(&x, &y, &control).unwrap();
        let p = fit.predict(&x).unwrap();
        prop_assert!((p.mean - &y).amax() < 1e-6);
        prop_assert!(p.sd.unwrap().iter().all(|s| *s >= 0.0 && *s < 1e-3));
        let off = random_matrix(10, 2, 0.0, 1.0, seed ^ 3);
        prop_assert!(fit.predict(&off).unwrap().sd.unwrap().iter().all(|s| s.is_finite() && *s >= 0.0));
    }

    #[test]
    fn stack_weights_are_nonnegative(seed in any::<u64>()) {
        let x = random_matrix(16, 2, -2.0, 2.0, seed);
        let y = DVector::from_fn(16, |i, _| x[(i, 0)].powi(2) + 0.5 * x[(i, 1)]);
        let mut control = StackControl { seed, ..StackControl::default() };
        for m in control.members.iter_mut() {
            match m {
                spot_core::surrogates::StackMember::Kriging(k) => k.budget = Some(40),
                spot_core::surrogates::StackMember::Forest(f) => f.ntree = 30,
                spot_core::surrogates::StackMember::Rsm(_) => {}
            }
        }
        let fit = fit_stack(&x, &y, &control).unwrap();
        prop_assert_eq!(fit.weights().len(), fit.members().len());
        prop_assert_eq!(fit.member_names().len(), fit.members().len());
        prop_assert!(fit.weights().iter().all(|w| *w >= 0.0 && w.is_finite()));
        prop_assert!(fit.weights().iter().any(|w| *w > 0.0));
        prop_assert!(fit.predict_mean(&x).unwrap().iter().all(|v| v.is_finite()));
    }
}
