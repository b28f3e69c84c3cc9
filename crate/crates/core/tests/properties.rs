mod common;

use knockoff_mem::data::ObservedData;
use knockoff_mem::datagen::calibrate_intercept;
use knockoff_mem::errorcov::psd_repair;
use knockoff_mem::filter::{order_features, pvalues, select, seqstep, OrderMode, StatTensor};
use knockoff_mem::harness::{fdp_power, merge_json};
use knockoff_mem::impute::{impute, ImputeConfig, ImputeMethod};
use knockoff_mem::linalg::{logistic, min_eigenvalue};
use knockoff_mem::rng::{Role, Streams};
use knockoff_mem::stats::corrected::project_l1_ball;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use serde_json::json;

use common::*;

fn pvalue_vec() -> impl Strategy<Value = Vec<f64>> {
    (1usize..6).prop_flat_map(|k| prop::collection::vec((1..=k + 1).prop_map(move |c| c as f64 / (k + 1) as f64), 0..50))
}

fn tensor() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
    (1usize..5, 1usize..30).prop_flat_map(|(k, p)| {
        (Just(k), Just(p), prop::collection::vec(0.0f64..3.0, k * p), prop::collection::vec(0.0f64..3.0, k * p))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn seqstep_matches_bruteforce(p in pvalue_vec(), q in 0.01f64..0.99, c in 0u32..2) {
        prop_assert_eq!(seqstep(&p, q, c).unwrap().0, seqstep_bruteforce(&p, q, c));
    }

    #[test]
    fn offset_never_selects_more(p in pvalue_vec(), q in 0.01f64..0.99) {
        prop_assert!(seqstep(&p, q, 1).unwrap().0 <= seqstep(&p, q, 0).unwrap().0);
    }

    #[test]
    fn pvalues_live_on_the_grid((k, p, z, zt) in tensor()) {
        let t = StatTensor::new(k, 1, p, z, zt).unwrap();
        for v in pvalues(&t) {
            let scaled = v * (k + 1) as f64;
            prop_assert!((scaled - scaled.round()).abs() < 1e-9);
            prop_assert!(scaled >= 1.0 - 1e-9 && scaled <= (k + 1) as f64 + 1e-9);
        }
    }

    #[test]
    fn swapping_a_feature_reflects_its_pvalue((k, p, z, zt) in tensor(), pick in any::<prop::sample::Index>()) {
        let j = pick.index(p);
        let t = StatTensor::new(k, 1, p, z.clone(), zt.clone()).unwrap();
        prop_assume!((0..k).all(|c| t.z(c, 0, j) != t.z_tilde(c, 0, j)));
        let (mut z2, mut zt2) = (z, zt);
        for c in 0..k {
            std::mem::swap(&mut z2[c * p + j], &mut zt2[c * p + j]);
        }
        let swapped = StatTensor::new(k, 1, p, z2, zt2).unwrap();
        let (a, b) = (pvalues(&t)[j], pvalues(&swapped)[j]);
        // (1 + c) / (K + 1) becomes (1 + K - c) / (K + 1).
        prop_assert!((a + b - (k + 2) as f64 / (k + 1) as f64).abs() < 1e-12);
        // The ordering only looks at magnitudes, so it is unchanged.
        prop_assert_eq!(order_features(&t, OrderMode::MaxMax).unwrap(), order_features(&swapped, OrderMode::MaxMax).unwrap());
    }

    #[test]
    fn selections_have_small_pvalues((k, p, z, zt) in tensor(), q in 0.05f64..0.5) {
        let t = StatTensor::new(k, 1, p, z, zt).unwrap();
        let r = select(&t, q, None).unwrap();
        for c in [0, 1] {
            let sel = r.selected(c);
            prop_assert!(sel.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(sel.iter().all(|&j| r.p_values[j] <= 0.5));
        }
        prop_assert!(r.selected_1.len() <= r.selected_0.len());
    }

    #[test]
    fn l1_projection_lands_in_the_ball(v in prop::collection::vec(-5.0f64..5.0, 1..30), radius in 0.0f64..10.0) {
        let v = DVector::from_vec(v);
        let x = project_l1_ball(&v, radius);
        prop_assert!(x.lp_norm(1) <= radius + 1e-9);
        prop_assert!((project_l1_ball(&x, radius) - &x).amax() < 1e-9);
        // Projection never flips a sign or grows a coordinate.
        for (a, b) in x.iter().zip(v.iter()) {
            prop_assert!(a * b >= 0.0 && a.abs() <= b.abs() + 1e-12);
        }
    }

    #[test]
    fn soft_threshold_agrees_with_the_library(z in -10.0f64..10.0, t in 0.0f64..5.0) {
        prop_assert_eq!(knockoff_mem::stats::lasso::soft_threshold(z, t), soft_threshold(z, t));
    }

    #[test]
    fn psd_repair_floors_the_correlation_form(entries in prop::collection::vec(-1.0f64..1.0, 16), var in prop::collection::vec(0.1f64..3.0, 4), floor in 1e-6f64..1e-2) {
        let a = DMatrix::from_vec(4, 4, entries);
        let mut sym = (&a + a.transpose()) * 0.5;
        for j in 0..4 {
            sym[(j, j)] = var[j];
        }
        let fixed = psd_repair(&sym, floor).unwrap();
        prop_assert!((&fixed - fixed.transpose()).amax() < 1e-12);
        // Variances are kept; the correlation form gets the floor.
        let corr = DMatrix::from_fn(4, 4, |i, j| fixed[(i, j)] / (var[i] * var[j]).sqrt());
        prop_assert!((0..4).all(|j| (fixed[(j, j)] - var[j]).abs() < 1e-12));
        prop_assert!(min_eigenvalue(&corr) >= floor * (1.0 - 1e-6));
    }

    #[test]
    fn intercept_hits_the_missing_rate(linear in prop::collection::vec(-6.0f64..6.0, 20..200), p_mis in 0.02f64..0.5) {
        let eta0 = calibrate_intercept(&linear, p_mis);
        let observed = linear.iter().map(|&l| logistic(eta0 + l)).sum::<f64>() / linear.len() as f64;
        prop_assert!((observed - (1.0 - p_mis)).abs() < 1e-8);
    }

    #[test]
    fn fdp_and_power_are_proportions(sel in prop::collection::btree_set(0usize..40, 0..40), truth in prop::collection::btree_set(0usize..40, 0..40)) {
        let sel: Vec<usize> = sel.into_iter().collect();
        let truth: Vec<usize> = truth.into_iter().collect();
        let (fdp, power) = fdp_power(&sel, &truth, 40).unwrap();
        let false_hits = sel.iter().filter(|j| !truth.contains(j)).count();
        prop_assert!((fdp - false_hits as f64 / sel.len().max(1) as f64).abs() < 1e-12);
        match power {
            Some(pw) => prop_assert!((0.0..=1.0).contains(&pw)),
            None => prop_assert!(truth.is_empty()),
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct(seed in any::<u64>(), tag in 0u64..1000) {
        let a: u64 = Streams::new(seed).child(tag).rng(Role::Features).random();
        let b: u64 = Streams::new(seed).child(tag).rng(Role::Features).random();
        let c: u64 = Streams::new(seed).child(tag + 1).rng(Role::Features).random();
        let d: u64 = Streams::new(seed).child(tag).rng(Role::Knockoff).random();
        prop_assert_eq!(a, b);
        prop_assert_ne!(a, c);
        prop_assert_ne!(a, d);
    }

    #[test]
    fn config_merge_overrides_leaves(x in any::<i32>(), y in any::<i32>()) {
        let mut base = json!({"a": {"b": x, "c": 1}, "d": [1, 2]});
        merge_json(&mut base, json!({"a": {"b": y}, "d": [3]}));
        prop_assert_eq!(base, json!({"a": {"b": y, "c": 1}, "d": [3]}));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn imputation_keeps_observed_cells(seed in any::<u64>(), method_index in 0usize..5) {
        let mut r = rng(seed);
        let (n, p) = (60, 5);
        let features = DMatrix::from_fn(n, p, |_, _| r.random::<f64>() * 4.0);
        let observed = DMatrix::from_fn(n, p, |_, j| j == 0 || r.random_bool(0.8));
        let outcome = DVector::from_fn(n, |_, _| if r.random_bool(0.5) { 1.0 } else { 0.0 });
        let data = ObservedData::new(outcome, features, observed).unwrap();
        let method = [ImputeMethod::HalfMin, ImputeMethod::Mean, ImputeMethod::ChainedDefault, ImputeMethod::ChainedCart, ImputeMethod::ChainedPmm][method_index];
        let cfg = ImputeConfig { method, k: 2, sweeps: 3, ..ImputeConfig::default() };
        let set = impute(&data, &cfg, &Streams::new(seed)).unwrap();
        for c in &set.copies {
            prop_assert!(preserves_observed(&data, c));
            prop_assert!(c.iter().all(|v| v.is_finite()));
        }
    }
}
