use super::*;
use crate::dataset::{simulate, SyntheticModel, SyntheticSpec};
use crate::sampling::draw_indices;
use ndarray::{array, Array2};

fn sim(n: usize, p: usize, seed: u64) -> Dataset {
    simulate(&SyntheticSpec {
        model: SyntheticModel::Linear,
        n,
        p,
        rho_ar: 0.5,
        sigma: 0.5,
        seed,
    })
    .unwrap()
}

fn rng() -> crate::rng::StreamRng {
    substream(0, &[42])
}

fn full(n: usize) -> SampleIndices {
    draw_indices(n, n, SamplingMode::Subagging, &mut rng()).unwrap()
}

/// Gaussian elimination with partial pivoting, kept apart from the production solvers.
fn dense_solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Array1<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs())).unwrap();
        for j in 0..n {
            a.swap([col, j], [piv, j]);
        }
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[[row, col]] / a[[col, col]];
            for j in col..n {
                a[[row, j]] -= f * a[[col, j]];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|j| a[[row, j]] * x[j]).sum();
        x[row] = (b[row] - s) / a[[row, row]];
    }
    x
}

fn coef(f: &FittedBase) -> &Array1<f64> {
    match f {
        FittedBase::Linear { coef } => coef,
        other => panic!("not linear: {other:?}"),
    }
}

#[test]
fn null_predicts_zero() {
    let d = sim(20, 5, 1);
    let f = fit_base(&PredictorSpec::Null, &d, &full(20), &mut rng()).unwrap();
    assert!(predict_base(&f, d.features().view()).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn ridge_matches_dense_solve() {
    let d = sim(50, 5, 2);
    let idx = draw_indices(50, 30, SamplingMode::Bagging, &mut rng()).unwrap();
    let f = fit_base(&PredictorSpec::Ridge { lambda: 0.1 }, &d, &idx, &mut rng()).unwrap();
    let sub = d.select_rows(&idx.draws);
    let k = idx.k as f64;
    let mut a = sub.features().t().dot(sub.features()) / k;
    for i in 0..5 {
        a[[i, i]] += 0.1;
    }
    let b = sub.features().t().dot(sub.response()) / k;
    let expected = dense_solve(a, b);
    for (x, y) in coef(&f).iter().zip(expected.iter()) {
        assert!((x - y).abs() < 1e-8);
    }
}

#[test]
fn ridge_dual_branch_matches_dense_solve() {
    let d = sim(40, 25, 3);
    let idx = draw_indices(40, 12, SamplingMode::Subagging, &mut rng()).unwrap();
    let f = fit_base(&PredictorSpec::Ridge { lambda: 0.3 }, &d, &idx, &mut rng()).unwrap();
    let sub = d.select_rows(&idx.draws);
    let mut a = sub.features().t().dot(sub.features()) / 12.0;
    for i in 0..25 {
        a[[i, i]] += 0.3;
    }
    let expected = dense_solve(a, sub.features().t().dot(sub.response()) / 12.0);
    for (x, y) in coef(&f).iter().zip(expected.iter()) {
        assert!((x - y).abs() < 1e-8);
    }
}

#[test]
fn ridge_shrinks_to_zero() {
    let d = sim(60, 6, 4);
    let idx = full(60);
    let small = fit_base(&PredictorSpec::Ridge { lambda: 0.1 }, &d, &idx, &mut rng()).unwrap();
    let huge = fit_base(&PredictorSpec::Ridge { lambda: 1e6 }, &d, &idx, &mut rng()).unwrap();
    let norm = |v: &Array1<f64>| v.dot(v).sqrt();
    assert!(norm(coef(&huge)) <= 1e-4 * norm(coef(&small)));
}

#[test]
fn ridge_first_order_optimality() {
    let d = sim(40, 8, 5);
    let idx = draw_indices(40, 25, SamplingMode::Bagging, &mut rng()).unwrap();
    let lambda = 0.1;
    let f = fit_base(&PredictorSpec::Ridge { lambda }, &d, &idx, &mut rng()).unwrap();
    let sub = d.select_rows(&idx.draws);
    let objective = |b: &Array1<f64>| {
        let r = sub.response() - &sub.features().dot(b);
        r.dot(&r) / idx.k as f64 + lambda * b.dot(b)
    };
    let beta = coef(&f).clone();
    let base = objective(&beta);
    for j in 0..8 {
        for h in [1e-4, -1e-4] {
            let mut b = beta.clone();
            b[j] += h;
            assert!(objective(&b) >= base);
        }
    }
}

#[test]
fn ridgeless_is_ols_when_tall() {
    let d = sim(50, 5, 6);
    let idx = draw_indices(50, 40, SamplingMode::Subagging, &mut rng()).unwrap();
    let f = fit_base(&PredictorSpec::Ridgeless, &d, &idx, &mut rng()).unwrap();
    let sub = d.select_rows(&idx.draws);
    let expected = dense_solve(sub.features().t().dot(sub.features()), sub.features().t().dot(sub.response()));
    for (x, y) in coef(&f).iter().zip(expected.iter()) {
        assert!((x - y).abs() < 1e-8);
    }
}

#[test]
fn ridgeless_interpolates_when_wide() {
    let d = sim(30, 20, 7);
    let idx = draw_indices(30, 10, SamplingMode::Subagging, &mut rng()).unwrap();
    let f = fit_base(&PredictorSpec::Ridgeless, &d, &idx, &mut rng()).unwrap();
    let sub = d.select_rows(&idx.draws);
    let fit = predict_base(&f, sub.features().view()).unwrap();
    for (a, b) in fit.iter().zip(sub.response().iter()) {
        assert!((a - b).abs() <= 1e-8);
    }
}

#[test]
fn knn_with_all_neighbors_is_subsample_mean() {
    let d = sim(30, 5, 8);
    let idx = draw_indices(30, 7, SamplingMode::Subagging, &mut rng()).unwrap();
    let f = fit_base(&PredictorSpec::Knn { neighbors: 7 }, &d, &idx, &mut rng()).unwrap();
    let mean = idx.draws.iter().map(|&i| d.response()[i]).sum::<f64>() / 7.0;
    for v in predict_base(&f, d.features().view()).unwrap() {
        assert!((v - mean).abs() < 1e-12);
    }
    assert!(fit_base(&PredictorSpec::Knn { neighbors: 8 }, &d, &idx, &mut rng()).is_err());
}

#[test]
fn knn_picks_nearest_with_index_ties() {
    let x = array![[0.0], [1.0], [-1.0], [5.0]];
    let y = array![10.0, 20.0, 30.0, 40.0];
    let d = Dataset::new(x, y).unwrap();
    let f = fit_base(&PredictorSpec::Knn { neighbors: 2 }, &d, &full(4), &mut rng()).unwrap();
    // rows 1 and 2 tie at distance 1 from 0: row 1 wins
    let p = predict_base(&f, array![[0.0]].view()).unwrap();
    assert_eq!(p[0], 15.0);
    let p = predict_base(&f, array![[4.0]].view()).unwrap();
    assert_eq!(p[0], 30.0);
}

fn tree_spec(min_node_size: usize, feature_fraction: f64) -> PredictorSpec {
    PredictorSpec::Tree {
        min_node_size,
        feature_fraction,
        max_depth: None,
    }
}

#[test]
fn tree_on_constant_response() {
    let d = Dataset::new(Array2::from_shape_fn((20, 3), |(i, j)| (i * j) as f64), Array1::from_elem(20, 2.5)).unwrap();
    let f = fit_base(&tree_spec(1, 1.0), &d, &full(20), &mut rng()).unwrap();
    assert!(predict_base(&f, d.features().view()).unwrap().iter().all(|&v| v == 2.5));
}

/// Exhaustive oracle at p = 1: every midpoint between sorted distinct values, scored by child SSE.
fn oracle_split(x: &[f64], y: &[f64], min_leaf: usize) -> Option<f64> {
    let mut xs: Vec<f64> = x.to_vec();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let sse = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|a| (a - m).powi(2)).sum::<f64>()
    };
    let mut best: Option<(f64, f64)> = None;
    for w in xs.windows(2) {
        let t = 0.5 * (w[0] + w[1]);
        let l: Vec<f64> = x.iter().zip(y).filter(|(a, _)| **a <= t).map(|(_, b)| *b).collect();
        let r: Vec<f64> = x.iter().zip(y).filter(|(a, _)| **a > t).map(|(_, b)| *b).collect();
        if l.len() < min_leaf || r.len() < min_leaf {
            continue;
        }
        let s = sse(&l) + sse(&r);
        if best.is_none_or(|(bs, _)| s < bs - 1e-12) {
            best = Some((s, t));
        }
    }
    best.map(|(_, t)| t)
}

#[test]
fn tree_binary_feature_splits_at_half() {
    let x: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
    assert_eq!(oracle_split(&x, &x, 1), Some(0.5));
    let d = Dataset::new(Array2::from_shape_vec((10, 1), x.clone()).unwrap(), Array1::from(x)).unwrap();
    let f = fit_base(&tree_spec(1, 1.0), &d, &full(10), &mut rng()).unwrap();
    let p = predict_base(&f, array![[0.0], [1.0], [0.4], [0.6]].view()).unwrap();
    assert_eq!(p.to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
}

#[test]
fn tree_root_split_matches_exhaustive_oracle() {
    let mut r = rng();
    for trial in 0..20 {
        let n = 30;
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| if *v > 0.3 { 1.0 } else { -1.0 } + r.random_range(-0.5..0.5)).collect();
        let expected = oracle_split(&x, &y, 5).unwrap();
        let d = Dataset::new(Array2::from_shape_vec((n, 1), x.clone()).unwrap(), Array1::from(y)).unwrap();
        let spec = PredictorSpec::Tree {
            min_node_size: 5,
            feature_fraction: 1.0,
            max_depth: Some(1),
        };
        let f = fit_base(&spec, &d, &full(n), &mut rng()).unwrap();
        let FittedBase::Tree { tree, .. } = &f else { unreachable!() };
        assert_eq!(tree.n_leaves(), 2, "trial {trial}");
        // locate threshold by probing the sorted sample
        let mut xs = x.clone();
        xs.sort_by(f64::total_cmp);
        let left = tree.leaf_of(array![xs[0]].view());
        let last_left = xs.iter().rev().find(|v| tree.leaf_of(array![**v].view()) == left).unwrap();
        let first_right = xs.iter().find(|v| tree.leaf_of(array![**v].view()) != left).unwrap();
        assert!(*last_left <= expected && expected < *first_right, "trial {trial}");
    }
}

#[test]
fn tree_respects_min_node_size() {
    let d = sim(100, 6, 9);
    let spec = tree_spec(5, 1.0);
    let f = fit_base(&spec, &d, &full(100), &mut rng()).unwrap();
    let FittedBase::Tree { tree, .. } = &f else { unreachable!() };
    let mut counts = std::collections::HashMap::new();
    for row in d.features().outer_iter() {
        *counts.entry(tree.leaf_of(row)).or_insert(0usize) += 1;
    }
    assert!(counts.values().all(|&c| c >= 5));
    assert!(tree.n_leaves() > 1);
}

#[test]
fn tree_is_piecewise_constant() {
    let d = sim(80, 6, 10);
    let f = fit_base(&PredictorSpec::forest_tree(), &d, &full(80), &mut rng()).unwrap();
    let FittedBase::Tree { tree, .. } = &f else { unreachable!() };
    let preds = predict_base(&f, d.features().view()).unwrap();
    let mut by_leaf = std::collections::HashMap::new();
    for (row, p) in d.features().outer_iter().zip(preds.iter()) {
        let prev = by_leaf.entry(tree.leaf_of(row)).or_insert(*p);
        assert_eq!(*prev, *p);
    }
}

#[test]
fn dimension_mismatch_is_reported() {
    let d = sim(20, 5, 11);
    let f = fit_base(&PredictorSpec::ridge(), &d, &full(20), &mut rng()).unwrap();
    assert!(matches!(
        predict_base(&f, Array2::zeros((3, 4)).view()),
        Err(EcvError::DimensionMismatch { .. })
    ));
}

#[test]
fn ensemble_of_one_is_base_fit() {
    let d = sim(40, 5, 12);
    let ens = fit_ensemble(&PredictorSpec::forest_tree(), &d, 20, 1, SamplingMode::Bagging, 3).unwrap();
    let idx = draw_member_indices(40, 20, 0, SamplingMode::Bagging, 3).unwrap();
    let direct = fit_base(&PredictorSpec::forest_tree(), &d, &idx, &mut substream(3, &[tag::FIT, 20, 0])).unwrap();
    assert_eq!(ens.members[0], direct);
    assert_eq!(ens.indices[0], idx);
}

#[test]
fn ensemble_determinism_and_mean() {
    let d = sim(60, 6, 13);
    let a = fit_ensemble(&PredictorSpec::forest_tree(), &d, 30, 5, SamplingMode::Subagging, 7).unwrap();
    let b = fit_ensemble(&PredictorSpec::forest_tree(), &d, 30, 5, SamplingMode::Subagging, 7).unwrap();
    assert_eq!(a, b);

    let q = sim(10, 6, 14);
    let pred = predict_ensemble(&a, q.features().view(), None).unwrap();
    let members = a.member_predictions(q.features().view()).unwrap();
    for i in 0..10 {
        let mean = members.iter().map(|m| m[i]).sum::<f64>() / 5.0;
        assert!((pred[i] - mean).abs() < 1e-12);
    }
    // permutation invariance
    let mut shuffled = a.clone();
    shuffled.members.reverse();
    let pred_rev = predict_ensemble(&shuffled, q.features().view(), None).unwrap();
    for (x, y) in pred.iter().zip(pred_rev.iter()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn prefix_mean_identity() {
    let d = sim(50, 5, 15);
    let ens = fit_ensemble(&PredictorSpec::ridge(), &d, 25, 6, SamplingMode::Bagging, 9).unwrap();
    let x = d.features().view();
    let first = predict_ensemble(&ens, x, Some(1)).unwrap();
    assert_eq!(first, predict_base(&ens.members[0], x).unwrap());
    for m in 2..=6 {
        let prev = predict_ensemble(&ens, x, Some(m - 1)).unwrap();
        let cur = predict_ensemble(&ens, x, Some(m)).unwrap();
        let last = predict_base(&ens.members[m - 1], x).unwrap();
        let running = (prev * (m - 1) as f64 + last) / m as f64;
        for (a, b) in cur.iter().zip(running.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert!(predict_ensemble(&ens, x, Some(0)).is_err());
    assert!(predict_ensemble(&ens, x, Some(7)).is_err());
}

#[test]
fn identical_members_predict_like_one() {
    let d = sim(30, 5, 16);
    let mut ens = fit_ensemble(&PredictorSpec::ridge(), &d, 15, 1, SamplingMode::Subagging, 1).unwrap();
    ens.members = vec![ens.members[0].clone(); 4];
    ens.indices = vec![ens.indices[0].clone(); 4];
    let all = predict_ensemble(&ens, d.features().view(), None).unwrap();
    let one = predict_base(&ens.members[0], d.features().view()).unwrap();
    for (a, b) in all.iter().zip(one.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn extension_matches_direct_fit() {
    let d = sim(50, 6, 17);
    let spec = PredictorSpec::forest_tree();
    let ten = fit_ensemble(&spec, &d, 20, 10, SamplingMode::Bagging, 21).unwrap();
    let six = fit_ensemble(&spec, &d, 20, 6, SamplingMode::Bagging, 21).unwrap();
    let old = predict_ensemble(&six, d.features().view(), None).unwrap();
    let grown = extend_ensemble(six, &d, 4).unwrap();
    assert_eq!(grown, ten);
    assert_eq!(predict_ensemble(&grown, d.features().view(), Some(6)).unwrap(), old);
    assert!(extend_ensemble(grown, &d, 0).is_err());

    let null = fit_ensemble(&PredictorSpec::Null, &d, 5, 2, SamplingMode::Bagging, 1).unwrap();
    let null = extend_ensemble(null, &d, 3).unwrap();
    assert!(predict_ensemble(&null, d.features().view(), None).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn two_ensemble_error_below_member_average() {
    let train = sim(80, 10, 18);
    let test = sim(200, 10, 19);
    for seed in 0..10 {
        let ens = fit_ensemble(&PredictorSpec::forest_tree(), &train, 40, 2, SamplingMode::Subagging, seed).unwrap();
        let x = test.features().view();
        let err = |p: &Array1<f64>| crate::dataset::mse(p.view(), test.response().view());
        let pair = err(&predict_ensemble(&ens, x, None).unwrap());
        let members = ens.member_predictions(x).unwrap();
        let avg = (err(&members[0]) + err(&members[1])) / 2.0;
        assert!(pair <= avg + 1e-12);
    }
}

#[test]
fn spec_json_round_trip() {
    let spec: PredictorSpec = serde_json::from_str(r#"{"kind":"tree","min_node_size":5,"feature_fraction":0.5}"#).unwrap();
    assert_eq!(
        spec,
        PredictorSpec::Tree {
            min_node_size: 5,
            feature_fraction: 0.5,
            max_depth: None
        }
    );
    let ridge: PredictorSpec = serde_json::from_str(r#"{"kind":"ridge","lambda":0.1}"#).unwrap();
    assert_eq!(ridge, PredictorSpec::ridge());
    assert!(serde_json::from_str::<PredictorSpec>(r#"{"kind":"ridge","lambda":0.1,"alpha":1}"#).is_err());
    assert!(PredictorSpec::Ridge { lambda: 0.0 }.validate().is_err());
    assert!(PredictorSpec::Knn { neighbors: 0 }.validate().is_err());
    assert!(tree_spec(0, 0.5).validate().is_err());
    assert!(tree_spec(1, 1.5).validate().is_err());
}
