use proptest::collection::vec;
use proptest::prelude::*;

use pathbench::dataset::{sample_per_class, DatasetManifest, PatchRecord, Split};
use pathbench::features::{
    decode_features, encode_features, extract_histogram, extract_lbp, FeatureSet, FeatureVector,
};
use pathbench::metrics::{report, EtaWMode, PredictionSet};
use pathbench::retrieval::{classify_knn, Metric, RetrievalIndex};
use pathbench::svm::{
    decision_values, decode_model, encode_model, predict, train_binary, DesignMatrix,
    LinearSvmModel, SvmParams,
};
use pathbench::tiler::{homogeneity, prepare_pixels, whiten_background, PreparedPatch};

fn patch(side: usize) -> impl Strategy<Value = (usize, Vec<u8>)> {
    vec(any::<u8>(), side * side).prop_map(move |px| (side, px))
}

fn prepared() -> impl Strategy<Value = PreparedPatch> {
    (3usize..24)
        .prop_flat_map(patch)
        .prop_map(|(side, px)| prepare_pixels("p", side, &px, side).unwrap())
}

fn finite_f32() -> impl Strategy<Value = f32> {
    prop_oneof![
        any::<f32>().prop_filter("finite", |v| v.is_finite()),
        -1e3f32..1e3,
        Just(-0.0f32),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn whiten_is_idempotent(px in vec(any::<u8>(), 0..600), thr in any::<u8>()) {
        let mut once = px.clone();
        whiten_background(&mut once, thr);
        let mut twice = once.clone();
        whiten_background(&mut twice, thr);
        prop_assert_eq!(&once, &twice);
        for (a, b) in px.iter().zip(&once) {
            let expected = if *a >= thr { 255 } else { *a };
            prop_assert_eq!(*b, expected);
        }
    }

    #[test]
    fn homogeneity_falls_as_threshold_rises(px in vec(any::<u8>(), 1..600), lo in any::<u8>(), hi in any::<u8>()) {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let (a, b) = (homogeneity(&px, lo), homogeneity(&px, hi));
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(a >= b);
    }

    #[test]
    fn downsampling_keeps_constant_patches_constant(side in 2usize..40, target in 1usize..40, level in any::<u8>()) {
        prop_assume!(target <= side);
        let p = prepare_pixels("c", side, &vec![level; side * side], target).unwrap();
        prop_assert_eq!(p.side(), target);
        prop_assert!(p.levels().iter().all(|&l| l == level));
    }

    #[test]
    fn histograms_are_distributions(p in prepared()) {
        for values in [extract_histogram(&p).values, extract_lbp(&p).unwrap().values] {
            prop_assert_eq!(values.len(), 256);
            prop_assert!(values.iter().all(|&v| v >= 0.0));
            let sum: f64 = values.iter().map(|&v| f64::from(v)).sum();
            prop_assert!((sum - 1.0).abs() < 1e-5, "sum {}", sum);
        }
    }

    #[test]
    fn lbp_ignores_monotone_brightening(p in prepared(), shift in 0u8..40) {
        // adding a constant to every level keeps all neighbour comparisons
        let levels = p.levels();
        prop_assume!(levels.iter().all(|&l| l as u16 + shift as u16 <= 255));
        let brighter: Vec<f32> = levels.iter().map(|&l| f32::from(l + shift) / 255.0).collect();
        let q = PreparedPatch::new("q", p.side(), brighter).unwrap();
        prop_assert_eq!(extract_lbp(&p).unwrap().values, extract_lbp(&q).unwrap().values);
    }

    #[test]
    fn pfv_round_trip(dim in 1usize..12, rows in vec((proptest::option::of(any::<u32>()), vec(finite_f32(), 12)), 0..12)) {
        let vectors = rows
            .into_iter()
            .enumerate()
            .map(|(i, (label, vals))| FeatureVector::new(format!("v{i}"), label.map(|l| l >> 1), vals[..dim].to_vec()))
            .collect();
        let set = FeatureSet::new("prop", dim, vectors).unwrap();
        let back = decode_features(&encode_features(&set).unwrap()).unwrap();
        prop_assert_eq!(back.len(), set.len());
        for (a, b) in set.vectors().iter().zip(back.vectors()) {
            prop_assert_eq!(&a.patch_id, &b.patch_id);
            prop_assert_eq!(a.label, b.label);
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.values), bits(&b.values));
        }
    }

    #[test]
    fn psm_round_trip(dim in 1usize..8, weights in vec(vec(finite_f32(), 9), 1..5), seed in any::<u64>()) {
        let model = LinearSvmModel {
            classes: (0..weights.len() as u32).map(|c| c * 2).collect(),
            dim,
            weights: weights.iter().map(|w| w[..=dim].to_vec()).collect(),
            c: 0.5,
            tol: 1e-4,
            seed,
            extractor_id: "prop".into(),
        };
        let back = decode_model(&encode_model(&model).unwrap()).unwrap();
        let bits = |m: &LinearSvmModel| m.weights.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&model));
        prop_assert_eq!(back.seed, seed);
    }
}

fn eval_fixture(assignments: &[(u32, u32, u32)]) -> (DatasetManifest, PredictionSet) {
    // (true class, predicted class, copies)
    let mut records = Vec::new();
    let mut preds = Vec::new();
    for (i, &(truth, guess, copies)) in assignments.iter().enumerate() {
        for k in 0..copies {
            let id = format!("p{i}_{k}");
            records.push(PatchRecord {
                patch_id: id.clone(),
                class_id: truth,
                split: Split::Test,
                grid_row: 0,
                grid_col: 0,
                path: format!("{id}.png"),
            });
            preds.push((id, guess));
        }
    }
    (
        DatasetManifest::new([], records, ".").unwrap(),
        PredictionSet::from_pairs(preds).unwrap(),
    )
}

fn assignments() -> impl Strategy<Value = Vec<(u32, u32, u32)>> {
    (2u32..7).prop_flat_map(|n| {
        vec((0..n, 0..n, 1u32..4), 1..30).prop_map(move |mut rows| {
            // every class gets at least one test patch
            for c in 0..n {
                rows.push((c, (c + 1) % n, 1));
            }
            rows
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn etas_are_bounded(rows in assignments()) {
        let (m, p) = eval_fixture(&rows);
        let r = report(&p, &m, EtaWMode::PerClassRecall).unwrap();
        prop_assert_eq!(r.confusion.iter().flatten().sum::<u64>(), r.n_tot);
        prop_assert!((0.0..=1.0).contains(&r.eta_p) && (0.0..=1.0).contains(&r.eta_w));
        prop_assert!(r.eta_total <= r.eta_p.min(r.eta_w) + 1e-15);
        prop_assert!((r.eta_total - r.eta_p * r.eta_w).abs() <= 1e-12);
    }

    #[test]
    fn relabelling_classes_leaves_etas_unchanged(rows in assignments(), offset in 1u32..50) {
        let (m, p) = eval_fixture(&rows);
        // reverse the class order and shift ids
        let relabel = |c: u32| 1000 - offset - c;
        let moved: Vec<_> = rows.iter().map(|&(t, g, k)| (relabel(t), relabel(g), k)).collect();
        let (m2, p2) = eval_fixture(&moved);
        let a = report(&p, &m, EtaWMode::PerClassRecall).unwrap();
        let b = report(&p2, &m2, EtaWMode::PerClassRecall).unwrap();
        prop_assert!((a.eta_p - b.eta_p).abs() < 1e-12);
        prop_assert!((a.eta_w - b.eta_w).abs() < 1e-12);
        let mut diag_a: Vec<u64> = (0..a.classes.len()).map(|i| a.confusion[i][i]).collect();
        let mut diag_b: Vec<u64> = (0..b.classes.len()).map(|i| b.confusion[i][i]).collect();
        diag_a.sort_unstable();
        diag_b.sort_unstable();
        prop_assert_eq!(diag_a, diag_b);
    }

    #[test]
    fn duplicating_a_class_keeps_eta_w(rows in assignments(), pick in any::<prop::sample::Index>()) {
        let (m, p) = eval_fixture(&rows);
        let class = rows[pick.index(rows.len())].0;
        let doubled: Vec<_> = rows.iter().map(|&(t, g, k)| (t, g, if t == class { 2 * k } else { k })).collect();
        let (m2, p2) = eval_fixture(&doubled);
        let a = report(&p, &m, EtaWMode::PerClassRecall).unwrap();
        let b = report(&p2, &m2, EtaWMode::PerClassRecall).unwrap();
        prop_assert!((a.eta_w - b.eta_w).abs() < 1e-12);
    }
}

fn labelled_set(points: &[(Vec<f32>, u32)]) -> FeatureSet {
    let dim = points[0].0.len();
    let vectors = points
        .iter()
        .enumerate()
        .map(|(i, (v, c))| FeatureVector::new(format!("x{i:03}"), Some(*c), v.clone()))
        .collect();
    FeatureSet::new("prop", dim, vectors).unwrap()
}

fn point_cloud() -> impl Strategy<Value = Vec<(Vec<f32>, u32)>> {
    (1usize..5).prop_flat_map(|dim| vec((vec(-10.0f32..10.0, dim), 0u32..4), 2..30))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn retrieval_results_are_sorted_subsets(points in point_cloud(), k in 1usize..40, cosine in any::<bool>()) {
        let set = labelled_set(&points);
        let metric = if cosine { Metric::Cosine } else { Metric::Euclidean };
        let index = RetrievalIndex::build(&set, metric).unwrap();
        for v in set.vectors() {
            let hits = index.query(&v.values, k).unwrap();
            prop_assert_eq!(hits.len(), k.min(set.len()));
            prop_assert!(hits.windows(2).all(|w| w[0].distance <= w[1].distance));
            prop_assert!(hits.iter().all(|h| h.distance >= 0.0 && set.vectors().iter().any(|x| x.patch_id == h.patch_id)));
            if !cosine {
                prop_assert!(hits[0].distance == 0.0);
            }
        }
    }

    #[test]
    fn retrieval_ignores_insertion_order(points in point_cloud(), k in 1usize..6) {
        let set = labelled_set(&points);
        let mut reversed = set.vectors().to_vec();
        reversed.reverse();
        let set_rev = FeatureSet::new("prop", set.dim(), reversed).unwrap();
        let a = RetrievalIndex::build(&set, Metric::Euclidean).unwrap();
        let b = RetrievalIndex::build(&set_rev, Metric::Euclidean).unwrap();
        prop_assert_eq!(a.query_all(&set, k).unwrap(), b.query_all(&set, k).unwrap());
    }

    #[test]
    fn one_nn_vote_matches_nearest_neighbour(points in point_cloud()) {
        let set = labelled_set(&points);
        let index = RetrievalIndex::build(&set, Metric::Euclidean).unwrap();
        let preds = classify_knn(&index, &set, 1).unwrap();
        for v in set.vectors() {
            let nearest = &index.query(&v.values, 1).unwrap()[0];
            prop_assert_eq!(preds.get(&v.patch_id), Some(nearest.class_id));
        }
    }

    #[test]
    fn dual_coordinate_descent_invariants(points in point_cloud(), c in 0.05f64..5.0, seed in any::<u64>()) {
        let y: Vec<i8> = points.iter().map(|(_, cl)| if cl % 2 == 0 { 1 } else { -1 }).collect();
        prop_assume!(y.iter().any(|&l| l != y[0]));
        let x = DesignMatrix::augmented(points.iter().map(|(v, _)| v.as_slice()), points[0].0.len()).unwrap();
        let params = SvmParams { c, seed, max_iter: 200, ..SvmParams::default() };
        let sol = train_binary(&x, &y, &params).unwrap();
        prop_assert!(sol.alphas.iter().all(|&a| (0.0..=c).contains(&a)));
        prop_assert!(sol.dual_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0)));
        // w is recomputable from the alphas
        let mut w = vec![0.0f64; x.cols()];
        for i in 0..x.rows() {
            for (wk, xk) in w.iter_mut().zip(x.row(i)) {
                *wk += sol.alphas[i] * f64::from(y[i]) * xk;
            }
        }
        let scale = w.iter().map(|v| v.abs()).fold(1.0, f64::max);
        for (a, b) in w.iter().zip(&sol.weights) {
            prop_assert!((a - b).abs() <= 1e-5 * scale);
        }
    }

    #[test]
    fn positive_score_scaling_keeps_predictions(points in point_cloud(), factor in 0.01f32..100.0) {
        let set = labelled_set(&points);
        let dim = set.dim();
        let model = LinearSvmModel {
            classes: vec![0, 1, 2],
            dim,
            weights: (0..3).map(|c| (0..=dim).map(|k| ((c * 7 + k * 3) % 5) as f32 - 2.0).collect()).collect(),
            c: 1.0,
            tol: 1e-4,
            seed: 0,
            extractor_id: "prop".into(),
        };
        let scaled = LinearSvmModel {
            weights: model.weights.iter().map(|r| r.iter().map(|w| w * factor).collect()).collect(),
            ..model.clone()
        };
        for v in set.vectors() {
            prop_assert_eq!(decision_values(&model, &v.values).unwrap().len(), 3);
        }
        let a = predict(&model, &set).unwrap();
        let b = predict(&scaled, &set).unwrap();
        prop_assert_eq!(a.to_tsv(), b.to_tsv());
    }

    #[test]
    fn sampling_is_deterministic_and_bounded(sizes in vec(0usize..12, 1..6), n in 1usize..8, seed in any::<u64>()) {
        let mut records = Vec::new();
        for (class, &count) in sizes.iter().enumerate() {
            for i in 0..count {
                records.push(PatchRecord {
                    patch_id: format!("c{class}_{i:02}"),
                    class_id: class as u32,
                    split: if i % 4 == 3 { Split::Test } else { Split::Train },
                    grid_row: 0,
                    grid_col: i as u32,
                    path: format!("c{class}_{i:02}.png"),
                });
            }
        }
        prop_assume!(!records.is_empty());
        let m = DatasetManifest::new([], records.clone(), ".").unwrap();
        let a = sample_per_class(&m, n, seed).unwrap();
        records.reverse();
        let shuffled = DatasetManifest::new([], records, ".").unwrap();
        let b = sample_per_class(&shuffled, n, seed).unwrap();
        prop_assert_eq!(a.to_tsv(), b.to_tsv());
        for &class in m.classes() {
            let available = m.split(Split::Train).filter(|r| r.class_id == class).count();
            let kept = a.split(Split::Train).filter(|r| r.class_id == class).count();
            prop_assert_eq!(kept, available.min(n));
        }
        prop_assert_eq!(a.split(Split::Test).count(), m.split(Split::Test).count());
        prop_assert!(a.records().iter().all(|r| m.get(&r.patch_id) == Some(r)));
    }
}
