use bsen_core::classify::{
    cross_validate, round2, uar_from_recalls, ArmFeatures, BinarySvm, ConfusionMatrix, FoldPlan, FusionSpec,
    SvmModel, SvmOptions,
};
use bsen_core::cohort::Diagnosis;
use bsen_core::rng;
use bsen_core::Error;
use proptest::prelude::*;
use rand::Rng;

#[path = "support/oracles.rs"]
#[allow(dead_code)]
mod oracles;

use oracles::qp_oracle;

fn random_problem(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut r = rng::stream(seed, "svm-problem");
    let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let x = y
        .iter()
        .map(|&t| (0..d).map(|j| r.gen_range(-1.0..1.0) + if j == 0 { 0.6 * t } else { 0.0 }).collect())
        .collect();
    (x, y)
}

#[test]
fn svm_decision_values_match_qp_oracle() {
    for seed in 0..5 {
        for c in [0.1, 1.0, 10.0] {
            let (x, y) = random_problem(seed, 20, 3);
            let opts = SvmOptions { c, ..SvmOptions::default() };
            let svm = BinarySvm::fit(&x, &y, &opts).unwrap();
            assert!(svm.converged(&opts));
            let (w, b) = qp_oracle(&x, &y, c);
            let mut r = rng::stream(seed, "probe");
            for _ in 0..20 {
                let p: Vec<f64> = (0..3).map(|_| r.gen_range(-2.0..2.0)).collect();
                let oracle = w.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>() + b;
                let diff = (svm.decision(&p) - oracle).abs();
                assert!(diff < 1e-4, "seed {seed} C {c}: diff {diff}");
            }
        }
    }
}

#[test]
fn duplicated_points_with_half_c_give_the_same_boundary() {
    let (x, y) = random_problem(11, 20, 3);
    let (w, b) = qp_oracle(&x, &y, 1.0);
    let x2: Vec<Vec<f64>> = x.iter().chain(&x).cloned().collect();
    let y2: Vec<f64> = y.iter().chain(&y).copied().collect();
    let svm = BinarySvm::fit(&x2, &y2, &SvmOptions { c: 0.5, ..SvmOptions::default() }).unwrap();
    for (a, o) in svm.weights.iter().zip(&w) {
        assert!((a - o).abs() < 1e-4);
    }
    assert!((svm.bias - b).abs() < 1e-4);
}

#[test]
fn appending_a_zero_feature_changes_nothing() {
    let (x, y) = random_problem(12, 20, 3);
    let labels: Vec<Diagnosis> = y
        .iter()
        .enumerate()
        .map(|(i, &t)| if t > 0.0 { Diagnosis::Hc } else if i % 4 == 1 { Diagnosis::Mci } else { Diagnosis::Ad })
        .collect();
    let padded: Vec<Vec<f64>> = x.iter().map(|r| r.iter().copied().chain([0.0]).collect()).collect();
    let opts = SvmOptions::default();
    let a = SvmModel::fit(&x, &labels, &opts).unwrap();
    let b = SvmModel::fit(&padded, &labels, &opts).unwrap();
    for (r, p) in x.iter().zip(&padded) {
        let (da, db) = (a.decision_values(r).unwrap(), b.decision_values(p).unwrap());
        assert!(da.iter().zip(&db).all(|(u, v)| (u - v).abs() < 1e-12));
    }
}

#[test]
fn published_recall_triples_reproduce_published_uar() {
    assert!((round2(uar_from_recalls(&[61.54, 56.52, 33.33])) - 50.46).abs() <= 0.01);
    assert!((round2(uar_from_recalls(&[61.54, 73.91, 42.86])) - 59.44).abs() <= 0.01);
}

proptest! {
    #[test]
    fn uar_ignores_class_preserving_subject_order(
        pairs in prop::collection::vec((0usize..3, 0usize..3), 3..60),
        seed in any::<u64>(),
    ) {
        let mut pairs: Vec<(Diagnosis, Diagnosis)> =
            pairs.into_iter().map(|(t, p)| (Diagnosis::ALL[t], Diagnosis::ALL[p])).collect();
        pairs.extend(Diagnosis::ALL.iter().map(|&d| (d, d)));
        let a = ConfusionMatrix::from_pairs(pairs.iter().copied());
        let mut r = rng::stream(seed, "perm");
        use rand::seq::SliceRandom;
        pairs.shuffle(&mut r);
        let b = ConfusionMatrix::from_pairs(pairs);
        prop_assert_eq!(a.uar().unwrap(), b.uar().unwrap());
    }

    #[test]
    fn fusion_output_is_a_probability_vector(
        raw in prop::collection::vec(prop::array::uniform3(0.01f64..1.0), 1..5),
        w in prop::collection::vec(0.0f64..2.0, 5),
    ) {
        let probs: Vec<Vec<f64>> = raw.iter().map(|p| { let s: f64 = p.iter().sum(); p.iter().map(|v| v / s).collect() }).collect();
        let mut weights = w[..probs.len()].to_vec();
        weights[0] += 0.1;
        let f = bsen_core::classify::late_fuse(&probs, &weights).unwrap();
        prop_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(f.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

fn planted(seed: u64) -> (Vec<String>, Vec<Diagnosis>, Vec<Vec<f64>>) {
    let mut r = rng::stream(seed, "cv-data");
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut feats = Vec::new();
    for (k, n) in [(0, 26), (1, 23), (2, 21)] {
        for i in 0..n {
            ids.push(format!("s{k}{i:02}"));
            labels.push(Diagnosis::ALL[k]);
            feats.push((0..4).map(|j| r.gen_range(-1.0..1.0) + if j == k { 1.5 } else { 0.0 }).collect());
        }
    }
    (ids, labels, feats)
}

fn rows(feats: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| feats[i].clone()).collect()
}

#[test]
fn cross_validation_pools_every_subject_once() {
    let (ids, labels, feats) = planted(1);
    let plan = FoldPlan::stratified(&labels, 5, 1).unwrap();
    let fusion = FusionSpec { name: "fusion".into(), arms: vec!["a".into(), "b".into()], weights: vec![0.5, 0.5] };
    let out = cross_validate(&ids, &labels, &plan, &SvmOptions::default(), &[fusion], |_, train, test, guard| {
        guard.record_fit("identity", train)?;
        let half: Vec<Vec<f64>> = feats.iter().map(|f| f[..2].to_vec()).collect();
        Ok(vec![
            ArmFeatures { name: "a".into(), train: rows(&feats, train), test: rows(&feats, test) },
            ArmFeatures { name: "b".into(), train: rows(&half, train), test: rows(&half, test) },
        ])
    })
    .unwrap();
    assert_eq!(out.arms.len(), 3);
    for arm in &out.arms {
        assert_eq!(arm.pooled.total(), 70);
        let mut seen: Vec<usize> = arm.predictions.iter().map(|p| p.subject).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..70).collect::<Vec<_>>());
        let mut sum = ConfusionMatrix::default();
        arm.per_fold.iter().for_each(|c| sum += *c);
        assert_eq!(sum, arm.pooled);
    }
    assert!(out.arm("a").unwrap().uar().unwrap() > 60.0);
    // every fit in every fold stayed on training subjects
    for (fold, _, subjects) in &out.guard.fits {
        assert!(subjects.iter().all(|s| !plan.test(*fold).contains(s)));
    }
}

#[test]
fn leakage_guard_rejects_fits_on_test_subjects() {
    let (ids, labels, feats) = planted(2);
    let plan = FoldPlan::stratified(&labels, 5, 2).unwrap();
    let err = cross_validate(&ids, &labels, &plan, &SvmOptions::default(), &[], |_, train, test, guard| {
        let everyone: Vec<usize> = train.iter().chain(test).copied().collect();
        guard.record_fit("leaky pca", &everyone)?;
        Ok(vec![ArmFeatures { name: "a".into(), train: rows(&feats, train), test: rows(&feats, test) }])
    })
    .unwrap_err();
    assert!(matches!(err, Error::Leakage(_)), "{err}");
}

#[test]
fn shuffled_labels_score_near_chance() {
    let mut uars = Vec::new();
    for seed in 0..5 {
        let (ids, mut labels, feats) = planted(seed);
        use rand::seq::SliceRandom;
        labels.shuffle(&mut rng::stream(seed, "null-labels"));
        let plan = FoldPlan::stratified(&labels, 5, seed).unwrap();
        let out = cross_validate(&ids, &labels, &plan, &SvmOptions::default(), &[], |_, train, test, _| {
            Ok(vec![ArmFeatures { name: "a".into(), train: rows(&feats, train), test: rows(&feats, test) }])
        })
        .unwrap();
        uars.push(out.arms[0].uar().unwrap());
    }
    let mean = uars.iter().sum::<f64>() / 5.0;
    assert!((mean - 100.0 / 3.0).abs() <= 10.0, "{uars:?}");
}
