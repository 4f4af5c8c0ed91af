mod common;

use common::qp::{random_gram, random_labels, reference_dual};
use migraph::kernel::GramMatrix;
use migraph::learn::{krr_train, ovo_train, svm_train, DEFAULT_TOL};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn smo_matches_reference_qp() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..25 {
        let n = rng.gen_range(2..=10);
        let k = random_gram(&mut rng, n);
        let y = random_labels(&mut rng, n);
        let c = [0.1, 1.0, 10.0, 100.0][trial % 4];
        let model = svm_train(&k, &y, c, 1e-9).unwrap();
        let reference = reference_dual(&k, &y, c);
        let got = model.dual_objective(&k);
        assert!(
            (got - reference).abs() <= 1e-6,
            "trial {trial} (n = {n}, C = {c}): SMO {got}, reference {reference}"
        );
        for (&a, &s) in model.alpha.iter().zip(&y) {
            assert!((-1e-12..=c + 1e-12).contains(&a), "alpha {a} outside [0, {c}] for label {s}");
        }
        let balance: f64 = model.alpha.iter().zip(&y).map(|(a, &s)| a * s as f64).sum();
        assert!(balance.abs() < 1e-9);
    }
}

#[test]
fn smo_meets_kkt_at_default_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..25 {
        let n = rng.gen_range(2..=30);
        let k = random_gram(&mut rng, n);
        let y = random_labels(&mut rng, n);
        let model = svm_train(&k, &y, 10.0, DEFAULT_TOL).unwrap();
        assert!(model.kkt_gap(&k) <= DEFAULT_TOL);
    }
}

#[test]
fn svm_prediction_survives_permuting_training_bags() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let n = 12;
    let k = random_gram(&mut rng, n);
    let y = random_labels(&mut rng, n);
    let model = svm_train(&k, &y, 1.0, 1e-10).unwrap();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let kp = k.select(&perm);
    let yp: Vec<i8> = perm.iter().map(|&i| y[i]).collect();
    let permuted = svm_train(&kp, &yp, 1.0, 1e-10).unwrap();
    for q in 0..n {
        let row = k.row(q).to_vec();
        let row_p: Vec<f64> = perm.iter().map(|&i| row[i]).collect();
        let (a, _) = model.predict(&row).unwrap();
        let (b, _) = permuted.predict(&row_p).unwrap();
        assert!((a - b).abs() < 1e-6, "bag {q}: {a} vs {b}");
    }
}

#[test]
fn training_bags_with_free_multipliers_sit_on_the_margin() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let k = random_gram(&mut rng, 15);
    let y = random_labels(&mut rng, 15);
    let model = svm_train(&k, &y, 10.0, 1e-10).unwrap();
    for i in 0..15 {
        let (score, sign) = model.predict(k.row(i)).unwrap();
        let a = model.alpha[i];
        if a > 1e-8 && a < 10.0 - 1e-8 {
            assert!((score * y[i] as f64 - 1.0).abs() < 1e-6);
            assert_eq!(sign, y[i]);
        }
    }
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

#[test]
fn krr_matches_direct_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    for _ in 0..10 {
        let n = rng.gen_range(2..=12);
        let k = random_gram(&mut rng, n);
        let t: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let lambda = [1e-3, 1e-2, 0.1, 1.0][rng.gen_range(0..4)];
        let model = krr_train(&k, &t, lambda).unwrap();
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| k.get(i, j) + if i == j { lambda } else { 0.0 }).collect())
            .collect();
        let beta = solve(a, t);
        for (x, y) in model.beta.iter().zip(&beta) {
            assert!((x - y).abs() <= 1e-8 * y.abs().max(1.0));
        }
    }
}

#[test]
fn ovo_recovers_separated_classes() {
    let n = 12;
    let class = |i: usize| (i % 3) as u32;
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            v[i * n + j] = if class(i) == class(j) { 1.0 } else { 0.05 };
        }
    }
    let k = GramMatrix::from_values(n, v).unwrap();
    let labels: Vec<u32> = (0..n).map(class).collect();
    let model = ovo_train(&k, &labels, 10.0, DEFAULT_TOL).unwrap();
    assert_eq!(model.pairs.len(), 3);
    for i in 0..n {
        assert_eq!(model.predict(k.row(i)).unwrap(), labels[i]);
    }
}
