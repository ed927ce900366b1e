use bsen_core::features::{FastIca, Pca};
use bsen_core::linalg::{dot, Matrix};
use bsen_core::rng;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng::stream(seed, "features-test");
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn pca_matches_dense_covariance_eigendecomposition() {
    // 20 samples in 50 dims goes through the Gram route; compare against a
    // covariance eigendecomposition done by an independent solver
    let x = random_matrix(20, 50, 1);
    let k = 10;
    let pca = Pca::fit(&x, k).unwrap();

    let m = DMatrix::from_row_slice(20, 50, &x.data);
    let mean = m.row_mean();
    let mut c = m.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    let cov = c.transpose() * &c / 19.0;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..50).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    for j in 0..k {
        let oracle = eig.eigenvectors.column(order[j]);
        assert!((pca.explained_variance[j] - eig.eigenvalues[order[j]]).abs() < 1e-6);
        let ours = pca.components.row(j);
        let cos: f64 = ours.iter().zip(oracle.iter()).map(|(a, b)| a * b).sum();
        assert!((cos.abs() - 1.0).abs() < 1e-6, "component {j}: |cos| = {}", cos.abs());
        // projections agree up to the component's sign
        for i in 0..20 {
            let p = pca.transform(x.row(i)).unwrap()[j];
            let q: f64 = c.row(i).iter().zip(oracle.iter()).map(|(a, b)| a * b).sum();
            assert!((p - cos.signum() * q).abs() < 1e-6);
        }
    }
    assert!(pca.explained_variance.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn pca_with_more_samples_than_dims_is_orthonormal() {
    let x = random_matrix(40, 6, 2);
    let pca = Pca::fit(&x, 3).unwrap();
    for j in 0..3 {
        let v = pca.components.row(j);
        assert!((dot(v, v) - 1.0).abs() < 1e-12);
        for i in 0..j {
            assert!(dot(v, pca.components.row(i)).abs() < 1e-10);
        }
    }
    assert!(pca.explained_variance.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn fastica_separates_two_uniform_sources() {
    let mut r = rng::stream(3, "ica-sources");
    let n = 2000;
    let s: Vec<[f64; 2]> = (0..n).map(|_| [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)]).collect();
    let a = [[r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)], [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)]];
    let rows: Vec<Vec<f64>> = s
        .iter()
        .map(|v| vec![a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]])
        .collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let ica = FastIca::fit(&x, 2, &mut rng::stream(3, "ica")).unwrap();
    assert!(ica.converged);
    let est: Vec<Vec<f64>> = rows.iter().map(|r| ica.transform(r).unwrap()).collect();
    for src in 0..2 {
        let truth: Vec<f64> = s.iter().map(|v| v[src]).collect();
        let best = (0..2)
            .map(|c| correlation(&truth, &est.iter().map(|e| e[c]).collect::<Vec<_>>()).abs())
            .fold(0.0, f64::max);
        assert!(best > 0.95, "source {src}: best |corr| {best}");
    }
    // components are decorrelated on the training data
    let c0: Vec<f64> = est.iter().map(|e| e[0]).collect();
    let c1: Vec<f64> = est.iter().map(|e| e[1]).collect();
    assert!(correlation(&c0, &c1).abs() < 1e-6);
}

#[test]
fn fastica_components_are_uncorrelated_in_higher_dims() {
    let x = random_matrix(30, 80, 4);
    let ica = FastIca::fit(&x, 6, &mut rng::stream(4, "ica")).unwrap();
    let est: Vec<Vec<f64>> = (0..30).map(|i| ica.transform(x.row(i)).unwrap()).collect();
    for a in 0..6 {
        for b in 0..a {
            let ca: Vec<f64> = est.iter().map(|e| e[a]).collect();
            let cb: Vec<f64> = est.iter().map(|e| e[b]).collect();
            assert!(correlation(&ca, &cb).abs() < 1e-6);
        }
    }
}

#[test]
fn fastica_flags_gaussian_input() {
    let mut r = rng::stream(5, "gauss");
    let rows: Vec<Vec<f64>> =
        (0..500).map(|_| (0..4).map(|_| StandardNormal.sample(&mut r)).collect()).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let ica = FastIca::fit(&x, 4, &mut rng::stream(5, "ica")).unwrap();
    assert!(!ica.converged, "converged after {} iterations", ica.iterations);
    assert_eq!(ica.iterations, bsen_core::features::ICA_MAX_ITER);
}

#[test]
fn fastica_is_deterministic() {
    let x = random_matrix(25, 40, 6);
    let a = FastIca::fit(&x, 5, &mut rng::stream(9, "ica")).unwrap();
    let b = FastIca::fit(&x, 5, &mut rng::stream(9, "ica")).unwrap();
    assert_eq!(a, b);
}
