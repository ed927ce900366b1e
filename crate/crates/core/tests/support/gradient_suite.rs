//! Central finite differences against the analytic backward passes.

use bsen_core::model::{contrastive_loss, reconstruction_loss, Bsen, BsenConfig, CenterBank, LatentBatch};
use bsen_core::nn::{BatchNorm3d, Conv3d, Layer, Sequential, Tensor5};
use bsen_core::rng;
use rand::seq::index::sample;
use rand::Rng;

pub const H: f64 = 1e-6;
pub const TOL: f64 = 1e-4;
const PROBES: usize = 40;

/// Worst `|a − n| / max(|a|, |n|, 1e-3·scale)` over the probed coordinates,
/// `scale` being the largest gradient magnitude seen. Entries that are
/// structurally zero (a conv bias ahead of batchnorm) would otherwise be
/// judged on pure round-off.
fn worst_relative(pairs: &[(f64, f64)]) -> f64 {
    let scale = pairs.iter().fold(0.0f64, |m, &(a, n)| m.max(a.abs()).max(n.abs()));
    let floor = (1e-3 * scale).max(1e-12);
    pairs.iter().map(|&(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor)).fold(0.0, f64::max)
}

fn central_difference(theta: &[f64], i: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut p = theta.to_vec();
    p[i] = theta[i] + H;
    let up = f(&p);
    p[i] = theta[i] - H;
    let down = f(&p);
    (up - down) / (2.0 * H)
}

fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)).collect()
}

fn flat(parts: Vec<&[f64]>) -> Vec<f64> {
    parts.concat()
}

fn load(parts: Vec<&mut [f64]>, theta: &[f64]) {
    let mut at = 0;
    for p in parts {
        p.copy_from_slice(&theta[at..at + p.len()]);
        at += p.len();
    }
}

/// `Σ (y − t)²` through a layer stack; checks parameters and the input.
fn check_stack(layers: Vec<Layer<f64>>, shape: [usize; 5], rng: &mut impl Rng) -> f64 {
    let mut net = Sequential::new(layers);
    let x = Tensor5::from_vec(shape, gaussian(rng, shape.iter().product())).unwrap();
    let out_len = net.forward_eval(x.clone()).unwrap().data().len();
    let target = gaussian(rng, out_len);
    let sq = |y: &Tensor5<f64>| y.data().iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();

    let (y, tape) = net.forward_train(x.clone()).unwrap();
    let dy = Tensor5::from_vec(y.shape(), y.data().iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect()).unwrap();
    let mut grads = net.zero_grads();
    let dx = net.backward(&tape, dy, &mut grads, true).unwrap().unwrap();

    let theta = flat(net.params());
    let analytic = grads.concat();
    let mut pairs = Vec::new();
    for i in sample(rng, theta.len(), PROBES.min(theta.len())) {
        let mut probe = net.clone();
        let n = central_difference(&theta, i, |t| {
            load(probe.params_mut(), t);
            sq(&probe.forward_train(x.clone()).unwrap().0)
        });
        pairs.push((analytic[i], n));
    }
    let xs = x.data().to_vec();
    for i in sample(rng, xs.len(), PROBES.min(xs.len())) {
        let mut probe = net.clone();
        let n = central_difference(&xs, i, |t| {
            let xi = Tensor5::from_vec(shape, t.to_vec()).unwrap();
            sq(&probe.forward_train(xi).unwrap().0)
        });
        pairs.push((dx.data()[i], n));
    }
    worst_relative(&pairs)
}

fn small_dims(rng: &mut impl Rng) -> [usize; 3] {
    [2 * rng.gen_range(1..=3), 2 * rng.gen_range(1..=3), 2 * rng.gen_range(1..=3)]
}

fn random_centers(rng: &mut impl Rng, m: usize, dim: usize) -> CenterBank {
    CenterBank::from_centers((0..m).map(|_| gaussian(rng, dim)).collect()).unwrap()
}

/// Contrastive loss alone, including the quotient denominator.
fn check_contrastive(rng: &mut impl Rng) -> f64 {
    let (b, dim, m) = (rng.gen_range(2..=5), rng.gen_range(3..=12), 2);
    let delta = 1.0;
    let centers = random_centers(rng, m, dim);
    let clusters: Vec<usize> = (0..b).map(|_| rng.gen_range(0..m)).collect();
    let z = gaussian(rng, b * dim);
    let batch = |z: &[f64]| LatentBatch {
        latents: Tensor5::from_vec([b, dim, 1, 1, 1], z.to_vec()).unwrap(),
        clusters: clusters.clone(),
    };
    let (_, grad) = contrastive_loss(&batch(&z), &centers, delta).unwrap();
    let pairs: Vec<_> = (0..z.len())
        .map(|i| (grad.data()[i], central_difference(&z, i, |t| contrastive_loss(&batch(t), &centers, delta).unwrap().0)))
        .collect();
    worst_relative(&pairs)
}

/// Reconstruction loss alone.
fn check_reconstruction(rng: &mut impl Rng) -> f64 {
    let shape = [rng.gen_range(1..=3), 1, 2, 3, 2];
    let n: usize = shape.iter().product();
    let target = Tensor5::from_vec(shape, gaussian(rng, n)).unwrap();
    let y = gaussian(rng, n);
    let t = |v: &[f64]| Tensor5::from_vec(shape, v.to_vec()).unwrap();
    let (_, grad) = reconstruction_loss(&t(&y), &target).unwrap();
    let pairs: Vec<_> = (0..n)
        .map(|i| (grad.data()[i], central_difference(&y, i, |v| reconstruction_loss(&t(v), &target).unwrap().0)))
        .collect();
    worst_relative(&pairs)
}

/// The whole encoder-decoder under `L_rec + α·L_c`, centers held fixed.
fn check_network(rng: &mut impl Rng, seed: u64) -> f64 {
    let config = BsenConfig {
        input_dims: [8, 8, 8 * rng.gen_range(1..=2)],
        channels: [rng.gen_range(2..=4), rng.gen_range(2..=3), rng.gen_range(1..=2)],
        alpha: 0.5,
        seed,
        ..BsenConfig::default()
    };
    let model = Bsen::<f64>::build(&config).unwrap();
    let b = 3;
    let x = Tensor5::from_vec(model.input_shape(b), gaussian(rng, b * 8 * 8 * config.input_dims[2])).unwrap();
    let clusters = vec![0, 1, 0];
    let centers = random_centers(rng, 2, config.latent_dim());
    let objective = |m: &mut Bsen<f64>| {
        let (z, _) = m.encoder.forward_train(x.clone()).unwrap();
        let (y, _) = m.decoder.forward_train(z.clone()).unwrap();
        let rec = reconstruction_loss(&y, &x).unwrap().0;
        let lc = contrastive_loss(&LatentBatch { latents: z, clusters: clusters.clone() }, &centers, config.delta).unwrap().0;
        rec + config.alpha * lc
    };

    let mut m = model.clone();
    let (z, enc_tape) = m.encoder.forward_train(x.clone()).unwrap();
    let (y, dec_tape) = m.decoder.forward_train(z.clone()).unwrap();
    let (_, dy) = reconstruction_loss(&y, &x).unwrap();
    let mut dec_grads = m.decoder.zero_grads();
    let mut dz = m.decoder.backward(&dec_tape, dy, &mut dec_grads, true).unwrap().unwrap();
    let (_, dlc) = contrastive_loss(&LatentBatch { latents: z, clusters: clusters.clone() }, &centers, config.delta).unwrap();
    for (g, c) in dz.data_mut().iter_mut().zip(dlc.data()) {
        *g += config.alpha * c;
    }
    let mut enc_grads = m.encoder.zero_grads();
    m.encoder.backward(&enc_tape, dz, &mut enc_grads, false).unwrap();
    let analytic = [enc_grads.concat(), dec_grads.concat()].concat();

    let theta = flat(model.params());
    assert_eq!(theta.len(), analytic.len());
    let mut pairs = Vec::new();
    for i in sample(rng, theta.len(), 60.min(theta.len())) {
        let mut probe = model.clone();
        let n = central_difference(&theta, i, |t| {
            load(probe.params_mut(), t);
            objective(&mut probe)
        });
        pairs.push((analytic[i], n));
    }
    worst_relative(&pairs)
}

/// Worst relative error of each of the 20 configurations, labelled.
pub fn run_suite() -> Vec<(u64, &'static str, f64)> {
    let mut worst = Vec::new();
    for k in 0..20u64 {
        let mut rng = rng::stream(k, "gradient-suite");
        let cin = rng.gen_range(1..=3);
        let cout = rng.gen_range(1..=4);
        let batch = rng.gen_range(2..=3);
        let dims = small_dims(&mut rng);
        let shape = [batch, cin, dims[0], dims[1], dims[2]];
        let (what, err) = match k % 6 {
            0 => ("conv", check_stack(vec![Layer::Conv(Conv3d::init(cin, cout, &mut rng))], shape, &mut rng)),
            1 => (
                "conv+batchnorm+relu",
                check_stack(
                    vec![Layer::Conv(Conv3d::init(cin, cout, &mut rng)), Layer::BatchNorm(BatchNorm3d::new(cout)), Layer::Relu],
                    shape,
                    &mut rng,
                ),
            ),
            2 => (
                "conv+maxpool+upsample+conv",
                check_stack(
                    vec![
                        Layer::Conv(Conv3d::init(cin, cout, &mut rng)),
                        Layer::MaxPool,
                        Layer::Upsample,
                        Layer::Conv(Conv3d::init(cout, 1, &mut rng)),
                    ],
                    shape,
                    &mut rng,
                ),
            ),
            3 => ("reconstruction loss", check_reconstruction(&mut rng)),
            4 => ("contrastive loss", check_contrastive(&mut rng)),
            _ => ("encoder-decoder", check_network(&mut rng, k)),
        };
        worst.push((k, what, err));
    }
    worst
}
