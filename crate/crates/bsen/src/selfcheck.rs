//! Quick installation check: metric arithmetic, shapes, gradients and a few
//! independent oracles. Each check reports its worst error.

use bsen_core::classify::{round2, uar_from_recalls};
use bsen_core::model::{contrastive_loss, reconstruction_loss, Bsen, BsenConfig, CenterBank, LatentBatch};
use bsen_core::nn::gradcheck::{check_coordinates, check_sequential, DEFAULT_STEP};
use bsen_core::nn::{BatchNorm3d, Conv3d, Layer, Sequential, Tensor5};
use bsen_core::rng;
use bsen_core::stats::two_sided_t_test;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn random_tensor(shape: [usize; 5], rng: &mut impl Rng) -> Tensor5<f64> {
    let n = shape.iter().product();
    Tensor5::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape matches")
}

fn uar_arithmetic() -> Check {
    let cases = [([61.54, 56.52, 33.33], 50.46), ([61.54, 73.91, 42.86], 59.44)];
    let worst = cases.iter().map(|(r, want)| (round2(uar_from_recalls(r)) - want).abs()).fold(0.0, f64::max);
    check("uar arithmetic", worst <= 0.01 + 1e-12, format!("max deviation {worst:.4}"))
}

fn shape_law() -> Check {
    let cfg = BsenConfig { input_dims: [64, 80, 64], ..BsenConfig::default() };
    let result = Bsen::<f32>::build(&cfg).and_then(|m| {
        let x = Tensor5::zeros(m.input_shape(1));
        let latent = m.encode(&x)?;
        let pooled = bsen_core::features::pool_channels(latent.latents.data(), cfg.latent_channels())?;
        Ok((latent.dim(), pooled.len()))
    });
    match result {
        Ok((d, f)) => check("shape law", d == 5120 && f == 640, format!("bottleneck {d}, pooled feature {f}")),
        Err(e) => check("shape law", false, e.to_string()),
    }
}

fn layer_gradients(configs: usize) -> Check {
    let mut rng = rng::stream(11, "selfcheck/grad");
    let mut worst: f64 = 0.0;
    for k in 0..configs {
        let cin = rng.gen_range(1..=3);
        let cout = rng.gen_range(1..=6);
        let dims = [2 * rng.gen_range(1..=3), 2 * rng.gen_range(1..=3), 2 * rng.gen_range(1..=2)];
        let nb = rng.gen_range(2..=3);
        let nets = [
            vec![Layer::Conv(Conv3d::init(cin, cout, &mut rng))],
            vec![Layer::Conv(Conv3d::init(cin, cout, &mut rng)), Layer::BatchNorm(BatchNorm3d::new(cout)), Layer::Relu],
            vec![Layer::Conv(Conv3d::init(cin, cout, &mut rng)), Layer::MaxPool, Layer::Upsample],
        ];
        for layers in nets {
            let net = Sequential::new(layers);
            let x = random_tensor([nb, cin, dims[0], dims[1], dims[2]], &mut rng);
            let target = random_tensor([nb, cout, dims[0], dims[1], dims[2]], &mut rng);
            match check_sequential(&net, &x, &target, 40, &mut rng) {
                Ok(e) => worst = worst.max(e),
                Err(e) => return check("layer gradients", false, format!("config {k}: {e}")),
            }
        }
    }
    check("layer gradients", worst < 1e-4, format!("max relative error {worst:.2e} over {configs} configurations"))
}

fn loss_gradients(configs: usize) -> Check {
    let mut rng = rng::stream(12, "selfcheck/loss");
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let shape = [3, 2, 2, 2, 1];
        let latents = random_tensor(shape, &mut rng);
        let clusters = vec![0, 1, rng.gen_range(0..2)];
        let centers = CenterBank::from_centers((0..2).map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect())
            .expect("two centers");
        let delta = rng.gen_range(0.1..2.0);
        let f = |t: &[f64]| {
            let b = LatentBatch { latents: Tensor5::from_vec(shape, t.to_vec()).unwrap(), clusters: clusters.clone() };
            contrastive_loss(&b, &centers, delta).unwrap().0
        };
        let batch = LatentBatch { latents: latents.clone(), clusters: clusters.clone() };
        let (_, g) = contrastive_loss(&batch, &centers, delta).unwrap();
        let all: Vec<usize> = (0..latents.data().len()).collect();
        worst = worst.max(check_coordinates(latents.data(), g.data(), &all, DEFAULT_STEP, f).max_rel_error);

        let recon = random_tensor(shape, &mut rng);
        let target = random_tensor(shape, &mut rng);
        let (_, g) = reconstruction_loss(&recon, &target).unwrap();
        let f = |t: &[f64]| reconstruction_loss(&Tensor5::from_vec(shape, t.to_vec()).unwrap(), &target).unwrap().0;
        worst = worst.max(check_coordinates(recon.data(), g.data(), &all, DEFAULT_STEP, f).max_rel_error);
    }
    check("loss gradients", worst < 1e-4, format!("max relative error {worst:.2e} over {configs} configurations"))
}

/// Direct nested-loop convolution with zero padding.
fn naive_conv(conv: &Conv3d<f64>, x: &Tensor5<f64>) -> Vec<f64> {
    let [nb, cin, nx, ny, nz] = x.shape();
    let cout = conv.out_channels;
    let mut y = vec![0.0; nb * cout * nx * ny * nz];
    let at = |b: usize, c: usize, i: usize, j: usize, k: usize, n: usize| (((b * n + c) * nz + k) * ny + j) * nx + i;
    for b in 0..nb {
        for o in 0..cout {
            for k in 0..nz {
                for j in 0..ny {
                    for i in 0..nx {
                        let mut s = conv.bias[o];
                        for c in 0..cin {
                            for dz in 0..3 {
                                for dy in 0..3 {
                                    for dx in 0..3 {
                                        let (xi, yj, zk) = (i + dx, j + dy, k + dz);
                                        if xi < 1 || yj < 1 || zk < 1 || xi > nx || yj > ny || zk > nz {
                                            continue;
                                        }
                                        let w = conv.weight[(((o * cin + c) * 3 + dz) * 3 + dy) * 3 + dx];
                                        s += w * x.data()[at(b, c, xi - 1, yj - 1, zk - 1, cin)];
                                    }
                                }
                            }
                        }
                        y[at(b, o, i, j, k, cout)] = s;
                    }
                }
            }
        }
    }
    y
}

fn conv_oracle() -> Check {
    let mut rng = rng::stream(13, "selfcheck/conv");
    let mut worst: f64 = 0.0;
    for cout in [1, 6] {
        let conv = Conv3d::<f64>::init(2, cout, &mut rng);
        let x = random_tensor([2, 2, 5, 6, 7], &mut rng);
        let y = conv.forward(&x).expect("valid shapes");
        let d = y.data().iter().zip(naive_conv(&conv, &x)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(d);
    }
    check("conv3d oracle", worst < 1e-6, format!("max abs difference {worst:.2e}"))
}

/// Adaptive Simpson on `[a, b]`.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

/// Two-sided Student-t tail by quadrature: with `x = √ν·tan θ` the tail
/// mass is `∫_{θ0}^{π/2} cos^{ν−1}θ dθ / ∫_0^{π/2} cos^{ν−1}θ dθ`.
pub fn t_tail_quadrature(t: f64, df: f64) -> f64 {
    let f = |th: f64| th.cos().powf(df - 1.0);
    let half = std::f64::consts::FRAC_PI_2;
    let theta0 = (t.abs() / df.sqrt()).atan();
    simpson(&f, theta0, half, 1e-14) / simpson(&f, 0.0, half, 1e-14)
}

fn ttest_oracle() -> Check {
    let mut rng = rng::stream(14, "selfcheck/ttest");
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let a: Vec<f64> = (0..26).map(|_| rng.gen_range(-1.0..1.5)).collect();
        let b: Vec<f64> = (0..21).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = two_sided_t_test(&a, &b).expect("non-degenerate samples");
        worst = worst.max((r.p - t_tail_quadrature(r.t, r.df)).abs());
    }
    check("t-test oracle", worst < 1e-8, format!("max |p - quadrature| {worst:.2e}"))
}

pub fn run_all() -> Vec<Check> {
    vec![uar_arithmetic(), shape_law(), layer_gradients(5), loss_gradients(5), conv_oracle(), ttest_oracle()]
}
