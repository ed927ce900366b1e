//! Slow, obviously-correct references for the fast kernels.

use bsen_core::nn::{Conv3d, Tensor5};

/// 3×3×3 "same" convolution as seven nested loops over a zero-padded view.
pub fn conv3d_nested(x: &Tensor5<f64>, layer: &Conv3d<f64>) -> Tensor5<f64> {
    let [nb, nc, nx, ny, nz] = x.shape();
    let at = |b: usize, c: usize, i: isize, j: isize, k: isize| -> f64 {
        if i < 0 || j < 0 || k < 0 || i >= nx as isize || j >= ny as isize || k >= nz as isize {
            return 0.0;
        }
        x.data()[(((b * nc + c) * nz + k as usize) * ny + j as usize) * nx + i as usize]
    };
    let co = layer.out_channels;
    let mut out = vec![0.0; nb * co * nx * ny * nz];
    for b in 0..nb {
        for o in 0..co {
            for k in 0..nz {
                for j in 0..ny {
                    for i in 0..nx {
                        let mut acc = layer.bias[o];
                        for c in 0..nc {
                            for dz in 0..3 {
                                for dy in 0..3 {
                                    for dx in 0..3 {
                                        let w = layer.weight[(o * nc + c) * 27 + dz * 9 + dy * 3 + dx];
                                        acc += w * at(b, c, i as isize + dx as isize - 1, j as isize + dy as isize - 1, k as isize + dz as isize - 1);
                                    }
                                }
                            }
                        }
                        out[(((b * co + o) * nz + k) * ny + j) * nx + i] = acc;
                    }
                }
            }
        }
    }
    Tensor5::from_vec([nb, co, nx, ny, nz], out).unwrap()
}

/// Accelerated projected gradient on the box-constrained dual
/// `min ½ αᵀQα − Σα, 0 ≤ α ≤ C`, with the bias as a unit feature.
/// Returns the primal weights `(w, b)`.
pub fn qp_oracle(x: &[Vec<f64>], y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = x.len();
    let k = |i: usize, j: usize| x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum::<f64>() + 1.0;
    let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| y[i] * y[j] * k(i, j)).collect()).collect();
    // Lipschitz constant bound: the Frobenius norm
    let lip = q.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let grad: Vec<f64> = (0..n).map(|i| q[i].iter().zip(&z).map(|(p, r)| p * r).sum::<f64>() - 1.0).collect();
        let next: Vec<f64> = (0..n).map(|i| (z[i] - grad[i] / lip).clamp(0.0, c)).collect();
        let tn = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = (0..n).map(|i| next[i] + (t - 1.0) / tn * (next[i] - a[i])).collect();
        a = next;
        t = tn;
    }
    let d = x[0].len();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for i in 0..n {
        for j in 0..d {
            w[j] += a[i] * y[i] * x[i][j];
        }
        b += a[i] * y[i];
    }
    (w, b)
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    simpson(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), 1e-15, 50)
}

/// Two-sided p of Student's t by integrating the density in the angle
/// s = sqrt(df)·tan(θ), where it becomes cos(θ)^(df−1); no gamma functions.
pub fn p_by_quadrature(t: f64, df: f64) -> f64 {
    let g = |th: f64| th.cos().powf(df - 1.0);
    let total = integrate(&g, 0.0, std::f64::consts::FRAC_PI_2);
    let inner = integrate(&g, 0.0, (t.abs() / df.sqrt()).atan());
    1.0 - inner / total
}

pub fn pooled_t(a: &[f64], b: &[f64]) -> f64 {
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let ss = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>() + b.iter().map(|v| (v - mb).powi(2)).sum::<f64>();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sp2 = ss / (na + nb - 2.0);
    (ma - mb) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt()
}
