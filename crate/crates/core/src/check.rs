//! Self-checks behind the `check` command: backward passes against central
//! finite differences in double precision, and fast kernels against naive
//! reference loops.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::eval::{confusion_matrix, k_smallest_mask, ConfusionMatrix, DescriptorSet, SelectionAxis};
use crate::layers::{
    conv2d_backward, conv2d_forward, fc_backward, fc_forward, lrn_backward, lrn_forward,
    maxpool_backward, maxpool_forward, relu_backward, relu_forward, LrnParams,
};
use crate::loss::{triplet_cost_grad, triplet_terms};
use crate::network::{Network, NetworkSpec, ParameterSet};
use crate::tensor::{Shape4, Tensor};

pub const LAYER_TOLERANCE: f64 = 1e-3;
pub const LOSS_TOLERANCE: f64 = 1e-6;
pub const NETWORK_TOLERANCE: f64 = 1e-2;
pub const NETWORK_PROBES: usize = 120;
pub const ORACLE_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    /// Worst observed error (relative for gradients, absolute mismatch count for exact checks).
    pub metric: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub elapsed: Duration,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<4} {:<34} {:>11.3e} < {:<8.0e} {:>7.2}s",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.metric,
            self.tolerance,
            self.elapsed.as_secs_f64()
        )
    }
}

fn timed(name: &str, tolerance: f64, f: impl FnOnce() -> Result<f64>) -> CheckReport {
    let start = Instant::now();
    let metric = f().unwrap_or(f64::INFINITY);
    CheckReport {
        name: name.to_string(),
        metric,
        tolerance,
        passed: metric < tolerance,
        elapsed: start.elapsed(),
    }
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Largest relative error between `analytic[i]` and the central difference of
/// `f` at coordinate `i` of `x`, over `probes`.
pub fn finite_difference_error(
    x: &mut [f64],
    analytic: &[f64],
    probes: impl IntoIterator<Item = usize>,
    h: f64,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in probes {
        let saved = x[i];
        x[i] = saved + h;
        let plus = f(x)?;
        x[i] = saved - h;
        let minus = f(x)?;
        x[i] = saved;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

/// As [`finite_difference_error`] with the fourth-order five-point stencil.
pub fn finite_difference_error5(
    x: &mut [f64],
    analytic: &[f64],
    probes: impl IntoIterator<Item = usize>,
    h: f64,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in probes {
        let saved = x[i];
        let mut at = |d: f64| {
            x[i] = saved + d;
            let r = f(x);
            x[i] = saved;
            r
        };
        let numeric = (at(-2.0 * h)? - 8.0 * at(-h)? + 8.0 * at(h)? - at(2.0 * h)?) / (12.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape4) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Values bounded away from zero so finite differences never straddle a ReLU kink.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: Shape4) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let v: f64 = rng.gen_range(0.05..1.0);
        if rng.gen_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn with_data(shape: Shape4, data: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(shape, data.to_vec()).expect("shape matches")
}

fn all(n: usize) -> std::ops::Range<usize> {
    0..n
}

fn check_conv(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0f64;
    for &(stride, pad) in &[(1, 0), (1, 1), (2, 1)] {
        let xs = Shape4::new(2, 3, 7, 6);
        let ws = Shape4::new(4, 3, 3, 3);
        let mut x = random_tensor(rng, xs);
        let mut w = random_tensor(rng, ws);
        let mut b: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let out = conv2d_forward(&x, &w, &b, stride, pad)?;
        let r = random_tensor(rng, out.shape());
        let g = conv2d_backward(&x, &w, &r, stride, pad)?;
        let (wc, bc, rc) = (w.clone(), b.clone(), r.clone());
        worst = worst.max(finite_difference_error(
            x.data_mut(),
            g.input.data(),
            all(xs.len()),
            1e-5,
            |d| Ok(dot(conv2d_forward(&with_data(xs, d), &wc, &bc, stride, pad)?.data(), rc.data())),
        )?);
        let xc = x.clone();
        worst = worst.max(finite_difference_error(
            w.data_mut(),
            g.weights.data(),
            all(ws.len()),
            1e-5,
            |d| Ok(dot(conv2d_forward(&xc, &with_data(ws, d), &bc, stride, pad)?.data(), rc.data())),
        )?);
        let wc = w.clone();
        worst = worst.max(finite_difference_error(&mut b, &g.bias, all(4), 1e-5, |d| {
            Ok(dot(conv2d_forward(&xc, &wc, d, stride, pad)?.data(), rc.data()))
        })?);
    }
    Ok(worst)
}

fn check_relu(rng: &mut ChaCha8Rng) -> Result<f64> {
    let s = Shape4::new(2, 3, 4, 5);
    let mut x = away_from_zero(rng, s);
    let r = random_tensor(rng, s);
    let g = relu_backward(&x, &r)?;
    finite_difference_error(x.data_mut(), g.data(), all(s.len()), 1e-6, |d| {
        Ok(dot(relu_forward(&with_data(s, d)).data(), r.data()))
    })
}

fn check_pool(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0f64;
    for &(window, stride) in &[(2, 2), (3, 2)] {
        let s = Shape4::new(2, 2, 7, 9);
        let mut x = random_tensor(rng, s);
        let p = maxpool_forward(&x, window, stride)?;
        let r = random_tensor(rng, p.output.shape());
        let g = maxpool_backward(s, &p.argmax, &r)?;
        worst = worst.max(finite_difference_error(x.data_mut(), g.data(), all(s.len()), 1e-6, |d| {
            Ok(dot(maxpool_forward(&with_data(s, d), window, stride)?.output.data(), r.data()))
        })?);
    }
    Ok(worst)
}

fn check_lrn(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0f64;
    let strong = LrnParams {
        size: 3,
        alpha: 0.5,
        beta: 0.75,
        k: 1.0,
    };
    for p in [LrnParams::default(), strong] {
        let s = Shape4::new(2, 7, 3, 4);
        let mut x = random_tensor(rng, s);
        x.data_mut().iter_mut().for_each(|v| *v *= 3.0);
        let r = random_tensor(rng, s);
        let g = lrn_backward(&x, &r, &p)?;
        worst = worst.max(finite_difference_error(x.data_mut(), g.data(), all(s.len()), 1e-5, |d| {
            Ok(dot(lrn_forward(&with_data(s, d), &p)?.data(), r.data()))
        })?);
    }
    Ok(worst)
}

fn check_fc(rng: &mut ChaCha8Rng) -> Result<f64> {
    let xs = Shape4::new(3, 2, 2, 3);
    let ws = Shape4::new(5, 12, 1, 1);
    let mut x = random_tensor(rng, xs);
    let mut w = random_tensor(rng, ws);
    let mut b: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let out = fc_forward(&x, &w, &b)?;
    let r = random_tensor(rng, out.shape());
    let g = fc_backward(&x, &w, &r)?;
    let (wc, bc) = (w.clone(), b.clone());
    let mut worst = finite_difference_error(x.data_mut(), g.input.data(), all(xs.len()), 1e-5, |d| {
        Ok(dot(fc_forward(&with_data(xs, d), &wc, &bc)?.data(), r.data()))
    })?;
    let xc = x.clone();
    worst = worst.max(finite_difference_error(w.data_mut(), g.weights.data(), all(ws.len()), 1e-5, |d| {
        Ok(dot(fc_forward(&xc, &with_data(ws, d), &bc)?.data(), r.data()))
    })?);
    worst = worst.max(finite_difference_error(&mut b, &g.bias, all(5), 1e-5, |d| {
        Ok(dot(fc_forward(&xc, &wc, d)?.data(), r.data()))
    })?);
    Ok(worst)
}

fn check_loss(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0f64;
    let d = 8;
    let mut tested = 0;
    while tested < 50 {
        let mut v: Vec<f64> = (0..3 * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let margin = rng.gen_range(0.5..2.0);
        let cost = |v: &[f64]| -> Result<f64> {
            Ok(triplet_terms(&v[..d], &v[d..2 * d], &v[2 * d..], margin)?.cost)
        };
        let c = cost(&v)?;
        if c < 1e-3 {
            // keep clear of the clamp
            continue;
        }
        let g = triplet_cost_grad(&v[..d], &v[d..2 * d], &v[2 * d..], margin)?;
        let analytic: Vec<f64> = [g.query, g.similar, g.dissimilar].concat();
        worst = worst.max(finite_difference_error5(&mut v, &analytic, all(3 * d), 1e-3, cost)?);
        tested += 1;
    }
    Ok(worst)
}

/// Flat views of every trainable tensor of a parameter set, in layer order.
fn flatten(params: &ParameterSet<f64>) -> Vec<f64> {
    params
        .layers()
        .iter()
        .flat_map(|l| [&l.weights, &l.bias])
        .flatten()
        .flat_map(|t| t.data().iter().copied())
        .collect()
}

fn unflatten(params: &mut ParameterSet<f64>, flat: &[f64]) {
    let mut offset = 0;
    for l in params.layers_mut() {
        for t in [&mut l.weights, &mut l.bias].into_iter().flatten() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }
}

fn check_network(rng: &mut ChaCha8Rng, probes: usize) -> Result<f64> {
    let spec = NetworkSpec::tiny();
    let mut params = ParameterSet::<f32>::init(&spec, rng.gen()).cast::<f64>();
    // non-zero biases so every bias gradient path is exercised
    for l in params.layers_mut() {
        if let Some(b) = l.bias.as_mut() {
            b.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }
    let shape = spec.input().tensor_shape();
    let images: Vec<Tensor<f64>> = (0..3).map(|_| Tensor::from_fn(shape, |_| rng.gen_range(0.0..1.0))).collect();
    // wide margin keeps the cost unclamped
    let margin = 1e3;
    let objective = |p: &ParameterSet<f64>| -> Result<f64> {
        let net = Network::new(&spec, p)?;
        let h: Vec<Vec<f64>> = images.iter().map(|i| net.forward(i)).collect::<Result<_>>()?;
        Ok(triplet_terms(&h[0], &h[1], &h[2], margin)?.cost)
    };
    let net = Network::new(&spec, &params)?;
    let passes: Vec<_> = images.iter().map(|i| net.forward_traced(i)).collect::<Result<_>>()?;
    let g = triplet_cost_grad(&passes[0].descriptor, &passes[1].descriptor, &passes[2].descriptor, margin)?;
    let mut grads = net.backward(&passes[0], &g.query)?;
    grads.accumulate(&net.backward(&passes[1], &g.similar)?)?;
    grads.accumulate(&net.backward(&passes[2], &g.dissimilar)?)?;
    let analytic: Vec<f64> = grads
        .layers
        .iter()
        .flat_map(|l| [&l.weights, &l.bias])
        .flatten()
        .flat_map(|t| t.data().iter().copied())
        .collect();
    let mut flat = flatten(&params);
    // probe every trainable tensor at least once, then random positions
    let mut picks = Vec::new();
    let mut offset = 0;
    for l in params.layers() {
        for t in [&l.weights, &l.bias].into_iter().flatten() {
            picks.push(offset + rng.gen_range(0..t.len()));
            offset += t.len();
        }
    }
    while picks.len() < probes {
        picks.push(rng.gen_range(0..flat.len()));
    }
    let mut scratch = params.clone();
    finite_difference_error(&mut flat, &analytic, picks, 1e-6, |d| {
        unflatten(&mut scratch, d);
        objective(&scratch)
    })
}

/// Direct seven-loop cross-correlation with zero padding.
pub fn naive_conv2d(input: &Tensor<f64>, weights: &Tensor<f64>, bias: &[f64], stride: usize, pad: usize) -> Vec<f64> {
    let (is, ws) = (input.shape(), weights.shape());
    let oh = (is.h + 2 * pad - ws.h) / stride + 1;
    let ow = (is.w + 2 * pad - ws.w) / stride + 1;
    let mut out = Vec::with_capacity(is.n * ws.n * oh * ow);
    for n in 0..is.n {
        for o in 0..ws.n {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = bias[o];
                    for c in 0..is.c {
                        for ky in 0..ws.h {
                            for kx in 0..ws.w {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                let ix = (x * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < is.h && (ix as usize) < is.w {
                                    acc += input.at(n, c, iy as usize, ix as usize) * weights.at(o, c, ky, kx);
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

fn check_conv_oracle(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0f64;
    for cin in 1..=2 {
        for cout in 1..=2 {
            for h in 1..=6 {
                for w in 1..=6 {
                    for k in 1..=3 {
                        for stride in 1..=2 {
                            for pad in 0..=1 {
                                if h + 2 * pad < k || w + 2 * pad < k {
                                    continue;
                                }
                                let x = random_tensor(rng, Shape4::new(1, cin, h, w));
                                let wt = random_tensor(rng, Shape4::new(cout, cin, k, k));
                                let b: Vec<f64> = (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect();
                                let fast = conv2d_forward(&x, &wt, &b, stride, pad)?;
                                let slow = naive_conv2d(&x, &wt, &b, stride, pad);
                                for (a, e) in fast.data().iter().zip(&slow) {
                                    worst = worst.max((a - e).abs());
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(worst)
}

/// Per-column selection by full stable sort.
pub fn sorted_mask(m: &ConfusionMatrix, k: usize) -> Vec<(usize, usize)> {
    let mut marked = Vec::new();
    for j in 0..m.cols() {
        let mut rows: Vec<usize> = (0..m.rows()).collect();
        rows.sort_by(|&a, &b| m.get(a, j).total_cmp(&m.get(b, j)));
        marked.extend(rows[..k].iter().map(|&i| (i, j)));
    }
    marked.sort_unstable();
    marked
}

fn check_mask_oracle(rng: &mut ChaCha8Rng, matrices: usize) -> Result<f64> {
    let mut mismatches = 0usize;
    for _ in 0..matrices {
        let rows = rng.gen_range(1..=30);
        let cols = rng.gen_range(1..=30);
        // a small value alphabet forces many ties
        let levels = rng.gen_range(2..=50);
        let data = (0..rows * cols).map(|_| rng.gen_range(0..levels) as f64).collect();
        let m = ConfusionMatrix::from_vec(rows, cols, data)?;
        let k = rng.gen_range(1..=rows);
        let fast: Vec<_> = k_smallest_mask(&m, k, SelectionAxis::PerQuery)?.marked().collect();
        if fast != sorted_mask(&m, k) {
            mismatches += 1;
        }
    }
    Ok(mismatches as f64)
}

fn check_confusion_oracle(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let dim = rng.gen_range(1..=32);
        let (a, b) = (rng.gen_range(1..=25), rng.gen_range(1..=25));
        let va: Vec<f32> = (0..a * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let vb: Vec<f32> = (0..b * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let db = DescriptorSet::new("db", dim, va.clone())?;
        let q = DescriptorSet::new("q", dim, vb.clone())?;
        let m = confusion_matrix(&db, &q)?;
        for i in 0..a {
            for j in 0..b {
                let mut s = 0.0f64;
                for t in 0..dim {
                    let d = va[i * dim + t] as f64 - vb[j * dim + t] as f64;
                    s += d * d;
                }
                let e = s.sqrt();
                worst = worst.max((m.get(i, j) - e).abs() / e.max(1.0));
            }
        }
    }
    Ok(worst)
}

fn check_descriptor_contract() -> Result<f64> {
    let spec = NetworkSpec::paper();
    let params = ParameterSet::<f32>::init(&spec, 0);
    let input = spec.input();
    let ok_input = (input.channels, input.height, input.width) == (3, 120, 160);
    let image = Tensor::filled(input.tensor_shape(), 0.5f32);
    let d = Network::new(&spec, &params)?.forward(&image)?;
    Ok(if ok_input && d.len() == 128 { 0.0 } else { 1.0 })
}

/// Runs the whole suite with a fixed seed.
pub fn run_checks(seed: u64) -> Vec<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        timed("conv2d backward vs FD", LAYER_TOLERANCE, || check_conv(&mut rng)),
        timed("relu backward vs FD", LAYER_TOLERANCE, || check_relu(&mut rng)),
        timed("maxpool backward vs FD", LAYER_TOLERANCE, || check_pool(&mut rng)),
        timed("lrn backward vs FD", LAYER_TOLERANCE, || check_lrn(&mut rng)),
        timed("fc backward vs FD", LAYER_TOLERANCE, || check_fc(&mut rng)),
        timed("triplet cost gradient vs FD", LOSS_TOLERANCE, || check_loss(&mut rng)),
        timed("tiny network composition vs FD", NETWORK_TOLERANCE, || {
            check_network(&mut rng, NETWORK_PROBES)
        }),
        timed("conv2d vs direct loops", ORACLE_TOLERANCE, || check_conv_oracle(&mut rng)),
        timed("k-smallest mask vs full sort", 0.5, || check_mask_oracle(&mut rng, 1000)),
        timed("confusion matrix vs pairwise loop", ORACLE_TOLERANCE, || {
            check_confusion_oracle(&mut rng)
        }),
        timed("paper spec descriptor length 128", 0.5, check_descriptor_contract),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_of_a_quadratic() {
        let mut x = vec![1.0, -2.0];
        let err = finite_difference_error(&mut x, &[2.0, -4.0], 0..2, 1e-5, |v| Ok(v[0] * v[0] + v[1] * v[1]))
            .unwrap();
        assert!(err < 1e-8);
        let err = finite_difference_error(&mut x, &[2.0, 4.0], 0..2, 1e-5, |v| Ok(v[0] * v[0] + v[1] * v[1]))
            .unwrap();
        assert!(err > 1.0);
    }

    #[test]
    fn naive_conv_hand_value() {
        let x = Tensor::filled(Shape4::new(1, 1, 3, 3), 1.0);
        let w = Tensor::filled(Shape4::new(1, 1, 3, 3), 1.0);
        assert_eq!(naive_conv2d(&x, &w, &[0.0], 1, 0), vec![9.0]);
        assert_eq!(naive_conv2d(&x, &w, &[0.0], 1, 1)[0], 4.0);
    }

    #[test]
    fn report_line_format() {
        let r = timed("x", 1.0, || Ok(0.5));
        assert!(r.passed);
        assert!(r.to_string().starts_with("PASS x"));
        assert!(!timed("y", 1.0, || Err(crate::Error::usage("boom"))).passed);
    }
}
