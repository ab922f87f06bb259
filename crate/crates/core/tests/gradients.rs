//! Backward passes against central finite differences, all in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vtriplet::layers::*;
use vtriplet::loss::{triplet_cost, triplet_cost_grad, triplet_terms};
use vtriplet::network::{Network, NetworkSpec, ParameterSet};
use vtriplet::{Shape4, Tensor};

const LAYER_TOL: f64 = 1e-3;
const LOSS_TOL: f64 = 1e-6;
const NET_TOL: f64 = 1e-2;

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Worst relative error of `grad` against central differences of `f` at `x`.
fn fd_worst(x: &[f64], grad: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut v = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        v[i] = x[i] + h;
        let p = f(&v);
        v[i] = x[i] - h;
        let m = f(&v);
        v[i] = x[i];
        worst = worst.max(rel(grad[i], (p - m) / (2.0 * h)));
    }
    worst
}

/// Five-point stencil, fourth-order accurate; used where the tolerance is tight.
fn fd5_worst(x: &[f64], grad: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut v = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut at = |d: f64| {
            v[i] = x[i] + d;
            let r = f(&v);
            v[i] = x[i];
            r
        };
        let n = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
        worst = worst.max(rel(grad[i], n));
    }
    worst
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn t(s: Shape4, v: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(s, v.to_vec()).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (stride, pad) in [(1, 0), (2, 1), (1, 2)] {
        let xs = Shape4::new(2, 2, 6, 5);
        let ws = Shape4::new(3, 2, 3, 2);
        let x = rand_vec(&mut rng, xs.len());
        let w = rand_vec(&mut rng, ws.len());
        let b = rand_vec(&mut rng, 3);
        let out = conv2d_forward(&t(xs, &x), &t(ws, &w), &b, stride, pad).unwrap();
        let r = rand_vec(&mut rng, out.len());
        let g = conv2d_backward(&t(xs, &x), &t(ws, &w), &t(out.shape(), &r), stride, pad).unwrap();
        let f = |x: &[f64], w: &[f64], b: &[f64]| dot(conv2d_forward(&t(xs, x), &t(ws, w), b, stride, pad).unwrap().data(), &r);
        assert!(fd_worst(&x, g.input.data(), 1e-5, |v| f(v, &w, &b)) < LAYER_TOL);
        assert!(fd_worst(&w, g.weights.data(), 1e-5, |v| f(&x, v, &b)) < LAYER_TOL);
        assert!(fd_worst(&b, &g.bias, 1e-5, |v| f(&x, &w, v)) < LAYER_TOL);
    }
}

#[test]
fn relu_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = Shape4::new(1, 2, 3, 4);
    let x: Vec<f64> = (0..s.len())
        .map(|_| rng.gen_range(0.1..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let r = rand_vec(&mut rng, s.len());
    let g = relu_backward(&t(s, &x), &t(s, &r)).unwrap();
    assert!(fd_worst(&x, g.data(), 1e-6, |v| dot(relu_forward(&t(s, v)).data(), &r)) < LAYER_TOL);
}

#[test]
fn maxpool_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (window, stride) in [(2, 2), (3, 2), (2, 1)] {
        let s = Shape4::new(2, 3, 7, 6);
        let x = rand_vec(&mut rng, s.len());
        let p = maxpool_forward(&t(s, &x), window, stride).unwrap();
        let r = rand_vec(&mut rng, p.output.len());
        let g = maxpool_backward(s, &p.argmax, &t(p.output.shape(), &r)).unwrap();
        let f = |v: &[f64]| dot(maxpool_forward(&t(s, v), window, stride).unwrap().output.data(), &r);
        assert!(fd_worst(&x, g.data(), 1e-7, f) < LAYER_TOL);
    }
}

#[test]
fn lrn_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = [
        LrnParams::default(),
        LrnParams { size: 3, alpha: 1.0, beta: 0.75, k: 1.0 },
        LrnParams { size: 7, alpha: 0.3, beta: 0.5, k: 2.0 },
    ];
    for p in params {
        let s = Shape4::new(1, 6, 3, 3);
        let x: Vec<f64> = rand_vec(&mut rng, s.len()).iter().map(|v| v * 2.0).collect();
        let r = rand_vec(&mut rng, s.len());
        let g = lrn_backward(&t(s, &x), &t(s, &r), &p).unwrap();
        let f = |v: &[f64]| dot(lrn_forward(&t(s, v), &p).unwrap().data(), &r);
        assert!(fd_worst(&x, g.data(), 1e-5, f) < LAYER_TOL, "{p:?}");
    }
}

#[test]
fn fc_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs = Shape4::new(2, 3, 2, 2);
    let ws = Shape4::new(4, 12, 1, 1);
    let x = rand_vec(&mut rng, xs.len());
    let w = rand_vec(&mut rng, ws.len());
    let b = rand_vec(&mut rng, 4);
    let out = fc_forward(&t(xs, &x), &t(ws, &w), &b).unwrap();
    let r = rand_vec(&mut rng, out.len());
    let g = fc_backward(&t(xs, &x), &t(ws, &w), &t(out.shape(), &r)).unwrap();
    let f = |x: &[f64], w: &[f64], b: &[f64]| dot(fc_forward(&t(xs, x), &t(ws, w), b).unwrap().data(), &r);
    assert!(fd_worst(&x, g.input.data(), 1e-5, |v| f(v, &w, &b)) < LAYER_TOL);
    assert!(fd_worst(&w, g.weights.data(), 1e-5, |v| f(&x, v, &b)) < LAYER_TOL);
    assert!(fd_worst(&b, &g.bias, 1e-5, |v| f(&x, &w, v)) < LAYER_TOL);
}

#[test]
fn triplet_cost_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checked = 0;
    while checked < 200 {
        let d = rng.gen_range(1..=16);
        let v = rand_vec(&mut rng, 3 * d);
        let margin = rng.gen_range(0.2..3.0);
        let cost = |v: &[f64]| triplet_terms(&v[..d], &v[d..2 * d], &v[2 * d..], margin).unwrap().cost;
        if cost(&v) < 1e-3 {
            continue;
        }
        let g = triplet_cost_grad(&v[..d], &v[d..2 * d], &v[2 * d..], margin).unwrap();
        let analytic = [g.query, g.similar, g.dissimilar].concat();
        let w = fd5_worst(&v, &analytic, 1e-3, cost);
        assert!(w < LOSS_TOL, "d={d} margin={margin} v={v:?} worst={w}");
        checked += 1;
    }
}

#[test]
fn triplet_cost_hand_examples() {
    assert!((triplet_cost(&[0.0f64, 0.0], &[0.0, 0.0], &[0.0, 0.0], 1.0).unwrap() - 1.0).abs() < 1e-7);
    assert!(triplet_cost(&[0.0f64, 0.0], &[0.0, 0.0], &[3.0, 0.0], 1.0).unwrap().abs() < 1e-7);
    assert!((triplet_cost(&[0.0f64, 0.0], &[1.0, 0.0], &[1.5, 0.0], 1.0).unwrap() - 0.25).abs() < 1e-7);
    // dn = margin + dp exactly
    assert_eq!(triplet_cost(&[0.0f64], &[0.5], &[1.5], 1.0).unwrap(), 0.0);
}

#[test]
fn tiny_network_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let spec = NetworkSpec::tiny();
    let mut params = ParameterSet::<f32>::init(&spec, 3).cast::<f64>();
    for l in params.layers_mut() {
        if let Some(b) = l.bias.as_mut() {
            b.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.05..0.05));
        }
    }
    let shape = spec.input().tensor_shape();
    let imgs: Vec<Tensor<f64>> = (0..3).map(|_| Tensor::from_fn(shape, |_| rng.gen_range(0.0..1.0))).collect();
    let margin = 100.0;
    let net = Network::new(&spec, &params).unwrap();
    let passes: Vec<_> = imgs.iter().map(|i| net.forward_traced(i).unwrap()).collect();
    let g = triplet_cost_grad(&passes[0].descriptor, &passes[1].descriptor, &passes[2].descriptor, margin).unwrap();
    let mut grads = net.backward(&passes[0], &g.query).unwrap();
    grads.accumulate(&net.backward(&passes[1], &g.similar).unwrap()).unwrap();
    grads.accumulate(&net.backward(&passes[2], &g.dissimilar).unwrap()).unwrap();

    // (layer, is_bias, index) probes spread over every trainable tensor
    let mut probes = Vec::new();
    for (li, l) in params.layers().iter().enumerate() {
        if let (Some(w), Some(b)) = (&l.weights, &l.bias) {
            for _ in 0..30 {
                probes.push((li, false, rng.gen_range(0..w.len())));
            }
            for _ in 0..5 {
                probes.push((li, true, rng.gen_range(0..b.len())));
            }
        }
    }
    assert!(probes.len() >= 100);
    let cost = |p: &ParameterSet<f64>| {
        let net = Network::new(&spec, p).unwrap();
        let h: Vec<Vec<f64>> = imgs.iter().map(|i| net.forward(i).unwrap()).collect();
        triplet_terms(&h[0], &h[1], &h[2], margin).unwrap().cost
    };
    let h = 1e-6;
    let mut worst = 0.0f64;
    for &(li, is_bias, idx) in &probes {
        let eval_at = |delta: f64| {
            let mut p = params.clone();
            let l = &mut p.layers_mut()[li];
            let tensor = if is_bias { l.bias.as_mut() } else { l.weights.as_mut() };
            tensor.unwrap().data_mut()[idx] += delta;
            cost(&p)
        };
        let plus = eval_at(h);
        let minus = eval_at(-h);
        let lg = &grads.layers[li];
        let analytic = if is_bias { lg.bias.as_ref() } else { lg.weights.as_ref() }.unwrap().data()[idx];
        worst = worst.max(rel(analytic, (plus - minus) / (2.0 * h)));
    }
    assert!(worst < NET_TOL, "worst relative error {worst}");
}
