#![allow(dead_code)]

//! Finite-difference checks for every differentiable operation in `nn`.
//! Each check returns the worst relative error over all inputs and parameters
//! of one randomly drawn instance.

use embryo_core::nn::{self, Activation, ParamSet};
use embryo_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-4;
/// Denominator floor for the relative error: coordinates whose gradient is
/// below this magnitude are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Uniform in [-1, 1] but at least `margin` away from zero (keeps relu kinks
/// out of the finite-difference stencil).
pub fn uniform_off_zero(shape: &[usize], margin: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m: f64 = rng.random_range(margin..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

fn rel(analytic: &Tensor, numeric: &Tensor) -> f64 {
    nn::max_relative_error(analytic, numeric, REL_FLOOR)
}

pub fn conv2d(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (stride, padding) = [(1, 0), (1, 1), (2, 1), (2, 0)][(seed % 4) as usize];
    let x = uniform(&[2, 7, 6], &mut r);
    let k = uniform(&[3, 2, 3, 3], &mut r);
    let y = nn::conv2d(&x, &k, stride, padding).unwrap();
    let w = uniform(y.shape(), &mut r);
    let (gx, gk) = nn::conv2d_backward(&w, &x, &k, stride, padding).unwrap();
    let nx = nn::finite_diff_grad(|t| nn::conv2d(t, &k, stride, padding).unwrap().dot(&w), &x, EPS);
    let nk = nn::finite_diff_grad(|t| nn::conv2d(&x, t, stride, padding).unwrap().dot(&w), &k, EPS);
    rel(&gx, &nx).max(rel(&gk, &nk))
}

pub fn conv_transpose2d(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (stride, padding) = [(1, 1), (2, 1), (2, 0)][(seed % 3) as usize];
    let out_hw = (8, 7);
    let k = uniform(&[3, 2, 3, 3], &mut r);
    let probe = nn::conv2d(&Tensor::zeros(&[2, out_hw.0, out_hw.1]), &k, stride, padding).unwrap();
    let x = uniform(probe.shape(), &mut r);
    let y = nn::conv_transpose2d(&x, &k, stride, padding, out_hw).unwrap();
    let w = uniform(y.shape(), &mut r);
    let (gx, gk) = nn::conv_transpose2d_backward(&w, &x, &k, stride, padding).unwrap();
    let nx = nn::finite_diff_grad(
        |t| nn::conv_transpose2d(t, &k, stride, padding, out_hw).unwrap().dot(&w),
        &x,
        EPS,
    );
    let nk = nn::finite_diff_grad(
        |t| nn::conv_transpose2d(&x, t, stride, padding, out_hw).unwrap().dot(&w),
        &k,
        EPS,
    );
    rel(&gx, &nx).max(rel(&gk, &nk))
}

pub fn dense(seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = uniform(&[7], &mut r);
    let wt = uniform(&[4, 7], &mut r);
    let b = uniform(&[4], &mut r);
    let w = uniform(&[4], &mut r);
    let (gx, gw, gb) = nn::dense_backward(&w, &x, &wt).unwrap();
    let nx = nn::finite_diff_grad(|t| nn::dense(t, &wt, &b).unwrap().dot(&w), &x, EPS);
    let nw = nn::finite_diff_grad(|t| nn::dense(&x, t, &b).unwrap().dot(&w), &wt, EPS);
    let nb = nn::finite_diff_grad(|t| nn::dense(&x, &wt, t).unwrap().dot(&w), &b, EPS);
    rel(&gx, &nx).max(rel(&gw, &nw)).max(rel(&gb, &nb))
}

pub fn activation(act: Activation, seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = uniform_off_zero(&[3, 4, 4], 10.0 * EPS, &mut r);
    let w = uniform(x.shape(), &mut r);
    let y = act.forward(&x);
    let g = act.backward(&w, &y);
    let n = nn::finite_diff_grad(|t| act.forward(t).dot(&w), &x, EPS);
    rel(&g, &n)
}

pub fn max_pool(seed: u64) -> f64 {
    let mut r = rng(seed);
    // Distinct, well-separated values so no window maximum is within eps of a tie.
    let mut vals: Vec<f64> = (0..2 * 6 * 6).map(|i| i as f64 * 0.02 - 0.7).collect();
    for i in (1..vals.len()).rev() {
        vals.swap(i, r.random_range(0..=i));
    }
    let x = Tensor::new(vec![2, 6, 6], vals).unwrap();
    let (y, arg) = nn::max_pool2d(&x, 2).unwrap();
    let w = uniform(y.shape(), &mut r);
    let g = nn::max_pool2d_backward(&w, &arg, x.shape()).unwrap();
    let n = nn::finite_diff_grad(|t| nn::max_pool2d(t, 2).unwrap().0.dot(&w), &x, EPS);
    rel(&g, &n)
}

pub fn avg_pool(seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = uniform(&[2, 6, 4], &mut r);
    let w = uniform(&[2, 3, 2], &mut r);
    let g = nn::avg_pool2d_backward(&w, 2, x.shape()).unwrap();
    let n = nn::finite_diff_grad(|t| nn::avg_pool2d(t, 2).unwrap().dot(&w), &x, EPS);
    rel(&g, &n)
}

pub fn upsample(seed: u64) -> f64 {
    let mut r = rng(seed);
    let x = uniform(&[2, 3, 2], &mut r);
    let w = uniform(&[2, 6, 4], &mut r);
    let g = nn::upsample2d_backward(&w, 2).unwrap();
    let n = nn::finite_diff_grad(|t| nn::upsample2d(t, 2).unwrap().dot(&w), &x, EPS);
    rel(&g, &n)
}

pub fn lstm_step(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (d, u) = (5, 4);
    let mut set = nn::init_lstm("cell", d, u, &mut r);
    // Randomize biases too, so every gate operates away from its init point.
    let names: Vec<String> = set.names().map(str::to_string).collect();
    for name in &names {
        let shape = set.get(name).unwrap().shape().to_vec();
        set.insert(name.clone(), uniform(&shape, &mut r));
    }
    let x = uniform(&[d], &mut r);
    let h = uniform(&[u], &mut r);
    let c = uniform(&[u], &mut r);
    let wh = uniform(&[u], &mut r);
    let wc = uniform(&[u], &mut r);

    let objective = |set: &ParamSet, x: &Tensor, h: &Tensor, c: &Tensor| {
        let p = nn::LstmParams::from_set(set, "cell").unwrap();
        let (h2, c2) = nn::lstm_step(x, h, c, &p).unwrap();
        h2.dot(&wh) + c2.dot(&wc)
    };

    let p = nn::LstmParams::from_set(&set, "cell").unwrap();
    let (_, _, cache) = nn::lstm_step_cached(&x, &h, &c, &p).unwrap();
    let mut grads = ParamSet::new();
    let g = nn::lstm_step_backward(&wh, &wc, &cache, &p, "cell", &mut grads).unwrap();

    let mut worst = rel(&g.input, &nn::finite_diff_grad(|t| objective(&set, t, &h, &c), &x, EPS));
    worst = worst.max(rel(
        &g.h_prev,
        &nn::finite_diff_grad(|t| objective(&set, &x, t, &c), &h, EPS),
    ));
    worst = worst.max(rel(
        &g.c_prev,
        &nn::finite_diff_grad(|t| objective(&set, &x, &h, t), &c, EPS),
    ));
    for name in &names {
        let base = set.get(name).unwrap().clone();
        let numeric = nn::finite_diff_grad(
            |t| {
                let mut s = set.clone();
                s.insert(name.clone(), t.clone());
                objective(&s, &x, &h, &c)
            },
            &base,
            EPS,
        );
        worst = worst.max(rel(grads.get(name).unwrap(), &numeric));
    }
    worst
}

pub fn l2_loss(seed: u64) -> f64 {
    let mut r = rng(seed);
    let p = uniform(&[3, 5], &mut r);
    let t = uniform(&[3, 5], &mut r);
    let g = nn::l2_loss(&p, &t).unwrap().gradient;
    let n = nn::finite_diff_grad(|x| nn::l2_loss(x, &t).unwrap().value, &p, EPS);
    rel(&g, &n)
}

pub fn softmax_cross_entropy(seed: u64) -> f64 {
    let mut r = rng(seed);
    let logits = uniform(&[5], &mut r);
    let raw: Vec<f64> = (0..5).map(|_| r.random_range(0.0..1.0)).collect();
    let z: f64 = raw.iter().sum();
    let target = Tensor::from_vec(raw.iter().map(|v| v / z).collect());
    let g = nn::softmax_cross_entropy(&logits, &target).unwrap().gradient;
    let n = nn::finite_diff_grad(|x| nn::softmax_cross_entropy(x, &target).unwrap().value, &logits, EPS);
    rel(&g, &n)
}

pub fn binary_cross_entropy(seed: u64) -> f64 {
    let mut r = rng(seed);
    let logit = Tensor::from_vec(vec![r.random_range(-1.0..1.0)]);
    let label = r.random_bool(0.5);
    let pos_weight = r.random_range(0.2..4.0);
    let g = nn::weighted_binary_cross_entropy(logit.data()[0], label, pos_weight).gradient;
    let n = nn::finite_diff_grad(
        |x| nn::weighted_binary_cross_entropy(x.data()[0], label, pos_weight).value,
        &logit,
        EPS,
    );
    rel(&g, &n)
}

/// Maximum relative error of one randomized instance, keyed by seed.
pub type Check = fn(u64) -> f64;

/// Every differentiable operation, by name.
pub fn all_checks() -> Vec<(&'static str, Check)> {
    vec![
        ("conv2d", conv2d),
        ("conv_transpose2d", conv_transpose2d),
        ("dense", dense),
        ("relu", |s| activation(Activation::Relu, s)),
        ("sigmoid", |s| activation(Activation::Sigmoid, s)),
        ("tanh", |s| activation(Activation::Tanh, s)),
        ("max_pool2d", max_pool),
        ("avg_pool2d", avg_pool),
        ("upsample2d", upsample),
        ("lstm_step", lstm_step),
        ("l2_loss", l2_loss),
        ("softmax_cross_entropy", softmax_cross_entropy),
        ("binary_cross_entropy", binary_cross_entropy),
    ]
}
