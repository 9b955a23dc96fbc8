//! Helpers shared by the integration suites.
#![allow(dead_code)]

use ecgsynth::nn::{bce_grad, bce_grad_wrt_logits, bce_loss, LayerSpec, Network, NetworkSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step.
pub const H: f64 = 1e-5;
/// Largest accepted relative error between analytic and numeric gradients.
pub const GRAD_TOL: f64 = 1e-4;

pub const GRAD_SEEDS: [u64; 3] = [1, 22, 333];

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Values in `[-1, 1]` kept at least `gap` away from zero.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize, gap: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(gap..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

/// Single-layer network checked on `L = Σ w·y` for a random `w`: every
/// parameter and every input element. Returns the worst relative error.
pub fn layer_grad_error(layer: LayerSpec, input_shape: Vec<usize>, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinked = matches!(layer, LayerSpec::LeakyRelu { .. });
    let mut net = Network::new(NetworkSpec::new(input_shape.clone()).push("layer", layer), &mut rng).unwrap();
    let n_in: usize = input_shape.iter().product();
    let x = if kinked {
        away_from_zero(&mut rng, n_in, 0.05)
    } else {
        uniform(&mut rng, n_in, -1.0, 1.0)
    };
    let input = Tensor::new(input_shape.clone(), x.clone()).unwrap();
    let (y, tape) = net.forward_recorded(&input).unwrap();
    let w = uniform(&mut rng, y.len(), -1.0, 1.0);
    let upstream = Tensor::new(y.shape().to_vec(), w.clone()).unwrap();
    let (gx, gp) = net.backward(&tape, &upstream).unwrap();

    let loss = |net: &Network, x: &[f64]| -> f64 {
        let y = net.forward(&Tensor::new(input_shape.clone(), x.to_vec()).unwrap()).unwrap();
        y.data().iter().zip(&w).map(|(a, b)| a * b).sum()
    };
    let mut worst: f64 = 0.0;
    for i in 0..n_in {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[i] += H;
        xm[i] -= H;
        let num = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * H);
        worst = worst.max(rel_err(gx.data()[i], num));
    }
    let n_params = net.layers()[0].params().len();
    for k in 0..n_params {
        let orig = net.layers()[0].params()[k];
        net.layers_mut()[0].params_mut()[k] = orig + H;
        let lp = loss(&net, &x);
        net.layers_mut()[0].params_mut()[k] = orig - H;
        let lm = loss(&net, &x);
        net.layers_mut()[0].params_mut()[k] = orig;
        worst = worst.max(rel_err(gp.0[0][k], (lp - lm) / (2.0 * H)));
    }
    worst
}

/// BCE gradient with respect to probabilities and, through a sigmoid, to
/// logits.
pub fn bce_grad_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 16;
    let p = uniform(&mut rng, n, 0.05, 0.95);
    let y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let g = bce_grad(&p, &y).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let (mut pp, mut pm) = (p.clone(), p.clone());
        pp[i] += H;
        pm[i] -= H;
        let num = (bce_loss(&pp, &y).unwrap() - bce_loss(&pm, &y).unwrap()) / (2.0 * H);
        worst = worst.max(rel_err(g[i], num));
    }
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    let z = uniform(&mut rng, n, -3.0, 3.0);
    let pz: Vec<f64> = z.iter().map(|&v| sig(v)).collect();
    let gz = bce_grad_wrt_logits(&pz, &y).unwrap();
    for i in 0..n {
        let at = |d: f64| {
            let q: Vec<f64> = z.iter().enumerate().map(|(k, &v)| sig(if k == i { v + d } else { v })).collect();
            bce_loss(&q, &y).unwrap()
        };
        worst = worst.max(rel_err(gz[i], (at(H) - at(-H)) / (2.0 * H)));
    }
    worst
}

/// Small shapes for each layer kind under test.
pub fn gradient_cases() -> Vec<(&'static str, LayerSpec, Vec<usize>)> {
    vec![
        ("Conv2D stride 1", LayerSpec::conv(2, 3, (1, 1)), vec![18, 4, 2]),
        ("Conv2D stride 2", LayerSpec::conv(2, 2, (2, 2)), vec![20, 5, 2]),
        ("Dense", LayerSpec::Dense { inputs: 12, outputs: 3 }, vec![4, 3]),
        ("BiLSTM", LayerSpec::BiLstm { input: 3, hidden: 4 }, vec![6, 3]),
        ("LeakyReLU", LayerSpec::LeakyRelu { alpha: 0.2 }, vec![5, 4]),
        ("Sigmoid", LayerSpec::Sigmoid, vec![5, 4]),
    ]
}
