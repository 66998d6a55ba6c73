//! Analytical gradients against central finite differences of an
//! independently written dense loss.

use pghash_core::data::SparseExample;
use pghash_core::matrix::Matrix;
use pghash_core::net::{loss_and_grad, HiddenLayer, OpCounter, OutputLayer};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const D_IN: usize = 5;
const H: usize = 4;
const N: usize = 6;

struct Instance {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    xs: Vec<Vec<f64>>,
    labels: Vec<Vec<usize>>,
    active: Vec<Vec<usize>>,
}

/// Mean over samples of `logsumexp(z_A) − mean_{l ∈ labels ∩ A} z_l`.
fn oracle_loss(p: &Instance) -> f64 {
    let mut total = 0.0;
    let mut counted = 0;
    for ((x, labels), act) in p.xs.iter().zip(&p.labels).zip(&p.active) {
        let targets: Vec<usize> = act.iter().copied().filter(|j| labels.contains(j)).collect();
        if targets.is_empty() {
            continue;
        }
        let hidden: Vec<f64> =
            (0..H).map(|k| (p.b1[k] + (0..D_IN).map(|i| x[i] * p.w1[i * H + k]).sum::<f64>()).max(0.0)).collect();
        let z = |j: usize| p.b2[j] + (0..H).map(|k| hidden[k] * p.w2[j * H + k]).sum::<f64>();
        let lse = act.iter().map(|&j| z(j).exp()).sum::<f64>().ln();
        total += lse - targets.iter().map(|&j| z(j)).sum::<f64>() / targets.len() as f64;
        counted += 1;
    }
    total / counted as f64
}

fn random_instance(r: &mut ChaCha8Rng) -> Instance {
    loop {
        let mut g = |len: usize| (0..len).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (w1, b1, w2, b2) = (g(D_IN * H), g(H), g(N * H), g(N));
        let xs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..D_IN).map(|_| if r.random_bool(0.6) { r.random_range(-2.0..2.0) } else { 0.0 }).collect())
            .collect();
        // keep away from ReLU kinks so finite differences see a smooth function
        let near_kink = xs
            .iter()
            .any(|x| (0..H).any(|k| (b1[k] + (0..D_IN).map(|i| x[i] * w1[i * H + k]).sum::<f64>()).abs() < 1e-3));
        if near_kink {
            continue;
        }
        let labels: Vec<Vec<usize>> = (0..3)
            .map(|_| {
                let count = r.random_range(1..=2);
                let mut l = index::sample(r, N, count).into_vec();
                l.sort_unstable();
                l
            })
            .collect();
        let active: Vec<Vec<usize>> = labels
            .iter()
            .map(|l| {
                let count = r.random_range(1..=N);
                let mut a = index::sample(r, N, count).into_vec();
                a.push(l[0]);
                a.sort_unstable();
                a.dedup();
                a
            })
            .collect();
        return Instance { w1, b1, w2, b2, xs, labels, active };
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-9 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

fn central_diff(p: &mut Instance, pick: impl Fn(&mut Instance) -> &mut f64) -> f64 {
    let eps = 1e-6;
    let orig = *pick(p);
    *pick(p) = orig + eps;
    let up = oracle_loss(p);
    *pick(p) = orig - eps;
    let down = oracle_loss(p);
    *pick(p) = orig;
    (up - down) / (2.0 * eps)
}

#[test]
fn analytical_gradients_match_finite_differences() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..40 {
        let mut p = random_instance(&mut r);
        let hidden = HiddenLayer { w: Matrix::from_vec(D_IN, H, p.w1.clone()).unwrap(), b: p.b1.clone() };
        let out = OutputLayer { w: Matrix::from_vec(N, H, p.w2.clone()).unwrap(), b: p.b2.clone() };
        let batch: Vec<SparseExample> =
            p.xs.iter()
                .zip(&p.labels)
                .map(|(x, l)| {
                    let feats = x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect();
                    SparseExample::new(feats, l.clone()).unwrap()
                })
                .collect();
        let refs: Vec<&SparseExample> = batch.iter().collect();
        let (loss, g) = loss_and_grad(&hidden, &out, &refs, &p.active, &mut OpCounter::default()).unwrap();
        assert!((loss.loss - oracle_loss(&p)).abs() < 1e-12);

        for i in 0..D_IN * H {
            worst = worst.max(rel_err(g.hidden_w.as_slice()[i], central_diff(&mut p, |q| &mut q.w1[i])));
        }
        for k in 0..H {
            worst = worst.max(rel_err(g.hidden_b[k], central_diff(&mut p, |q| &mut q.b1[k])));
        }
        for j in 0..N {
            let slot = g.columns.neurons.binary_search(&j).ok();
            for k in 0..H {
                let a = slot.map_or(0.0, |s| g.columns.w.row(s)[k]);
                worst = worst.max(rel_err(a, central_diff(&mut p, |q| &mut q.w2[j * H + k])));
            }
            let a = slot.map_or(0.0, |s| g.columns.b[s]);
            worst = worst.max(rel_err(a, central_diff(&mut p, |q| &mut q.b2[j])));
        }
    }
    assert!(worst < 1e-5, "max relative error {worst}");
}
