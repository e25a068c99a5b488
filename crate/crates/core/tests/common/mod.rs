#![allow(dead_code)]

use gavn_core::diffops::{Graph, ParamId, ParamStore, Var};
use gavn_core::Result;
use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_grid(rng: &mut ChaCha8Rng, dim: (usize, usize, usize, usize), scale: f64) -> Array4<f64> {
    Array4::from_shape_simple_fn(dim, || rng.random_range(-scale..scale))
}

pub fn max_abs_diff(a: &Array4<f64>, b: &Array4<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst relative error between backprop and central differences for a sample
/// of the entries of `ids`, on the objective `sum(f(store) * R)`.
pub fn param_grad_check<F>(store: &mut ParamStore, ids: &[ParamId], per_param: usize, seed: u64, f: F) -> f64
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    const STEP: f64 = 1e-5;
    const FLOOR: f64 = 1e-4;
    let mut g = Graph::new();
    let out = f(&mut g, store).expect("forward");
    let mut r = rng(seed ^ 0x5eed);
    let weights = random_grid(&mut r, g.shape(out), 1.0);
    let objective = |g: &mut Graph, out: Var| -> f64 {
        g.value(out).iter().zip(weights.iter()).map(|(a, b)| a * b).sum()
    };
    let wv = g.constant(weights.clone());
    let prod = g.mul(out, wv).expect("mul");
    let loss = g.sum(prod);
    g.backward(loss).expect("backward");
    store.zero_grad();
    g.accumulate_param_grads(store).expect("grads");

    let mut worst: f64 = 0.0;
    for &id in ids {
        let analytic = store.get(id).grad.clone();
        let n = analytic.len();
        let picks: Vec<usize> = if n <= per_param {
            (0..n).collect()
        } else {
            (0..per_param).map(|_| r.random_range(0..n)).collect()
        };
        for flat in picks {
            let orig = store.get(id).data.as_slice().expect("contiguous")[flat];
            let eval = |v: f64, store: &mut ParamStore| {
                store.get_mut(id).data.as_slice_mut().expect("contiguous")[flat] = v;
                let mut g = Graph::new();
                let out = f(&mut g, store).expect("forward");
                objective(&mut g, out)
            };
            let plus = eval(orig + STEP, store);
            let minus = eval(orig - STEP, store);
            store.get_mut(id).data.as_slice_mut().expect("contiguous")[flat] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic.as_slice().expect("contiguous")[flat];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Overwrites every entry of `ids` with small random values.
pub fn randomize(store: &mut ParamStore, ids: &[ParamId], scale: f64, seed: u64) {
    let mut r = rng(seed);
    for &id in ids {
        store.get_mut(id).data.mapv_inplace(|_| r.random_range(-scale..scale));
    }
}
