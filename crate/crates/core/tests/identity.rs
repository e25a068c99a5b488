mod common;

use common::{max_abs_diff, param_grad_check, random_grid, randomize, rng};
use gavn_core::diffops::{grad_check, Graph, ParamStore};
use gavn_core::identity::{IdentityConfig, IdentityModule};
use ndarray::{s, Array4, Axis};

fn config(c: usize) -> IdentityConfig {
    IdentityConfig {
        channels: c,
        num_landmarks: 5,
        audio_len: 320,
        audio_bins: 20,
    }
}

fn module(store: &mut ParamStore, c: usize) -> IdentityModule {
    IdentityModule::new(store, &mut rng(11), "identity", config(c)).unwrap()
}

fn roll_x(a: &Array4<f64>, by: usize) -> Array4<f64> {
    let w = a.dim().3;
    Array4::from_shape_fn(a.dim(), |(b, c, y, x)| a[[b, c, y, (x + w - by) % w]])
}

#[test]
fn first_frame_layer_gradient() {
    let mut store = ParamStore::new();
    let m = module(&mut store, 4);
    let mut r = rng(12);
    let frame = random_grid(&mut r, (1, 3, 16, 16), 1.0);
    let heat = random_grid(&mut r, (1, 5, 16, 16), 1.0);
    let audio = random_grid(&mut r, (1, 1, 1, 320), 0.5);
    let ids = m.frame.first_layer().params();
    let err = param_grad_check(&mut store, &ids, 24, 3, |g, st| {
        let f = g.constant(frame.clone());
        let h = g.constant(heat.clone());
        let a = g.constant(audio.clone());
        let out = m.forward(g, st, f, h, a)?;
        let up = g.upsample2(out.i2, 1.0);
        g.add(out.i1, up)
    });
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn fusion_gradient_wrt_all_three_streams() {
    let mut store = ParamStore::new();
    let m = module(&mut store, 8);
    let att: Vec<_> = m.fusion[0].attention_layers().iter().flat_map(|l| l.params()).collect();
    randomize(&mut store, &att, 0.1, 4);
    let mut r = rng(13);
    let inputs: Vec<Array4<f64>> = (0..3).map(|_| random_grid(&mut r, (1, 8, 8, 8), 1.0)).collect();
    let store = &store;
    let rep = grad_check("identity_fusion", |g, v| m.fusion[0].forward(g, store, v[0], v[1], v[2]), &inputs, 1e-4, 5).unwrap();
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn landmark_features_follow_a_translation() {
    let mut store = ParamStore::new();
    let m = module(&mut store, 4);
    let mut r = rng(14);
    let heat = random_grid(&mut r, (1, 5, 32, 32), 1.0);
    let moved = roll_x(&heat, 4);
    let mut g = Graph::new();
    let a = g.constant(heat);
    let b = g.constant(moved);
    let [a1, a2] = m.landmark.forward(&mut g, &store, a).unwrap();
    let [b1, b2] = m.landmark.forward(&mut g, &store, b).unwrap();
    let a1 = g.value(a1).slice(s![.., .., .., 2..12]).to_owned();
    let b1 = g.value(b1).slice(s![.., .., .., 4..14]).to_owned();
    assert!(max_abs_diff(&a1, &b1) < 1e-12);
    let a2 = g.value(a2).slice(s![.., .., .., 1..6]).to_owned();
    let b2 = g.value(b2).slice(s![.., .., .., 2..7]).to_owned();
    assert!(max_abs_diff(&a2, &b2) < 1e-12);
}

#[test]
fn audio_embedding_ignores_sign_but_not_silence() {
    let mut store = ParamStore::new();
    let m = module(&mut store, 4);
    let mut r = rng(15);
    let audio = random_grid(&mut r, (1, 1, 1, 320), 0.5);
    let embed = |x: Array4<f64>| {
        let mut g = Graph::new();
        let v = g.constant(x);
        let [a1, a2] = m.audio.embed(&mut g, &store, v).unwrap();
        (g.value(a1).clone(), g.value(a2).clone())
    };
    let (p1, p2) = embed(audio.clone());
    let (n1, n2) = embed(audio.mapv(|v| -v));
    assert_eq!(p1, n1);
    assert_eq!(p2, n2);
    let (z1, _) = embed(Array4::zeros((1, 1, 1, 320)));
    assert!(max_abs_diff(&p1, &z1) > 1e-6);
    assert_eq!(p1.dim(), (1, 4, 1, 1));
}

#[test]
fn output_levels_and_shape_errors() {
    let mut store = ParamStore::new();
    let m = module(&mut store, 4);
    let mut r = rng(16);
    let mut g = Graph::new();
    let f = g.constant(random_grid(&mut r, (2, 3, 32, 32), 1.0));
    let h = g.constant(random_grid(&mut r, (2, 5, 32, 32), 1.0));
    let a = g.constant(random_grid(&mut r, (2, 1, 1, 320), 1.0));
    let out = m.forward(&mut g, &store, f, h, a).unwrap();
    assert_eq!(g.shape(out.i1), (2, 4, 16, 16));
    assert_eq!(g.shape(out.i2), (2, 4, 8, 8));
    // per-sample audio reaches the right batch entry
    let v = g.value(out.i2);
    assert!(max_abs_diff(&v.index_axis(Axis(0), 0).to_owned().insert_axis(Axis(0)), &v.index_axis(Axis(0), 1).to_owned().insert_axis(Axis(0))) > 0.0);

    let bad_k = g.constant(random_grid(&mut r, (2, 4, 32, 32), 1.0));
    assert!(m.forward(&mut g, &store, f, bad_k, a).is_err());
    let bad_audio = g.constant(random_grid(&mut r, (2, 1, 1, 300), 1.0));
    assert!(m.forward(&mut g, &store, f, h, bad_audio).is_err());
    let odd = g.constant(random_grid(&mut r, (2, 3, 30, 30), 1.0));
    let odd_h = g.constant(random_grid(&mut r, (2, 5, 30, 30), 1.0));
    assert!(m.forward(&mut g, &store, odd, odd_h, a).is_err());
}
