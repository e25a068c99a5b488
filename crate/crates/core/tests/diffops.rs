mod common;

use common::{max_abs_diff, random_grid, rng};
use gavn_core::diffops::{grad_check, Graph};
use ndarray::{s, Array4};
use proptest::prelude::*;

#[test]
fn strided_conv_halves_the_grid() {
    let mut r = rng(1);
    let mut g = Graph::new();
    let x = g.constant(random_grid(&mut r, (2, 3, 8, 8), 1.0));
    let w = g.constant(random_grid(&mut r, (5, 3, 3, 3), 1.0));
    let y = g.conv2d(x, w, None, 2, 1).unwrap();
    // floor((8 + 2*1 - 3) / 2) + 1 = 4
    assert_eq!(g.shape(y), (2, 5, 4, 4));
}

#[test]
fn zero_offset_deform_equals_conv() {
    let mut r = rng(2);
    let mut g = Graph::new();
    let x = g.constant(random_grid(&mut r, (2, 3, 7, 9), 1.0));
    let w = g.constant(random_grid(&mut r, (4, 3, 3, 3), 1.0));
    let b = g.constant(random_grid(&mut r, (1, 4, 1, 1), 1.0));
    let off = g.constant(Array4::zeros((2, 18, 7, 9)));
    let d = g.deform_conv2d(x, off, w, Some(b)).unwrap();
    let c = g.conv2d(x, w, Some(b), 1, 1).unwrap();
    assert!(max_abs_diff(g.value(d), g.value(c)) <= 1e-6);
}

#[test]
fn unit_offsets_undo_a_horizontal_shift() {
    let mut r = rng(3);
    let base = random_grid(&mut r, (1, 2, 8, 10), 1.0);
    // shifted(x) = base(x - 1)
    let mut shifted = base.clone();
    shifted.slice_mut(s![.., .., .., 1..]).assign(&base.slice(s![.., .., .., ..9]));
    let mut offsets = Array4::zeros((1, 18, 8, 10));
    for t in 0..9 {
        offsets.slice_mut(s![.., 2 * t, .., ..]).fill(1.0);
    }
    let mut g = Graph::new();
    let w = g.constant(random_grid(&mut r, (3, 2, 3, 3), 1.0));
    let xs = g.constant(shifted);
    let xb = g.constant(base);
    let off = g.constant(offsets);
    let zero = g.constant(Array4::zeros((1, 18, 8, 10)));
    let moved = g.deform_conv2d(xs, off, w, None).unwrap();
    let plain = g.deform_conv2d(xb, zero, w, None).unwrap();
    let interior = |a: &Array4<f64>| a.slice(s![.., .., 1..7, 2..8]).to_owned();
    assert!(max_abs_diff(&interior(g.value(moved)), &interior(g.value(plain))) < 1e-12);
}

#[test]
fn deform_offset_gradient_matches_finite_differences() {
    let mut r = rng(4);
    let x = random_grid(&mut r, (1, 4, 6, 6), 1.0);
    // fractional offsets keep every tap away from the bilinear kinks
    let off = random_grid(&mut r, (1, 18, 6, 6), 0.4).mapv(|v| v + 0.5 * v.signum() + 0.05);
    let w = random_grid(&mut r, (2, 4, 3, 3), 0.5);
    let rep = grad_check("deform", |g, v| g.deform_conv2d(v[0], v[1], v[2], None), &[x, off, w], 1e-4, 9).unwrap();
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn pixel_shuffle_shape() {
    let mut g = Graph::new();
    let x = g.constant(Array4::zeros((1, 8, 3, 3)));
    let y = g.pixel_shuffle(x, 2).unwrap();
    assert_eq!(g.shape(y), (1, 2, 6, 6));
}

#[test]
fn conv_gradient_on_small_input() {
    let mut r = rng(5);
    let x = random_grid(&mut r, (1, 2, 5, 5), 1.0);
    let w = random_grid(&mut r, (3, 2, 3, 3), 1.0);
    let rep = grad_check("conv", |g, v| g.conv2d(v[0], v[1], None, 1, 1), &[x, w], 1e-4, 5).unwrap();
    assert!(rep.pass && rep.max_rel_error <= 1e-4, "{rep:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shuffle_round_trips(b in 1usize..3, c in 1usize..4, h in 1usize..5, w in 1usize..5, r in 1usize..4, seed in 0u64..1000) {
        let mut rg = rng(seed);
        let x = random_grid(&mut rg, (b, c * r * r, h, w), 1.0);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let up = g.pixel_shuffle(xv, r).unwrap();
        prop_assert_eq!(g.shape(up), (b, c, h * r, w * r));
        let back = g.pixel_unshuffle(up, r).unwrap();
        prop_assert_eq!(g.value(back), &x);
    }
}
