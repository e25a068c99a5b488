//! Central finite-difference verification of the analytic gradients.

use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::graph::{Graph, Grid4, Var};
use crate::error::Result;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Step used for operators that are linear in their inputs.
pub const LINEAR_STEP: f64 = 0.5;
/// Denominator floor for the relative error of near-zero gradients.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub name: String,
    pub seed: u64,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// `(input index, flat element index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub failure: Option<String>,
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Checks `op` against central differences.
///
/// The scalar objective is `sum(op(inputs) * R)` for a fixed random `R`, so every
/// output element contributes. Every input element is perturbed.
pub fn grad_check<F>(name: &str, op: F, inputs: &[Grid4], tolerance: f64, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    grad_check_with_step(name, op, inputs, tolerance, seed, FD_STEP)
}

/// [`grad_check`] with an explicit difference step. Linear operators can use a
/// large step, which removes cancellation error from the numeric derivative.
pub fn grad_check_with_step<F>(
    name: &str,
    op: F,
    inputs: &[Grid4],
    tolerance: f64,
    seed: u64,
    step: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let eval = |inputs: &[Grid4], projection: &Grid4| -> Result<(Graph, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|x| g.input(x.clone(), true)).collect();
        let out = op(&mut g, &vars)?;
        let r = g.constant(projection.clone());
        let prod = g.mul(out, r)?;
        let loss = g.sum(prod);
        Ok((g, vars, loss))
    };

    let out_shape = {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|x| g.constant(x.clone())).collect();
        let out = op(&mut g, &vars)?;
        g.shape(out)
    };
    let projection = Array4::from_shape_simple_fn(out_shape, || rng.sample::<f64, _>(StandardNormal));

    let (mut g, vars, loss) = eval(inputs, &projection)?;
    g.backward(loss)?;

    let mut report = GradCheckReport {
        name: name.to_string(),
        seed,
        max_rel_error: 0.0,
        tolerance,
        pass: true,
        worst: None,
        checked: 0,
        failure: None,
    };
    let mut perturbed: Vec<Grid4> = inputs.to_vec();
    for (i, &v) in vars.iter().enumerate() {
        let analytic = g.grad(v).cloned().unwrap_or_else(|| Array4::zeros(inputs[i].raw_dim()));
        for e in 0..inputs[i].len() {
            let a = analytic.as_slice().unwrap()[e];
            if !a.is_finite() {
                report.pass = false;
                report.failure = Some(format!("non-finite analytic gradient at input {i}, element {e}"));
                report.worst = Some((i, e));
                report.max_rel_error = f64::INFINITY;
                return Ok(report);
            }
            let orig = inputs[i].as_slice().unwrap()[e];
            perturbed[i].as_slice_mut().unwrap()[e] = orig + step;
            let (gp, _, lp) = eval(&perturbed, &projection)?;
            let fp = gp.scalar(lp);
            perturbed[i].as_slice_mut().unwrap()[e] = orig - step;
            let (gm, _, lm) = eval(&perturbed, &projection)?;
            let fm = gm.scalar(lm);
            perturbed[i].as_slice_mut().unwrap()[e] = orig;
            let numeric = (fp - fm) / (2.0 * step);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
                report.worst = Some((i, e));
            }
        }
    }
    report.pass = report.max_rel_error <= tolerance;
    Ok(report)
}

fn random_grid(rng: &mut ChaCha8Rng, shape: (usize, usize, usize, usize), scale: f64) -> Grid4 {
    Array4::from_shape_simple_fn(shape, || scale * rng.sample::<f64, _>(StandardNormal))
}

/// Keeps values at least `margin` away from `kink` so a ±h probe never straddles it.
fn away_from(mut x: Grid4, kink: f64, margin: f64) -> Grid4 {
    x.mapv_inplace(|v| {
        if (v - kink).abs() < margin {
            if v >= kink {
                kink + margin
            } else {
                kink - margin
            }
        } else {
            v
        }
    });
    x
}

/// Offsets whose sampling positions stay clear of integer lattice lines.
fn fractional_offsets(rng: &mut ChaCha8Rng, shape: (usize, usize, usize, usize)) -> Grid4 {
    Array4::from_shape_simple_fn(shape, || {
        let whole = rng.random_range(-2i32..=2) as f64;
        let frac = rng.random_range(0.1..0.9);
        whole + frac
    })
}

/// Runs every operator check for each seed at `tolerance`
/// (the permutation operators are held to `1e-8`).
pub fn operator_suite(seeds: &[u64], tolerance: f64) -> Result<Vec<GradCheckReport>> {
    let mut reports = Vec::new();
    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;

        let x = random_grid(rng, (1, 2, 5, 5), 1.0);
        let w = random_grid(rng, (3, 2, 3, 3), 0.5);
        let b = random_grid(rng, (1, 3, 1, 1), 0.1);
        reports.push(grad_check(
            "conv2d",
            |g, v| g.conv2d(v[0], v[1], Some(v[2]), 1, 1),
            &[x.clone(), w.clone(), b.clone()],
            tolerance,
            seed,
        )?);
        let x8 = random_grid(rng, (1, 2, 6, 6), 1.0);
        reports.push(grad_check(
            "conv2d_stride2",
            |g, v| g.conv2d(v[0], v[1], Some(v[2]), 2, 1),
            &[x8, w, b],
            tolerance,
            seed,
        )?);

        let xd = random_grid(rng, (1, 4, 6, 6), 1.0);
        let off = fractional_offsets(rng, (1, 18, 6, 6));
        let wd = random_grid(rng, (3, 4, 3, 3), 0.5);
        let bd = random_grid(rng, (1, 3, 1, 1), 0.1);
        reports.push(grad_check(
            "deform_conv2d",
            |g, v| g.deform_conv2d(v[0], v[1], v[2], Some(v[3])),
            &[xd, off, wd, bd],
            tolerance,
            seed,
        )?);

        let feat = random_grid(rng, (1, 3, 5, 6), 1.0);
        let coords = Array4::from_shape_fn((1, 2, 4, 4), |(_, c, _, _)| {
            let n = if c == 0 { 5.0 } else { 4.0 };
            rng.random_range(0..(n as i32)) as f64 + rng.random_range(0.1..0.9)
        });
        reports.push(grad_check(
            "bilinear_sample",
            |g, v| g.bilinear_sample(v[0], v[1]),
            &[feat, coords],
            tolerance,
            seed,
        )?);

        let xs = random_grid(rng, (1, 8, 3, 3), 1.0);
        reports.push(grad_check_with_step(
            "pixel_shuffle",
            |g, v| g.pixel_shuffle(v[0], 2),
            &[xs],
            1e-8,
            seed,
            LINEAR_STEP,
        )?);
        let xu = random_grid(rng, (1, 2, 4, 4), 1.0);
        reports.push(grad_check_with_step(
            "pixel_unshuffle",
            |g, v| g.pixel_unshuffle(v[0], 2),
            &[xu],
            1e-8,
            seed,
            LINEAR_STEP,
        )?);

        let xa = away_from(random_grid(rng, (1, 3, 4, 4), 1.0), 0.0, 1e-3);
        reports.push(grad_check(
            "leaky_relu",
            |g, v| Ok(g.leaky_relu(v[0], 0.1)),
            &[xa.clone()],
            tolerance,
            seed,
        )?);
        reports.push(grad_check("sigmoid", |g, v| Ok(g.sigmoid(v[0])), &[xa.clone()], tolerance, seed)?);

        let ya = random_grid(rng, (1, 3, 4, 4), 1.0);
        reports.push(grad_check("add", |g, v| g.add(v[0], v[1]), &[xa.clone(), ya.clone()], tolerance, seed)?);
        reports.push(grad_check("mul", |g, v| g.mul(v[0], v[1]), &[xa.clone(), ya.clone()], tolerance, seed)?);
        reports.push(grad_check("scale", |g, v| Ok(g.scale(v[0], -1.7)), &[xa.clone()], tolerance, seed)?);
        reports.push(grad_check(
            "concat",
            |g, v| g.concat(&[v[0], v[1]]),
            &[xa.clone(), random_grid(rng, (1, 2, 4, 4), 1.0)],
            tolerance,
            seed,
        )?);
        reports.push(grad_check(
            "tile",
            |g, v| g.tile(v[0], 3, 2),
            &[random_grid(rng, (2, 3, 1, 1), 1.0)],
            tolerance,
            seed,
        )?);
        reports.push(grad_check("avg_pool2", |g, v| g.avg_pool2(v[0]), &[ya.clone()], tolerance, seed)?);
        reports.push(grad_check("upsample2", |g, v| Ok(g.upsample2(v[0], 2.0)), &[ya.clone()], tolerance, seed)?);
        let xc = away_from(away_from(random_grid(rng, (1, 3, 4, 4), 1.0), 0.5, 1e-3), -0.5, 1e-3);
        reports.push(grad_check("clamp", |g, v| Ok(g.clamp(v[0], -0.5, 0.5)), &[xc], tolerance, seed)?);
        reports.push(grad_check_with_step(
            "reshape",
            |g, v| g.reshape(v[0], (1, 48, 1, 1)),
            &[ya.clone()],
            1e-8,
            seed,
            LINEAR_STEP,
        )?);
        let audio = away_from(random_grid(rng, (2, 1, 1, 12), 1.0), 0.0, 1e-3);
        reports.push(grad_check("abs_pool", |g, v| g.abs_pool(v[0], 4), &[audio], tolerance, seed)?);
        reports.push(grad_check(
            "charbonnier",
            |g, v| g.charbonnier(v[0], v[1], 1e-3),
            &[xa.clone(), ya.clone()],
            tolerance,
            seed,
        )?);
        reports.push(grad_check("mse", |g, v| g.mse(v[0], v[1]), &[xa, ya], tolerance, seed)?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_passes_exactly() {
        let x = Array4::from_elem((1, 1, 2, 2), 0.3);
        let ok = grad_check("scale", |g, v| Ok(g.scale(v[0], 2.0)), &[x.clone()], 1e-6, 1).unwrap();
        assert!(ok.pass, "{ok:?}");
        assert_eq!(ok.checked, 4);
    }

    #[test]
    fn suite_passes_on_five_seeds() {
        let reports = operator_suite(&[0, 1, 2, 3, 4], 1e-4).unwrap();
        for r in &reports {
            assert!(r.pass, "{} seed {}: {:e} at {:?}", r.name, r.seed, r.max_rel_error, r.worst);
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!(relative_error(1.0, 1.0 + 1e-9) < 1e-8);
    }
}
