//! Randomised invariant checks over the geometry, optimizer and model
//! gradients. Backs the `selftest` CLI subcommand.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::geometry::{norm, ManifoldSpec, DEFAULT_BALL_EPS};
use crate::model::{LabeledPair, Model, ModelConfig};
use crate::optim::{relative_error, riemannian_grad_slice, rsgd_step_slice, OptimizerConfig, DEFAULT_FD_STEP};
use crate::seeds;

/// Relative tolerance for analytic-vs-finite-difference gradients.
pub const GRAD_REL_TOL: f64 = 1e-4;
/// Absolute error below which a gradient coordinate always passes.
pub const GRAD_ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {} ({})", self.name, self.detail)
    }
}

/// Uniform sample from the ball of radius `radius` in `dim` dimensions.
pub fn sample_in_ball<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = norm(&g).max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    g.iter().map(|v| v / n * r).collect()
}

fn random_ball<R: Rng>(rng: &mut R) -> ManifoldSpec {
    let dim = rng.random_range(1..=8);
    let c = [0.25, 0.5, 1.0, 2.0, 4.0][rng.random_range(0..5)];
    ManifoldSpec::poincare(dim, c).expect("valid spec")
}

/// A random small model and batch mixing Poincaré and Euclidean manifolds,
/// with ball rows at `‖x‖√c ≤ 0.5` and non-trivial fusion parameters.
pub fn random_gradient_instance<R: Rng>(rng: &mut R) -> (Model, Vec<LabeledPair>) {
    let m = rng.random_range(1..=3);
    let mut manifolds: Vec<ManifoldSpec> = (0..m)
        .map(|_| {
            if rng.random_bool(0.5) {
                random_ball(rng)
            } else {
                ManifoldSpec::euclidean(rng.random_range(1..=6)).expect("valid spec")
            }
        })
        .collect();
    // always cover both geometries
    if m >= 2 {
        manifolds[0] = random_ball(rng);
        manifolds[1] = ManifoldSpec::euclidean(rng.random_range(1..=6)).expect("valid spec");
    }
    let num_users = rng.random_range(2..=4);
    let num_ads = rng.random_range(2..=5);
    let cfg = ModelConfig {
        init_scale: 1e-3,
        ..ModelConfig::new(manifolds.clone())
    };
    let mut model = crate::model::init_embeddings(&cfg, num_users, num_ads).expect("valid config");
    for (k, spec) in manifolds.iter().enumerate() {
        for (table, n) in [(&mut model.user_tables[k], num_users), (&mut model.ad_tables[k], num_ads)] {
            for i in 0..n {
                let row = if spec.is_hyperbolic() {
                    sample_in_ball(rng, spec.dim(), 0.5 * spec.radius())
                } else {
                    (0..spec.dim()).map(|_| rng.random_range(-1.0..1.0)).collect()
                };
                table.set_row(i, &row).expect("row inside the ball");
            }
        }
    }
    let f = &mut model.fusion;
    f.manifold_bias.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    f.manifold_scale.iter_mut().for_each(|v| *v = rng.random_range(0.5..2.0));
    f.attention_weights.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    f.global_bias = rng.random_range(-0.5..0.5);
    let batch = (0..rng.random_range(1..=6))
        .map(|_| {
            LabeledPair::new(
                rng.random_range(0..num_users),
                rng.random_range(0..num_ads),
                u8::from(rng.random_bool(0.5)),
            )
        })
        .collect();
    (model, batch)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub num_checked: usize,
}

/// Central differences of [`Model::batch_loss`] against [`Model::backward`]
/// for every touched row coordinate and every fusion parameter.
pub fn check_model_gradients(model: &Model, batch: &[LabeledPair], h: f64) -> Result<ModelGradReport> {
    let (_, grads) = model.backward(batch)?;
    let mut report = ModelGradReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        num_checked: 0,
    };
    let mut record = |name: String, analytic: f64, numeric: f64| {
        let err = relative_error(analytic, numeric, GRAD_ABS_FLOOR);
        report.num_checked += 1;
        if err > report.max_rel_err || report.worst_param.is_empty() {
            report.max_rel_err = report.max_rel_err.max(err);
            report.worst_param = name;
        }
    };
    let central = |perturb: &dyn Fn(&mut Model, f64)| -> Result<f64> {
        let mut plus = model.clone();
        perturb(&mut plus, h);
        let mut minus = model.clone();
        perturb(&mut minus, -h);
        Ok((plus.batch_loss(batch)? - minus.batch_loss(batch)?) / (2.0 * h))
    };

    for k in 0..model.num_manifolds() {
        for (is_user, rows) in [(true, &grads.user_rows[k]), (false, &grads.ad_rows[k])] {
            for (&idx, g) in rows {
                for (j, &a) in g.iter().enumerate() {
                    let fd = central(&|mm: &mut Model, d: f64| {
                        let table = if is_user { &mut mm.user_tables[k] } else { &mut mm.ad_tables[k] };
                        let mut row = table.row(idx).to_vec();
                        row[j] += d;
                        table.set_row(idx, &row).expect("perturbation stays inside the ball");
                    })?;
                    let who = if is_user { "user" } else { "ad" };
                    record(format!("{who}_tables[{k}][{idx}][{j}]"), a, fd);
                }
            }
        }
    }
    let fg = &grads.fusion;
    for k in 0..model.num_manifolds() {
        let fd = central(&|mm: &mut Model, d: f64| mm.fusion.manifold_bias[k] += d)?;
        record(format!("manifold_bias[{k}]"), fg.manifold_bias[k], fd);
        let fd = central(&|mm: &mut Model, d: f64| mm.fusion.manifold_scale[k] += d)?;
        record(format!("manifold_scale[{k}]"), fg.manifold_scale[k], fd);
    }
    for (i, &a) in fg.attention_weights.iter().enumerate() {
        let fd = central(&|mm: &mut Model, d: f64| mm.fusion.attention_weights[i] += d)?;
        record(format!("attention_weights[{i}]"), a, fd);
    }
    let fd = central(&|mm: &mut Model, d: f64| mm.fusion.global_bias += d)?;
    record("global_bias".into(), fg.global_bias, fd);
    Ok(report)
}

fn property(name: &'static str, passed: bool, detail: String) -> PropertyResult {
    PropertyResult { name, passed, detail }
}

fn mobius_identities(rng: &mut ChaCha8Rng) -> PropertyResult {
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let spec = random_ball(rng);
        let x = sample_in_ball(rng, spec.dim(), 0.9 * spec.radius());
        let zero = vec![0.0; spec.dim()];
        for out in [spec.mobius_add(&x, &zero), spec.mobius_add(&zero, &x)] {
            let out = out.expect("interior points");
            worst = worst.max(out.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }
    property("mobius_identity", worst <= 1e-15, format!("max err {worst:.3e}"))
}

fn left_cancellation(rng: &mut ChaCha8Rng) -> PropertyResult {
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let spec = random_ball(rng);
        let r = 0.7 * spec.radius();
        let x = sample_in_ball(rng, spec.dim(), r);
        let y = sample_in_ball(rng, spec.dim(), r);
        let nx: Vec<f64> = x.iter().map(|v| -v).collect();
        let back = spec.mobius_add(&nx, &spec.mobius_add(&x, &y).unwrap()).unwrap();
        worst = worst.max(back.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    property("left_cancellation", worst <= 1e-9, format!("max err {worst:.3e}"))
}

fn exp_log_inversion(rng: &mut ChaCha8Rng) -> PropertyResult {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let spec = random_ball(rng);
        let x = sample_in_ball(rng, spec.dim(), 0.7 * spec.radius());
        let v = sample_in_ball(rng, spec.dim(), 1.0);
        let back = spec.log_map(&x, &spec.exp_map(&x, &v).unwrap()).unwrap();
        let err: f64 = norm(&back.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
        worst = worst.max(err - (1e-8 + 1e-6 * norm(&v)));
    }
    property("exp_log_inversion", worst <= 0.0, format!("max excess over bound {worst:.3e}"))
}

fn metric_axioms(rng: &mut ChaCha8Rng, triples: usize) -> PropertyResult {
    let mut sym = 0.0f64;
    let mut tri = f64::NEG_INFINITY;
    let mut negative = false;
    for _ in 0..triples {
        let spec = random_ball(rng);
        let r = 0.9 * spec.radius();
        let [x, y, z] = [0; 3].map(|_| sample_in_ball(rng, spec.dim(), r));
        let dxy = spec.distance(&x, &y).unwrap();
        let dyx = spec.distance(&y, &x).unwrap();
        let dyz = spec.distance(&y, &z).unwrap();
        let dxz = spec.distance(&x, &z).unwrap();
        negative |= dxy < 0.0 || dyz < 0.0 || dxz < 0.0;
        sym = sym.max((dxy - dyx).abs());
        tri = tri.max(dxz - dxy - dyz);
    }
    property(
        "metric_axioms",
        sym <= 1e-12 && tri <= 1e-9 && !negative,
        format!("max asymmetry {sym:.3e}, max triangle excess {tri:.3e}"),
    )
}

fn flat_limit(rng: &mut ChaCha8Rng) -> PropertyResult {
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let dim = rng.random_range(1..=8);
        let spec = ManifoldSpec::poincare(dim, 1e-8).unwrap();
        let x = sample_in_ball(rng, dim, 0.5);
        let y = sample_in_ball(rng, dim, 0.5);
        let flat = 2.0 * norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        worst = worst.max((spec.distance(&x, &y).unwrap() - flat).abs());
    }
    property("flat_limit", worst <= 1e-4, format!("max err {worst:.3e}"))
}

fn outputs_feasible(rng: &mut ChaCha8Rng) -> PropertyResult {
    let mut ok = true;
    for _ in 0..1000 {
        let spec = random_ball(rng);
        let x = sample_in_ball(rng, spec.dim(), spec.radius() * (1.0 - 1e-3));
        let y = sample_in_ball(rng, spec.dim(), spec.radius() * (1.0 - 1e-3));
        let v: Vec<f64> = (0..spec.dim()).map(|_| 50.0 * rng.random_range(-1.0..1.0)).collect();
        for p in [spec.mobius_add(&x, &y).unwrap(), spec.exp_map(&x, &v).unwrap()] {
            ok &= spec.curvature() * norm(&p).powi(2) <= (1.0 - DEFAULT_BALL_EPS).powi(2);
        }
    }
    property("kernel_outputs_in_ball", ok, "mobius_add and exp_map after projection".into())
}

/// RSGD iterates under adversarial gradients; returns the largest `c‖x‖²` seen.
pub fn rsgd_feasibility_run(rng: &mut ChaCha8Rng, steps: usize, spec: &ManifoldSpec, cfg: &OptimizerConfig) -> Result<f64> {
    let mut x = vec![0.0; spec.dim()];
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let mut g: Vec<f64> = (0..spec.dim()).map(|_| StandardNormal.sample(rng)).collect();
        // half the time push straight outwards
        if rng.random_bool(0.5) && norm(&x) > 0.0 {
            g = x.iter().map(|v| -v).collect();
        }
        let n = norm(&g).max(f64::MIN_POSITIVE);
        let scale = rng.random_range(0.0..=10.0) / n;
        g.iter_mut().for_each(|v| *v *= scale);
        x = rsgd_step_slice(spec, &x, &g, cfg)?;
        worst = worst.max(spec.curvature() * norm(&x).powi(2));
    }
    Ok(worst)
}

fn rsgd_feasibility(rng: &mut ChaCha8Rng) -> PropertyResult {
    let cfg = OptimizerConfig {
        learning_rate: 0.1,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    for c in [0.5, 1.0, 2.0] {
        let spec = ManifoldSpec::poincare(4, c).unwrap();
        match rsgd_feasibility_run(rng, 10_000, &spec, &cfg) {
            Ok(w) => worst = worst.max(w),
            Err(e) => return property("rsgd_feasibility", false, e.to_string()),
        }
    }
    let bound = (1.0 - cfg.ball_eps).powi(2);
    property("rsgd_feasibility", worst <= bound, format!("max c‖x‖² {worst:.9} (bound {bound:.9})"))
}

fn riemannian_scale(rng: &mut ChaCha8Rng) -> PropertyResult {
    let mut ok = true;
    for _ in 0..1000 {
        let spec = random_ball(rng);
        let x = sample_in_ball(rng, spec.dim(), 0.999 * spec.radius());
        let g: Vec<f64> = (0..spec.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = riemannian_grad_slice(&spec, &x, &g).unwrap();
        let ratio = norm(&r) / norm(&g);
        ok &= ratio > 0.0 && ratio <= 0.25 + 1e-15;
    }
    let spec = ManifoldSpec::poincare(3, 2.0).unwrap();
    ok &= riemannian_grad_slice(&spec, &[0.0; 3], &[1.0, -2.0, 4.0]).unwrap() == vec![0.25, -0.5, 1.0];
    property("riemannian_grad_scale", ok, "scale in (0, 1/4], exactly 1/4 at the origin".into())
}

fn descent_sanity(rng: &mut ChaCha8Rng) -> PropertyResult {
    let cfg = OptimizerConfig {
        learning_rate: 1e-2,
        ..Default::default()
    };
    let mut ok = true;
    for _ in 0..500 {
        let spec = random_ball(rng);
        let x = sample_in_ball(rng, spec.dim(), 0.9 * spec.radius());
        let y = sample_in_ball(rng, spec.dim(), 0.9 * spec.radius());
        let (d, gx, _) = spec.distance_with_grad(&x, &y).unwrap();
        if d < 1e-6 {
            continue;
        }
        let g: Vec<f64> = gx.iter().map(|v| 2.0 * d * v).collect();
        let next = rsgd_step_slice(&spec, &x, &g, &cfg).unwrap();
        ok &= spec.distance(&next, &y).unwrap().powi(2) < d * d;
    }
    property("rsgd_descent", ok, "one small step decreases d(x, y)²".into())
}

fn model_gradients(rng: &mut ChaCha8Rng, instances: usize) -> PropertyResult {
    let mut worst = 0.0f64;
    let mut worst_param = String::new();
    let mut checked = 0;
    for _ in 0..instances {
        let (model, batch) = random_gradient_instance(rng);
        match check_model_gradients(&model, &batch, DEFAULT_FD_STEP) {
            Ok(r) => {
                checked += r.num_checked;
                if r.max_rel_err >= worst {
                    worst = r.max_rel_err;
                    worst_param = r.worst_param;
                }
            }
            Err(e) => return property("model_gradients", false, e.to_string()),
        }
    }
    property(
        "model_gradients",
        worst <= GRAD_REL_TOL,
        format!("{checked} coordinates, max rel err {worst:.3e} at {worst_param}"),
    )
}

/// Runs every property with generators seeded from `seed`.
pub fn run_selftest(seed: u64) -> Vec<PropertyResult> {
    let mut rng = seeds::rng(seed, "selftest");
    vec![
        mobius_identities(&mut rng),
        left_cancellation(&mut rng),
        exp_log_inversion(&mut rng),
        metric_axioms(&mut rng, 10_000),
        flat_limit(&mut rng),
        outputs_feasible(&mut rng),
        riemannian_scale(&mut rng),
        rsgd_feasibility(&mut rng),
        descent_sanity(&mut rng),
        model_gradients(&mut rng, 64),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_properties_pass() {
        for r in run_selftest(42) {
            assert!(r.passed, "{r}");
        }
    }
}
