//! Riemannian SGD on Euclidean and Poincaré-ball rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    all_finite, dot, norm, ManifoldPoint, ManifoldSpec, TangentVector, DEFAULT_BALL_EPS,
};

/// Default central-difference step for [`gradient_check`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    #[serde(default = "default_ball_eps")]
    pub ball_eps: f64,
    #[serde(default)]
    pub grad_clip: Option<f64>,
    #[serde(default)]
    pub schedule: LrSchedule,
}

/// Learning-rate schedule over the whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Decays linearly from `learning_rate` towards zero at the last step.
    Linear,
}

fn default_ball_eps() -> f64 {
    DEFAULT_BALL_EPS
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            ball_eps: DEFAULT_BALL_EPS,
            grad_clip: None,
            schedule: LrSchedule::Constant,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("optimizer.learning_rate", "must be finite and > 0"));
        }
        if !(self.ball_eps > 0.0 && self.ball_eps <= 1e-2) {
            return Err(Error::config("optimizer.ball_eps", "must lie in (0, 1e-2]"));
        }
        if let Some(clip) = self.grad_clip {
            if !(clip.is_finite() && clip > 0.0) {
                return Err(Error::config("optimizer.grad_clip", "must be finite and > 0"));
            }
        }
        Ok(())
    }

    /// Copy of the config with the learning rate for `step` of `total_steps` (0-based).
    pub fn at_step(&self, step: usize, total_steps: usize) -> Self {
        let learning_rate = match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Linear => {
                let total = total_steps.max(1) as f64;
                self.learning_rate * (1.0 - step as f64 / total)
            }
        };
        Self {
            learning_rate,
            ..*self
        }
    }
}

/// How hyperbolic rows are updated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// Exponential-map step along the negative Riemannian gradient.
    #[default]
    Riemannian,
    /// Plain SGD on the tangent-space coordinates `z = log_0(x)`.
    TangentOrigin,
}

/// Inverse-metric scaling of an ambient gradient: `((1 − c‖x‖²)² / 4)·g` on the ball.
pub fn riemannian_grad_slice(spec: &ManifoldSpec, x: &[f64], grad: &[f64]) -> Result<Vec<f64>> {
    spec.check_vector(grad)?;
    if !spec.is_hyperbolic() {
        return Ok(grad.to_vec());
    }
    let lambda = spec.conformal_factor(x)?;
    let scale = 1.0 / (lambda * lambda);
    Ok(grad.iter().map(|g| g * scale).collect())
}

pub fn riemannian_grad(x: &ManifoldPoint, ambient_grad: &[f64]) -> Result<TangentVector> {
    let coords = riemannian_grad_slice(x.spec(), x.coords(), ambient_grad)?;
    TangentVector::new(x.clone(), coords)
}

/// One RSGD update `x ← proj(exp_x(−η·grad_R))` applied to raw coordinates.
pub fn rsgd_step_slice(
    spec: &ManifoldSpec,
    x: &[f64],
    ambient_grad: &[f64],
    cfg: &OptimizerConfig,
) -> Result<Vec<f64>> {
    let mut rgrad = riemannian_grad_slice(spec, x, ambient_grad)?;
    clip(&mut rgrad, cfg.grad_clip);
    let step: Vec<f64> = rgrad.iter().map(|g| -cfg.learning_rate * g).collect();
    let mut out = spec.exp_map_raw(x, &step)?;
    spec.project_in_place(&mut out, cfg.ball_eps)?;
    Ok(out)
}

pub fn rsgd_step(
    x: &ManifoldPoint,
    ambient_grad: &[f64],
    cfg: &OptimizerConfig,
) -> Result<ManifoldPoint> {
    let coords = rsgd_step_slice(x.spec(), x.coords(), ambient_grad, cfg)?;
    ManifoldPoint::new(*x.spec(), coords)
}

/// SGD step in the chart `x = exp_0(z)`: the ambient gradient is pulled back
/// through the Jacobian of `exp_0`, `z` is updated, and the row is mapped back.
pub fn tangent_origin_step_slice(
    spec: &ManifoldSpec,
    x: &[f64],
    ambient_grad: &[f64],
    cfg: &OptimizerConfig,
) -> Result<Vec<f64>> {
    spec.check_vector(ambient_grad)?;
    if !spec.is_hyperbolic() {
        return rsgd_step_slice(spec, x, ambient_grad, cfg);
    }
    let origin = vec![0.0; x.len()];
    let z = spec.log_map(&origin, x)?;
    let sc = spec.curvature().sqrt();
    let r = norm(&z);
    let t = sc * r;
    // exp_0(z) = f(r)·z with f(r) = tanh(√c r)/(√c r); J = f·I + (f'(r)/r)·z zᵀ
    let (f, fp_over_r) = if t < 1e-4 {
        let t2 = t * t;
        (1.0 - t2 / 3.0, -2.0 * spec.curvature() / 3.0 * (1.0 - 0.8 * t2))
    } else {
        let th = t.tanh();
        let sech2 = 1.0 - th * th;
        (th / t, (t * sech2 - th) / (sc * r * r * r))
    };
    let zg = dot(&z, ambient_grad);
    let mut gz: Vec<f64> = ambient_grad
        .iter()
        .zip(&z)
        .map(|(g, zi)| f * g + fp_over_r * zg * zi)
        .collect();
    clip(&mut gz, cfg.grad_clip);
    let z_new: Vec<f64> = z
        .iter()
        .zip(&gz)
        .map(|(zi, g)| zi - cfg.learning_rate * g)
        .collect();
    let mut out = spec.exp_map_raw(&origin, &z_new)?;
    spec.project_in_place(&mut out, cfg.ball_eps)?;
    Ok(out)
}

fn clip(g: &mut [f64], max_norm: Option<f64>) {
    if let Some(max) = max_norm {
        let n = norm(g);
        if n > max {
            let s = max / n;
            g.iter_mut().for_each(|v| *v *= s);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Relative error per coordinate (0 where the absolute error is under the floor).
    pub per_coordinate: Vec<f64>,
    pub finite_diff: Vec<f64>,
    /// Step actually used, after any shrinking.
    pub step: f64,
}

impl GradCheckReport {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel_err <= rel_tol
    }
}

/// Relative error with an absolute floor: errors below `abs_floor` count as zero.
pub fn relative_error(analytic: f64, numeric: f64, abs_floor: f64) -> f64 {
    let abs = (analytic - numeric).abs();
    if abs <= abs_floor {
        0.0
    } else {
        abs / analytic.abs().max(numeric.abs())
    }
}

/// Compares an analytic ambient gradient against central differences of `f`
/// around `x`. If a perturbed point leaves the manifold the step is shrunk
/// tenfold once before giving up.
pub fn gradient_check<F>(
    f: F,
    analytic_grad: &[f64],
    x: &ManifoldPoint,
    h: f64,
    abs_floor: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> f64,
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::domain(format!("finite-difference step {h} not in [1e-7, 1e-3]")));
    }
    let spec = x.spec();
    spec.check_vector(analytic_grad)?;
    let step = if perturbations_valid(spec, x.coords(), h) {
        h
    } else if perturbations_valid(spec, x.coords(), h / 10.0) {
        h / 10.0
    } else {
        return Err(Error::domain("finite-difference perturbation leaves the ball"));
    };

    let mut probe = x.coords().to_vec();
    let mut finite_diff = Vec::with_capacity(probe.len());
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = f(&probe);
        probe[i] = orig - step;
        let minus = f(&probe);
        probe[i] = orig;
        finite_diff.push((plus - minus) / (2.0 * step));
    }
    if !all_finite(&finite_diff) {
        return Err(Error::domain("non-finite finite-difference gradient"));
    }
    let per_coordinate: Vec<f64> = analytic_grad
        .iter()
        .zip(&finite_diff)
        .map(|(a, n)| relative_error(*a, *n, abs_floor))
        .collect();
    let max_abs_err = analytic_grad
        .iter()
        .zip(&finite_diff)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let max_rel_err = per_coordinate.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_rel_err,
        max_abs_err,
        per_coordinate,
        finite_diff,
        step,
    })
}

fn perturbations_valid(spec: &ManifoldSpec, x: &[f64], h: f64) -> bool {
    let mut probe = x.to_vec();
    (0..x.len()).all(|i| {
        let orig = probe[i];
        let ok = [orig + h, orig - h].iter().all(|&v| {
            probe[i] = v;
            spec.check_point(&probe).is_ok()
        });
        probe[i] = orig;
        ok
    })
}
