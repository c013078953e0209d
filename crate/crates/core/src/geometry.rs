//! Euclidean and Poincaré-ball kernels with an explicit curvature parameter.
//!
//! A Poincaré ball of curvature magnitude `c > 0` is the open ball of radius
//! `1/√c` with sectional curvature `-c`. All kernels compute in `f64`.
//!
//! Two layers are exposed:
//!
//! * slice kernels on [`ManifoldSpec`] (`spec.distance(&x, &y)`), used on hot
//!   paths where rows are already known to belong to the manifold;
//! * typed wrappers ([`ManifoldPoint`], [`TangentVector`]) that check spec
//!   agreement and the point invariant.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default margin used by [`project_to_ball`].
pub const DEFAULT_BALL_EPS: f64 = 1e-5;

/// Below this norm a direction is treated as zero and the analytic limit is used.
pub const ZERO_NORM: f64 = 1e-15;

const MAX_ARTANH_ARG: f64 = 1.0 - 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Euclidean,
    PoincareBall,
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldKind::Euclidean => f.write_str("euclidean"),
            ManifoldKind::PoincareBall => f.write_str("poincare_ball"),
        }
    }
}

/// Geometry descriptor: kind, dimension and curvature magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", deny_unknown_fields)]
pub struct ManifoldSpec {
    kind: ManifoldKind,
    dim: usize,
    curvature: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    kind: ManifoldKind,
    dim: usize,
    #[serde(default)]
    curvature: f64,
}

impl TryFrom<RawSpec> for ManifoldSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        ManifoldSpec::new(raw.kind, raw.dim, raw.curvature)
    }
}

impl fmt::Display for ManifoldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ManifoldKind::Euclidean => write!(f, "euclidean({})", self.dim),
            ManifoldKind::PoincareBall => {
                write!(f, "poincare_ball({}, c={})", self.dim, self.curvature)
            }
        }
    }
}

impl ManifoldSpec {
    pub fn new(kind: ManifoldKind, dim: usize, curvature: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dim", "must be >= 1"));
        }
        match kind {
            ManifoldKind::PoincareBall if !(curvature.is_finite() && curvature > 0.0) => {
                Err(Error::config(
                    "curvature",
                    "must be finite and > 0 for a Poincaré ball",
                ))
            }
            ManifoldKind::Euclidean if curvature != 0.0 => {
                Err(Error::config("curvature", "must be 0 for a Euclidean manifold"))
            }
            _ => Ok(Self {
                kind,
                dim,
                curvature,
            }),
        }
    }

    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::new(ManifoldKind::Euclidean, dim, 0.0)
    }

    pub fn poincare(dim: usize, curvature: f64) -> Result<Self> {
        Self::new(ManifoldKind::PoincareBall, dim, curvature)
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.kind == ManifoldKind::PoincareBall
    }

    /// Radius `1/√c` of the ball, or infinity for Euclidean space.
    pub fn radius(&self) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean => f64::INFINITY,
            ManifoldKind::PoincareBall => 1.0 / self.curvature.sqrt(),
        }
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        Ok(())
    }

    /// Checks dimension, finiteness and (for the ball) `c‖x‖² < 1`.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        self.check_dim(x)?;
        if !all_finite(x) {
            return Err(Error::domain("non-finite coordinate"));
        }
        if self.is_hyperbolic() && self.curvature * norm_sq(x) >= 1.0 {
            return Err(Error::domain(format!(
                "point outside the ball: c·‖x‖² = {} >= 1",
                self.curvature * norm_sq(x)
            )));
        }
        Ok(())
    }

    /// Checks dimension and finiteness of a tangent or ambient vector.
    pub fn check_vector(&self, v: &[f64]) -> Result<()> {
        self.check_dim(v)?;
        if !all_finite(v) {
            return Err(Error::domain("non-finite vector component"));
        }
        Ok(())
    }

    /// `λ_x = 2 / (1 − c‖x‖²)` on the ball, 1 in flat space.
    pub fn conformal_factor(&self, x: &[f64]) -> Result<f64> {
        match self.kind {
            ManifoldKind::Euclidean => Ok(1.0),
            ManifoldKind::PoincareBall => {
                let gap = 1.0 - self.curvature * norm_sq(x);
                if gap <= 0.0 {
                    return Err(Error::domain("conformal factor undefined outside the ball"));
                }
                Ok(2.0 / gap)
            }
        }
    }

    /// Möbius addition without the final projection. Euclidean: `x + y`.
    pub fn mobius_add_raw(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if self.kind == ManifoldKind::Euclidean {
            return Ok(x.iter().zip(y).map(|(a, b)| a + b).collect());
        }
        let c = self.curvature;
        let xy = dot(x, y);
        let x2 = norm_sq(x);
        let y2 = norm_sq(y);
        let denom = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
        if denom <= ZERO_NORM {
            return Err(Error::domain(format!(
                "Möbius addition denominator {denom} too small"
            )));
        }
        let cx = 1.0 + 2.0 * c * xy + c * y2;
        let cy = 1.0 - c * x2;
        Ok(x.iter()
            .zip(y)
            .map(|(a, b)| (cx * a + cy * b) / denom)
            .collect())
    }

    /// `x ⊕_c y`, projected back inside the ball with [`DEFAULT_BALL_EPS`].
    pub fn mobius_add(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.mobius_add_raw(x, y)?;
        self.project_in_place(&mut out, DEFAULT_BALL_EPS)?;
        Ok(out)
    }

    /// Geodesic distance. On the ball `d = (2/√c)·artanh(√c‖(−x) ⊕ y‖)`.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self.kind {
            ManifoldKind::Euclidean => Ok(euclidean_distance(x, y)),
            ManifoldKind::PoincareBall => {
                let w = self.mobius_add_raw(&neg(x), y)?;
                let n = norm(&w);
                if n < ZERO_NORM {
                    return Ok(0.0);
                }
                let sc = self.curvature.sqrt();
                Ok(2.0 / sc * artanh_clamped(sc * n)?)
            }
        }
    }

    /// Distance together with its ambient gradients with respect to `x` and `y`.
    ///
    /// On the ball this differentiates the equivalent closed form
    /// `d = (1/√c)·arcosh(1 + δ)`, `δ = 2c‖x−y‖² / ((1−c‖x‖²)(1−c‖y‖²))`.
    /// At coincident points the gradients are zero.
    pub fn distance_with_grad(&self, x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let r2 = norm_sq(&diff);
        let r = r2.sqrt();
        let dim = x.len();
        if r < ZERO_NORM {
            return Ok((0.0, vec![0.0; dim], vec![0.0; dim]));
        }
        match self.kind {
            ManifoldKind::Euclidean => {
                let gx: Vec<f64> = diff.iter().map(|d| d / r).collect();
                let gy = neg(&gx);
                Ok((r, gx, gy))
            }
            ManifoldKind::PoincareBall => {
                let c = self.curvature;
                let sc = c.sqrt();
                let alpha = 1.0 - c * norm_sq(x);
                let beta = 1.0 - c * norm_sq(y);
                if alpha <= 0.0 || beta <= 0.0 {
                    return Err(Error::domain("distance gradient outside the ball"));
                }
                let delta = 2.0 * c * r2 / (alpha * beta);
                let root = (delta * (delta + 2.0)).sqrt();
                let d = (delta + root).ln_1p() / sc;
                // ∂δ/∂x = 4c/(β α²) · (α(x − y) + c‖x − y‖² x)
                let outer = 1.0 / (sc * root);
                let kx = outer * 4.0 * c / (beta * alpha * alpha);
                let ky = outer * 4.0 * c / (alpha * beta * beta);
                let gx = (0..dim)
                    .map(|i| kx * (alpha * diff[i] + c * r2 * x[i]))
                    .collect();
                let gy = (0..dim)
                    .map(|i| ky * (-beta * diff[i] + c * r2 * y[i]))
                    .collect();
                Ok((d, gx, gy))
            }
        }
    }

    /// Exponential map without the final projection.
    pub fn exp_map_raw(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        if !all_finite(v) || !all_finite(x) {
            return Err(Error::domain("non-finite input to exp_map"));
        }
        let vn = norm(v);
        if vn < ZERO_NORM {
            return Ok(x.to_vec());
        }
        match self.kind {
            ManifoldKind::Euclidean => Ok(x.iter().zip(v).map(|(a, b)| a + b).collect()),
            ManifoldKind::PoincareBall => {
                let sc = self.curvature.sqrt();
                let lambda = self.conformal_factor(x)?;
                let scale = (sc * lambda * vn / 2.0).tanh() / (sc * vn);
                let step: Vec<f64> = v.iter().map(|vi| vi * scale).collect();
                self.mobius_add_raw(x, &step)
            }
        }
    }

    /// `exp_x(v) = x ⊕ (tanh(√c λ_x ‖v‖ / 2) · v / (√c‖v‖))`, projected.
    pub fn exp_map(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.exp_map_raw(x, v)?;
        self.project_in_place(&mut out, DEFAULT_BALL_EPS)?;
        Ok(out)
    }

    /// `log_x(y) = (2/(√c λ_x))·artanh(√c‖w‖)·w/‖w‖` with `w = (−x) ⊕ y`.
    pub fn log_map(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if !all_finite(x) || !all_finite(y) {
            return Err(Error::domain("non-finite input to log_map"));
        }
        match self.kind {
            ManifoldKind::Euclidean => Ok(y.iter().zip(x).map(|(a, b)| a - b).collect()),
            ManifoldKind::PoincareBall => {
                let w = self.mobius_add_raw(&neg(x), y)?;
                let wn = norm(&w);
                if wn < ZERO_NORM {
                    return Ok(vec![0.0; x.len()]);
                }
                let sc = self.curvature.sqrt();
                let lambda = self.conformal_factor(x)?;
                let scale = 2.0 / (sc * lambda) * artanh_clamped(sc * wn)? / wn;
                Ok(w.iter().map(|wi| wi * scale).collect())
            }
        }
    }

    /// Rescales `x` onto the sphere of radius `(1 − eps)/√c` if it lies on or beyond it.
    pub fn project_in_place(&self, x: &mut [f64], eps: f64) -> Result<()> {
        if !all_finite(x) {
            return Err(Error::domain("non-finite input to projection"));
        }
        if self.kind == ManifoldKind::Euclidean {
            return Ok(());
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::domain(format!("projection eps {eps} not in (0, 1)")));
        }
        let max_norm = (1.0 - eps) / self.curvature.sqrt();
        let n = norm(x);
        if n >= max_norm {
            let mut s = max_norm / n;
            x.iter_mut().for_each(|xi| *xi *= s);
            // rounding can leave the rescaled norm an ulp above the target
            while norm(x) > max_norm {
                s = 1.0 - f64::EPSILON;
                x.iter_mut().for_each(|xi| *xi *= s);
            }
        }
        Ok(())
    }
}

/// A point on a manifold. Construction enforces the manifold's point invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    spec: ManifoldSpec,
    coords: Vec<f64>,
}

impl ManifoldPoint {
    pub fn new(spec: ManifoldSpec, coords: Vec<f64>) -> Result<Self> {
        spec.check_point(&coords)?;
        Ok(Self { spec, coords })
    }

    pub fn origin(spec: ManifoldSpec) -> Self {
        Self {
            spec,
            coords: vec![0.0; spec.dim()],
        }
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// The Möbius inverse `−x`.
    pub fn negated(&self) -> Self {
        Self {
            spec: self.spec,
            coords: neg(&self.coords),
        }
    }
}

/// A vector in the tangent space at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: ManifoldPoint,
    coords: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: ManifoldPoint, coords: Vec<f64>) -> Result<Self> {
        base.spec.check_vector(&coords)?;
        Ok(Self { base, coords })
    }

    pub fn zero(base: ManifoldPoint) -> Self {
        let dim = base.spec.dim();
        Self {
            base,
            coords: vec![0.0; dim],
        }
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }
}

fn same_spec(a: &ManifoldSpec, b: &ManifoldSpec) -> Result<()> {
    if a != b {
        return Err(Error::SpecMismatch {
            left: a.to_string(),
            right: b.to_string(),
        });
    }
    Ok(())
}

pub fn conformal_factor(x: &ManifoldPoint) -> Result<f64> {
    x.spec.conformal_factor(&x.coords)
}

pub fn mobius_add(x: &ManifoldPoint, y: &ManifoldPoint) -> Result<ManifoldPoint> {
    same_spec(&x.spec, &y.spec)?;
    let coords = x.spec.mobius_add(&x.coords, &y.coords)?;
    Ok(ManifoldPoint {
        spec: x.spec,
        coords,
    })
}

pub fn distance(x: &ManifoldPoint, y: &ManifoldPoint) -> Result<f64> {
    same_spec(&x.spec, &y.spec)?;
    x.spec.distance(&x.coords, &y.coords)
}

pub fn exp_map(x: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
    same_spec(&x.spec, &v.base.spec)?;
    let coords = x.spec.exp_map(&x.coords, &v.coords)?;
    Ok(ManifoldPoint {
        spec: x.spec,
        coords,
    })
}

pub fn log_map(x: &ManifoldPoint, y: &ManifoldPoint) -> Result<TangentVector> {
    same_spec(&x.spec, &y.spec)?;
    let coords = x.spec.log_map(&x.coords, &y.coords)?;
    Ok(TangentVector {
        base: x.clone(),
        coords,
    })
}

/// Maps a raw vector onto the manifold, pulling ball points strictly inside
/// the radius `(1 − eps)/√c`. Euclidean vectors pass through unchanged.
pub fn project_to_ball(x: &[f64], spec: ManifoldSpec, eps: f64) -> Result<ManifoldPoint> {
    spec.check_vector(x)?;
    let mut coords = x.to_vec();
    spec.project_in_place(&mut coords, eps)?;
    Ok(ManifoldPoint { spec, coords })
}

fn artanh_clamped(z: f64) -> Result<f64> {
    if !z.is_finite() || z < 0.0 {
        return Err(Error::domain(format!("artanh argument {z} invalid")));
    }
    Ok(z.min(MAX_ARTANH_ARG).atanh())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub(crate) fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

fn neg(a: &[f64]) -> Vec<f64> {
    a.iter().map(|v| -v).collect()
}

fn euclidean_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball(dim: usize, c: f64) -> ManifoldSpec {
        ManifoldSpec::poincare(dim, c).unwrap()
    }

    fn pt(spec: ManifoldSpec, coords: &[f64]) -> ManifoldPoint {
        ManifoldPoint::new(spec, coords.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn spec_invariants() {
        assert!(ManifoldSpec::poincare(0, 1.0).is_err());
        assert!(ManifoldSpec::poincare(2, 0.0).is_err());
        assert!(ManifoldSpec::new(ManifoldKind::Euclidean, 2, 1.0).is_err());
        assert!(ManifoldSpec::euclidean(3).is_ok());
        let parsed: std::result::Result<ManifoldSpec, _> =
            serde_json::from_str(r#"{"kind":"poincare_ball","dim":2,"curvature":-1}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn point_outside_ball_rejected() {
        assert!(ManifoldPoint::new(ball(2, 1.0), vec![1.0, 0.0]).is_err());
        assert!(ManifoldPoint::new(ball(2, 4.0), vec![0.5, 0.0]).is_err());
        assert!(ManifoldPoint::new(ManifoldSpec::euclidean(1).unwrap(), vec![f64::NAN]).is_err());
    }

    #[test]
    fn conformal_factor_examples() {
        let s = ball(2, 1.0);
        assert_eq!(conformal_factor(&ManifoldPoint::origin(s)).unwrap(), 2.0);
        let h = 0.5f64.sqrt();
        let x = pt(s, &[h, 0.0]);
        assert!(close(conformal_factor(&x).unwrap(), 4.0, 1e-12));
        let e = ManifoldSpec::euclidean(2).unwrap();
        assert_eq!(conformal_factor(&pt(e, &[7.0, -3.0])).unwrap(), 1.0);
        assert!(s.conformal_factor(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn mobius_identities_and_inverse() {
        let s = ball(3, 1.0);
        let x = pt(s, &[0.3, -0.2, 0.1]);
        let o = ManifoldPoint::origin(s);
        assert_eq!(mobius_add(&x, &o).unwrap(), x);
        assert_eq!(mobius_add(&o, &x).unwrap(), x);
        let z = mobius_add(&x.negated(), &x).unwrap();
        assert!(norm(z.coords()) < 1e-15);
    }

    #[test]
    fn mobius_spec_mismatch() {
        let x = ManifoldPoint::origin(ball(2, 1.0));
        let y = ManifoldPoint::origin(ball(2, 2.0));
        assert!(matches!(mobius_add(&x, &y), Err(Error::SpecMismatch { .. })));
        assert!(matches!(distance(&x, &y), Err(Error::SpecMismatch { .. })));
    }

    #[test]
    fn distance_examples() {
        let s = ball(2, 1.0);
        let d = distance(&ManifoldPoint::origin(s), &pt(s, &[0.5, 0.0])).unwrap();
        // ln((1 + 0.5) / (1 - 0.5))
        assert!(close(d, 3f64.ln(), 1e-14));
        let e = ManifoldSpec::euclidean(2).unwrap();
        assert_eq!(distance(&pt(e, &[0.0, 0.0]), &pt(e, &[3.0, 4.0])).unwrap(), 5.0);
        let x = pt(s, &[0.4, -0.3]);
        assert_eq!(distance(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_distance_matches_mobius_form() {
        let s = ball(3, 0.7);
        let x = [0.5, -0.2, 0.3];
        let y = [-0.4, 0.6, 0.1];
        let d1 = s.distance(&x, &y).unwrap();
        let (d2, _, _) = s.distance_with_grad(&x, &y).unwrap();
        assert!(close(d1, d2, 1e-12), "{d1} vs {d2}");
    }

    #[test]
    fn exp_map_examples() {
        let s = ball(2, 1.0);
        let o = ManifoldPoint::origin(s);
        let v = TangentVector::new(o.clone(), vec![0.25, 0.0]).unwrap();
        let y = exp_map(&o, &v).unwrap();
        let e = 0.5f64.exp();
        let oracle = (e - 1.0) / (e + 1.0);
        assert!(close(y.coords()[0], oracle, 1e-15));
        assert!(close(y.coords()[0], 0.2449187, 1e-7));
        assert_eq!(y.coords()[1], 0.0);

        let x = pt(s, &[0.3, 0.4]);
        assert_eq!(exp_map(&x, &TangentVector::zero(x.clone())).unwrap(), x);

        let eu = ManifoldSpec::euclidean(2).unwrap();
        let x = pt(eu, &[1.0, 1.0]);
        let v = TangentVector::new(x.clone(), vec![2.0, -1.0]).unwrap();
        assert_eq!(exp_map(&x, &v).unwrap().coords(), &[3.0, 0.0]);
    }

    #[test]
    fn exp_map_rejects_non_finite() {
        let s = ball(2, 1.0);
        assert!(s.exp_map(&[0.0, 0.0], &[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn log_map_examples() {
        let s = ball(2, 1.0);
        let x = pt(s, &[0.1, 0.2]);
        let z = log_map(&x, &x).unwrap();
        assert_eq!(z.coords(), &[0.0, 0.0]);

        let o = ManifoldPoint::origin(s);
        let y = pt(s, &[0.2449187, 0.0]);
        let v = log_map(&o, &y).unwrap();
        assert!(close(v.coords()[0], 0.25, 1e-7));
        assert_eq!(v.coords()[1], 0.0);

        let eu = ManifoldSpec::euclidean(2).unwrap();
        let v = log_map(&pt(eu, &[3.0, 0.0]), &pt(eu, &[1.0, 1.0])).unwrap();
        assert_eq!(v.coords(), &[-2.0, 1.0]);
    }

    #[test]
    fn projection_examples() {
        let s = ball(2, 1.0);
        assert_eq!(project_to_ball(&[0.5, 0.0], s, 1e-5).unwrap().coords(), &[0.5, 0.0]);
        let p = project_to_ball(&[2.0, 0.0], s, 1e-5).unwrap();
        assert!(close(p.coords()[0], 0.99999, 1e-15));
        assert_eq!(p.coords()[1], 0.0);
        assert_eq!(project_to_ball(&[0.0, 0.0], s, 1e-5).unwrap().coords(), &[0.0, 0.0]);
        assert!(project_to_ball(&[f64::INFINITY, 0.0], s, 1e-5).is_err());
        let eu = ManifoldSpec::euclidean(2).unwrap();
        assert_eq!(project_to_ball(&[5.0, 9.0], eu, 1e-5).unwrap().coords(), &[5.0, 9.0]);
    }

    #[test]
    fn distance_gradient_zero_at_coincident_points() {
        let s = ball(2, 1.0);
        let (d, gx, gy) = s.distance_with_grad(&[0.1, 0.1], &[0.1, 0.1]).unwrap();
        assert_eq!(d, 0.0);
        assert!(gx.iter().chain(&gy).all(|g| *g == 0.0));
    }
}
