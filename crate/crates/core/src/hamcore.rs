//! Phase points, vector and scalar fields, perturbed Hamiltonian systems.
//!
//! Coordinates are plain `f64` slices internally; [`PhasePoint`] is the
//! user-facing wrapper that remembers which chart the numbers belong to and
//! keeps periodic coordinates reduced.
//!
//! Canonical pairs are interleaved: a state `(q1, p1, q2, p2, ...)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::odeint::Trajectory;
use crate::util::dot;

/// One coordinate of a chart. `period` is set for angle-like coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Coordinate {
    pub name: String,
    pub period: Option<f64>,
}

impl Coordinate {
    pub fn real(name: &str) -> Self {
        Self { name: name.to_string(), period: None }
    }

    pub fn angle(name: &str) -> Self {
        Self { name: name.to_string(), period: Some(2.0 * PI) }
    }
}

/// A coordinate chart: an identifier plus an ordered list of coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub id: Arc<str>,
    pub coords: Vec<Coordinate>,
}

impl Chart {
    pub fn new(id: &str, coords: Vec<Coordinate>) -> Self {
        Self { id: Arc::from(id), coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Builds a point in this chart, reducing periodic coordinates to `[0, period)`.
    pub fn point(&self, coords: &[f64]) -> Result<PhasePoint> {
        if coords.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: coords.len() });
        }
        let coords = coords
            .iter()
            .zip(&self.coords)
            .map(|(&x, c)| match c.period {
                Some(p) => reduce_periodic(x, p),
                None => x,
            })
            .collect();
        Ok(PhasePoint { coords, chart_id: self.id.clone() })
    }
}

/// Reduces `x` into `[0, period)`.
pub fn reduce_periodic(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    // rem_euclid can round up to `period` for tiny negative inputs
    if r >= period {
        0.0
    } else {
        r
    }
}

/// A point in phase space tagged with its chart.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    coords: Vec<f64>,
    chart_id: Arc<str>,
}

impl PhasePoint {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn chart_id(&self) -> &str {
        &self.chart_id
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

type FieldFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// A (possibly time dependent) vector field `(t, y) -> dy/dt`.
#[derive(Clone)]
pub struct VectorFieldHandle {
    dim: usize,
    autonomous: bool,
    f: Arc<FieldFn>,
}

impl fmt::Debug for VectorFieldHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorFieldHandle")
            .field("dim", &self.dim)
            .field("autonomous", &self.autonomous)
            .finish()
    }
}

impl VectorFieldHandle {
    pub fn new<F>(dim: usize, autonomous: bool, f: F) -> Self
    where
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self { dim, autonomous, f: Arc::new(f) }
    }

    /// Convenience constructor for autonomous fields.
    pub fn autonomous<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self::new(dim, true, move |_t, y, out| f(y, out))
    }

    pub fn zero(dim: usize) -> Self {
        Self::autonomous(dim, |_, out| out.iter_mut().for_each(|v| *v = 0.0))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    #[inline]
    pub fn eval_into(&self, t: f64, y: &[f64], out: &mut [f64]) {
        (self.f)(t, y, out)
    }

    pub fn eval(&self, y: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, y, &mut out);
        out
    }

    /// `self + eps * other`, evaluated pointwise.
    pub fn perturbed(&self, other: &VectorFieldHandle, eps: f64) -> Result<VectorFieldHandle> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let a = self.clone();
        let b = other.clone();
        let dim = self.dim;
        Ok(VectorFieldHandle::new(dim, a.autonomous && b.autonomous, move |t, y, out| {
            a.eval_into(t, y, out);
            let mut tmp = [0.0; 8];
            if dim <= 8 {
                b.eval_into(t, y, &mut tmp[..dim]);
                for i in 0..dim {
                    out[i] += eps * tmp[i];
                }
            } else {
                let v = b.eval(y, t);
                for i in 0..dim {
                    out[i] += eps * v[i];
                }
            }
        }))
    }

    /// Multiplies the field by a constant.
    pub fn scaled(&self, c: f64) -> VectorFieldHandle {
        let a = self.clone();
        VectorFieldHandle::new(self.dim, self.autonomous, move |t, y, out| {
            a.eval_into(t, y, out);
            out.iter_mut().for_each(|v| *v *= c);
        })
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A scalar function on phase space with a gradient.
///
/// When no closed-form gradient is supplied, central differences with step
/// `1e-6 * (1 + |x_i|)` are used.
#[derive(Clone)]
pub struct ScalarFieldHandle {
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Option<Arc<GradFn>>,
}

impl fmt::Debug for ScalarFieldHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFieldHandle")
            .field("dim", &self.dim)
            .field("closed_form_gradient", &self.gradient.is_some())
            .finish()
    }
}

impl ScalarFieldHandle {
    pub fn with_gradient<V, G>(dim: usize, value: V, gradient: G) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self { dim, value: Arc::new(value), gradient: Some(Arc::new(gradient)) }
    }

    pub fn finite_difference<V>(dim: usize, value: V) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { dim, value: Arc::new(value), gradient: None }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_closed_form_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    #[inline]
    pub fn value(&self, y: &[f64]) -> f64 {
        (self.value)(y)
    }

    pub fn gradient_into(&self, y: &[f64], out: &mut [f64]) {
        match &self.gradient {
            Some(g) => g(y, out),
            None => self.fd_gradient_into(y, out),
        }
    }

    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.gradient_into(y, &mut out);
        out
    }

    /// Central-difference gradient, independent of any closed form.
    pub fn fd_gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.fd_gradient_into(y, &mut out);
        out
    }

    fn fd_gradient_into(&self, y: &[f64], out: &mut [f64]) {
        let mut p = y.to_vec();
        for i in 0..self.dim {
            let h = 1e-6 * (1.0 + y[i].abs());
            p[i] = y[i] + h;
            let fp = self.value(&p);
            p[i] = y[i] - h;
            let fm = self.value(&p);
            p[i] = y[i];
            out[i] = (fp - fm) / (2.0 * h);
        }
    }

    /// Drops the closed-form gradient, forcing finite differences.
    pub fn without_gradient(&self) -> Self {
        Self { dim: self.dim, value: self.value.clone(), gradient: None }
    }
}

/// Directly supplied Melnikov integrand `(state, t) -> value`, used when the
/// perturbation field is only known through its contraction with `DF`.
pub type IntegrandFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// A perturbed system `X0 + eps * Y` with Hamiltonians and a second integral.
#[derive(Clone)]
pub struct SystemDef {
    pub dimension: usize,
    pub chart: Arc<Chart>,
    pub x0: VectorFieldHandle,
    pub y: VectorFieldHandle,
    pub h0: ScalarFieldHandle,
    pub h1: Option<ScalarFieldHandle>,
    /// Second integral of `X0`. In periodic-forcing mode this is `H` itself.
    pub f: ScalarFieldHandle,
    pub symplectic: bool,
    pub forcing_period: Option<f64>,
    pub integrand_override: Option<IntegrandFn>,
}

impl fmt::Debug for SystemDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemDef")
            .field("dimension", &self.dimension)
            .field("chart", &self.chart.id)
            .field("symplectic", &self.symplectic)
            .field("forcing_period", &self.forcing_period)
            .finish()
    }
}

impl SystemDef {
    /// Checks dimensions of all handles against `dimension` and the chart.
    pub fn validate(&self) -> Result<()> {
        let d = self.dimension;
        if d != 2 && d != 4 {
            return Err(Error::InvalidInput(format!("system dimension must be 2 or 4, got {d}")));
        }
        let dims = [
            self.chart.dim(),
            self.x0.dim(),
            self.y.dim(),
            self.h0.dim(),
            self.f.dim(),
            self.h1.as_ref().map_or(d, |h| h.dim()),
        ];
        if let Some(&bad) = dims.iter().find(|&&x| x != d) {
            return Err(Error::DimensionMismatch { expected: d, got: bad });
        }
        if let Some(p) = self.forcing_period {
            if !(p > 0.0) {
                return Err(Error::InvalidInput("forcing period must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn is_periodic_mode(&self) -> bool {
        self.forcing_period.is_some()
    }

    /// The perturbed field `X0 + eps * Y`.
    pub fn perturbed_field(&self, eps: f64) -> VectorFieldHandle {
        self.x0.perturbed(&self.y, eps).expect("validated dimensions")
    }

    /// `H0 + eps * H1` (no higher-order terms).
    pub fn perturbed_energy(&self, y: &[f64], eps: f64) -> f64 {
        self.h0.value(y) + eps * self.h1.as_ref().map_or(0.0, |h| h.value(y))
    }

    /// Returns a copy with `Y` (and `H1`) multiplied by `c`.
    pub fn with_scaled_perturbation(&self, c: f64) -> SystemDef {
        let mut s = self.clone();
        s.y = self.y.scaled(c);
        s.h1 = self.h1.as_ref().map(|h| {
            let h = h.clone();
            let g = h.clone();
            ScalarFieldHandle::with_gradient(
                h.dim(),
                move |y| c * h.value(y),
                move |y, out| {
                    g.gradient_into(y, out);
                    out.iter_mut().for_each(|v| *v *= c);
                },
            )
        });
        s.integrand_override = self.integrand_override.as_ref().map(|f| {
            let f = f.clone();
            Arc::new(move |y: &[f64], t: f64| c * f(y, t)) as IntegrandFn
        });
        s
    }
}

/// A plane through a point of the homoclinic manifold, transverse to it.
#[derive(Debug, Clone)]
pub struct Transversal {
    pub base_point: Vec<f64>,
    pub spanning_directions: Vec<Vec<f64>>,
    pub codimension: usize,
}

impl Transversal {
    /// Builds a transversal, checking that the spanning directions together
    /// with the manifold's tangent vectors have full rank.
    pub fn new(base_point: Vec<f64>, spanning_directions: Vec<Vec<f64>>, tangent: &[Vec<f64>]) -> Result<Self> {
        let d = base_point.len();
        if spanning_directions.iter().chain(tangent).any(|v| v.len() != d) {
            return Err(Error::InvalidInput("transversal vectors must match the base point dimension".into()));
        }
        let k = spanning_directions.len();
        if rank(&spanning_directions) < k {
            return Err(Error::InvalidInput("spanning directions are linearly dependent".into()));
        }
        let all: Vec<Vec<f64>> = spanning_directions.iter().chain(tangent).cloned().collect();
        if rank(&all) < k + tangent.len() {
            return Err(Error::InvalidInput("spanning directions are not transverse to the tangent space".into()));
        }
        Ok(Self { base_point, spanning_directions, codimension: d - k })
    }

    /// Orthonormal basis of the orthogonal complement of the spanning plane.
    pub fn complement_basis(&self) -> Vec<Vec<f64>> {
        let d = self.base_point.len();
        let span = gram_schmidt(&self.spanning_directions);
        let mut out: Vec<Vec<f64>> = Vec::new();
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            for b in span.iter().chain(out.iter()) {
                let c = dot(&e, b);
                e.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            let n = dot(&e, &e).sqrt();
            if n > 1e-8 {
                e.iter_mut().for_each(|x| *x /= n);
                out.push(e);
            }
            if out.len() == self.codimension {
                break;
            }
        }
        out
    }

    /// Projection of `p - base` onto the complement; zero iff `p` lies in the plane.
    pub fn offset_from_plane(&self, p: &[f64]) -> Vec<f64> {
        let diff: Vec<f64> = p.iter().zip(&self.base_point).map(|(a, b)| a - b).collect();
        self.complement_basis().iter().map(|c| dot(c, &diff)).collect()
    }
}

pub(crate) fn gram_schmidt(vs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for b in &out {
            let c = dot(&w, b);
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let n = dot(&w, &w).sqrt();
        if n > 1e-12 {
            w.iter_mut().for_each(|x| *x /= n);
            out.push(w);
        }
    }
    out
}

fn rank(vs: &[Vec<f64>]) -> usize {
    if vs.is_empty() {
        return 0;
    }
    let d = vs[0].len();
    let m = DMatrix::from_fn(d, vs.len(), |i, j| vs[j][i]);
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-10 * smax.max(1e-300)).count()
}

/// Hamiltonian vector field of `h` for interleaved canonical pairs
/// `(q1, p1, q2, p2, ...)`: `q' = dH/dp`, `p' = -dH/dq`.
pub fn canonical_field(h: &ScalarFieldHandle, dim: usize) -> Result<VectorFieldHandle> {
    if dim % 2 != 0 || dim == 0 {
        return Err(Error::InvalidInput(format!("canonical field needs an even dimension, got {dim}")));
    }
    if h.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: h.dim() });
    }
    let h = h.clone();
    Ok(VectorFieldHandle::autonomous(dim, move |y, out| {
        h.gradient_into(y, out);
        for i in (0..dim).step_by(2) {
            let dq = out[i];
            out[i] = out[i + 1];
            out[i + 1] = -dq;
        }
    }))
}

/// `DF . Y` at `(p, t)`; in periodic-forcing mode `F` is the Hamiltonian, so
/// this is `DH . Y`. A supplied integrand override takes precedence.
pub fn melnikov_integrand(sys: &SystemDef, p: &[f64], t: f64) -> Result<f64> {
    let v = if let Some(f) = &sys.integrand_override {
        f(p, t)
    } else {
        let d = sys.dimension;
        let mut grad = [0.0; 4];
        let mut yv = [0.0; 4];
        sys.f.gradient_into(p, &mut grad[..d]);
        sys.y.eval_into(t, p, &mut yv[..d]);
        dot(&grad[..d], &yv[..d])
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { context: format!("Melnikov integrand at {p:?}"), t })
    }
}

/// Scalar cross product `k . (X x Y)` of the planar fields at `(p, t)`.
pub fn cross_integrand(sys: &SystemDef, p: &[f64], t: f64) -> Result<f64> {
    if sys.dimension != 2 {
        return Err(Error::InvalidInput("cross form needs a planar system".into()));
    }
    let mut x = [0.0; 2];
    let mut y = [0.0; 2];
    sys.x0.eval_into(t, p, &mut x);
    sys.y.eval_into(t, p, &mut y);
    let v = x[0] * y[1] - x[1] * y[0];
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { context: format!("cross integrand at {p:?}"), t })
    }
}

/// Largest deviation of `field` from its initial value over the stored samples.
pub fn integral_drift(traj: &Trajectory, field: &ScalarFieldHandle) -> Result<f64> {
    if traj.len() == 0 {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    let f0 = field.value(traj.state(0));
    Ok((0..traj.len()).map(|i| (field.value(traj.state(i)) - f0).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odeint::{integrate, Tolerance};

    fn oscillator_h() -> ScalarFieldHandle {
        ScalarFieldHandle::with_gradient(
            2,
            |y| 0.5 * (y[0] * y[0] + y[1] * y[1]),
            |y, g| {
                g[0] = y[0];
                g[1] = y[1];
            },
        )
    }

    fn duffing_f() -> ScalarFieldHandle {
        ScalarFieldHandle::finite_difference(2, |z| 0.5 * z[1] * z[1] - 0.5 * z[0] * z[0] + z[0].powi(3) / 3.0)
    }

    #[test]
    fn canonical_field_examples() {
        let x = canonical_field(&oscillator_h(), 2).unwrap();
        assert_eq!(x.eval(&[1.0, 0.0], 0.0), vec![0.0, -1.0]);

        let x = canonical_field(&duffing_f(), 2).unwrap();
        let v = x.eval(&[1.5, 0.0], 0.0);
        assert!(v[0].abs() < 1e-9);
        assert!((v[1] + 0.75).abs() < 1e-8);

        let c = ScalarFieldHandle::finite_difference(4, |_| 3.0);
        let x = canonical_field(&c, 4).unwrap();
        assert!(x.eval(&[0.3, -1.0, 2.0, 5.0], 1.0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn canonical_field_rejects_odd_dimension() {
        let h = ScalarFieldHandle::finite_difference(3, |y| y[0]);
        assert!(matches!(canonical_field(&h, 3), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn periodic_coordinates_are_reduced() {
        let chart = Chart::new("polar", vec![Coordinate::real("r"), Coordinate::angle("th")]);
        let p = chart.point(&[1.0, -0.5]).unwrap();
        assert!((p.coords()[1] - (2.0 * PI - 0.5)).abs() < 1e-15);
        let p = chart.point(&[1.0, 7.0 * PI]).unwrap();
        assert!((p.coords()[1] - PI).abs() < 1e-12);
        assert!(chart.point(&[1.0]).is_err());
        assert_eq!(reduce_periodic(-1e-20, 2.0 * PI), 0.0);
    }

    #[test]
    fn autonomous_field_ignores_time() {
        let x = canonical_field(&oscillator_h(), 2).unwrap();
        assert!(x.is_autonomous());
        assert_eq!(x.eval(&[0.3, 0.7], 0.0), x.eval(&[0.3, 0.7], 123.4));
    }

    #[test]
    fn transversal_rank_checks() {
        let base = vec![0.0; 4];
        let tangent = vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]];
        let n = Transversal::new(base.clone(), vec![vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]], &tangent).unwrap();
        assert_eq!(n.codimension, 2);
        let c = n.complement_basis();
        assert_eq!(c.len(), 2);
        assert!(n.offset_from_plane(&[0.0, 0.0, 3.0, -1.0]).iter().all(|v| v.abs() < 1e-15));
        assert!(Transversal::new(base.clone(), vec![vec![1.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]], &tangent).is_err());
        assert!(Transversal::new(base, vec![vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 2.0, 0.0]], &tangent).is_err());
    }

    #[test]
    fn drift_of_oscillator_energy() {
        let h = oscillator_h();
        let x = canonical_field(&h, 2).unwrap();
        let traj = integrate(&x, &[1.0, 0.0], 0.0, 10.0, Tolerance::new(1e-12, 1e-12)).unwrap();
        assert!(integral_drift(&traj, &h).unwrap() < 1e-10);
        let coarse = integrate(&x, &[1.0, 0.0], 0.0, 10.0, Tolerance::new(1e-3, 1e-3)).unwrap();
        assert!(integral_drift(&coarse, &h).unwrap() > 0.0);
    }
}
