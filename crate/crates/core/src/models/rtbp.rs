//! Planar circular restricted three-body problem near a parabolic escape,
//! in McGehee coordinates `(x, y, rho, s)`.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hamcore::{Chart, Coordinate, IntegrandFn, ScalarFieldHandle, SystemDef, VectorFieldHandle};
use crate::odeint::Tolerance;
use crate::orbits::{mcgehee_energy, mcgehee_field, parabolic_orbit_rtbp, OrbitFamily, TailFn};

use super::{Model, ModelConfig, ModelId};

/// `S = 1 - [1 + 2 x^2 cos(psi) + x^4]^(-3/2)`, evaluated without
/// cancellation for small `x`.
pub fn s_factor(x: f64, psi: f64) -> f64 {
    let x2 = x * x;
    -(-1.5 * (2.0 * x2 * psi.cos() + x2 * x2).ln_1p()).exp_m1()
}

/// Melnikov integrand `x^4 sin(psi) S(x, psi)`.
pub fn integrand(x: f64, psi: f64) -> f64 {
    x.powi(4) * psi.sin() * s_factor(x, psi)
}

/// `d/dpsi` of [`integrand`].
pub fn integrand_dpsi(x: f64, psi: f64) -> f64 {
    let x2 = x * x;
    let b = 1.0 + 2.0 * x2 * psi.cos() + x2 * x2;
    let (sn, cs) = psi.sin_cos();
    x2 * x2 * (cs * s_factor(x, psi) - 3.0 * x2 * sn * sn * b.powf(-2.5))
}

/// A `psi`-antiderivative of `sin(psi) S(x, psi)` that vanishes as `x -> 0`.
pub fn antiderivative(x: f64, psi: f64) -> f64 {
    let x2 = x * x;
    let c = psi.cos();
    let rb = (1.0 + 2.0 * x2 * c + x2 * x2).sqrt();
    (2.0 * c + x2) / (rb * (rb + 1.0)) - c
}

const TAIL_NODES: usize = 64;

/// Zero-mean `psi`-antiderivative of the full integrand.
fn k0(x: f64, psi: f64) -> f64 {
    let mean = (0..TAIL_NODES).map(|j| antiderivative(x, 2.0 * PI * j as f64 / TAIL_NODES as f64)).sum::<f64>() / TAIL_NODES as f64;
    x.powi(4) * (antiderivative(x, psi) - mean)
}

fn max_over_psi(f: impl Fn(f64) -> f64) -> f64 {
    (0..TAIL_NODES).map(|j| f(2.0 * PI * j as f64 / TAIL_NODES as f64).abs()).fold(0.0, f64::max)
}

/// Tail `int_T^inf` (dir = +1) or `int_-inf^-T` (dir = -1) of the integrand
/// beyond a cut where the state is `u`, by one integration by parts against
/// the phase; the bound is the size of the next term.
pub fn tail(u: &[f64], dir: f64) -> (f64, f64) {
    let (x, y, rho, psi) = (u[0], u[1], u[2], u[3]);
    let x4 = x.powi(4);
    let dpsi = 1.0 - x4 * rho;
    let dx = -0.5 * x * x * x * y;
    let ddpsi = -4.0 * x * x * x * dx * rho;
    let correction = -dir * k0(x, psi) / dpsi;
    let h = 1e-4 * x;
    let kx = max_over_psi(|p| (k0(x + h, p) - k0(x - h, p)) / (2.0 * h));
    let kmax = max_over_psi(|p| k0(x, p));
    let bound = PI * (kx * dx.abs() + kmax * ddpsi.abs() / dpsi) / (dpsi * dpsi);
    (correction, bound)
}

/// State `(x, y, rho, s)`. `F = rho`; the perturbation enters only through
/// the explicit integrand, carried by `Y = (0, 0, g2, 0)` with
/// `g2 = x^4 sin(s) S`.
pub fn make_rtbp(rho0: f64, t_cap: f64) -> Result<Model> {
    if !(rho0 > 0.0) || !rho0.is_finite() {
        return Err(Error::InvalidInput(format!("rtbp-mcgehee needs rho0 > 0, got {rho0}")));
    }
    if !(t_cap >= 100.0) || !t_cap.is_finite() {
        return Err(Error::InvalidInput(format!("rtbp-mcgehee needs t_cap >= 100, got {t_cap}")));
    }
    let chart = Arc::new(Chart::new(
        "rtbp-mcgehee",
        vec![Coordinate::real("x"), Coordinate::real("y"), Coordinate::real("rho"), Coordinate::angle("s")],
    ));
    let f = ScalarFieldHandle::with_gradient(
        4,
        |u| u[2],
        |_u, g| {
            g[0] = 0.0;
            g[1] = 0.0;
            g[2] = 1.0;
            g[3] = 0.0;
        },
    );
    let y = VectorFieldHandle::autonomous(4, |u, o| {
        o[0] = 0.0;
        o[1] = 0.0;
        o[2] = integrand(u[0], u[3]);
        o[3] = 0.0;
    });
    let sys = SystemDef {
        dimension: 4,
        chart,
        x0: mcgehee_field(),
        y,
        h0: mcgehee_energy(),
        h1: None,
        f,
        symplectic: false,
        forcing_period: None,
        integrand_override: Some(Arc::new(|u: &[f64], _t| integrand(u[0], u[3])) as IntegrandFn),
    };
    sys.validate()?;
    let mut orbit = parabolic_orbit_rtbp(rho0, t_cap, Tolerance::uniform(1e-13))?;
    orbit.oscillatory_tail = Some(Arc::new(tail) as TailFn);
    let mut family = OrbitFamily::new("rho0", rho0, orbit);
    family.phase_derivative = Some(Arc::new(|u: &[f64], _t| integrand_dpsi(u[0], u[3])) as IntegrandFn);
    let config = ModelConfig::new(ModelId::RtbpMcGehee).with("rho0", rho0).with("t_cap", t_cap);
    Ok(Model { config, sys, family, h0: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamcore::melnikov_integrand;

    #[test]
    fn s_vanishes_at_origin() {
        for psi in [0.0, 1.0, 3.0] {
            assert_eq!(s_factor(0.0, psi), 0.0);
            assert_eq!(integrand(0.0, psi), 0.0);
        }
    }

    #[test]
    fn integrand_point_value() {
        assert!((integrand(1.0, PI / 2.0) - (1.0 - 2f64.powf(-1.5))).abs() < 1e-15);
    }

    #[test]
    fn derivative_and_antiderivative_consistent() {
        let h = 1e-6;
        for &x in &[0.05, 0.3, 0.7] {
            for k in 0..12 {
                let p = 0.5 * k as f64;
                let fd = (integrand(x, p + h) - integrand(x, p - h)) / (2.0 * h);
                assert!((fd - integrand_dpsi(x, p)).abs() < 1e-8, "x={x} p={p}");
                let ad = (antiderivative(x, p + h) - antiderivative(x, p - h)) / (2.0 * h);
                assert!((ad - p.sin() * s_factor(x, p)).abs() < 1e-8, "x={x} p={p}");
            }
        }
    }

    #[test]
    fn pointwise_bound_on_orbit() {
        let m = make_rtbp(2.0, 200.0).unwrap();
        let o = m.family.orbit(0.7);
        for k in -100..=100 {
            let u = o.state(k as f64);
            let x = u[0];
            // |S| peaks at cos(psi) = -1 when the bracket drops below one
            let x2 = x * x;
            let smax = f64::max(1.0 - (1.0 + x2).powi(-3), (1.0 - x2).powi(-3) - 1.0);
            assert!(melnikov_integrand(&m.sys, &u, 0.0).unwrap().abs() <= x.powi(4) * smax * (1.0 + 1e-12));
        }
    }

    #[test]
    fn orbit_start_and_energy() {
        let m = make_rtbp(3.0, 2000.0).unwrap();
        let o = m.family.orbit(0.0);
        let s = o.state(0.0);
        assert!((s[0] - 2f64.sqrt() / 3.0).abs() < 1e-15 && s[1] == 0.0);
        assert!(o.drift(&m.sys.h0, 4001) < 1e-9);
        // reversibility: x even, s odd at phase 0
        for t in [1.0, 30.0, 700.0] {
            let a = o.state(t);
            let b = o.state(-t);
            assert!((a[0] - b[0]).abs() < 1e-14 && (a[3] + b[3]).abs() < 1e-11);
        }
    }

    #[test]
    fn tail_matches_direct_quadrature() {
        let m = make_rtbp(3.0, 4000.0).unwrap();
        let o = m.family.orbit(0.4);
        let t_cut = 1000.0;
        let q = crate::odeint::quadrature(
            &|t| {
                let u = o.state(t);
                integrand(u[0], u[3])
            },
            t_cut,
            4000.0,
            Tolerance::uniform(1e-15),
        )
        .unwrap()
        .0;
        let (c1, b1) = tail(&o.state(t_cut), 1.0);
        let (c2, b2) = tail(&o.state(4000.0), 1.0);
        // int_cut^4000 = tail(cut) - tail(4000)
        let err = (q - (c1 - c2)).abs();
        assert!(err <= b1 + b2, "err {err:e} bounds {b1:e} {b2:e}");
        assert!(b1 < 1e-8, "{b1:e}");
    }
}
