//! Duffing loop coupled to a harmonic oscillator, and the forced planar
//! Duffing system.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hamcore::{canonical_field, Chart, Coordinate, ScalarFieldHandle, SystemDef, VectorFieldHandle};
use crate::odeint::{EventSpec, Tolerance};
use crate::orbits::{closed_form_homoclinic, find_saddle, shoot_homoclinic, HomoclinicOrbit, OrbitFamily, ShootSpec};

use super::{Model, ModelConfig, ModelId};

/// `z2^2/2 - z1^2/2 + z1^3/3`.
pub fn duffing_f(z1: f64, z2: f64) -> f64 {
    0.5 * z2 * z2 - 0.5 * z1 * z1 + z1 * z1 * z1 / 3.0
}

/// State `(z1, z2, w1, w2)`; `H0 = F(z) + (alpha/2)|w|^2`, `H1 = z1 w1`.
pub fn make_duffing_oscillator(alpha: f64, g0: f64) -> Result<Model> {
    if !(alpha > 0.0) || !(g0 > 0.0) {
        return Err(Error::InvalidInput(format!("duffing-oscillator needs alpha > 0 and g0 > 0, got {alpha}, {g0}")));
    }
    let chart = Arc::new(Chart::new(
        "duffing-oscillator",
        vec![Coordinate::real("z1"), Coordinate::real("z2"), Coordinate::real("w1"), Coordinate::real("w2")],
    ));
    let h0 = ScalarFieldHandle::with_gradient(
        4,
        move |y| duffing_f(y[0], y[1]) + 0.5 * alpha * (y[2] * y[2] + y[3] * y[3]),
        move |y, g| {
            g[0] = -y[0] + y[0] * y[0];
            g[1] = y[1];
            g[2] = alpha * y[2];
            g[3] = alpha * y[3];
        },
    );
    let h1 = ScalarFieldHandle::with_gradient(
        4,
        |y| y[0] * y[2],
        |y, g| {
            g[0] = y[2];
            g[1] = 0.0;
            g[2] = y[0];
            g[3] = 0.0;
        },
    );
    let f = ScalarFieldHandle::with_gradient(
        4,
        |y| duffing_f(y[0], y[1]),
        |y, g| {
            g[0] = -y[0] + y[0] * y[0];
            g[1] = y[1];
            g[2] = 0.0;
            g[3] = 0.0;
        },
    );
    let x0 = VectorFieldHandle::autonomous(4, move |y, o| {
        o[0] = y[1];
        o[1] = y[0] - y[0] * y[0];
        o[2] = alpha * y[3];
        o[3] = -alpha * y[2];
    });
    let y = VectorFieldHandle::autonomous(4, |y, o| {
        o[0] = 0.0;
        o[1] = -y[2];
        o[2] = 0.0;
        o[3] = -y[0];
    });
    let sys = SystemDef {
        dimension: 4,
        chart,
        x0,
        y,
        h0,
        h1: Some(h1),
        f,
        symplectic: true,
        forcing_period: None,
        integrand_override: None,
    };
    sys.validate()?;
    let params: BTreeMap<String, f64> = [("alpha".to_string(), alpha), ("g0".to_string(), g0)].into_iter().collect();
    let base = closed_form_homoclinic("duffing-oscillator", &params)?;
    let config = ModelConfig::new(ModelId::DuffingOscillator).with("alpha", alpha).with("g0", g0);
    Ok(Model { config, sys, family: OrbitFamily::new("h0", g0, base), h0: g0 })
}

/// Planar Duffing system `H = F(z)` with forcing `Y = (0, cos t)` of period
/// `2 pi`, and its closed-form loop.
pub fn make_duffing_planar() -> Result<(SystemDef, HomoclinicOrbit)> {
    let h = ScalarFieldHandle::with_gradient(
        2,
        |z| duffing_f(z[0], z[1]),
        |z, g| {
            g[0] = -z[0] + z[0] * z[0];
            g[1] = z[1];
        },
    );
    let x0 = canonical_field(&h, 2)?;
    let y = VectorFieldHandle::new(2, false, |t, _z, o| {
        o[0] = 0.0;
        o[1] = t.cos();
    });
    let sys = SystemDef {
        dimension: 2,
        chart: Arc::new(Chart::new("duffing-planar", vec![Coordinate::real("z1"), Coordinate::real("z2")])),
        x0,
        y,
        h0: h.clone(),
        h1: None,
        f: h,
        symplectic: true,
        forcing_period: Some(2.0 * PI),
        integrand_override: None,
    };
    sys.validate()?;
    let orbit = closed_form_homoclinic("duffing-planar", &BTreeMap::new())?;
    Ok((sys, orbit))
}

/// Real root of `z^3 + z = u`.
pub fn cubic_inverse(u: f64) -> f64 {
    let d = (0.25 * u * u + 1.0 / 27.0).sqrt();
    let mut z = (0.5 * u + d).cbrt() + (0.5 * u - d).cbrt();
    for _ in 0..3 {
        z -= (z * z * z + z - u) / (3.0 * z * z + 1.0);
    }
    z
}

/// Pushes a planar system through the non-symplectic chart
/// `(z1, z2) -> (z1, z2 + z2^3)`. `H` in the new chart has only a
/// finite-difference gradient, and the loop is re-shot in the new chart.
pub fn push_forward_planar(sys: &SystemDef) -> Result<(SystemDef, HomoclinicOrbit)> {
    if sys.dimension != 2 {
        return Err(Error::InvalidInput("chart push-forward needs a planar system".into()));
    }
    let push = |x: &VectorFieldHandle| {
        let x = x.clone();
        VectorFieldHandle::new(2, x.is_autonomous(), move |t, u, o| {
            let z = [u[0], cubic_inverse(u[1])];
            let mut v = [0.0; 2];
            x.eval_into(t, &z, &mut v);
            o[0] = v[0];
            o[1] = (1.0 + 3.0 * z[1] * z[1]) * v[1];
        })
    };
    let h = sys.f.clone();
    let hu = ScalarFieldHandle::finite_difference(2, move |u| h.value(&[u[0], cubic_inverse(u[1])]));
    let x0 = push(&sys.x0);
    let pushed = SystemDef {
        dimension: 2,
        chart: Arc::new(Chart::new("duffing-planar-pushed", vec![Coordinate::real("u1"), Coordinate::real("u2")])),
        y: push(&sys.y),
        x0: x0.clone(),
        h0: hu.clone(),
        h1: None,
        f: hu,
        symplectic: false,
        forcing_period: sys.forcing_period,
        integrand_override: None,
    };
    pushed.validate()?;
    let saddle = find_saddle(&x0, &[0.05, 0.0])?;
    let spec = ShootSpec {
        planar: x0,
        saddle,
        delta: 1e-7,
        section: EventSpec::new(-1, true, |u| u[1]),
        phase_rate: None,
        embed: Arc::new(|p, _ph, out| out.copy_from_slice(&p[..2])),
        full_dim: 2,
        phase_index: None,
        limit_tangent: vec![0.0, 0.0],
        t_cap: 100.0,
        tol: Tolerance::uniform(1e-13),
    };
    let orbit = shoot_homoclinic(&pushed, &spec)?;
    Ok((pushed, orbit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odeint::integrate;
    use crate::orbits::duffing_loop;

    #[test]
    fn amplitude_and_energy() {
        let m = make_duffing_oscillator(1.0, 0.5).unwrap();
        let o = m.family.orbit(0.0);
        let s = o.state(0.0);
        assert!((s[2] - 1.0).abs() < 1e-15);
        assert!((m.sys.h0.value(&s) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perturbation_field_example() {
        let m = make_duffing_oscillator(1.0, 0.5).unwrap();
        assert_eq!(m.sys.y.eval(&[1.0, 2.0, 3.0, 0.0], 0.0), vec![0.0, -3.0, 0.0, -1.0]);
        let yc = canonical_field(m.sys.h1.as_ref().unwrap(), 4).unwrap();
        assert_eq!(yc.eval(&[1.0, 2.0, 3.0, 0.0], 0.0), vec![0.0, -3.0, 0.0, -1.0]);
    }

    #[test]
    fn f_conserved() {
        let m = make_duffing_oscillator(1.3, 0.7).unwrap();
        let tr = integrate(&m.sys.x0, &[0.4, 0.1, 0.3, -0.8], 0.0, 30.0, Tolerance::uniform(1e-12)).unwrap();
        assert!(crate::hamcore::integral_drift(&tr, &m.sys.f).unwrap() < 1e-9);
    }

    #[test]
    fn bad_parameters() {
        assert!(make_duffing_oscillator(0.0, 0.5).is_err());
        assert!(make_duffing_oscillator(1.0, -1.0).is_err());
    }

    #[test]
    fn cubic_inverse_round_trip() {
        for z in [-2.0, -0.3, 0.0, 1e-9, 0.7, 5.0] {
            let u = z + z * z * z;
            assert!((cubic_inverse(u) - z).abs() < 1e-14 * (1.0 + z.abs()));
        }
    }

    #[test]
    fn shot_loop_matches_closed_form() {
        let (sys, _) = make_duffing_planar().unwrap();
        let saddle = find_saddle(&sys.x0, &[0.1, 0.0]).unwrap();
        let spec = ShootSpec {
            planar: sys.x0.clone(),
            saddle,
            delta: 1e-8,
            section: EventSpec::new(-1, true, |z| z[1]),
            phase_rate: None,
            embed: Arc::new(|p, _ph, out| out.copy_from_slice(&p[..2])),
            full_dim: 2,
            phase_index: None,
            limit_tangent: vec![0.0, 0.0],
            t_cap: 100.0,
            tol: Tolerance::uniform(1e-13),
        };
        let o = shoot_homoclinic(&sys, &spec).unwrap();
        let mut worst: f64 = 0.0;
        for k in -300..=300 {
            let t = k as f64 * 0.1;
            let s = o.state(t);
            let (z1, z2) = duffing_loop(t);
            worst = worst.max((s[0] - z1).abs()).max((s[1] - z2).abs());
        }
        assert!(worst < 1e-6, "{worst}");
        assert!(o.drift(&sys.h0, 2001) < 1e-9);
        let mut bad = spec.clone();
        bad.delta = 0.0;
        assert!(shoot_homoclinic(&sys, &bad).is_err());
    }

    #[test]
    fn pushed_loop_is_the_image() {
        let (sys, _) = make_duffing_planar().unwrap();
        let (_, o) = push_forward_planar(&sys).unwrap();
        for t in [-5.0, 0.0, 1.0, 4.0] {
            let (z1, z2) = duffing_loop(t);
            let u = o.state(t);
            assert!((u[0] - z1).abs() < 1e-7 && (u[1] - (z2 + z2 * z2 * z2)).abs() < 1e-7, "t={t}");
        }
    }
}
