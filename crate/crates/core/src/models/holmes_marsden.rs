//! Holmes–Marsden type system: a planar loop in (q, p) fibered over the
//! angle-action pair (theta, I).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hamcore::{Chart, Coordinate, ScalarFieldHandle, SystemDef, VectorFieldHandle};
use crate::odeint::{EventSpec, Tolerance};
use crate::orbits::{find_saddle, shoot_homoclinic, OrbitFamily, ShootSpec, SpectrumClass};

use super::{Model, ModelConfig, ModelId};

/// `U(q) = a2 (q - qc)^2 + a3 (q - qc)^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Potential {
    pub a2: f64,
    pub a3: f64,
    pub qc: f64,
}

impl Default for Potential {
    fn default() -> Self {
        Self { a2: -0.5, a3: 1.0 / 3.0, qc: 3.0 }
    }
}

impl Potential {
    pub fn value(&self, q: f64) -> f64 {
        let d = q - self.qc;
        self.a2 * d * d + self.a3 * d * d * d
    }

    pub fn derivative(&self, q: f64) -> f64 {
        let d = q - self.qc;
        2.0 * self.a2 * d + 3.0 * self.a3 * d * d
    }
}

/// State `(q, p, theta, I)`; `H0 = p^2/2 + U(q) + I^2/(2 q^2)`,
/// `H1 = sin(theta)`, `F = I`. The loop is shot at `I = i0` with the
/// section `p = 0`.
pub fn make_holmes_marsden(i0: f64, pot: Potential) -> Result<Model> {
    if !i0.is_finite() || !(pot.a2 < 0.0) || pot.a3 == 0.0 || !(pot.qc > 0.0) {
        return Err(Error::InvalidInput(format!("holmes-marsden parameters rejected: I0 = {i0}, {pot:?}")));
    }
    let chart = Arc::new(Chart::new(
        "holmes-marsden",
        vec![Coordinate::real("q"), Coordinate::real("p"), Coordinate::angle("theta"), Coordinate::real("I")],
    ));
    let h0 = ScalarFieldHandle::with_gradient(
        4,
        move |y| 0.5 * y[1] * y[1] + pot.value(y[0]) + y[3] * y[3] / (2.0 * y[0] * y[0]),
        move |y, g| {
            g[0] = pot.derivative(y[0]) - y[3] * y[3] / y[0].powi(3);
            g[1] = y[1];
            g[2] = 0.0;
            g[3] = y[3] / (y[0] * y[0]);
        },
    );
    let h1 = ScalarFieldHandle::with_gradient(
        4,
        |y| y[2].sin(),
        |y, g| {
            g[0] = 0.0;
            g[1] = 0.0;
            g[2] = y[2].cos();
            g[3] = 0.0;
        },
    );
    let f = ScalarFieldHandle::with_gradient(
        4,
        |y| y[3],
        |_y, g| {
            g[0] = 0.0;
            g[1] = 0.0;
            g[2] = 0.0;
            g[3] = 1.0;
        },
    );
    let x0 = VectorFieldHandle::autonomous(4, move |y, o| {
        let q = y[0];
        o[0] = y[1];
        o[1] = -pot.derivative(q) + y[3] * y[3] / (q * q * q);
        o[2] = y[3] / (q * q);
        o[3] = 0.0;
    });
    let y = VectorFieldHandle::autonomous(4, |y, o| {
        o[0] = 0.0;
        o[1] = 0.0;
        o[2] = 0.0;
        o[3] = -y[2].cos();
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

    let planar = VectorFieldHandle::autonomous(2, move |z, o| {
        let q = z[0];
        o[0] = z[1];
        o[1] = -pot.derivative(q) + i0 * i0 / (q * q * q);
    });
    let saddle = find_saddle(&planar, &[pot.qc, 0.0])?;
    if saddle.class != SpectrumClass::Hyperbolic || saddle.point[0] <= 0.0 {
        return Err(Error::NoHomoclinicLoop(format!("effective potential has no saddle near q = {}", pot.qc)));
    }
    let spec = ShootSpec {
        planar,
        saddle: saddle.clone(),
        delta: 1e-6,
        section: EventSpec::new(-1, true, |z| z[1]),
        phase_rate: Some(Arc::new(move |z| i0 / (z[0] * z[0]))),
        embed: Arc::new(move |z, phase, out| {
            out[0] = z[0];
            out[1] = z[1];
            out[2] = phase;
            out[3] = i0;
        }),
        full_dim: 4,
        phase_index: Some(2),
        limit_tangent: vec![0.0, 0.0, 1.0, 0.0],
        t_cap: 200.0,
        tol: Tolerance::uniform(1e-13),
    };
    let orbit = shoot_homoclinic(&sys, &spec)?;
    let h = orbit.h0;
    let config = ModelConfig::new(ModelId::HolmesMarsden)
        .with("I0", i0)
        .with("a2", pot.a2)
        .with("a3", pot.a3)
        .with("qc", pot.qc);
    Ok(Model { config, sys, family: OrbitFamily::new("h0", h, orbit), h0: h })
}
