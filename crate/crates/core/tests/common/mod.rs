//! Independent reference quadrature for tests: adaptive Gauss–Kronrod 7/15.

#![allow(dead_code)]

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Kronrod value, `|K - G|`, and the Kronrod rule applied to `|f|`.
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    for j in 0..7 {
        let x = h * XGK[j];
        let (fl, fr) = (f(c - x), f(c + x));
        k += WGK[j] * (fl + fr);
        abs += WGK[j] * (fl.abs() + fr.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * (fl + fr);
        }
    }
    (k * h, ((k - g) * h).abs(), abs * h.abs())
}

fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> (f64, f64) {
    let (v, e, abs) = gk15(f, a, b);
    // below a few ulps of the integral of |f| further splitting only adds roundoff
    if e <= tol.max(50.0 * f64::EPSILON * abs) || depth == 0 {
        return (v, e);
    }
    let m = 0.5 * (a + b);
    let (v1, e1) = adapt(f, a, m, 0.5 * tol, depth - 1);
    let (v2, e2) = adapt(f, m, b, 0.5 * tol, depth - 1);
    (v1 + v2, e1 + e2)
}

/// `∫_a^b f` to absolute tolerance `tol`, returned with its error estimate.
pub fn gauss_kronrod(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    // unit pieces keep the estimate local for oscillatory integrands
    let n = ((b - a).abs().ceil() as usize).max(1);
    let w = (b - a) / n as f64;
    (0..n)
        .map(|i| adapt(f, a + i as f64 * w, a + (i + 1) as f64 * w, tol / n as f64, 40))
        .fold((0.0, 0.0), |acc, r| (acc.0 + r.0, acc.1 + r.1))
}

pub fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    1.0 / (c * c)
}

/// Reference Duffing-oscillator integral `∫ -A z1'(t) cos(alpha t + theta0) dt` with
/// `z1 = 1.5 sech^2(t/2)` and `A = sqrt(2 g0 / alpha)`, truncated at `|t| = 60`.
pub fn duffing_oracle(alpha: f64, g0: f64, theta0: f64) -> f64 {
    let a = (2.0 * g0 / alpha).sqrt();
    let f = |t: f64| {
        let dz1 = -1.5 * sech2(0.5 * t) * (0.5 * t).tanh();
        -a * dz1 * (alpha * t + theta0).cos()
    };
    gauss_kronrod(&f, -60.0, 60.0, 1e-15).0
}

/// `|a - b| / max(|b|, floor)`.
pub fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}
