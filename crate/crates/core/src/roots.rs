//! Bracketed scalar root finders.

/// Illinois-style false position with bisection fallback on `[a, b]`,
/// where `fa` and `fb` have opposite signs (or one is zero). Stops when
/// `|g| <= 1e-10`, the bracket collapses, or after `max_iter` iterations.
pub fn bisect_secant<F: FnMut(f64) -> f64>(g: &mut F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, max_iter: usize) -> f64 {
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let mut side = 0i8;
    for it in 0..max_iter {
        let mut x = (a * fb - b * fa) / (fb - fa);
        // every third step, or when the secant leaves the bracket, bisect
        if it % 3 == 2 || !x.is_finite() || (x - a) * (x - b) >= 0.0 {
            x = 0.5 * (a + b);
        }
        let fx = g(x);
        if fx.abs() <= 1e-10 || (b - a).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
            return x;
        }
        if (fx < 0.0) == (fa < 0.0) {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    if fa.abs() < fb.abs() {
        a
    } else {
        b
    }
}

/// Plain bisection to an interval width of `xtol`.
pub fn bisect<F: FnMut(f64) -> f64>(g: &mut F, mut a: f64, mut b: f64, xtol: f64) -> f64 {
    let mut fa = g(a);
    for _ in 0..200 {
        if (b - a).abs() <= xtol {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = g(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_root() {
        let mut g = |x: f64| x * x * x - 2.0;
        let r = bisect_secant(&mut g, 0.0, 2.0, -2.0, 6.0, 100);
        assert!((r - 2f64.cbrt()).abs() < 1e-10);
    }

    #[test]
    fn bisection() {
        let r = bisect(&mut |x: f64| x.cos(), 0.0, 3.0, 1e-13);
        assert!((r - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn endpoint_zero() {
        let r = bisect_secant(&mut |x: f64| x, 0.0, 1.0, 0.0, 1.0, 10);
        assert_eq!(r, 0.0);
    }
}
