//! Phase scans of `M`, zero location and nondegeneracy certificates.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamcore::SystemDef;
use crate::melnikov::{classify_convergence, melnikov_autonomous, melnikov_derivative, MelnikovEvaluation, TruncationPolicy};
use crate::orbits::OrbitFamily;
use crate::roots;

#[derive(Debug, Clone)]
pub struct ScanResult {
    pub parameter: f64,
    pub grid: Vec<f64>,
    pub values: Vec<MelnikovEvaluation>,
    pub converged: bool,
    pub policy: Option<TruncationPolicy>,
}

impl ScanResult {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|e| e.value.abs()).fold(0.0, f64::max)
    }

    /// Scan value at the grid node nearest `phase` (periodic).
    pub fn nearest(&self, phase: f64) -> &MelnikovEvaluation {
        let i = self
            .grid
            .iter()
            .enumerate()
            .min_by(|a, b| circ_dist(*a.1, phase).total_cmp(&circ_dist(*b.1, phase)))
            .map(|(i, _)| i)
            .expect("non-empty scan");
        &self.values[i]
    }
}

fn circ_dist(a: f64, b: f64) -> f64 {
    crate::util::wrap_pi(a - b).abs()
}

fn evaluate(family: &OrbitFamily, sys: &SystemDef, phase: f64, tol: f64, policy: Option<TruncationPolicy>) -> Result<MelnikovEvaluation> {
    let orbit = family.orbit(phase);
    let p = policy.unwrap_or_else(|| TruncationPolicy::for_class(classify_convergence(&orbit, sys)));
    melnikov_autonomous(&orbit, sys, &p, tol)
}

/// `M` at `n` equispaced phases in `[0, 2 pi)`.
pub fn scan(family: &OrbitFamily, sys: &SystemDef, n: usize, tol: f64) -> Result<ScanResult> {
    scan_with(family, sys, n, tol, None)
}

/// As [`scan`] with an explicit truncation policy (default: by class).
pub fn scan_with(family: &OrbitFamily, sys: &SystemDef, n: usize, tol: f64, policy: Option<TruncationPolicy>) -> Result<ScanResult> {
    if n < 8 {
        return Err(Error::InvalidInput(format!("scan needs N >= 8, got {n}")));
    }
    let grid: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
    let values = grid.par_iter().map(|&ph| evaluate(family, sys, ph, tol, policy)).collect::<Result<Vec<_>>>()?;
    let converged = values.iter().all(|e| e.converged);
    Ok(ScanResult { parameter: family.parameter, grid, values, converged, policy })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefineMethod {
    BisectionNewton,
    Newton,
    Bisection,
}

impl RefineMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            RefineMethod::BisectionNewton => "bisection+newton",
            RefineMethod::Newton => "newton",
            RefineMethod::Bisection => "bisection",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroCertificate {
    pub phase: f64,
    pub residual: f64,
    pub derivative: f64,
    pub value_error: f64,
    pub derivative_error: f64,
    /// `|M'| - 3 (err_M + err_M')`.
    pub margin: f64,
    pub method: RefineMethod,
    /// Refined bracket; `M` keeps opposite signs at its ends.
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertifiedZero {
    pub phase: f64,
    pub residual: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ZeroSearch {
    pub certificates: Vec<ZeroCertificate>,
    pub uncertified: Vec<UncertifiedZero>,
}

/// Sign changes of the scan, wrap-around included, as index pairs. Exact
/// zeros on nodes count only when the nearest nonzero neighbours differ in
/// sign.
fn brackets(values: &[f64]) -> Vec<(usize, usize)> {
    let n = values.len();
    (0..n)
        .filter(|&i| values[i] != 0.0)
        .filter(|&i| {
            (1..n)
                .map(|k| values[(i + k) % n])
                .find(|v| *v != 0.0)
                .is_some_and(|v| v.signum() != values[i].signum())
        })
        .map(|i| (i, (i + 1) % n))
        .collect()
}

/// Locates and certifies the zeros of a converged scan.
pub fn find_zeros(scan: &ScanResult, family: &OrbitFamily, sys: &SystemDef, tol: f64) -> Result<ZeroSearch> {
    if !scan.converged {
        return Err(Error::Rejected("zero search needs a converged scan".into()));
    }
    let vals: Vec<f64> = scan.values.iter().map(|e| e.value).collect();
    let n = vals.len();
    let absolute = scan.values.iter().all(|e| e.convergence.is_absolute());
    let m = |ph: f64| evaluate(family, sys, ph, tol, scan.policy);
    let mut out = ZeroSearch::default();
    let pairs = brackets(&vals);
    for &(i, j) in &pairs {
        let a = scan.grid[i];
        let b = if j == 0 { 2.0 * PI } else { scan.grid[j] };
        let cert = if vals[j] == 0.0 {
            certify(family, sys, &m, b, (a, b), RefineMethod::Newton, absolute, tol)?
        } else {
            refine(family, sys, &m, (a, vals[i]), (b, vals[j]), absolute, tol)?
        };
        if cert.margin > 0.0 {
            out.certificates.push(cert);
        } else {
            out.uncertified.push(UncertifiedZero {
                phase: cert.phase,
                residual: cert.residual,
                reason: format!("margin {:e} not positive", cert.margin),
            });
        }
    }
    // small local minima of |M| with no sign change nearby
    for i in 0..n {
        let (l, r) = ((i + n - 1) % n, (i + 1) % n);
        let v = vals[i].abs();
        let in_bracket = pairs.iter().any(|&(p, q)| p == i || q == i);
        if v < tol && v <= vals[l].abs() && v <= vals[r].abs() && !in_bracket {
            out.uncertified.push(UncertifiedZero { phase: scan.grid[i], residual: v, reason: "possible tangency, not certified".into() });
        }
    }
    for c in &mut out.certificates {
        c.phase = c.phase.rem_euclid(2.0 * PI);
        if 2.0 * PI - c.phase < 1e-12 {
            c.phase = 0.0;
        }
    }
    out.certificates.sort_by(|a, b| a.phase.total_cmp(&b.phase));
    out.certificates.dedup_by(|a, b| circ_dist(a.phase, b.phase) < 1e-9);
    Ok(out)
}

type Eval<'a> = &'a dyn Fn(f64) -> Result<MelnikovEvaluation>;

fn refine(
    family: &OrbitFamily,
    sys: &SystemDef,
    m: Eval<'_>,
    (mut a, mut fa): (f64, f64),
    (mut b, mut fb): (f64, f64),
    absolute: bool,
    tol: f64,
) -> Result<ZeroCertificate> {
    if !absolute {
        let mut failure = None;
        let mut g = |x: f64| match m(x) {
            Ok(e) => e.value,
            Err(err) => {
                failure.get_or_insert(err);
                0.0
            }
        };
        let x = roots::bisect_secant(&mut g, a, b, fa, fb, 200);
        if let Some(err) = failure {
            return Err(err);
        }
        return certify(family, sys, m, x, (a, b), RefineMethod::Bisection, false, tol);
    }
    // bisection down to a Newton-friendly bracket
    while b - a > 1e-2 {
        let c = 0.5 * (a + b);
        let fc = m(c)?.value;
        if fc == 0.0 {
            return certify(family, sys, m, c, (a, b), RefineMethod::BisectionNewton, true, tol);
        }
        if fa * fc < 0.0 {
            b = c;
            fb = fc;
        } else {
            a = c;
            fa = fc;
        }
    }
    let mut x = if fb != fa { a - fa * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
    for _ in 0..30 {
        let fx = m(x)?.value;
        if fx == 0.0 {
            break;
        }
        if fa * fx < 0.0 {
            b = x;
        } else {
            a = x;
            fa = fx;
        }
        let d = melnikov_derivative(family, sys, x, tol)?.value;
        let mut next = x - fx / d;
        if !(next > a && next < b) || d == 0.0 {
            next = 0.5 * (a + b);
        }
        let step = (next - x).abs();
        x = next;
        if step <= 1e-13 * (1.0 + x.abs()) {
            break;
        }
    }
    let _ = fb;
    certify(family, sys, m, x, (a, b), RefineMethod::BisectionNewton, true, tol)
}

#[allow(clippy::too_many_arguments)]
fn certify(
    family: &OrbitFamily,
    sys: &SystemDef,
    m: Eval<'_>,
    x: f64,
    bracket: (f64, f64),
    method: RefineMethod,
    absolute: bool,
    tol: f64,
) -> Result<ZeroCertificate> {
    let e = m(x)?;
    let (d, de) = if absolute {
        let d = melnikov_derivative(family, sys, x, tol)?;
        (d.value, d.error)
    } else {
        let h = 1e-3;
        let p = m(x + h)?;
        let q = m(x - h)?;
        (
            (p.value - q.value) / (2.0 * h),
            (p.error + q.error) / (2.0 * h) + (p.value - 2.0 * e.value + q.value).abs() / h,
        )
    };
    Ok(ZeroCertificate {
        phase: x,
        residual: e.value.abs(),
        derivative: d,
        value_error: e.error,
        derivative_error: de,
        margin: d.abs() - 3.0 * (e.error + de),
        method,
        bracket,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginRow {
    pub phase: f64,
    pub residual: f64,
    pub derivative: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarginReport {
    pub rows: Vec<MarginRow>,
    /// Smallest `|M|` over grid nodes more than half a spacing from every
    /// certified zero.
    pub min_abs_away: Option<f64>,
}

pub fn margin_report(certs: &[ZeroCertificate], scan: &ScanResult) -> MarginReport {
    if certs.is_empty() {
        return MarginReport::default();
    }
    let rows = certs
        .iter()
        .map(|c| MarginRow { phase: c.phase, residual: c.residual, derivative: c.derivative, margin: c.margin })
        .collect();
    let h = 2.0 * PI / scan.len().max(1) as f64;
    let min_abs_away = scan
        .grid
        .iter()
        .zip(&scan.values)
        .filter(|(ph, _)| certs.iter().all(|c| circ_dist(**ph, c.phase) >= 0.5 * h))
        .map(|(_, e)| e.value.abs())
        .reduce(f64::min);
    MarginReport { rows, min_abs_away }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamcore::VectorFieldHandle;
    use crate::models::make_duffing_oscillator;

    #[test]
    fn bracket_detection() {
        assert!(brackets(&[1.0, 2.0, 0.5, 3.0]).is_empty());
        assert_eq!(brackets(&[1.0, -2.0, -0.5, 3.0]), vec![(0, 1), (2, 3)]);
        // exact zero on a node is counted once
        assert_eq!(brackets(&[0.0, 1.0, -1.0, -1.0]), vec![(1, 2), (3, 0)]);
    }

    #[test]
    fn duffing_scan_and_zeros() {
        let m = make_duffing_oscillator(1.0, 0.5).unwrap();
        assert!(scan(&m.family, &m.sys, 4, 1e-10).is_err());
        let s = scan(&m.family, &m.sys, 16, 1e-10).unwrap();
        assert!(s.converged);
        for (ph, e) in s.grid.iter().zip(&s.values) {
            if ph.sin().abs() > 1e-9 {
                assert_eq!(e.value.signum(), -ph.sin().signum());
            }
        }
        let z = find_zeros(&s, &m.family, &m.sys, 1e-10).unwrap();
        assert_eq!(z.certificates.len(), 2, "{z:?}");
        assert!(circ_dist(z.certificates[0].phase, 0.0) < 1e-8);
        assert!(circ_dist(z.certificates[1].phase, PI) < 1e-8);
        let r = margin_report(&z.certificates, &s);
        assert!(r.min_abs_away.unwrap() >= 0.5 * s.max_abs() * (PI / 16.0).sin());
        assert!(r.rows.iter().all(|row| row.margin > 0.0));
    }

    #[test]
    fn scaled_perturbation_scales_scan() {
        let m = make_duffing_oscillator(1.0, 0.5).unwrap();
        let s = scan(&m.family, &m.sys, 8, 1e-10).unwrap();
        let y = m.sys.y.clone();
        let sys2 = SystemDef { y: VectorFieldHandle::autonomous(4, move |u, o| { y.eval_into(0.0, u, o); o.iter_mut().for_each(|v| *v *= 2.0) }), ..m.sys.clone() };
        let s2 = scan(&m.family, &sys2, 8, 1e-10).unwrap();
        for (a, b) in s.values.iter().zip(&s2.values) {
            assert!((2.0 * a.value - b.value).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_sign_and_empty_report() {
        let m = make_duffing_oscillator(1.0, 0.5).unwrap();
        let mut s = scan(&m.family, &m.sys, 8, 1e-10).unwrap();
        for e in &mut s.values {
            e.value = 1.0 + e.value.abs();
        }
        let z = find_zeros(&s, &m.family, &m.sys, 1e-10).unwrap();
        assert!(z.certificates.is_empty() && z.uncertified.is_empty());
        assert_eq!(margin_report(&[], &s), MarginReport::default());
    }

    #[test]
    fn tangency_is_flagged() {
        let m = make_duffing_oscillator(1.0, 0.5).unwrap();
        let mut s = scan(&m.family, &m.sys, 8, 1e-10).unwrap();
        for (ph, e) in s.grid.iter().zip(s.values.iter_mut()) {
            e.value = 1.0 - ph.cos();
        }
        let z = find_zeros(&s, &m.family, &m.sys, 1e-10).unwrap();
        assert!(z.certificates.is_empty());
        assert_eq!(z.uncertified.len(), 1);
        assert!(z.uncertified[0].reason.contains("tangency"));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::models::make_duffing_oscillator;
    use proptest::prelude::*;

    fn certify(sys: &SystemDef, family: &OrbitFamily, n: usize, tol: f64) -> Vec<ZeroCertificate> {
        let s = scan(family, sys, n, tol).unwrap();
        find_zeros(&s, family, sys, tol).unwrap().certificates
    }

    fn zeros_of(sys: &SystemDef, family: &OrbitFamily, n: usize, tol: f64) -> Vec<f64> {
        certify(sys, family, n, tol).iter().map(|c| c.phase).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn zeros_invariant_under_scaling(c in 0.1f64..10.0) {
            let m = make_duffing_oscillator(1.0, 0.5).unwrap();
            let base = zeros_of(&m.sys, &m.family, 16, 1e-10);
            // Tolerances are absolute, so they scale with the values.
            let scaled = zeros_of(&m.sys.with_scaled_perturbation(c), &m.family, 16, 1e-10 * c);
            prop_assert_eq!(base.len(), scaled.len());
            for (a, b) in base.iter().zip(&scaled) {
                prop_assert!(circ_dist(*a, *b) <= 1e-8);
            }
        }

        #[test]
        fn zeros_stable_under_grid_doubling(alpha in 0.5f64..2.0) {
            let m = make_duffing_oscillator(alpha, 0.5).unwrap();
            let coarse = zeros_of(&m.sys, &m.family, 8, 1e-10);
            let fine = zeros_of(&m.sys, &m.family, 16, 1e-10);
            prop_assert_eq!(coarse.len(), fine.len());
            for (a, b) in coarse.iter().zip(&fine) {
                prop_assert!(circ_dist(*a, *b) <= 1e-6);
            }
        }

        #[test]
        fn sign_changes_across_each_certificate(alpha in 0.5f64..2.0) {
            let m = make_duffing_oscillator(alpha, 0.5).unwrap();
            for c in certify(&m.sys, &m.family, 16, 1e-10) {
                let (a, b) = c.bracket;
                let policy = TruncationPolicy::plain();
                let fa = melnikov_autonomous(&m.family.orbit(a), &m.sys, &policy, 1e-10).unwrap().value;
                let fb = melnikov_autonomous(&m.family.orbit(b), &m.sys, &policy, 1e-10).unwrap().value;
                prop_assert!(fa * fb <= 0.0, "{} {} at {:?}", fa, fb, c.bracket);
            }
        }
    }
}
