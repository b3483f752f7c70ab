//! Melnikov integrals along homoclinic orbits: convergence classification,
//! truncation policies, tails, derivatives and the periodically forced case.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::hamcore::{cross_integrand, melnikov_integrand, SystemDef};
use crate::odeint::{integrate_with_quadrature, quadrature, Tolerance};
use crate::orbits::{DecayClass, HomoclinicOrbit, OrbitFamily};
use crate::roots;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceKind {
    Absolute,
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceReason {
    DfVanishesOnLimit,
    LimitUnmovedByEpsilon,
    DecayingIntegrand,
    NoneOfTheAbove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvergenceClass {
    pub kind: ConvergenceKind,
    pub reason: ConvergenceReason,
}

impl ConvergenceClass {
    pub fn is_absolute(&self) -> bool {
        self.kind == ConvergenceKind::Absolute
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            ConvergenceKind::Absolute => "absolute",
            ConvergenceKind::Conditional => "conditional",
        }
    }
}

/// Absolute when DF vanishes on the limit orbit, when the limit orbit does
/// not move with the perturbation, or when the integrand vanishes on it.
pub fn classify_convergence(orbit: &HomoclinicOrbit, sys: &SystemDef) -> ConvergenceClass {
    let abs = |reason| ConvergenceClass { kind: ConvergenceKind::Absolute, reason };
    let df = &orbit.limit.df_on_orbit;
    if df.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-10 {
        return abs(ConvergenceReason::DfVanishesOnLimit);
    }
    if !orbit.limit.moves_with_epsilon {
        return abs(ConvergenceReason::LimitUnmovedByEpsilon);
    }
    let limit_states: Vec<Vec<f64>> = match orbit.limit.phase_index {
        Some(_) => (0..16).filter_map(|k| orbit.limit.state_at_phase(2.0 * PI * k as f64 / 16.0)).collect(),
        None => {
            let (a, b) = orbit.numeric_span;
            (0..8).flat_map(|k| [orbit.state(b + k as f64), orbit.state(a - k as f64)]).collect()
        }
    };
    let decays = limit_states.iter().all(|s| melnikov_integrand(sys, s, 0.0).map_or(false, |v| v.abs() <= 1e-12));
    if decays {
        return abs(ConvergenceReason::DecayingIntegrand);
    }
    ConvergenceClass { kind: ConvergenceKind::Conditional, reason: ConvergenceReason::NoneOfTheAbove }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationMode {
    /// Cut where the tail bound is below tolerance (absolute class only).
    Plain,
    /// Endpoint phases both congruent to the anchor.
    Matched,
    /// Endpoint phases offset by pi, alternating with j (a witness for
    /// conditional convergence).
    Mismatched,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    pub mode: TruncationMode,
    /// Phase (mod 2 pi) at which matched endpoints are placed.
    pub anchor: f64,
    pub j_min: usize,
    pub j_max: usize,
    /// Stop once three consecutive partials agree within tolerance.
    pub stop_early: bool,
    /// Subtract the limit-orbit asymptote and add its integral in closed form.
    pub accelerate: bool,
}

impl TruncationPolicy {
    pub fn plain() -> Self {
        Self { mode: TruncationMode::Plain, anchor: 0.0, j_min: 1, j_max: 1, stop_early: false, accelerate: false }
    }

    pub fn matched(anchor: f64) -> Self {
        Self { mode: TruncationMode::Matched, anchor, j_min: 5, j_max: 15, stop_early: true, accelerate: true }
    }

    pub fn mismatched(anchor: f64) -> Self {
        Self { mode: TruncationMode::Mismatched, anchor, ..Self::matched(anchor) }
    }

    /// Default policy for a convergence class.
    pub fn for_class(class: ConvergenceClass) -> Self {
        if class.is_absolute() {
            Self::plain()
        } else {
            Self::matched(0.0)
        }
    }

    /// Pair `(T_j, T_j*)` and its endpoint phase residual.
    pub fn pair(&self, orbit: &HomoclinicOrbit, j: usize) -> Result<TruncationPair> {
        match self.mode {
            TruncationMode::Plain => Err(Error::InvalidInput("plain truncation has no pair sequence".into())),
            TruncationMode::Matched => matched_pair(orbit, j, self.anchor, self.anchor),
            TruncationMode::Mismatched => {
                let jf = j as f64;
                matched_pair(orbit, j, self.anchor + jf * PI, self.anchor + (jf + 1.0) * PI)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPair {
    pub t: f64,
    pub t_star: f64,
    /// `|phase(T) - phase(-T*)|` reduced mod 2 pi, minus the intended offset.
    pub residual: f64,
}

fn wrap(x: f64) -> f64 {
    crate::util::wrap_pi(x)
}

/// Last time `T <= (2j - 1) U` (`U = 2 pi / |omega|`) with
/// `phase(dir * T) ≡ target`, refined on the orbit's own phase function.
/// The window `((2j - 2) U, (2j - 1) U]` makes `T_2j >= 2 T_j` for any pair
/// of endpoint offsets.
fn endpoint(orbit: &HomoclinicOrbit, j: usize, target: f64, dir: f64) -> Result<(f64, f64)> {
    let a = orbit.asymptotics();
    let om = a.omega;
    let u = 2.0 * PI / om.abs();
    let c = if dir > 0.0 { a.c_plus } else { a.c_minus };
    // asymptotic phase at dir*T: dir*om*T + c
    let rate = dir * om;
    let t_hi = (2 * j - 1) as f64 * u;
    let k = ((rate * t_hi + c - target) / (2.0 * PI)).floor();
    let mut goal = target + 2.0 * PI * k;
    if rate < 0.0 {
        goal = target + 2.0 * PI * ((rate * t_hi + c - target) / (2.0 * PI)).ceil();
    }
    let t_guess = (goal - c) / rate;
    let mut g = |t: f64| orbit.phase(dir * t) - goal;
    let (mut lo, mut hi) = (t_guess - 0.25 * u, t_guess + 0.25 * u);
    let (mut glo, mut ghi) = (g(lo), g(hi));
    let mut widen = 0;
    while glo.signum() == ghi.signum() && widen < 8 {
        lo -= 0.25 * u;
        hi += 0.25 * u;
        glo = g(lo);
        ghi = g(hi);
        widen += 1;
    }
    if glo.signum() == ghi.signum() {
        return Err(Error::NoConvergence(format!("phase matching failed near T = {t_guess}")));
    }
    let t = roots::bisect_secant(&mut g, lo, hi, glo, ghi, 200);
    Ok((t, g(t).abs()))
}

fn matched_pair(orbit: &HomoclinicOrbit, j: usize, fwd: f64, bwd: f64) -> Result<TruncationPair> {
    if j == 0 {
        return Err(Error::InvalidInput("truncation index starts at 1".into()));
    }
    let om = orbit.asymptotics().omega;
    if om == 0.0 || !om.is_finite() {
        return Err(Error::Rejected("limit orbit has zero frequency; endpoints cannot be matched".into()));
    }
    let (t, r1) = endpoint(orbit, j, fwd, 1.0)?;
    let (ts, r2) = endpoint(orbit, j, bwd, -1.0)?;
    let offset = wrap(bwd - fwd);
    let residual = wrap(orbit.phase(t) - orbit.phase(-ts) + offset).abs().max(r1).max(r2);
    Ok(TruncationPair { t, t_star: ts, residual })
}

/// The j-th matched truncation pair with both endpoint phases congruent to
/// the phase at t = 0.
pub fn matched_times(orbit: &HomoclinicOrbit, j: usize) -> Result<(f64, f64)> {
    let p = matched_pair(orbit, j, orbit.phase0(), orbit.phase0())?;
    Ok((p.t, p.t_star))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelnikovEvaluation {
    pub phase: f64,
    pub value: f64,
    pub error: f64,
    pub t: f64,
    pub t_star: f64,
    pub convergence: ConvergenceClass,
    pub partials: Vec<(usize, f64)>,
    pub converged: bool,
    pub accelerated: bool,
    pub quad_error: f64,
    pub tail_bound: f64,
}

fn quad_tol(tol: f64) -> Tolerance {
    Tolerance::new((1e-3 * tol).max(1e-16), 1e-13)
}

/// Integral of a function of time over `[a, b]`, split at 0.
fn time_integral(g: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<(f64, f64)> {
    let qt = quad_tol(tol);
    if a < 0.0 && b > 0.0 {
        let (v1, e1) = quadrature(g, a, 0.0, qt)?;
        let (v2, e2) = quadrature(g, 0.0, b, qt)?;
        Ok((v1 + v2, e1 + e2))
    } else {
        quadrature(g, a, b, qt)
    }
}

type Integrand<'a> = &'a (dyn Fn(&[f64], f64) -> f64 + Sync);

fn orbit_integrand<'a>(orbit: &'a HomoclinicOrbit, f: Integrand<'a>) -> impl Fn(f64) -> f64 + 'a {
    move |t| {
        let mut s = [0.0; 4];
        let d = orbit.dim();
        orbit.state_into(t, &mut s[..d]);
        f(&s[..d], t)
    }
}

fn sys_integrand(sys: &SystemDef) -> impl Fn(&[f64], f64) -> f64 + Sync + '_ {
    move |s, t| melnikov_integrand(sys, s, t).unwrap_or(f64::NAN)
}

/// Envelope constant `C` with `|g(t)| <= C e^{-rate |t|}` estimated from
/// samples past `t0` on both sides.
fn envelope(g: &dyn Fn(f64) -> f64, rate: f64, t0: f64, window: f64) -> f64 {
    let mut c: f64 = 0.0;
    for k in 0..64 {
        let t = t0 + window * k as f64 / 63.0;
        c = c.max(g(t).abs() * (rate * t).exp()).max(g(-t).abs() * (rate * t).exp());
    }
    2.0 * c
}

/// Cut time for an exponentially decaying integrand and the bound on the
/// two discarded tails.
fn exponential_cut(g: &dyn Fn(f64) -> f64, rate: f64, omega: f64, tol: f64) -> (f64, f64) {
    let t0 = 10.0 / rate;
    let window = if omega != 0.0 { (2.0 * PI / omega.abs()).min(50.0) } else { 2.0 * PI };
    let c = envelope(g, rate, t0, window);
    if c == 0.0 {
        return (t0, 0.0);
    }
    let t = ((4.0 * c / (rate * tol)).ln() / rate).max(t0);
    (t, 2.0 * c * (-rate * t).exp() / rate)
}

/// Evaluates `M` along `orbit` under `policy`.
pub fn melnikov_autonomous(orbit: &HomoclinicOrbit, sys: &SystemDef, policy: &TruncationPolicy, tol: f64) -> Result<MelnikovEvaluation> {
    let g = sys_integrand(sys);
    evaluate(orbit, sys, &g, policy, tol)
}

fn evaluate(orbit: &HomoclinicOrbit, sys: &SystemDef, f: Integrand<'_>, policy: &TruncationPolicy, tol: f64) -> Result<MelnikovEvaluation> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let class = classify_convergence(orbit, sys);
    let mut policy = *policy;
    if policy.mode != TruncationMode::Plain && class.is_absolute() && orbit.asymptotics().omega == 0.0 {
        log::warn!("zero limit frequency: falling back to plain truncation");
        policy = TruncationPolicy::plain();
    }
    match (policy.mode, class.kind) {
        (TruncationMode::Plain, ConvergenceKind::Conditional) => {
            Err(Error::Rejected("conditionally convergent integral needs matched truncation".into()))
        }
        (TruncationMode::Plain, ConvergenceKind::Absolute) => absolute_plain(orbit, f, class, tol),
        _ => sequence(orbit, sys, f, class, &policy, tol),
    }
}

fn absolute_plain(orbit: &HomoclinicOrbit, f: Integrand<'_>, class: ConvergenceClass, tol: f64) -> Result<MelnikovEvaluation> {
    match orbit.decay {
        DecayClass::Exponential { rate } => {
            let g = orbit_integrand(orbit, f);
            let (t, bound) = exponential_cut(&g, rate, orbit.asymptotics().omega, tol);
            let (v, qe) = time_integral(&g, -t, t, tol)?;
            Ok(MelnikovEvaluation {
                phase: orbit.phase0(),
                value: v,
                error: qe + bound,
                t,
                t_star: t,
                convergence: class,
                partials: vec![(1, v)],
                converged: qe + bound <= tol,
                accelerated: false,
                quad_error: qe,
                tail_bound: bound,
            })
        }
        DecayClass::Polynomial { .. } => polynomial_plain(orbit, f, class, tol, None),
    }
}

/// Cut ladder for oscillatory polynomial tails: the first cut whose
/// post-correction bounds are below `tol / 2`, else the time cap.
fn polynomial_cut(orbit: &HomoclinicOrbit, tol: f64) -> Result<f64> {
    let tail = orbit.oscillatory_tail.as_ref().ok_or_else(|| Error::InvalidInput("polynomial decay needs a tail model".into()))?;
    let cap = orbit.numeric_span.1.min(-orbit.numeric_span.0);
    let mut t = 250.0f64.min(cap);
    loop {
        let b = tail(&orbit.state(t), 1.0).1 + tail(&orbit.state(-t), -1.0).1;
        if b <= 0.5 * tol || t >= cap {
            return Ok(t);
        }
        t = (2.0 * t).min(cap);
    }
}

/// Absolute polynomial case: re-integrate the flow with a quadrature
/// channel to `±T`, then add the tail corrections. `dphase` switches to the
/// phase derivative of the integrand (and of the tail).
fn polynomial_plain(
    orbit: &HomoclinicOrbit,
    f: Integrand<'_>,
    class: ConvergenceClass,
    tol: f64,
    dphase: Option<f64>,
) -> Result<MelnikovEvaluation> {
    let flow = orbit.flow.as_ref().ok_or_else(|| Error::InvalidInput("polynomial decay needs a flow source".into()))?;
    let tail = orbit.oscillatory_tail.as_ref().expect("checked by polynomial_cut");
    let t = polynomial_cut(orbit, tol)?;
    let mut start = flow.start.clone();
    start[flow.phase_index] += orbit.phase0();
    let qt = Tolerance::new((1e-3 * tol).max(1e-16).min(flow.tol.abs), flow.tol.rel);
    // the summed embedded estimates overstate the error of the propagated
    // solution by orders of magnitude; compare against a finer pass instead
    let fine = Tolerance::new(qt.abs / 32.0, (qt.rel / 32.0).max(4.0 * f64::EPSILON));
    let run = |tq: Tolerance, dir: f64| integrate_with_quadrature(&flow.field, &start, 0.0, dir * t, tq, f);
    let (fw, bw) = (run(fine, 1.0)?, run(fine, -1.0)?);
    let (fw_c, bw_c) = (run(qt, 1.0)?, run(qt, -1.0)?);
    let core = fw.value - bw.value;
    let qe = (fw.value - fw_c.value).abs() + (bw.value - bw_c.value).abs();
    let tail_at = |u: &[f64], dir: f64| -> (f64, f64) {
        match dphase {
            None => tail(u, dir),
            Some(h) => {
                let i = flow.phase_index;
                let mut a = u.to_vec();
                let mut b = u.to_vec();
                a[i] += h;
                b[i] -= h;
                let (ca, ba) = tail(&a, dir);
                let (cb, _) = tail(&b, dir);
                ((ca - cb) / (2.0 * h), 4.0 * ba)
            }
        }
    };
    let (cf, bf) = tail_at(fw.trajectory.final_state(), 1.0);
    let (cb, bb) = tail_at(bw.trajectory.final_state(), -1.0);
    let value = core + cf + cb;
    let bound = bf + bb;
    Ok(MelnikovEvaluation {
        phase: orbit.phase0(),
        value,
        error: qe + bound,
        t,
        t_star: t,
        convergence: class,
        partials: vec![(1, core), (2, value)],
        converged: bound <= tol,
        accelerated: false,
        quad_error: qe,
        tail_bound: bound,
    })
}

/// `∫_{c}^{c + omega T} G(phi) dphi / omega` for the limit-orbit integrand
/// `G`, where `G(phi)` is the integrand at the limit point of phase `phi`.
fn asymptote_integral(orbit: &HomoclinicOrbit, f: Integrand<'_>, c: f64, span: f64, tol: f64) -> Result<(f64, f64)> {
    let om = orbit.asymptotics().omega;
    let big_g = |phi: f64| match orbit.limit.state_at_phase(phi) {
        Some(s) => f(&s, 0.0),
        None => f64::NAN,
    };
    let qt = quad_tol(tol);
    let period = quadrature(&big_g, 0.0, 2.0 * PI, qt)?;
    // phase interval [c, c + span]; split off whole periods
    let n = (span / (2.0 * PI)).trunc();
    let rest = span - 2.0 * PI * n;
    let (r, e) = quadrature(&big_g, c, c + rest, qt)?;
    Ok(((n * period.0 + r) / om, (n.abs() * period.1 + e) / om.abs()))
}

fn sequence(
    orbit: &HomoclinicOrbit,
    _sys: &SystemDef,
    f: Integrand<'_>,
    class: ConvergenceClass,
    policy: &TruncationPolicy,
    tol: f64,
) -> Result<MelnikovEvaluation> {
    if policy.j_min == 0 || policy.j_max < policy.j_min {
        return Err(Error::InvalidInput(format!("bad truncation range {}..={}", policy.j_min, policy.j_max)));
    }
    let asym = orbit.asymptotics();
    let accelerate = policy.accelerate && orbit.limit.phase_index.is_some() && asym.omega != 0.0;
    let g = orbit_integrand(orbit, f);
    // integrand minus its limit-orbit asymptote on each side
    let g_acc = |t: f64| {
        let c = if t >= 0.0 { asym.c_plus } else { asym.c_minus };
        let s = orbit.limit.state_at_phase(asym.omega * t + c).expect("phase index checked");
        g(t) - f(&s, t)
    };
    let rate = match orbit.decay {
        DecayClass::Exponential { rate } => rate,
        DecayClass::Polynomial { .. } => {
            return Err(Error::Rejected("matched truncation is only implemented for exponential decay".into()))
        }
    };
    // beyond the cut the accelerated integrand is below the tail bound
    let (t_cut, cut_bound) = if accelerate { exponential_cut(&g_acc, rate, asym.omega, tol) } else { (f64::INFINITY, 0.0) };

    let mut partials = Vec::new();
    let mut errs = Vec::new();
    let mut last_pair = None;
    let mut converged = false;
    for j in policy.j_min..=policy.j_max {
        let pair = policy.pair(orbit, j)?;
        if pair.residual > 1e-8 {
            return Err(Error::NoConvergence(format!("endpoint residual {:e} at j = {j}", pair.residual)));
        }
        let (v, e) = if accelerate {
            let (d, de) = time_integral(&g_acc, -pair.t_star.min(t_cut), pair.t.min(t_cut), tol)?;
            let (ap, ape) = asymptote_integral(orbit, f, asym.c_plus, asym.omega * pair.t, tol)?;
            let (am, ame) = asymptote_integral(orbit, f, asym.c_minus - asym.omega * pair.t_star, asym.omega * pair.t_star, tol)?;
            (d + ap + am, de + ape + ame + cut_bound)
        } else {
            time_integral(&g, -pair.t_star, pair.t, tol)?
        };
        partials.push((j, v));
        errs.push(e);
        last_pair = Some(pair);
        if partials.len() >= 3 {
            let spread = spread_of(&partials[partials.len() - 3..]);
            if spread <= tol {
                converged = true;
                if policy.stop_early {
                    break;
                }
            } else {
                converged = false;
            }
        }
    }
    let pair = last_pair.expect("at least one j");
    let n = partials.len();
    let value = partials[n - 1].1;
    let spread = spread_of(&partials[n.saturating_sub(3)..]);
    let qe = errs[n - 1];
    Ok(MelnikovEvaluation {
        phase: orbit.phase0(),
        value,
        error: spread + qe,
        t: pair.t,
        t_star: pair.t_star,
        convergence: class,
        partials,
        converged,
        accelerated: accelerate,
        quad_error: qe,
        tail_bound: cut_bound,
    })
}

/// `max - min` of the partial values.
pub fn spread_of(partials: &[(usize, f64)]) -> f64 {
    let (lo, hi) = partials.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| (lo.min(v), hi.max(v)));
    if partials.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Derivative of `M` with respect to the family phase, by differentiating
/// under the integral. Uses the family's closed-form phase derivative of
/// the integrand when present, otherwise central differences of the
/// integrand across neighbouring orbits (step `1e-5`).
pub fn melnikov_derivative(family: &OrbitFamily, sys: &SystemDef, phase: f64, tol: f64) -> Result<MelnikovEvaluation> {
    let orbit = family.orbit(phase);
    let class = classify_convergence(&orbit, sys);
    if !class.is_absolute() {
        return Err(Error::Rejected("derivative under the integral needs absolute convergence".into()));
    }
    match (&family.phase_derivative, orbit.decay) {
        (Some(d), DecayClass::Polynomial { .. }) => polynomial_plain(&orbit, d.as_ref(), class, tol, Some(1e-5)),
        (Some(d), DecayClass::Exponential { .. }) => absolute_plain(&orbit, d.as_ref(), class, tol),
        (None, DecayClass::Exponential { rate }) => {
            let h = 1e-5;
            let op = family.orbit(phase + h);
            let om = family.orbit(phase - h);
            let g = sys_integrand(sys);
            let gp = orbit_integrand(&op, &g);
            let gm = orbit_integrand(&om, &g);
            let dg = |t: f64| (gp(t) - gm(t)) / (2.0 * h);
            let (t, bound) = exponential_cut(&dg, rate, orbit.asymptotics().omega, tol);
            let (v, qe) = time_integral(&dg, -t, t, tol)?;
            Ok(MelnikovEvaluation {
                phase,
                value: v,
                error: qe + bound,
                t,
                t_star: t,
                convergence: class,
                partials: vec![(1, v)],
                converged: qe + bound <= tol,
                accelerated: false,
                quad_error: qe,
                tail_bound: bound,
            })
        }
        (None, DecayClass::Polynomial { .. }) => {
            Err(Error::InvalidInput("polynomially decaying family needs a closed-form phase derivative".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeriodicForm {
    /// `k . (X x Y)`; symplectic planar charts only.
    Cross,
    /// `DH . Y`.
    Hamiltonian,
}

/// Melnikov function of a periodically forced planar system, with the
/// forcing phase advanced as `t + tau0`.
pub fn melnikov_periodic(sys: &SystemDef, orbit: &HomoclinicOrbit, tau0: f64, form: PeriodicForm, tol: f64) -> Result<MelnikovEvaluation> {
    if !sys.is_periodic_mode() || sys.dimension != 2 {
        return Err(Error::InvalidInput("periodic mode needs a planar system with a forcing period".into()));
    }
    if form == PeriodicForm::Cross && !sys.symplectic {
        return Err(Error::Rejected("cross form requires a symplectic chart".into()));
    }
    let rate = match orbit.decay {
        DecayClass::Exponential { rate } => rate,
        DecayClass::Polynomial { .. } => return Err(Error::InvalidInput("periodic mode needs an exponentially decaying loop".into())),
    };
    let f = |s: &[f64], t: f64| {
        let r = match form {
            PeriodicForm::Cross => cross_integrand(sys, s, t + tau0),
            PeriodicForm::Hamiltonian => melnikov_integrand(sys, s, t + tau0),
        };
        r.unwrap_or(f64::NAN)
    };
    let g = orbit_integrand(orbit, &f);
    let (t, bound) = exponential_cut(&g, rate, 1.0, tol);
    let (v, qe) = time_integral(&g, -t, t, tol)?;
    Ok(MelnikovEvaluation {
        phase: tau0,
        value: v,
        error: qe + bound,
        t,
        t_star: t,
        convergence: ConvergenceClass { kind: ConvergenceKind::Absolute, reason: ConvergenceReason::DfVanishesOnLimit },
        partials: vec![(1, v)],
        converged: qe + bound <= tol,
        accelerated: false,
        quad_error: qe,
        tail_bound: bound,
    })
}
