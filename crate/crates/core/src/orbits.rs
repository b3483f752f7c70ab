//! Unperturbed limit orbits and homoclinic parameterizations.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hamcore::{ScalarFieldHandle, SystemDef, VectorFieldHandle};
use crate::odeint::{integrate, integrate_until, EventSpec, Tolerance, Trajectory};
use crate::util::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitKind {
    FixedPointTimesCircle,
    DegenerateCircleAtInfinity,
}

/// The periodic orbit the homoclinic loop is asymptotic to.
#[derive(Debug, Clone)]
pub struct LimitOrbitDesc {
    pub kind: LimitKind,
    /// A point of the limit orbit at phase zero.
    pub anchor: Vec<f64>,
    /// Unit tangent of the limit orbit at `anchor` (the phase direction).
    pub tangent: Vec<f64>,
    pub omega: f64,
    pub f_value: f64,
    pub df_on_orbit: Vec<f64>,
    pub moves_with_epsilon: bool,
    /// Coordinates that settle to the anchor's values along the loop (the
    /// rest parameterize the circle or are conserved).
    pub transverse: Vec<usize>,
    /// Coordinate carrying the phase on the limit orbit, when there is one.
    pub phase_index: Option<usize>,
}

impl LimitOrbitDesc {
    /// Point of the limit orbit at phase `phi` (requires `phase_index`).
    pub fn state_at_phase(&self, phi: f64) -> Option<Vec<f64>> {
        let i = self.phase_index?;
        let mut s = self.anchor.clone();
        s[i] = phi;
        Some(s)
    }
}

impl LimitOrbitDesc {
    /// Norm of `X0(anchor)` with the phase-direction component removed.
    pub fn anchor_residual(&self, field: &VectorFieldHandle) -> f64 {
        let v = field.eval(&self.anchor, 0.0);
        let c = dot(&v, &self.tangent);
        v.iter().zip(&self.tangent).map(|(a, u)| (a - c * u).powi(2)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayClass {
    Exponential { rate: f64 },
    Polynomial { exponent: f64 },
}

/// Phase behaves as `omega * t + c_plus` (t → +∞) and `omega * t + c_minus`
/// (t → −∞).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseAsymptotics {
    pub omega: f64,
    pub c_plus: f64,
    pub c_minus: f64,
}

type StateFn = Arc<dyn Fn(f64, f64, &mut [f64]) + Send + Sync>;
type PhaseFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Oscillatory tail model: `(state at the cut, direction ±1) -> (correction, bound)`.
pub type TailFn = Arc<dyn Fn(&[f64], f64) -> (f64, f64) + Send + Sync>;

/// Data for re-integrating the orbit with the unperturbed flow.
#[derive(Clone)]
pub struct FlowSource {
    pub field: VectorFieldHandle,
    /// State at t = 0 for phase zero.
    pub start: Vec<f64>,
    /// Coordinate that carries the phase.
    pub phase_index: usize,
    pub tol: Tolerance,
}

/// A homoclinic orbit `t ↦ φ0(t, z0)` at a fixed phase, with its
/// asymptotic data.
#[derive(Clone)]
pub struct HomoclinicOrbit {
    dim: usize,
    phase0: f64,
    state_fn: StateFn,
    rel_phase: PhaseFn,
    pub limit: LimitOrbitDesc,
    pub decay: DecayClass,
    /// Asymptotics of the relative phase `phase(t) - phase0`.
    rel_asymptotics: PhaseAsymptotics,
    pub h0: f64,
    pub f0: f64,
    /// Time span covered by numeric (or exact) data rather than tails.
    pub numeric_span: (f64, f64),
    /// Distance between the two shot branches at the section (0 for exact orbits).
    pub section_mismatch: f64,
    pub flow: Option<FlowSource>,
    pub oscillatory_tail: Option<TailFn>,
}

impl fmt::Debug for HomoclinicOrbit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HomoclinicOrbit")
            .field("dim", &self.dim)
            .field("phase0", &self.phase0)
            .field("decay", &self.decay)
            .field("asymptotics", &self.asymptotics())
            .field("h0", &self.h0)
            .field("f0", &self.f0)
            .field("numeric_span", &self.numeric_span)
            .finish()
    }
}

impl HomoclinicOrbit {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn phase0(&self) -> f64 {
        self.phase0
    }

    /// Same loop, shifted to another phase at t = 0.
    pub fn with_phase(&self, phase0: f64) -> Self {
        let mut o = self.clone();
        o.phase0 = phase0;
        o
    }

    pub fn state_into(&self, t: f64, out: &mut [f64]) {
        (self.state_fn)(t, self.phase0, out)
    }

    pub fn state(&self, t: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        self.state_into(t, &mut v);
        v
    }

    pub fn base_point(&self) -> Vec<f64> {
        self.state(0.0)
    }

    /// Unreduced phase of the limit-orbit coordinate at time `t`.
    pub fn phase(&self, t: f64) -> f64 {
        self.phase0 + (self.rel_phase)(t)
    }

    pub fn asymptotics(&self) -> PhaseAsymptotics {
        PhaseAsymptotics {
            omega: self.rel_asymptotics.omega,
            c_plus: self.rel_asymptotics.c_plus + self.phase0,
            c_minus: self.rel_asymptotics.c_minus + self.phase0,
        }
    }

    /// Max deviation of `field` from its value at t = 0 over `n` uniform
    /// samples of the numeric span.
    pub fn drift(&self, field: &ScalarFieldHandle, n: usize) -> f64 {
        let v0 = field.value(&self.state(0.0));
        let (a, b) = self.numeric_span;
        let mut s = vec![0.0; self.dim];
        let mut worst: f64 = 0.0;
        for k in 0..n {
            let t = a + (b - a) * k as f64 / (n - 1).max(1) as f64;
            self.state_into(t, &mut s);
            worst = worst.max((field.value(&s) - v0).abs());
        }
        worst
    }

    /// Distance of `state(t)` from the limit orbit over its transverse
    /// coordinates.
    pub fn distance_to_limit(&self, t: f64) -> f64 {
        let s = self.state(t);
        self.limit.transverse.iter().map(|&i| (s[i] - self.limit.anchor[i]).powi(2)).sum::<f64>().sqrt()
    }
}

/// A one-parameter family of orbits indexed by the phase at t = 0.
#[derive(Clone)]
pub struct OrbitFamily {
    pub parameter_name: &'static str,
    pub parameter: f64,
    base: HomoclinicOrbit,
    /// Closed-form phase derivative of the Melnikov integrand, if known.
    pub phase_derivative: Option<crate::hamcore::IntegrandFn>,
}

impl fmt::Debug for OrbitFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OrbitFamily")
            .field("parameter_name", &self.parameter_name)
            .field("parameter", &self.parameter)
            .field("base", &self.base)
            .finish()
    }
}

impl OrbitFamily {
    pub fn new(parameter_name: &'static str, parameter: f64, base: HomoclinicOrbit) -> Self {
        Self { parameter_name, parameter, base: base.with_phase(0.0), phase_derivative: None }
    }

    pub fn orbit(&self, phase: f64) -> HomoclinicOrbit {
        self.base.with_phase(phase)
    }
}

// ---------------------------------------------------------------------------
// saddles

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumClass {
    Hyperbolic,
    /// Some eigenvalue on the imaginary axis, not all zero.
    Center,
    /// All eigenvalues zero.
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct Saddle {
    pub point: Vec<f64>,
    pub residual: f64,
    pub eigenvalues: Vec<Complex<f64>>,
    /// Real eigenpairs, largest real part first; vectors are unit with a
    /// nonnegative first nonzero component.
    pub eigenpairs: Vec<(f64, Vec<f64>)>,
    pub class: SpectrumClass,
}

impl Saddle {
    pub fn unstable(&self) -> Option<(f64, &[f64])> {
        self.eigenpairs.iter().find(|(l, _)| *l > 0.0).map(|(l, v)| (*l, v.as_slice()))
    }

    pub fn stable(&self) -> Option<(f64, &[f64])> {
        self.eigenpairs.iter().rev().find(|(l, _)| *l < 0.0).map(|(l, v)| (*l, v.as_slice()))
    }
}

pub(crate) fn fd_jacobian(field: &VectorFieldHandle, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut j = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for c in 0..n {
        let h = 1e-6 * (1.0 + x[c].abs());
        xp[c] = x[c] + h;
        field.eval_into(0.0, &xp, &mut fp);
        xp[c] = x[c] - h;
        field.eval_into(0.0, &xp, &mut fm);
        xp[c] = x[c];
        for r in 0..n {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

pub(crate) fn null_vector(m: &DMatrix<f64>) -> Vec<f64> {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested v_t");
    let (imin, _) = svd.singular_values.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let mut v: Vec<f64> = vt.row(imin).iter().copied().collect();
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    v
}

/// Newton iteration for an equilibrium of `field` near `guess`, with the
/// spectrum of the finite-difference Jacobian.
pub fn find_saddle(field: &VectorFieldHandle, guess: &[f64]) -> Result<Saddle> {
    let n = field.dim();
    if guess.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: guess.len() });
    }
    let mut x = guess.to_vec();
    let mut f = field.eval(&x, 0.0);
    let mut res = norm(&f);
    let mut it = 0;
    while res > 1e-12 {
        if it == 50 {
            return Err(Error::NoConvergence(format!("equilibrium search stalled at residual {res:e}")));
        }
        it += 1;
        let j = fd_jacobian(field, &x);
        let rhs = DVector::from_iterator(n, f.iter().map(|v| -v));
        let dx = match j.clone().lu().solve(&rhs) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => j.svd(true, true).solve(&rhs, 1e-14).map_err(|e| Error::NoConvergence(e.to_string()))?,
        };
        for i in 0..n {
            x[i] += dx[i];
        }
        f = field.eval(&x, 0.0);
        res = norm(&f);
        if !res.is_finite() {
            return Err(Error::NoConvergence("equilibrium search diverged".into()));
        }
    }
    let j = fd_jacobian(field, &x);
    let ev: Vec<Complex<f64>> = j.complex_eigenvalues().iter().copied().collect();
    let scale = 1e-8;
    let class = if ev.iter().all(|z| z.norm() < scale) {
        SpectrumClass::Degenerate
    } else if ev.iter().any(|z| z.re.abs() < scale) {
        SpectrumClass::Center
    } else {
        SpectrumClass::Hyperbolic
    };
    let mut reals: Vec<f64> = ev.iter().filter(|z| z.im.abs() < scale && z.norm() >= scale).map(|z| z.re).collect();
    reals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    reals.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let eigenpairs = reals
        .into_iter()
        .map(|l| {
            let m = &j - DMatrix::identity(n, n) * l;
            (l, null_vector(&m))
        })
        .collect();
    Ok(Saddle { point: x, residual: res, eigenvalues: ev, eigenpairs, class })
}

// ---------------------------------------------------------------------------
// closed forms

/// `sech^2(x)` without overflow.
pub fn sech2(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

/// Duffing loop `z1 = (3/2) sech^2(t/2)`, `z2 = z1'`.
pub fn duffing_loop(t: f64) -> (f64, f64) {
    let s = sech2(0.5 * t);
    (1.5 * s, -1.5 * s * (0.5 * t).tanh())
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: Option<f64>) -> Result<f64> {
    match params.get(key).copied().or(default) {
        Some(v) if v.is_finite() => Ok(v),
        Some(v) => Err(Error::InvalidInput(format!("parameter {key} = {v}"))),
        None => Err(Error::InvalidInput(format!("missing parameter {key}"))),
    }
}

/// Closed-form homoclinic orbits. Registered ids: `duffing-oscillator`
/// (parameters `alpha`, `g0`, phase `theta0`) and `duffing-planar`.
pub fn closed_form_homoclinic(model_id: &str, params: &BTreeMap<String, f64>) -> Result<HomoclinicOrbit> {
    match model_id {
        "duffing-oscillator" => {
            let alpha = param(params, "alpha", None)?;
            let g0 = param(params, "g0", Some(0.5))?;
            let theta0 = param(params, "theta0", Some(0.0))?;
            if alpha <= 0.0 || g0 <= 0.0 {
                return Err(Error::InvalidInput(format!("need alpha > 0 and g0 > 0, got {alpha}, {g0}")));
            }
            let amp = (2.0 * g0 / alpha).sqrt();
            let state_fn: StateFn = Arc::new(move |t, ph, out| {
                let (z1, z2) = duffing_loop(t);
                let a = alpha * t + ph;
                out[0] = z1;
                out[1] = z2;
                out[2] = amp * a.cos();
                out[3] = -amp * a.sin();
            });
            let limit = LimitOrbitDesc {
                kind: LimitKind::FixedPointTimesCircle,
                anchor: vec![0.0, 0.0, amp, 0.0],
                tangent: vec![0.0, 0.0, 0.0, -1.0],
                omega: alpha,
                f_value: 0.0,
                df_on_orbit: vec![0.0; 4],
                moves_with_epsilon: true,
                transverse: vec![0, 1],
                phase_index: None,
            };
            Ok(HomoclinicOrbit {
                dim: 4,
                phase0: theta0,
                state_fn,
                rel_phase: Arc::new(move |t| alpha * t),
                limit,
                decay: DecayClass::Exponential { rate: 1.0 },
                rel_asymptotics: PhaseAsymptotics { omega: alpha, c_plus: 0.0, c_minus: 0.0 },
                h0: g0,
                f0: 0.0,
                numeric_span: (-40.0, 40.0),
                section_mismatch: 0.0,
                flow: None,
                oscillatory_tail: None,
            })
        }
        "duffing-planar" => {
            let state_fn: StateFn = Arc::new(|t, _ph, out| {
                let (z1, z2) = duffing_loop(t);
                out[0] = z1;
                out[1] = z2;
            });
            let limit = LimitOrbitDesc {
                kind: LimitKind::FixedPointTimesCircle,
                anchor: vec![0.0, 0.0],
                tangent: vec![0.0, 0.0],
                omega: 0.0,
                f_value: 0.0,
                df_on_orbit: vec![0.0; 2],
                moves_with_epsilon: true,
                transverse: vec![0, 1],
                phase_index: None,
            };
            Ok(HomoclinicOrbit {
                dim: 2,
                phase0: 0.0,
                state_fn,
                rel_phase: Arc::new(|_| 0.0),
                limit,
                decay: DecayClass::Exponential { rate: 1.0 },
                rel_asymptotics: PhaseAsymptotics { omega: 0.0, c_plus: 0.0, c_minus: 0.0 },
                h0: 0.0,
                f0: 0.0,
                numeric_span: (-40.0, 40.0),
                section_mismatch: 0.0,
                flow: None,
                oscillatory_tail: None,
            })
        }
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

// ---------------------------------------------------------------------------
// shooting

type RateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type EmbedFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;

/// Setup for [`shoot_homoclinic`]: a planar reduced field whose saddle has
/// a loop, an optional phase rate, and the embedding back into the full
/// state.
#[derive(Clone)]
pub struct ShootSpec {
    pub planar: VectorFieldHandle,
    pub saddle: Saddle,
    pub delta: f64,
    /// Section on the planar state; the crossing is placed at t = 0.
    pub section: EventSpec,
    /// Rate of the phase coordinate as a function of the planar state.
    pub phase_rate: Option<RateFn>,
    /// `(planar, phase, full_out)`.
    pub embed: EmbedFn,
    pub full_dim: usize,
    /// Coordinate of the full state that carries the phase.
    pub phase_index: Option<usize>,
    /// Unit tangent of the limit orbit in the full state.
    pub limit_tangent: Vec<f64>,
    pub t_cap: f64,
    pub tol: Tolerance,
}

struct Branch {
    traj: Trajectory,
    tau: f64,
    theta_end: f64,
}

fn shoot_branch(spec: &ShootSpec, seed: &[f64], forward: bool) -> Result<Branch> {
    let has_phase = spec.phase_rate.is_some();
    let n = if has_phase { 3 } else { 2 };
    let planar = spec.planar.clone();
    let rate = spec.phase_rate.clone();
    let field = VectorFieldHandle::new(n, true, move |t, y, out| {
        planar.eval_into(t, &y[..2], &mut out[..2]);
        if let Some(r) = &rate {
            out[2] = r(&y[..2]);
        }
    });
    let sec = spec.section.function.clone();
    let event = EventSpec { function: Arc::new(move |y: &[f64]| sec(&y[..2])), direction: spec.section.direction, terminal: true };
    let mut y0 = seed.to_vec();
    if has_phase {
        y0.push(0.0);
    }
    let t1 = if forward { spec.t_cap } else { -spec.t_cap };
    let run = integrate_until(&field, &y0, 0.0, t1, spec.tol, &[event])?;
    let hit = run.terminal.ok_or_else(|| {
        Error::NoHomoclinicLoop(format!("no section return within |t| <= {}", spec.t_cap))
    })?;
    Ok(Branch { tau: hit.time.abs(), theta_end: if has_phase { hit.state[2] } else { 0.0 }, traj: run.trajectory })
}

struct Splice {
    unstable: Branch,
    stable: Branch,
    saddle: Vec<f64>,
    lam_u: f64,
    lam_s: f64,
    seed_u: Vec<f64>,
    seed_s: Vec<f64>,
    omega: f64,
    g_u: f64,
    g_s: f64,
    has_phase: bool,
    embed: EmbedFn,
}

impl Splice {
    /// Planar state and relative phase at orbit time `t`.
    fn eval(&self, t: f64, planar: &mut [f64; 3]) -> f64 {
        let tu = self.unstable.tau;
        let ts = self.stable.tau;
        if t < -tu {
            let e = (self.lam_u * (t + tu)).exp();
            for i in 0..2 {
                planar[i] = self.saddle[i] + (self.seed_u[i] - self.saddle[i]) * e;
            }
            -self.unstable.theta_end + self.omega * (t + tu) - self.g_u / self.lam_u * (1.0 - e)
        } else if t <= 0.0 {
            let n = self.unstable.traj.dim();
            self.unstable.traj.interpolate_into(t + tu, &mut planar[..n]);
            if self.has_phase {
                planar[2] - self.unstable.theta_end
            } else {
                0.0
            }
        } else if t <= ts {
            let n = self.stable.traj.dim();
            self.stable.traj.interpolate_into(t - ts, &mut planar[..n]);
            if self.has_phase {
                planar[2] - self.stable.theta_end
            } else {
                0.0
            }
        } else {
            let e = (-self.lam_s * (t - ts)).exp();
            for i in 0..2 {
                planar[i] = self.saddle[i] + (self.seed_s[i] - self.saddle[i]) * e;
            }
            -self.stable.theta_end + self.omega * (t - ts) + self.g_s / self.lam_s * (1.0 - e)
        }
    }
}

/// Shoots the homoclinic loop of a planar saddle: the unstable branch is
/// integrated forward and the stable branch backward, each to the section;
/// the section crossing becomes t = 0 and linearized tails continue both
/// ends.
pub fn shoot_homoclinic(sys: &SystemDef, spec: &ShootSpec) -> Result<HomoclinicOrbit> {
    if spec.delta == 0.0 || !spec.delta.is_finite() {
        return Err(Error::Rejected("launch offset delta must be nonzero".into()));
    }
    if spec.saddle.class != SpectrumClass::Hyperbolic {
        return Err(Error::Rejected(format!("equilibrium is not a saddle ({:?})", spec.saddle.class)));
    }
    let (lu, vu) = spec.saddle.unstable().ok_or_else(|| Error::Rejected("no unstable direction".into()))?;
    let (ls, vs) = spec.saddle.stable().ok_or_else(|| Error::Rejected("no stable direction".into()))?;
    let p = &spec.saddle.point;
    let seed_u: Vec<f64> = (0..2).map(|i| p[i] + spec.delta * vu[i]).collect();
    let seed_s: Vec<f64> = (0..2).map(|i| p[i] + spec.delta * vs[i]).collect();
    let unstable = shoot_branch(spec, &seed_u, true)?;
    let stable = shoot_branch(spec, &seed_s, false)?;

    let (omega, g_u, g_s) = match &spec.phase_rate {
        Some(r) => {
            let om = r(p);
            let grad = ScalarFieldHandle::finite_difference(2, {
                let r = r.clone();
                move |y: &[f64]| r(y)
            })
            .fd_gradient(p);
            let du: Vec<f64> = (0..2).map(|i| seed_u[i] - p[i]).collect();
            let ds: Vec<f64> = (0..2).map(|i| seed_s[i] - p[i]).collect();
            (om, dot(&grad, &du), dot(&grad, &ds))
        }
        None => (0.0, 0.0, 0.0),
    };
    let a = unstable.traj.final_state();
    let b = stable.traj.final_state();
    let mismatch = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let span = (-unstable.tau, stable.tau);

    let splice = Arc::new(Splice {
        saddle: p.clone(),
        lam_u: lu,
        lam_s: -ls,
        seed_u,
        seed_s,
        omega,
        g_u,
        g_s,
        has_phase: spec.phase_rate.is_some(),
        embed: spec.embed.clone(),
        unstable,
        stable,
    });
    let c_plus = -splice.stable.theta_end - omega * splice.stable.tau + g_s / splice.lam_s;
    let c_minus = -splice.unstable.theta_end + omega * splice.unstable.tau - g_u / splice.lam_u;
    let sp = splice.clone();
    let state_fn: StateFn = Arc::new(move |t, ph, out| {
        let mut planar = [0.0; 3];
        let rel = sp.eval(t, &mut planar);
        (sp.embed)(&planar[..2], ph + rel, out);
    });
    let sp = splice.clone();
    let rel_phase: PhaseFn = Arc::new(move |t| {
        let mut planar = [0.0; 3];
        sp.eval(t, &mut planar)
    });
    let mut anchor = vec![0.0; spec.full_dim];
    (spec.embed)(p, 0.0, &mut anchor);
    let df = sys.f.gradient(&anchor);
    let limit = LimitOrbitDesc {
        kind: LimitKind::FixedPointTimesCircle,
        f_value: sys.f.value(&anchor),
        df_on_orbit: df,
        anchor,
        tangent: spec.limit_tangent.clone(),
        omega,
        moves_with_epsilon: true,
        transverse: vec![0, 1],
        phase_index: spec.phase_index,
    };
    let mut orbit = HomoclinicOrbit {
        dim: spec.full_dim,
        phase0: 0.0,
        state_fn,
        rel_phase,
        limit,
        decay: DecayClass::Exponential { rate: lu.min(-ls) },
        rel_asymptotics: PhaseAsymptotics { omega, c_plus, c_minus },
        h0: 0.0,
        f0: 0.0,
        numeric_span: span,
        section_mismatch: mismatch,
        flow: None,
        oscillatory_tail: None,
    };
    let base = orbit.base_point();
    orbit.h0 = sys.h0.value(&base);
    orbit.f0 = sys.f.value(&base);
    let drift = orbit.drift(&sys.h0, 4001);
    if drift > 1e-8 {
        return Err(Error::Rejected(format!("energy drift {drift:e} along the shot loop")));
    }
    Ok(orbit)
}

// ---------------------------------------------------------------------------
// RTBP parabolic orbit

/// Unperturbed McGehee flow in (x, y, rho, s):
/// `x' = -x^3 y / 2`, `y' = -x^4 + x^6 rho^2`, `rho' = 0`, `s' = 1 - x^4 rho`.
pub fn mcgehee_field() -> VectorFieldHandle {
    VectorFieldHandle::autonomous(4, |u, o| {
        let (x, y, r) = (u[0], u[1], u[2]);
        let x2 = x * x;
        let x4 = x2 * x2;
        o[0] = -0.5 * x2 * x * y;
        o[1] = -x4 + x4 * x2 * r * r;
        o[2] = 0.0;
        o[3] = 1.0 - x4 * r;
    })
}

/// Energy `y^2/2 + x^4 rho^2 / 2 - x^2` of the unperturbed McGehee flow.
pub fn mcgehee_energy() -> ScalarFieldHandle {
    ScalarFieldHandle::with_gradient(
        4,
        |u| 0.5 * u[1] * u[1] + 0.5 * u[0].powi(4) * u[2] * u[2] - u[0] * u[0],
        |u, g| {
            g[0] = 2.0 * u[0].powi(3) * u[2] * u[2] - 2.0 * u[0];
            g[1] = u[1];
            g[2] = u[0].powi(4) * u[2];
            g[3] = 0.0;
        },
    )
}

struct Parabolic {
    fwd: Trajectory,
    bwd: Trajectory,
    t_cap: f64,
}

impl Parabolic {
    fn eval(&self, t: f64, out: &mut [f64]) {
        if t.abs() <= self.t_cap {
            if t >= 0.0 {
                self.fwd.interpolate_into(t, out)
            } else {
                self.bwd.interpolate_into(t, out)
            }
            return;
        }
        // leading-order escape: (x^-3)' = 3 sqrt(2)/2 on the zero level
        let end = if t > 0.0 { self.fwd.final_state() } else { self.bwd.final_state() };
        let dt = t.abs() - self.t_cap;
        let x = (end[0].powi(-3) + 1.5 * SQRT_2 * dt).powf(-1.0 / 3.0);
        out[0] = x;
        out[1] = t.signum() * SQRT_2 * x;
        out[2] = end[2];
        out[3] = end[3] + t.signum() * (dt - SQRT_2 * end[2] * (end[0] - x));
    }
}

/// Parabolic homoclinic orbit of the unperturbed McGehee flow on the zero
/// energy level, crossing `y = 0` at t = 0 with `x = sqrt(2)/rho0`.
pub fn parabolic_orbit_rtbp(rho0: f64, t_cap: f64, tol: Tolerance) -> Result<HomoclinicOrbit> {
    if !(rho0 > 0.0) || !rho0.is_finite() {
        return Err(Error::InvalidInput(format!("rho0 must be positive, got {rho0}")));
    }
    if !(t_cap > 0.0) {
        return Err(Error::InvalidInput(format!("time cap must be positive, got {t_cap}")));
    }
    let field = mcgehee_field();
    let start = vec![SQRT_2 / rho0, 0.0, rho0, 0.0];
    let fwd = integrate(&field, &start, 0.0, t_cap, tol)?;
    let bwd = integrate(&field, &start, 0.0, -t_cap, tol)?;
    let c_of = |e: &[f64], t: f64| e[3] - t - SQRT_2 * e[2] * e[0];
    let c_plus = c_of(fwd.final_state(), t_cap);
    let c_minus = {
        let e = bwd.final_state();
        e[3] + t_cap + SQRT_2 * e[2] * e[0]
    };
    let par = Arc::new(Parabolic { fwd, bwd, t_cap });
    let p = par.clone();
    let state_fn: StateFn = Arc::new(move |t, ph, out| {
        p.eval(t, out);
        out[3] += ph;
    });
    let p = par.clone();
    let rel_phase: PhaseFn = Arc::new(move |t| {
        let mut s = [0.0; 4];
        p.eval(t, &mut s);
        s[3]
    });
    let limit = LimitOrbitDesc {
        kind: LimitKind::DegenerateCircleAtInfinity,
        anchor: vec![0.0, 0.0, rho0, 0.0],
        tangent: vec![0.0, 0.0, 0.0, 1.0],
        omega: 1.0,
        f_value: rho0,
        df_on_orbit: vec![0.0, 0.0, 1.0, 0.0],
        moves_with_epsilon: false,
        transverse: vec![0, 1],
        phase_index: Some(3),
    };
    Ok(HomoclinicOrbit {
        dim: 4,
        phase0: 0.0,
        state_fn,
        rel_phase,
        limit,
        decay: DecayClass::Polynomial { exponent: 1.0 / 3.0 },
        rel_asymptotics: PhaseAsymptotics { omega: 1.0, c_plus, c_minus },
        h0: 0.0,
        f0: rho0,
        numeric_span: (-t_cap, t_cap),
        section_mismatch: 0.0,
        flow: Some(FlowSource { field, start, phase_index: 3, tol }),
        oscillatory_tail: None,
    })
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::models::{make_duffing_oscillator, make_duffing_planar};
    use crate::odeint::EventSpec;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn duffing_family_is_2pi_periodic(theta in -10.0f64..10.0, t in -30.0f64..30.0) {
            let m = make_duffing_oscillator(1.0, 0.5).unwrap();
            let a = m.family.orbit(theta).state(t);
            let b = m.family.orbit(theta + 2.0 * PI).state(t);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn family_orbits_conserve_both_integrals(alpha in 0.3f64..3.0, theta in 0.0f64..6.3) {
            let m = make_duffing_oscillator(alpha, 0.5).unwrap();
            let o = m.family.orbit(theta);
            prop_assert!(o.drift(&m.sys.h0, 401) <= 1e-9);
            prop_assert!(o.drift(&m.sys.f, 401) <= 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(4))]

        #[test]
        fn shooting_independent_of_offset(delta in 1e-9f64..1e-7) {
            let (sys, _) = make_duffing_planar().unwrap();
            let saddle = find_saddle(&sys.x0, &[0.1, 0.0]).unwrap();
            let spec = |d: f64| ShootSpec {
                planar: sys.x0.clone(),
                saddle: saddle.clone(),
                delta: d,
                section: EventSpec::new(-1, true, |z| z[1]),
                phase_rate: None,
                embed: Arc::new(|p, _ph, out| out.copy_from_slice(&p[..2])),
                full_dim: 2,
                phase_index: None,
                limit_tangent: vec![0.0, 0.0],
                t_cap: 100.0,
                tol: Tolerance::uniform(1e-13),
            };
            let a = shoot_homoclinic(&sys, &spec(delta)).unwrap();
            let b = shoot_homoclinic(&sys, &spec(0.5 * delta)).unwrap();
            let mut worst: f64 = 0.0;
            for k in -200..=200 {
                let t = 0.1 * k as f64;
                let (p, q) = (a.state(t), b.state(t));
                worst = worst.max((p[0] - q[0]).abs()).max((p[1] - q[1]).abs());
            }
            prop_assert!(worst <= 1e-6, "{}", worst);
        }
    }
}
