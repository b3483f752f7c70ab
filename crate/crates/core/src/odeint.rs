//! Adaptive Dormand–Prince 5(4) integration with dense output, event
//! location and an optional quadrature accumulator.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hamcore::VectorFieldHandle;
use crate::roots;

/// Absolute / relative tolerance pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }

    pub const fn uniform(tol: f64) -> Self {
        Self { abs: tol, rel: tol }
    }
}

// Dormand–Prince coefficients.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrated solution with the free 4th-order interpolant of each step.
///
/// Samples are stored with increasing time; a backward run is reversed on
/// completion and flagged through [`Trajectory::is_backward`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    // per segment: t_old, h, then 5*dim interpolation coefficients
    seg_t: Vec<f64>,
    seg_h: Vec<f64>,
    coef: Vec<f64>,
    tol: Tolerance,
    backward: bool,
}

impl Trajectory {
    fn empty(dim: usize, tol: Tolerance, backward: bool) -> Self {
        Self { dim, times: Vec::new(), states: Vec::new(), seg_t: Vec::new(), seg_h: Vec::new(), coef: Vec::new(), tol, backward }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn tolerance(&self) -> Tolerance {
        self.tol
    }

    pub fn is_backward(&self) -> bool {
        self.backward
    }

    pub fn t_min(&self) -> f64 {
        self.times[0]
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// State at the start of the integration (`t0`).
    pub fn initial_state(&self) -> &[f64] {
        if self.backward {
            self.state(self.len() - 1)
        } else {
            self.state(0)
        }
    }

    /// State at the end of the integration (`t1`, or the terminal event).
    pub fn final_state(&self) -> &[f64] {
        if self.backward {
            self.state(0)
        } else {
            self.state(self.len() - 1)
        }
    }

    pub fn final_time(&self) -> f64 {
        if self.backward {
            self.t_min()
        } else {
            self.t_max()
        }
    }

    fn segment_index(&self, t: f64) -> usize {
        let n = self.seg_h.len();
        if n <= 1 {
            return 0;
        }
        // segment i spans times[i]..times[i+1]
        match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        }
    }

    /// Dense-output state at `t`; `t` is clamped to the covered interval.
    pub fn interpolate_into(&self, t: f64, out: &mut [f64]) {
        if self.seg_h.is_empty() {
            out.copy_from_slice(self.state(0));
            return;
        }
        let t = t.clamp(self.t_min(), self.t_max());
        let i = self.segment_index(t);
        let d = self.dim;
        let th = (t - self.seg_t[i]) / self.seg_h[i];
        let th1 = 1.0 - th;
        let c = &self.coef[i * 5 * d..(i + 1) * 5 * d];
        for k in 0..d {
            out[k] = c[k] + th * (c[d + k] + th1 * (c[2 * d + k] + th * (c[3 * d + k] + th1 * c[4 * d + k])));
        }
    }

    pub fn interpolate(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.interpolate_into(t, &mut out);
        out
    }

    fn reverse(&mut self) {
        let d = self.dim;
        self.times.reverse();
        let n = self.times.len();
        let mut states = Vec::with_capacity(self.states.len());
        for i in (0..n).rev() {
            states.extend_from_slice(&self.states[i * d..(i + 1) * d]);
        }
        self.states = states;
        self.seg_t.reverse();
        self.seg_h.reverse();
        let m = self.seg_h.len();
        let mut coef = Vec::with_capacity(self.coef.len());
        for i in (0..m).rev() {
            coef.extend_from_slice(&self.coef[i * 5 * d..(i + 1) * 5 * d]);
        }
        self.coef = coef;
    }
}

/// Borrowed right-hand side `f(t, y, out)`.
pub type Rhs<'a> = &'a dyn Fn(f64, &[f64], &mut [f64]);

type EventFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Sign-change event on a scalar function of the state.
#[derive(Clone)]
pub struct EventSpec {
    pub function: EventFn,
    /// `+1`: only increasing crossings, `-1`: only decreasing, `0`: both.
    pub direction: i8,
    pub terminal: bool,
}

impl std::fmt::Debug for EventSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventSpec").field("direction", &self.direction).field("terminal", &self.terminal).finish()
    }
}

impl EventSpec {
    pub fn new<F>(direction: i8, terminal: bool, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { function: Arc::new(f), direction, terminal }
    }

    fn matches(&self, g_old: f64, g_new: f64, forward: bool) -> bool {
        let crossed = (g_old < 0.0 && g_new >= 0.0) || (g_old > 0.0 && g_new <= 0.0);
        if !crossed {
            return false;
        }
        // direction is with respect to increasing physical time
        let increasing = (g_new > g_old) == forward;
        match self.direction {
            0 => true,
            d if d > 0 => increasing,
            _ => !increasing,
        }
    }
}

/// Options for [`Dopri5`].
#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub tol: Tolerance,
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Options {
    pub fn new(tol: Tolerance) -> Self {
        Self { tol, h_init: None, h_max: f64::INFINITY, max_steps: 2_000_000 }
    }
}

/// Result of an integration that may stop on a terminal event.
#[derive(Debug, Clone)]
pub struct EventHit {
    pub time: f64,
    pub state: Vec<f64>,
    pub index: usize,
}

/// Output of [`Dopri5::run`].
#[derive(Debug, Clone)]
pub struct Run {
    pub trajectory: Trajectory,
    pub terminal: Option<EventHit>,
    /// Sum of local error estimates on the last state component, when
    /// the run carries a quadrature accumulator.
    pub accumulated_error: f64,
}

/// Dormand–Prince 5(4) stepper with PI step control. Holds scratch buffers;
/// use one instance per worker.
pub struct Dopri5 {
    opts: Options,
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    // Kahan compensation of the state update (current, candidate)
    comp: Vec<f64>,
    comp_new: Vec<f64>,
    ynew: Vec<f64>,
    err: Vec<f64>,
}

impl Dopri5 {
    pub fn new(opts: Options) -> Self {
        Self { opts, k: Default::default(), ytmp: Vec::new(), comp: Vec::new(), comp_new: Vec::new(), ynew: Vec::new(), err: Vec::new() }
    }

    fn resize(&mut self, d: usize) {
        for k in self.k.iter_mut() {
            k.resize(d, 0.0);
        }
        self.ytmp.resize(d, 0.0);
        self.ynew.resize(d, 0.0);
        self.err.resize(d, 0.0);
        self.comp.clear();
        self.comp.resize(d, 0.0);
        self.comp_new.resize(d, 0.0);
    }

    fn initial_step(&mut self, f: Rhs<'_>, t: f64, y: &[f64], dir: f64, span: f64) -> f64 {
        let d = y.len();
        let tol = self.opts.tol;
        f(t, y, &mut self.k[0]);
        let sk = |v: f64| tol.abs + tol.rel * v.abs();
        let mut dnf = 0.0;
        let mut dny = 0.0;
        for i in 0..d {
            dnf += (self.k[0][i] / sk(y[i])).powi(2);
            dny += (y[i] / sk(y[i])).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { 0.01 * (dny / dnf).sqrt() };
        h = h.min(self.opts.h_max).min(span);
        for i in 0..d {
            self.ytmp[i] = y[i] + dir * h * self.k[0][i];
        }
        f(t + dir * h, &self.ytmp, &mut self.k[1]);
        let mut der2 = 0.0;
        for i in 0..d {
            der2 += ((self.k[1][i] - self.k[0][i]) / sk(y[i])).powi(2);
        }
        let der2 = if d > 0 { (der2 / d as f64).sqrt() / h } else { 0.0 };
        let der12 = der2.max((dnf / d.max(1) as f64).sqrt());
        let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(0.2) };
        (100.0 * h).min(h1).min(self.opts.h_max).min(span)
    }

    /// Integrates from `t0` to `t1`, stopping early at the first terminal
    /// event. `acc_channel` marks the last component as a quadrature
    /// accumulator whose local error estimates are summed.
    pub fn run(
        &mut self,
        field: &VectorFieldHandle,
        y0: &[f64],
        t0: f64,
        t1: f64,
        events: &[EventSpec],
    ) -> Result<Run> {
        if field.dim() != y0.len() {
            return Err(Error::DimensionMismatch { expected: field.dim(), got: y0.len() });
        }
        self.run_fn(&|t, y, o| field.eval_into(t, y, o), y0, t0, t1, events, false)
    }

    /// As [`Dopri5::run`] on a borrowed right-hand side.
    pub fn run_fn(
        &mut self,
        f: Rhs<'_>,
        y0: &[f64],
        t0: f64,
        t1: f64,
        events: &[EventSpec],
        acc_channel: bool,
    ) -> Result<Run> {
        let d = y0.len();
        if t0 == t1 || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::InvalidInput(format!("invalid time span [{t0}, {t1}]")));
        }
        if y0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "initial state".into(), t: t0 });
        }
        self.resize(d);
        let tol = self.opts.tol;
        let forward = t1 > t0;
        let dir = if forward { 1.0 } else { -1.0 };
        let span = (t1 - t0).abs();

        let mut traj = Trajectory::empty(d, tol, !forward);
        traj.times.push(t0);
        traj.states.extend_from_slice(y0);
        let mut y = y0.to_vec();
        let mut t = t0;
        let mut h = match self.opts.h_init {
            Some(h) => h.abs().min(span),
            None => self.initial_step(f, t, &y, dir, span),
        };
        let mut g_old: Vec<f64> = events.iter().map(|e| (e.function)(&y)).collect();
        let mut acc_err = 0.0;
        let mut facold: f64 = 1e-4;
        let beta = 0.04;
        let expo1 = 0.2 - beta * 0.75;
        let safe = 0.9;
        let mut reject = false;
        let mut steps = 0usize;
        let mut terminal = None;
        f(t, &y, &mut self.k[0]);

        loop {
            if steps >= self.opts.max_steps {
                return Err(Error::MaxSteps { t });
            }
            steps += 1;
            let remaining = (t1 - t).abs();
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            let hs = dir * h;
            if h <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { t, state: y.clone() });
            }
            self.stages(f, t, &y, hs);
            let ok = self.ynew.iter().all(|v| v.is_finite()) && self.k[6].iter().all(|v| v.is_finite());
            if !ok {
                let h_new = h * 0.1;
                if h_new <= 1e-14 * t.abs().max(1.0) {
                    return Err(Error::BlowUp { t_lo: t, t_hi: t + hs });
                }
                h = h_new;
                reject = true;
                continue;
            }
            let mut err = 0.0;
            for i in 0..d {
                let sk = tol.abs + tol.rel * y[i].abs().max(self.ynew[i].abs());
                err += (self.err[i] / sk).powi(2);
            }
            let err = if d > 0 { (err / d as f64).sqrt() } else { 0.0 };
            let fac11 = err.powf(expo1);
            if err <= 1.0 {
                // accepted
                let mut fac = fac11 / facold.powf(beta);
                fac = (fac / safe).clamp(1.0 / 10.0, 5.0);
                let mut h_new = h / fac;
                facold = err.max(1e-4);
                if acc_channel {
                    acc_err += self.err[d - 1].abs();
                }
                // dense coefficients
                let base = traj.coef.len();
                traj.coef.resize(base + 5 * d, 0.0);
                {
                    let c = &mut traj.coef[base..];
                    for i in 0..d {
                        let ydiff = self.ynew[i] - y[i];
                        let bspl = hs * self.k[0][i] - ydiff;
                        c[i] = y[i];
                        c[d + i] = ydiff;
                        c[2 * d + i] = bspl;
                        c[3 * d + i] = ydiff - hs * self.k[6][i] - bspl;
                        c[4 * d + i] = hs
                            * (D1 * self.k[0][i]
                                + D3 * self.k[2][i]
                                + D4 * self.k[3][i]
                                + D5 * self.k[4][i]
                                + D6 * self.k[5][i]
                                + D7 * self.k[6][i]);
                    }
                }
                traj.seg_t.push(t);
                traj.seg_h.push(hs);
                let t_new = if last { t1 } else { t + hs };

                // events on this step
                let mut hit: Option<(usize, f64)> = None;
                for (ei, ev) in events.iter().enumerate() {
                    let g_new = (ev.function)(&self.ynew);
                    if ev.terminal && ev.matches(g_old[ei], g_new, forward) {
                        let seg = traj.seg_h.len() - 1;
                        let te = polish_on_segment(&traj, seg, t, t_new, ev, g_old[ei], g_new);
                        let better = match hit {
                            None => true,
                            Some((_, tb)) => (te - t).abs() < (tb - t).abs(),
                        };
                        if better {
                            hit = Some((ei, te));
                        }
                    }
                    g_old[ei] = g_new;
                }
                if let Some((ei, te)) = hit {
                    let mut ye = vec![0.0; d];
                    let seg = traj.seg_h.len() - 1;
                    eval_segment(&traj, seg, te, &mut ye);
                    traj.times.push(te);
                    traj.states.extend_from_slice(&ye);
                    terminal = Some(EventHit { time: te, state: ye, index: ei });
                    break;
                }

                traj.times.push(t_new);
                traj.states.extend_from_slice(&self.ynew);
                y.copy_from_slice(&self.ynew);
                std::mem::swap(&mut self.comp, &mut self.comp_new);
                t = t_new;
                self.k.swap(0, 6);
                if last {
                    break;
                }
                if reject {
                    h_new = h_new.min(h);
                }
                reject = false;
                h = h_new.min(self.opts.h_max);
            } else {
                h /= (fac11 / safe).min(5.0);
                reject = true;
            }
        }
        if !forward {
            traj.reverse();
        }
        Ok(Run { trajectory: traj, terminal, accumulated_error: acc_err })
    }

    fn stages(&mut self, f: Rhs<'_>, t: f64, y: &[f64], h: f64) {
        let d = y.len();
        let k = &mut self.k;
        let yt = &mut self.ytmp;
        for i in 0..d {
            yt[i] = y[i] + h * A21 * k[0][i];
        }
        let (k0, rest) = k.split_at_mut(1);
        f(t + C2 * h, yt, &mut rest[0]);
        for i in 0..d {
            yt[i] = y[i] + h * (A31 * k0[0][i] + A32 * rest[0][i]);
        }
        f(t + C3 * h, yt, &mut rest[1]);
        for i in 0..d {
            yt[i] = y[i] + h * (A41 * k0[0][i] + A42 * rest[0][i] + A43 * rest[1][i]);
        }
        f(t + C4 * h, yt, &mut rest[2]);
        for i in 0..d {
            yt[i] = y[i] + h * (A51 * k0[0][i] + A52 * rest[0][i] + A53 * rest[1][i] + A54 * rest[2][i]);
        }
        f(t + C5 * h, yt, &mut rest[3]);
        for i in 0..d {
            yt[i] = y[i] + h * (A61 * k0[0][i] + A62 * rest[0][i] + A63 * rest[1][i] + A64 * rest[2][i] + A65 * rest[3][i]);
        }
        f(t + h, yt, &mut rest[4]);
        for i in 0..d {
            let inc = h * (A71 * k0[0][i] + A73 * rest[1][i] + A74 * rest[2][i] + A75 * rest[3][i] + A76 * rest[4][i])
                - self.comp[i];
            self.ynew[i] = y[i] + inc;
            self.comp_new[i] = (self.ynew[i] - y[i]) - inc;
        }
        f(t + h, &self.ynew, &mut rest[5]);
        for i in 0..d {
            self.err[i] = h
                * (E1 * k0[0][i] + E3 * rest[1][i] + E4 * rest[2][i] + E5 * rest[3][i] + E6 * rest[4][i] + E7 * rest[5][i]);
        }
    }
}

fn eval_segment(traj: &Trajectory, seg: usize, t: f64, out: &mut [f64]) {
    let d = traj.dim;
    let th = (t - traj.seg_t[seg]) / traj.seg_h[seg];
    let th1 = 1.0 - th;
    let c = &traj.coef[seg * 5 * d..(seg + 1) * 5 * d];
    for k in 0..d {
        out[k] = c[k] + th * (c[d + k] + th1 * (c[2 * d + k] + th * (c[3 * d + k] + th1 * c[4 * d + k])));
    }
}

fn polish_on_segment(traj: &Trajectory, seg: usize, ta: f64, tb: f64, ev: &EventSpec, ga: f64, gb: f64) -> f64 {
    let mut buf = vec![0.0; traj.dim];
    let mut g = |t: f64| {
        eval_segment(traj, seg, t, &mut buf);
        (ev.function)(&buf)
    };
    roots::bisect_secant(&mut g, ta, tb, ga, gb, 60)
}

/// Integrates `field` from `t0` to `t1` starting at `start`.
pub fn integrate(field: &VectorFieldHandle, start: &[f64], t0: f64, t1: f64, tol: Tolerance) -> Result<Trajectory> {
    Ok(Dopri5::new(Options::new(tol)).run(field, start, t0, t1, &[])?.trajectory)
}

/// Integrates until the first terminal event or `t1`.
pub fn integrate_until(
    field: &VectorFieldHandle,
    start: &[f64],
    t0: f64,
    t1: f64,
    tol: Tolerance,
    events: &[EventSpec],
) -> Result<Run> {
    Dopri5::new(Options::new(tol)).run(field, start, t0, t1, events)
}

/// Quadrature along a trajectory: the state is augmented by an accumulator
/// `m' = integrand(y, t)`, `m(t0) = 0`.
#[derive(Debug, Clone)]
pub struct QuadratureRun {
    /// Trajectory of the original state (accumulator stripped).
    pub trajectory: Trajectory,
    pub value: f64,
    pub error_estimate: f64,
}

type IntegrandRef<'a> = &'a dyn Fn(&[f64], f64) -> f64;

pub fn integrate_with_quadrature(
    field: &VectorFieldHandle,
    start: &[f64],
    t0: f64,
    t1: f64,
    tol: Tolerance,
    integrand: IntegrandRef<'_>,
) -> Result<QuadratureRun> {
    let d = field.dim();
    if start.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: start.len() });
    }
    let aug = |t: f64, y: &[f64], out: &mut [f64]| {
        field.eval_into(t, &y[..d], &mut out[..d]);
        out[d] = integrand(&y[..d], t);
    };
    let mut y0 = start.to_vec();
    y0.push(0.0);
    let run = Dopri5::new(Options::new(tol)).run_fn(&aug, &y0, t0, t1, &[], true)?;
    let full = run.trajectory;
    let value = full.final_state()[d];
    Ok(QuadratureRun { trajectory: strip_last(&full), value, error_estimate: run.accumulated_error })
}

/// One-dimensional quadrature of `f(t)` over `[a, b]` through the
/// accumulator channel (empty state). Returns `(value, error_estimate)`.
pub fn quadrature(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: Tolerance) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let g = |_: &[f64], t: f64| f(t);
    let run = integrate_with_quadrature(&VectorFieldHandle::zero(0), &[], a, b, tol, &g)?;
    Ok((run.value, run.error_estimate))
}

fn strip_last(t: &Trajectory) -> Trajectory {
    let d = t.dim - 1;
    let n = t.len();
    let mut states = Vec::with_capacity(n * d);
    for i in 0..n {
        states.extend_from_slice(&t.state(i)[..d]);
    }
    let m = t.seg_h.len();
    let mut coef = Vec::with_capacity(m * 5 * d);
    for s in 0..m {
        let c = &t.coef[s * 5 * t.dim..(s + 1) * 5 * t.dim];
        for j in 0..5 {
            coef.extend_from_slice(&c[j * t.dim..j * t.dim + d]);
        }
    }
    Trajectory {
        dim: d,
        times: t.times.clone(),
        states,
        seg_t: t.seg_t.clone(),
        seg_h: t.seg_h.clone(),
        coef,
        tol: t.tol,
        backward: t.backward,
    }
}

/// All crossings of `spec` along `traj`, located on the dense interpolant.
pub fn detect_events(traj: &Trajectory, spec: &EventSpec) -> Vec<(f64, Vec<f64>)> {
    let mut out = Vec::new();
    if traj.len() < 2 {
        return out;
    }
    let mut g_prev = (spec.function)(traj.state(0));
    for i in 0..traj.len() - 1 {
        let g_next = (spec.function)(traj.state(i + 1));
        // stored increasing in time, so "forward" is always true here
        if spec.matches(g_prev, g_next, true) {
            let ta = traj.time(i);
            let tb = traj.time(i + 1);
            let seg = i.min(traj.seg_h.len() - 1);
            let te = polish_on_segment(traj, seg, ta, tb, spec, g_prev, g_next);
            let mut s = vec![0.0; traj.dim];
            eval_segment(traj, seg, te, &mut s);
            out.push((te, s));
        }
        g_prev = g_next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn oscillator() -> VectorFieldHandle {
        VectorFieldHandle::autonomous(2, |y, o| {
            o[0] = y[1];
            o[1] = -y[0];
        })
    }

    fn duffing() -> VectorFieldHandle {
        VectorFieldHandle::autonomous(2, |z, o| {
            o[0] = z[1];
            o[1] = z[0] - z[0] * z[0];
        })
    }

    fn sech2(x: f64) -> f64 {
        1.0 / x.cosh().powi(2)
    }

    #[test]
    fn oscillator_period() {
        let tr = integrate(&oscillator(), &[1.0, 0.0], 0.0, 2.0 * PI, Tolerance::uniform(1e-12)).unwrap();
        let y = tr.final_state();
        assert!((y[0] - 1.0).abs() < 1e-9 && y[1].abs() < 1e-9, "{y:?}");
    }

    #[test]
    fn duffing_closed_form() {
        // errors grow like e^t along the outgoing branch; needs the
        // compensated update and a roundoff-level tolerance
        let tr = integrate(&duffing(), &[1.5, 0.0], 0.0, 20.0, Tolerance::uniform(1e-16)).unwrap();
        let z1 = tr.final_state()[0];
        assert!((z1 - 1.5 * sech2(10.0)).abs() < 1e-8, "{z1}");
    }

    #[test]
    fn zero_field_is_constant() {
        let tr = integrate(&VectorFieldHandle::zero(3), &[1.0, 2.0, 3.0], 0.0, 5.0, Tolerance::uniform(1e-10)).unwrap();
        for i in 0..tr.len() {
            assert_eq!(tr.state(i), &[1.0, 2.0, 3.0]);
        }
    }

    #[test]
    fn dense_output_matches_samples_and_solution() {
        let tr = integrate(&oscillator(), &[1.0, 0.0], 0.0, 10.0, Tolerance::uniform(1e-12)).unwrap();
        for i in 0..tr.len() {
            let y = tr.interpolate(tr.time(i));
            assert!((y[0] - tr.state(i)[0]).abs() < 1e-12 && (y[1] - tr.state(i)[1]).abs() < 1e-12);
        }
        for k in 0..200 {
            let t = 10.0 * k as f64 / 199.0;
            let y = tr.interpolate(t);
            assert!((y[0] - t.cos()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn backward_run_is_stored_increasing() {
        let tr = integrate(&oscillator(), &[1.0, 0.0], 0.0, -3.0, Tolerance::uniform(1e-12)).unwrap();
        assert!(tr.is_backward());
        assert!(tr.times().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(tr.initial_state(), &[1.0, 0.0]);
        let y = tr.interpolate(-1.0);
        assert!((y[0] - (-1.0f64).cos()).abs() < 1e-9);
        assert!((y[1] - 1.0f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn forward_backward_round_trip() {
        let tol = Tolerance::uniform(1e-11);
        let a = integrate(&duffing(), &[0.4, 0.1], 0.0, 7.0, tol).unwrap();
        let b = integrate(&duffing(), a.final_state(), 7.0, 0.0, tol).unwrap();
        let y = b.final_state();
        assert!((y[0] - 0.4).abs() < 1e-9 && (y[1] - 0.1).abs() < 1e-9, "{y:?}");
    }

    #[test]
    fn tolerance_ladder_is_monotone() {
        let mut last = f64::INFINITY;
        for k in 6..=12 {
            let tol = 10f64.powi(-k);
            let tr = integrate(&oscillator(), &[1.0, 0.0], 0.0, 10.0, Tolerance::uniform(tol)).unwrap();
            let y = tr.final_state();
            let e = (y[0] - 10f64.cos()).abs().max((y[1] + 10f64.sin()).abs());
            assert!(e <= last * 1.0000001 || e < 1e-13, "tol {tol}: {e} > {last}");
            last = e;
        }
    }

    #[test]
    fn quadrature_trivial() {
        let (v, _) = quadrature(&|_t| 0.0, 0.0, 3.0, Tolerance::uniform(1e-12)).unwrap();
        assert_eq!(v, 0.0);
        let (v, _) = quadrature(&|_t| 1.0, 0.0, 5.0, Tolerance::uniform(1e-12)).unwrap();
        assert!((v - 5.0).abs() < 1e-12);
        let (v, _) = quadrature(&|t: f64| t.sin(), PI, 0.0, Tolerance::uniform(1e-12)).unwrap();
        assert!((v + 2.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn quadrature_with_state() {
        // integral of y0 = cos t over [0, pi/2] along the oscillator
        let run = integrate_with_quadrature(
            &oscillator(),
            &[1.0, 0.0],
            0.0,
            PI / 2.0,
            Tolerance::uniform(1e-12),
            &|y: &[f64], _t| y[0],
        )
        .unwrap();
        assert!((run.value - 1.0).abs() < 1e-10);
        assert_eq!(run.trajectory.dim(), 2);
    }

    #[test]
    fn events_on_oscillator() {
        let tr = integrate(&oscillator(), &[1.0, 0.0], 0.0, 2.0 * PI, Tolerance::uniform(1e-12)).unwrap();
        let ev = EventSpec::new(0, false, |y| y[0]);
        let hits = detect_events(&tr, &ev);
        assert_eq!(hits.len(), 2);
        assert!((hits[0].0 - PI / 2.0).abs() < 1e-9);
        assert!((hits[1].0 - 1.5 * PI).abs() < 1e-9);
        for (_, s) in &hits {
            assert!(s[0].abs() <= 1e-10);
        }
        let dec = EventSpec::new(-1, false, |y| y[0]);
        assert_eq!(detect_events(&tr, &dec).len(), 1);
        let none = EventSpec::new(0, false, |_| 1.0);
        assert!(detect_events(&tr, &none).is_empty());
    }

    #[test]
    fn terminal_event_stops_run() {
        let ev = EventSpec::new(-1, true, |y| y[0]);
        let run = integrate_until(&oscillator(), &[1.0, 0.0], 0.0, 100.0, Tolerance::uniform(1e-12), &[ev]).unwrap();
        let hit = run.terminal.unwrap();
        assert!((hit.time - PI / 2.0).abs() < 1e-9);
        assert!((run.trajectory.final_time() - PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn homoclinic_section_crossing() {
        let t0 = -10.0f64;
        let z1 = 1.5 * sech2(t0 / 2.0);
        let z2 = -1.5 * sech2(t0 / 2.0) * (t0 / 2.0).tanh();
        let tr = integrate(&duffing(), &[z1, z2], t0, 5.0, Tolerance::uniform(1e-13)).unwrap();
        let hits = detect_events(&tr, &EventSpec::new(0, false, |z| z[1]));
        assert_eq!(hits.len(), 1);
        assert!(hits[0].0.abs() < 1e-9, "{}", hits[0].0);
    }

    #[test]
    fn blow_up_is_reported() {
        let f = VectorFieldHandle::autonomous(1, |y, o| o[0] = y[0] * y[0]);
        let r = integrate(&f, &[1.0], 0.0, 2.0, Tolerance::uniform(1e-10));
        assert!(matches!(r, Err(Error::BlowUp { .. }) | Err(Error::StepUnderflow { .. })), "{r:?}");
    }
}
