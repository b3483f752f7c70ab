//! Direct measurement of the splitting of stable and unstable manifolds of
//! the continued periodic orbit, as an oracle for `M`.

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamcore::{SystemDef, Transversal};
use crate::melnikov::{classify_convergence, melnikov_autonomous, TruncationPolicy};
use crate::odeint::{detect_events, integrate, integrate_until, EventSpec, Tolerance};
use crate::orbits::{fd_jacobian, null_vector, HomoclinicOrbit, LimitKind, LimitOrbitDesc};
use crate::roots;
use crate::util::{dot, norm, sub};

pub const EPS_MAX: f64 = 1e-2;

/// Hyperplane `y[index] = value`, crossed with the given sign of `y[index]'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicSection {
    pub index: usize,
    pub value: f64,
    pub direction: i8,
}

impl PeriodicSection {
    /// Section through the anchor, normal to the coordinate along which the
    /// limit orbit moves fastest.
    pub fn through_anchor(limit: &LimitOrbitDesc) -> Self {
        let (index, t) = limit
            .tangent
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .expect("non-empty tangent");
        Self { index, value: limit.anchor[index], direction: if *t >= 0.0 { 1 } else { -1 } }
    }
}

#[derive(Debug, Clone)]
pub struct PerturbedPeriodicOrbit {
    pub eps: f64,
    pub anchor: Vec<f64>,
    pub period: f64,
    pub multipliers: Vec<Complex<f64>>,
    pub energy: f64,
    pub return_residual: f64,
    pub energy_residual: f64,
    /// `(multiplier, unit eigenvector)` of the expanding and contracting
    /// directions.
    pub unstable: (f64, Vec<f64>),
    pub stable: (f64, Vec<f64>),
}

fn orbit_tol() -> Tolerance {
    Tolerance::new(1e-20, 1e-13)
}

/// First return to `section` after half the expected period.
fn first_return(sys: &SystemDef, eps: f64, x: &[f64], section: PeriodicSection, period_guess: f64) -> Result<(f64, Vec<f64>)> {
    let field = sys.perturbed_field(eps);
    let half = 0.5 * period_guess;
    let mid = integrate(&field, x, 0.0, half, orbit_tol())?;
    let (i, v) = (section.index, section.value);
    let ev = EventSpec::new(section.direction, true, move |y| y[i] - v);
    let run = integrate_until(&field, mid.final_state(), half, 2.0 * period_guess, orbit_tol(), &[ev])?;
    let hit = run.terminal.ok_or_else(|| Error::NoConvergence("no return to the section within two periods".into()))?;
    Ok((hit.time, hit.state))
}

/// Continues the hyperbolic periodic orbit of the unperturbed limit to the
/// perturbed system on the energy level `h0`.
pub fn continue_periodic_orbit(sys: &SystemDef, limit: &LimitOrbitDesc, eps: f64, h0: f64) -> Result<PerturbedPeriodicOrbit> {
    if limit.kind == LimitKind::DegenerateCircleAtInfinity {
        return Err(Error::Rejected("limit orbit is parabolic (degenerate circle at infinity), not hyperbolic".into()));
    }
    if !(eps.abs() <= EPS_MAX) {
        return Err(Error::InvalidInput(format!("|eps| must be at most {EPS_MAX}, got {eps}")));
    }
    if limit.omega == 0.0 {
        return Err(Error::Rejected("limit orbit is an equilibrium".into()));
    }
    let period_guess = 2.0 * std::f64::consts::PI / limit.omega.abs();
    let lambda = fd_jacobian(&sys.x0, &limit.anchor).complex_eigenvalues().iter().map(|z| z.re).fold(0.0, f64::max);
    if lambda * period_guess > 200.0 {
        return Err(Error::Rejected(format!("monodromy multiplier e^{:.0} is not representable", lambda * period_guess)));
    }
    let section = PeriodicSection::through_anchor(limit);
    let d = sys.dimension;
    let free: Vec<usize> = (0..d).filter(|&k| k != section.index).collect();
    let embed = |u: &[f64]| {
        let mut x = vec![section.value; d];
        free.iter().zip(u).for_each(|(&k, &v)| x[k] = v);
        x
    };
    let residual = |u: &[f64]| -> Result<Vec<f64>> {
        let x = embed(u);
        let (_, y) = first_return(sys, eps, &x, section, period_guess)?;
        let mut r: Vec<f64> = free.iter().map(|&k| y[k] - x[k]).collect();
        r.push(sys.perturbed_energy(&x, eps) - h0);
        Ok(r)
    };
    let mut u: Vec<f64> = free.iter().map(|&k| limit.anchor[k]).collect();
    let mut r = residual(&u)?;
    let mut converged = false;
    for _ in 0..25 {
        if norm(&r) <= 1e-12 {
            converged = true;
            break;
        }
        let h = 1e-7;
        let mut jac = DMatrix::zeros(r.len(), u.len());
        for c in 0..u.len() {
            let mut up = u.clone();
            let mut um = u.clone();
            up[c] += h;
            um[c] -= h;
            let (rp, rm) = (residual(&up)?, residual(&um)?);
            for k in 0..r.len() {
                jac[(k, c)] = (rp[k] - rm[k]) / (2.0 * h);
            }
        }
        let step = jac
            .svd(true, true)
            .solve(&DVector::from_vec(r.clone()), 1e-10)
            .map_err(|e| Error::NoConvergence(format!("continuation step: {e}")))?;
        let mut damp = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, s)| a - damp * s).collect();
            if let Ok(rt) = residual(&trial) {
                if norm(&rt) < norm(&r) || damp < 1e-3 {
                    u = trial;
                    r = rt;
                    break;
                }
            }
            damp *= 0.5;
            if damp < 1e-3 {
                return Err(Error::NoConvergence("continuation Newton diverged".into()));
            }
        }
    }
    if !converged && norm(&r) > 1e-10 {
        return Err(Error::NoConvergence(format!("continuation residual {:e}", norm(&r))));
    }
    let anchor = embed(&u);
    let (period, back) = first_return(sys, eps, &anchor, section, period_guess)?;
    let return_residual = norm(&sub(&back, &anchor));
    let energy = sys.perturbed_energy(&anchor, eps);

    let field = sys.perturbed_field(eps);
    let h = 1e-6;
    let mut mono = DMatrix::zeros(d, d);
    for c in 0..d {
        let mut xp = anchor.clone();
        let mut xm = anchor.clone();
        xp[c] += h;
        xm[c] -= h;
        let fp = integrate(&field, &xp, 0.0, period, orbit_tol())?;
        let fm = integrate(&field, &xm, 0.0, period, orbit_tol())?;
        for k in 0..d {
            mono[(k, c)] = (fp.final_state()[k] - fm.final_state()[k]) / (2.0 * h);
        }
    }
    let multipliers: Vec<Complex<f64>> = mono.complex_eigenvalues().iter().copied().collect();
    let real = |pick: fn(f64, f64) -> bool| {
        multipliers.iter().filter(|z| z.im.abs() <= 1e-8 * z.norm().max(1.0)).map(|z| z.re).reduce(|a, b| if pick(a.abs(), b.abs()) { a } else { b })
    };
    let mu_u = real(|a, b| a >= b).ok_or_else(|| Error::Rejected("no real expanding multiplier".into()))?;
    let mu_s = real(|a, b| a <= b).ok_or_else(|| Error::Rejected("no real contracting multiplier".into()))?;
    if mu_u.abs() <= 1.0 + 1e-6 || mu_s.abs() >= 1.0 - 1e-6 {
        return Err(Error::Rejected(format!("loss of hyperbolicity: multipliers {mu_u}, {mu_s}")));
    }
    let eigvec = |mu: f64| null_vector(&(&mono - DMatrix::identity(d, d) * mu));
    Ok(PerturbedPeriodicOrbit {
        eps,
        unstable: (mu_u, eigvec(mu_u)),
        stable: (mu_s, eigvec(mu_s)),
        anchor,
        period,
        multipliers,
        energy,
        return_residual,
        energy_residual: (energy - h0).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Stable,
    Unstable,
}

/// Point of the local manifold reached from the seed `anchor + delta e^s v`
/// at the transversal crossing nearest its base point, with the residual
/// offset along the second complement direction.
struct Leaf {
    point: Vec<f64>,
    offset: f64,
    distance: f64,
    time: f64,
}

/// Intersection of the stable or unstable manifold of `orbit` with the
/// transversal, on the arc nearest the transversal's base point.
pub fn manifold_leaf(sys: &SystemDef, orbit: &PerturbedPeriodicOrbit, side: Side, transversal: &Transversal, delta: f64) -> Result<Vec<f64>> {
    if !(1e-9..=1e-4).contains(&delta) {
        return Err(Error::InvalidInput(format!("seed distance {delta} outside [1e-9, 1e-4]")));
    }
    let d = sys.dimension;
    let base = &transversal.base_point;
    let field = sys.perturbed_field(orbit.eps);
    let (mu, mut v, dir) = match side {
        Side::Unstable => (orbit.unstable.0, orbit.unstable.1.clone(), 1.0),
        Side::Stable => (1.0 / orbit.stable.0, orbit.stable.1.clone(), -1.0),
    };
    if dot(&v, &sub(base, &orbit.anchor)) < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let width = mu.abs().ln() * if mu < 0.0 { 2.0 } else { 1.0 };
    let rate = width / orbit.period;
    let reach = norm(&sub(base, &orbit.anchor));
    let t_cap = (10.0 * reach / delta).ln() / rate + orbit.period;

    // complement split: c0 along the unperturbed flow through the base point
    let comp = transversal.complement_basis();
    let xb = sys.x0.eval(base, 0.0);
    let c0: Vec<f64> = {
        let mut c = vec![0.0; d];
        for b in &comp {
            let k = dot(&xb, b);
            c.iter_mut().zip(b).for_each(|(x, y)| *x += k * y);
        }
        let n = norm(&c);
        c.iter().map(|x| x / n).collect()
    };
    let c1: Option<Vec<f64>> = comp.iter().find_map(|b| {
        let mut e = b.clone();
        let k = dot(&e, &c0);
        e.iter_mut().zip(&c0).for_each(|(x, y)| *x -= k * y);
        let n = norm(&e);
        (n > 1e-6).then(|| e.iter().map(|x| x / n).collect())
    });

    let leaf = |s: f64| -> Result<Leaf> {
        let seed: Vec<f64> = orbit.anchor.iter().zip(&v).map(|(a, b)| a + delta * s.exp() * b).collect();
        let (bc, cc) = (base.clone(), c0.clone());
        let spec = EventSpec::new(1, false, move |y| dot(&sub(y, &bc), &cc));
        // branches that miss the loop may escape to infinity
        let (anc, far) = (orbit.anchor.clone(), 10.0 * (reach + norm(&orbit.anchor)));
        let escape = EventSpec::new(dir as i8, true, move |y| norm(&sub(y, &anc)) - far);
        let traj = integrate_until(&field, &seed, 0.0, dir * t_cap, orbit_tol(), &[escape])?.trajectory;
        // the first passage near the base point is the primary intersection;
        // later passages belong to secondary homoclinic points
        let mut hits: Vec<(f64, Vec<f64>, f64)> =
            detect_events(&traj, &spec).into_iter().map(|(t, y)| (t.abs(), y.clone(), norm(&sub(&y, base)))).collect();
        hits.sort_by(|a, b| a.0.total_cmp(&b.0));
        let pick = hits.iter().position(|h| h.2 <= 0.5 * reach).or_else(|| {
            (0..hits.len()).min_by(|&a, &b| hits[a].2.total_cmp(&hits[b].2))
        });
        let (tc, point, dist) = pick
            .map(|i| hits.swap_remove(i))
            .ok_or_else(|| Error::NoConvergence("manifold branch never crosses the transversal".into()))?;
        let best = (point, dist);
        let offset = c1.as_ref().map_or(0.0, |c| dot(&sub(&best.0, base), c));
        Ok(Leaf { point: best.0, offset, distance: best.1, time: tc })
    };

    if c1.is_none() {
        return Ok(leaf(0.0)?.point);
    }
    // one fundamental domain of seeds sweeps the full circle of phases
    let n = 32;
    let grid: Vec<f64> = (0..=n).map(|k| width * k as f64 / n as f64).collect();
    // seeds whose branch passes the base only against the event direction
    // have no crossing; the sweep skips them
    let leaves: Vec<Option<Leaf>> = grid
        .iter()
        .map(|&s| match leaf(s) {
            Ok(l) => Ok(Some(l)),
            Err(Error::NoConvergence(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, Leaf)> = None;
    for k in 0..n {
        let (Some(a), Some(b)) = (&leaves[k], &leaves[k + 1]) else { continue };
        if a.offset * b.offset > 0.0 || (a.distance.min(b.distance) > 0.5 * reach) {
            continue;
        }
        let mut failure = None;
        let mut g = |s: f64| match leaf(s) {
            Ok(l) => l.offset,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        };
        let s = roots::bisect_secant(&mut g, grid[k], grid[k + 1], a.offset, b.offset, 200);
        if let Some(e) = failure {
            return Err(e);
        }
        let l = leaf(s)?;
        // roots at jumps between crossing families are not on the plane
        if l.offset.abs() > 1e-9 * reach || l.distance > 0.5 * reach {
            continue;
        }
        // the primary intersection is reached on the first lap from the seed
        let lap = l.time + s / rate;
        if best.as_ref().is_none_or(|b| lap < b.0) {
            best = Some((lap, l));
        }
    }
    best.map(|(_, l)| l.point).ok_or_else(|| Error::NoConvergence("no manifold crossing near the transversal base point".into()))
}

/// The plane spanned by `grad F` and `grad H0` at the base point of `orbit`.
pub fn default_transversal(sys: &SystemDef, orbit: &HomoclinicOrbit) -> Result<Transversal> {
    let z0 = orbit.base_point();
    let mut tangent = vec![sys.x0.eval(&z0, 0.0)];
    if sys.dimension > 2 {
        let h = 1e-6;
        let p = orbit.with_phase(orbit.phase0() + h).state(0.0);
        let m = orbit.with_phase(orbit.phase0() - h).state(0.0);
        tangent.push(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect());
        Transversal::new(z0.clone(), vec![sys.f.gradient(&z0), sys.h0.gradient(&z0)], &tangent)
    } else {
        Transversal::new(z0.clone(), vec![sys.h0.gradient(&z0)], &tangent)
    }
}

#[derive(Debug, Clone)]
pub struct SplittingReport {
    pub base_point: Vec<f64>,
    pub eps: Vec<f64>,
    pub delta_f_over_eps: Vec<f64>,
    pub prediction: f64,
    pub prediction_error: f64,
    /// Slope of `log |dF/eps - M|` against `log eps`.
    pub order: f64,
    /// Largest `|H^eps - h0|` over all manifold points.
    pub energy_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplittingOptions {
    pub delta: f64,
    pub melnikov_tol: f64,
}

impl Default for SplittingOptions {
    fn default() -> Self {
        Self { delta: 1e-8, melnikov_tol: 1e-11 }
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

/// `(F(zeta_u) - F(zeta_s)) / eps` for each `eps`, against the Melnikov value
/// at the orbit's phase.
pub fn measure_splitting(
    sys: &SystemDef,
    orbit: &HomoclinicOrbit,
    eps: &[f64],
    transversal: Option<&Transversal>,
    opts: SplittingOptions,
) -> Result<SplittingReport> {
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("eps list must be positive and decreasing".into()));
    }
    let owned;
    let tr = match transversal {
        Some(t) => t,
        None => {
            owned = default_transversal(sys, orbit)?;
            &owned
        }
    };
    let h0 = orbit.h0;
    let per_eps = eps
        .par_iter()
        .map(|&e| -> Result<(f64, f64)> {
            let po = continue_periodic_orbit(sys, &orbit.limit, e, h0)?;
            let zu = manifold_leaf(sys, &po, Side::Unstable, tr, opts.delta)?;
            let zs = manifold_leaf(sys, &po, Side::Stable, tr, opts.delta)?;
            let df = sys.f.value(&zu) - sys.f.value(&zs);
            let hres = (sys.perturbed_energy(&zu, e) - h0).abs().max((sys.perturbed_energy(&zs, e) - h0).abs());
            Ok((df / e, hres))
        })
        .collect::<Result<Vec<_>>>()?;
    let class = classify_convergence(orbit, sys);
    let m = melnikov_autonomous(orbit, sys, &TruncationPolicy::for_class(class), opts.melnikov_tol)?;
    let ratios: Vec<f64> = per_eps.iter().map(|p| p.0).collect();
    let dev: Vec<f64> = ratios.iter().map(|r| (r - m.value).abs().max(f64::MIN_POSITIVE)).collect();
    Ok(SplittingReport {
        base_point: tr.base_point.clone(),
        eps: eps.to_vec(),
        order: if eps.len() >= 2 { loglog_slope(eps, &dev) } else { f64::NAN },
        delta_f_over_eps: ratios,
        prediction: m.value,
        prediction_error: m.error,
        energy_residual: per_eps.iter().map(|p| p.1).fold(0.0, f64::max),
    })
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::models::make_duffing_oscillator;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(4))]

        #[test]
        fn leaves_confined_to_energy_level(eps in 1e-4f64..1e-2, theta in 0.0f64..6.3) {
            let m = make_duffing_oscillator(1.0, 0.5).unwrap();
            let o = m.family.orbit(theta);
            let tr = default_transversal(&m.sys, &o).unwrap();
            let po = continue_periodic_orbit(&m.sys, &o.limit, eps, 0.5).unwrap();
            for side in [Side::Stable, Side::Unstable] {
                let z = manifold_leaf(&m.sys, &po, side, &tr, 1e-8).unwrap();
                prop_assert!((m.sys.perturbed_energy(&z, eps) - 0.5).abs() <= 1e-9);
            }
        }

        #[test]
        fn splitting_independent_of_transversal(tilt in -0.5f64..0.5) {
            let m = make_duffing_oscillator(1.0, 0.5).unwrap();
            let o = m.family.orbit(PI / 2.0);
            let base = default_transversal(&m.sys, &o).unwrap();
            let tangent = vec![m.sys.x0.eval(&base.base_point, 0.0)];
            // Tilt both spanning directions towards the loop tangent.
            let spans: Vec<Vec<f64>> =
                base.spanning_directions.iter().map(|v| v.iter().zip(&tangent[0]).map(|(a, b)| a + tilt * b).collect()).collect();
            let tilted = Transversal::new(base.base_point.clone(), spans, &tangent).unwrap();
            let opts = SplittingOptions::default();
            let a = measure_splitting(&m.sys, &o, &[1e-3], Some(&base), opts).unwrap();
            let b = measure_splitting(&m.sys, &o, &[1e-3], Some(&tilted), opts).unwrap();
            let (da, db) = (a.delta_f_over_eps[0], b.delta_f_over_eps[0]);
            prop_assert!((da - db).abs() <= 1e-2 * da.abs(), "{} {}", da, db);
        }
    }
}
