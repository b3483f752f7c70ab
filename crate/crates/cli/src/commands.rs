//! Command execution. Everything is computed before any output is written.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use melnikov_core::hamcore::SystemDef;
use melnikov_core::melnikov::{
    classify_convergence, melnikov_autonomous, melnikov_derivative, spread_of, MelnikovEvaluation, TruncationPolicy,
};
use melnikov_core::models::{build_model, Model};
use melnikov_core::orbits::HomoclinicOrbit;
use melnikov_core::splitting::{measure_splitting, SplittingOptions};
use melnikov_core::zerofind::{find_zeros, margin_report, scan, ScanResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{Command, ConfigError, RunConfig};
use crate::output::{CertificateRow, Field, Record, Report};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] melnikov_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl RunError {
    /// 2 for numerical non-convergence, 1 for everything the user can fix.
    pub fn exit_code(&self) -> i32 {
        use melnikov_core::Error as E;
        match self {
            RunError::Core(E::NoConvergence(_) | E::MaxSteps { .. } | E::StepUnderflow { .. } | E::BlowUp { .. } | E::NonFinite { .. }) => 2,
            _ => 1,
        }
    }
}

/// A finished report and whether every evaluation in it converged.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub converged: bool,
}

/// Step of the central difference printed next to the derivative.
const CD_STEP: f64 = 1e-3;
/// Derivative magnitudes below this are not compared relatively.
const CD_FLOOR: f64 = 1e-3;
/// Random phases at which `diagnostics` audits conservation.
const DRIFT_CHECKS: usize = 4;

pub fn execute(cfg: &RunConfig) -> Result<Outcome, RunError> {
    cfg.validate()?;
    let model = build_model(&cfg.model)?;
    let mut meta = base_meta(cfg, &model);
    let (records, certificates, converged) = match cfg.command {
        Command::Scan => {
            let s = scan(&model.family, &model.sys, cfg.n, cfg.tol)?;
            scan_meta(&mut meta, &s);
            (scan_records(&s), Vec::new(), s.converged)
        }
        Command::Zeros => zeros(cfg, &model, &mut meta)?,
        Command::Derivative => derivative(cfg, &model, &mut meta)?,
        Command::VerifySplitting => splitting(cfg, &model, &mut meta)?,
        Command::Diagnostics => diagnostics(cfg, &model, &mut meta)?,
    };
    meta.insert("converged".into(), json!(converged));
    Ok(Outcome { report: Report { meta, records, certificates }, converged })
}

fn base_meta(cfg: &RunConfig, model: &Model) -> BTreeMap<String, Value> {
    let params: BTreeMap<&str, f64> =
        cfg.model.id.defaults().iter().map(|(k, d)| (*k, cfg.model.params.get(*k).copied().unwrap_or(*d))).collect();
    let mut meta = BTreeMap::new();
    meta.insert("command".into(), json!(cfg.command.as_str()));
    meta.insert("model".into(), json!(cfg.model.id.as_str()));
    meta.insert("params".into(), json!(params));
    meta.insert("N".into(), json!(cfg.n));
    meta.insert("tol".into(), json!(cfg.tol));
    meta.insert("seed".into(), json!(cfg.seed));
    meta.insert("h0".into(), json!(model.h0));
    meta.insert("class".into(), json!(classify_convergence(&model.family.orbit(0.0), &model.sys).label()));
    meta
}

fn record(e: &MelnikovEvaluation) -> Record {
    Record {
        phase: e.phase,
        m: e.value,
        err: e.error,
        class: e.convergence.label().to_string(),
        t: e.t,
        t_star: e.t_star,
        extra: BTreeMap::new(),
    }
}

fn scan_records(s: &ScanResult) -> Vec<Record> {
    s.grid.iter().zip(&s.values).map(|(ph, e)| Record { phase: *ph, ..record(e) }).collect()
}

fn scan_meta(meta: &mut BTreeMap<String, Value>, s: &ScanResult) {
    meta.insert("max_abs_M".into(), json!(s.max_abs()));
    meta.insert("unconverged_nodes".into(), json!(s.values.iter().filter(|e| !e.converged).count()));
}

type Parts = (Vec<Record>, Vec<CertificateRow>, bool);

fn zeros(cfg: &RunConfig, model: &Model, meta: &mut BTreeMap<String, Value>) -> Result<Parts, RunError> {
    let s = scan(&model.family, &model.sys, cfg.n, cfg.tol)?;
    scan_meta(meta, &s);
    if !s.converged {
        return Ok((scan_records(&s), Vec::new(), false));
    }
    let z = find_zeros(&s, &model.family, &model.sys, cfg.tol)?;
    let certs: Vec<CertificateRow> = z
        .certificates
        .iter()
        .map(|c| CertificateRow {
            phase: c.phase,
            residual: c.residual,
            derivative: c.derivative,
            value_error: c.value_error,
            derivative_error: c.derivative_error,
            margin: c.margin,
            method: c.method.as_str().to_string(),
            bracket: [c.bracket.0, c.bracket.1],
        })
        .collect();
    let uncertified: Vec<Value> =
        z.uncertified.iter().map(|u| json!({"phase": u.phase, "residual": u.residual, "reason": u.reason})).collect();
    meta.insert("uncertified".into(), Value::Array(uncertified));
    meta.insert("min_abs_M_away_from_zeros".into(), json!(margin_report(&z.certificates, &s).min_abs_away));
    Ok((scan_records(&s), certs, true))
}

fn m_plain(model: &Model, phase: f64, tol: f64) -> Result<MelnikovEvaluation, RunError> {
    let orbit = model.family.orbit(phase);
    let policy = TruncationPolicy::for_class(classify_convergence(&orbit, &model.sys));
    Ok(melnikov_autonomous(&orbit, &model.sys, &policy, tol)?)
}

fn derivative(cfg: &RunConfig, model: &Model, meta: &mut BTreeMap<String, Value>) -> Result<Parts, RunError> {
    let grid: Vec<f64> = (0..cfg.n).map(|i| 2.0 * PI * i as f64 / cfg.n as f64).collect();
    let rows = grid
        .par_iter()
        .map(|&ph| -> Result<(Record, bool, Option<f64>), RunError> {
            let m = m_plain(model, ph, cfg.tol)?;
            let d = melnikov_derivative(&model.family, &model.sys, ph, cfg.tol)?;
            let p = m_plain(model, ph + CD_STEP, cfg.tol)?;
            let q = m_plain(model, ph - CD_STEP, cfg.tol)?;
            let cd = (p.value - q.value) / (2.0 * CD_STEP);
            let rel = (d.value.abs() > CD_FLOOR).then(|| (d.value - cd).abs() / cd.abs());
            let ok = m.converged && d.converged && p.converged && q.converged;
            let r = Record { phase: ph, ..record(&m) }
                .with("dM", Field::Num(d.value))
                .with("dM_err", Field::Num(d.error))
                .with("dM_cd", Field::Num(cd));
            Ok((r, ok, rel))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let worst = rows.iter().filter_map(|r| r.2).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    meta.insert("cd_step".into(), json!(CD_STEP));
    meta.insert("cd_floor".into(), json!(CD_FLOOR));
    meta.insert("max_rel_dM_vs_cd".into(), json!(worst));
    let converged = rows.iter().all(|r| r.1);
    Ok((rows.into_iter().map(|r| r.0).collect(), Vec::new(), converged))
}

fn splitting(cfg: &RunConfig, model: &Model, meta: &mut BTreeMap<String, Value>) -> Result<Parts, RunError> {
    let orbit = model.family.orbit(cfg.phase);
    let opts = SplittingOptions { melnikov_tol: cfg.tol, ..SplittingOptions::default() };
    let rep = measure_splitting(&model.sys, &orbit, &cfg.eps, None, opts)?;
    let m = m_plain(model, cfg.phase, cfg.tol)?;
    let records = rep
        .eps
        .iter()
        .zip(&rep.delta_f_over_eps)
        .map(|(e, r)| {
            Record { phase: cfg.phase, ..record(&m) }
                .with("eps", Field::Num(*e))
                .with("dF_over_eps", Field::Num(*r))
                .with("deviation", Field::Num((r - rep.prediction).abs()))
        })
        .collect();
    meta.insert("phase".into(), json!(cfg.phase));
    meta.insert("prediction".into(), json!(rep.prediction));
    meta.insert("order".into(), json!(rep.order));
    meta.insert("energy_residual".into(), json!(rep.energy_residual));
    meta.insert("base_point".into(), json!(rep.base_point));
    Ok((records, Vec::new(), m.converged))
}

fn trace(orbit: &HomoclinicOrbit, sys: &SystemDef, policy: TruncationPolicy, name: &str, tol: f64) -> Result<(Vec<Record>, f64, f64), RunError> {
    let full = TruncationPolicy { stop_early: false, ..policy };
    let e = melnikov_autonomous(orbit, sys, &full, tol)?;
    let records = e
        .partials
        .iter()
        .map(|&(j, v)| -> Result<Record, RunError> {
            let pair = full.pair(orbit, j)?;
            Ok(Record { m: v, t: pair.t, t_star: pair.t_star, ..record(&e) }
                .with("sequence", Field::Text(name.to_string()))
                .with("j", Field::Int(j as i64)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((records, spread_of(&e.partials), e.value))
}

fn diagnostics(cfg: &RunConfig, model: &Model, meta: &mut BTreeMap<String, Value>) -> Result<Parts, RunError> {
    let orbit = model.family.orbit(cfg.phase);
    let class = classify_convergence(&orbit, &model.sys);
    let mut records = Vec::new();
    let mut converged = true;
    meta.insert("phase".into(), json!(cfg.phase));

    let plain = if class.is_absolute() {
        let e = melnikov_autonomous(&orbit, &model.sys, &TruncationPolicy::plain(), cfg.tol)?;
        converged &= e.converged;
        records.push(record(&e).with("sequence", Field::Text("plain".into())).with("j", Field::Int(0)));
        meta.insert("tail_bound".into(), json!(e.tail_bound));
        meta.insert("tail_target".into(), json!(0.5 * cfg.tol));
        meta.insert("tail_ok".into(), json!(e.tail_bound <= 0.5 * cfg.tol));
        meta.insert("quad_error".into(), json!(e.quad_error));
        Some(e.value)
    } else {
        None
    };

    let anchor = orbit.phase0();
    let matched = match trace(&orbit, &model.sys, TruncationPolicy::matched(anchor), "matched", cfg.tol) {
        Ok(t) => Some(t),
        // zero frequency or algebraic decay: no matched sequence exists
        Err(RunError::Core(melnikov_core::Error::Rejected(why))) => {
            meta.insert("traces".into(), json!(format!("not applicable: {why}")));
            None
        }
        Err(e) => return Err(e),
    };
    if let Some((m, m_spread, m_value)) = matched {
        let (w, w_spread, _) = trace(&orbit, &model.sys, TruncationPolicy::mismatched(anchor + 0.5 * PI), "mismatched", cfg.tol)?;
        records.extend(m);
        records.extend(w);
        meta.insert("matched_spread".into(), json!(m_spread));
        meta.insert("mismatched_spread".into(), json!(w_spread));
        meta.insert("spread_ratio".into(), json!(w_spread / m_spread));
        if let Some(p) = plain {
            meta.insert("matched_minus_plain".into(), json!(m_value - p));
            meta.insert("matched_agrees_with_plain".into(), json!((m_value - p).abs() <= cfg.tol));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let phases: Vec<f64> = (0..DRIFT_CHECKS).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let drifts: Vec<(f64, f64)> = phases
        .par_iter()
        .map(|&ph| {
            let o = model.family.orbit(ph);
            (o.drift(&model.sys.h0, 2001), o.drift(&model.sys.f, 2001))
        })
        .collect();
    meta.insert("drift_phases".into(), json!(phases));
    meta.insert("drift_h0".into(), json!(drifts.iter().map(|d| d.0).collect::<Vec<_>>()));
    meta.insert("drift_f".into(), json!(drifts.iter().map(|d| d.1).collect::<Vec<_>>()));
    Ok((records, Vec::new(), converged))
}
