//! `validate` and `grad-check`.

use std::fmt::Write as _;

use risfair::asymptotics::{
    empirical_resolvent_trace, quadratic_form_concentration, resolvent_trace_equivalent, solve_dbar, solve_taubar,
    validate_theorem1, validate_theorem2, ConvergenceReport, Dims, GramSpectrum,
};
use risfair::linalg::{c, CMatrix};
use risfair::model::ChannelStatistics;
use risfair::parallel::{map_indexed, with_threads};
use risfair::phaseopt::{check_gradient, grad_taubar_phases, GradientCheck, PhaseVector};
use risfair::power::alpha0;
use risfair::rng::{stream_rng, Stream};
use risfair::schemes::config_caps;

use crate::config::ExperimentConfig;
use crate::output::fmt_num;
use crate::simulate::execution;

const CLOSED_FORM_TOL: f64 = 1e-9;
/// Stream key reserved for validation draws outside the convergence sweeps.
const AUX_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    fn error(name: &str, e: impl std::fmt::Display) -> Self {
        Self::new(name, false, format!("error: {e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{} {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let failed = self.failed().len();
        let _ = writeln!(s, "summary: {} passed, {} failed", self.checks.len() - failed, failed);
        s
    }
}

/// Test hook: perturbs the analytic gradient so the oracle must reject it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradientFault {
    pub relative: f64,
}

pub fn validate(cfg: &ExperimentConfig, fault: GradientFault) -> ValidationReport {
    with_threads(cfg.threads, || {
        let mut report = ValidationReport::default();
        report.checks.extend(closed_form_checks());
        report.checks.extend(convergence_checks(cfg));
        report.checks.push(resolvent_check(cfg));
        report.checks.push(quadratic_form_check(cfg));
        report.checks.push(gradient_summary(cfg, fault));
        report
    })
}

fn identity_spectrum(m: usize) -> GramSpectrum {
    GramSpectrum::from_eigenvalues(vec![1.0; m], m)
}

fn closed_form_checks() -> Vec<Check> {
    let (k, m) = (4, 8);
    let spectrum = identity_spectrum(m);
    // sigma^2 = 1 after the 1/K scaling of the noise power
    let noise = k as f64;
    let mut out = Vec::new();
    out.push(match solve_dbar(1.0, &spectrum, noise, k) {
        Ok(d) => {
            let err = (d - 1.5).abs();
            Check::new(
                "closed_form_dbar",
                err <= CLOSED_FORM_TOL,
                format!("dbar={} expected=1.5 abs_err={}", fmt_num(d), fmt_num(err)),
            )
        }
        Err(e) => Check::error("closed_form_dbar", e),
    });
    out.push(match solve_taubar(1.0, &spectrum, noise, k) {
        Ok(t) => {
            let err = (t - 2f64.sqrt()).abs();
            Check::new(
                "closed_form_taubar",
                err <= CLOSED_FORM_TOL,
                format!("taubar={} expected=sqrt(2) abs_err={}", fmt_num(t), fmt_num(err)),
            )
        }
        Err(e) => Check::error("closed_form_taubar", e),
    });
    let mut worst = 0.0f64;
    let mut failure = None;
    for &a0 in &[0.1, 0.5, 1.0, 2.0, 10.0] {
        for &noise in &[0.1, 1.0, 3.0] {
            let r = solve_taubar(a0, &spectrum, noise, k)
                .and_then(|t| solve_dbar(t, &spectrum, noise, k).map(|d| (t - a0 * d).abs()));
            match r {
                Ok(err) => worst = worst.max(err),
                Err(e) => failure = Some(e),
            }
        }
    }
    out.push(match failure {
        Some(e) => Check::error("closed_form_taubar_identity", e),
        None => Check::new(
            "closed_form_taubar_identity",
            worst <= CLOSED_FORM_TOL,
            format!("max|taubar - alpha0*dbar(taubar)|={}", fmt_num(worst)),
        ),
    });
    out
}

fn trend_detail(r: &ConvergenceReport) -> String {
    r.points
        .iter()
        .map(|p| format!("{}={}", p.dims, fmt_num(p.mean)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn trend_check(name: &str, r: &ConvergenceReport) -> Check {
    Check::new(name, r.is_non_increasing(), trend_detail(r))
}

fn threshold_check(name: &str, r: &ConvergenceReport, max: f64) -> Check {
    let last = r.points.last().map_or(f64::NAN, |p| p.mean);
    Check::new(
        name,
        last < max,
        format!(
            "{}={} limit={}",
            r.points.last().map(|p| p.dims.to_string()).unwrap_or_default(),
            fmt_num(last),
            fmt_num(max)
        ),
    )
}

fn convergence_checks(cfg: &ExperimentConfig) -> Vec<Check> {
    let v = &cfg.validation;
    let dims: Vec<Dims> = v.dims.iter().map(|d| Dims::new(d[0], d[1], d[2])).collect();
    let exec = execution(cfg.threads);
    let mut out = Vec::new();
    match validate_theorem1(v.tau, &cfg.system, v.trials, &dims, cfg.seed, exec) {
        Ok(r) => {
            out.push(trend_check("dbar_trend", &r));
            if let Some(max) = v.dbar_max_error {
                out.push(threshold_check("dbar_limit", &r, max));
            }
        }
        Err(e) => out.push(Check::error("dbar_trend", e)),
    }
    match validate_theorem2(&cfg.system, v.trials, &dims, cfg.seed, exec) {
        Ok(r) => {
            out.push(trend_check("taubar_trend", &r.tau));
            out.push(trend_check("power_trend", &r.power));
            if let Some(max) = v.taubar_max_error {
                out.push(threshold_check("taubar_limit", &r.tau, max));
            }
        }
        Err(e) => out.push(Check::error("taubar_trend", e)),
    }
    out
}

/// Zero-phase cascade of one statistics draw, scaled to unit average gain.
fn normalized_cascade(cfg: &ExperimentConfig, dims: [usize; 3], key: u64) -> risfair::Result<(CMatrix, usize)> {
    let system = Dims::new(dims[0], dims[1], dims[2]).apply(&cfg.system);
    let mut rng = stream_rng(cfg.seed, Stream::Validation, &[AUX_STREAM, key]);
    let geometry = system.deployment.sample(system.users, &mut rng);
    let stats = ChannelStatistics::generate(&system, &geometry, &mut rng)?;
    let u = stats.cascade(&PhaseVector::zeros(system.ris_elements))?;
    let scale = (u.norm_squared() / system.antennas as f64).sqrt();
    Ok((u * c(1.0 / scale), system.users))
}

fn resolvent_check(cfg: &ExperimentConfig) -> Check {
    let name = "resolvent_equivalent";
    let v = &cfg.validation;
    let run = || -> risfair::Result<(f64, f64)> {
        let (u, users) = normalized_cascade(cfg, v.resolvent_dims, 0)?;
        let m = u.nrows();
        let c_mat = CMatrix::identity(m, m);
        let de = resolvent_trace_equivalent(&c_mat, &u, v.resolvent_z, users)?;
        let draws = map_indexed(execution(cfg.threads), v.resolvent_trials, |t| {
            let mut rng = stream_rng(cfg.seed, Stream::Validation, &[AUX_STREAM, 1, t as u64]);
            empirical_resolvent_trace(&c_mat, &u, v.resolvent_z, users, &mut rng)
        })
        .into_iter()
        .collect::<risfair::Result<Vec<_>>>()?;
        Ok((de.value, draws.iter().sum::<f64>() / draws.len() as f64))
    };
    match run() {
        Ok((de, mc)) => {
            let err = (mc - de).abs() / de.abs();
            Check::new(
                name,
                err < v.resolvent_tol,
                format!(
                    "equivalent={} monte_carlo={} rel_err={} limit={}",
                    fmt_num(de),
                    fmt_num(mc),
                    fmt_num(err),
                    fmt_num(v.resolvent_tol)
                ),
            )
        }
        Err(e) => Check::error(name, e),
    }
}

fn quadratic_form_check(cfg: &ExperimentConfig) -> Check {
    let name = "quadratic_form_concentration";
    let v = &cfg.validation;
    let run = || -> risfair::Result<(f64, f64, f64)> {
        let (u, _) = normalized_cascade(cfg, v.resolvent_dims, 2)?;
        let r = &u * u.adjoint();
        let mut rng = stream_rng(cfg.seed, Stream::Validation, &[AUX_STREAM, 3]);
        let q = quadratic_form_concentration(&r, 400, &mut rng)?;
        Ok((q.mean, q.normalized_trace, q.std))
    };
    match run() {
        Ok((mean, trace, std)) => {
            let err = (mean - trace).abs() / trace;
            Check::new(
                name,
                err < v.resolvent_tol,
                format!(
                    "mean={} trace/M={} std={} rel_err={} limit={}",
                    fmt_num(mean),
                    fmt_num(trace),
                    fmt_num(std),
                    fmt_num(err),
                    fmt_num(v.resolvent_tol)
                ),
            )
        }
        Err(e) => Check::error(name, e),
    }
}

/// Analytic vs finite-difference gradients on the configured random
/// instances, in instance order.
pub fn gradient_checks(cfg: &ExperimentConfig, fault: GradientFault) -> Vec<risfair::Result<GradientCheck>> {
    let v = &cfg.validation;
    let mut system = Dims::new(v.gradient_dims[0], v.gradient_dims[1], v.gradient_dims[2]).apply(&cfg.system);
    system.corr_eta_ris = v.gradient_eta;
    system.corr_eta_users = v.gradient_eta;
    map_indexed(execution(cfg.threads), v.gradient_instances, |i| {
        let mut rng = stream_rng(cfg.seed, Stream::Validation, &[AUX_STREAM, 4, i as u64]);
        let geometry = system.deployment.sample(system.users, &mut rng);
        let stats = ChannelStatistics::generate(&system, &geometry, &mut rng)?;
        let phases = PhaseVector::random(system.ris_elements, &mut rng);
        let a0 = alpha0(&stats.path_losses, &config_caps(&system)?)?;
        let mut analytic = grad_taubar_phases(&stats, &phases, a0)?.d_theta;
        if fault.relative != 0.0 {
            let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            analytic[0] += fault.relative * scale;
        }
        check_gradient(&stats, &phases, a0, analytic, v.gradient_step)
    })
}

fn gradient_summary(cfg: &ExperimentConfig, fault: GradientFault) -> Check {
    let name = "gradient_oracle";
    let results = gradient_checks(cfg, fault);
    let mut worst = 0.0f64;
    for r in &results {
        match r {
            Ok(g) => worst = worst.max(g.relative_error),
            Err(e) => return Check::error(name, e),
        }
    }
    let tol = cfg.validation.gradient_tol;
    Check::new(
        name,
        worst < tol,
        format!(
            "instances={} max_rel_err={} limit={}",
            results.len(),
            fmt_num(worst),
            fmt_num(tol)
        ),
    )
}

/// Per-instance gradient report.
pub fn grad_check(cfg: &ExperimentConfig, fault: GradientFault) -> ValidationReport {
    let tol = cfg.validation.gradient_tol;
    let results = with_threads(cfg.threads, || gradient_checks(cfg, fault));
    let checks = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let name = format!("gradient_instance_{i}");
            match r {
                Ok(g) => Check::new(
                    &name,
                    g.relative_error < tol,
                    format!("rel_err={} limit={}", fmt_num(g.relative_error), fmt_num(tol)),
                ),
                Err(e) => Check::error(&name, e),
            }
        })
        .collect();
    ValidationReport { checks }
}
