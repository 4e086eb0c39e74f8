//! RIS phase design.
//!
//! Two optimizers share one projected-ascent loop over the real phases
//! `theta`, with `phi = exp(j theta)` so the unit-modulus projection is exact:
//! the statistical design ascends the deterministic equivalent `tau-bar` with
//! an implicit-function gradient, the instantaneous baseline ascends a
//! log-sum-exp smoothed minimum of the post-MMSE SINRs with finite
//! differences.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};

use crate::asymptotics::{solve_taubar, GramSpectrum};
use crate::beamforming::sinr_post_mmse_shared;
use crate::error::{domain, Error, Result};
use crate::linalg::{c, hpd_factor, CMatrix};
use crate::model::{ChannelRealization, ChannelStatistics};
use crate::parallel::{map_indexed, Execution};
use crate::rng::SimRng;

/// Unit-modulus tolerance of a phase vector.
pub const UNIT_MODULUS_TOL: f64 = 1e-12;
/// `|dg/dtau|` below this makes the implicit derivative unusable.
pub const SINGULAR_TOL: f64 = 1e-12;

/// RIS reflection coefficients `phi_n = exp(j theta_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    phi: Vec<Complex64>,
    theta: Vec<f64>,
}

fn wrap(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

impl PhaseVector {
    pub fn zeros(n: usize) -> Self {
        Self::from_theta(vec![0.0; n])
    }

    pub fn from_theta(theta: Vec<f64>) -> Self {
        let theta: Vec<f64> = theta.into_iter().map(wrap).collect();
        let phi = theta.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        Self { phi, theta }
    }

    /// Project arbitrary complex coefficients onto the unit circle; zero
    /// entries map to 1.
    pub fn project(values: &[Complex64]) -> Self {
        Self::from_theta(
            values
                .iter()
                .map(|z| if z.norm() > 0.0 { z.arg() } else { 0.0 })
                .collect(),
        )
    }

    /// Phases drawn uniformly on `[0, 2 pi)`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self::from_theta((0..n).map(|_| rng.random_range(0.0..TAU)).collect())
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn phi(&self) -> &[Complex64] {
        &self.phi
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// The same phases rotated by a common angle.
    pub fn rotated(&self, angle: f64) -> Self {
        Self::from_theta(self.theta.iter().map(|t| t + angle).collect())
    }

    pub fn check_unit_modulus(&self) -> Result<()> {
        match self
            .phi
            .iter()
            .position(|z| (z.norm() - 1.0).abs() > UNIT_MODULUS_TOL || !z.re.is_finite())
        {
            Some(n) => Err(domain(format!("phase {n} is not unit modulus: {}", self.phi[n]))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative objective gain fell below the tolerance.
    Converged,
    /// The gradient vanished.
    Stationary,
    MaxIterations,
    /// No step satisfied the sufficient-increase condition.
    LineSearchExhausted,
}

/// History of one ascent run. Entry 0 of `objective` is the initial point.
#[derive(Debug, Clone, PartialEq)]
pub struct AscentTrace {
    pub objective: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub gradient_norms: Vec<f64>,
    pub termination: Termination,
    /// Number of gradient evaluations.
    pub iterations: usize,
}

impl AscentTrace {
    pub fn final_objective(&self) -> f64 {
        *self.objective.last().unwrap_or(&f64::NAN)
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.objective.windows(2).all(|w| w[1] >= w[0])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentOptions {
    pub max_iter: usize,
    /// Stop when `(f_new - f) / |f|` drops below this.
    pub rel_tol: f64,
    /// Sufficient-increase constant of the Armijo rule.
    pub armijo: f64,
    pub contraction: f64,
    /// First trial step, in radians along the max-normalized gradient.
    pub initial_step: f64,
    pub max_backtracks: usize,
    /// Extra uniformly random starting points; the best result is kept.
    pub multistart: usize,
    pub multistart_seed: u64,
    /// Log-sum-exp sharpness of the smoothed minimum.
    pub rho: f64,
    /// Central-difference step on `theta`.
    pub fd_step: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            rel_tol: 1e-8,
            armijo: 1e-4,
            contraction: 0.5,
            initial_step: 1.0,
            max_backtracks: 40,
            multistart: 0,
            multistart_seed: 0,
            rho: 50.0,
            fd_step: 1e-5,
        }
    }
}

impl AscentOptions {
    pub fn with_multistart(mut self, restarts: usize, seed: u64) -> Self {
        self.multistart = restarts;
        self.multistart_seed = seed;
        self
    }
}

/// Projected gradient ascent on `theta` with Armijo backtracking. The search
/// direction is the gradient scaled to unit max-norm, so steps are in radians.
fn ascend(
    theta0: Vec<f64>,
    objective: &dyn Fn(&[f64]) -> Result<f64>,
    gradient: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    opts: &AscentOptions,
) -> Result<(Vec<f64>, AscentTrace)> {
    let mut theta = theta0;
    let mut f = objective(&theta)?;
    let mut trace = AscentTrace {
        objective: vec![f],
        step_sizes: Vec::new(),
        gradient_norms: Vec::new(),
        termination: Termination::MaxIterations,
        iterations: 0,
    };
    while trace.iterations < opts.max_iter {
        trace.iterations += 1;
        let grad = gradient(&theta)?;
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        trace.gradient_norms.push(gnorm);
        if !(gmax > 1e-10 * f.abs().max(f64::MIN_POSITIVE)) {
            trace.termination = Termination::Stationary;
            break;
        }
        let slope = gnorm * gnorm / gmax;
        let mut step = opts.initial_step;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t + step * g / gmax).collect();
            let f_trial = objective(&trial)?;
            if f_trial >= f + opts.armijo * step * slope {
                accepted = Some((trial, f_trial));
                break;
            }
            step *= opts.contraction;
        }
        let Some((trial, f_trial)) = accepted else {
            trace.termination = Termination::LineSearchExhausted;
            break;
        };
        let gain = (f_trial - f) / f.abs().max(f64::MIN_POSITIVE);
        theta = trial;
        f = f_trial;
        trace.objective.push(f);
        trace.step_sizes.push(step);
        if gain < opts.rel_tol {
            trace.termination = Termination::Converged;
            break;
        }
    }
    Ok((theta, trace))
}

/// Run the ascent from `init` and from `opts.multistart` random points, and
/// keep the best final objective (ties go to the earliest start).
fn ascend_multistart(
    init: &PhaseVector,
    objective: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    gradient: &(dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync),
    opts: &AscentOptions,
) -> Result<(PhaseVector, AscentTrace)> {
    let n = init.len();
    let runs = map_indexed(Execution::Parallel, 1 + opts.multistart, |r| {
        let start = if r == 0 {
            init.theta().to_vec()
        } else {
            let mut rng = SimRng::seed_from_u64(opts.multistart_seed.wrapping_add(r as u64));
            PhaseVector::random(n, &mut rng).theta().to_vec()
        };
        ascend(start, objective, gradient, opts)
    });
    let mut best: Option<(Vec<f64>, AscentTrace)> = None;
    for run in runs {
        let run = run?;
        if best
            .as_ref()
            .is_none_or(|b| run.1.final_objective() > b.1.final_objective())
        {
            best = Some(run);
        }
    }
    let (theta, trace) = best.expect("at least one start");
    Ok((PhaseVector::from_theta(theta), trace))
}

/// `tau-bar` at the given phases.
pub fn statistical_objective(stats: &ChannelStatistics, phases: &PhaseVector, alpha0: f64) -> Result<f64> {
    let u = stats.cascade(phases)?;
    solve_taubar(alpha0, &GramSpectrum::new(&u), stats.noise_power, stats.users())
}

/// Gradient of `tau-bar` with respect to the RIS coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGradient {
    pub tau_bar: f64,
    /// Wirtinger partials `d tau-bar / d phi_n`.
    pub d_phi: Vec<Complex64>,
    /// Real gradient `d tau-bar / d theta_n = 2 Re{ j phi_n d tau-bar / d phi_n }`.
    pub d_theta: Vec<f64>,
    /// `d g / d tau` at the solution.
    pub dg_dtau: f64,
}

/// Implicit-function gradient of `tau-bar`, where `tau-bar` is the root of
///
/// `g(tau, phi) = tau - (alpha0/K) Trace{ A T }`, `T = (alpha0/(1+tau) A + sigma^2 I)^{-1}`,
///
/// and `A = U U^H = L Phi R_users Phi^H L^H` with `L = H1 R_RIS^{1/2}`.
pub fn grad_taubar_phases(stats: &ChannelStatistics, phases: &PhaseVector, alpha0: f64) -> Result<PhaseGradient> {
    let kf = stats.users() as f64;
    let sigma2 = stats.sigma2();
    let u = stats.cascade(phases)?;
    let tau_bar = solve_taubar(alpha0, &GramSpectrum::new(&u), stats.noise_power, stats.users())?;

    let m = stats.antennas();
    let a = &u * u.adjoint();
    let scale = alpha0 / (1.0 + tau_bar);
    let mut shifted = &a * c(scale);
    for i in 0..m {
        shifted[(i, i)] += c(sigma2);
    }
    let t = hpd_factor(shifted)?.inverse();
    let at = &a * &t;
    let tr_atat = (&at * &at).trace().re;
    let dg_dtau = 1.0 - alpha0 * alpha0 / (kf * (1.0 + tau_bar).powi(2)) * tr_atat;
    if dg_dtau.abs() < SINGULAR_TOL {
        return Err(Error::Singular(dg_dtau.abs()));
    }

    // dg/dphi_n^* = (alpha0/K) [ L^H (c T A T - T) L Phi R_users ]_nn
    let left = stats.left_factor();
    let inner = &t * &at * c(scale) - &t;
    let w = left.adjoint() * inner * &left;
    let r = &stats.r_users;
    let phi = phases.phi();
    let n_el = phases.len();
    let mut d_phi = Vec::with_capacity(n_el);
    let mut d_theta = Vec::with_capacity(n_el);
    for n in 0..n_el {
        let diag: Complex64 = (0..n_el).map(|j| w[(n, j)] * phi[j] * r[(j, n)]).sum();
        let dg_dphi_conj = diag * (alpha0 / kf);
        let dtau_dphi = (-dg_dphi_conj / dg_dtau).conj();
        d_phi.push(dtau_dphi);
        d_theta.push(2.0 * (Complex64::i() * phi[n] * dtau_dphi).re);
    }
    Ok(PhaseGradient {
        tau_bar,
        d_phi,
        d_theta,
        dg_dtau,
    })
}

/// Analytic gradient against central differences of `tau-bar` in `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub analytic: Vec<f64>,
    pub finite_difference: Vec<f64>,
    /// `max_n |analytic_n - fd_n| / max_n |fd_n|`
    pub relative_error: f64,
}

/// Compare a gradient (normally [`grad_taubar_phases`]) with central
/// differences of the re-solved `tau-bar`, step `h` on each `theta_n`.
pub fn check_gradient(
    stats: &ChannelStatistics,
    phases: &PhaseVector,
    alpha0: f64,
    analytic: Vec<f64>,
    h: f64,
) -> Result<GradientCheck> {
    let mut fd = Vec::with_capacity(phases.len());
    for n in 0..phases.len() {
        let mut up = phases.theta().to_vec();
        let mut down = up.clone();
        up[n] += h;
        down[n] -= h;
        let f_up = statistical_objective(stats, &PhaseVector::from_theta(up), alpha0)?;
        let f_down = statistical_objective(stats, &PhaseVector::from_theta(down), alpha0)?;
        fd.push((f_up - f_down) / (2.0 * h));
    }
    let scale = fd.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let err = analytic.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(GradientCheck {
        relative_error: err / scale.max(f64::MIN_POSITIVE),
        analytic,
        finite_difference: fd,
    })
}

/// Maximize `tau-bar` over the RIS phases from statistical CSI.
pub fn optimize_phases_statistical(
    stats: &ChannelStatistics,
    alpha0: f64,
    init: &PhaseVector,
    opts: &AscentOptions,
) -> Result<(PhaseVector, AscentTrace)> {
    if init.len() != stats.ris_elements() {
        return Err(domain("initial phases do not match the RIS size"));
    }
    let objective = |theta: &[f64]| statistical_objective(stats, &PhaseVector::from_theta(theta.to_vec()), alpha0);
    let gradient =
        |theta: &[f64]| grad_taubar_phases(stats, &PhaseVector::from_theta(theta.to_vec()), alpha0).map(|g| g.d_theta);
    ascend_multistart(init, &objective, &gradient, opts)
}

/// `-(1/rho) log sum_k exp(-rho x_k)`, evaluated around the minimum.
pub fn smoothed_min(values: &[f64], rho: f64) -> f64 {
    let m = values.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = values.iter().map(|&x| (-rho * (x - m)).exp()).sum();
    m - s.ln() / rho
}

/// Channels `g(theta) = L diag(phi) B` with `B = R_users^{1/2} H2 diag(sqrt(l))`,
/// so that moving one phase is a rank-one update.
struct InstantaneousModel {
    left: CMatrix,
    right: CMatrix,
    p: Vec<f64>,
    noise_power: f64,
    rho: f64,
}

impl InstantaneousModel {
    fn channels(&self, phi: &[Complex64]) -> CMatrix {
        let mut scaled = self.right.clone();
        for (n, mut row) in scaled.row_iter_mut().enumerate() {
            row *= phi[n];
        }
        &self.left * scaled
    }

    fn objective_of(&self, g: &CMatrix) -> Result<f64> {
        Ok(smoothed_min(
            &sinr_post_mmse_shared(g, &self.p, self.noise_power)?,
            self.rho,
        ))
    }

    fn objective(&self, theta: &[f64]) -> Result<f64> {
        let pv = PhaseVector::from_theta(theta.to_vec());
        self.objective_of(&self.channels(pv.phi()))
    }

    fn fd_gradient(&self, theta: &[f64], h: f64) -> Result<Vec<f64>> {
        let pv = PhaseVector::from_theta(theta.to_vec());
        let g = self.channels(pv.phi());
        let mut out = Vec::with_capacity(theta.len());
        let mut shifted = g.clone();
        for (n, &theta_n) in theta.iter().enumerate() {
            let outer = self.left.column(n) * self.right.row(n);
            let eval = |delta: f64, buf: &mut CMatrix| -> Result<f64> {
                let change = Complex64::from_polar(1.0, theta_n + delta) - pv.phi()[n];
                buf.copy_from(&g);
                *buf += &outer * change;
                self.objective_of(buf)
            };
            let up = eval(h, &mut shifted)?;
            let down = eval(-h, &mut shifted)?;
            out.push((up - down) / (2.0 * h));
        }
        Ok(out)
    }
}

/// Maximize the smoothed minimum of the post-MMSE SINRs for one fading
/// realization and fixed per-user powers `p` (the values multiplying the
/// channels in the SINR).
pub fn optimize_phases_instantaneous(
    stats: &ChannelStatistics,
    real: &ChannelRealization,
    p: &[f64],
    init: &PhaseVector,
    opts: &AscentOptions,
) -> Result<(PhaseVector, AscentTrace)> {
    let model = instantaneous_model(stats, real, p, opts.rho)?;
    if init.len() != stats.ris_elements() {
        return Err(domain("initial phases do not match the RIS size"));
    }
    let objective = |theta: &[f64]| model.objective(theta);
    let gradient = |theta: &[f64]| model.fd_gradient(theta, opts.fd_step);
    ascend_multistart(init, &objective, &gradient, opts)
}

/// The smoothed objective maximized by [`optimize_phases_instantaneous`].
pub fn instantaneous_objective(
    stats: &ChannelStatistics,
    real: &ChannelRealization,
    p: &[f64],
    phases: &PhaseVector,
    rho: f64,
) -> Result<f64> {
    instantaneous_model(stats, real, p, rho)?.objective(phases.theta())
}

fn instantaneous_model(
    stats: &ChannelStatistics,
    real: &ChannelRealization,
    p: &[f64],
    rho: f64,
) -> Result<InstantaneousModel> {
    if real.h2_tilde.nrows() != stats.ris_elements() || real.users() != stats.users() {
        return Err(domain("realization dimensions do not match the statistics"));
    }
    if p.len() != stats.users() {
        return Err(domain("one power per user is required"));
    }
    if !(rho > 0.0) {
        return Err(domain("smoothing constant must be positive"));
    }
    let mut right = stats.r_users_sqrt() * &real.h2_tilde;
    for (k, &l) in stats.path_losses.iter().enumerate() {
        right.column_mut(k).scale_mut(l.sqrt());
    }
    Ok(InstantaneousModel {
        left: stats.left_factor(),
        right,
        p: p.to_vec(),
        noise_power: stats.noise_power,
        rho,
    })
}
