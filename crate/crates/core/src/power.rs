//! Max-min power control under per-user caps.
//!
//! At the max-min optimum every user sees the same SINR `tau*`. Writing
//! `tau* = K p_k l_k d_k` (with `p_k` the per-user power entering the SINR),
//! the normalized post-MMSE gains `d_k` solve a fixed point of a standard
//! interference function for every target `tau`, and the optimal target is
//! the largest `tau` for which the implied powers respect the caps. The
//! allocation therefore bisects on `tau` around the fixed-point solver.

use crate::error::{domain, Error, Result};
use crate::linalg::{c, hpd_factor, CMatrix};

/// Relative stopping tolerance of the fixed-point iteration.
pub const FIXED_POINT_TOL: f64 = 1e-10;
pub const FIXED_POINT_MAX_ITER: usize = 10_000;
/// Relative bracket width at which the bisection on `tau` stops.
pub const BISECTION_TOL: f64 = 1e-9;
/// Users within this relative distance of their cap are reported as binding.
pub const BINDING_TOL: f64 = 1e-6;

/// Per-user powers with the achieved common SINR.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    /// Per-user transmit powers `p_k / K` (Watts); these multiply the
    /// channels in the SINR expression and are bounded by the caps.
    pub p_phys: Vec<f64>,
    /// Equal-SINR level reached by the allocation, when it was computed from
    /// instantaneous channels.
    pub tau_star: Option<f64>,
    /// Users sitting at their cap.
    pub binding_users: Vec<usize>,
    /// Bisection steps on `tau` (zero for closed-form allocations).
    pub bisection_steps: usize,
    /// Total fixed-point iterations over all bisection steps.
    pub fixed_point_iterations: usize,
}

impl PowerAllocation {
    pub fn total_power(&self) -> f64 {
        self.p_phys.iter().sum()
    }
}

/// Fixed point `d(tau)` of the interference map.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceState {
    pub d: Vec<f64>,
    pub tau: f64,
    pub iterations: usize,
    /// Last relative update `max_k |d_k' - d_k| / d_k`.
    pub residual: f64,
}

fn check_channels(g_tilde: &CMatrix, noise_power: f64) -> Result<()> {
    if g_tilde.ncols() == 0 {
        return Err(domain("no users"));
    }
    if !(noise_power > 0.0 && noise_power.is_finite()) {
        return Err(domain(format!("noise power must be positive, got {noise_power}")));
    }
    Ok(())
}

/// Evaluate `h_k(d; tau) = (1/K) g_k^H (sum_{i != k} tau/(K d_i) g_i g_i^H + sigma^2 I)^{-1} g_k`
/// for every user, with `g` the channels without path loss.
pub fn interference_map(d: &[f64], tau: f64, g_tilde: &CMatrix, noise_power: f64) -> Result<Vec<f64>> {
    check_channels(g_tilde, noise_power)?;
    let k_users = g_tilde.ncols();
    if d.len() != k_users {
        return Err(domain("state length does not match the user count"));
    }
    if d.iter().any(|&x| !(x > 0.0)) {
        return Err(domain("interference state must be positive"));
    }
    let kf = k_users as f64;
    let sigma2 = noise_power / kf;
    let weights: Vec<f64> = d.iter().map(|&di| tau / (kf * di)).collect();

    let mut scaled = g_tilde.clone();
    for (col, w) in scaled.column_iter_mut().zip(&weights) {
        let mut col = col;
        col.scale_mut(w.sqrt());
    }
    let mut cov = &scaled * scaled.adjoint();
    for i in 0..cov.nrows() {
        cov[(i, i)] += c(sigma2);
    }
    let chol = hpd_factor(cov)?;
    let mut y = g_tilde.clone();
    chol.l_dirty().solve_lower_triangular_mut(&mut y);
    Ok(y.column_iter()
        .zip(&weights)
        .map(|(col, &w)| {
            // remove user k's own term: a / (1 - w a)
            let a = col.norm_squared();
            let denom = (1.0 - w * a).max(f64::EPSILON);
            a / denom / kf
        })
        .collect())
}

pub(crate) fn fixed_point_from(
    tau: f64,
    g_tilde: &CMatrix,
    noise_power: f64,
    start: Vec<f64>,
) -> Result<InterferenceState> {
    let (state, _) = fixed_point_bounded(tau, g_tilde, noise_power, start, None)?;
    state.ok_or_else(|| domain("unbounded fixed point reported infeasible"))
}

/// Iterate `d <- h(d; tau)` from `start`. When `start` dominates the fixed
/// point the iterates decrease monotonically, so with a `budget` the run
/// stops as soon as some `tau / d_k` exceeds `budget_k` and returns `None`:
/// the fixed point can only be worse.
fn fixed_point_bounded(
    tau: f64,
    g_tilde: &CMatrix,
    noise_power: f64,
    start: Vec<f64>,
    budget: Option<&[f64]>,
) -> Result<(Option<InterferenceState>, usize)> {
    let violates = |d: &[f64]| budget.is_some_and(|b| d.iter().zip(b).any(|(&dk, &bk)| tau / dk > bk));
    let mut d = start;
    let mut residual = f64::INFINITY;
    for it in 1..=FIXED_POINT_MAX_ITER {
        if violates(&d) {
            return Ok((None, it - 1));
        }
        let next = interference_map(&d, tau, g_tilde, noise_power)?;
        residual = next.iter().zip(&d).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
        d = next;
        if residual < FIXED_POINT_TOL {
            if violates(&d) {
                return Ok((None, it));
            }
            let state = InterferenceState {
                d,
                tau,
                iterations: it,
                residual,
            };
            return Ok((Some(state), it));
        }
    }
    Err(Error::Convergence {
        what: "interference fixed point",
        iterations: FIXED_POINT_MAX_ITER,
        residual,
    })
}

/// `d_k(0) = ||g_k||^2 / (K sigma^2)`, the interference-free values.
pub fn interference_free_state(g_tilde: &CMatrix, noise_power: f64) -> Vec<f64> {
    // sigma^2 = noise / K, so ||g||^2 / (K sigma^2) = ||g||^2 / noise
    g_tilde
        .column_iter()
        .map(|col| col.norm_squared() / noise_power)
        .collect()
}

/// Solve `d = h(d; tau)` by iterating from the interference-free point.
pub fn interference_fixed_point(tau: f64, g_tilde: &CMatrix, noise_power: f64) -> Result<InterferenceState> {
    check_channels(g_tilde, noise_power)?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(domain(format!("target SINR must be nonnegative, got {tau}")));
    }
    fixed_point_from(tau, g_tilde, noise_power, interference_free_state(g_tilde, noise_power))
}

fn check_caps(path_losses: &[f64], caps: &[f64], k_users: usize) -> Result<()> {
    if path_losses.len() != k_users || caps.len() != k_users {
        return Err(domain("path losses and caps must have one entry per user"));
    }
    if path_losses.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(domain("path losses must be positive"));
    }
    if caps.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(domain("power caps must be positive"));
    }
    Ok(())
}

fn binding(p: &[f64], caps: &[f64]) -> Vec<usize> {
    p.iter()
        .zip(caps)
        .enumerate()
        .filter(|(_, (&pk, &cap))| pk >= cap * (1.0 - BINDING_TOL))
        .map(|(k, _)| k)
        .collect()
}

/// Max-min power allocation from instantaneous channels.
///
/// `g_tilde` holds the channels without path loss (columns `U h_k`), `caps`
/// bounds the per-user powers `p_k / K`.
pub fn allocate_power_instantaneous(
    g_tilde: &CMatrix,
    path_losses: &[f64],
    caps: &[f64],
    noise_power: f64,
) -> Result<PowerAllocation> {
    check_channels(g_tilde, noise_power)?;
    let k_users = g_tilde.ncols();
    check_caps(path_losses, caps, k_users)?;
    let kf = k_users as f64;
    // tau / d_k(tau) <= K l_k cap_k
    let budget: Vec<f64> = path_losses.iter().zip(caps).map(|(l, p)| kf * l * p).collect();
    let mut iterations = 0;
    let mut lo = interference_fixed_point(0.0, g_tilde, noise_power)?;
    iterations += lo.iterations;
    // d_k(tau) <= d_k(0), so tau* <= min_k budget_k d_k(0)
    let mut hi_tau =
        lo.d.iter()
            .zip(&budget)
            .map(|(d, b)| d * b)
            .fold(f64::INFINITY, f64::min);
    if !(hi_tau > 0.0 && hi_tau.is_finite()) {
        return Err(domain("cannot bracket the optimal SINR"));
    }

    let mut doublings = 0;
    loop {
        let (state, its) = fixed_point_bounded(hi_tau, g_tilde, noise_power, lo.d.clone(), Some(&budget))?;
        iterations += its;
        let Some(state) = state else { break };
        lo = state;
        hi_tau *= 2.0;
        doublings += 1;
        if doublings > 200 || !hi_tau.is_finite() {
            return Err(domain("cannot bracket the optimal SINR"));
        }
    }

    let mut steps = 0;
    while hi_tau - lo.tau > BISECTION_TOL * hi_tau {
        let mid = 0.5 * (lo.tau + hi_tau);
        let (state, its) = fixed_point_bounded(mid, g_tilde, noise_power, lo.d.clone(), Some(&budget))?;
        iterations += its;
        match state {
            Some(state) => lo = state,
            None => hi_tau = mid,
        }
        steps += 1;
    }

    let tau = lo.tau;
    let p_phys: Vec<f64> =
        lo.d.iter()
            .zip(path_losses)
            .zip(caps)
            .map(|((&d, &l), &cap)| (tau / (kf * l * d)).min(cap))
            .collect();
    let binding_users = binding(&p_phys, caps);
    Ok(PowerAllocation {
        p_phys,
        tau_star: Some(tau),
        binding_users,
        bisection_steps: steps,
        fixed_point_iterations: iterations,
    })
}

/// `alpha_0 = min_k K l_k cap_k`.
pub fn alpha0(path_losses: &[f64], caps: &[f64]) -> Result<f64> {
    check_caps(path_losses, caps, path_losses.len())?;
    let kf = path_losses.len() as f64;
    Ok(path_losses
        .iter()
        .zip(caps)
        .map(|(l, p)| kf * l * p)
        .fold(f64::INFINITY, f64::min))
}

/// Large-system power allocation `p_k / K = alpha_0 / (K l_k)`: every user is
/// received with the same strength as the weakest user at full power.
pub fn allocate_power_asymptotic(path_losses: &[f64], caps: &[f64]) -> Result<PowerAllocation> {
    if path_losses.is_empty() {
        return Err(domain("no users"));
    }
    let a0 = alpha0(path_losses, caps)?;
    let kf = path_losses.len() as f64;
    let p_phys: Vec<f64> = path_losses
        .iter()
        .zip(caps)
        .map(|(&l, &cap)| (a0 / (kf * l)).min(cap))
        .collect();
    let binding_users = binding(&p_phys, caps);
    Ok(PowerAllocation {
        p_phys,
        tau_star: None,
        binding_users,
        bisection_steps: 0,
        fixed_point_iterations: 0,
    })
}
