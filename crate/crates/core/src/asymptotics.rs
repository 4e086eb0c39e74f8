//! Large-system deterministic equivalents of the max-min SINR and of the
//! per-user interference gains, plus numerical checks of the random-matrix
//! results they rest on.
//!
//! Every equation here only involves `U U^H` through traces of rational
//! functions of it, so one eigendecomposition per channel factor turns each
//! root-finding step into an O(M) sum over eigenvalues.

use rand::Rng;

use crate::emf::{emf_to_power_bounds, ExposureSpec};
use crate::error::{domain, Error, Result};
use crate::linalg::{c, hermitian_eigen, weighted_resolvent_sum, CMatrix};
use crate::model::{complex_normal_matrix, ChannelRealization, ChannelStatistics, SystemConfig};
use crate::parallel::{map_indexed, Execution};
use crate::phaseopt::PhaseVector;
use crate::power::{allocate_power_instantaneous, alpha0, interference_fixed_point};
use crate::rng::{stream_rng, Stream};

/// Relative residual required of every deterministic-equivalent root.
pub const ROOT_TOL: f64 = 1e-12;
const BISECTION_MAX_ITER: usize = 400;

/// Nonzero spectrum of `U U^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSpectrum {
    eigenvalues: Vec<f64>,
    antennas: usize,
}

impl GramSpectrum {
    /// Eigenvalues of the smaller of `U U^H` and `U^H U`; both share their
    /// nonzero spectrum.
    pub fn new(u: &CMatrix) -> Self {
        let gram = if u.nrows() <= u.ncols() {
            u * u.adjoint()
        } else {
            u.adjoint() * u
        };
        let eigenvalues = hermitian_eigen(&gram).eigenvalues.iter().map(|&l| l.max(0.0)).collect();
        Self {
            eigenvalues,
            antennas: u.nrows(),
        }
    }

    pub fn from_eigenvalues(eigenvalues: Vec<f64>, antennas: usize) -> Self {
        Self { eigenvalues, antennas }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// `Trace{ U U^H (a U U^H + b I)^{-1} }`
    pub fn resolvent_trace(&self, a: f64, b: f64) -> f64 {
        weighted_resolvent_sum(&self.eigenvalues, a, b)
    }

    fn rank(&self) -> usize {
        let top = self.eigenvalues.iter().copied().fold(0.0, f64::max);
        self.eigenvalues.iter().filter(|&&l| l > 1e-14 * top).count()
    }
}

/// Bisection for the root of a decreasing function on (0, inf), starting
/// from an upper point where it is nonpositive.
fn decreasing_root(f: impl Fn(f64) -> f64, upper: f64, what: &'static str) -> Result<f64> {
    let mut hi = upper;
    let mut lo = upper;
    let mut iter = 0;
    while f(lo) <= 0.0 {
        hi = lo;
        lo *= 0.5;
        iter += 1;
        if iter > 2000 || lo == 0.0 {
            return Err(Error::Convergence {
                what,
                iterations: iter,
                residual: f(lo),
            });
        }
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn check_noise(noise_power: f64) -> Result<()> {
    if !(noise_power > 0.0 && noise_power.is_finite()) {
        return Err(domain(format!("noise power must be positive, got {noise_power}")));
    }
    Ok(())
}

/// Residual of `d = (1/K) Trace{ UU^H (UU^H tau/(d(1+tau)) + sigma^2 I)^{-1} }`
/// relative to `d`.
pub fn dbar_residual(d: f64, tau: f64, spectrum: &GramSpectrum, noise_power: f64, users: usize) -> f64 {
    let kf = users as f64;
    let sigma2 = noise_power / kf;
    let rhs = spectrum.resolvent_trace(tau / (d * (1.0 + tau)), sigma2) / kf;
    (d - rhs).abs() / d
}

pub(crate) fn solve_dbar_unchecked(tau: f64, spectrum: &GramSpectrum, noise_power: f64, users: usize) -> Result<f64> {
    let kf = users as f64;
    let sigma2 = noise_power / kf;
    let trace = spectrum.trace();
    if !(trace > 0.0) {
        return Err(domain("channel factor is zero"));
    }
    if tau == 0.0 {
        return Ok(trace / (kf * sigma2));
    }
    if spectrum.rank() as f64 * (1.0 + tau) / tau <= kf {
        return Err(domain(format!(
            "no positive solution: rank {} too small for {} users at tau = {tau}",
            spectrum.rank(),
            users
        )));
    }
    // divided by d: 1 = (1/K) Trace{ UU^H (UU^H tau/(1+tau) + sigma^2 d I)^{-1} }
    let a = tau / (1.0 + tau);
    let normalized = |d: f64| spectrum.resolvent_trace(a, sigma2 * d) / kf - 1.0;
    decreasing_root(normalized, trace / (kf * sigma2), "d-bar bisection")
}

/// Deterministic equivalent `d-bar(tau)` of the per-user gains `d_k(tau)`.
/// Requires fewer users than antennas.
pub fn solve_dbar(tau: f64, spectrum: &GramSpectrum, noise_power: f64, users: usize) -> Result<f64> {
    check_noise(noise_power)?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(domain(format!("tau must be nonnegative, got {tau}")));
    }
    if users == 0 || users >= spectrum.antennas() {
        return Err(domain(format!(
            "need 0 < K < M, got K = {users}, M = {}",
            spectrum.antennas()
        )));
    }
    solve_dbar_unchecked(tau, spectrum, noise_power, users)
}

/// Residual of `tau = (alpha0/K) Trace{ UU^H (UU^H alpha0/(1+tau) + sigma^2 I)^{-1} }`
/// relative to `tau`.
pub fn taubar_residual(tau: f64, alpha0: f64, spectrum: &GramSpectrum, noise_power: f64, users: usize) -> f64 {
    let kf = users as f64;
    let rhs = alpha0 / kf * spectrum.resolvent_trace(alpha0 / (1.0 + tau), noise_power / kf);
    (tau - rhs).abs() / tau
}

/// Deterministic equivalent `tau-bar` of the optimal max-min SINR.
pub fn solve_taubar(alpha0: f64, spectrum: &GramSpectrum, noise_power: f64, users: usize) -> Result<f64> {
    check_noise(noise_power)?;
    if !(alpha0 > 0.0 && alpha0.is_finite()) {
        return Err(domain(format!("alpha0 must be positive, got {alpha0}")));
    }
    if users == 0 {
        return Err(domain("no users"));
    }
    let kf = users as f64;
    let sigma2 = noise_power / kf;
    let trace = spectrum.trace();
    if !(trace > 0.0) {
        return Err(domain("channel factor is zero"));
    }
    // divided by tau: 1 = (alpha0/K) Trace{ UU^H (UU^H alpha0 tau/(1+tau) + sigma^2 tau I)^{-1} }
    let normalized = |tau: f64| alpha0 / kf * spectrum.resolvent_trace(alpha0 * tau / (1.0 + tau), sigma2 * tau) - 1.0;
    decreasing_root(normalized, alpha0 * trace / (kf * sigma2), "tau-bar bisection")
}

/// Deterministic equivalents of the equal-SINR level and the gains.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicEquivalent {
    pub tau_bar: f64,
    pub d_bar: f64,
    pub alpha0: f64,
    pub residual_tau: f64,
    pub residual_d: f64,
}

impl DeterministicEquivalent {
    /// Asymptotic per-user powers `p_k / K = alpha0 / (K l_k)`.
    pub fn powers(&self, path_losses: &[f64]) -> Vec<f64> {
        let kf = path_losses.len() as f64;
        path_losses.iter().map(|l| self.alpha0 / (kf * l)).collect()
    }
}

pub fn deterministic_equivalent(
    alpha0: f64,
    spectrum: &GramSpectrum,
    noise_power: f64,
    users: usize,
) -> Result<DeterministicEquivalent> {
    let tau_bar = solve_taubar(alpha0, spectrum, noise_power, users)?;
    let d_bar = solve_dbar_unchecked(tau_bar, spectrum, noise_power, users)?;
    Ok(DeterministicEquivalent {
        tau_bar,
        d_bar,
        alpha0,
        residual_tau: taubar_residual(tau_bar, alpha0, spectrum, noise_power, users),
        residual_d: dbar_residual(d_bar, tau_bar, spectrum, noise_power, users),
    })
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// System size `(K, M, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub users: usize,
    pub antennas: usize,
    pub ris_elements: usize,
}

impl Dims {
    pub const fn new(users: usize, antennas: usize, ris_elements: usize) -> Self {
        Self {
            users,
            antennas,
            ris_elements,
        }
    }

    pub fn apply(&self, base: &SystemConfig) -> SystemConfig {
        let mut cfg = base.clone();
        cfg.users = self.users;
        cfg.antennas = self.antennas;
        cfg.ris_elements = self.ris_elements;
        cfg
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.users, self.antennas, self.ris_elements)
    }
}

/// Summary of one error metric at one system size.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePoint {
    pub dims: Dims,
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
}

impl ConvergencePoint {
    fn from_samples(dims: Dims, samples: &[f64]) -> Self {
        let (mean, std) = mean_std(samples);
        Self {
            dims,
            trials: samples.len(),
            mean,
            std,
        }
    }
}

/// Per-size averages of a finite-size error that should vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub metric: &'static str,
    pub points: Vec<ConvergencePoint>,
}

impl ConvergenceReport {
    /// True when the mean error never increases with the system size.
    pub fn is_non_increasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].mean <= w[0].mean)
    }
}

/// Draw statistics and one fading realization for a validation trial.
fn trial_channels(
    config: &SystemConfig,
    seed: u64,
    size_index: u64,
    trial: u64,
) -> Result<(ChannelStatistics, ChannelRealization)> {
    let mut rng = stream_rng(seed, Stream::Validation, &[size_index, trial]);
    let geometry = config.deployment.sample(config.users, &mut rng);
    let stats = ChannelStatistics::generate(config, &geometry, &mut rng)?;
    let real = ChannelRealization::sample(config.ris_elements, config.users, &mut rng);
    Ok((stats, real))
}

/// Per-size spread `max_k |d_k(tau) - d-bar(tau)| / d-bar(tau)` between the
/// instantaneous fixed point and its deterministic equivalent, with the RIS
/// phases at zero.
pub fn validate_theorem1(
    tau: f64,
    base: &SystemConfig,
    n_trials: usize,
    dims: &[Dims],
    seed: u64,
    exec: Execution,
) -> Result<ConvergenceReport> {
    let mut points = Vec::with_capacity(dims.len());
    for (si, d) in dims.iter().enumerate() {
        let cfg = d.apply(base);
        let samples = map_indexed(exec, n_trials, |t| -> Result<f64> {
            let (stats, real) = trial_channels(&cfg, seed, si as u64, t as u64)?;
            let u = stats.cascade(&PhaseVector::zeros(cfg.ris_elements))?;
            let g_tilde = &u * &real.h2_tilde;
            let state = interference_fixed_point(tau, &g_tilde, stats.noise_power)?;
            let dbar = solve_dbar(tau, &GramSpectrum::new(&u), stats.noise_power, cfg.users)?;
            Ok(state.d.iter().map(|dk| (dk - dbar).abs() / dbar).fold(0.0, f64::max))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        points.push(ConvergencePoint::from_samples(*d, &samples));
    }
    Ok(ConvergenceReport {
        metric: "max_k |d_k - dbar| / dbar",
        points,
    })
}

/// Reports for the optimal SINR and the powers against their deterministic
/// equivalents.
#[derive(Debug, Clone, PartialEq)]
pub struct Theorem2Report {
    pub tau: ConvergenceReport,
    pub power: ConvergenceReport,
}

/// Per-size errors `|tau* - tau-bar| / tau-bar` and
/// `max_k |K p_k l_k - alpha0| / alpha0`, with the RIS phases at zero and the
/// caps derived from the configuration's power and exposure limits.
pub fn validate_theorem2(
    base: &SystemConfig,
    n_trials: usize,
    dims: &[Dims],
    seed: u64,
    exec: Execution,
) -> Result<Theorem2Report> {
    let mut tau_points = Vec::with_capacity(dims.len());
    let mut power_points = Vec::with_capacity(dims.len());
    for (si, d) in dims.iter().enumerate() {
        let cfg = d.apply(base);
        let caps = emf_to_power_bounds(&ExposureSpec::from_config(&cfg))?.per_user_caps;
        let samples = map_indexed(exec, n_trials, |t| -> Result<(f64, f64)> {
            let (stats, real) = trial_channels(&cfg, seed, si as u64, t as u64)?;
            let u = stats.cascade(&PhaseVector::zeros(cfg.ris_elements))?;
            let g_tilde = &u * &real.h2_tilde;
            let alloc = allocate_power_instantaneous(&g_tilde, &stats.path_losses, &caps, stats.noise_power)?;
            let a0 = alpha0(&stats.path_losses, &caps)?;
            let de = deterministic_equivalent(a0, &GramSpectrum::new(&u), stats.noise_power, cfg.users)?;
            let tau_star = alloc.tau_star.unwrap_or(f64::NAN);
            let kf = cfg.users as f64;
            let power_err = alloc
                .p_phys
                .iter()
                .zip(&stats.path_losses)
                .map(|(p, l)| (kf * p * l - a0).abs() / a0)
                .fold(0.0, f64::max);
            Ok(((tau_star - de.tau_bar).abs() / de.tau_bar, power_err))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let taus: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let powers: Vec<f64> = samples.iter().map(|s| s.1).collect();
        tau_points.push(ConvergencePoint::from_samples(*d, &taus));
        power_points.push(ConvergencePoint::from_samples(*d, &powers));
    }
    Ok(Theorem2Report {
        tau: ConvergenceReport {
            metric: "|tau* - taubar| / taubar",
            points: tau_points,
        },
        power: ConvergenceReport {
            metric: "max_k |K p_k l_k - alpha0| / alpha0",
            points: power_points,
        },
    })
}

/// Deterministic approximation of a normalized resolvent trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolventEquivalent {
    /// Solution `e(z)` of the canonical equation.
    pub e: f64,
    /// `(1/K) Trace{ C (-z I + R/(1+e))^{-1} }`
    pub value: f64,
    pub iterations: usize,
}

/// Deterministic equivalent of `(1/K) Trace{ C (B - z I)^{-1} }` for
/// `B = (1/K) U X X^H U^H` with i.i.d. unit-variance `X` (N x K), `R = U U^H`
/// and `z < 0`. `C` is M x M like `R`.
pub fn resolvent_trace_equivalent(c_mat: &CMatrix, u: &CMatrix, z: f64, users: usize) -> Result<ResolventEquivalent> {
    if !(z < 0.0) {
        return Err(domain(format!("z must be negative, got {z}")));
    }
    let m = u.nrows();
    if c_mat.nrows() != m || c_mat.ncols() != m {
        return Err(domain("C must match the row dimension of U"));
    }
    if users == 0 {
        return Err(domain("no users"));
    }
    let kf = users as f64;
    let eig = hermitian_eigen(&(u * u.adjoint()));
    let lambdas: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let mut e = 0.0;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let next = lambdas.iter().map(|&l| l / (-z + l / (1.0 + e))).sum::<f64>() / kf;
        let delta = (next - e).abs();
        e = next;
        if delta <= ROOT_TOL * e.abs().max(f64::MIN_POSITIVE) || e == 0.0 {
            break;
        }
        if iterations >= 100_000 {
            return Err(Error::Convergence {
                what: "resolvent fixed point",
                iterations,
                residual: delta,
            });
        }
    }
    // C in the eigenbasis of R: only its diagonal matters for the trace
    let rotated = eig.eigenvectors.adjoint() * c_mat * &eig.eigenvectors;
    let value = lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| rotated[(i, i)].re / (-z + l / (1.0 + e)))
        .sum::<f64>()
        / kf;
    Ok(ResolventEquivalent { e, value, iterations })
}

/// One Monte-Carlo draw of `(1/K) Trace{ C (B - z I)^{-1} }`.
pub fn empirical_resolvent_trace<R: Rng + ?Sized>(
    c_mat: &CMatrix,
    u: &CMatrix,
    z: f64,
    users: usize,
    rng: &mut R,
) -> Result<f64> {
    let x = complex_normal_matrix(u.ncols(), users, rng);
    let ux = u * x;
    let kf = users as f64;
    let mut shifted = &ux * ux.adjoint() * c(1.0 / kf);
    for i in 0..shifted.nrows() {
        shifted[(i, i)] -= c(z);
    }
    let chol = crate::linalg::hpd_factor(shifted)?;
    let solved = chol.solve(c_mat);
    Ok(solved.trace().re / kf)
}

/// Empirical distribution of `(1/M) y^H A y` for `y ~ CN(0, I_M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadFormReport {
    pub dimension: usize,
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
    /// `(1/M) Trace{A}`, the concentration point.
    pub normalized_trace: f64,
}

pub fn quadratic_form_concentration<R: Rng + ?Sized>(
    a: &CMatrix,
    n_trials: usize,
    rng: &mut R,
) -> Result<QuadFormReport> {
    if !a.is_square() {
        return Err(domain("A must be square"));
    }
    let m = a.nrows();
    let mf = m as f64;
    let samples: Vec<f64> = (0..n_trials)
        .map(|_| {
            let y = complex_normal_matrix(m, 1, rng);
            (y.adjoint() * a * &y)[(0, 0)].re / mf
        })
        .collect();
    let (mean, std) = mean_std(&samples);
    Ok(QuadFormReport {
        dimension: m,
        trials: n_trials,
        mean,
        std,
        normalized_trace: a.trace().re / mf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn identity_spectrum(m: usize) -> GramSpectrum {
        GramSpectrum::new(&CMatrix::identity(m, m))
    }

    fn random_u(m: usize, n: usize, seed: u64) -> CMatrix {
        complex_normal_matrix(m, n, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn dbar_identity_channel() {
        // 1 = 2 / (tau/(1+tau) + d) at tau = 1 gives d = 1.5
        let d = solve_dbar(1.0, &identity_spectrum(8), 4.0, 4).unwrap();
        assert!(rel(d, 1.5) < 1e-12);
    }

    #[test]
    fn dbar_at_zero_tau() {
        let u = random_u(6, 9, 1);
        let s = GramSpectrum::new(&u);
        let d = solve_dbar(0.0, &s, 0.3, 3).unwrap();
        let expect = (&u * u.adjoint()).trace().re / 3.0 / (0.3 / 3.0);
        assert!(rel(d, expect) < 1e-12);
    }

    #[test]
    fn dbar_residual_is_small() {
        for seed in 0..10 {
            let u = random_u(8, 12, seed);
            let s = GramSpectrum::new(&u);
            let tau = 0.2 + seed as f64;
            let d = solve_dbar(tau, &s, 0.5, 5).unwrap();
            assert!(dbar_residual(d, tau, &s, 0.5, 5) < 1e-12);
        }
    }

    #[test]
    fn dbar_needs_fewer_users_than_antennas() {
        assert!(solve_dbar(1.0, &identity_spectrum(4), 1.0, 4).is_err());
        assert!(solve_dbar(-1.0, &identity_spectrum(4), 1.0, 2).is_err());
    }

    #[test]
    fn taubar_identity_channel() {
        let s = identity_spectrum(8);
        let t = solve_taubar(1.0, &s, 4.0, 4).unwrap();
        assert!(rel(t, 2f64.sqrt()) < 1e-12);
        let d = solve_dbar(t, &s, 4.0, 4).unwrap();
        assert!(rel(d, 2f64.sqrt()) < 1e-12);
    }

    #[test]
    fn taubar_vanishes_with_power() {
        let s = GramSpectrum::new(&random_u(6, 10, 3));
        let t = solve_taubar(1e-12, &s, 1.0, 3).unwrap();
        assert!(t < 1e-9);
        assert!(solve_taubar(0.0, &s, 1.0, 3).is_err());
    }

    #[test]
    fn identity_between_equivalents() {
        for seed in 0..10 {
            let u = random_u(10, 7, seed);
            let s = GramSpectrum::new(&u);
            let a0 = 0.1 * (seed + 1) as f64;
            let de = deterministic_equivalent(a0, &s, 0.7, 4).unwrap();
            assert!(rel(de.tau_bar / de.d_bar, a0) < 1e-9);
            assert!(de.residual_tau < ROOT_TOL && de.residual_d < ROOT_TOL);
        }
    }

    #[test]
    fn monotonicity_of_equivalents() {
        let s = GramSpectrum::new(&random_u(8, 16, 4));
        let mut prev = f64::INFINITY;
        for i in 0..30 {
            let d = solve_dbar(0.1 * i as f64, &s, 1.0, 4).unwrap();
            assert!(d < prev);
            prev = d;
        }
        let mut prev = f64::INFINITY;
        for i in 1..30 {
            let d = solve_dbar(1.0, &s, 0.1 * i as f64, 4).unwrap();
            assert!(d < prev);
            prev = d;
        }
        let mut prev = 0.0;
        for i in 1..30 {
            let t = solve_taubar(0.05 * i as f64, &s, 1.0, 4).unwrap();
            assert!(t > prev);
            prev = t;
        }
    }

    #[test]
    fn naive_iteration_agrees_with_bisection() {
        // independent route: plain fixed-point iteration of the unnormalized
        // equations from two different starting points
        let u = random_u(8, 12, 9);
        let s = GramSpectrum::new(&u);
        let (noise, k, tau, a0) = (0.8, 3usize, 1.3, 0.6);
        let kf = k as f64;
        let iterate_d = |mut d: f64| {
            for _ in 0..100_000 {
                d = s.resolvent_trace(tau / (d * (1.0 + tau)), noise / kf) / kf;
            }
            d
        };
        let iterate_t = |mut t: f64| {
            for _ in 0..100_000 {
                t = a0 / kf * s.resolvent_trace(a0 / (1.0 + t), noise / kf);
            }
            t
        };
        let d = solve_dbar(tau, &s, noise, k).unwrap();
        assert!(rel(iterate_d(0.01), d) < 1e-9);
        assert!(rel(iterate_d(1e3), d) < 1e-9);
        let t = solve_taubar(a0, &s, noise, k).unwrap();
        assert!(rel(iterate_t(1e-3), t) < 1e-9);
        assert!(rel(iterate_t(1e3), t) < 1e-9);
    }

    #[test]
    fn resolvent_with_zero_channel() {
        let u = CMatrix::zeros(4, 4);
        let cm = CMatrix::identity(4, 4) * c(2.0);
        let r = resolvent_trace_equivalent(&cm, &u, -0.5, 2).unwrap();
        assert!(rel(r.value, 8.0 / 2.0 / 0.5) < 1e-14);
    }

    #[test]
    fn resolvent_identity_case() {
        // e = (M/K) / (1 + 1/(1+e)) with M/K = 2 reduces to e^2 = 2
        let oracle = {
            // bisection on the scalar equation, written out independently
            let f = |e: f64| 2.0 / (1.0 + 1.0 / (1.0 + e)) - e;
            let (mut lo, mut hi) = (0.0, 10.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            lo
        };
        assert!(rel(oracle, 2f64.sqrt()) < 1e-12);
        let eye = CMatrix::identity(8, 8);
        let r = resolvent_trace_equivalent(&eye, &eye, -1.0, 4).unwrap();
        assert!(rel(r.e, oracle) < 1e-10);
        assert!(rel(r.value, r.e) < 1e-12);
    }

    #[test]
    fn resolvent_monte_carlo() {
        let (k, m) = (32, 64);
        let u = complex_normal_matrix(m, m, &mut ChaCha8Rng::seed_from_u64(1)) * c(1.0 / (m as f64).sqrt());
        let cm = crate::model::exp_correlation_matrix(0.5, m).unwrap();
        let det = resolvent_trace_equivalent(&cm, &u, -0.5, k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws: Vec<f64> = (0..20)
            .map(|_| empirical_resolvent_trace(&cm, &u, -0.5, k, &mut rng).unwrap())
            .collect();
        let (mean, _) = mean_std(&draws);
        assert!(rel(mean, det.value) < 0.05, "{mean} vs {}", det.value);
        assert!(rel(draws[0], det.value) < 0.05);
    }

    #[test]
    fn resolvent_rejects_nonnegative_z() {
        let eye = CMatrix::identity(2, 2);
        assert!(resolvent_trace_equivalent(&eye, &eye, 0.0, 1).is_err());
    }

    #[test]
    fn quadratic_form_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = quadratic_form_concentration(&CMatrix::identity(64, 64), 2000, &mut rng).unwrap();
        assert!(rel(r.mean, 1.0) < 0.02);
        assert!(r.std < 0.2);
    }

    #[test]
    fn quadratic_form_single_entry() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut a = CMatrix::zeros(16, 16);
        a[(0, 0)] = c(1.0);
        let r = quadratic_form_concentration(&a, 20_000, &mut rng).unwrap();
        assert!(rel(r.mean, 1.0 / 16.0) < 0.05);
    }

    #[test]
    fn quadratic_form_shrinks_like_inverse_sqrt() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut std_at = |m: usize| {
            let x = complex_normal_matrix(m, m, &mut rng) * c(1.0 / (m as f64).sqrt());
            let a = &x * x.adjoint();
            quadratic_form_concentration(&a, 2000, &mut rng).unwrap().std
        };
        let ratio = std_at(32) / std_at(128);
        assert!((1.0..=3.0).contains(&ratio), "ratio {ratio}");
    }
}
