//! Geometry, path loss, spatial correlation and random channel generation.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{domain, Result};
use crate::linalg::{c, psd_sqrt, spectral_norm, CMatrix};
use crate::phaseopt::PhaseVector;

/// Offset (dB) of the line-of-sight UMi path-loss model at 2.5 GHz.
const LOS_OFFSET_DB: f64 = 35.95;
const LOS_EXPONENT: f64 = 2.2;
const NLOS_OFFSET_DB: f64 = 33.05;
const NLOS_EXPONENT: f64 = 3.67;

/// Thermal noise density in dBm/Hz.
const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

/// Static description of the simulated system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// BS antennas (M).
    pub antennas: usize,
    /// RIS elements (N).
    pub ris_elements: usize,
    /// Users (K).
    pub users: usize,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    /// Rician factor of the BS-RIS link.
    pub rician_kappa: f64,
    pub corr_eta_ris: f64,
    pub corr_eta_users: f64,
    /// Noise bandwidth in Hz.
    pub noise_bandwidth: f64,
    pub gain_bs_dbi: f64,
    pub gain_user_dbi: f64,
    pub gain_ris_dbi: f64,
    /// Per-user transmit power limit in Watts.
    pub p_max: f64,
    /// SAR per Watt of transmit power (W/kg/W).
    pub sar_ref: f64,
    /// Maximum permissible SAR (W/kg).
    pub sar_max: f64,
    /// BS inter-antenna spacing in meters.
    pub spacing_bs: f64,
    /// RIS inter-element spacing in meters.
    pub spacing_ris: f64,
    pub deployment: Deployment,
}

impl SystemConfig {
    /// The simulation setup used throughout the evaluation: 2.5 GHz carrier,
    /// Rician factor 10, exponential correlation 0.95, 100 MHz bandwidth,
    /// 500 mW power limit and data-user SAR constants.
    pub fn reference(users: usize, antennas: usize, ris_elements: usize) -> Self {
        let wavelength = 299_792_458.0 / 2.5e9;
        Self {
            antennas,
            ris_elements,
            users,
            wavelength,
            rician_kappa: 10.0,
            corr_eta_ris: 0.95,
            corr_eta_users: 0.95,
            noise_bandwidth: 100e6,
            gain_bs_dbi: 5.0,
            gain_user_dbi: 0.0,
            gain_ris_dbi: 0.0,
            p_max: 0.5,
            sar_ref: 63e-4,
            sar_max: 0.0029,
            spacing_bs: 0.5 * wavelength,
            spacing_ris: 0.5 * wavelength,
            deployment: Deployment::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 || self.ris_elements == 0 || self.users == 0 {
            return Err(domain("M, N and K must all be at least 1"));
        }
        if !(self.rician_kappa >= 0.0) {
            return Err(domain("rician_kappa must be nonnegative"));
        }
        for (name, eta) in [
            ("corr_eta_ris", self.corr_eta_ris),
            ("corr_eta_users", self.corr_eta_users),
        ] {
            if !(0.0..1.0).contains(&eta) {
                return Err(domain(format!("{name} = {eta} outside [0, 1)")));
            }
        }
        if !(self.noise_bandwidth > 0.0) {
            return Err(domain("noise bandwidth must be positive"));
        }
        if !(self.p_max > 0.0) {
            return Err(domain("p_max must be positive"));
        }
        if !(self.wavelength > 0.0) {
            return Err(domain("wavelength must be positive"));
        }
        if !(self.sar_ref > 0.0) || !(self.sar_max > 0.0) {
            return Err(domain("SAR parameters must be positive"));
        }
        self.deployment.validate()
    }

    /// Thermal noise power in Watts over the configured bandwidth.
    pub fn noise_power(&self) -> f64 {
        dbm_to_watts(THERMAL_NOISE_DBM_HZ + 10.0 * self.noise_bandwidth.log10())
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1e3).log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub type Point = [f64; 3];

pub fn distance(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Node positions in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub bs_position: Point,
    pub ris_position: Point,
    pub user_positions: Vec<Point>,
}

impl Geometry {
    pub fn new(bs_position: Point, ris_position: Point, user_positions: Vec<Point>) -> Result<Self> {
        if distance(&bs_position, &ris_position) <= 0.0 {
            return Err(domain("BS and RIS positions coincide"));
        }
        if let Some(k) = user_positions.iter().position(|u| distance(u, &ris_position) <= 0.0) {
            return Err(domain(format!("user {k} coincides with the RIS")));
        }
        Ok(Self {
            bs_position,
            ris_position,
            user_positions,
        })
    }

    /// Users dropped in the reference deployment.
    pub fn sample_reference<R: Rng + ?Sized>(users: usize, rng: &mut R) -> Self {
        Deployment::default().sample(users, rng)
    }

    pub fn ris_bs_distance(&self) -> f64 {
        distance(&self.bs_position, &self.ris_position)
    }

    pub fn user_ris_distances(&self) -> Vec<f64> {
        self.user_positions
            .iter()
            .map(|u| distance(u, &self.ris_position))
            .collect()
    }
}

/// Fixed BS and RIS positions plus the box users are dropped in.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub bs_position: Point,
    pub ris_position: Point,
    pub user_x: (f64, f64),
    pub user_y: (f64, f64),
    pub user_height: f64,
}

impl Default for Deployment {
    /// BS at (0, 0, 10), RIS at (10, 10, 15), users at height 1.5 m with
    /// x ~ U[10, 15] and y ~ U[5, 10].
    fn default() -> Self {
        Self {
            bs_position: [0.0, 0.0, 10.0],
            ris_position: [10.0, 10.0, 15.0],
            user_x: (10.0, 15.0),
            user_y: (5.0, 10.0),
            user_height: 1.5,
        }
    }
}

impl Deployment {
    pub fn validate(&self) -> Result<()> {
        if distance(&self.bs_position, &self.ris_position) <= 0.0 {
            return Err(domain("BS and RIS positions coincide"));
        }
        for (name, (lo, hi)) in [("user_x", self.user_x), ("user_y", self.user_y)] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(domain(format!("{name} range [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }

    fn draw(range: (f64, f64), rng: &mut (impl Rng + ?Sized)) -> f64 {
        if range.0 == range.1 {
            range.0
        } else {
            rng.random_range(range.0..range.1)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, users: usize, rng: &mut R) -> Geometry {
        let user_positions = (0..users)
            .map(|_| {
                [
                    Self::draw(self.user_x, rng),
                    Self::draw(self.user_y, rng),
                    self.user_height,
                ]
            })
            .collect();
        Geometry {
            bs_position: self.bs_position,
            ris_position: self.ris_position,
            user_positions,
        }
    }
}

fn umi_path_loss(d: f64, g_t: f64, g_r: f64, offset: f64, exponent: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(domain(format!("path loss needs a positive distance, got {d}")));
    }
    Ok(db_to_linear(g_t + g_r - offset) / d.powf(exponent))
}

/// Line-of-sight UMi path loss (linear power gain) at distance `d` meters
/// with antenna gains in dBi.
pub fn path_loss_los(d: f64, g_t: f64, g_r: f64) -> Result<f64> {
    umi_path_loss(d, g_t, g_r, LOS_OFFSET_DB, LOS_EXPONENT)
}

/// Non-line-of-sight UMi path loss (linear power gain).
pub fn path_loss_nlos(d: f64, g_t: f64, g_r: f64) -> Result<f64> {
    umi_path_loss(d, g_t, g_r, NLOS_OFFSET_DB, NLOS_EXPONENT)
}

/// Exponential correlation matrix with entries `eta^|i-j|`.
pub fn exp_correlation_matrix(eta: f64, n: usize) -> Result<CMatrix> {
    if !(0.0..1.0).contains(&eta) {
        return Err(domain(format!("correlation coefficient {eta} outside [0, 1)")));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| c(eta.powi(i.abs_diff(j) as i32))))
}

/// Draw one standard complex Gaussian, CN(0, 1).
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

pub fn complex_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    // column-major fill keeps the draw order stable across nalgebra versions
    let data: Vec<Complex64> = (0..rows * cols).map(|_| complex_normal(rng)).collect();
    DMatrix::from_vec(rows, cols, data)
}

/// Line-of-sight array response between the BS and the RIS. Departure
/// angles are drawn per RIS element and arrival angles per BS antenna.
pub fn sample_los_component<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> CMatrix {
    let (m, n) = (config.antennas, config.ris_elements);
    let mut draw_angles = |count: usize| -> Vec<f64> {
        (0..count)
            .map(|_| {
                let elevation: f64 = rng.random_range(0.0..PI);
                let azimuth: f64 = rng.random_range(0.0..2.0 * PI);
                elevation.sin() * azimuth.sin()
            })
            .collect()
    };
    let departure = draw_angles(n);
    let arrival = draw_angles(m);
    let k = 2.0 * PI / config.wavelength;
    CMatrix::from_fn(m, n, |mi, ni| {
        let phase = k * (mi as f64 * config.spacing_bs * departure[ni] + ni as f64 * config.spacing_ris * arrival[mi]);
        Complex64::from_polar(1.0, phase)
    })
}

/// BS-RIS channel: path-loss-scaled Rician mixture of the LOS response and
/// a Rayleigh component.
pub fn sample_h1<R: Rng + ?Sized>(config: &SystemConfig, geometry: &Geometry, rng: &mut R) -> Result<CMatrix> {
    let (m, n) = (config.antennas, config.ris_elements);
    let pl = path_loss_los(geometry.ris_bs_distance(), config.gain_ris_dbi, config.gain_bs_dbi)?;
    let kappa = config.rician_kappa;
    let los = sample_los_component(config, rng);
    let nlos = complex_normal_matrix(m, n, rng);
    let scale = (pl / n as f64).sqrt();
    let (w_los, w_nlos) = if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (kappa + 1.0)).sqrt(), (1.0 / (kappa + 1.0)).sqrt())
    };
    Ok((los * c(w_los) + nlos * c(w_nlos)) * c(scale))
}

/// Linear user-to-RIS path losses from the geometry.
pub fn user_path_losses(config: &SystemConfig, geometry: &Geometry) -> Result<Vec<f64>> {
    geometry
        .user_ris_distances()
        .into_iter()
        .enumerate()
        .map(|(k, d)| {
            if d <= 0.0 {
                return Err(domain(format!("user {k} coincides with the RIS")));
            }
            path_loss_nlos(d, config.gain_user_dbi, config.gain_ris_dbi)
        })
        .collect()
}

/// Fast-fading draws: column k is the normalized RIS-user channel of user k.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h2_tilde: CMatrix,
}

impl ChannelRealization {
    pub fn sample<R: Rng + ?Sized>(ris_elements: usize, users: usize, rng: &mut R) -> Self {
        Self {
            h2_tilde: complex_normal_matrix(ris_elements, users, rng),
        }
    }

    pub fn users(&self) -> usize {
        self.h2_tilde.ncols()
    }
}

/// Draw the RIS-user fading and return it with the per-user path losses.
pub fn sample_h2<R: Rng + ?Sized>(
    config: &SystemConfig,
    geometry: &Geometry,
    rng: &mut R,
) -> Result<(ChannelRealization, Vec<f64>)> {
    let losses = user_path_losses(config, geometry)?;
    let real = ChannelRealization::sample(config.ris_elements, losses.len(), rng);
    Ok((real, losses))
}

/// Slow-varying quantities known under statistical CSI.
#[derive(Debug, Clone)]
pub struct ChannelStatistics {
    pub h1: CMatrix,
    pub r_ris: CMatrix,
    pub r_users: CMatrix,
    pub path_losses: Vec<f64>,
    /// Thermal noise power in Watts.
    pub noise_power: f64,
    r_ris_sqrt: CMatrix,
    r_users_sqrt: CMatrix,
}

fn check_correlation(name: &str, r: &CMatrix, n: usize) -> Result<()> {
    if r.nrows() != n || r.ncols() != n {
        return Err(domain(format!("{name} must be {n}x{n}")));
    }
    let asym = (r - r.adjoint()).norm();
    if asym > 1e-10 * r.norm().max(1.0) {
        return Err(domain(format!("{name} is not Hermitian")));
    }
    if (0..n).any(|i| (r[(i, i)] - c(1.0)).norm() > 1e-10) {
        return Err(domain(format!("{name} must have a unit diagonal")));
    }
    Ok(())
}

impl ChannelStatistics {
    pub fn new(h1: CMatrix, r_ris: CMatrix, r_users: CMatrix, path_losses: Vec<f64>, noise_power: f64) -> Result<Self> {
        let n = h1.ncols();
        check_correlation("R_RIS", &r_ris, n)?;
        check_correlation("R_users", &r_users, n)?;
        if path_losses.is_empty() || path_losses.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(domain("path losses must be positive and finite"));
        }
        if !(noise_power > 0.0) {
            return Err(domain("noise power must be positive"));
        }
        if !h1.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(domain("H1 has non-finite entries"));
        }
        let r_ris_sqrt = psd_sqrt(&r_ris)?;
        let r_users_sqrt = psd_sqrt(&r_users)?;
        Ok(Self {
            h1,
            r_ris,
            r_users,
            path_losses,
            noise_power,
            r_ris_sqrt,
            r_users_sqrt,
        })
    }

    /// Draw H1 for the geometry and build the statistics of the configured
    /// system.
    pub fn generate<R: Rng + ?Sized>(config: &SystemConfig, geometry: &Geometry, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if geometry.user_positions.len() != config.users {
            return Err(domain("geometry user count does not match K"));
        }
        let h1 = sample_h1(config, geometry, rng)?;
        let n = config.ris_elements;
        Self::new(
            h1,
            exp_correlation_matrix(config.corr_eta_ris, n)?,
            exp_correlation_matrix(config.corr_eta_users, n)?,
            user_path_losses(config, geometry)?,
            config.noise_power(),
        )
    }

    pub fn antennas(&self) -> usize {
        self.h1.nrows()
    }

    pub fn ris_elements(&self) -> usize {
        self.h1.ncols()
    }

    pub fn users(&self) -> usize {
        self.path_losses.len()
    }

    pub fn r_ris_sqrt(&self) -> &CMatrix {
        &self.r_ris_sqrt
    }

    pub fn r_users_sqrt(&self) -> &CMatrix {
        &self.r_users_sqrt
    }

    /// Noise constant after the 1/K normalization of the SINR expression.
    pub fn sigma2(&self) -> f64 {
        self.noise_power / self.users() as f64
    }

    /// `H1 R_RIS^{1/2}`; the phase-independent left factor of U.
    pub fn left_factor(&self) -> CMatrix {
        &self.h1 * &self.r_ris_sqrt
    }

    /// U = H1 R_RIS^{1/2} Phi R_users^{1/2}.
    pub fn cascade(&self, phases: &PhaseVector) -> Result<CMatrix> {
        if phases.len() != self.ris_elements() {
            return Err(domain(format!(
                "phase vector has {} entries, RIS has {}",
                phases.len(),
                self.ris_elements()
            )));
        }
        phases.check_unit_modulus()?;
        let mut left = self.left_factor();
        for (j, phi) in phases.phi().iter().enumerate() {
            let mut col = left.column_mut(j);
            col *= *phi;
        }
        Ok(left * &self.r_users_sqrt)
    }

    /// Spectral norms of H1, R_RIS and R_users.
    pub fn spectral_norms(&self) -> (f64, f64, f64) {
        (
            spectral_norm(&self.h1),
            spectral_norm(&self.r_ris),
            spectral_norm(&self.r_users),
        )
    }
}

/// Per-realization channels seen by the BS.
#[derive(Debug, Clone)]
pub struct EffectiveChannels {
    /// U = H1 R_RIS^{1/2} Phi R_users^{1/2} (M x N).
    pub u: CMatrix,
    /// Columns U h2_tilde_k, without path loss (M x K).
    pub g_tilde: CMatrix,
    /// Columns sqrt(l_k) U h2_tilde_k (M x K).
    pub g: CMatrix,
}

/// Effective per-user channels for given statistics, RIS phases and fading.
pub fn effective_channels(
    stats: &ChannelStatistics,
    phases: &PhaseVector,
    real: &ChannelRealization,
) -> Result<EffectiveChannels> {
    if real.h2_tilde.nrows() != stats.ris_elements() || real.users() != stats.users() {
        return Err(domain("realization dimensions do not match the statistics"));
    }
    let u = stats.cascade(phases)?;
    let g_tilde = &u * &real.h2_tilde;
    let mut g = g_tilde.clone();
    for (k, &l) in stats.path_losses.iter().enumerate() {
        g.column_mut(k).scale_mut(l.sqrt());
    }
    Ok(EffectiveChannels { u, g_tilde, g })
}
