//! MMSE receive beamforming and per-user SINR evaluation.
//!
//! Powers passed to this module are the per-user quantities `p_k / K` that
//! multiply each channel in the SINR expression, and the receiver noise
//! enters as `sigma^2 = noise_power / K`.

use crate::error::{domain, Result};
use crate::linalg::{c, hpd_factor, inv_quad_form, CMatrix, CVector};

/// Receive combiners, one unit-norm column per user.
#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer {
    columns: CMatrix,
}

impl Beamformer {
    /// Wraps the columns, normalizing each to unit norm.
    pub fn from_columns(mut columns: CMatrix) -> Result<Self> {
        for (k, mut col) in columns.column_iter_mut().enumerate() {
            let n = col.norm();
            if !(n > 0.0 && n.is_finite()) {
                return Err(domain(format!("beamformer {k} has zero or non-finite norm")));
            }
            col.unscale_mut(n);
        }
        Ok(Self { columns })
    }

    pub fn users(&self) -> usize {
        self.columns.ncols()
    }

    pub fn vector(&self, k: usize) -> CVector {
        self.columns.column(k).into_owned()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.columns
    }
}

/// Per-user linear SINRs and their minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    pub per_user: Vec<f64>,
    pub min_index: usize,
    pub tau: f64,
}

impl SinrReport {
    pub fn from_values(per_user: Vec<f64>) -> Self {
        let (min_index, tau) =
            per_user.iter().copied().enumerate().fold(
                (0, f64::INFINITY),
                |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) },
            );
        Self {
            per_user,
            min_index,
            tau,
        }
    }

    pub fn max(&self) -> f64 {
        self.per_user.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// max_k SINR_k - min_k SINR_k
    pub fn spread(&self) -> f64 {
        self.max() - self.tau
    }
}

fn check_inputs(g: &CMatrix, p: &[f64]) -> Result<()> {
    if g.ncols() != p.len() {
        return Err(domain(format!("{} channels but {} powers", g.ncols(), p.len())));
    }
    if let Some(k) = p.iter().position(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(domain(format!("power of user {k} is negative or non-finite")));
    }
    Ok(())
}

fn check_noise(noise_power: f64) -> Result<()> {
    if !(noise_power > 0.0 && noise_power.is_finite()) {
        return Err(domain(format!("noise power must be positive, got {noise_power}")));
    }
    Ok(())
}

/// Direct evaluation of the SINR of every user for the given combiners.
pub fn sinr_per_user(g: &CMatrix, p: &[f64], beta: &Beamformer, noise_power: f64) -> Result<SinrReport> {
    check_inputs(g, p)?;
    if beta.users() != p.len() || beta.as_matrix().nrows() != g.nrows() {
        return Err(domain("beamformer dimensions do not match the channels"));
    }
    let k_users = p.len();
    let sigma2 = noise_power / k_users as f64;
    // cross[(k, i)] = beta_k^H g_i
    let cross = beta.as_matrix().adjoint() * g;
    let per_user = (0..k_users)
        .map(|k| {
            let signal = p[k] * cross[(k, k)].norm_sqr();
            let interference: f64 = (0..k_users)
                .filter(|&i| i != k)
                .map(|i| p[i] * cross[(k, i)].norm_sqr())
                .sum();
            let noise = sigma2 * beta.as_matrix().column(k).norm_squared();
            signal / (interference + noise)
        })
        .collect();
    Ok(SinrReport::from_values(per_user))
}

/// `sum_{i != skip} p_i g_i g_i^H + sigma^2 I`
fn covariance(g: &CMatrix, p: &[f64], sigma2: f64, skip: Option<usize>) -> CMatrix {
    let m = g.nrows();
    let mut weighted = g.clone();
    for (i, mut col) in weighted.column_iter_mut().enumerate() {
        let w = if Some(i) == skip { 0.0 } else { p[i].sqrt() };
        col.scale_mut(w);
    }
    let mut cov = &weighted * weighted.adjoint();
    for d in 0..m {
        cov[(d, d)] += c(sigma2);
    }
    cov
}

/// MMSE combiners `(Sigma_k + sigma^2 I)^{-1} g_k`, normalized.
///
/// All users share one factorization of the full covariance: removing the
/// rank-one term of user k only rescales `C^{-1} g_k`, so the normalized
/// direction is unchanged.
pub fn mmse_beamformer(g: &CMatrix, p: &[f64], noise_power: f64) -> Result<Beamformer> {
    check_inputs(g, p)?;
    check_noise(noise_power)?;
    let sigma2 = noise_power / p.len() as f64;
    let chol = hpd_factor(covariance(g, p, sigma2, None))?;
    let columns = chol.solve(g);
    Beamformer::from_columns(columns)
}

/// Post-MMSE SINRs `p_k g_k^H (Sigma_k + sigma^2 I)^{-1} g_k`, evaluated with
/// one factorization per user and no combiner.
pub fn sinr_post_mmse(g: &CMatrix, p: &[f64], noise_power: f64) -> Result<SinrReport> {
    check_inputs(g, p)?;
    check_noise(noise_power)?;
    let sigma2 = noise_power / p.len() as f64;
    let per_user = (0..p.len())
        .map(|k| {
            let chol = hpd_factor(covariance(g, p, sigma2, Some(k)))?;
            Ok(p[k] * inv_quad_form(&chol, &g.column(k).into_owned()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SinrReport::from_values(per_user))
}

/// Same values as [`sinr_post_mmse`] from a single factorization of the full
/// covariance, using `g^H (C - p g g^H)^{-1} g = a / (1 - p a)` with
/// `a = g^H C^{-1} g`. Used inside optimization loops.
pub fn sinr_post_mmse_shared(g: &CMatrix, p: &[f64], noise_power: f64) -> Result<Vec<f64>> {
    let sigma2 = noise_power / p.len() as f64;
    let chol = hpd_factor(covariance(g, p, sigma2, None))?;
    let mut y = g.clone();
    chol.l_dirty().solve_lower_triangular_mut(&mut y);
    Ok(y.column_iter()
        .zip(p)
        .map(|(col, &pk)| {
            let a = col.norm_squared();
            let s = pk * a;
            // s = SINR / (1 + SINR)
            s / (1.0 - s).max(f64::MIN_POSITIVE)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::complex_normal_matrix;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    fn instance(m: usize, k: usize, seed: u64) -> (CMatrix, Vec<f64>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = complex_normal_matrix(m, k, &mut rng);
        let p = (0..k).map(|_| rng.random_range(0.1..2.0)).collect();
        (g, p, rng.random_range(0.05..1.0))
    }

    #[test]
    fn single_user_no_interference() {
        let g = CMatrix::from_column_slice(2, 1, &[c(1.0), c(0.0)]);
        let beta = Beamformer::from_columns(g.clone()).unwrap();
        let r = sinr_per_user(&g, &[2.0], &beta, 0.5).unwrap();
        assert!(rel(r.tau, 4.0) < 1e-14);
        let r = sinr_post_mmse(&g, &[2.0], 0.5).unwrap();
        assert!(rel(r.tau, 4.0) < 1e-14);
    }

    #[test]
    fn zero_power_user_has_zero_sinr() {
        let (g, mut p, noise) = instance(4, 3, 1);
        p[1] = 0.0;
        let beta = mmse_beamformer(&g, &p, noise).unwrap();
        let r = sinr_per_user(&g, &p, &beta, noise).unwrap();
        assert_eq!(r.per_user[1], 0.0);
        assert_eq!(r.min_index, 1);
    }

    #[test]
    fn orthogonal_users() {
        let g = CMatrix::from_column_slice(2, 2, &[c(2.0), c(0.0), c(0.0), Complex64::new(0.0, 3.0)]);
        let p = [0.7, 1.3];
        let noise = 0.4;
        let beta = Beamformer::from_columns(g.clone()).unwrap();
        let r = sinr_per_user(&g, &p, &beta, noise).unwrap();
        // cross terms vanish: p_k |g_k|^2 / (noise / K)
        assert!(rel(r.per_user[0], 0.7 * 4.0 / 0.2) < 1e-14);
        assert!(rel(r.per_user[1], 1.3 * 9.0 / 0.2) < 1e-14);
    }

    #[test]
    fn matched_filter_for_single_user() {
        let (g, p, noise) = instance(5, 1, 3);
        let beta = mmse_beamformer(&g, &p, noise).unwrap();
        let mf = &g / Complex64::new(g.norm(), 0.0);
        assert!((beta.as_matrix() - mf).norm() < 1e-12);
        let r = sinr_post_mmse(&g, &p, noise).unwrap();
        assert!(rel(r.tau, p[0] * g.norm_squared() / noise) < 1e-12);
    }

    #[test]
    fn closed_form_matches_direct_evaluation() {
        for seed in 0..20 {
            let (g, p, noise) = instance(4, 8.min(4 + seed as usize % 5), seed);
            let beta = mmse_beamformer(&g, &p, noise).unwrap();
            let direct = sinr_per_user(&g, &p, &beta, noise).unwrap();
            let closed = sinr_post_mmse(&g, &p, noise).unwrap();
            let shared = sinr_post_mmse_shared(&g, &p, noise).unwrap();
            for (k, &c) in closed.per_user.iter().enumerate() {
                assert!(rel(direct.per_user[k], c) < 1e-10);
                assert!(rel(shared[k], c) < 1e-9);
            }
        }
    }

    #[test]
    fn random_4x8_instance() {
        let (g, p, noise) = instance(4, 8, 77);
        let beta = mmse_beamformer(&g, &p, noise).unwrap();
        let direct = sinr_per_user(&g, &p, &beta, noise).unwrap();
        let closed = sinr_post_mmse(&g, &p, noise).unwrap();
        for k in 0..8 {
            assert!(rel(direct.per_user[k], closed.per_user[k]) < 1e-10);
        }
    }

    #[test]
    fn mmse_beats_random_combiners() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..5 {
            let (g, p, noise) = instance(4, 3, seed);
            let best = sinr_post_mmse(&g, &p, noise).unwrap();
            for _ in 0..100 {
                let beta = Beamformer::from_columns(complex_normal_matrix(4, 3, &mut rng)).unwrap();
                let r = sinr_per_user(&g, &p, &beta, noise).unwrap();
                for k in 0..3 {
                    assert!(r.per_user[k] <= best.per_user[k] * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn homogeneity() {
        let (g, p, noise) = instance(4, 3, 5);
        let scale = Complex64::new(0.3, -1.7);
        let g2 = &g * scale;
        let p2: Vec<f64> = p.iter().map(|x| x / scale.norm_sqr()).collect();
        let a = sinr_post_mmse(&g, &p, noise).unwrap();
        let b = sinr_post_mmse(&g2, &p2, noise).unwrap();
        for k in 0..3 {
            assert!(rel(a.per_user[k], b.per_user[k]) < 1e-10);
        }
    }

    #[test]
    fn more_power_never_hurts_own_sinr() {
        let (g, mut p, noise) = instance(4, 4, 8);
        let before = sinr_post_mmse(&g, &p, noise).unwrap();
        p[2] *= 1.5;
        let after = sinr_post_mmse(&g, &p, noise).unwrap();
        assert!(after.per_user[2] >= before.per_user[2]);
    }

    #[test]
    fn unit_norm_columns() {
        let (g, p, noise) = instance(6, 4, 12);
        let beta = mmse_beamformer(&g, &p, noise).unwrap();
        for col in beta.as_matrix().column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (g, p, _) = instance(3, 2, 0);
        assert!(mmse_beamformer(&g, &p, 0.0).is_err());
        assert!(sinr_post_mmse(&g, &p, -1.0).is_err());
        assert!(sinr_post_mmse(&g, &[1.0, -1.0], 1.0).is_err());
        assert!(sinr_post_mmse(&g, &[1.0], 1.0).is_err());
    }
}
