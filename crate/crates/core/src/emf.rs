//! Exposure-aware power limits.
//!
//! A user transmitting `p` Watts produces a specific absorption rate of
//! `sar_ref * p`. Bounding it by `sar_max` is another per-user power cap, so
//! the exposure-constrained problem is the plain max-min problem with the
//! tighter of the two limits.

use crate::error::{domain, Result};
use crate::model::SystemConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureSpec {
    /// SAR per Watt of transmit power, one entry per user (W/kg/W).
    pub sar_ref: Vec<f64>,
    /// Maximum SAR, one entry per user (W/kg).
    pub sar_max: Vec<f64>,
    /// Transmit power limit common to all users (W).
    pub p_max_common: f64,
}

impl ExposureSpec {
    pub fn uniform(users: usize, sar_ref: f64, sar_max: f64, p_max_common: f64) -> Self {
        Self {
            sar_ref: vec![sar_ref; users],
            sar_max: vec![sar_max; users],
            p_max_common,
        }
    }

    pub fn from_config(config: &SystemConfig) -> Self {
        Self::uniform(config.users, config.sar_ref, config.sar_max, config.p_max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sar_ref.len() != self.sar_max.len() || self.sar_ref.is_empty() {
            return Err(domain("SAR vectors must be nonempty and of equal length"));
        }
        if self.sar_ref.iter().chain(&self.sar_max).any(|&x| !(x > 0.0)) {
            return Err(domain("SAR parameters must be positive"));
        }
        if !(self.p_max_common > 0.0) {
            return Err(domain("transmit power limit must be positive"));
        }
        Ok(())
    }
}

/// Combined per-user limits.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerBounds {
    /// `min(p_max, sar_max / sar_ref)` per user, in transmit Watts.
    pub transmit_caps: Vec<f64>,
    /// The same limits divided by K: the caps on the per-user power `p_k / K`
    /// that the power-control routines take.
    pub per_user_caps: Vec<f64>,
    /// Users whose exposure limit is tighter than the transmit limit.
    pub sar_limited: Vec<usize>,
}

pub fn emf_to_power_bounds(spec: &ExposureSpec) -> Result<PowerBounds> {
    spec.validate()?;
    let k = spec.sar_ref.len() as f64;
    let mut sar_limited = Vec::new();
    let transmit_caps: Vec<f64> = spec
        .sar_ref
        .iter()
        .zip(&spec.sar_max)
        .enumerate()
        .map(|(i, (&r, &m))| {
            let exposure_cap = m / r;
            if exposure_cap < spec.p_max_common {
                sar_limited.push(i);
            }
            exposure_cap.min(spec.p_max_common)
        })
        .collect();
    let per_user_caps = transmit_caps.iter().map(|p| p / k).collect();
    Ok(PowerBounds {
        transmit_caps,
        per_user_caps,
        sar_limited,
    })
}
