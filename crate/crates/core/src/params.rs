use alloc::format;

use crate::error::ConfigError;
use crate::fidelity::Fidelity;

/// Speed of the classical signal in free space, m/s.
pub const FREE_SPACE_SIGNAL_SPEED: f64 = 3.0e8;
/// Speed of the classical signal in optical fiber, m/s.
pub const FIBER_SIGNAL_SPEED: f64 = 2.0e8;

/// Physical layer parameters shared by every link and node of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Dephasing rate of stored pairs, Hz.
    pub gamma: f64,
    /// Fidelity of a freshly generated link pair.
    pub f_init: Fidelity,
    /// Mean generation rate of each entangled photon source, pairs/s.
    pub epsg_rate: f64,
    pub bsm_success_prob: f64,
    /// Seconds.
    pub bsm_duration: f64,
    /// Seconds.
    pub xz_duration: f64,
    /// Classical signal propagation speed, m/s.
    pub signal_speed: f64,
    /// Decay-rate multiplier applied to swapped (composite) pairs. 1.0 keeps a
    /// single `gamma` for every stored pair.
    pub composite_decay_factor: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            f_init: Fidelity::new(0.95),
            epsg_rate: 100.0,
            bsm_success_prob: 0.95,
            bsm_duration: 1e-3,
            xz_duration: 1e-3,
            signal_speed: FREE_SPACE_SIGNAL_SPEED,
            composite_decay_factor: 1.0,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("gamma", self.gamma)?;
        positive("epsg_rate", self.epsg_rate)?;
        positive("bsm_duration", self.bsm_duration)?;
        positive("xz_duration", self.xz_duration)?;
        positive("signal_speed", self.signal_speed)?;
        positive("composite_decay_factor", self.composite_decay_factor)?;
        if !(self.bsm_success_prob > 0.0 && self.bsm_success_prob <= 1.0) {
            return Err(ConfigError::OutOfRange {
                name: "bsm_success_prob",
                reason: format!("{} not in (0, 1]", self.bsm_success_prob),
            });
        }
        if self.f_init.value() < 0.25 {
            return Err(ConfigError::OutOfRange {
                name: "f_init",
                reason: format!("{} below the fully mixed value 0.25", self.f_init),
            });
        }
        Ok(())
    }

    /// Effective decay rate of a pair produced by at least one swap.
    pub fn composite_gamma(&self) -> f64 {
        self.gamma * self.composite_decay_factor
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange {
            name,
            reason: format!("{value} must be finite and strictly positive"),
        })
    }
}
