//! Physical parameters of the dimer and the `Z2` exchange symmetry.
//!
//! The drive configuration is fixed to `F1 = F`, `F2 = -F` with `J > 0`,
//! which selectively excites the anti-bonding mode.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("loss rate gamma must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("interaction U must be non-negative, got {0}")]
    NegativeInteraction(f64),
    #[error("hopping J must be positive, got {0}")]
    NonPositiveHopping(f64),
    #[error("drive amplitude F must be real and non-negative, got {0}")]
    NegativeDrive(f64),
    #[error("parameter {name} is not finite")]
    NotFinite { name: &'static str },
    #[error("a rescaled drive needs U > 0")]
    ZeroInteraction,
}

/// Dimer parameters in the frame rotating at the drive frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimerParams {
    /// Hopping rate between the two sites.
    pub j: f64,
    /// Drive detuning `omega_p - omega_c`.
    pub delta: f64,
    /// Single-particle loss rate.
    pub gamma: f64,
    /// On-site interaction.
    pub u: f64,
    /// Drive amplitude on site 1; site 2 is driven with `-f`.
    pub f: f64,
}

impl DimerParams {
    pub fn new(j: f64, delta: f64, gamma: f64, u: f64, f: f64) -> Result<Self, ParamError> {
        let p = Self { j, delta, gamma, u, f };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with the physical drive chosen so that `sqrt(U) F / gamma^{3/2} = uf`.
    pub fn from_rescaled(
        j: f64,
        delta: f64,
        gamma: f64,
        u: f64,
        uf: f64,
    ) -> Result<Self, ParamError> {
        let mut p = Self::new(j, delta, gamma, u, 0.0)?;
        p.set_rescaled_drive(RescaledDrive(uf))?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, v) in [
            ("J", self.j),
            ("delta", self.delta),
            ("gamma", self.gamma),
            ("U", self.u),
            ("F", self.f),
        ] {
            if !v.is_finite() {
                return Err(ParamError::NotFinite { name });
            }
        }
        if self.gamma <= 0.0 {
            return Err(ParamError::NonPositiveGamma(self.gamma));
        }
        if self.u < 0.0 {
            return Err(ParamError::NegativeInteraction(self.u));
        }
        if self.j <= 0.0 {
            return Err(ParamError::NonPositiveHopping(self.j));
        }
        if self.f < 0.0 {
            return Err(ParamError::NegativeDrive(self.f));
        }
        Ok(())
    }

    /// Drive amplitudes `(F1, F2)` of the anti-bonding configuration.
    pub fn drives(&self) -> (f64, f64) {
        (self.f, -self.f)
    }

    pub fn rescale(&self) -> RescaledDrive {
        rescale(self)
    }

    /// Sets `F` from a rescaled drive; requires `U > 0`.
    pub fn set_rescaled_drive(&mut self, uf: RescaledDrive) -> Result<(), ParamError> {
        if self.u <= 0.0 {
            return Err(ParamError::ZeroInteraction);
        }
        if !(uf.0 >= 0.0) {
            return Err(ParamError::NegativeDrive(uf.0));
        }
        self.f = uf.0 * self.gamma.powf(1.5) / self.u.sqrt();
        Ok(())
    }

    pub fn with_rescaled_drive(mut self, uf: f64) -> Result<Self, ParamError> {
        self.set_rescaled_drive(RescaledDrive(uf))?;
        Ok(self)
    }

    pub fn with_interaction(mut self, u: f64) -> Self {
        self.u = u;
        self
    }

    pub fn with_drive(mut self, f: f64) -> Self {
        self.f = f;
        self
    }
}

/// Dimensionless drive `sqrt(U) F / gamma^{3/2}`, the only drive combination
/// the mean-field and Gaussian equations depend on.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RescaledDrive(pub f64);

impl RescaledDrive {
    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn rescale(params: &DimerParams) -> RescaledDrive {
    RescaledDrive(params.u.sqrt() * params.f / params.gamma.powf(1.5))
}

/// Open detuning interval `(-J + sqrt(3) gamma / 2, J)` inside which the
/// symmetric state can undergo the symmetry-breaking bifurcations.
///
/// Returns `None` when the interval is empty (`J <= sqrt(3) gamma / 4`).
/// Only `J` and `gamma` are read, so `gamma = 0` is accepted here.
pub fn symmetry_window(params: &DimerParams) -> Option<(f64, f64)> {
    let lo = -params.j + 3f64.sqrt() * params.gamma / 2.0;
    let hi = params.j;
    (lo < hi).then_some((lo, hi))
}

/// `a1 <-> -a2`.
pub fn z2_transform(amplitudes: (Complex64, Complex64)) -> (Complex64, Complex64) {
    (-amplitudes.1, -amplitudes.0)
}
