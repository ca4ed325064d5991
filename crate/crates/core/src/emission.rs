//! Field emitted by the sample at the sensor and its T2 envelope.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin::{HBAR, K_B};

/// Physical constants entering the field amplitude. SI units throughout,
/// gamma_h in rad·s⁻¹·T⁻¹.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConstants {
    pub hbar: f64,
    pub mu0: f64,
    /// Proton density (m⁻³).
    pub rho_h: f64,
    /// Geometry factor of the sample volume.
    pub f3: f64,
    pub k_b: f64,
    pub temperature: f64,
    pub b_ext: f64,
    pub gamma_h: f64,
}

impl Default for SampleConstants {
    fn default() -> Self {
        Self {
            hbar: HBAR,
            mu0: 4e-7 * PI,
            rho_h: 6.6e28,
            f3: 4.1,
            k_b: K_B,
            temperature: 300.0,
            b_ext: 2.0,
            gamma_h: 2.0 * PI * 42.57e6,
        }
    }
}

impl SampleConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.hbar,
            self.mu0,
            self.rho_h,
            self.f3,
            self.k_b,
            self.temperature,
            self.b_ext,
            self.gamma_h,
        ];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("sample constants must be positive".into()))
        }
    }
}

/// Field amplitude (T) for normalized magnetization `m_x`:
/// (2π)² (ħγ)² μ0 ρ_H B F3 / (16π k_B T) · m_x.
pub fn b0_amplitude(m_x: f64, c: &SampleConstants) -> f64 {
    let hg = c.hbar * c.gamma_h;
    (2.0 * PI).powi(2) * hg * hg * c.mu0 * c.rho_h * c.b_ext * c.f3 / (16.0 * PI * c.k_b * c.temperature) * m_x
}

/// Field along the sensor axis during detection: B0·sin(Ω t).
pub fn detection_waveform(b0: f64, omega_h: f64, t: f64) -> f64 {
    b0 * (omega_h * t).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub t: f64,
    pub b0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldTrace {
    pub samples: Vec<FieldSample>,
}

impl FieldTrace {
    pub fn from_magnetization(times: &[f64], m_x: &[f64], c: &SampleConstants) -> Self {
        Self::from_scale(times, m_x, b0_amplitude(1.0, c))
    }

    /// Field proportional to `m_x` with `tesla_per_unit` at m_x = 1.
    pub fn from_scale(times: &[f64], m_x: &[f64], tesla_per_unit: f64) -> Self {
        Self {
            samples: times
                .iter()
                .zip(m_x)
                .map(|(&t, &m)| FieldSample {
                    t,
                    b0: tesla_per_unit * m,
                })
                .collect(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.b0).collect()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .map(|s| FieldSample { t: s.t, b0: s.b0 * k })
                .collect(),
        }
    }
}

/// Multiplies every sample by e^{−t/T2}.
pub fn apply_t2(trace: &FieldTrace, t2: f64) -> Result<FieldTrace> {
    if !(t2 > 0.0) {
        return Err(Error::InvalidParameter(format!("T2 must be positive, got {t2}")));
    }
    Ok(FieldTrace {
        samples: trace
            .samples
            .iter()
            .map(|s| FieldSample {
                t: s.t,
                b0: s.b0 * (-s.t / t2).exp(),
            })
            .collect(),
    })
}
