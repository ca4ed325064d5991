//! NV ensemble response under XY4 and the photon-counting measurement model.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Electron gyromagnetic ratio (rad·s⁻¹·T⁻¹).
pub const GAMMA_E: f64 = 2.0 * PI * 28.025e9;

/// Largest linear phase accepted by [`xy4_response`].
pub const LINEAR_GUARD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Xy4Config {
    pub t_rf: f64,
    pub n_pulses: usize,
    pub spacing: f64,
    pub gamma_e: f64,
    /// Angular frequency of the sensed field (rad/s).
    pub field_omega: f64,
}

impl Xy4Config {
    /// Block matched to a field at `omega_h`: two field periods, π pulses every half period.
    pub fn matched(omega_h: f64) -> Self {
        let t_rf = 2.0 * (2.0 * PI) / omega_h;
        Self {
            t_rf,
            n_pulses: 4,
            spacing: t_rf / 4.0,
            gamma_e: GAMMA_E,
            field_omega: omega_h,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pulses != 4 || (self.spacing * 4.0 - self.t_rf).abs() > 1e-12 * self.t_rf {
            return Err(Error::InvalidParameter("XY4 needs 4 pulses with spacing t_rf/4".into()));
        }
        if !(self.t_rf > 0.0 && self.field_omega > 0.0) {
            return Err(Error::InvalidParameter("XY4 times must be positive".into()));
        }
        Ok(())
    }

    /// Linear response coefficient 2γ_e t_RF/π (per tesla).
    pub fn linear_coefficient(&self) -> f64 {
        2.0 * self.gamma_e * self.t_rf / PI
    }
}

/// Phase accumulated by the NV under the XY4 switching function for B0·sin(Ωt).
pub fn xy4_phase(b0: f64, cfg: &Xy4Config) -> f64 {
    let w = cfg.field_omega;
    let mut phi = 0.0;
    let mut sign = 1.0;
    for k in 0..cfg.n_pulses {
        let (a, b) = (k as f64 * cfg.spacing, (k + 1) as f64 * cfg.spacing);
        phi += sign * ((w * a).cos() - (w * b).cos()) / w;
        sign = -sign;
    }
    cfg.gamma_e * b0 * phi
}

/// ⟨σ_y⟩ of the NV after XY4, i.e. sin of the accumulated phase.
pub fn xy4_response(b0: f64, cfg: &Xy4Config) -> Result<f64> {
    let linear = cfg.linear_coefficient() * b0;
    if !(linear.abs() < LINEAR_GUARD) {
        return Err(Error::RegimeGuard(format!(
            "linear phase {linear:.3} exceeds {LINEAR_GUARD}; rescale the field"
        )));
    }
    Ok(xy4_phase(b0, cfg).sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhotonNoise {
    /// Gaussian approximation of the aggregate Poisson count.
    Gaussian,
    Poisson,
    /// Infinite-photon limit: the estimate equals the signal.
    Noiseless,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotonModel {
    /// Mean photons per shot from one NV in the bright state.
    pub n0: f64,
    pub contrast: f64,
    pub n_nv: f64,
    pub n_reps: u64,
    pub noise: PhotonNoise,
}

impl PhotonModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast > 0.0 && self.contrast < 1.0) {
            return Err(Error::InvalidParameter("contrast must be in (0, 1)".into()));
        }
        if !(self.n0 > 0.0 && self.n_nv > 0.0) || self.n_reps == 0 {
            return Err(Error::InvalidParameter("n0, n_nv and n_reps must be positive".into()));
        }
        Ok(())
    }

    fn shots(&self) -> f64 {
        self.n_nv * self.n_reps as f64
    }

    /// Expected total count for signal `p`.
    pub fn mean_counts(&self, p: f64) -> f64 {
        self.shots() * self.n0 * (1.0 - self.contrast * (1.0 + p) / 2.0)
    }

    /// Inverts a total count into a signal estimate.
    pub fn estimate(&self, counts: f64) -> f64 {
        2.0 * (1.0 - counts / (self.shots() * self.n0)) / self.contrast - 1.0
    }

    /// Shot-noise standard deviation of the estimate at signal `p`.
    pub fn estimator_std(&self, p: f64) -> f64 {
        if self.noise == PhotonNoise::Noiseless {
            return 0.0;
        }
        2.0 * self.mean_counts(p).sqrt() / (self.contrast * self.shots() * self.n0)
    }
}

/// Noisy per-stage estimates of `p_signal` from simulated photon counts.
pub fn photon_readout<R: Rng + ?Sized>(p_signal: &[f64], model: &PhotonModel, rng: &mut R) -> Result<Vec<f64>> {
    model.validate()?;
    p_signal
        .iter()
        .map(|&p| {
            if !(p.abs() <= 1.0) {
                return Err(Error::InvalidParameter(format!("signal {p} outside [-1, 1]")));
            }
            let mean = model.mean_counts(p);
            let counts = match model.noise {
                PhotonNoise::Noiseless => mean,
                PhotonNoise::Gaussian => {
                    let n = Normal::new(mean, mean.sqrt()).map_err(|e| Error::Numerical(e.to_string()))?;
                    n.sample(rng)
                }
                PhotonNoise::Poisson => {
                    let n = Poisson::new(mean).map_err(|e| Error::Numerical(e.to_string()))?;
                    n.sample(rng)
                }
            };
            Ok(model.estimate(counts))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, CMatrix, C64};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn cfg() -> Xy4Config {
        Xy4Config::matched(2.0 * PI * 50e3)
    }

    /// Two-level NV under H = γ_e B(t) σ_z/2 with ideal X, Y, X, Y π pulses,
    /// starting from |+x⟩; the phase integrals use midpoint quadrature.
    fn brute_force(b0: f64, cfg: &Xy4Config) -> f64 {
        let s = cfg.spacing;
        let x = CMatrix::from_row_slice(2, 2, &[c(0.0), C64::new(0.0, -1.0), C64::new(0.0, -1.0), c(0.0)]);
        let y = CMatrix::from_row_slice(2, 2, &[c(0.0), c(-1.0), c(1.0), c(0.0)]);
        let mut psi = nalgebra::DVector::from_vec(vec![c(1.0 / 2f64.sqrt()), c(1.0 / 2f64.sqrt())]);
        for (k, pulse) in [&x, &y, &x, &y].iter().enumerate() {
            let n = 20_000;
            let h = s / n as f64;
            let theta: f64 = (0..n)
                .map(|j| {
                    let t = k as f64 * s + (j as f64 + 0.5) * h;
                    cfg.gamma_e * b0 * (cfg.field_omega * t).sin() * h
                })
                .sum();
            psi[0] *= C64::from_polar(1.0, -theta / 2.0);
            psi[1] *= C64::from_polar(1.0, theta / 2.0);
            psi = *pulse * psi;
        }
        2.0 * (psi[0].conj() * psi[1]).im
    }

    #[test]
    fn zero_field_gives_zero() {
        assert_eq!(xy4_response(0.0, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn small_field_slope() {
        let b0 = 1e-12;
        let slope = xy4_response(b0, &cfg()).unwrap() / b0;
        assert!((slope / cfg().linear_coefficient() - 1.0).abs() < 1e-3);
        assert!((cfg().t_rf - 40e-6).abs() < 1e-15);
    }

    #[test]
    fn matches_two_level_simulation() {
        for &b0 in &[1e-10, 5e-10, 1e-9, -2e-9, 3.5e-9] {
            let a = xy4_response(b0, &cfg()).unwrap();
            let b = brute_force(b0, &cfg());
            assert!((a - b).abs() < 1e-6, "B0={b0}: {a} vs {b}");
        }
    }

    #[test]
    fn guard_rejects_large_fields() {
        let b0 = 0.31 / cfg().linear_coefficient();
        assert!(matches!(xy4_response(b0, &cfg()), Err(Error::RegimeGuard(_))));
    }

    fn model(n_reps: u64) -> PhotonModel {
        crate::presets::photon_model(n_reps)
    }

    #[test]
    fn shot_noise_oracle() {
        let m = model(18_000);
        // sqrt(N n0)/(c N n0 / 2) with N = n_nv·n_reps, at p = 0.
        let n: f64 = 2.5e8 * 18_000.0 * 0.016;
        let oracle = n.sqrt() / (0.07 * n / 2.0);
        assert!((m.estimator_std(0.0) / oracle - (1.0 - 0.035f64).sqrt()).abs() < 1e-12);
        assert!(m.estimator_std(0.0) > 1.0e-4 && m.estimator_std(0.0) < 1.1e-4);
    }

    #[test]
    fn empirical_std_and_bias() {
        let m = model(18_000);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let p = vec![2e-4; 10_000];
        let est = photon_readout(&p, &m, &mut rng).unwrap();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        let sd = (est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt();
        assert!((sd / m.estimator_std(2e-4) - 1.0).abs() < 0.05);
        assert!((mean - 2e-4).abs() < 3.0 * sd / 100.0);
    }

    #[test]
    fn quarter_reps_doubles_noise() {
        let r = model(4_500).estimator_std(0.0) / model(18_000).estimator_std(0.0);
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_and_poisson() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let exact = PhotonModel {
            noise: PhotonNoise::Noiseless,
            ..model(10)
        };
        let out = photon_readout(&[0.3, -0.2], &exact, &mut rng).unwrap();
        assert!((out[0] - 0.3).abs() < 1e-12 && (out[1] + 0.2).abs() < 1e-12);
        let small = PhotonModel {
            n_nv: 1e4,
            noise: PhotonNoise::Poisson,
            ..model(100)
        };
        let est = photon_readout(&vec![0.0; 4000], &small, &mut rng).unwrap();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        assert!(mean.abs() < 3.0 * small.estimator_std(0.0) / (4000f64).sqrt() * 1.5);
        assert!(photon_readout(&[1.5], &exact, &mut rng).is_err());
    }

    #[test]
    fn std_scales_inverse_sqrt_reps() {
        // Fit the log-log slope over a decade from Monte-Carlo estimates.
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let reps = [1_000u64, 3_000, 10_000];
        let pts: Vec<(f64, f64)> = reps
            .iter()
            .map(|&r| {
                let est = photon_readout(&vec![0.0; 20_000], &model(r), &mut rng).unwrap();
                let sd = (est.iter().map(|v| v * v).sum::<f64>() / est.len() as f64).sqrt();
                ((r as f64).ln(), sd.ln())
            })
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / 3.0;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / 3.0;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 0.5).abs() < 0.02, "{slope}");
    }

    proptest! {
        #[test]
        fn response_is_odd_and_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let cfg = cfg();
            let scale = 0.29 / cfg.linear_coefficient();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let r_lo = xy4_response(lo * scale, &cfg).unwrap();
            let r_hi = xy4_response(hi * scale, &cfg).unwrap();
            prop_assert!(r_lo <= r_hi);
            prop_assert!((xy4_response(-hi * scale, &cfg).unwrap() + r_hi).abs() < 1e-15);
        }
    }
}
