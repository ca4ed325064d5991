//! Bayesian estimation of coupling constants from a noisy per-stage signal.
//!
//! The forward model diagonalizes the noise-free stage propagator once per
//! parameter point, so the n-th sample is a sum of phasors (λ_a λ_b*)^n.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::CouplingKey;
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64};
use crate::molecule::{Molecule, TWO_PI};
use crate::pipeline::{self, PipelineConfig};
use crate::readout;
use crate::sequence::{build_schedule, Event, Schedule};
use crate::spin::{self, Axis, OperatorMatrix};

/// Noise-free map from coupling constants (Hz) to the per-stage NV signal.
pub struct ForwardModel {
    base: Molecule,
    keys: Vec<CouplingKey>,
    cfg: PipelineConfig,
    schedule: Schedule,
    times: Vec<f64>,
    observable: OperatorMatrix,
    norm: f64,
}

impl ForwardModel {
    /// `cfg` supplies protocol, Hamiltonian model, pulse mode, signal scale and T2;
    /// its noise settings are ignored.
    pub fn new(base: &Molecule, keys: Vec<CouplingKey>, cfg: &PipelineConfig) -> Result<Self> {
        let mut cfg = cfg.clone();
        cfg.engine.noise.ou_enabled = false;
        cfg.engine.noise.cross_talk_enabled = false;
        cfg.engine.b_ext = cfg.protocol.b_ext;
        cfg.photon = None;
        cfg.validate()?;
        let schedule = build_schedule(&cfg.protocol, base)?;
        let times = (0..schedule.n_stages())
            .map(|k| {
                schedule
                    .stage(k)
                    .iter()
                    .find_map(|e| match e {
                        Event::Detection { start, .. } => Some(*start),
                        _ => None,
                    })
                    .unwrap_or(0.0)
            })
            .collect();
        let h = base.hydrogen_sites();
        let observable = spin::collective_operator(base.n_sites(), &h, Axis::X)?.scaled(2.0 / h.len() as f64);
        let norm = 1.0 / pipeline::thermal_magnetization(base, &cfg.protocol)?;
        for k in &keys {
            base.with_group_coupling(&k.a, &k.b, 0.0)?;
        }
        Ok(Self {
            base: base.clone(),
            keys,
            cfg,
            schedule,
            times,
            observable,
            norm,
        })
    }

    pub fn keys(&self) -> &[CouplingKey] {
        &self.keys
    }

    pub fn n_samples(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn molecule_at(&self, params_hz: &[f64]) -> Result<Molecule> {
        if params_hz.len() != self.keys.len() {
            return Err(Error::DimensionMismatch {
                expected: self.keys.len(),
                got: params_hz.len(),
            });
        }
        let mut m = self.base.clone();
        for (k, v) in self.keys.iter().zip(params_hz) {
            m = m.with_group_coupling(&k.a, &k.b, TWO_PI * v)?;
        }
        Ok(m)
    }

    /// Normalized M_x per stage (fraction of thermal magnetization).
    pub fn magnetization(&self, params_hz: &[f64]) -> Result<Vec<f64>> {
        let mol = self.molecule_at(params_hz)?;
        let engine = Engine::new(&mol, self.cfg.engine.clone())?;
        let rho0 = pipeline::initial_state(&mol, &self.cfg.protocol)?;
        let rho1 = rho0.evolve(&engine.preparation_unitary(&self.schedule)?);
        let u = engine.stage_unitary(&self.schedule, 0)?;
        let (q, lambda) = unitary_eigen(&u)?;
        let dim = q.nrows();
        // The observable is traceless, so only the deviation from identity matters;
        // dropping the identity keeps the cutoff below relative to the signal.
        let mut dev = rho1.entries().clone();
        let mean = dev.trace() / C64::new(dim as f64, 0.0);
        for i in 0..dim {
            dev[(i, i)] -= mean;
        }
        let a = q.adjoint() * dev * &q;
        let b = q.adjoint() * self.observable.entries() * &q;
        // Tr[O U^n ρ U^-n] = Σ_ab A_ab B_ba (λ_a λ_b*)^n. A and B are Hermitian, so
        // the (b, a) term is the conjugate of the (a, b) term and only a < b is summed.
        let mut constant = 0.0;
        let mut scale = 0.0f64;
        for i in 0..dim {
            constant += (a[(i, i)] * b[(i, i)]).re;
            for j in i + 1..dim {
                scale = scale.max((a[(i, j)] * b[(j, i)]).norm());
            }
        }
        let mut coef = Vec::new();
        let mut step = Vec::new();
        for i in 0..dim {
            for j in i + 1..dim {
                let c = a[(i, j)] * b[(j, i)];
                if c.norm() > 1e-13 * scale {
                    coef.push(2.0 * c);
                    step.push(lambda[i] * lambda[j].conj());
                }
            }
        }
        let mut out = Vec::with_capacity(self.times.len());
        let mut z = step.clone();
        for _ in 0..self.times.len() {
            let mut s = constant;
            for (c, (zk, st)) in coef.iter().zip(z.iter_mut().zip(&step)) {
                s += (c * *zk).re;
                *zk *= st;
            }
            out.push(s * self.norm);
        }
        Ok(out)
    }

    /// Clean NV signal per stage.
    pub fn evaluate(&self, params_hz: &[f64]) -> Result<Vec<f64>> {
        let m = self.magnetization(params_hz)?;
        let xy4 = self.cfg.xy4();
        let per_unit = self.cfg.signal_scale.tesla_per_unit(&self.cfg.constants, &xy4)?;
        m.iter()
            .zip(&self.times)
            .map(|(mx, t)| {
                let envelope = if self.cfg.apply_t2 {
                    (-t / self.cfg.protocol.t2).exp()
                } else {
                    1.0
                };
                let b = per_unit * mx * envelope;
                debug_assert!(b.is_finite());
                readout::xy4_response(b, &xy4)
            })
            .collect()
    }
}

/// Eigen-decomposition of a unitary through its complex Schur form.
fn unitary_eigen(u: &CMatrix) -> Result<(CMatrix, Vec<C64>)> {
    let (q, t) = nalgebra::linalg::Schur::new(u.clone()).unpack();
    let dim = t.nrows();
    let mut off = 0.0f64;
    for i in 0..dim {
        for j in (i + 1)..dim {
            off = off.max(t[(i, j)].norm());
        }
    }
    if off > 1e-8 {
        return Err(Error::Numerical(format!(
            "stage propagator not normal (residual {off:.2e})"
        )));
    }
    let recon = &q * &t * q.adjoint();
    let resid = linalg::max_abs_diff(&recon, u);
    if resid > 1e-9 {
        return Err(Error::Numerical(format!(
            "Schur factorization inaccurate (residual {resid:.2e})"
        )));
    }
    Ok((q, (0..dim).map(|i| t[(i, i)]).collect()))
}

/// Gaussian log-likelihood up to a constant.
pub fn log_likelihood(data: &[f64], model: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise sigma must be positive, got {sigma}"
        )));
    }
    if data.len() != model.len() {
        return Err(Error::DimensionMismatch {
            expected: model.len(),
            got: data.len(),
        });
    }
    let ss: f64 = data.iter().zip(model).map(|(d, f)| (d - f).powi(2)).sum();
    Ok(-ss / (2.0 * sigma * sigma))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorBound {
    pub a: String,
    pub b: String,
    pub lower_hz: f64,
    pub upper_hz: f64,
}

/// Independent uniform priors, one per coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub bounds: Vec<PriorBound>,
}

impl PriorSpec {
    /// ±`half_width` Hz around each value.
    pub fn around(keys: &[CouplingKey], center_hz: &[f64], half_width: f64) -> Self {
        Self {
            bounds: keys
                .iter()
                .zip(center_hz)
                .map(|(k, c)| PriorBound {
                    a: k.a.clone(),
                    b: k.b.clone(),
                    lower_hz: c - half_width,
                    upper_hz: c + half_width,
                })
                .collect(),
        }
    }

    pub fn keys(&self) -> Vec<CouplingKey> {
        self.bounds.iter().map(|b| CouplingKey::new(&b.a, &b.b)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(Error::InvalidParameter("empty prior".into()));
        }
        for b in &self.bounds {
            if !(b.lower_hz < b.upper_hz) {
                return Err(Error::InvalidParameter(format!(
                    "prior on {}-{} has lower >= upper",
                    b.a, b.b
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.bounds
            .iter()
            .zip(x)
            .all(|(b, v)| *v >= b.lower_hz && *v <= b.upper_hz)
    }

    fn clamp(&self, x: &mut [f64]) {
        for (b, v) in self.bounds.iter().zip(x.iter_mut()) {
            *v = v.clamp(b.lower_hz, b.upper_hz);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub chains: usize,
    /// Total kept samples across chains.
    pub kept: usize,
    pub burn_in: usize,
    /// Spacing of the coarse initialization grid (Hz); `None` starts at the prior centre.
    pub grid_step_hz: Option<f64>,
    pub rhat_threshold: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            kept: 50_000,
            burn_in: 2_000,
            grid_step_hz: Some(0.5),
            rhat_threshold: 1.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub couplings: Vec<CouplingKey>,
    /// Kept samples, chain after chain.
    pub samples: Vec<Vec<f64>>,
    pub mean_hz: Vec<f64>,
    pub sigma_hz: Vec<f64>,
    /// Split-chain potential scale reduction per parameter.
    pub rhat: Vec<f64>,
    pub acceptance: f64,
    /// Highest log-likelihood found before sampling.
    pub map_hz: Vec<f64>,
}

/// Posterior summary without the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub couplings: Vec<String>,
    pub mean_hz: Vec<f64>,
    pub sigma_hz: Vec<f64>,
    pub rhat: Vec<f64>,
    pub acceptance: f64,
    pub n_samples: usize,
    pub map_hz: Vec<f64>,
}

impl Posterior {
    pub fn summary(&self) -> PosteriorSummary {
        PosteriorSummary {
            couplings: self.couplings.iter().map(|k| k.to_string()).collect(),
            mean_hz: self.mean_hz.clone(),
            sigma_hz: self.sigma_hz.clone(),
            rhat: self.rhat.clone(),
            acceptance: self.acceptance,
            n_samples: self.samples.len(),
            map_hz: self.map_hz.clone(),
        }
    }

    pub fn get(&self, a: &str, b: &str) -> Option<(f64, f64)> {
        let key = CouplingKey::new(a, b);
        let i = self.couplings.iter().position(|k| *k == key)?;
        Some((self.mean_hz[i], self.sigma_hz[i]))
    }
}

/// Log-posterior target over coupling constants.
pub trait Target: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> Result<f64>;
}

/// Gaussian likelihood of `data` under a forward model, with a uniform prior.
pub struct SignalPosterior<'a> {
    pub data: &'a [f64],
    pub sigma: f64,
    pub forward: &'a ForwardModel,
    pub prior: &'a PriorSpec,
}

impl Target for SignalPosterior<'_> {
    fn dim(&self) -> usize {
        self.prior.bounds.len()
    }

    fn log_density(&self, x: &[f64]) -> Result<f64> {
        if !self.prior.contains(x) {
            return Ok(f64::NEG_INFINITY);
        }
        log_likelihood(self.data, &self.forward.evaluate(x)?, self.sigma)
    }
}

fn grid_search<T: Target>(target: &T, prior: &PriorSpec, step: f64) -> Result<Vec<f64>> {
    let axes: Vec<Vec<f64>> = prior
        .bounds
        .iter()
        .map(|b| {
            let n = ((b.upper_hz - b.lower_hz) / step).floor() as usize;
            let mid = 0.5 * (b.lower_hz + b.upper_hz);
            let half = n / 2;
            (0..=2 * half).map(|k| mid + (k as f64 - half as f64) * step).collect()
        })
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let points: Vec<Vec<f64>> = (0..total)
        .map(|mut idx| {
            axes.iter()
                .map(|ax| {
                    let v = ax[idx % ax.len()];
                    idx /= ax.len();
                    v
                })
                .collect()
        })
        .collect();
    let scored = points
        .par_iter()
        .map(|p| Ok((target.log_density(p)?, p.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok(scored
        .into_iter()
        .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Less))
        .map(|s| s.1)
        .expect("grid is non-empty"))
}

/// Compass search from `x` with shrinking steps.
fn refine<T: Target>(target: &T, prior: &PriorSpec, mut x: Vec<f64>, mut step: f64) -> Result<(Vec<f64>, f64)> {
    let mut best = target.log_density(&x)?;
    while step > 1e-4 {
        let mut improved = false;
        for d in 0..x.len() {
            for s in [1.0, -1.0] {
                let mut y = x.clone();
                y[d] += s * step;
                prior.clamp(&mut y);
                let v = target.log_density(&y)?;
                if v > best {
                    best = v;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((x, best))
}

/// Curvature-based proposal covariance at a mode, falling back to `fallback²·I`.
fn laplace_covariance<T: Target>(target: &T, x: &[f64], fallback: f64) -> Result<DMatrix<f64>> {
    let d = x.len();
    let h = 1e-3;
    let f0 = target.log_density(x)?;
    let mut hess = DMatrix::zeros(d, d);
    let at = |dx: &[(usize, f64)]| -> Result<f64> {
        let mut y = x.to_vec();
        for &(i, v) in dx {
            y[i] += v;
        }
        target.log_density(&y)
    };
    for i in 0..d {
        let fp = at(&[(i, h)])?;
        let fm = at(&[(i, -h)])?;
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..d {
            let v = (at(&[(i, h), (j, h)])? - at(&[(i, h), (j, -h)])? - at(&[(i, -h), (j, h)])?
                + at(&[(i, -h), (j, -h)])?)
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let neg = -hess;
    if neg.iter().all(|v| v.is_finite()) {
        if let Some(chol) = neg.clone().cholesky() {
            return Ok(chol.inverse());
        }
    }
    Ok(DMatrix::identity(d, d) * fallback * fallback)
}

/// Split-chain R̂ for one parameter.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[h..2 * h]]
        })
        .collect();
    let m = halves.len() as f64;
    let n = halves[0].len() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|v| (v - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

struct ChainOut {
    samples: Vec<Vec<f64>>,
    accepted: usize,
    proposed: usize,
}

/// Adaptive Metropolis: the proposal covariance tracks the running sample
/// covariance, scaled by 2.38²/d.
fn run_chain<T: Target>(
    target: &T,
    start: Vec<f64>,
    cov0: &DMatrix<f64>,
    burn_in: usize,
    kept: usize,
    seed: u64,
) -> Result<ChainOut> {
    let d = start.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sd = 2.38 * 2.38 / d as f64;
    let mut x = start;
    let mut lp = target.log_density(&x)?;
    let mut mean = DVector::from_column_slice(&x);
    let mut m2 = DMatrix::<f64>::zeros(d, d);
    let mut n_seen = 1.0;
    let mut chol = (cov0 * sd)
        .cholesky()
        .ok_or_else(|| Error::Numerical("proposal not SPD".into()))?;
    let mut samples = Vec::with_capacity(kept);
    let (mut accepted, mut proposed) = (0, 0);
    let eps = cov0.diagonal().iter().fold(f64::INFINITY, |a, b| a.min(*b)) * 1e-6;
    for it in 0..(burn_in + kept) {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = chol.l() * z;
        let y: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let ly = target.log_density(&y)?;
        proposed += 1;
        if ly.is_finite() && (ly - lp) >= rng.gen::<f64>().ln() {
            x = y;
            lp = ly;
            accepted += 1;
        }
        // Welford update of the running covariance.
        n_seen += 1.0;
        let xv = DVector::from_column_slice(&x);
        let delta = &xv - &mean;
        mean += &delta / n_seen;
        m2 += &delta * (&xv - &mean).transpose();
        if it >= 200 && it % 50 == 0 && it < burn_in {
            let cov = &m2 / (n_seen - 1.0) + DMatrix::identity(d, d) * eps;
            if let Some(c) = (cov * sd).cholesky() {
                chol = c;
            }
        }
        if it >= burn_in {
            samples.push(x.clone());
        }
    }
    Ok(ChainOut {
        samples,
        accepted,
        proposed,
    })
}

/// Samples the posterior of `target` under `prior`.
pub fn sample_posterior<T: Target>(target: &T, prior: &PriorSpec, cfg: &SamplerConfig) -> Result<Posterior> {
    prior.validate()?;
    if cfg.chains < 2 || cfg.kept < cfg.chains * 4 {
        return Err(Error::InvalidParameter(
            "need >= 2 chains and enough kept samples".into(),
        ));
    }
    let d = target.dim();
    let widths: Vec<f64> = prior.bounds.iter().map(|b| b.upper_hz - b.lower_hz).collect();
    let start0: Vec<f64> = match cfg.grid_step_hz {
        Some(step) => grid_search(target, prior, step)?,
        None => prior.bounds.iter().map(|b| 0.5 * (b.lower_hz + b.upper_hz)).collect(),
    };
    let init_step = cfg
        .grid_step_hz
        .unwrap_or(widths.iter().cloned().fold(f64::INFINITY, f64::min) / 10.0);
    let (map, _) = refine(target, prior, start0, init_step / 2.0)?;
    let fallback = widths.iter().cloned().fold(f64::INFINITY, f64::min) / 100.0;
    let cov0 = laplace_covariance(target, &map, fallback)?;
    let per_chain = cfg.kept.div_ceil(cfg.chains);

    let mut seeder = ChaCha20Rng::seed_from_u64(cfg.seed);
    let init_chol = cov0
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("covariance not SPD".into()))?;
    let starts: Vec<(Vec<f64>, u64)> = (0..cfg.chains)
        .map(|_| {
            let z = DVector::from_fn(d, |_, _| seeder.sample::<f64, _>(StandardNormal));
            let off = init_chol.l() * z * 2.0;
            let mut s: Vec<f64> = map.iter().zip(off.iter()).map(|(a, b)| a + b).collect();
            prior.clamp(&mut s);
            (s, seeder.gen())
        })
        .collect();
    let outs = starts
        .into_par_iter()
        .map(|(s, seed)| run_chain(target, s, &cov0, cfg.burn_in, per_chain, seed))
        .collect::<Result<Vec<_>>>()?;

    let mut rhat = Vec::with_capacity(d);
    for k in 0..d {
        let chains: Vec<Vec<f64>> = outs.iter().map(|o| o.samples.iter().map(|s| s[k]).collect()).collect();
        rhat.push(split_rhat(&chains));
    }
    let samples: Vec<Vec<f64>> = outs.iter().flat_map(|o| o.samples.iter().cloned()).collect();
    let n = samples.len() as f64;
    let mean: Vec<f64> = (0..d).map(|k| samples.iter().map(|s| s[k]).sum::<f64>() / n).collect();
    let sigma: Vec<f64> = (0..d)
        .map(|k| (samples.iter().map(|s| (s[k] - mean[k]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    let acceptance =
        outs.iter().map(|o| o.accepted).sum::<usize>() as f64 / outs.iter().map(|o| o.proposed).sum::<usize>() as f64;
    let post = Posterior {
        couplings: prior.keys(),
        samples,
        mean_hz: mean,
        sigma_hz: sigma,
        rhat: rhat.clone(),
        acceptance,
        map_hz: map,
    };
    if rhat.iter().any(|r| !(r.is_finite() && *r < cfg.rhat_threshold)) {
        return Err(Error::NonConvergence(format!(
            "split R-hat {:?} above {} (acceptance {:.2})",
            rhat, cfg.rhat_threshold, acceptance
        )));
    }
    Ok(post)
}

/// Convenience wrapper: posterior of the prior's couplings given `data`.
pub fn posterior(
    data: &[f64],
    prior: &PriorSpec,
    noise_sigma: f64,
    forward: &ForwardModel,
    cfg: &SamplerConfig,
) -> Result<Posterior> {
    if !(noise_sigma > 0.0) {
        return Err(Error::InvalidParameter("noise sigma must be positive".into()));
    }
    if data.len() != forward.n_samples() {
        return Err(Error::DimensionMismatch {
            expected: forward.n_samples(),
            got: data.len(),
        });
    }
    if prior.keys() != forward.keys() {
        return Err(Error::InvalidParameter(
            "prior and forward model name different couplings".into(),
        ));
    }
    let target = SignalPosterior {
        data,
        sigma: noise_sigma,
        forward,
        prior,
    };
    sample_posterior(&target, prior, cfg)
}

/// Magnetization-to-field factor used by the forward model (T per unit).
pub fn field_scale(cfg: &PipelineConfig) -> Result<f64> {
    cfg.signal_scale.tesla_per_unit(&cfg.constants, &cfg.xy4())
}
