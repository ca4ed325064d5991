//! Spectra, peak extraction and the closed-form product-of-cosines signal.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::molecule::{Molecule, Species, TWO_PI};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Ascending, symmetric about zero (Hz).
    pub freqs: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub bin_width: f64,
}

impl Spectrum {
    pub fn nyquist(&self) -> f64 {
        self.freqs
            .last()
            .copied()
            .unwrap_or(0.0)
            .max(-self.freqs.first().copied().unwrap_or(0.0))
    }

    /// Magnitudes with frequency in `[lo, hi]`.
    pub fn band(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.freqs
            .iter()
            .zip(&self.magnitude)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, m)| *m)
            .collect()
    }
}

/// Magnitude DFT of `series` sampled every `dt` seconds, zero-padded to
/// `zero_pad_factor` times its length and normalized by the sample count.
pub fn spectrum(series: &[f64], dt: f64, zero_pad_factor: usize) -> Result<Spectrum> {
    if zero_pad_factor == 0 {
        return Err(Error::InvalidParameter("zero_pad_factor must be >= 1".into()));
    }
    if !(dt > 0.0) || series.is_empty() {
        return Err(Error::InvalidParameter("need samples and a positive interval".into()));
    }
    let n = series.len();
    let m = n * zero_pad_factor;
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&x| Complex::new(x, 0.0)).collect();
    buf.resize(m, Complex::new(0.0, 0.0));
    let fft: Arc<dyn rustfft::Fft<f64>> = FftPlanner::new().plan_fft_forward(m);
    fft.process(&mut buf);
    let bin = 1.0 / (m as f64 * dt);
    let half = m / 2;
    let mut freqs = Vec::with_capacity(m);
    let mut magnitude = Vec::with_capacity(m);
    // Shift so that index 0 holds the most negative frequency.
    for j in 0..m {
        let k = (j + m - half) % m;
        let signed = if k >= m - half { k as f64 - m as f64 } else { k as f64 };
        let signed = if k == 0 { 0.0 } else { signed };
        freqs.push(signed * bin);
        magnitude.push(buf[k].norm() / n as f64);
    }
    Ok(Spectrum {
        freqs,
        magnitude,
        bin_width: bin,
    })
}

/// Like [`spectrum`] but takes timestamps and insists they are uniform.
pub fn spectrum_from_samples(times: &[f64], values: &[f64], zero_pad_factor: usize) -> Result<Spectrum> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(Error::InvalidParameter("need at least two matching samples".into()));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1e-12) {
            return Err(Error::NonUniformSampling(format!(
                "step {} differs from mean step {dt}",
                w[1] - w[0]
            )));
        }
    }
    spectrum(values, dt, zero_pad_factor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub freq: f64,
    pub height: f64,
    pub fwhm: f64,
}

/// Refines the local maximum at index `k` and measures its width.
fn refine(spec: &Spectrum, k: usize) -> Peak {
    let y = &spec.magnitude;
    let (y0, y1, y2) = (y[k - 1], y[k], y[k + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    let delta = if denom.abs() > 0.0 {
        0.5 * (y0 - y2) / denom
    } else {
        0.0
    };
    let height = y1 - 0.25 * (y0 - y2) * delta;
    let freq = spec.freqs[k] + delta * spec.bin_width;
    let half = height / 2.0;
    let crossing = |dir: isize| -> f64 {
        let mut j = k as isize;
        loop {
            let next = j + dir;
            if next < 0 || next as usize >= y.len() {
                return spec.freqs[j as usize];
            }
            let (a, b) = (y[j as usize], y[next as usize]);
            if b < half {
                let frac = (a - half) / (a - b);
                return spec.freqs[j as usize] + dir as f64 * frac * spec.bin_width;
            }
            j = next;
        }
    };
    Peak {
        freq,
        height,
        fwhm: crossing(1) - crossing(-1),
    }
}

/// Local maxima with height at least `min_height`, both signs of frequency.
pub fn find_peaks(spec: &Spectrum, min_height: f64) -> Vec<Peak> {
    let y = &spec.magnitude;
    (1..y.len().saturating_sub(1))
        .filter(|&k| y[k] > y[k - 1] && y[k] >= y[k + 1] && y[k] >= min_height && y[k] > 0.0)
        .map(|k| refine(spec, k))
        .collect()
}

/// Highest local maximum with frequency inside `[lo, hi]`.
pub fn strongest_peak_in(spec: &Spectrum, lo: f64, hi: f64) -> Option<Peak> {
    let y = &spec.magnitude;
    (1..y.len().saturating_sub(1))
        .filter(|&k| spec.freqs[k] >= lo && spec.freqs[k] <= hi && y[k] > y[k - 1] && y[k] >= y[k + 1])
        .max_by(|&a, &b| y[a].partial_cmp(&y[b]).unwrap())
        .map(|k| refine(spec, k))
}

/// Peak height over the standard deviation of the magnitude in `noise_band` (Hz).
/// Infinite when the band carries no fluctuation.
pub fn measure_snr(spec: &Spectrum, peak: &Peak, noise_band: (f64, f64)) -> Result<f64> {
    let band = spec.band(noise_band.0, noise_band.1);
    if band.len() < 2 {
        return Err(Error::EmptyNoiseBand);
    }
    let mean = band.iter().sum::<f64>() / band.len() as f64;
    let sd = (band.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (band.len() - 1) as f64).sqrt();
    if sd <= f64::EPSILON * peak.height.abs() {
        return Ok(f64::INFINITY);
    }
    Ok(peak.height / sd)
}

/// Widest gap between predicted lines below `nyquist`, shrunk by `margin` on both sides.
pub fn quiet_band(lines_hz: &[f64], nyquist: f64, margin: f64) -> Option<(f64, f64)> {
    let mut edges: Vec<f64> = lines_hz.iter().copied().filter(|f| *f >= 0.0 && *f < nyquist).collect();
    edges.push(0.0);
    edges.push(nyquist);
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges
        .windows(2)
        .map(|w| (w[0] + margin, w[1] - margin))
        .filter(|(a, b)| b > a)
        .max_by(|x, y| (x.1 - x.0).partial_cmp(&(y.1 - y.0)).unwrap())
}

/// Unordered pair of group keys naming one coupling constant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CouplingKey {
    pub a: String,
    pub b: String,
}

impl CouplingKey {
    pub fn new(a: &str, b: &str) -> Self {
        if a <= b {
            Self {
                a: a.into(),
                b: b.into(),
            }
        } else {
            Self {
                a: b.into(),
                b: a.into(),
            }
        }
    }
}

impl std::fmt::Display for CouplingKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.a, self.b)
    }
}

/// Whether coupling `i`–`j` modulates the transverse signal of hydrogen `i`.
fn acts_on(molecule: &Molecule, targeted: &[Species], i: usize, j: usize) -> bool {
    if i == j || molecule.coupling(i, j) == 0.0 {
        return false;
    }
    let other = &molecule.nuclei()[j].species;
    if other.is_hydrogen() {
        !molecule.equivalent(i, j)
    } else {
        targeted.contains(other)
    }
}

/// Normalized (2/N_H)Σ⟨S^x⟩ for fully x-polarized hydrogen under ideal encoding.
pub fn analytic_signal(molecule: &Molecule, targeted: &[Species], t: f64) -> f64 {
    let h = molecule.hydrogen_sites();
    let sum: f64 = h
        .iter()
        .map(|&i| {
            (0..molecule.n_sites())
                .filter(|&j| acts_on(molecule, targeted, i, j))
                .map(|j| (molecule.coupling(i, j) * t / 2.0).cos())
                .product::<f64>()
        })
        .sum();
    sum / h.len() as f64
}

/// Couplings that shape the hydrogen signal, with their values (Hz).
pub fn signal_couplings(molecule: &Molecule, targeted: &[Species]) -> Vec<(CouplingKey, f64)> {
    let mut map = BTreeMap::new();
    for &i in &molecule.hydrogen_sites() {
        for j in 0..molecule.n_sites() {
            if acts_on(molecule, targeted, i, j) {
                let key = CouplingKey::new(&molecule.group_key(i), &molecule.group_key(j));
                map.entry(key).or_insert(molecule.coupling(i, j) / TWO_PI);
            }
        }
    }
    map.into_iter().collect()
}

/// One spectral line: |coefficients · J| / 2 in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub freq_hz: f64,
    pub amplitude: f64,
    /// Integer combinations of the keyed couplings producing this line,
    /// strongest first.
    pub combinations: Vec<Vec<i32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceTable {
    pub couplings: Vec<CouplingKey>,
    /// Positive-frequency lines, ascending.
    pub lines: Vec<Resonance>,
    pub signed_count: usize,
    pub multiplicity_count: usize,
}

impl ResonanceTable {
    pub fn frequencies(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.freq_hz).collect()
    }
}

/// Expands the product-of-cosines signal into a sum of cosines.
pub fn predict_resonances(molecule: &Molecule, targeted: &[Species]) -> ResonanceTable {
    let keyed = signal_couplings(molecule, targeted);
    let keys: Vec<CouplingKey> = keyed.iter().map(|(k, _)| k.clone()).collect();
    let values: Vec<f64> = keyed.iter().map(|(_, v)| *v).collect();
    let h = molecule.hydrogen_sites();
    let mut terms: BTreeMap<Vec<i32>, f64> = BTreeMap::new();
    for &i in &h {
        let mut acc: Vec<(Vec<i32>, f64)> = vec![(vec![0; keys.len()], 1.0 / h.len() as f64)];
        for j in 0..molecule.n_sites() {
            if !acts_on(molecule, targeted, i, j) {
                continue;
            }
            let key = CouplingKey::new(&molecule.group_key(i), &molecule.group_key(j));
            let idx = keys.iter().position(|k| *k == key).expect("key collected above");
            let mut next = Vec::with_capacity(acc.len() * 2);
            for (v, a) in acc {
                for s in [1, -1] {
                    let mut w = v.clone();
                    w[idx] += s;
                    next.push((w, a / 2.0));
                }
            }
            acc = next;
        }
        for (mut v, a) in acc {
            // cos is even: fix the sign of the first nonzero coefficient.
            if let Some(first) = v.iter().find(|c| **c != 0) {
                if *first < 0 {
                    v.iter_mut().for_each(|c| *c = -*c);
                }
            }
            *terms.entry(v).or_insert(0.0) += a;
        }
    }
    let mut lines: Vec<Resonance> = Vec::new();
    let mut has_dc = false;
    for (v, a) in terms {
        let f = v.iter().zip(&values).map(|(c, j)| *c as f64 * j).sum::<f64>().abs() / 2.0;
        if f < 1e-9 {
            has_dc = true;
            continue;
        }
        match lines.iter_mut().find(|l| (l.freq_hz - f).abs() < 1e-9) {
            Some(l) => {
                l.amplitude += a;
                l.combinations.push(v);
            }
            None => lines.push(Resonance {
                freq_hz: f,
                amplitude: a,
                combinations: vec![v],
            }),
        }
    }
    lines.sort_by(|a, b| a.freq_hz.partial_cmp(&b.freq_hz).unwrap());
    let signed_count = 2 * lines.len() + usize::from(has_dc);
    ResonanceTable {
        couplings: keys,
        lines,
        signed_count,
        multiplicity_count: multiplicity_count(molecule, targeted),
    }
}

/// Σ over hydrogen groups of Π over coupled groups of (n + 1).
pub fn multiplicity_count(molecule: &Molecule, targeted: &[Species]) -> usize {
    let mut groups: BTreeMap<String, usize> = BTreeMap::new();
    for i in 0..molecule.n_sites() {
        *groups.entry(molecule.group_key(i)).or_insert(0) += 1;
    }
    let mut seen = Vec::new();
    let mut total = 0;
    for &i in &molecule.hydrogen_sites() {
        let g = molecule.group_key(i);
        if seen.contains(&g) {
            continue;
        }
        seen.push(g);
        let mut partners: Vec<String> = (0..molecule.n_sites())
            .filter(|&j| acts_on(molecule, targeted, i, j))
            .map(|j| molecule.group_key(j))
            .collect();
        partners.sort();
        partners.dedup();
        total += partners.iter().map(|p| groups[p] + 1).product::<usize>();
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingEstimate {
    pub couplings: Vec<CouplingKey>,
    pub values_hz: Vec<f64>,
    /// Least-squares standard errors; NaN without spare degrees of freedom.
    pub std_err_hz: Vec<f64>,
    /// (predicted, observed) line positions used in the final fit.
    pub assignments: Vec<(f64, f64)>,
    pub iterations: usize,
}

impl CouplingEstimate {
    pub fn value(&self, a: &str, b: &str) -> Option<f64> {
        let key = CouplingKey::new(a, b);
        self.couplings.iter().position(|k| *k == key).map(|i| self.values_hz[i])
    }
}

/// Fits the signal couplings to measured line positions, starting from the
/// couplings in `guess`. Each predicted line is matched to the strongest local
/// maximum within `window_hz`; lines without a maximum are dropped.
pub fn estimate_couplings(
    spec: &Spectrum,
    guess: &Molecule,
    targeted: &[Species],
    window_hz: f64,
) -> Result<CouplingEstimate> {
    let keyed = signal_couplings(guess, targeted);
    let keys: Vec<CouplingKey> = keyed.iter().map(|(k, _)| k.clone()).collect();
    let mut j: Vec<f64> = keyed.iter().map(|(_, v)| *v).collect();
    let table = predict_resonances(guess, targeted);
    let mut result = None;
    for it in 0..20 {
        let mut rows = Vec::new();
        let mut obs = Vec::new();
        let mut assignments = Vec::new();
        for line in &table.lines {
            let c = &line.combinations[0];
            let lin: f64 = c.iter().zip(&j).map(|(c, v)| *c as f64 * v).sum::<f64>() / 2.0;
            let f = lin.abs();
            if f + window_hz >= spec.nyquist() {
                continue;
            }
            if let Some(p) = strongest_peak_in(spec, f - window_hz, f + window_hz) {
                let sign = lin.signum();
                rows.push(c.iter().map(|c| sign * *c as f64 / 2.0).collect::<Vec<_>>());
                obs.push(p.freq);
                assignments.push((f, p.freq));
            }
        }
        if rows.len() < keys.len() {
            return Err(Error::NonConvergence(format!(
                "only {} of {} lines located for {} couplings",
                rows.len(),
                table.lines.len(),
                keys.len()
            )));
        }
        let a = DMatrix::from_fn(rows.len(), keys.len(), |r, c| rows[r][c]);
        let b = DVector::from_vec(obs);
        let svd = a.clone().svd(true, true);
        let x = svd.solve(&b, 1e-12).map_err(|e| Error::Numerical(e.to_string()))?;
        let dof = rows.len() as isize - keys.len() as isize;
        let resid = &b - &a * &x;
        let ata_inv = (a.transpose() * &a).try_inverse();
        let std_err: Vec<f64> = match (dof > 0, ata_inv) {
            (true, Some(inv)) => {
                let s2 = resid.norm_squared() / dof as f64;
                (0..keys.len()).map(|k| (s2 * inv[(k, k)]).sqrt()).collect()
            }
            _ => vec![f64::NAN; keys.len()],
        };
        let delta = x.iter().zip(&j).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        j = x.iter().copied().collect();
        result = Some(CouplingEstimate {
            couplings: keys.clone(),
            values_hz: j.clone(),
            std_err_hz: std_err,
            assignments,
            iterations: it + 1,
        });
        if delta < 1e-9 {
            break;
        }
    }
    result.ok_or_else(|| Error::NonConvergence("no iterations".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use std::f64::consts::PI;

    #[test]
    fn single_tone_position_and_height() {
        let dt = 4.383e-3;
        let a = 0.7;
        let x: Vec<f64> = (0..600).map(|n| a * (TWO_PI * 10.0 * n as f64 * dt).cos()).collect();
        let s = spectrum(&x, dt, 4).unwrap();
        let peaks = find_peaks(&s, 0.1);
        let pos: Vec<&Peak> = peaks.iter().filter(|p| p.freq > 0.0).collect();
        assert_eq!(pos.len(), 1);
        assert!((pos[0].freq - 10.0).abs() < s.bin_width);
        assert!((pos[0].height / (a / 2.0) - 1.0).abs() < 0.02, "{}", pos[0].height);
    }

    #[test]
    fn spectrum_is_symmetric_and_zero_for_zero_input() {
        let x: Vec<f64> = (0..100).map(|n| ((n * 7 % 13) as f64).sin()).collect();
        let s = spectrum(&x, 1e-3, 3).unwrap();
        let m = s.freqs.len();
        for k in 1..m / 2 {
            let neg = s
                .freqs
                .iter()
                .position(|f| (*f + s.freqs[m / 2 + k]).abs() < 1e-9)
                .unwrap();
            assert!((s.magnitude[neg] - s.magnitude[m / 2 + k]).abs() < 1e-10);
        }
        let z = spectrum(&[0.0; 64], 1e-3, 4).unwrap();
        assert!(z.magnitude.iter().all(|v| *v == 0.0));
        assert!(find_peaks(&z, 0.0).is_empty());
    }

    #[test]
    fn t2_linewidth() {
        let t2 = 0.6;
        let dt = 1e-3;
        let x: Vec<f64> = (0..8000)
            .map(|n| {
                let t = n as f64 * dt;
                (-t / t2).exp() * (TWO_PI * 40.0 * t).cos()
            })
            .collect();
        let s = spectrum(&x, dt, 4).unwrap();
        let p = strongest_peak_in(&s, 35.0, 45.0).unwrap();
        let expected = 3f64.sqrt() / (PI * t2);
        assert!((p.fwhm / expected - 1.0).abs() < 0.1, "{} vs {expected}", p.fwhm);
    }

    #[test]
    fn non_uniform_sampling_rejected() {
        let t = [0.0, 1.0, 2.0, 3.5];
        assert!(matches!(
            spectrum_from_samples(&t, &[1.0; 4], 1),
            Err(Error::NonUniformSampling(_))
        ));
        assert!(spectrum_from_samples(&[0.0, 1.0, 2.0], &[1.0; 3], 1).is_ok());
    }

    #[test]
    fn case1_resonances() {
        let mol = presets::fluoromethanol();
        let t = predict_resonances(&mol, &[Species::hydrogen(), Species::new("C13")]);
        let f = t.frequencies();
        let expected = [3.0, 5.0, 11.0, 61.0, 69.0];
        assert_eq!(f.len(), 5);
        for (a, b) in f.iter().zip(expected) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(t.signed_count, 10);
        assert_eq!(t.multiplicity_count, 10);
    }

    #[test]
    fn case2_resonances_follow_the_expansion() {
        let mol = presets::fluoromethanol();
        let t = predict_resonances(&mol, &[Species::hydrogen(), Species::new("C13"), Species::new("F19")]);
        let expected = [1.0, 3.0, 5.0, 7.0, 9.0, 13.0, 21.0, 29.0, 101.0, 109.0];
        let f = t.frequencies();
        assert_eq!(f.len(), 10, "{f:?}");
        for (a, b) in f.iter().zip(expected) {
            assert!((a - b).abs() < 1e-9, "{f:?}");
        }
        assert_eq!(t.signed_count, 20);
        assert_eq!(t.multiplicity_count, 20);
    }

    #[test]
    fn single_pair_has_one_line() {
        let mol = presets::proton_pair(100.0, 0.0, 7.0);
        let t = predict_resonances(&mol, &[Species::hydrogen()]);
        assert_eq!(t.frequencies(), vec![3.5]);
    }

    #[test]
    fn analytic_signal_special_values() {
        let mol = presets::fluoromethanol();
        let targeted = [Species::hydrogen(), Species::new("C13")];
        assert!((analytic_signal(&mol, &targeted, 0.0) - 1.0).abs() < 1e-15);
        let only_j = presets::fluoromethanol_with(8.0, 0.0, 0.0, 80.0, 4.0);
        let t = 0.25; // one full period of cos(Jt/2)
        assert!((analytic_signal(&only_j, &targeted, t) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equivalent_coupling_is_ignored() {
        let mol = presets::fluoromethanol();
        let targeted = [Species::hydrogen(), Species::new("C13")];
        let with = mol.with_coupling(0, 1, TWO_PI * 12.0).unwrap();
        for &t in &[0.01, 0.13, 0.77] {
            assert_eq!(
                analytic_signal(&mol, &targeted, t),
                analytic_signal(&with, &targeted, t)
            );
        }
    }

    #[test]
    fn quiet_band_picks_largest_gap() {
        let b = quiet_band(&[3.0, 5.0, 11.0, 61.0, 69.0], 115.0, 5.0).unwrap();
        assert_eq!(b, (16.0, 56.0));
        assert!(quiet_band(&[], 0.0, 1.0).is_none());
    }

    #[test]
    fn snr_of_clean_and_noisy_spectra() {
        let s = Spectrum {
            freqs: vec![-2.0, -1.0, 0.0, 1.0, 2.0, 3.0],
            magnitude: vec![0.1, 0.1, 1.0, 0.1, 0.1, 0.1],
            bin_width: 1.0,
        };
        let p = Peak {
            freq: 0.0,
            height: 1.0,
            fwhm: 1.0,
        };
        assert!(measure_snr(&s, &p, (1.0, 3.0)).unwrap().is_infinite());
        assert!(matches!(measure_snr(&s, &p, (10.0, 20.0)), Err(Error::EmptyNoiseBand)));
        let s2 = Spectrum {
            magnitude: vec![0.1, 0.1, 1.0, 0.1, 0.3, 0.1],
            ..s
        };
        let snr = measure_snr(&s2, &p, (1.0, 3.0)).unwrap();
        // Band values 0.1, 0.3, 0.1: sample std = sqrt(0.04/3).
        assert!((snr - 1.0 / (0.04f64 / 3.0).sqrt()).abs() < 1e-9, "{snr}");
    }

    #[test]
    fn estimate_recovers_couplings_from_clean_series() {
        let mol = presets::fluoromethanol();
        let targeted = [Species::hydrogen(), Species::new("C13")];
        let dt = presets::standard_tau();
        let x: Vec<f64> = (0..600)
            .map(|n| {
                let t = n as f64 * dt;
                analytic_signal(&mol, &targeted, t) * (-t / 0.6).exp()
            })
            .collect();
        let s = spectrum(&x, dt, 4).unwrap();
        let guess = presets::fluoromethanol_with(8.4, 129.5, 6.5, 80.0, 4.0);
        let est = estimate_couplings(&s, &guess, &targeted, 1.5).unwrap();
        for (a, b, truth) in [("Ha", "Hb", 8.0), ("Ha", "C", 130.0), ("Hb", "C", 6.0)] {
            let v = est.value(a, b).unwrap();
            assert!((v - truth).abs() < 0.2, "{a}-{b} = {v}");
        }
    }
}
