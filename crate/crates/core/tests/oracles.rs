//! Closed-form signal against brute-force evolution, and the ideal-pulse
//! schedule against the closed form.

mod common;

use jcoupling_core::analysis::analytic_signal;
use jcoupling_core::linalg::{self, c, CMatrix};
use jcoupling_core::molecule::HamiltonianModel;
use jcoupling_core::spin::{site_operator, Axis};
use jcoupling_core::{pipeline, presets, Molecule, PipelineConfig, ProtocolConfig, PulseMode, Species};
use proptest::prelude::*;

fn op(n: usize, s: usize, a: Axis) -> CMatrix {
    site_operator(n, s, a).unwrap().into_entries()
}

/// Encoding Hamiltonian assembled pair by pair: ZZ between non-equivalent
/// protons and between protons and targeted heteronuclei, plus the full
/// isotropic coupling inside equivalence groups.
fn brute_hamiltonian(mol: &Molecule, targeted: &[Species]) -> CMatrix {
    let n = mol.n_sites();
    let mut h = CMatrix::zeros(mol.dim(), mol.dim());
    for a in 0..n {
        for b in (a + 1)..n {
            let j = mol.coupling(a, b);
            let (sa, sb) = (&mol.nuclei()[a].species, &mol.nuclei()[b].species);
            let axes: &[Axis] = if mol.equivalent(a, b) {
                &[Axis::X, Axis::Y, Axis::Z]
            } else if (sa.is_hydrogen() && (sb.is_hydrogen() || targeted.contains(sb)))
                || (sb.is_hydrogen() && targeted.contains(sa))
            {
                &[Axis::Z]
            } else {
                &[]
            };
            for &ax in axes {
                h += op(n, a, ax) * op(n, b, ax) * c(j);
            }
        }
    }
    h
}

fn brute_signal(mol: &Molecule, targeted: &[Species], t: f64) -> f64 {
    let n = mol.n_sites();
    let mut x = CMatrix::zeros(mol.dim(), mol.dim());
    for s in mol.hydrogen_sites() {
        x += op(n, s, Axis::X);
    }
    let u = linalg::expm_hermitian(&brute_hamiltonian(mol, targeted), t);
    let xt = linalg::conjugate(&u, &x);
    linalg::trace_product(&xt, &x).unwrap().re / linalg::trace_product(&x, &x).unwrap().re
}

fn present(mol: &Molecule, targeted: Vec<Species>) -> Vec<Species> {
    targeted.into_iter().filter(|s| mol.has_species(s)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_signal_equals_brute_force(d in common::draw(5), t in 0.0f64..2.0) {
        let mol = d.molecule();
        let targeted = d.targeted();
        for time in [t, 0.013, 0.37] {
            let a = analytic_signal(&mol, &targeted, time);
            let b = brute_signal(&mol, &targeted, time);
            prop_assert!((a - b).abs() < 1e-9, "t={time}: {a} vs {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// With ZZ-only couplings and instantaneous pulses the echo is exact, so
    /// the sampled signal is the closed form at the accumulated encoding time.
    #[test]
    fn ideal_zz_schedule_equals_closed_form(d in common::draw(4), tau in 1e-3f64..5e-3) {
        let mut mol = d.molecule();
        if mol.equivalent(0, 1) {
            // ZZ between equivalent spins is not the isotropic coupling the closed form ignores.
            mol = mol.with_coupling(0, 1, 0.0).unwrap();
        }
        let targeted = present(&mol, d.targeted());
        let protocol = ProtocolConfig { tau, n_stages: 30, targeted_species: targeted.clone(), ..presets::case1() };
        let mut cfg = PipelineConfig::quiet(protocol);
        cfg.engine.pulse_mode = PulseMode::Ideal;
        cfg.engine.model = HamiltonianModel::zz_all();
        let (_, trace) = pipeline::simulate_trace(&mol, &cfg).unwrap();
        for (k, s) in trace.samples.iter().enumerate() {
            let expected = analytic_signal(&mol, &targeted, (k + 1) as f64 * tau);
            prop_assert!((s.m[0] - expected).abs() < 1e-9, "stage {k}: {} vs {expected}", s.m[0]);
        }
    }
}

fn ideal_pair_trace(d1: f64, d2: f64, j: f64, tau: f64, n_stages: usize) -> Vec<f64> {
    let mol = presets::proton_pair(d1, d2, j);
    let protocol = ProtocolConfig {
        tau,
        n_stages,
        targeted_species: vec![Species::hydrogen()],
        ..presets::case1()
    };
    let mut cfg = PipelineConfig::quiet(protocol);
    cfg.engine.pulse_mode = PulseMode::Ideal;
    pipeline::simulate_trace(&mol, &cfg).unwrap().1.mx()
}

/// Full isotropic coupling at the standard encoding time, against an
/// independent 4×4 echo computation (frozen values).
#[test]
fn strongly_coupled_pair_matches_independent_echo() {
    let m = ideal_pair_trace(512.0, 236.0, 8.0, presets::standard_tau(), 600);
    let frozen = [
        (1, 0.9906656443325021),
        (10, 0.30277728675508175),
        (100, 0.9963520229385777),
        (600, 0.9182061091346965),
    ];
    for (n, v) in frozen {
        assert!((m[n - 1] - v).abs() < 1e-9, "stage {n}: {} vs {v}", m[n - 1]);
    }
    // The closed form predicts cos(πJt); the flip-flop term survives the echo.
    let t600 = 600.0 * presets::standard_tau();
    assert!((m[599] - (std::f64::consts::PI * 8.0 * t600).cos()).abs() > 0.5);
}

/// When each half-stage spans whole cycles of the shift difference, the
/// flip-flop term averages out and the residual is second order in J/Δδ.
#[test]
fn commensurate_echo_suppresses_strong_coupling() {
    let (delta, j) = (5000.0, 8.0);
    let tau = 2.0 / delta;
    let m = ideal_pair_trace(delta, 0.0, j, tau, 600);
    let err = m
        .iter()
        .enumerate()
        .map(|(k, v)| (v - (std::f64::consts::PI * j * (k + 1) as f64 * tau).cos()).abs())
        .fold(0.0, f64::max);
    assert!(err < 5.0 * (j / delta).powi(2), "{err}");
    assert!((err - 6.1624876765697945e-06).abs() < 1e-8, "{err}");
}
