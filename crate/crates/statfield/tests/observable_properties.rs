mod common;

use common::{mixture, wide_grid};
use proptest::prelude::*;
use statfield::fields::{to_wavefunction, Field};
use statfield::momentum::{fourier_forward, hybrid_moments, kinetic_expectation, quantum_momentum_density};
use statfield::observables::{fisher_information, relative_entropy_shift};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fisher_scales_inversely_with_width_squared(m in mixture(), lambda in 0.7f64..1.4) {
        let g = wide_grid();
        let rho = Field::from_fn(g, |x| m.rho(x)).normalized_density().unwrap();
        let scaled = Field::from_fn(g, |x| m.rho(x / lambda) / lambda).normalized_density().unwrap();
        let i = fisher_information(&rho);
        let il = fisher_information(&scaled);
        prop_assert!((il * lambda * lambda / i - 1.0).abs() < 1e-8, "{} {}", il * lambda * lambda, i);
    }

    #[test]
    fn shifted_relative_entropy_is_never_positive(m in mixture(), shift in -0.5f64..0.5) {
        let g = wide_grid();
        let rho = Field::from_fn(g, |x| m.rho(x)).normalized_density().unwrap();
        let s = relative_entropy_shift(&rho, shift);
        prop_assert!(s.g <= 1e-12, "{}", s.g);
        prop_assert_eq!(relative_entropy_shift(&rho, 0.0).g, 0.0);
    }

    #[test]
    fn kinetic_energy_splits_into_phase_and_fisher_parts(m in mixture(), mass in 0.5f64..2.0) {
        let g = wide_grid();
        let psi = to_wavefunction(&m.state(g), 1.0);
        let k = kinetic_expectation(&psi, mass);
        prop_assert!(((k.phase_part + k.fisher_part) / k.total - 1.0).abs() < 1e-5);
    }

    #[test]
    fn hybrid_and_quantum_moments(m in mixture(), s in 0.5f64..1.5) {
        let g = wide_grid();
        let st = m.state(g);
        let w = quantum_momentum_density(&fourier_forward(&to_wavefunction(&st, s)));
        let h = hybrid_moments(&st, s);
        prop_assert!((w.moment(0) - h[0]).abs() < 1e-6);
        prop_assert!((w.moment(1) - h[1]).abs() < 1e-6);
        let gap = s * s / 4.0 * fisher_information(&st.rho);
        prop_assert!(((w.moment(2) - h[2]) / gap - 1.0).abs() < 1e-5);
    }
}
