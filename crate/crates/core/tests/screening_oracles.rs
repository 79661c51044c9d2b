//! B_Λ and B_Λ(k) against values computed independently.
//!
//! B_Λ: 50-digit mpmath quadrature of the z-integral (not the tanh form used
//! by the library). B_Λ(k): scipy dblquad of the six-dimensional momentum
//! integral reduced to cylindrical coordinates around k,
//! (π²|k|²)⁻¹ ∫_{|ℓ±k/2|≤Λ} (E₊+E₋)⁻¹ (1 − (1 + ℓ₊·ℓ₋)/(E₊E₋)) dℓ,
//! a different representation from the two one-dimensional integrals.

use bdf_vacuum::coulomb::{b_constant, b_constant_asymptotic, b_function, u_function};
use bdf_vacuum::quadrature::QuadratureSettings;

fn tight() -> QuadratureSettings {
    QuadratureSettings {
        abs_tol: 1e-14,
        rel_tol: 1e-12,
        max_intervals: 500,
    }
}

const B_LAMBDA: [(f64, f64); 4] = [
    (2.0, 0.141852730273618868601046104875),
    (10.0, 0.459933024470172508352073081101),
    (100.0, 0.947509649614643229663538448017),
    (1e4, 1.92474650585027983770099639346),
];

/// Λ²(B_Λ − asymptotic), same mpmath run.
const SCALED_ERROR: [(f64, f64); 4] = [
    (2.0, 0.098043022910979579707),
    (10.0, 0.10577174397811030269),
    (100.0, 0.106099979666637565),
    (1e4, 0.1061032950630240924),
];

const B_OF_K: [(f64, f64, f64); 6] = [
    (0.5, 2.0, 0.1280018113343694),
    (1.0, 2.0, 0.10512971418503497),
    (2.5, 2.0, 0.025094205661501716),
    (3.9, 2.0, 7.34717835904702e-05),
    (1.0, 10.0, 0.436685382573189),
    (7.0, 10.0, 0.18125570890510986),
];

#[test]
fn b_constant_matches_high_precision_values() {
    for (cutoff, expected) in B_LAMBDA {
        let b = b_constant(cutoff, &tight()).unwrap();
        assert!(
            (b - expected).abs() < 1e-13,
            "cutoff {cutoff}: {b} vs {expected}"
        );
    }
}

#[test]
fn asymptotic_error_scales_as_inverse_square() {
    // Cancellation leaves ~1e-16/Λ⁻² relative accuracy, so 1e4 is compared loosely.
    for (cutoff, expected) in SCALED_ERROR {
        let err = (b_constant(cutoff, &tight()).unwrap() - b_constant_asymptotic(cutoff))
            * cutoff
            * cutoff;
        let tol = if cutoff > 1e3 { 1e-4 } else { 1e-9 };
        assert!(
            (err - expected).abs() < tol,
            "cutoff {cutoff}: {err} vs {expected}"
        );
    }
    // Limit 1/(3π).
    assert!((SCALED_ERROR[3].1 - 1.0 / (3.0 * std::f64::consts::PI)).abs() < 1e-8);
}

#[test]
fn b_function_matches_momentum_integral() {
    for (k, cutoff, expected) in B_OF_K {
        let b = b_function(k, cutoff, &tight()).unwrap();
        assert!(
            (b - expected).abs() < 1e-10 * expected.max(1e-3),
            "k {k}, cutoff {cutoff}: {b} vs {expected}"
        );
    }
}

#[test]
fn b_function_continuous_at_zero_and_edge() {
    for cutoff in [2.0, 10.0, 100.0] {
        let b0 = b_constant(cutoff, &tight()).unwrap();
        let near = b_function(1e-7, cutoff, &tight()).unwrap();
        assert!((near - b0).abs() < 1e-6, "cutoff {cutoff}");
        let edge = b_function(2.0 * cutoff * (1.0 - 1e-9), cutoff, &tight()).unwrap();
        assert!(edge.abs() < 1e-6, "cutoff {cutoff}: {edge}");
        assert_eq!(
            b_function(2.0 * cutoff + 1.0, cutoff, &tight()).unwrap(),
            0.0
        );
        assert_eq!(u_function(0.0, cutoff, &tight()).unwrap(), 0.0);
    }
}
