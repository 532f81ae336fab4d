//! Reference maps used by tests, the acceptance suite and the default configs.

use std::f64::consts::{PI, TAU};

use super::{IntMatrix2, NearIdentity, ToralEndomorphism, Trig1, TrigPolynomial2, TrigTerm};

/// `L = [[3, 1], [2, 0]]`: eigenvalues `(3 ± √17)/2`, determinant `−2`.
pub fn reference_matrix() -> IntMatrix2 {
    IntMatrix2::new([[3, 1], [2, 0]]).expect("nonsingular")
}

pub fn linear() -> ToralEndomorphism {
    ToralEndomorphism::linear_map(reference_matrix())
}

/// `p = (ε/2π)(sin 2πx₂, sin 2πx₁)`, so `‖Dp‖ ≤ ε`.
pub fn raw_family(eps: f64) -> ToralEndomorphism {
    let a = eps / TAU;
    ToralEndomorphism::raw(
        reference_matrix(),
        TrigPolynomial2::new(vec![
            TrigTerm { k: [0, 1], amp: [a, 0.0], phase: 0.0 },
            TrigTerm { k: [1, 0], amp: [0.0, a], phase: 0.0 },
        ]),
    )
}

/// `F = L∘S₁∘S₂` with `s(y) = t(y) = (ε/2π) sin 2πy`; `Jf ≡ 2`.
pub fn shear_family(eps: f64) -> ToralEndomorphism {
    let a = eps / TAU;
    ToralEndomorphism::shear_composition(reference_matrix(), Trig1::sine(1, a), Trig1::sine(1, a))
}

/// `F = h⁻¹∘L∘h`, `h = Id + a(sin 2πx₂, sin 2πx₁)`; `‖Dh − I‖ ≤ 2πa`.
pub fn smooth_conjugate_family(amp: f64) -> ToralEndomorphism {
    let h = NearIdentity::Trig(TrigPolynomial2::new(vec![
        TrigTerm { k: [0, 1], amp: [amp, 0.0], phase: 0.0 },
        TrigTerm { k: [1, 0], amp: [0.0, amp], phase: 0.0 },
    ]));
    ToralEndomorphism::smooth_conjugate(reference_matrix(), h).expect("small conjugacy")
}

/// Smooth conjugate by area-preserving shears, so `Jf ≡ 2`.
pub fn area_preserving_conjugate_family(amp: f64) -> ToralEndomorphism {
    let h = NearIdentity::Shears {
        s: Trig1::sine(1, amp),
        t: Trig1::sine(1, amp),
    };
    ToralEndomorphism::smooth_conjugate(reference_matrix(), h).expect("small conjugacy")
}

/// `p = (0, −(1/π) sin 2πx₁)`: `det Df(0) = 0`.
pub fn degenerate_example() -> ToralEndomorphism {
    ToralEndomorphism::raw(
        reference_matrix(),
        TrigPolynomial2::new(vec![TrigTerm { k: [1, 0], amp: [0.0, -1.0 / PI], phase: 0.0 }]),
    )
}

/// Shear example at `ε = 0.05`.
pub fn shear_example() -> ToralEndomorphism {
    shear_family(0.05)
}

/// Smooth-conjugate example with `‖Dh − I‖ ≤ 0.0754`.
pub fn smooth_conjugate_example() -> ToralEndomorphism {
    smooth_conjugate_family(0.012)
}

/// Constant-Jacobian smooth-conjugate example.
pub fn area_preserving_conjugate_example() -> ToralEndomorphism {
    area_preserving_conjugate_family(0.01)
}
