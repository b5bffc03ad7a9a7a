//! The transfer function η and its companions.
//!
//! η(τ) = (1 − log τ)⁻¹ maps [0,1] onto [0,1] with all derivatives vanishing
//! at 0; it converts tropical ratios into rounded-simplex coordinates. Its
//! inverse is η⁻¹(σ) = e^{1−1/σ}, and ζ = (η⁻¹)′ appears as the weight in the
//! angular pairing identity.

/// η(x) = (1 − ln x)⁻¹ for x ∈ (0,1], η(0) = 0 by continuity.
pub fn eta(x: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x), "eta domain is [0,1], got {x}");
    if x == 0.0 {
        0.0
    } else {
        1.0 / (1.0 - x.ln())
    }
}

/// η⁻¹(y) = e^{1−1/y} for y ∈ (0,1], η⁻¹(0) = 0.
pub fn eta_inv(y: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&y), "eta_inv domain is [0,1], got {y}");
    if y == 0.0 {
        0.0
    } else {
        (1.0 - 1.0 / y).exp()
    }
}

/// ζ(x) = (η⁻¹)′(x) = x⁻² e^{1−1/x} for x ∈ (0,1], ζ(0) = 0.
pub fn zeta(x: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x), "zeta domain is [0,1], got {x}");
    if x == 0.0 {
        0.0
    } else {
        (1.0 - 1.0 / x).exp() / (x * x)
    }
}

/// η′(x) = 1/(x·(1 − ln x)²) = η(x)²/x for x ∈ (0,1]; +∞ as x → 0⁺.
pub fn eta_prime(x: f64) -> f64 {
    debug_assert!(x > 0.0 && x <= 1.0, "eta_prime domain is (0,1], got {x}");
    let e = eta(x);
    e * e / x
}
