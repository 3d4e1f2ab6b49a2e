//! Thresholding functions, robust losses and score functions induced by the
//! mean-shift penalties.
//!
//! For a penalty `P` the thresholding function is
//! `Θ(z; λ) = argmin_γ (z − γ)² + λ P(γ)`, the score is `ψ(z; λ) = z − Θ(z; λ)`
//! and the induced loss is `H(z; λ) = 2 ∫₀^z ψ(u; λ) du`.
//!
//! | penalty | Θ                    | H                               |
//! |---------|----------------------|---------------------------------|
//! | ℓ1      | soft threshold at λ  | Huber loss with knot λ          |
//! | ℓ2      | `z / (1 + λ)`        | `λ z² / (1 + λ)`                |

use crate::data::{PenaltyKind, PenaltySpec};

/// `Θ(z; λ)`. For ℓ1, `|z| ≤ λ` maps to exactly zero.
pub fn theta(z: f64, penalty: PenaltySpec) -> f64 {
    let lambda = penalty.lambda();
    match penalty.kind() {
        PenaltyKind::L1 => {
            if z > lambda {
                z - lambda
            } else if z < -lambda {
                z + lambda
            } else {
                0.0
            }
        }
        PenaltyKind::L2 => z / (1.0 + lambda),
    }
}

/// Robust loss `H(z; λ)`.
pub fn huber_h(z: f64, penalty: PenaltySpec) -> f64 {
    let lambda = penalty.lambda();
    match penalty.kind() {
        PenaltyKind::L1 => {
            let a = z.abs();
            if a <= lambda {
                z * z
            } else {
                2.0 * lambda * a - lambda * lambda
            }
        }
        PenaltyKind::L2 => lambda * z * z / (1.0 + lambda),
    }
}

/// Score `ψ(z; λ) = z − Θ(z; λ)`; half the derivative of `H`.
pub fn psi(z: f64, penalty: PenaltySpec) -> f64 {
    let lambda = penalty.lambda();
    match penalty.kind() {
        PenaltyKind::L1 => z.clamp(-lambda, lambda),
        PenaltyKind::L2 => lambda * z / (1.0 + lambda),
    }
}

/// Penalty value `P(γ) = 2ν⁻¹|γ|^ν` (without λ).
pub fn penalty_value(gamma: f64, kind: PenaltyKind) -> f64 {
    match kind {
        PenaltyKind::L1 => 2.0 * gamma.abs(),
        PenaltyKind::L2 => gamma * gamma,
    }
}
