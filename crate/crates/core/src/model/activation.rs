//! Scalar nonlinearities used by the network and the tape.

/// SELU scale λ at the printed four-decimal precision.
pub const SELU_LAMBDA: f64 = 1.0507;
/// SELU negative-branch coefficient α at the printed four-decimal precision.
pub const SELU_ALPHA: f64 = 1.6733;
/// Negative saturation value −λα that alpha dropout assigns to dropped units.
pub const SELU_SATURATION: f64 = -SELU_LAMBDA * SELU_ALPHA;

pub fn selu(s: f64) -> f64 {
    if s > 0.0 {
        SELU_LAMBDA * s
    } else {
        SELU_LAMBDA * (SELU_ALPHA * s.exp() - SELU_ALPHA)
    }
}

pub fn selu_derivative(s: f64) -> f64 {
    if s > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * s.exp()
    }
}

/// `ln(1 + eˢ)`, evaluated stably and floored at the smallest positive
/// normal so the result is strictly positive even where `eˢ` underflows.
pub fn softplus(s: f64) -> f64 {
    (s.max(0.0) + (-s.abs()).exp().ln_1p()).max(f64::MIN_POSITIVE)
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selu_point_values() {
        assert_eq!(selu(0.0), 0.0);
        assert!((selu(1.0) - 1.0507).abs() < 1e-12);
        assert!((selu(-20.0) - (-1.0507 * 1.6733)).abs() < 1e-8);
        assert!((selu(-20.0) + 1.7581).abs() < 1e-3);
    }

    #[test]
    fn selu_derivative_matches_difference_quotient() {
        let h = 1e-6;
        for &s in &[-3.0, -0.5, -1e-3, 0.7, 2.0] {
            let fd = (selu(s + h) - selu(s - h)) / (2.0 * h);
            assert!((fd - selu_derivative(s)).abs() < 1e-7, "s={s}");
        }
    }

    #[test]
    fn softplus_is_positive_and_stable() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(50.0) - 50.0).abs() < 1e-12);
        for s in [-1e6, -800.0, -40.0, 0.0, 40.0, 1e6] {
            assert!(softplus(s) > 0.0 && softplus(s).is_finite());
        }
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
