//! Relaxed logarithmic barrier for inequality constraints h(x, u) >= 0.
//!
//! The pure log barrier -mu ln h is extended below the relaxation margin
//! delta by a quadratic so the function is total on the reals and C^2 at the
//! seam.

/// Barrier parameters: weight mu and relaxation margin delta, both positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarrierParams {
    pub mu: f64,
    pub delta: f64,
}

impl BarrierParams {
    pub fn new(mu: f64, delta: f64) -> Self {
        assert!(mu > 0.0 && delta > 0.0, "barrier parameters must be positive");
        Self { mu, delta }
    }

    /// b(h): -mu ln h for h >= delta, quadratic extension below.
    pub fn value(&self, h: f64) -> f64 {
        let BarrierParams { mu, delta } = *self;
        if h >= delta {
            -mu * h.ln()
        } else {
            let z = (h - 2.0 * delta) / delta;
            mu * (-delta.ln() + 0.5 * (z * z - 1.0))
        }
    }

    /// db/dh.
    pub fn derivative(&self, h: f64) -> f64 {
        let BarrierParams { mu, delta } = *self;
        if h >= delta {
            -mu / h
        } else {
            mu * (h - 2.0 * delta) / (delta * delta)
        }
    }

    /// d^2b/dh^2.
    pub fn second_derivative(&self, h: f64) -> f64 {
        let BarrierParams { mu, delta } = *self;
        if h >= delta {
            mu / (h * h)
        } else {
            mu / (delta * delta)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const P: BarrierParams = BarrierParams { mu: 0.1, delta: 0.01 };

    #[test]
    fn log_of_one_is_zero() {
        assert_eq!(P.value(1.0), 0.0);
    }

    #[test]
    fn continuous_at_seam() {
        let upper = -P.mu * P.delta.ln();
        let z: f64 = (P.delta - 2.0 * P.delta) / P.delta;
        let lower = P.mu * (-P.delta.ln() + 0.5 * (z * z - 1.0));
        assert_relative_eq!(upper, lower, epsilon = 1e-15);
        assert_relative_eq!(P.value(P.delta), upper, epsilon = 1e-15);
    }

    #[test]
    fn derivative_matches_at_seam() {
        // analytic differentiation of both branches gives -mu/delta at h = delta
        let upper = -P.mu / P.delta;
        let lower = P.mu * (P.delta - 2.0 * P.delta) / (P.delta * P.delta);
        assert_relative_eq!(upper, lower, epsilon = 1e-15);
        assert_relative_eq!(P.derivative(P.delta), -P.mu / P.delta, epsilon = 1e-15);
        // one-sided finite differences approach the same slope from both sides
        let h = 1e-7;
        let from_above = (P.value(P.delta + h) - P.value(P.delta)) / h;
        let from_below = (P.value(P.delta) - P.value(P.delta - h)) / h;
        assert_relative_eq!(from_above, -P.mu / P.delta, max_relative = 1e-4);
        assert_relative_eq!(from_below, -P.mu / P.delta, max_relative = 1e-4);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h0 = 1e-6;
        for h in [-0.02, 0.001, 0.009, 0.011, 0.5, 3.0] {
            let fd = (P.value(h + h0) - P.value(h - h0)) / (2.0 * h0);
            assert_relative_eq!(P.derivative(h), fd, max_relative = 1e-6, epsilon = 1e-9);
            let fd2 = (P.derivative(h + h0) - P.derivative(h - h0)) / (2.0 * h0);
            assert_relative_eq!(P.second_derivative(h), fd2, max_relative = 1e-5, epsilon = 1e-9);
        }
    }

    #[test]
    fn total_on_reals() {
        for h in [-1e6, -1.0, 0.0, 1e-9, 1e6] {
            assert!(P.value(h).is_finite());
            assert!(P.derivative(h).is_finite());
        }
    }
}
