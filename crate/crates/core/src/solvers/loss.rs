/// Pointwise loss `ℓ(y, t)` of a prediction `t` against a label `y`, with its
/// first and second derivatives in `t`.
pub trait LossModel: Sync {
    fn value(&self, y: f64, t: f64) -> f64;
    fn d1(&self, y: f64, t: f64) -> f64;
    fn d2(&self, y: f64, t: f64) -> f64;

    /// True when `d2` is constant, so one Newton step is exact.
    fn is_quadratic(&self) -> bool {
        false
    }
}

/// `½ (y − t)²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredLoss;

impl LossModel for SquaredLoss {
    #[inline]
    fn value(&self, y: f64, t: f64) -> f64 {
        0.5 * (y - t) * (y - t)
    }

    #[inline]
    fn d1(&self, y: f64, t: f64) -> f64 {
        t - y
    }

    #[inline]
    fn d2(&self, _y: f64, _t: f64) -> f64 {
        1.0
    }

    fn is_quadratic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_finite_differences() {
        let loss = SquaredLoss;
        let h = 1e-5;
        for &(y, t) in &[(1.0, 0.3), (-1.0, 2.5), (1.0, -4.0)] {
            let fd1 = (loss.value(y, t + h) - loss.value(y, t - h)) / (2.0 * h);
            let fd2 = (loss.d1(y, t + h) - loss.d1(y, t - h)) / (2.0 * h);
            assert!((fd1 - loss.d1(y, t)).abs() <= 1e-5 * (1.0 + fd1.abs()));
            assert!((fd2 - loss.d2(y, t)).abs() <= 1e-5 * (1.0 + fd2.abs()));
            assert!(loss.d2(y, t) >= 0.0);
        }
    }
}
