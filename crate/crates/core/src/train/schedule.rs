use alloc::format;

use crate::error::{Error, Result};

/// Inverse-square-root schedule with linear warmup:
/// `lr = factor * d^-0.5 * min(step^-0.5, step / warmup^1.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub factor: f64,
    pub d: usize,
    pub warmup: u64,
}

impl LrSchedule {
    pub fn new(factor: f64, d: usize, warmup: u64) -> Result<Self> {
        if !(factor.is_finite() && factor >= 0.0) || d == 0 || warmup == 0 {
            return Err(Error::Config(format!(
                "invalid schedule: factor {factor}, d {d}, warmup {warmup}"
            )));
        }
        Ok(LrSchedule { factor, d, warmup })
    }

    pub fn rate(&self, step: u64) -> Result<f64> {
        if step == 0 {
            return Err(Error::InvalidArgument("learning-rate steps start at 1".into()));
        }
        let s = step as f64;
        let decay = 1.0 / libm::sqrt(s);
        let ramp = s / libm::pow(self.warmup as f64, 1.5);
        Ok(self.factor / libm::sqrt(self.d as f64) * decay.min(ramp))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let s = LrSchedule::new(0.5, 128, 4000).unwrap();
        let peak = s.rate(4000).unwrap();
        assert!((peak - 6.988e-4).abs() < 1e-6, "{peak}");
        let later = s.rate(16000).unwrap();
        assert!((later - 3.494e-4).abs() < 1e-6, "{later}");
        assert!((later * 2.0 - peak).abs() < 1e-15);
    }

    #[test]
    fn step_zero_is_rejected() {
        assert!(LrSchedule::new(0.1, 64, 10).unwrap().rate(0).is_err());
        assert!(LrSchedule::new(0.1, 64, 0).is_err());
    }

    #[test]
    fn rises_then_falls() {
        let s = LrSchedule::new(0.3, 64, 50).unwrap();
        for step in 1..50 {
            assert!(s.rate(step + 1).unwrap() > s.rate(step).unwrap());
        }
        for step in 50..400 {
            assert!(s.rate(step + 1).unwrap() < s.rate(step).unwrap());
        }
    }
}
